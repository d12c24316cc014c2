//! On-disk recording format.
//!
//! A recording file starts with a single-line JSON header followed by the
//! sample body. The body is either CSV (one decimal sample per line) or raw
//! little-endian `f64`:
//!
//! ```text
//! {"dt":4.1666e-5,"count":3,"ground_truth":[[1,2]],"encoding":"csv"}
//! 0.01
//! -0.2
//! 0.03
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GroundTruth, Recording, SpikeClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Csv,
    F64le,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dt: f64,
    count: usize,
    ground_truth: Vec<(usize, u8)>,
    #[serde(default)]
    encoding: Encoding,
}

pub fn save_recording(rec: &Recording, path: &Path, encoding: Encoding) -> Result<()> {
    rec.validate()?;
    let header = Header {
        dt: rec.dt,
        count: rec.samples.len(),
        ground_truth: rec.ground_truth.iter().map(|g| (g.index, g.class.id())).collect(),
        encoding,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    match encoding {
        Encoding::Csv => {
            for v in &rec.samples {
                writeln!(out, "{v}")?;
            }
        }
        Encoding::F64le => {
            for v in &rec.samples {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Parse(format!("bad header: {e}")))?;
    let samples = match header.encoding {
        Encoding::Csv => {
            let mut samples = Vec::with_capacity(header.count);
            for (i, l) in reader.lines().enumerate() {
                let l = l?;
                let t = l.trim();
                if t.is_empty() {
                    continue;
                }
                samples.push(
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?,
                );
            }
            samples
        }
        Encoding::F64le => {
            let mut buf = Vec::new();
            reader.read_to_end(&mut buf)?;
            if buf.len() % 8 != 0 {
                return Err(Error::Parse(format!(
                    "binary body of {} bytes is not a whole number of samples",
                    buf.len()
                )));
            }
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
    };
    if samples.len() != header.count {
        return Err(Error::Parse(format!(
            "header declares {} samples, body has {}",
            header.count,
            samples.len()
        )));
    }
    let ground_truth = header
        .ground_truth
        .into_iter()
        .map(|(index, c)| Ok(GroundTruth { index, class: SpikeClass::try_from(c)? }))
        .collect::<Result<Vec<_>>>()?;
    Recording::new(samples, header.dt, ground_truth)
}

/// Builds a recording from a plain single-column sample file and a timestamp
/// file whose lines hold `index class` (comma, tab or space separated).
pub fn import_plain(samples_path: &Path, timestamps_path: &Path, dt: f64) -> Result<Recording> {
    let text = fs::read_to_string(samples_path)?;
    let mut samples = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        samples.push(
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", samples_path.display(), i + 1)))?,
        );
    }
    let text = fs::read_to_string(timestamps_path)?;
    let mut ground_truth = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let bad = || Error::Parse(format!("{}:{}: expected `index class`", timestamps_path.display(), i + 1));
        if fields.len() != 2 {
            return Err(bad());
        }
        let index: usize = fields[0].parse().map_err(|_| bad())?;
        let class: u8 = fields[1].parse().map_err(|_| bad())?;
        ground_truth.push(GroundTruth {
            index,
            class: SpikeClass::try_from(class)?,
        });
    }
    ground_truth.sort_by_key(|g| g.index);
    Recording::new(samples, dt, ground_truth)
}
