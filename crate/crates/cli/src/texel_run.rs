//! Texel-array template matching experiment.

use memspike_core::reference::{TEMPLATE_V_PK, TEXEL_ROWS};
use memspike_core::signal::{average_prototype, extract_instances, SpikeClass, SpikeInstance, POST_SAMPLES, PRE_SAMPLES};
use memspike_core::texel::{
    fit_bump, merge_duplicates, trigger_sample, BumpFit, SampleSet, TexelArray, TexelParams, TriggerSampler,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, TexelConfig, TexelInputs};
use crate::sorting::recording;
use crate::RunError;

#[derive(Debug, Clone, Serialize)]
pub struct TexelRowResult {
    pub label: String,
    pub classes: Vec<u8>,
    pub v_ideal: Vec<f64>,
    pub v_rounded: Vec<f64>,
    pub v_out: f64,
    /// Measured outputs of the two hardware runs, reference inputs only.
    pub measured: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TexelRun {
    pub template: Vec<f64>,
    pub params: TexelParams,
    pub fit: Option<BumpFit>,
    pub rows: Vec<TexelRowResult>,
    /// Instances the trigger sampler turned away, per class.
    pub rejected: Vec<(u8, usize)>,
    /// Classes left with fewer than three variants.
    pub short_classes: Vec<u8>,
}

/// The nine measured sample sets, as applied to the hardware, with their
/// first/second-run outputs.
pub fn reference_sets() -> Vec<(SampleSet, Option<[f64; 2]>)> {
    let sets: Vec<SampleSet> = TEXEL_ROWS
        .iter()
        .map(|r| {
            // the hardware was driven with the tabulated rounded values
            let mut s = SampleSet::new(r.class, r.variant, Vec::new(), r.ideal.to_vec());
            s.v_rounded = r.rounded.to_vec();
            s
        })
        .collect();
    merge_duplicates(sets)
        .into_iter()
        .map(|s| {
            let measured = TEXEL_ROWS
                .iter()
                .filter(|r| s.labels.contains(&(r.class, r.variant)))
                .find_map(|r| r.outputs);
            (s, measured)
        })
        .collect()
}

/// Trigger-sampled L/M/H sets per class from spike instances.
pub fn synthetic_sets(
    instances: &[SpikeInstance],
    t: &TexelConfig,
) -> Result<(Vec<SampleSet>, Vec<(u8, usize)>, Vec<u8>), RunError> {
    let mut sets = Vec::new();
    let mut rejected = Vec::new();
    let mut short = Vec::new();
    for class in SpikeClass::ALL {
        let own: Vec<SpikeInstance> = instances.iter().filter(|i| i.class == class).cloned().collect();
        if own.is_empty() {
            short.push(class.id());
            continue;
        }
        let avg = t.conditioner.condition_slice(&average_prototype(&own)?.samples);
        let peak = avg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sampler = TriggerSampler::half_peak(t.conditioner.offset, peak);
        let mut windows = Vec::new();
        let mut dropped = 0;
        for inst in &own {
            match trigger_sample(&t.conditioner.condition_slice(&inst.samples), &sampler) {
                Ok(w) => windows.push(w),
                Err(_) => dropped += 1,
            }
        }
        rejected.push((class.id(), dropped));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        windows.sort_by(|a, b| mean(&a.values).total_cmp(&mean(&b.values)));
        let mut taken = Vec::new();
        for (q, variant) in t.variant_quantiles.iter().zip(TexelConfig::variants()) {
            if windows.is_empty() {
                break;
            }
            let k = (q * (windows.len() - 1) as f64).round() as usize;
            if taken.contains(&k) {
                continue;
            }
            taken.push(k);
            let w = &windows[k];
            sets.push(SampleSet::new(class, variant, w.indices.clone(), w.values.clone()));
        }
        if taken.len() < 3 {
            short.push(class.id());
        }
    }
    Ok((merge_duplicates(sets), rejected, short))
}

pub fn run_texel(cfg: &ExperimentConfig, seed: u64) -> Result<TexelRun, RunError> {
    let t = &cfg.texel;
    let (sets, measured, rejected, short_classes) = match t.inputs {
        TexelInputs::Reference => {
            let (sets, measured): (Vec<_>, Vec<_>) = reference_sets().into_iter().unzip();
            (sets, measured, Vec::new(), Vec::new())
        }
        TexelInputs::Synthetic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = recording(cfg, &mut rng)?;
            let instances = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES)?;
            let (sets, rejected, short) = synthetic_sets(&instances, t)?;
            let measured = vec![None; sets.len()];
            (sets, measured, rejected, short)
        }
    };
    if sets.is_empty() {
        return Err(RunError::Simulation(memspike_core::Error::InvalidInput(
            "no sample sets survived trigger sampling".into(),
        )));
    }

    let template = match &t.template {
        Some(v) => v.clone(),
        None => sets
            .iter()
            .find(|s| s.labels.contains(&(t.template_class, memspike_core::texel::Variant::M)))
            .map(|s| s.v_ideal.clone())
            .unwrap_or_else(|| TEMPLATE_V_PK.to_vec()),
    };

    let mut params = t.params;
    let mut fit = None;
    if t.fit {
        let pairs: Vec<(Vec<f64>, f64)> = sets
            .iter()
            .zip(&measured)
            .filter_map(|(s, m)| m.map(|m| (s.v_rounded.clone(), m[0])))
            .collect();
        if pairs.is_empty() {
            return Err(RunError::Config("texel.fit needs measured outputs (reference inputs)".into()));
        }
        let (xs, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let f = fit_bump(&xs, &ys, &template, t.r_load, params.v_supply)?;
        params.bump = f.bump;
        fit = Some(f);
    }

    let mut array = TexelArray::new(
        vec![memspike_core::texel::Texel::new(params.calibration.r_min); template.len()],
        t.r_load,
    )?;
    array.program(&template, &params)?;
    let rows = sets
        .iter()
        .zip(measured)
        .map(|(s, m)| {
            Ok(TexelRowResult {
                label: s.label(),
                classes: s.labels.iter().map(|(c, _)| c.id()).collect(),
                v_ideal: s.v_ideal.clone(),
                v_rounded: s.v_rounded.clone(),
                v_out: array.output(&s.v_rounded, &params)?,
                measured: m,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(TexelRun {
        template,
        params,
        fit,
        rows,
        rejected,
        short_classes,
    })
}
