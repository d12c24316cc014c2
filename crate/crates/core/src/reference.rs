//! Measured values from the hardware experiments, used as fixtures, oracles
//! and calibration targets.

use crate::signal::SpikeClass;
use crate::texel::Variant;

/// Raw resistive-state reads (Ω) for the first repeatability triplet, one row
/// per 100-sample batch: background/reset, spike III, spike II, spike I.
/// Each row holds the batch-start read, ten bin reads and the paused noise read.
pub const TRIPLET_READS: [[f64; 12]; 4] = [
    [
        11757.99316, 11828.51953, 11790.73242, 11699.33887, 11790.91992, 11790.03516,
        11783.03027, 11697.71387, 11755.08691, 11766.31055, 11739.83008, 11784.81836,
    ],
    [
        11782.02, 11763.65, 11757.92, 11760.06, 11706.08, 11894.95, 11899.9, 11924.52, 11834.5,
        11841.8, 11889.99, 11855.77,
    ],
    [
        11898.06, 11886.4, 11809.14, 11983.17, 11855.17, 12191.47, 12244.21, 12283.07, 12238.37,
        12179.92, 12279.27, 12202.14,
    ],
    [
        12311.09, 12232.41, 12235.02, 12241.67, 12267.59, 12653.33, 12843.73, 12776.11, 12796.08,
        12816.69, 12813.46, 12834.55,
    ],
];

/// What drove each batch of [`TRIPLET_READS`].
pub const TRIPLET_BATCH_CLASSES: [Option<SpikeClass>; 4] = [
    None,
    Some(SpikeClass::Three),
    Some(SpikeClass::Two),
    Some(SpikeClass::One),
];

/// Fractional changes (×1e-2) of reads 10, 11, 12 against read 2, per batch.
pub const TRIPLET_SETTLED_PERCENT: [[f64; 3]; 4] = [
    [-0.52592367, -0.749793351, -0.369455974],
    [0.664288, 1.073951, 0.783066],
    [2.469372, 3.305206, 2.656249],
    [4.776493, 4.7501, 4.922454],
];

/// Per-batch means of [`TRIPLET_SETTLED_PERCENT`] (×1e-2).
pub const TRIPLET_SETTLED_MEAN_PERCENT: [f64; 4] = [-0.548390998, 0.840435, 2.810276, 4.816349];

/// Fractional changes (×1e-2) of reads 10, 11, 12 against read 1, per batch.
pub const TRIPLET_FROM_START_PERCENT: [[f64; 3]; 4] = [
    [0.070738, -0.15447, 0.228144],
    [0.507369, 0.916394, 0.625962],
    [2.368994, 3.204009, 2.55687],
    [4.106838, 4.080613, 4.251865],
];

pub const TRIPLET_FROM_START_MEAN_PERCENT: [f64; 4] = [0.048136, 0.683242, 2.709563, 4.146439];

/// Class-I calibration target: 4.776493e-2 starting from 12232.41 Ω.
pub const CLASS_ONE_TARGET_FRAC: f64 = 4.776493e-2;
pub const CLASS_ONE_TARGET_R: f64 = 12232.41;

/// One texel-array input vector with its measured outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelRow {
    pub class: SpikeClass,
    pub variant: Variant,
    pub ideal: [f64; 4],
    pub rounded: [f64; 4],
    /// Output voltage of the first and second run; absent where the row shares
    /// its rounded vector with another row and was measured only once.
    pub outputs: Option<[f64; 2]>,
}

const fn row(
    class: SpikeClass,
    variant: Variant,
    ideal: [f64; 4],
    rounded: [f64; 4],
    outputs: Option<[f64; 2]>,
) -> TexelRow {
    TexelRow {
        class,
        variant,
        ideal,
        rounded,
        outputs,
    }
}

/// Texel-array sample sets for an array programmed to class 2.
pub const TEXEL_ROWS: [TexelRow; 9] = [
    row(SpikeClass::Three, Variant::H, [0.7757, 0.7657, 0.7546, 0.7443], [0.78, 0.77, 0.76, 0.74], Some([0.03, 0.06])),
    row(SpikeClass::Three, Variant::M, [0.7592, 0.7510, 0.7427, 0.7350], [0.76, 0.75, 0.74, 0.74], Some([0.08, 0.16])),
    row(SpikeClass::Three, Variant::L, [0.7450, 0.7397, 0.7329, 0.7266], [0.75, 0.74, 0.73, 0.73], Some([0.25, 0.39])),
    row(SpikeClass::Two, Variant::H, [0.7400, 0.7270, 0.7163, 0.7071], [0.74, 0.73, 0.72, 0.71], Some([1.00, 1.19])),
    row(SpikeClass::Two, Variant::M, [0.7347, 0.7231, 0.7149, 0.7094], [0.73, 0.72, 0.71, 0.71], Some([0.99, 1.23])),
    row(SpikeClass::Two, Variant::L, [0.7164, 0.7058, 0.6983, 0.6923], [0.72, 0.71, 0.70, 0.69], Some([0.58, 0.83])),
    row(SpikeClass::One, Variant::H, [0.7151, 0.7055, 0.6971, 0.6904], [0.72, 0.71, 0.70, 0.69], None),
    row(SpikeClass::One, Variant::M, [0.7115, 0.7014, 0.6926, 0.6863], [0.71, 0.70, 0.69, 0.69], Some([0.36, 0.62])),
    row(SpikeClass::One, Variant::L, [0.6991, 0.6888, 0.6788, 0.6705], [0.70, 0.69, 0.68, 0.67], Some([0.14, 0.28])),
];

/// Template memristor resistances (Ω) before the second run, TXL1..TXL4.
pub const TEMPLATE_R_BEFORE: [f64; 4] = [19.5e3, 14.8e3, 12.7e3, 10.6e3];
/// Same devices after the run.
pub const TEMPLATE_R_AFTER: [f64; 4] = [19.5e3, 15.1e3, 12.6e3, 10.6e3];
/// Stored voltages programmed into the class-2 template (the class-2M ideal vector).
pub const TEMPLATE_V_PK: [f64; 4] = [0.7347, 0.7231, 0.7149, 0.7094];

pub const TEXEL_LOAD_OHMS: f64 = 300e3;
pub const TEXEL_SUPPLY_V: f64 = 1.3;

/// Charge drawn by one texel evaluation (C).
pub const TEXEL_CHARGE: f64 = 46e-15;
/// Charge drawn by one minimum-size inverter toggle (C).
pub const INVERTER_CHARGE: f64 = 1.25e-15;
/// Inverter-toggle equivalents quoted alongside the charge figures; the two
/// quotes disagree with each other and with the ratio of the charges.
pub const QUOTED_TOGGLES: [f64; 2] = [39.0, 37.0];
