//! Charge budget of one texel evaluation.

use memspike_core::reference::QUOTED_TOGGLES;
use memspike_core::texel::charge_ratio;
use serde::Serialize;

use crate::config::ChargeConfig;
use crate::RunError;

#[derive(Debug, Clone, Serialize)]
pub struct ChargeReport {
    pub q_texel: f64,
    pub q_inverter: f64,
    /// Texel charge in inverter toggles.
    pub ratio: f64,
    pub quoted_toggles: [f64; 2],
    pub note: String,
}

pub fn run_charge(cfg: &ChargeConfig) -> Result<ChargeReport, RunError> {
    let ratio = charge_ratio(cfg.q_texel, cfg.q_inverter)?;
    let note = format!(
        "charge ratio is {ratio:.2} toggles; the quoted equivalents are {} and {}, which disagree with each other and with the ratio",
        QUOTED_TOGGLES[0], QUOTED_TOGGLES[1]
    );
    Ok(ChargeReport {
        q_texel: cfg.q_texel,
        q_inverter: cfg.q_inverter,
        ratio,
        quoted_toggles: QUOTED_TOGGLES,
        note,
    })
}
