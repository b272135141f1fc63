use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C_LOW: f64 = 0.995;
pub const DEFAULT_C_HIGH: f64 = 1.01;
pub const DEFAULT_C_TRUNC: f64 = 3.0;

/// Which correction terms enter the weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsMode {
    /// Geometric mask times truncated sequence ratio.
    #[default]
    MisTis,
    /// Truncated sequence ratio only.
    Tis,
    /// Geometric mask only; kept turns get weight 1.
    Mis,
    /// Every weight is 1.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsConfig {
    pub c_low: f64,
    pub c_high: f64,
    pub c_trunc: f64,
    pub mode: IsMode,
}

impl Default for IsConfig {
    fn default() -> Self {
        Self { c_low: DEFAULT_C_LOW, c_high: DEFAULT_C_HIGH, c_trunc: DEFAULT_C_TRUNC, mode: IsMode::MisTis }
    }
}

impl IsConfig {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if !(self.c_low > 0.0 && self.c_low <= 1.0) {
            v.push(("c_low".into(), "c_low must lie in (0,1]".into()));
        }
        if !(self.c_high >= 1.0 && self.c_high.is_finite()) {
            v.push(("c_high".into(), "c_high must be finite and >= 1".into()));
        }
        if !(self.c_trunc >= 1.0 && self.c_trunc.is_finite()) {
            v.push(("c_trunc".into(), "c_trunc must be finite and >= 1".into()));
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeight {
    pub rho_seq: f64,
    pub rho_geo: f64,
    pub w: f64,
    /// The geometric mask rejected this turn.
    pub masked: bool,
    /// The sequence ratio exceeded the truncation cap.
    pub truncated: bool,
}

/// Sequence and geometric-mean ratios from per-token log-probabilities,
/// computed in log space.
pub fn importance_weight(train: &[f64], behavior: &[f64], cfg: &IsConfig) -> Result<ImportanceWeight> {
    if train.len() != behavior.len() {
        return Err(Error::TokenCountMismatch { train: train.len(), behavior: behavior.len() });
    }
    if train.is_empty() {
        return Err(Error::domain("importance weight needs at least one token"));
    }
    if train.iter().chain(behavior).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log-probability".into()));
    }
    let log_rho: f64 = train.iter().zip(behavior).map(|(t, b)| t - b).sum();
    let rho_seq = log_rho.exp();
    let rho_geo = (log_rho / train.len() as f64).exp();
    let in_band = cfg.c_low <= rho_geo && rho_geo <= cfg.c_high;
    let truncated = rho_seq > cfg.c_trunc;
    let tis = rho_seq.min(cfg.c_trunc);
    let (w, masked) = match cfg.mode {
        IsMode::MisTis => (if in_band { tis } else { 0.0 }, !in_band),
        IsMode::Tis => (tis, false),
        IsMode::Mis => (if in_band { 1.0 } else { 0.0 }, !in_band),
        IsMode::None => (1.0, false),
    };
    let truncated = truncated && matches!(cfg.mode, IsMode::MisTis | IsMode::Tis) && !masked;
    Ok(ImportanceWeight { rho_seq, rho_geo, w, masked, truncated })
}
