//! Wavelet-shrinkage denoising on top of the undecimated transform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavelet::{self, Signal, WaveletError, WaveletFilter};

/// Normal-consistency constant of the median absolute deviation.
pub const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("empty detail band")]
    EmptyDetailBand,
    #[error("invalid denoise config: {0}")]
    InvalidConfig(String),
    #[error("signal lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference signal is all zero")]
    ZeroReference,
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    Hard,
    #[default]
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum SigmaMode {
    Known(f64),
    #[default]
    Mad,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum ThresholdMode {
    #[default]
    Universal,
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseConfig {
    pub filter_name: String,
    pub levels: usize,
    #[serde(default)]
    pub rule: ThresholdRule,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            filter_name: "haar".into(),
            levels: 5,
            rule: ThresholdRule::Soft,
            sigma_mode: SigmaMode::Mad,
            threshold_mode: ThresholdMode::Universal,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        if self.levels == 0 {
            return Err(DenoiseError::InvalidConfig("levels must be positive".into()));
        }
        if let SigmaMode::Known(s) = self.sigma_mode {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(DenoiseError::InvalidConfig(format!("sigma must be >= 0, got {s}")));
            }
        }
        if let ThresholdMode::Manual(t) = self.threshold_mode {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(DenoiseError::InvalidConfig(format!(
                    "threshold must be >= 0, got {t}"
                )));
            }
        }
        WaveletFilter::by_name(&self.filter_name)?;
        Ok(())
    }
}

/// SNR value that may be unbounded (exact reconstruction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Finite(f64),
    Infinite,
}

impl Snr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Snr::Finite(v) => Some(v),
            Snr::Infinite => None,
        }
    }
}

/// Serialized as a flat object; unavailable SNR values are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub sigma_used: f64,
    pub threshold_used: f64,
    pub input_snr_db: Option<f64>,
    pub output_snr_db: Option<f64>,
    pub improvement_db: Option<f64>,
}

impl DenoiseReport {
    /// Fills the SNR fields against a known clean reference.
    pub fn with_reference(
        mut self,
        clean: &Signal,
        noisy: &Signal,
        denoised: &Signal,
    ) -> Result<Self, DenoiseError> {
        self.input_snr_db = snr_db(clean, noisy)?.finite();
        self.output_snr_db = snr_db(clean, denoised)?.finite();
        self.improvement_db = match (self.input_snr_db, self.output_snr_db) {
            (Some(i), Some(o)) => Some(o - i),
            _ => None,
        };
        Ok(self)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust noise level from the finest detail band: `median(|d|) / 0.6745`.
pub fn mad_sigma(finest_detail: &[f64]) -> Result<f64, DenoiseError> {
    if finest_detail.is_empty() {
        return Err(DenoiseError::EmptyDetailBand);
    }
    let mut abs: Vec<f64> = finest_detail.iter().map(|v| v.abs()).collect();
    Ok(median(&mut abs) / MAD_SCALE)
}

/// VisuShrink threshold `sigma * sqrt(2 ln N)`.
pub fn universal_threshold(sigma: f64, n: usize) -> f64 {
    assert!(n >= 1, "universal threshold needs N >= 1");
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

pub fn apply_threshold(c: f64, t: f64, rule: ThresholdRule) -> f64 {
    match rule {
        ThresholdRule::Hard => {
            if c.abs() > t {
                c
            } else {
                0.0
            }
        }
        ThresholdRule::Soft => {
            let mag = (c.abs() - t).max(0.0);
            if mag == 0.0 {
                0.0
            } else {
                mag.copysign(c)
            }
        }
    }
}

/// Decompose, shrink every detail band with one global threshold, rebuild.
/// The approximation band is left untouched. SNR fields in the report stay
/// empty; see [`DenoiseReport::with_reference`].
pub fn denoise(x: &Signal, cfg: &DenoiseConfig) -> Result<(Signal, DenoiseReport), DenoiseError> {
    cfg.validate()?;
    let filter = WaveletFilter::by_name(&cfg.filter_name)?;
    let mut dec = wavelet::uwt_forward(x, &filter, cfg.levels)?;
    let sigma = match cfg.sigma_mode {
        SigmaMode::Known(s) => s,
        SigmaMode::Mad => mad_sigma(&dec.details[0])?,
    };
    let threshold = match cfg.threshold_mode {
        ThresholdMode::Universal => universal_threshold(sigma, x.len()),
        ThresholdMode::Manual(t) => t,
    };
    for band in dec.details.iter_mut() {
        for c in band.iter_mut() {
            *c = apply_threshold(*c, threshold, cfg.rule);
        }
    }
    let out = wavelet::uwt_inverse(&dec, &filter)?;
    let report = DenoiseReport {
        sigma_used: sigma,
        threshold_used: threshold,
        input_snr_db: None,
        output_snr_db: None,
        improvement_db: None,
    };
    Ok((out, report))
}

/// `10 log10(sum ref^2 / sum (ref - est)^2)`.
pub fn snr_db(reference: &Signal, estimate: &Signal) -> Result<Snr, DenoiseError> {
    if reference.len() != estimate.len() {
        return Err(DenoiseError::LengthMismatch(reference.len(), estimate.len()));
    }
    let power: f64 = reference.as_slice().iter().map(|v| v * v).sum();
    if power == 0.0 {
        return Err(DenoiseError::ZeroReference);
    }
    let residual: f64 = reference
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if residual < 1e-300 {
        return Ok(Snr::Infinite);
    }
    Ok(Snr::Finite(10.0 * (power / residual).log10()))
}
