//! Bridge from token streams to the wavelet domain and back to features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::WesmaError;
use crate::embed::EmbeddingMatrix;
use crate::wavelet::{Signal, UwtDecomposition};

/// Projects each token's input vector onto `projections` seeded random unit
/// directions, giving one sequence per direction, then periodically extends
/// or truncates to `target_length`.
pub fn token_signal(
    tokens: &[usize],
    emb: &EmbeddingMatrix,
    projections: usize,
    target_length: usize,
    seed: u64,
) -> Result<Vec<Signal>, WesmaError> {
    if tokens.is_empty() {
        return Err(WesmaError::NoSignal);
    }
    if target_length < 4 || !target_length.is_power_of_two() {
        return Err(WesmaError::InvalidConfig(format!(
            "target length must be a power of two >= 4, got {target_length}"
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= emb.vocab_size()) {
        return Err(WesmaError::DimensionMismatch {
            expected: emb.vocab_size(),
            got: bad,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = emb.dim();
    (0..projections)
        .map(|_| {
            let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let base: Vec<f64> = tokens
                .iter()
                .map(|&t| emb.input_vector(t).iter().zip(&u).map(|(e, d)| e * d).sum())
                .collect();
            let samples = (0..target_length).map(|t| base[t % base.len()]).collect();
            Signal::new(samples).map_err(|_| WesmaError::NoSignal)
        })
        .collect()
}

/// `ln(1 + mean(c²))` for each detail band (finest first), then the
/// approximation band.
pub fn subband_energy_features(dec: &UwtDecomposition) -> Vec<f64> {
    dec.details
        .iter()
        .chain(std::iter::once(&dec.approx))
        .map(|band| {
            let ms = band.iter().map(|c| c * c).sum::<f64>() / band.len().max(1) as f64;
            ms.ln_1p()
        })
        .collect()
}

/// Standardization fitted on training-split subband features. Features with
/// zero spread are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionScaler {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl FusionScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, WesmaError> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(WesmaError::DimensionMismatch {
                expected: width,
                got: r.len(),
            });
        }
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..width)
            .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
            .collect();
        let stdev = (0..width)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect();
        Ok(FusionScaler { mean, stdev })
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    /// Number of features surviving standardization.
    pub fn output_width(&self) -> usize {
        self.stdev.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>, WesmaError> {
        if features.len() != self.input_width() {
            return Err(WesmaError::DimensionMismatch {
                expected: self.input_width(),
                got: features.len(),
            });
        }
        Ok(features
            .iter()
            .zip(self.mean.iter().zip(&self.stdev))
            .filter(|(_, (_, &s))| s > 0.0)
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Concatenates a document representation with standardized subband features.
pub fn fuse(representation: &[f64], standardized: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(representation.len() + standardized.len());
    out.extend_from_slice(representation);
    out.extend_from_slice(standardized);
    out
}
