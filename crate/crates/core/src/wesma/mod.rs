//! Word Embedded Semantic Marginal Autoencoder.
//!
//! Each layer is a linear denoiser whose expected squared reconstruction
//! loss over infinitely many feature-dropout corruptions is minimized in
//! closed form. Dropout probabilities come from a semantic profile: features
//! close (in embedding space) to a set of seed terms are corrupted more often.
//! Layers stack through `tanh`; the first layer's linear reconstruction error
//! is the anomaly score.

mod fusion;
pub mod linalg;

pub use fusion::{fuse, subband_energy_features, token_signal, FusionScaler};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_similarity, EmbeddingMatrix};
use crate::textprep::Vocabulary;

/// Relative residual bound accepted from the layer solve.
pub const SOLVER_RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum WesmaError {
    #[error("seed term '{0}' is out of vocabulary")]
    SeedOutOfVocabulary(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid corruption profile: {0}")]
    InvalidProfile(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("regularization required")]
    RegularizationRequired,
    #[error("singular layer system at column {0}")]
    Singular(usize),
    #[error("solver residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("no signal")]
    NoSignal,
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Keep probabilities for `D` features plus a trailing bias slot fixed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct CorruptionProfile {
    keep: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRepr {
    keep_prob: Vec<f64>,
}

impl TryFrom<ProfileRepr> for CorruptionProfile {
    type Error = WesmaError;
    fn try_from(r: ProfileRepr) -> Result<Self, WesmaError> {
        CorruptionProfile::with_bias(r.keep_prob)
    }
}

impl From<CorruptionProfile> for ProfileRepr {
    fn from(p: CorruptionProfile) -> Self {
        ProfileRepr { keep_prob: p.keep }
    }
}

impl CorruptionProfile {
    /// From the full `D + 1` vector; the last entry must be exactly 1.
    pub fn with_bias(keep: Vec<f64>) -> Result<Self, WesmaError> {
        if keep.len() < 2 {
            return Err(WesmaError::InvalidProfile("need at least one feature".into()));
        }
        if let Some(q) = keep.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
            return Err(WesmaError::InvalidProfile(format!(
                "keep probability {q} outside (0, 1]"
            )));
        }
        if *keep.last().expect("nonempty") != 1.0 {
            return Err(WesmaError::InvalidProfile("bias keep probability must be 1".into()));
        }
        Ok(CorruptionProfile { keep })
    }

    /// From per-feature keep probabilities; appends the bias slot.
    pub fn from_features(mut keep: Vec<f64>) -> Result<Self, WesmaError> {
        keep.push(1.0);
        Self::with_bias(keep)
    }

    /// Every feature dropped with probability `p`.
    pub fn uniform(features: usize, p: f64) -> Result<Self, WesmaError> {
        Self::from_features(vec![1.0 - p; features])
    }

    /// Number of features `D`, excluding the bias slot.
    pub fn features(&self) -> usize {
        self.keep.len() - 1
    }

    /// All `D + 1` keep probabilities.
    pub fn keep(&self) -> &[f64] {
        &self.keep
    }

    /// Appends `extra` features with drop probability `p`.
    pub fn extend(&self, extra: usize, p: f64) -> Result<Self, WesmaError> {
        let mut keep = self.keep[..self.features()].to_vec();
        keep.extend(std::iter::repeat_n(1.0 - p, extra));
        Self::from_features(keep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticNoiseConfig {
    #[serde(default)]
    pub seed_terms: Vec<String>,
    pub base_p0: f64,
    pub boost: f64,
    pub p_max: f64,
}

impl Default for SemanticNoiseConfig {
    fn default() -> Self {
        SemanticNoiseConfig {
            seed_terms: Vec::new(),
            base_p0: 0.3,
            boost: 1.0,
            p_max: 0.9,
        }
    }
}

impl SemanticNoiseConfig {
    pub fn validate(&self) -> Result<(), WesmaError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.base_p0) || !open_unit(self.p_max) {
            return Err(WesmaError::InvalidConfig("base_p0 and p_max must lie in (0, 1)".into()));
        }
        if !(self.boost >= 0.0 && self.boost.is_finite()) {
            return Err(WesmaError::InvalidConfig("boost must be >= 0".into()));
        }
        if self.base_p0 > self.p_max {
            return Err(WesmaError::InvalidConfig("base_p0 exceeds p_max".into()));
        }
        Ok(())
    }
}

/// `p_i = min(p_max, p0 (1 + boost * s_i))` where `s_i` is the largest
/// positive cosine similarity between feature `i` and any seed term.
pub fn semantic_corruption_profile(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    cfg: &SemanticNoiseConfig,
) -> Result<CorruptionProfile, WesmaError> {
    cfg.validate()?;
    if emb.vocab_size() != vocab.len() {
        return Err(WesmaError::DimensionMismatch {
            expected: vocab.len(),
            got: emb.vocab_size(),
        });
    }
    let seeds = cfg
        .seed_terms
        .iter()
        .map(|t| vocab.index_of(t).ok_or_else(|| WesmaError::SeedOutOfVocabulary(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let keep = (0..vocab.len())
        .map(|i| {
            let s = seeds
                .iter()
                .map(|&seed| {
                    cosine_similarity(emb.input_vector(i), emb.input_vector(seed))
                        .unwrap_or(0.0)
                        .max(0.0)
                })
                .fold(0.0, f64::max);
            1.0 - keep_drop(cfg, s)
        })
        .collect();
    CorruptionProfile::from_features(keep)
}

fn keep_drop(cfg: &SemanticNoiseConfig, similarity: f64) -> f64 {
    cfg.p_max.min(cfg.base_p0 * (1.0 + cfg.boost * similarity))
}

/// Appends a row of ones: `D x n` → `(D + 1) x n`.
pub fn augment(x: &Array2<f64>) -> Array2<f64> {
    let (d, n) = x.dim();
    let mut out = Array2::ones((d + 1, n));
    out.slice_mut(s![..d, ..]).assign(x);
    out
}

fn augment_vec(x: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::ones(x.len() + 1);
    out.slice_mut(s![..x.len()]).assign(&x);
    out
}

fn check_features(expected: usize, got: usize) -> Result<(), WesmaError> {
    if expected != got {
        return Err(WesmaError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Expected scatter matrices under feature dropout.
///
/// With `S = X_aug X_augᵀ`: `Q_ij = S_ij q_i q_j` (`i != j`), `Q_ii = S_ii q_i`,
/// and `P_ij = S_ij q_j` over the first `D` rows.
pub fn marginalized_moments(
    x: &Array2<f64>,
    profile: &CorruptionProfile,
) -> Result<(Array2<f64>, Array2<f64>), WesmaError> {
    let (d, n) = x.dim();
    check_features(profile.features(), d)?;
    if n == 0 {
        return Err(WesmaError::InvalidConfig("no examples".into()));
    }
    let xa = augment(x);
    let scatter = xa.dot(&xa.t());
    let q = profile.keep();
    let mut big_q = scatter.clone();
    for ((i, j), v) in big_q.indexed_iter_mut() {
        *v *= if i == j { q[i] } else { q[i] * q[j] };
    }
    let mut p = scatter.slice(s![..d, ..]).to_owned();
    for ((_, j), v) in p.indexed_iter_mut() {
        *v *= q[j];
    }
    Ok((p, big_q))
}

/// Linear denoiser `D x (D + 1)` acting on bias-augmented input.
#[derive(Debug, Clone, PartialEq)]
pub struct MdaLayer {
    pub weights: Array2<f64>,
    pub lambda: f64,
}

impl MdaLayer {
    pub fn features(&self) -> usize {
        self.weights.nrows()
    }

    /// `W · augment(x)` for one example.
    pub fn reconstruct(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&augment_vec(x))
    }

    /// `W · augment(X)` column-wise.
    pub fn reconstruct_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        self.weights.dot(&augment(x))
    }
}

/// Solves `W (Q + λI) = P` for the layer weights.
pub fn fit_mda_layer(
    x: &Array2<f64>,
    profile: &CorruptionProfile,
    lambda: f64,
) -> Result<MdaLayer, WesmaError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(WesmaError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let (p, mut q) = marginalized_moments(x, profile)?;
    q.diag_mut().iter_mut().for_each(|v| *v += lambda);
    // Q + λI is symmetric, so the system transposes to (Q + λI) Wᵀ = Pᵀ.
    let wt = linalg::solve(&q, &p.t().to_owned()).map_err(|s| {
        if lambda == 0.0 {
            WesmaError::RegularizationRequired
        } else {
            WesmaError::Singular(s.column)
        }
    })?;
    let weights = wt.t().to_owned();
    let residual = linalg::frobenius(&(weights.dot(&q) - &p));
    let scale = linalg::frobenius(&p);
    if !weights.iter().all(|v| v.is_finite()) || residual > SOLVER_RESIDUAL_TOLERANCE * scale {
        return Err(if lambda == 0.0 {
            WesmaError::RegularizationRequired
        } else {
            WesmaError::Residual(residual / scale.max(f64::MIN_POSITIVE))
        });
    }
    Ok(MdaLayer { weights, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprMode {
    #[default]
    Concat,
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WesmaModel {
    pub layers: Vec<MdaLayer>,
    pub profile: CorruptionProfile,
    pub repr_mode: ReprMode,
}

/// Greedy layer-wise fit: `h_l = tanh(W_l · augment(h_{l-1}))`.
pub fn stack_fit(
    x: &Array2<f64>,
    profile: &CorruptionProfile,
    layers: usize,
    lambda: f64,
    repr_mode: ReprMode,
) -> Result<WesmaModel, WesmaError> {
    if layers == 0 {
        return Err(WesmaError::InvalidConfig("at least one layer required".into()));
    }
    let mut fitted = Vec::with_capacity(layers);
    let mut hidden = x.clone();
    for _ in 0..layers {
        let layer = fit_mda_layer(&hidden, profile, lambda)?;
        hidden = layer.reconstruct_batch(&hidden).mapv(f64::tanh);
        fitted.push(layer);
    }
    Ok(WesmaModel {
        layers: fitted,
        profile: profile.clone(),
        repr_mode,
    })
}

impl WesmaModel {
    pub fn features(&self) -> usize {
        self.profile.features()
    }

    pub fn repr_dim(&self) -> usize {
        match self.repr_mode {
            ReprMode::Concat => self.features() * (self.layers.len() + 1),
            ReprMode::Last => self.features(),
        }
    }

    /// Representation of each column of `x` (`D x n` → `repr_dim x n`).
    pub fn transform_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, WesmaError> {
        let d = self.features();
        check_features(d, x.nrows())?;
        let mut parts = Vec::with_capacity(self.layers.len() + 1);
        if self.repr_mode == ReprMode::Concat {
            parts.push(x.clone());
        }
        let mut hidden = x.clone();
        for layer in &self.layers {
            hidden = layer.reconstruct_batch(&hidden).mapv(f64::tanh);
            if self.repr_mode == ReprMode::Concat {
                parts.push(hidden.clone());
            }
        }
        if self.repr_mode == ReprMode::Last {
            return Ok(hidden);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(ndarray::concatenate(Axis(0), &views).expect("equal column counts"))
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, WesmaError> {
        let col = Array2::from_shape_vec((x.len(), 1), x.to_vec()).expect("column shape");
        Ok(self.transform_batch(&col)?.iter().copied().collect())
    }

    /// `(1/D) ||W_1 · augment(x) - x||²`.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64, WesmaError> {
        check_features(self.features(), x.len())?;
        let xv = ArrayView1::from(x);
        let rec = self.layers[0].reconstruct(xv);
        let sq: f64 = rec.iter().zip(x).map(|(r, v)| (r - v) * (r - v)).sum();
        Ok(sq / x.len() as f64)
    }

    pub fn reconstruction_error_batch(&self, x: &Array2<f64>) -> Result<Vec<f64>, WesmaError> {
        let d = self.features();
        check_features(d, x.nrows())?;
        let rec = self.layers[0].reconstruct_batch(x);
        Ok((&rec - x)
            .axis_iter(Axis(1))
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / d as f64)
            .collect())
    }

    pub fn to_json(&self) -> Result<String, WesmaError> {
        Ok(serde_json::to_string_pretty(&ModelRepr::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, WesmaError> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        repr.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfigRepr {
    layers: usize,
    lambda: f64,
    repr_mode: ReprMode,
    nonlinearity: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    rows: usize,
    cols: usize,
    lambda: f64,
    /// Row-major.
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    config: ModelConfigRepr,
    profile: CorruptionProfile,
    layers: Vec<LayerRepr>,
}

impl From<&WesmaModel> for ModelRepr {
    fn from(m: &WesmaModel) -> Self {
        ModelRepr {
            config: ModelConfigRepr {
                layers: m.layers.len(),
                lambda: m.layers.first().map_or(0.0, |l| l.lambda),
                repr_mode: m.repr_mode,
                nonlinearity: "tanh".into(),
            },
            profile: m.profile.clone(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerRepr {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    lambda: l.lambda,
                    weights: l.weights.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelRepr> for WesmaModel {
    type Error = WesmaError;

    fn try_from(r: ModelRepr) -> Result<Self, WesmaError> {
        if r.config.nonlinearity != "tanh" {
            return Err(WesmaError::InvalidConfig(format!(
                "unsupported nonlinearity '{}'",
                r.config.nonlinearity
            )));
        }
        if r.layers.is_empty() || r.layers.len() != r.config.layers {
            return Err(WesmaError::InvalidConfig("layer count mismatch".into()));
        }
        let d = r.profile.features();
        let layers = r
            .layers
            .into_iter()
            .map(|l| {
                if l.rows != d || l.cols != d + 1 {
                    return Err(WesmaError::DimensionMismatch {
                        expected: d,
                        got: l.rows,
                    });
                }
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights).map_err(|_| {
                    WesmaError::InvalidConfig("weight array length mismatch".into())
                })?;
                if !weights.iter().all(|v| v.is_finite()) {
                    return Err(WesmaError::InvalidConfig("non-finite weight".into()));
                }
                Ok(MdaLayer {
                    weights,
                    lambda: l.lambda,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(WesmaModel {
            layers,
            profile: r.profile,
            repr_mode: r.config.repr_mode,
        })
    }
}
