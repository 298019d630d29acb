//! End-to-end anomaly scoring: preprocessing, embeddings, fused wavelet
//! features, marginalized autoencoder fit, reconstruction-error scores and
//! held-out evaluation.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{self, CbowConfig, EmbedError, EmbeddingMatrix};
use crate::evalkit::{self, CurveKind, CurvePoint, EvalError, MetricsReport, Objective, Split};
use crate::textprep::{self, Label, LanguageProfile, RawDocument, TextError, Vocabulary, Weighting};
use crate::wavelet::{self, WaveletError, WaveletFilter};
use crate::wesma::{
    self, CorruptionProfile, FusionScaler, ReprMode, SemanticNoiseConfig, WesmaError, WesmaModel,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Wesma(#[from] WesmaError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("document '{0}' has no label")]
    MissingLabel(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepConfig {
    pub min_count: usize,
    pub weighting: Weighting,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            min_count: 2,
            weighting: Weighting::TfIdf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub enabled: bool,
    pub projections: usize,
    pub signal_length: usize,
    pub filter: String,
    pub levels: usize,
    pub seed: u64,
    /// Multiplier on the standardized block, divided by the square root of
    /// its width so the block's total variance equals `weight²`.
    pub weight: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            enabled: true,
            projections: 4,
            signal_length: 32,
            filter: "haar".into(),
            levels: 3,
            seed: 17,
            weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WesmaConfig {
    pub layers: usize,
    pub lambda: f64,
    #[serde(default)]
    pub repr_mode: ReprMode,
    #[serde(default)]
    pub noise: SemanticNoiseConfig,
    #[serde(default)]
    pub fit_on: FitSet,
}

impl Default for WesmaConfig {
    fn default() -> Self {
        WesmaConfig {
            layers: 2,
            lambda: 1.0,
            repr_mode: ReprMode::Concat,
            noise: SemanticNoiseConfig {
                base_p0: 0.1,
                ..SemanticNoiseConfig::default()
            },
            fit_on: FitSet::Legit,
        }
    }
}

/// Training documents the autoencoder is fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSet {
    /// Training documents labeled legit, plus unlabeled ones.
    #[default]
    Legit,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.6, 0.2, 0.2],
            seed: 3,
        }
    }
}

/// Preprocessed corpus with its split and training vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub ids: Vec<String>,
    pub labels: Vec<Option<Label>>,
    pub tokens: Vec<Vec<String>>,
    pub split: Split,
    pub vocab: Vocabulary,
}

impl Prepared {
    pub fn train_tokens(&self) -> Vec<Vec<String>> {
        self.split.train.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// Labels of the given indices; every one must be present.
    pub fn labels_of(&self, indices: &[usize]) -> Result<Vec<Label>, PipelineError> {
        indices
            .iter()
            .map(|&i| self.labels[i].ok_or_else(|| PipelineError::MissingLabel(self.ids[i].clone())))
            .collect()
    }
}

/// Resolves one profile per language, falling back to the built-in tables
/// and finally to an empty profile.
pub fn profiles_for(
    docs: &[RawDocument],
    overrides: &BTreeMap<String, LanguageProfile>,
) -> BTreeMap<String, LanguageProfile> {
    let mut out = BTreeMap::new();
    for doc in docs {
        if out.contains_key(&doc.lang) {
            continue;
        }
        let profile = overrides
            .get(&doc.lang)
            .cloned()
            .or_else(|| LanguageProfile::builtin(&doc.lang).ok())
            .unwrap_or_else(|| LanguageProfile::empty(&doc.lang));
        out.insert(doc.lang.clone(), profile);
    }
    out
}

pub fn prepare(
    docs: &[RawDocument],
    profiles: &BTreeMap<String, LanguageProfile>,
    prep: &PrepConfig,
    split: &SplitConfig,
) -> Result<Prepared, PipelineError> {
    let tokens: Vec<Vec<String>> = docs
        .iter()
        .map(|d| {
            let profile = profiles
                .get(&d.lang)
                .ok_or_else(|| PipelineError::Invalid(format!("no profile for '{}'", d.lang)))?;
            Ok(textprep::preprocess(&d.text, profile))
        })
        .collect::<Result<_, PipelineError>>()?;
    let split = evalkit::split_dataset(docs.len(), split.ratios, split.seed)?;
    let train: Vec<Vec<String>> = split.train.iter().map(|&i| tokens[i].clone()).collect();
    let vocab = textprep::build_vocabulary(&train, prep.min_count)?;
    Ok(Prepared {
        ids: docs.iter().map(|d| d.id.clone()).collect(),
        labels: docs.iter().map(|d| d.label).collect(),
        tokens,
        split,
        vocab,
    })
}

pub fn train_embeddings(prepared: &Prepared, cfg: &CbowConfig) -> Result<EmbeddingMatrix, PipelineError> {
    Ok(embed::train_cbow(&prepared.train_tokens(), &prepared.vocab, cfg)?.embeddings)
}

/// Raw (unstandardized) subband energy features of one document: for each
/// projection, `levels + 1` log-energies. Documents without in-vocabulary
/// tokens map to all zeros.
pub fn raw_fusion_features(
    encoded: &[usize],
    emb: &EmbeddingMatrix,
    cfg: &FusionConfig,
) -> Result<Vec<f64>, PipelineError> {
    let width = cfg.projections * (cfg.levels + 1);
    if encoded.is_empty() {
        return Ok(vec![0.0; width]);
    }
    let filter = WaveletFilter::by_name(&cfg.filter)?;
    let signals = wesma::token_signal(encoded, emb, cfg.projections, cfg.signal_length, cfg.seed)?;
    let mut out = Vec::with_capacity(width);
    for s in &signals {
        let dec = wavelet::uwt_forward(s, &filter, cfg.levels)?;
        out.extend(wesma::subband_energy_features(&dec));
    }
    Ok(out)
}

/// Everything needed to turn a token stream into a fused feature vector.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    pub weighting: Weighting,
    pub fusion: FusionConfig,
    pub scaler: Option<FusionScaler>,
}

impl FeatureSpace {
    /// Fits the fusion scaler on the training split.
    pub fn fit(
        prepared: &Prepared,
        emb: &EmbeddingMatrix,
        weighting: Weighting,
        fusion: &FusionConfig,
    ) -> Result<Self, PipelineError> {
        let scaler = if fusion.enabled {
            let rows = prepared
                .split
                .train
                .iter()
                .map(|&i| raw_fusion_features(&prepared.vocab.encode(&prepared.tokens[i]), emb, fusion))
                .collect::<Result<Vec<_>, _>>()?;
            Some(FusionScaler::fit(&rows)?)
        } else {
            None
        };
        Ok(FeatureSpace {
            weighting,
            fusion: fusion.clone(),
            scaler,
        })
    }

    pub fn fusion_width(&self) -> usize {
        self.scaler.as_ref().map_or(0, FusionScaler::output_width)
    }

    pub fn features(
        &self,
        tokens: &[String],
        vocab: &Vocabulary,
        emb: &EmbeddingMatrix,
    ) -> Result<Vec<f64>, PipelineError> {
        let doc = textprep::vectorize(tokens, vocab, self.weighting).to_dense();
        match &self.scaler {
            Some(scaler) => {
                let raw = raw_fusion_features(&vocab.encode(tokens), emb, &self.fusion)?;
                let scale = self.fusion.weight / (scaler.output_width().max(1) as f64).sqrt();
                let z: Vec<f64> = scaler.apply(&raw)?.iter().map(|v| v * scale).collect();
                Ok(wesma::fuse(&doc, &z))
            }
            None => Ok(doc),
        }
    }

    /// Column-per-document feature matrix for the given indices.
    pub fn matrix(
        &self,
        prepared: &Prepared,
        emb: &EmbeddingMatrix,
        indices: &[usize],
    ) -> Result<Array2<f64>, PipelineError> {
        let dim = prepared.vocab.len() + self.fusion_width();
        let mut x = Array2::zeros((dim, indices.len()));
        for (col, &i) in indices.iter().enumerate() {
            let f = self.features(&prepared.tokens[i], &prepared.vocab, emb)?;
            x.column_mut(col).assign(&ndarray::ArrayView1::from(&f[..]));
        }
        Ok(x)
    }
}

/// Corruption profile over the fused space: semantic keep probabilities for
/// vocabulary features, `1 - base_p0` for fused wavelet features.
pub fn fused_profile(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    noise: &SemanticNoiseConfig,
    fusion_width: usize,
) -> Result<CorruptionProfile, PipelineError> {
    let base = wesma::semantic_corruption_profile(vocab, emb, noise)?;
    Ok(base.extend(fusion_width, noise.base_p0)?)
}

pub fn fit_wesma(
    prepared: &Prepared,
    emb: &EmbeddingMatrix,
    space: &FeatureSpace,
    cfg: &WesmaConfig,
) -> Result<WesmaModel, PipelineError> {
    let rows: Vec<usize> = match cfg.fit_on {
        FitSet::All => prepared.split.train.clone(),
        FitSet::Legit => prepared
            .split
            .train
            .iter()
            .copied()
            .filter(|&i| prepared.labels[i] != Some(Label::Threat))
            .collect(),
    };
    let x = space.matrix(prepared, emb, &rows)?;
    let profile = fused_profile(&prepared.vocab, emb, &cfg.noise, space.fusion_width())?;
    Ok(wesma::stack_fit(&x, &profile, cfg.layers, cfg.lambda, cfg.repr_mode)?)
}

/// Anomaly score of every document, in corpus order.
pub fn score_all(
    prepared: &Prepared,
    emb: &EmbeddingMatrix,
    space: &FeatureSpace,
    model: &WesmaModel,
) -> Result<Vec<f64>, PipelineError> {
    let all: Vec<usize> = (0..prepared.tokens.len()).collect();
    let x = space.matrix(prepared, emb, &all)?;
    Ok(model.reconstruction_error_batch(&x)?)
}

fn pick(scores: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| scores[i]).collect()
}

/// Validation AUC of a score vector; the grid-search objective.
pub fn validation_auc(prepared: &Prepared, scores: &[f64]) -> Result<f64, PipelineError> {
    let labels = prepared.labels_of(&prepared.split.val)?;
    Ok(evalkit::roc_auc(&pick(scores, &prepared.split.val), &labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub threshold: f64,
    pub validation_auc: f64,
    pub test: MetricsReport,
    pub test_counts: evalkit::ConfusionCounts,
    #[serde(skip)]
    pub roc: Vec<CurvePoint>,
    #[serde(skip)]
    pub pr: Vec<CurvePoint>,
}

/// Threshold chosen on validation (max F1), metrics and curves on test.
pub fn evaluate(prepared: &Prepared, scores: &[f64]) -> Result<Evaluation, PipelineError> {
    let val_labels = prepared.labels_of(&prepared.split.val)?;
    let test_labels = prepared.labels_of(&prepared.split.test)?;
    evaluate_scores(
        &pick(scores, &prepared.split.val),
        &val_labels,
        &pick(scores, &prepared.split.test),
        &test_labels,
    )
}

pub fn evaluate_scores(
    val_scores: &[f64],
    val_labels: &[Label],
    test_scores: &[f64],
    test_labels: &[Label],
) -> Result<Evaluation, PipelineError> {
    let threshold = evalkit::select_threshold(val_scores, val_labels)?;
    let counts = evalkit::confusion(test_scores, test_labels, threshold)?;
    let auc = evalkit::roc_auc(test_scores, test_labels)?;
    Ok(Evaluation {
        threshold,
        validation_auc: evalkit::roc_auc(val_scores, val_labels)?,
        test: evalkit::metrics(&counts, auc)?,
        test_counts: counts,
        roc: evalkit::curve_points(test_scores, test_labels, CurveKind::Roc)?,
        pr: evalkit::curve_points(test_scores, test_labels, CurveKind::Pr)?,
    })
}

/// Grid over ridge strength and depth, ranked by validation AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WesmaGrid {
    pub lambda: Vec<f64>,
    pub layers: Vec<usize>,
}

pub fn grid_search_wesma(
    prepared: &Prepared,
    emb: &EmbeddingMatrix,
    space: &FeatureSpace,
    base: &WesmaConfig,
    grid: &WesmaGrid,
) -> Result<(WesmaConfig, evalkit::GridResult<f64>), PipelineError> {
    let axes = vec![
        ("lambda".to_string(), grid.lambda.clone()),
        ("layers".to_string(), grid.layers.iter().map(|&l| l as f64).collect()),
    ];
    let result = evalkit::grid_search(&axes, Objective::Maximize, |params| {
        let cfg = WesmaConfig {
            lambda: params[0].1,
            layers: params[1].1 as usize,
            ..base.clone()
        };
        let model = fit_wesma(prepared, emb, space, &cfg)?;
        let scores = score_all(prepared, emb, space, &model)?;
        validation_auc(prepared, &scores)
    })?;
    let best = WesmaConfig {
        lambda: result.best[0].1,
        layers: result.best[1].1 as usize,
        ..base.clone()
    };
    Ok((best, result))
}

/// Full run settings for [`run`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub prep: PrepConfig,
    pub split: SplitConfig,
    pub cbow: CbowConfig,
    pub fusion: FusionConfig,
    pub wesma: WesmaConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub prepared: Prepared,
    pub embeddings: EmbeddingMatrix,
    pub space: FeatureSpace,
    pub model: WesmaModel,
    pub scores: Vec<f64>,
    pub evaluation: Evaluation,
}

/// Runs every stage in memory.
pub fn run(docs: &[RawDocument], cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let profiles = profiles_for(docs, &BTreeMap::new());
    let prepared = prepare(docs, &profiles, &cfg.prep, &cfg.split)?;
    let embeddings = train_embeddings(&prepared, &cfg.cbow)?;
    let space = FeatureSpace::fit(&prepared, &embeddings, cfg.prep.weighting, &cfg.fusion)?;
    let model = fit_wesma(&prepared, &embeddings, &space, &cfg.wesma)?;
    let scores = score_all(&prepared, &embeddings, &space, &model)?;
    let evaluation = evaluate(&prepared, &scores)?;
    Ok(PipelineRun {
        prepared,
        embeddings,
        space,
        model,
        scores,
        evaluation,
    })
}
