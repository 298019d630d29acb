//! Run configuration: one JSON document with a section per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::datagen::{CorpusSpec, LanguageSpec, SignalKind};
use crate::denoise::DenoiseConfig;
use crate::embed::CbowConfig;
use crate::pipeline::{FitSet, FusionConfig, PrepConfig, SplitConfig, WesmaConfig, WesmaGrid};
use crate::textprep::{LanguageProfile, Weighting};
use crate::wesma::{ReprMode, SemanticNoiseConfig};

/// Environment variable overriding the output directory when `--out` is
/// not given.
pub const OUT_DIR_ENV: &str = "WESMA_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub datagen: DatagenSection,
    pub denoise: DenoiseConfig,
    pub eval_denoise: EvalDenoiseSection,
    pub textprep: TextprepSection,
    pub cbow: CbowSection,
    pub wesma: WesmaSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            datagen: DatagenSection::default(),
            denoise: DenoiseConfig::default(),
            eval_denoise: EvalDenoiseSection::default(),
            textprep: TextprepSection::default(),
            cbow: CbowSection::default(),
            wesma: WesmaSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenSection {
    pub languages: Vec<LanguageSpec>,
    pub doc_length: usize,
    pub typo_rate: f64,
    pub threat_rate: f64,
    pub signal_length: usize,
    pub signals: Vec<String>,
    pub signal_snr_db: f64,
}

impl Default for DatagenSection {
    fn default() -> Self {
        let corpus = CorpusSpec::default();
        DatagenSection {
            languages: corpus.languages,
            doc_length: corpus.doc_length,
            typo_rate: corpus.typo_rate,
            threat_rate: corpus.threat_rate,
            signal_length: 2048,
            signals: SignalKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            signal_snr_db: 10.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalDenoiseSection {
    /// Target input SNR per language.
    pub initial_snr_db: BTreeMap<String, f64>,
    pub signal_length: usize,
    pub trials: usize,
}

impl Default for EvalDenoiseSection {
    fn default() -> Self {
        EvalDenoiseSection {
            initial_snr_db: [("en", 10.5), ("hi", 9.8), ("ta", 11.2), ("fr", 10.9)]
                .into_iter()
                .map(|(l, v)| (l.to_string(), v))
                .collect(),
            signal_length: 2048,
            trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextprepSection {
    pub min_count: usize,
    pub weighting: Weighting,
    /// Profile JSON per language; languages not listed use the built-in
    /// tables. Relative paths resolve against the config file's directory.
    pub profiles: BTreeMap<String, PathBuf>,
}

impl Default for TextprepSection {
    fn default() -> Self {
        let prep = PrepConfig::default();
        TextprepSection {
            min_count: prep.min_count,
            weighting: prep.weighting,
            profiles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbowSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for CbowSection {
    fn default() -> Self {
        let c = CbowConfig::default();
        CbowSection {
            dim: c.dim,
            window: c.window,
            negatives: c.negatives,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub enabled: bool,
    pub projections: usize,
    pub signal_length: usize,
    pub filter: String,
    pub levels: usize,
    pub weight: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        FusionSection {
            enabled: f.enabled,
            projections: f.projections,
            signal_length: f.signal_length,
            filter: f.filter,
            levels: f.levels,
            weight: f.weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WesmaSection {
    pub layers: usize,
    pub lambda: f64,
    pub repr_mode: ReprMode,
    pub noise: SemanticNoiseConfig,
    pub fit_on: FitSet,
    pub fusion: FusionSection,
    pub grid: Option<WesmaGrid>,
}

impl Default for WesmaSection {
    fn default() -> Self {
        let w = WesmaConfig::default();
        WesmaSection {
            layers: w.layers,
            lambda: w.lambda,
            repr_mode: w.repr_mode,
            noise: w.noise,
            fit_on: w.fit_on,
            fusion: FusionSection::default(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ratios: [f64; 3],
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ratios: SplitConfig::default().ratios,
        }
    }
}

/// Stage tags for deriving independent seeds from the global seed.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Corpus = 1,
    Signals = 2,
    EvalDenoise = 3,
    Split = 4,
    Cbow = 5,
    Fusion = 6,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// Loads and validates a config file; relative profile paths are made
    /// absolute against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.textprep.profiles.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.corpus_spec().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for s in &self.datagen.signals {
            s.parse::<SignalKind>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if self.datagen.signal_length < 8 || self.eval_denoise.signal_length < 8 {
            return usage("signal lengths must be >= 8".into());
        }
        if !self.datagen.signal_snr_db.is_finite()
            || self.eval_denoise.initial_snr_db.values().any(|v| !v.is_finite())
        {
            return usage("SNR targets must be finite".into());
        }
        if self.eval_denoise.trials == 0 {
            return usage("eval_denoise.trials must be positive".into());
        }
        self.denoise.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for (lang, path) in &self.textprep.profiles {
            if !path.is_file() {
                return usage(format!("profile for '{lang}' not found: {}", path.display()));
            }
        }
        self.cbow_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.wesma.noise.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.wesma.layers == 0 || !(self.wesma.lambda >= 0.0 && self.wesma.lambda.is_finite()) {
            return usage("wesma needs layers >= 1 and a finite lambda >= 0".into());
        }
        let f = &self.wesma.fusion;
        if f.enabled {
            if f.projections == 0 || f.levels == 0 || !(f.weight > 0.0 && f.weight.is_finite()) {
                return usage("fusion needs projections, levels and weight > 0".into());
            }
            if f.signal_length < 4 || !f.signal_length.is_power_of_two() || (1usize << f.levels) > f.signal_length
            {
                return usage("fusion signal_length must be a power of two >= max(4, 2^levels)".into());
            }
            crate::wavelet::WaveletFilter::by_name(&f.filter).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(g) = &self.wesma.grid {
            if g.lambda.is_empty() || g.layers.is_empty() {
                return usage("grid axes must be nonempty".into());
            }
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stage as u64);
        rng.next_u64()
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            languages: self.datagen.languages.clone(),
            doc_length: self.datagen.doc_length,
            typo_rate: self.datagen.typo_rate,
            threat_rate: self.datagen.threat_rate,
            seed: self.stage_seed(Stage::Corpus),
        }
    }

    pub fn prep_config(&self) -> PrepConfig {
        PrepConfig {
            min_count: self.textprep.min_count,
            weighting: self.textprep.weighting,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            ratios: self.eval.ratios,
            seed: self.stage_seed(Stage::Split),
        }
    }

    pub fn cbow_config(&self) -> CbowConfig {
        let c = &self.cbow;
        CbowConfig {
            dim: c.dim,
            window: c.window,
            negatives: c.negatives,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            seed: self.stage_seed(Stage::Cbow),
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        let f = &self.wesma.fusion;
        FusionConfig {
            enabled: f.enabled,
            projections: f.projections,
            signal_length: f.signal_length,
            filter: f.filter.clone(),
            levels: f.levels,
            seed: self.stage_seed(Stage::Fusion),
            weight: f.weight,
        }
    }

    pub fn wesma_config(&self) -> WesmaConfig {
        WesmaConfig {
            layers: self.wesma.layers,
            lambda: self.wesma.lambda,
            repr_mode: self.wesma.repr_mode,
            noise: self.wesma.noise.clone(),
            fit_on: self.wesma.fit_on,
        }
    }

    pub fn profile_overrides(&self) -> Result<BTreeMap<String, LanguageProfile>, CliError> {
        self.textprep
            .profiles
            .iter()
            .map(|(lang, path)| {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read profile {}: {e}", path.display())))?;
                let profile = LanguageProfile::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
                if &profile.lang != lang {
                    return Err(CliError::Usage(format!(
                        "profile {} is for '{}', configured for '{lang}'",
                        path.display(),
                        profile.lang
                    )));
                }
                Ok((lang.clone(), profile))
            })
            .collect()
    }
}
