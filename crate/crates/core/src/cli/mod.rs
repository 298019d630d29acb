//! Command-line front end.
//!
//! Every command reads its inputs from and writes its outputs to one output
//! directory, chosen by `--out`, else the `WESMA_OUT_DIR` environment
//! variable, else the config's `out_dir`. All files are written atomically.

mod commands;
pub mod config;
pub mod io;
pub mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::datagen::DataGenError;
use crate::denoise::DenoiseError;
use crate::embed::EmbedError;
use crate::evalkit::EvalError;
use crate::pipeline::PipelineError;
use crate::textprep::TextError;
use crate::wavelet::WaveletError;
use crate::wesma::WesmaError;
pub use config::{RunConfig, OUT_DIR_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<WaveletError> for CliError {
    fn from(e: WaveletError) -> Self {
        match e {
            WaveletError::UnknownFilter(_) | WaveletError::TooManyLevels(_) | WaveletError::BadDilation(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DenoiseError> for CliError {
    fn from(e: DenoiseError) -> Self {
        match e {
            DenoiseError::Wavelet(w) => w.into(),
            DenoiseError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataGenError> for CliError {
    fn from(e: DataGenError) -> Self {
        match e {
            DataGenError::ZeroSignal => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::InvalidProfile(_) | TextError::UnknownLanguage(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            EmbedError::UndefinedSimilarity => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<WesmaError> for CliError {
    fn from(e: WesmaError) -> Self {
        match e {
            WesmaError::RegularizationRequired | WesmaError::Singular(_) | WesmaError::Residual(_) => {
                CliError::Numeric(e.to_string())
            }
            WesmaError::SeedOutOfVocabulary(_) | WesmaError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::SingleClass | EvalError::AllCellsFailed => CliError::Numeric(e.to_string()),
            EvalError::BadRatios(_) | EvalError::EmptyGrid => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Text(e) => e.into(),
            PipelineError::Embed(e) => e.into(),
            PipelineError::Wesma(e) => e.into(),
            PipelineError::Wavelet(e) => e.into(),
            PipelineError::Eval(e) => e.into(),
            PipelineError::MissingLabel(_) => CliError::Data(e.to_string()),
            PipelineError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

/// Wavelet denoising and semantic autoencoder anomaly scoring.
#[derive(Debug, Parser)]
#[command(name = "wesma", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding WESMA_OUT_DIR and the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled corpus and clean/noisy test signals.
    GenData,
    /// Write the undecimated wavelet decomposition of a signal.
    Decompose(SignalArgs),
    /// Denoise a signal by wavelet shrinkage.
    Denoise(DenoiseArgs),
    /// Tabulate SNR before and after denoising per language and signal.
    EvalDenoise,
    /// Preprocess the corpus, split it and build the vocabulary.
    Prep(CorpusArgs),
    /// Train CBOW embeddings on the training split.
    TrainEmbeddings,
    /// Fit the stacked marginalized denoising autoencoder.
    TrainWesma,
    /// Score every document by reconstruction error.
    Score,
    /// Choose a threshold on validation, report test metrics and curves.
    Evaluate,
    /// Render SVG plots of curves and denoised waveforms.
    Report,
}

#[derive(Debug, Args)]
pub struct SignalArgs {
    /// Signal CSV; defaults to signals/blocks_noisy.csv in the output directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub signal: SignalArgs,
    /// Clean reference signal CSV; enables SNR fields and the triples CSV.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus JSONL; defaults to corpus.jsonl in the output directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

/// Resolved configuration and output directory for one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn resolve(args: &GlobalArgs, env_out: Option<PathBuf>) -> Result<Self, CliError> {
        let mut config = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        let out = args.out.clone().or(env_out).unwrap_or_else(|| config.out_dir.clone());
        Ok(Context { config, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run_command(cli: &Cli) -> Result<String, CliError> {
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let ctx = Context::resolve(&cli.global, env_out)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Decompose(a) => commands::decompose(&ctx, a),
        Command::Denoise(a) => commands::denoise(&ctx, a),
        Command::EvalDenoise => commands::eval_denoise(&ctx),
        Command::Prep(a) => commands::prep(&ctx, a),
        Command::TrainEmbeddings => commands::train_embeddings(&ctx),
        Command::TrainWesma => commands::train_wesma(&ctx),
        Command::Score => commands::score(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

/// Parses `args`, runs the command, prints its summary line and maps
/// failures to exit codes: 1 usage/config, 2 data/format, 3 numeric.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run_command(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
