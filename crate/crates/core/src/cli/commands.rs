use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Stage;
use super::io::{self, PreparedDoc, ScoreRow};
use super::svg::{Plot, Series};
use super::{CliError, Context, CorpusArgs, DenoiseArgs, SignalArgs};
use crate::datagen::{self, NoiseSpec, SignalKind};
use crate::denoise::{self, Snr};
use crate::embed::{self, EmbeddingMatrix};
use crate::evalkit::{ConfusionCounts, CurvePoint, MetricsReport, Split};
use crate::pipeline::{self, FeatureSpace, FusionConfig, Prepared};
use crate::textprep::{self, Label, Vocabulary, Weighting};
use crate::wavelet::{self, WaveletFilter};
use crate::wesma::{FusionScaler, WesmaModel};

const CORPUS: &str = "corpus.jsonl";
const PREPARED: &str = "prepared.jsonl";
const VOCAB: &str = "vocab.json";
const SPLIT: &str = "split.json";
const EMBEDDINGS: &str = "embeddings.csv";
const EMBEDDING_LOSS: &str = "embedding_loss.csv";
const FEATURES: &str = "features.json";
const MODEL: &str = "wesma_model.json";
const GRID: &str = "grid.csv";
const SCORES: &str = "scores.csv";
const METRICS: &str = "metrics.json";
const ROC: &str = "roc.csv";
const PR: &str = "pr.csv";

fn signal_path(ctx: &Context, kind: &str, variant: &str) -> PathBuf {
    ctx.path(&format!("signals/{kind}_{variant}.csv"))
}

fn kinds(ctx: &Context) -> Result<Vec<SignalKind>, CliError> {
    ctx.config
        .datagen
        .signals
        .iter()
        .map(|s| s.parse::<SignalKind>().map_err(CliError::from))
        .collect()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    io::atomic_write(path, contents.as_ref())
}

pub fn gen_data(ctx: &Context) -> Result<String, CliError> {
    let docs = datagen::gen_corpus(&ctx.config.corpus_spec())?;
    write(&ctx.path(CORPUS), textprep::to_jsonl(&docs)?)?;
    let d = &ctx.config.datagen;
    let base = ctx.config.stage_seed(Stage::Signals);
    let kinds = kinds(ctx)?;
    for (k, kind) in kinds.iter().enumerate() {
        let clean = datagen::gen_signal(*kind, d.signal_length, base)?;
        let (noisy, _) = datagen::add_awgn(&clean, &NoiseSpec::snr_db(d.signal_snr_db, base.wrapping_add(k as u64)))?;
        write(&signal_path(ctx, kind.name(), "clean"), io::signal_to_csv(clean.as_slice()))?;
        write(&signal_path(ctx, kind.name(), "noisy"), io::signal_to_csv(noisy.as_slice()))?;
    }
    let threats = docs.iter().filter(|d| d.label == Some(Label::Threat)).count();
    Ok(format!(
        "gen-data: {} documents ({threats} threat), {} signals of length {} -> {}",
        docs.len(),
        kinds.len(),
        d.signal_length,
        ctx.out.display()
    ))
}

fn input_signal(ctx: &Context, args: &SignalArgs) -> PathBuf {
    args.input.clone().unwrap_or_else(|| signal_path(ctx, "blocks", "noisy"))
}

pub fn decompose(ctx: &Context, args: &SignalArgs) -> Result<String, CliError> {
    let path = input_signal(ctx, args);
    let x = io::read_signal(&path)?;
    let cfg = &ctx.config.denoise;
    let filter = WaveletFilter::by_name(&cfg.filter_name)?;
    let dec = wavelet::uwt_forward(&x, &filter, cfg.levels)?;
    let out = ctx.path("decomposition.csv");
    write(&out, io::decomposition_to_csv(&dec))?;
    Ok(format!(
        "decompose: {} samples, {} levels ({}), {} coefficients -> {}",
        x.len(),
        dec.levels(),
        filter.name,
        dec.coefficient_count(),
        out.display()
    ))
}

pub fn denoise(ctx: &Context, args: &DenoiseArgs) -> Result<String, CliError> {
    let noisy = io::read_signal(&input_signal(ctx, &args.signal))?;
    let (denoised, mut report) = denoise::denoise(&noisy, &ctx.config.denoise)?;
    write(&ctx.path("denoised.csv"), io::signal_to_csv(denoised.as_slice()))?;
    if let Some(reference) = &args.reference {
        let clean = io::read_signal(reference)?;
        report = report.with_reference(&clean, &noisy, &denoised)?;
        write(
            &ctx.path("denoise_triples.csv"),
            io::columns_to_csv(
                &["clean", "noisy", "denoised"],
                &[clean.as_slice(), noisy.as_slice(), denoised.as_slice()],
            ),
        )?;
    }
    let json = io::to_json(&report);
    write(&ctx.path("denoise_report.json"), &json)?;
    Ok(format!("denoise: {}", serde_json::to_string(&report).expect("serializable report")))
}

fn finite_snr(s: Snr) -> Result<f64, CliError> {
    s.finite()
        .ok_or_else(|| CliError::Numeric("SNR is infinite (estimate equals reference)".into()))
}

pub fn eval_denoise(ctx: &Context) -> Result<String, CliError> {
    let e = &ctx.config.eval_denoise;
    let cfg = &ctx.config.denoise;
    let kinds = kinds(ctx)?;
    let base = ctx.config.stage_seed(Stage::EvalDenoise);
    let mut out = String::from("language,signal,initial_snr_db,improved_snr_db,improvement_db\n");
    let mut improvements = Vec::new();
    for (li, (lang, &target)) in e.initial_snr_db.iter().enumerate() {
        let (mut lang_in, mut lang_out) = (0.0, 0.0);
        for (ki, kind) in kinds.iter().enumerate() {
            let clean = datagen::gen_signal(*kind, e.signal_length, base)?;
            let (mut sum_in, mut sum_out) = (0.0, 0.0);
            for t in 0..e.trials {
                let seed = base.wrapping_add(((li * kinds.len() + ki) * e.trials + t) as u64);
                let (noisy, _) = datagen::add_awgn(&clean, &NoiseSpec::snr_db(target, seed))?;
                let (denoised, _) = denoise::denoise(&noisy, cfg)?;
                sum_in += finite_snr(denoise::snr_db(&clean, &noisy)?)?;
                sum_out += finite_snr(denoise::snr_db(&clean, &denoised)?)?;
            }
            let (si, so) = (sum_in / e.trials as f64, sum_out / e.trials as f64);
            let _ = writeln!(out, "{lang},{},{si},{so},{}", kind.name(), so - si);
            improvements.push(so - si);
            lang_in += si;
            lang_out += so;
        }
        let n = kinds.len().max(1) as f64;
        let _ = writeln!(out, "{lang},all,{},{},{}", lang_in / n, lang_out / n, (lang_out - lang_in) / n);
    }
    write(&ctx.path("eval_denoise.csv"), &out)?;
    let mean = improvements.iter().sum::<f64>() / improvements.len().max(1) as f64;
    Ok(format!(
        "eval-denoise: {} rows, mean improvement {mean:.2} dB -> {}",
        improvements.len(),
        ctx.path("eval_denoise.csv").display()
    ))
}

pub fn prep(ctx: &Context, args: &CorpusArgs) -> Result<String, CliError> {
    let path = args.corpus.clone().unwrap_or_else(|| ctx.path(CORPUS));
    let docs = textprep::parse_jsonl(&io::read_text(&path)?)?;
    let profiles = pipeline::profiles_for(&docs, &ctx.config.profile_overrides()?);
    let prepared = pipeline::prepare(&docs, &profiles, &ctx.config.prep_config(), &ctx.config.split_config())?;
    let rows: Vec<PreparedDoc> = docs
        .iter()
        .zip(&prepared.tokens)
        .map(|(d, t)| PreparedDoc {
            id: d.id.clone(),
            lang: d.lang.clone(),
            label: d.label,
            tokens: t.clone(),
        })
        .collect();
    write(&ctx.path(PREPARED), io::prepared_to_jsonl(&rows))?;
    write(&ctx.path(VOCAB), io::to_json(&prepared.vocab))?;
    write(&ctx.path(SPLIT), io::to_json(&prepared.split))?;
    Ok(format!(
        "prep: {} documents, vocabulary {}, split {}/{}/{}",
        rows.len(),
        prepared.vocab.len(),
        prepared.split.train.len(),
        prepared.split.val.len(),
        prepared.split.test.len()
    ))
}

fn load_prepared(ctx: &Context) -> Result<(Prepared, Vec<String>), CliError> {
    let docs = io::parse_prepared_jsonl(&io::read_text(&ctx.path(PREPARED))?)?;
    let vocab: Vocabulary = io::read_json(&ctx.path(VOCAB))?;
    let split: Split = io::read_json(&ctx.path(SPLIT))?;
    let n = docs.len();
    if split.train.iter().chain(&split.val).chain(&split.test).any(|&i| i >= n) {
        return Err(CliError::Data(format!("split indices exceed {n} documents")));
    }
    let langs = docs.iter().map(|d| d.lang.clone()).collect();
    let prepared = Prepared {
        ids: docs.iter().map(|d| d.id.clone()).collect(),
        labels: docs.iter().map(|d| d.label).collect(),
        tokens: docs.into_iter().map(|d| d.tokens).collect(),
        split,
        vocab,
    };
    Ok((prepared, langs))
}

pub fn train_embeddings(ctx: &Context) -> Result<String, CliError> {
    let (prepared, _) = load_prepared(ctx)?;
    let training = embed::train_cbow(&prepared.train_tokens(), &prepared.vocab, &ctx.config.cbow_config())?;
    write(&ctx.path(EMBEDDINGS), training.embeddings.to_csv(&prepared.vocab)?)?;
    let mut losses = String::from("epoch,loss\n");
    for (i, l) in training.epoch_losses.iter().enumerate() {
        let _ = writeln!(losses, "{},{l}", i + 1);
    }
    write(&ctx.path(EMBEDDING_LOSS), &losses)?;
    Ok(format!(
        "train-embeddings: {} x {} embeddings, final epoch loss {:.4}",
        training.embeddings.vocab_size(),
        training.embeddings.dim(),
        training.epoch_losses.last().copied().unwrap_or(f64::NAN)
    ))
}

fn load_embeddings(ctx: &Context, vocab: &Vocabulary) -> Result<EmbeddingMatrix, CliError> {
    let (tokens, emb) = EmbeddingMatrix::from_csv(&io::read_text(&ctx.path(EMBEDDINGS))?)?;
    if tokens != vocab.tokens() {
        return Err(CliError::Data("embedding tokens do not match the vocabulary".into()));
    }
    Ok(emb)
}

/// Persisted feature space: how documents become fused vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureFile {
    weighting: Weighting,
    fusion: FusionConfig,
    scaler: Option<FusionScaler>,
}

impl From<&FeatureSpace> for FeatureFile {
    fn from(s: &FeatureSpace) -> Self {
        FeatureFile {
            weighting: s.weighting,
            fusion: s.fusion.clone(),
            scaler: s.scaler.clone(),
        }
    }
}

impl From<FeatureFile> for FeatureSpace {
    fn from(f: FeatureFile) -> Self {
        FeatureSpace {
            weighting: f.weighting,
            fusion: f.fusion,
            scaler: f.scaler,
        }
    }
}

pub fn train_wesma(ctx: &Context) -> Result<String, CliError> {
    let (prepared, _) = load_prepared(ctx)?;
    let emb = load_embeddings(ctx, &prepared.vocab)?;
    let space = FeatureSpace::fit(&prepared, &emb, ctx.config.textprep.weighting, &ctx.config.fusion_config())?;
    let mut cfg = ctx.config.wesma_config();
    let mut grid_note = String::new();
    if let Some(grid) = &ctx.config.wesma.grid {
        let (best, table) = pipeline::grid_search_wesma(&prepared, &emb, &space, &cfg, grid)?;
        write(&ctx.path(GRID), table.to_csv())?;
        grid_note = format!(
            ", grid best lambda {} layers {} (validation AUC {:.4})",
            best.lambda, best.layers, table.best_objective
        );
        cfg = best;
    }
    let model = pipeline::fit_wesma(&prepared, &emb, &space, &cfg)?;
    write(&ctx.path(FEATURES), io::to_json(&FeatureFile::from(&space)))?;
    let mut json = model.to_json()?;
    json.push('\n');
    write(&ctx.path(MODEL), json)?;
    Ok(format!(
        "train-wesma: {} layers over {} features (lambda {}){grid_note}",
        model.layers.len(),
        model.features(),
        cfg.lambda
    ))
}

fn split_name(split: &Split, n: usize) -> Vec<&'static str> {
    let mut names = vec![""; n];
    for (set, name) in [(&split.train, "train"), (&split.val, "val"), (&split.test, "test")] {
        for &i in set {
            names[i] = name;
        }
    }
    names
}

pub fn score(ctx: &Context) -> Result<String, CliError> {
    let (prepared, langs) = load_prepared(ctx)?;
    let emb = load_embeddings(ctx, &prepared.vocab)?;
    let space: FeatureSpace = io::read_json::<FeatureFile>(&ctx.path(FEATURES))?.into();
    let model = WesmaModel::from_json(&io::read_text(&ctx.path(MODEL))?)?;
    let scores = pipeline::score_all(&prepared, &emb, &space, &model)?;
    let names = split_name(&prepared.split, scores.len());
    let rows: Vec<ScoreRow> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoreRow {
            id: prepared.ids[i].clone(),
            lang: langs[i].clone(),
            split: names[i].to_string(),
            label: prepared.labels[i].map_or("", Label::as_str).to_string(),
            score: s,
        })
        .collect();
    write(&ctx.path(SCORES), io::scores_to_csv(&rows)?)?;
    Ok(format!("score: {} documents -> {}", rows.len(), ctx.path(SCORES).display()))
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    threshold: f64,
    validation_auc: f64,
    test: MetricsReport,
    test_counts: ConfusionCounts,
    per_language: Vec<LanguageMetrics>,
}

#[derive(Debug, Serialize)]
struct LanguageMetrics {
    lang: String,
    counts: ConfusionCounts,
    auc: Option<f64>,
}

fn parse_label(s: &str) -> Result<Label, CliError> {
    match s {
        "legit" => Ok(Label::Legit),
        "threat" => Ok(Label::Threat),
        other => Err(CliError::Data(format!("row without a valid label: '{other}'"))),
    }
}

type SplitRows = (Vec<f64>, Vec<Label>, Vec<String>);

pub fn evaluate(ctx: &Context) -> Result<String, CliError> {
    let rows = io::parse_scores_csv(&io::read_text(&ctx.path(SCORES))?)?;
    let collect = |split: &str| -> Result<SplitRows, CliError> {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for r in rows.iter().filter(|r| r.split == split) {
            out.0.push(r.score);
            out.1.push(parse_label(&r.label)?);
            out.2.push(r.lang.clone());
        }
        Ok(out)
    };
    let (vs, vl, _) = collect("val")?;
    let (ts, tl, tlang) = collect("test")?;
    let eval = pipeline::evaluate_scores(&vs, &vl, &ts, &tl)?;
    let mut langs: Vec<&String> = tlang.iter().collect();
    langs.sort();
    langs.dedup();
    let per_language = langs
        .into_iter()
        .map(|lang| {
            let idx: Vec<usize> = (0..ts.len()).filter(|&i| &tlang[i] == lang).collect();
            let s: Vec<f64> = idx.iter().map(|&i| ts[i]).collect();
            let l: Vec<Label> = idx.iter().map(|&i| tl[i]).collect();
            Ok(LanguageMetrics {
                lang: lang.clone(),
                counts: crate::evalkit::confusion(&s, &l, eval.threshold)?,
                auc: crate::evalkit::roc_auc(&s, &l).ok(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let file = MetricsFile {
        threshold: eval.threshold,
        validation_auc: eval.validation_auc,
        test: eval.test,
        test_counts: eval.test_counts,
        per_language,
    };
    write(&ctx.path(METRICS), io::to_json(&file))?;
    write(&ctx.path(ROC), io::curve_to_csv(&eval.roc))?;
    write(&ctx.path(PR), io::curve_to_csv(&eval.pr))?;
    let m = &eval.test;
    Ok(format!(
        "evaluate: test AUC {:.4} F1 {:.4} precision {:.4} recall {:.4} FPR {:.4} at threshold {}",
        m.auc, m.f1, m.precision, m.recall, m.fpr, eval.threshold
    ))
}

fn curve_series(points: &[CurvePoint]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

pub fn report(ctx: &Context) -> Result<String, CliError> {
    let mut written = Vec::new();
    let roc = io::parse_curve_csv(&io::read_text(&ctx.path(ROC))?)?;
    let pr = io::parse_curve_csv(&io::read_text(&ctx.path(PR))?)?;
    let unit = Some((0.0, 1.0));
    let roc_svg = Plot { title: "ROC (test split)", x_label: "false positive rate", y_label: "true positive rate", x_range: unit, y_range: unit }
        .render(&[
            Series { name: "model", points: curve_series(&roc) },
            Series { name: "chance", points: vec![(0.0, 0.0), (1.0, 1.0)] },
        ]);
    write(&ctx.path("roc.svg"), roc_svg)?;
    let pr_svg = Plot { title: "Precision-recall (test split)", x_label: "recall", y_label: "precision", x_range: unit, y_range: unit }
        .render(&[Series { name: "model", points: curve_series(&pr) }]);
    write(&ctx.path("pr.svg"), pr_svg)?;
    written.extend(["roc.svg", "pr.svg"].map(String::from));

    for kind in kinds(ctx)? {
        let clean = io::read_signal(&signal_path(ctx, kind.name(), "clean"))?;
        let noisy = io::read_signal(&signal_path(ctx, kind.name(), "noisy"))?;
        let (denoised, _) = denoise::denoise(&noisy, &ctx.config.denoise)?;
        let index: Vec<f64> = (0..clean.len()).map(|i| i as f64).collect();
        let csv_name = format!("waveform_{}.csv", kind.name());
        write(
            &ctx.path(&csv_name),
            io::columns_to_csv(
                &["index", "clean", "noisy", "denoised"],
                &[&index, clean.as_slice(), noisy.as_slice(), denoised.as_slice()],
            ),
        )?;
        let pts = |s: &[f64]| s.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        let title = format!("{} waveform", kind.name());
        let svg = Plot { title: &title, x_label: "sample", y_label: "amplitude", x_range: None, y_range: None }
            .render(&[
                Series { name: "noisy", points: pts(noisy.as_slice()) },
                Series { name: "denoised", points: pts(denoised.as_slice()) },
                Series { name: "clean", points: pts(clean.as_slice()) },
            ]);
        let svg_name = format!("waveform_{}.svg", kind.name());
        write(&ctx.path(&svg_name), svg)?;
        written.push(csv_name);
        written.push(svg_name);
    }
    Ok(format!("report: {} files -> {}", written.len(), ctx.out.display()))
}
