mod common;

use std::fs;
use std::path::Path;

use common::cli::{command, data_dir, full_pipeline, run, run_ok, snapshot};
use wesma::cli::RunConfig;
use wesma::pipeline::{self, PipelineConfig};
use wesma::textprep::parse_jsonl;

const SUBCOMMANDS: [&str; 10] = [
    "gen-data",
    "decompose",
    "denoise",
    "eval-denoise",
    "prep",
    "train-embeddings",
    "train-wesma",
    "score",
    "evaluate",
    "report",
];

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let o = run(dir.path(), None, &[sub, "--help"]);
        assert!(o.status.success(), "{sub} --help");
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("--out") && text.contains("--config") && text.contains("--seed"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), None, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), None, &["gen-data", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), None, &["gen-data", "--seed", "x"]).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(dir.path(), Some(&missing), &["gen-data"]).status.code(), Some(1));
    let unknown = write_config(dir.path(), r#"{"wesma": {"lamda": 1.0}}"#);
    let o = run(dir.path(), Some(&unknown), &["gen-data"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    let bad_profile = write_config(dir.path(), r#"{"textprep": {"profiles": {"en": "nope.json"}}}"#);
    assert_eq!(run(dir.path(), Some(&bad_profile), &["prep"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), None, &["prep"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), None, &["score"]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1.0\nnot-a-number\n").unwrap();
    let o = run(dir.path(), None, &["decompose", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let corpus = dir.path().join("c.jsonl");
    fs::write(&corpus, "{\"id\": \"a\", \"lang\": \"en\"}\n").unwrap();
    assert_eq!(run(dir.path(), None, &["prep", "--corpus", corpus.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn undefined_auc_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"datagen": {"threat_rate": 0.0, "languages": [{"lang": "en", "vocab_size": 40, "doc_count": 60}]}}"#,
    );
    for step in ["gen-data", "prep", "train-embeddings", "train-wesma", "score"] {
        run_ok(dir.path(), Some(&cfg), &[step]);
    }
    let o = run(dir.path(), Some(&cfg), &["evaluate"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unregularized_singular_layer_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // a feature seen only in threat documents has zero scatter once the
    // model is fitted on legit documents
    let corpus = dir.path().join("c.jsonl");
    let mut lines = String::new();
    for i in 0..30 {
        let (text, label) = if i % 5 == 0 { ("zebra quartz zebra", "threat") } else { ("apple pear apple plum", "legit") };
        lines.push_str(&format!("{{\"id\":\"d{i}\",\"lang\":\"en\",\"text\":\"{text}\",\"label\":\"{label}\"}}\n"));
    }
    fs::write(&corpus, lines).unwrap();
    let cfg = write_config(dir.path(), r#"{"textprep": {"min_count": 1}, "wesma": {"lambda": 0.0, "fusion": {"enabled": false}}}"#);
    run_ok(dir.path(), Some(&cfg), &["prep", "--corpus", corpus.to_str().unwrap()]);
    run_ok(dir.path(), Some(&cfg), &["train-embeddings"]);
    let o = run(dir.path(), Some(&cfg), &["train-wesma"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("regularization required"));
}

#[test]
fn zero_manual_threshold_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"denoise": {"filter_name": "db2", "levels": 4, "threshold_mode": {"kind": "manual", "value": 0.0}}}"#);
    run_ok(dir.path(), Some(&cfg), &["gen-data"]);
    run_ok(dir.path(), Some(&cfg), &["denoise"]);
    let input = fs::read_to_string(dir.path().join("signals/blocks_noisy.csv")).unwrap();
    let output = fs::read_to_string(dir.path().join("denoised.csv")).unwrap();
    let parse = |s: &str| s.lines().map(|l| l.parse::<f64>().unwrap()).collect::<Vec<_>>();
    let (a, b) = (parse(&input), parse(&output));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
}

#[test]
fn bundled_corpus_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_dir().join("sample_config.json");
    let corpus = data_dir().join("sample_corpus.jsonl");
    run_ok(dir.path(), Some(&cfg), &["prep", "--corpus", corpus.to_str().unwrap()]);
    for step in ["train-embeddings", "train-wesma", "score", "evaluate"] {
        run_ok(dir.path(), Some(&cfg), &[step]);
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let auc = metrics["test"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(metrics["per_language"].as_array().unwrap().len(), 4);
    let roc = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(roc.starts_with("x,y,threshold\n"));
}

#[test]
fn bundled_corpus_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), Some(&data_dir().join("sample_config.json")), &["gen-data"]);
    assert_eq!(
        fs::read(dir.path().join("corpus.jsonl")).unwrap(),
        fs::read(data_dir().join("sample_corpus.jsonl")).unwrap()
    );
}

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = data_dir().join("sample_config.json");
    let summaries = full_pipeline(a.path(), Some(&cfg));
    assert_eq!(summaries.len(), SUBCOMMANDS.len());
    full_pipeline(b.path(), Some(&cfg));
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(&sb[name] == bytes, "{} differs", name.display());
    }
    for expected in ["metrics.json", "roc.csv", "pr.csv", "roc.svg", "eval_denoise.csv", "waveform_blocks.svg"] {
        assert!(sa.contains_key(Path::new(expected)), "{expected} missing");
    }
    assert!(sa.keys().all(|k| !k.to_string_lossy().contains(".tmp-")));
}

#[test]
fn seed_flag_changes_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(a.path(), None, &["gen-data", "--seed", "1"]);
    run_ok(b.path(), None, &["gen-data", "--seed", "2"]);
    assert_ne!(
        fs::read(a.path().join("corpus.jsonl")).unwrap(),
        fs::read(b.path().join("corpus.jsonl")).unwrap()
    );
}

#[test]
fn output_directory_precedence() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let mut cmd = command(flag_dir.path(), None, &["gen-data"]);
    cmd.env("WESMA_OUT_DIR", env_dir.path());
    assert!(cmd.output().unwrap().status.success());
    assert!(flag_dir.path().join("corpus.jsonl").is_file());
    assert!(!env_dir.path().join("corpus.jsonl").exists());

    let mut env_only = std::process::Command::new(env!("CARGO_BIN_EXE_wesma"));
    env_only.env("WESMA_OUT_DIR", env_dir.path()).arg("gen-data");
    assert!(env_only.output().unwrap().status.success());
    assert!(env_dir.path().join("corpus.jsonl").is_file());
}

#[test]
fn cli_scores_match_in_memory_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = data_dir().join("sample_config.json");
    for step in ["gen-data", "prep", "train-embeddings", "train-wesma", "score"] {
        run_ok(dir.path(), Some(&cfg_path), &[step]);
    }
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let pc = PipelineConfig {
        prep: cfg.prep_config(),
        split: cfg.split_config(),
        cbow: cfg.cbow_config(),
        fusion: cfg.fusion_config(),
        wesma: cfg.wesma_config(),
    };
    let docs = parse_jsonl(&fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap()).unwrap();
    let run = pipeline::run(&docs, &pc).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("scores.csv")).unwrap();
    let scores: Vec<f64> = rdr.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(scores, run.scores);
}

#[test]
fn grid_search_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &fs::read_to_string(data_dir().join("sample_config.json"))
            .unwrap()
            .replacen("\"cbow\"", "\"wesma\": {\"grid\": {\"lambda\": [0.01, 1.0], \"layers\": [1, 2]}},\n  \"cbow\"", 1),
    );
    for step in ["gen-data", "prep", "train-embeddings"] {
        run_ok(dir.path(), Some(&cfg), &[step]);
    }
    let summary = run_ok(dir.path(), Some(&cfg), &["train-wesma"]);
    assert!(summary.contains("grid best"), "{summary}");
    let table = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "lambda,layers,objective");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.01,1,"));
}

#[test]
fn decompose_writes_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("s.csv");
    fs::write(&sig, "1\n2\n3\n4\n5\n6\n7\n8\n").unwrap();
    let cfg = write_config(dir.path(), r#"{"denoise": {"filter_name": "haar", "levels": 2}}"#);
    let summary = run_ok(dir.path(), Some(&cfg), &["decompose", "--input", sig.to_str().unwrap()]);
    assert!(summary.contains("24 coefficients"), "{summary}");
    let csv = fs::read_to_string(dir.path().join("decomposition.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24);
    assert_eq!(csv.lines().filter(|l| l.starts_with("approx,")).count(), 8);
}
