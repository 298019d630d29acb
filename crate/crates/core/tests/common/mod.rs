#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wesma::embed::{example_gradient, example_loss, EmbeddingMatrix};
use wesma::evalkit::{curve_points, roc_auc, trapezoid_area, CurveKind};
use wesma::textprep::Label;
use wesma::wavelet::Signal;
use wesma::wesma::{fit_mda_layer, marginalized_moments, CorruptionProfile};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Signal {
    Signal::new((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

/// Max relative error between the analytic CBOW gradient and central finite
/// differences at one random parameter point.
pub fn cbow_gradient_check(seed: u64, eps: f64) -> f64 {
    let mut r = rng(seed);
    let (v, d) = (9, 6);
    let mut emb = EmbeddingMatrix::from_input_rows(
        (0..v).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect(),
    )
    .unwrap();
    for w in 0..v {
        for x in emb.output_vector_mut(w) {
            *x = r.random_range(-1.0..1.0);
        }
    }
    let context: Vec<usize> = (0..4).map(|_| r.random_range(0..v)).collect();
    let center = r.random_range(0..v);
    let negatives: Vec<usize> = (0..5).map(|_| r.random_range(0..v)).collect();

    let g = example_gradient(&emb, &context, center, &negatives);
    let mut analytic_in = vec![vec![0.0; d]; v];
    for &c in &context {
        for (a, g) in analytic_in[c].iter_mut().zip(&g.context_grad) {
            *a += g / context.len() as f64;
        }
    }
    let mut analytic_out = vec![vec![0.0; d]; v];
    for (w, grad) in &g.output_grads {
        for k in 0..d {
            analytic_out[*w][k] += grad[k];
        }
    }
    let loss = |e: &EmbeddingMatrix| example_loss(e, &context, center, &negatives);
    assert!((loss(&emb) - g.loss).abs() < 1e-12);

    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
    let mut worst = 0.0f64;
    for w in 0..v {
        for k in 0..d {
            let orig = emb.input_vector(w)[k];
            emb.input_vector_mut(w)[k] = orig + eps;
            let up = loss(&emb);
            emb.input_vector_mut(w)[k] = orig - eps;
            let down = loss(&emb);
            emb.input_vector_mut(w)[k] = orig;
            worst = worst.max(rel(analytic_in[w][k], (up - down) / (2.0 * eps)));

            let orig = emb.output_vector(w)[k];
            emb.output_vector_mut(w)[k] = orig + eps;
            let up = loss(&emb);
            emb.output_vector_mut(w)[k] = orig - eps;
            let down = loss(&emb);
            emb.output_vector_mut(w)[k] = orig;
            worst = worst.max(rel(analytic_out[w][k], (up - down) / (2.0 * eps)));
        }
    }
    worst
}

pub fn positive_matrix(seed: u64, d: usize, n: usize) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((d, n), |_| r.random_range(0.5..2.0))
}

pub fn gaussian_matrix(seed: u64, d: usize, n: usize) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((d, n), |_| r.sample::<f64, _>(StandardNormal))
}

/// Corrupts each feature (never the bias) independently, keeping it with its
/// profile probability; returns the bias-augmented corrupted column.
fn corrupt_column(x: &Array2<f64>, col: usize, keep: &[f64], r: &mut ChaCha8Rng, out: &mut [f64]) {
    let d = x.nrows();
    for i in 0..d {
        out[i] = if r.random::<f64>() < keep[i] { x[[i, col]] } else { 0.0 };
    }
    out[d] = 1.0;
}

/// Max entrywise relative error of the closed-form moments against averages
/// over `trials` explicit corruptions of the whole data matrix.
pub fn moments_monte_carlo(x: &Array2<f64>, profile: &CorruptionProfile, trials: usize, seed: u64) -> f64 {
    let (d, n) = x.dim();
    let (p, q) = marginalized_moments(x, profile).unwrap();
    let mut r = rng(seed);
    let mut q_mc = Array2::<f64>::zeros((d + 1, d + 1));
    let mut p_mc = Array2::<f64>::zeros((d, d + 1));
    let mut xt = vec![0.0; d + 1];
    for _ in 0..trials {
        for col in 0..n {
            corrupt_column(x, col, profile.keep(), &mut r, &mut xt);
            for i in 0..=d {
                for j in 0..=d {
                    q_mc[[i, j]] += xt[i] * xt[j];
                }
            }
            for i in 0..d {
                for j in 0..=d {
                    p_mc[[i, j]] += x[[i, col]] * xt[j];
                }
            }
        }
    }
    let t = trials as f64;
    let rel = |a: f64, b: f64| (a - b / t).abs() / a.abs();
    let q_err = q.iter().zip(q_mc.iter()).map(|(&a, &b)| rel(a, b)).fold(0.0, f64::max);
    let p_err = p.iter().zip(p_mc.iter()).map(|(&a, &b)| rel(a, b)).fold(0.0, f64::max);
    q_err.max(p_err)
}

/// Max abs difference between the closed-form layer and a ridge regression
/// fitted on `copies` explicitly corrupted copies of the data, with the
/// per-copy average loss so the ridge weight matches the closed form.
pub fn layer_monte_carlo(x: &Array2<f64>, profile: &CorruptionProfile, lambda: f64, copies: usize, seed: u64) -> f64 {
    let (d, n) = x.dim();
    let closed = fit_mda_layer(x, profile, lambda).unwrap();
    let mut r = rng(seed);
    let mut gram = Array2::<f64>::zeros((d + 1, d + 1));
    let mut cross = Array2::<f64>::zeros((d, d + 1));
    let mut xt = vec![0.0; d + 1];
    for _ in 0..copies {
        for col in 0..n {
            corrupt_column(x, col, profile.keep(), &mut r, &mut xt);
            for i in 0..=d {
                for j in 0..=d {
                    gram[[i, j]] += xt[i] * xt[j];
                }
            }
            for i in 0..d {
                for j in 0..=d {
                    cross[[i, j]] += x[[i, col]] * xt[j];
                }
            }
        }
    }
    let m = copies as f64;
    let mut a = gram.mapv(|v| v / m);
    for i in 0..=d {
        a[[i, i]] += lambda;
    }
    let b = cross.mapv(|v| v / m);
    // W a = b  <=>  a^T W^T = b^T; a is symmetric
    let wt = wesma::wesma::linalg::solve(&a, &b.t().to_owned()).unwrap();
    closed
        .weights
        .iter()
        .zip(wt.t().iter())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Seeded score set with ties: both classes present.
pub fn score_set(seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut r = rng(seed);
    let n = r.random_range(4..60);
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if r.random::<f64>() < 0.3 { Label::Threat } else { Label::Legit })
        .collect();
    labels[0] = Label::Threat;
    labels[1] = Label::Legit;
    // coarse grid so ties between and within classes occur
    let scores = (0..n)
        .map(|i| {
            let shift = if labels[i].is_threat() { 2.0 } else { 0.0 };
            ((r.sample::<f64, _>(StandardNormal) + shift) * 4.0).round() / 4.0
        })
        .collect();
    (scores, labels)
}

/// Max difference between the pairwise AUC and the trapezoidal ROC area.
pub fn auc_dual_max_diff(sets: u64) -> f64 {
    (0..sets)
        .map(|s| {
            let (scores, labels) = score_set(1000 + s);
            let pairwise = roc_auc(&scores, &labels).unwrap();
            let area = trapezoid_area(&curve_points(&scores, &labels, CurveKind::Roc).unwrap());
            (pairwise - area).abs()
        })
        .fold(0.0, f64::max)
}

pub mod cli {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    pub fn data_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
    }

    pub fn command(out: &Path, config: Option<&Path>, args: &[&str]) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_wesma"));
        cmd.env_remove("WESMA_OUT_DIR").arg("--out").arg(out);
        if let Some(c) = config {
            cmd.arg("--config").arg(c);
        }
        cmd.args(args);
        cmd
    }

    pub fn run(out: &Path, config: Option<&Path>, args: &[&str]) -> Output {
        command(out, config, args).output().expect("binary runs")
    }

    pub fn run_ok(out: &Path, config: Option<&Path>, args: &[&str]) -> String {
        let o = run(out, config, args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    /// Every subcommand in pipeline order; returns the summary lines.
    pub fn full_pipeline(out: &Path, config: Option<&Path>) -> Vec<String> {
        let reference = out.join("signals/blocks_clean.csv");
        let reference = reference.to_str().unwrap();
        let steps: Vec<Vec<&str>> = vec![
            vec!["gen-data"],
            vec!["decompose"],
            vec!["denoise", "--reference", reference],
            vec!["eval-denoise"],
            vec!["prep"],
            vec!["train-embeddings"],
            vec!["train-wesma"],
            vec!["score"],
            vec!["evaluate"],
            vec!["report"],
        ];
        steps.iter().map(|s| run_ok(out, config, s)).collect()
    }

    /// Relative path → contents for every file under `dir`.
    pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut files = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
                }
            }
        }
        files
    }
}
