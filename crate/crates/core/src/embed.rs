//! CBOW word embeddings trained with negative sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::Vocabulary;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no training pairs")]
    NoTrainingPairs,
    #[error("undefined similarity (zero vector)")]
    UndefinedSimilarity,
    #[error("invalid cbow config: {0}")]
    InvalidConfig(String),
    #[error("token index {0} out of range for vocabulary of size {1}")]
    IndexOutOfRange(usize, usize),
    #[error("embedding csv: {0}")]
    Csv(String),
}

/// Input ("context") and output ("center") vectors, row-major `V x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vocab_size: usize,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            vocab_size,
            dim,
            input: vec![0.0; vocab_size * dim],
            output: vec![0.0; vocab_size * dim],
        }
    }

    pub fn from_input_rows(rows: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim < 2 {
            return Err(EmbedError::InvalidConfig("embedding dimension must be >= 2".into()));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EmbedError::Csv("ragged embedding rows".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EmbedError::Csv("non-finite embedding entry".into()));
        }
        let vocab_size = rows.len();
        Ok(EmbeddingMatrix {
            vocab_size,
            dim,
            input: rows.into_iter().flatten().collect(),
            output: vec![0.0; vocab_size * dim],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_vector(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_vector(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// CSV with header `token,v0,...,v{d-1}`; input vectors only.
    pub fn to_csv(&self, vocab: &Vocabulary) -> Result<String, EmbedError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["token".to_string()];
        header.extend((0..self.dim).map(|k| format!("v{k}")));
        w.write_record(&header).map_err(|e| EmbedError::Csv(e.to_string()))?;
        for i in 0..self.vocab_size {
            let mut row = vec![vocab.token(i).to_string()];
            row.extend(self.input_vector(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| EmbedError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| EmbedError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EmbedError::Csv(e.to_string()))
    }

    /// Parses the CSV format of [`EmbeddingMatrix::to_csv`]; returns tokens
    /// in row order. Output vectors are zero.
    pub fn from_csv(text: &str) -> Result<(Vec<String>, Self), EmbedError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| EmbedError::Csv(e.to_string()))?.clone();
        if headers.get(0) != Some("token") {
            return Err(EmbedError::Csv("first column must be 'token'".into()));
        }
        let mut tokens = Vec::new();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| EmbedError::Csv(e.to_string()))?;
            tokens.push(record[0].to_string());
            let row = record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| EmbedError::Csv(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok((tokens, Self::from_input_rows(rows)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 32,
            window: 3,
            negatives: 5,
            learning_rate: 0.05,
            epochs: 5,
            seed: 1,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 {
            return Err(EmbedError::InvalidConfig("dim must be >= 2".into()));
        }
        if self.window == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(EmbedError::InvalidConfig(
                "window, negatives and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(sigmoid(x))`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradient of one CBOW example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    pub loss: f64,
    /// Gradient with respect to the context mean; each context word receives
    /// `context_grad / |context|`.
    pub context_grad: Vec<f64>,
    /// `(word, gradient)` for the center word and every negative, in order.
    pub output_grads: Vec<(usize, Vec<f64>)>,
}

fn context_mean(emb: &EmbeddingMatrix, context: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; emb.dim];
    for &c in context {
        for (m, v) in mean.iter_mut().zip(emb.input_vector(c)) {
            *m += v;
        }
    }
    let scale = 1.0 / context.len() as f64;
    mean.iter_mut().for_each(|m| *m *= scale);
    mean
}

/// `-ln s(c.v_o) - sum_j ln s(-c.v_nj)` with `c` the mean context vector.
pub fn example_loss(emb: &EmbeddingMatrix, context: &[usize], center: usize, negatives: &[usize]) -> f64 {
    let c = context_mean(emb, context);
    neg_log_sigmoid(dot(&c, emb.output_vector(center)))
        + negatives
            .iter()
            .map(|&n| neg_log_sigmoid(-dot(&c, emb.output_vector(n))))
            .sum::<f64>()
}

pub fn example_gradient(
    emb: &EmbeddingMatrix,
    context: &[usize],
    center: usize,
    negatives: &[usize],
) -> ExampleGradient {
    let c = context_mean(emb, context);
    let mut context_grad = vec![0.0; emb.dim];
    let mut output_grads = Vec::with_capacity(negatives.len() + 1);
    let mut loss = 0.0;
    let targets = std::iter::once((center, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (word, label) in targets {
        let v = emb.output_vector(word);
        let score = dot(&c, v);
        loss += if label == 1.0 {
            neg_log_sigmoid(score)
        } else {
            neg_log_sigmoid(-score)
        };
        // d loss / d score
        let g = sigmoid(score) - label;
        for (cg, vk) in context_grad.iter_mut().zip(v) {
            *cg += g * vk;
        }
        output_grads.push((word, c.iter().map(|ck| g * ck).collect()));
    }
    ExampleGradient {
        loss,
        context_grad,
        output_grads,
    }
}

/// Result of training: the matrix and the mean example loss of every epoch.
#[derive(Debug, Clone)]
pub struct CbowTraining {
    pub embeddings: EmbeddingMatrix,
    pub epoch_losses: Vec<f64>,
}

/// Trains on index-encoded documents. `vocab_size` bounds every index.
pub fn train_cbow_indexed(
    docs: &[Vec<usize>],
    vocab_size: usize,
    cfg: &CbowConfig,
) -> Result<CbowTraining, EmbedError> {
    cfg.validate()?;
    let mut counts = vec![0.0f64; vocab_size];
    for &i in docs.iter().flatten() {
        if i >= vocab_size {
            return Err(EmbedError::IndexOutOfRange(i, vocab_size));
        }
        counts[i] += 1.0;
    }
    let has_pairs = docs.iter().any(|d| d.len() >= 2);
    if !has_pairs {
        return Err(EmbedError::NoTrainingPairs);
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c.powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|_| EmbedError::NoTrainingPairs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb = EmbeddingMatrix::zeros(vocab_size, cfg.dim);
    let half = 0.5 / cfg.dim as f64;
    for v in emb.input.iter_mut() {
        *v = rng.random_range(-half..half);
    }

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut context = Vec::with_capacity(2 * cfg.window);
    let mut negatives = Vec::with_capacity(cfg.negatives);
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        let mut examples = 0usize;
        for doc in docs {
            for (pos, &center) in doc.iter().enumerate() {
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(doc.len());
                context.clear();
                context.extend((lo..hi).filter(|&p| p != pos).map(|p| doc[p]));
                if context.is_empty() {
                    continue;
                }
                negatives.clear();
                for _ in 0..cfg.negatives {
                    let n = noise.sample(&mut rng);
                    if n != center {
                        negatives.push(n);
                    }
                }
                let grad = example_gradient(&emb, &context, center, &negatives);
                total += grad.loss;
                examples += 1;
                let lr = cfg.learning_rate;
                let ctx_scale = lr / context.len() as f64;
                for &c in &context {
                    for (v, g) in emb.input_vector_mut(c).iter_mut().zip(&grad.context_grad) {
                        *v -= ctx_scale * g;
                    }
                }
                for (word, g) in &grad.output_grads {
                    for (v, gk) in emb.output_vector_mut(*word).iter_mut().zip(g) {
                        *v -= lr * gk;
                    }
                }
            }
        }
        epoch_losses.push(total / examples.max(1) as f64);
    }
    Ok(CbowTraining {
        embeddings: emb,
        epoch_losses,
    })
}

/// Trains on token streams; out-of-vocabulary tokens are dropped first.
pub fn train_cbow(
    corpus: &[Vec<String>],
    vocab: &Vocabulary,
    cfg: &CbowConfig,
) -> Result<CbowTraining, EmbedError> {
    let docs: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
    train_cbow_indexed(&docs, vocab.len(), cfg)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::UndefinedSimilarity);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Top-`k` words by cosine similarity of input vectors, excluding `word`.
/// Ties go to the lower index; zero vectors score 0.
pub fn nearest_neighbors(emb: &EmbeddingMatrix, word: usize, k: usize) -> Vec<(usize, f64)> {
    let query = emb.input_vector(word);
    let mut scored: Vec<(usize, f64)> = (0..emb.vocab_size)
        .filter(|&j| j != word)
        .map(|j| (j, cosine_similarity(query, emb.input_vector(j)).unwrap_or(0.0)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(EmbedError::UndefinedSimilarity)
        ));
    }

    #[test]
    fn neighbors_trivial_cases() {
        let emb = EmbeddingMatrix::from_input_rows(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(nearest_neighbors(&emb, 0, 1), vec![(1, -1.0)]);
        assert!(nearest_neighbors(&emb, 0, 0).is_empty());
    }

    #[test]
    fn neighbors_match_brute_force() {
        let rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![-1.0, 0.5, 0.2],
        ];
        let emb = EmbeddingMatrix::from_input_rows(rows.clone()).unwrap();
        for i in 0..5 {
            let mut brute: Vec<(usize, f64)> = Vec::new();
            for j in 0..5 {
                if j != i {
                    let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    let ni: f64 = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                    let nj: f64 = rows[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                    brute.push((j, d / (ni * nj)));
                }
            }
            // insertion sort, descending similarity, stable on index
            for a in 1..brute.len() {
                let mut b = a;
                while b > 0 && brute[b].1 > brute[b - 1].1 {
                    brute.swap(b, b - 1);
                    b -= 1;
                }
            }
            let got = nearest_neighbors(&emb, i, 4);
            assert_eq!(got.iter().map(|p| p.0).collect::<Vec<_>>(), brute.iter().map(|p| p.0).collect::<Vec<_>>());
            for (g, b) in got.iter().zip(&brute) {
                assert!((g.1 - b.1).abs() < 1e-12);
            }
        }
        // index 0 and 3 are parallel: exact tie broken by lower index
        assert_eq!(nearest_neighbors(&emb, 1, 2)[0].0, 0);
    }

    #[test]
    fn single_token_corpus_has_no_pairs() {
        let cfg = CbowConfig::default();
        assert!(matches!(
            train_cbow_indexed(&[vec![0]], 1, &cfg),
            Err(EmbedError::NoTrainingPairs)
        ));
        assert!(matches!(
            train_cbow_indexed(&[], 1, &cfg),
            Err(EmbedError::NoTrainingPairs)
        ));
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(
            train_cbow_indexed(&[vec![0, 3]], 2, &CbowConfig::default()),
            Err(EmbedError::IndexOutOfRange(3, 2))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = CbowConfig {
            dim: 1,
            ..CbowConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = CbowConfig {
            learning_rate: 0.0,
            ..CbowConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0) >= 0.0);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}
