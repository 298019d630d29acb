//! Seeded synthetic data: classic shrinkage test signals with calibrated
//! Gaussian noise, and labeled multilingual corpora with injected typos.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{Label, LanguageProfile, RawDocument};
use crate::wavelet::Signal;

/// Exponent of the unigram rank-frequency law.
pub const ZIPF_EXPONENT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataGenError {
    #[error("unknown signal kind '{0}'")]
    UnknownKind(String),
    #[error("signal length {0} too short (need >= 8)")]
    TooShort(usize),
    #[error("input signal is all zero")]
    ZeroSignal,
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Blocks,
    Bumps,
    Doppler,
    Sine,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Blocks,
        SignalKind::Bumps,
        SignalKind::Doppler,
        SignalKind::Sine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Blocks => "blocks",
            SignalKind::Bumps => "bumps",
            SignalKind::Doppler => "doppler",
            SignalKind::Sine => "sine",
        }
    }
}

impl FromStr for SignalKind {
    type Err = DataGenError;
    fn from_str(s: &str) -> Result<Self, DataGenError> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DataGenError::UnknownKind(s.to_string()))
    }
}

const JUMP_POSITIONS: [f64; 11] = [0.10, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCK_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMP_HEIGHTS: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMP_WIDTHS: [f64; 11] = [
    0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005,
];

fn raw_sample(kind: SignalKind, t: f64) -> f64 {
    match kind {
        SignalKind::Blocks => JUMP_POSITIONS
            .iter()
            .zip(BLOCK_HEIGHTS)
            .map(|(&p, h)| if t >= p { h } else { 0.0 })
            .sum(),
        SignalKind::Bumps => JUMP_POSITIONS
            .iter()
            .zip(BUMP_HEIGHTS.iter().zip(BUMP_WIDTHS))
            .map(|(&p, (h, w))| h * (1.0 + ((t - p) / w).abs()).powi(-4))
            .sum(),
        SignalKind::Doppler => (t * (1.0 - t)).sqrt() * (2.0 * PI * 1.05 / (t + 0.05)).sin(),
        SignalKind::Sine => (2.0 * PI * 5.0 * t).sin(),
    }
}

/// Closed-form test signal on `t = n / N`, scaled to `max|x| = 1`.
///
/// The kinds are deterministic; `seed` is accepted so every generator shares
/// one calling convention and does not change the output.
pub fn gen_signal(kind: SignalKind, n: usize, _seed: u64) -> Result<Signal, DataGenError> {
    if n < 8 {
        return Err(DataGenError::TooShort(n));
    }
    let raw: Vec<f64> = (0..n).map(|i| raw_sample(kind, i as f64 / n as f64)).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Signal::new(raw.iter().map(|v| v / peak).collect()).map_err(|_| DataGenError::ZeroSignal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "db")]
pub enum NoiseLevel {
    /// No noise; the signal passes through unchanged.
    Clean,
    SnrDb(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target: NoiseLevel,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn snr_db(target: f64, seed: u64) -> Self {
        NoiseSpec {
            target: NoiseLevel::SnrDb(target),
            seed,
        }
    }
}

/// `sqrt(mean(x²) / 10^(target/10))`, the noise level whose expected SNR
/// equals the target.
pub fn awgn_sigma(x: &Signal, target_snr_db: f64) -> f64 {
    let power = x.as_slice().iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    (power / 10f64.powf(target_snr_db / 10.0)).sqrt()
}

pub fn add_awgn(x: &Signal, spec: &NoiseSpec) -> Result<(Signal, f64), DataGenError> {
    if x.as_slice().iter().all(|&v| v == 0.0) {
        return Err(DataGenError::ZeroSignal);
    }
    let target = match spec.target {
        NoiseLevel::Clean => return Ok((x.clone(), 0.0)),
        NoiseLevel::SnrDb(t) if t.is_finite() => t,
        NoiseLevel::SnrDb(t) => {
            return Err(DataGenError::InvalidSpec(format!("target SNR {t} is not finite")))
        }
    };
    let sigma = awgn_sigma(x, target);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = x.as_slice().iter().map(|v| v + normal.sample(&mut rng)).collect();
    let noisy = Signal::new(noisy).map_err(|_| DataGenError::ZeroSignal)?;
    Ok((noisy, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub lang: String,
    pub vocab_size: usize,
    pub doc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub languages: Vec<LanguageSpec>,
    /// Mean tokens per document.
    pub doc_length: usize,
    pub typo_rate: f64,
    pub threat_rate: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            languages: ["en", "hi", "ta", "fr"]
                .iter()
                .map(|l| LanguageSpec {
                    lang: l.to_string(),
                    vocab_size: 150,
                    doc_count: 200,
                })
                .collect(),
            doc_length: 30,
            typo_rate: 0.05,
            threat_rate: 0.05,
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), DataGenError> {
        let bad = |m: &str| Err(DataGenError::InvalidSpec(m.to_string()));
        if self.languages.is_empty() {
            return bad("at least one language required");
        }
        if !(0.0..=1.0).contains(&self.typo_rate) || !(0.0..=1.0).contains(&self.threat_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.doc_length == 0 {
            return bad("doc_length must be positive");
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if l.lang.is_empty() || !seen.insert(l.lang.as_str()) {
                return bad("language tags must be nonempty and distinct");
            }
            if l.vocab_size < 4 {
                return bad("vocab_size must be >= 4");
            }
        }
        Ok(())
    }

    pub fn total_docs(&self) -> usize {
        self.languages.iter().map(|l| l.doc_count).sum()
    }
}

struct Script {
    onsets: Vec<&'static str>,
    nuclei: Vec<&'static str>,
    /// Characters used for substitution typos.
    letters: Vec<char>,
    cased: bool,
}

fn script_for(lang: &str) -> Script {
    let split = |s: &'static str| s.split(' ').collect::<Vec<_>>();
    let (onsets, nuclei, cased) = match lang {
        "hi" => (
            split("क ख ग घ च छ ज झ ट ठ ड ढ त थ द ध न प फ ब भ म य र ल व श स ह"),
            // empty nucleus keeps the inherent vowel
            vec!["", "ा", "ि", "ी", "ु", "ू", "े", "ै", "ो", "ौ"],
            false,
        ),
        "ta" => (
            split("க ங ச ஞ ட ண த ந ப ம ய ர ல வ ழ ள ற ன"),
            vec!["", "ா", "ி", "ீ", "ு", "ூ", "ெ", "ே", "ை", "ொ", "ோ"],
            false,
        ),
        "fr" => (
            split("b c d f g j l m n p r s t v"),
            split("a e i o u é è â ou"),
            true,
        ),
        _ => (
            split("b c d f g h j k l m n p r s t v w z"),
            split("a e i o u"),
            true,
        ),
    };
    let mut letters: Vec<char> = onsets.iter().chain(&nuclei).flat_map(|s| s.chars()).collect();
    letters.sort_unstable();
    letters.dedup();
    Script {
        onsets,
        nuclei,
        letters,
        cased,
    }
}

fn language_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The synthetic word list of one language, most frequent first. Words have
/// two to four syllables and never collide with the language's stopwords.
pub fn language_vocabulary(lang: &str, size: usize, seed: u64, lang_index: usize) -> Vec<String> {
    let script = script_for(lang);
    let stopwords = LanguageProfile::builtin(lang)
        .map(|p| p.stopwords)
        .unwrap_or_default();
    let mut rng = language_rng(seed, lang_index as u64);
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(size);
    while words.len() < size {
        let syllables = rng.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(script.onsets[rng.random_range(0..script.onsets.len())]);
            w.push_str(script.nuclei[rng.random_range(0..script.nuclei.len())]);
        }
        if !stopwords.contains(&w) && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn zipf_cdf(size: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (0..size)
        .map(|r| {
            acc += ((r + 1) as f64).powf(-ZIPF_EXPONENT);
            acc
        })
        .collect();
    cdf.iter_mut().for_each(|c| *c /= acc);
    cdf
}

fn sample_rank(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

fn apply_typo(word: &str, letters: &[char], rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let op = if chars.len() < 2 { 2 } else { rng.random_range(0..3) };
    match op {
        0 => {
            let i = rng.random_range(0..chars.len() - 1);
            chars.swap(i, i + 1);
        }
        1 => {
            let i = rng.random_range(0..chars.len());
            chars.remove(i);
        }
        _ => {
            let i = rng.random_range(0..chars.len());
            chars[i] = letters[rng.random_range(0..letters.len())];
        }
    }
    chars.into_iter().collect()
}

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates the labeled corpus, language by language.
///
/// Legit documents draw tokens from a Zipf law over the language's word
/// list. Threat documents use the same law with ranks rotated by half the
/// vocabulary, so their most frequent terms are words that legit documents
/// use rarely. Each document draws from its own substream of `seed`.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<RawDocument>, DataGenError> {
    spec.validate()?;
    let mut docs = Vec::with_capacity(spec.total_docs());
    let mut stream = spec.languages.len() as u64;
    for (li, lang) in spec.languages.iter().enumerate() {
        let script = script_for(&lang.lang);
        let words = language_vocabulary(&lang.lang, lang.vocab_size, spec.seed, li);
        let cdf = zipf_cdf(words.len());
        let shift = words.len() / 2;
        let lo = (spec.doc_length / 2).max(2);
        let hi = (spec.doc_length + spec.doc_length / 2).max(lo);
        for d in 0..lang.doc_count {
            let mut rng = language_rng(spec.seed, stream);
            stream += 1;
            let label = if rng.random::<f64>() < spec.threat_rate {
                Label::Threat
            } else {
                Label::Legit
            };
            let len = rng.random_range(lo..=hi);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let rank = sample_rank(&cdf, &mut rng);
                    let index = match label {
                        Label::Legit => rank,
                        Label::Threat => (rank + shift) % words.len(),
                    };
                    let word = &words[index];
                    if rng.random::<f64>() < spec.typo_rate {
                        apply_typo(word, &script.letters, &mut rng)
                    } else {
                        word.clone()
                    }
                })
                .collect();
            let mut text = tokens.join(" ");
            if script.cased {
                text = capitalize(&text);
            }
            text.push('.');
            docs.push(RawDocument {
                id: format!("{}-{:04}", lang.lang, d),
                lang: lang.lang.clone(),
                text,
                label: Some(label),
            });
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{snr_db, Snr};
    use crate::textprep::{normalize, tokenize, to_jsonl};

    #[test]
    fn signals_are_peak_normalized_and_deterministic() {
        for kind in SignalKind::ALL {
            for n in [8, 100, 1024] {
                let x = gen_signal(kind, n, 1).unwrap();
                let peak = x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!((peak - 1.0).abs() < 1e-15, "{kind:?} {n}");
                assert_eq!(x, gen_signal(kind, n, 1).unwrap());
            }
        }
        assert_eq!(gen_signal(SignalKind::Sine, 4, 0), Err(DataGenError::TooShort(4)));
        assert!(matches!("chirp".parse::<SignalKind>(), Err(DataGenError::UnknownKind(_))));
        assert_eq!("bumps".parse::<SignalKind>().unwrap(), SignalKind::Bumps);
    }

    #[test]
    fn blocks_is_piecewise_constant() {
        let x = gen_signal(SignalKind::Blocks, 2048, 0).unwrap();
        let v = x.as_slice();
        let jumps = v.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(jumps <= JUMP_POSITIONS.len());
    }

    #[test]
    fn sigma_formula() {
        let unit = Signal::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((awgn_sigma(&unit, 20.0) - 0.1).abs() < 1e-15);
        assert!((awgn_sigma(&unit, 10.5) - 0.2985).abs() < 1e-4);
    }

    #[test]
    fn clean_target_passes_through() {
        let x = gen_signal(SignalKind::Doppler, 64, 0).unwrap();
        let (y, sigma) = add_awgn(&x, &NoiseSpec { target: NoiseLevel::Clean, seed: 3 }).unwrap();
        assert_eq!(sigma, 0.0);
        assert_eq!(x, y);
        let zero = Signal::new(vec![0.0; 16]).unwrap();
        assert_eq!(add_awgn(&zero, &NoiseSpec::snr_db(10.0, 1)), Err(DataGenError::ZeroSignal));
    }

    #[test]
    fn realized_snr_concentrates_on_target() {
        let x = gen_signal(SignalKind::Bumps, 2048, 0).unwrap();
        for seed in 0..20 {
            let (y, _) = add_awgn(&x, &NoiseSpec::snr_db(10.5, seed)).unwrap();
            let Snr::Finite(s) = snr_db(&x, &y).unwrap() else {
                panic!("noise expected")
            };
            assert!((s - 10.5).abs() <= 1.0, "seed {seed}: {s}");
        }
    }

    fn small_spec(typo: f64, threat: f64) -> CorpusSpec {
        CorpusSpec {
            languages: ["en", "hi", "ta", "fr"]
                .iter()
                .map(|l| LanguageSpec {
                    lang: l.to_string(),
                    vocab_size: 40,
                    doc_count: 25,
                })
                .collect(),
            doc_length: 12,
            typo_rate: typo,
            threat_rate: threat,
            seed: 99,
        }
    }

    #[test]
    fn no_typos_means_all_in_vocabulary() {
        let spec = small_spec(0.0, 0.2);
        let docs = gen_corpus(&spec).unwrap();
        assert_eq!(docs.len(), 100);
        for (li, l) in spec.languages.iter().enumerate() {
            let words: HashSet<String> =
                language_vocabulary(&l.lang, l.vocab_size, spec.seed, li).into_iter().collect();
            for doc in docs.iter().filter(|d| d.lang == l.lang) {
                for tok in tokenize(&normalize(&doc.text)) {
                    assert!(words.contains(&tok), "{} not in {} vocabulary", tok, l.lang);
                }
            }
        }
    }

    #[test]
    fn zero_threat_rate_is_all_legit() {
        let docs = gen_corpus(&small_spec(0.1, 0.0)).unwrap();
        assert!(docs.iter().all(|d| d.label == Some(Label::Legit)));
    }

    #[test]
    fn corpus_is_byte_identical_across_runs() {
        let spec = small_spec(0.1, 0.1);
        let a = to_jsonl(&gen_corpus(&spec).unwrap()).unwrap();
        let b = to_jsonl(&gen_corpus(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(a, to_jsonl(&gen_corpus(&other).unwrap()).unwrap());
    }

    #[test]
    fn label_proportions_match_binomial() {
        let spec = CorpusSpec { threat_rate: 0.2, ..CorpusSpec::default() };
        let docs = gen_corpus(&spec).unwrap();
        let n = docs.len() as f64;
        let threats = docs.iter().filter(|d| d.label == Some(Label::Threat)).count() as f64;
        let sd = (n * 0.2 * 0.8).sqrt();
        assert!((threats - n * 0.2).abs() <= 3.0 * sd);
    }

    #[test]
    fn typos_alter_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let letters: Vec<char> = "xyz".chars().collect();
        for _ in 0..50 {
            let t = apply_typo("abcd", &letters, &mut rng);
            assert!(t.chars().count() == 3 || t.chars().count() == 4);
        }
        assert_eq!(apply_typo("a", &letters, &mut rng).chars().count(), 1);
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec(0.0, 0.0);
        s.typo_rate = 1.5;
        assert!(s.validate().is_err());
        let mut s = small_spec(0.0, 0.0);
        s.languages.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec(0.0, 0.0);
        s.languages[1].lang = "en".into();
        assert!(s.validate().is_err());
    }
}
