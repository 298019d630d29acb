//! Multilingual text preprocessing.
//!
//! Fixed pipeline order: [`normalize`] → [`tokenize`] → [`remove_stopwords`]
//! → [`stem`] → [`vectorize`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("vocabulary empty")]
    EmptyVocabulary,
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("invalid language profile: {0}")]
    InvalidProfile(String),
    #[error("no built-in profile for language '{0}'")]
    UnknownLanguage(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legit,
    Threat,
}

impl Label {
    pub fn is_threat(self) -> bool {
        self == Label::Threat
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Legit => "legit",
            Label::Threat => "threat",
        }
    }
}

/// One corpus line: `{"id", "lang", "text", "label"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub id: String,
    pub lang: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl RawDocument {
    pub fn validate(&self) -> Result<(), TextError> {
        if self.id.is_empty() {
            return Err(TextError::InvalidDocument("empty id".into()));
        }
        if self.lang.is_empty() {
            return Err(TextError::InvalidDocument(format!("document '{}' has empty lang", self.id)));
        }
        Ok(())
    }
}

/// Parses a JSONL corpus, one document per nonblank line.
pub fn parse_jsonl(input: &str) -> Result<Vec<RawDocument>, TextError> {
    let mut docs = Vec::new();
    for line in input.lines().filter(|l| !l.trim().is_empty()) {
        let doc: RawDocument = serde_json::from_str(line)?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn to_jsonl(docs: &[RawDocument]) -> Result<String, TextError> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageProfile {
    pub lang: String,
    pub stopwords: BTreeSet<String>,
    /// `(suffix, min_stem_len)` pairs.
    pub suffix_rules: Vec<(String, usize)>,
}

impl LanguageProfile {
    pub fn from_json(json: &str) -> Result<Self, TextError> {
        let profile: LanguageProfile = serde_json::from_str(json)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), TextError> {
        if self.lang.is_empty() {
            return Err(TextError::InvalidProfile("empty lang".into()));
        }
        for (suffix, min_len) in &self.suffix_rules {
            if suffix.is_empty() {
                return Err(TextError::InvalidProfile("empty suffix".into()));
            }
            if *min_len < 1 {
                return Err(TextError::InvalidProfile(format!(
                    "suffix '{suffix}' has min_stem_len 0"
                )));
            }
        }
        Ok(())
    }

    /// Profile with no stopwords and no suffix rules.
    pub fn empty(lang: &str) -> Self {
        LanguageProfile {
            lang: lang.to_string(),
            stopwords: BTreeSet::new(),
            suffix_rules: Vec::new(),
        }
    }

    /// Shipped profiles for `en`, `fr`, `hi` and `ta`.
    pub fn builtin(lang: &str) -> Result<Self, TextError> {
        let json = match lang {
            "en" => include_str!("../profiles/en.json"),
            "fr" => include_str!("../profiles/fr.json"),
            "hi" => include_str!("../profiles/hi.json"),
            "ta" => include_str!("../profiles/ta.json"),
            other => return Err(TextError::UnknownLanguage(other.to_string())),
        };
        Self::from_json(json)
    }
}

/// Strips tags, casefolds, NFC-normalizes, drops control characters and
/// collapses whitespace. Idempotent.
pub fn normalize(text: &str) -> String {
    let mut untagged = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        match rest[open..].find('>') {
            Some(close) => {
                untagged.push_str(&rest[..open]);
                untagged.push(' ');
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    untagged.push_str(rest);

    // control characters go before composition so that removing them can
    // never expose a new composable pair
    let cleaned: String = untagged
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    let folded: String = cleaned.to_lowercase().nfc().collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Unicode word-boundary segmentation; keeps segments with at least one
/// letter or digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_word_bounds()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, profile: &LanguageProfile) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !profile.stopwords.contains(t))
        .collect()
}

/// Strips the longest suffix whose removal leaves at least `min_stem_len`
/// characters. At most one rule fires.
pub fn stem(token: &str, profile: &LanguageProfile) -> String {
    let len = token.chars().count();
    let best = profile
        .suffix_rules
        .iter()
        .filter(|(suffix, min_len)| {
            let slen = suffix.chars().count();
            token.ends_with(suffix.as_str()) && len >= slen + min_len
        })
        .max_by_key(|(suffix, _)| suffix.chars().count());
    match best {
        Some((suffix, _)) => token[..token.len() - suffix.len()].to_string(),
        None => token.to_string(),
    }
}

/// Full per-document pipeline up to (not including) vectorization.
pub fn preprocess(text: &str, profile: &LanguageProfile) -> Vec<String> {
    let tokens = remove_stopwords(tokenize(&normalize(text)), profile);
    tokens.iter().map(|t| stem(t, profile)).collect()
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

/// Token index space built from a preprocessed corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = String;

    fn try_from(r: VocabularyRepr) -> Result<Self, String> {
        if r.tokens.len() != r.doc_freq.len() {
            return Err("tokens and doc_freq lengths differ".into());
        }
        if r.doc_freq.iter().any(|&d| d == 0 || d > r.n_docs) {
            return Err("doc_freq out of range".into());
        }
        let index: HashMap<String, usize> =
            r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != r.tokens.len() {
            return Err("duplicate vocabulary token".into());
        }
        Ok(Vocabulary {
            tokens: r.tokens,
            doc_freq: r.doc_freq,
            n_docs: r.n_docs,
            index,
        })
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            doc_freq: v.doc_freq,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// Number of documents the vocabulary was built from.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Maps a token stream to indices, dropping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

/// Keeps tokens with document frequency `>= min_count`, indexed by
/// descending total frequency with lexicographic tie-breaks.
pub fn build_vocabulary(corpus: &[Vec<String>], min_count: usize) -> Result<Vocabulary, TextError> {
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for doc in corpus {
        let mut seen = BTreeSet::new();
        for token in doc {
            let entry = stats.entry(token.as_str()).or_insert((0, 0));
            entry.0 += 1;
            if seen.insert(token.as_str()) {
                entry.1 += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize, usize)> = stats
        .into_iter()
        .filter(|(_, (_, df))| *df >= min_count.max(1))
        .map(|(t, (total, df))| (t, total, df))
        .collect();
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens: Vec<String> = kept.iter().map(|(t, _, _)| t.to_string()).collect();
    let doc_freq = kept.iter().map(|(_, _, df)| *df).collect();
    let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        tokens,
        doc_freq,
        n_docs: corpus.len(),
        index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Count,
    #[default]
    TfIdf,
}

/// Sparse document vector over a vocabulary of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocVector {
    pub dim: usize,
    pub entries: BTreeMap<usize, f64>,
}

impl DocVector {
    pub fn norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &w) in &self.entries {
            out[i] = w;
        }
        out
    }
}

/// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
pub fn idf(n_docs: usize, doc_freq: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + doc_freq as f64)).ln() + 1.0
}

pub fn vectorize(tokens: &[String], vocab: &Vocabulary, weighting: Weighting) -> DocVector {
    let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
    for i in vocab.encode(tokens) {
        *entries.entry(i).or_insert(0.0) += 1.0;
    }
    if weighting == Weighting::TfIdf {
        for (&i, w) in entries.iter_mut() {
            *w *= idf(vocab.n_docs(), vocab.doc_freq(i));
        }
        let norm = entries.values().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.values_mut().for_each(|w| *w /= norm);
        }
    }
    DocVector {
        dim: vocab.len(),
        entries,
    }
}
