//! Similarity encoding of string arguments.
//!
//! A string is represented by its cosine similarities, over character 3-, 4-
//! and 5-gram count vectors, to a dictionary of the most frequent training
//! strings of the same category.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NGRAM_SIZES: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StringCategory {
    FilePath,
    DllName,
    RegistryKey,
    Url,
    Other,
}

impl StringCategory {
    /// Encoded categories, in block order.
    pub const ENCODED: [StringCategory; 4] = [
        StringCategory::FilePath,
        StringCategory::DllName,
        StringCategory::RegistryKey,
        StringCategory::Url,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StringCategory::FilePath => "file-path",
            StringCategory::DllName => "dll-name",
            StringCategory::RegistryKey => "registry-key",
            StringCategory::Url => "url",
            StringCategory::Other => "other",
        }
    }
}

struct Patterns {
    url: Regex,
    registry: Regex,
    path: Regex,
    dll: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)^(?:[a-z][a-z0-9+.\-]*://|www\.)\S+").unwrap(),
        registry: Regex::new(
            r"(?i)^(?:\\registry\\|hkey_[a-z_]+(?:\\|$)|(?:hklm|hkcu|hkcr|hku|hkcc)(?:\\|$))",
        )
        .unwrap(),
        path: Regex::new(r"(?i)^(?:[a-z]:[\\/]|\\\\|\\\?\?\\|%[a-z_]+%[\\/])|[\\/][^\\/]+[\\/]")
            .unwrap(),
        dll: Regex::new(r"(?i)^[^\\/:*?<>|\s]+\.(?:dll|drv|ocx|cpl|sys)$").unwrap(),
    })
}

/// Assigns a category by regular expression, checking URL, registry key,
/// file path and DLL name in that order.
pub fn classify_string(s: &str) -> StringCategory {
    let p = patterns();
    if p.url.is_match(s) {
        StringCategory::Url
    } else if p.registry.is_match(s) {
        StringCategory::RegistryKey
    } else if p.path.is_match(s) {
        StringCategory::FilePath
    } else if p.dll.is_match(s) {
        StringCategory::DllName
    } else {
        StringCategory::Other
    }
}

/// Sparse character n-gram counts of a string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgramCounts {
    counts: HashMap<String, u32>,
    norm_sq: u64,
}

impl NgramCounts {
    pub fn get(&self, gram: &str) -> u32 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn dot(&self, other: &NgramCounts) -> u64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(g, &c)| c as u64 * large.get(g) as u64)
            .sum()
    }

    /// Cosine similarity; zero when either vector is empty.
    ///
    /// Computed from integer dot product and squared norms, so it is exactly
    /// symmetric and exactly 1 for identical inputs.
    pub fn cosine(&self, other: &NgramCounts) -> f64 {
        if self.norm_sq == 0 || other.norm_sq == 0 {
            return 0.0;
        }
        let denom = (self.norm_sq as f64 * other.norm_sq as f64).sqrt();
        (self.dot(other) as f64 / denom).min(1.0)
    }
}

/// G(s): all character 3-, 4- and 5-grams of `s` with multiplicity.
pub fn ngram_counts(s: &str) -> NgramCounts {
    let chars: Vec<char> = s.chars().collect();
    let mut counts: HashMap<String, u32> = HashMap::new();
    for n in NGRAM_SIZES {
        for w in chars.windows(n) {
            *counts.entry(w.iter().collect()).or_default() += 1;
        }
    }
    let norm_sq = counts.values().map(|&c| c as u64 * c as u64).sum();
    NgramCounts { counts, norm_sq }
}

pub fn cosine_sim(a: &str, b: &str) -> f64 {
    ngram_counts(a).cosine(&ngram_counts(b))
}

/// Encodes strings of one category against a fitted dictionary.
///
/// Dictionary slots beyond the number of distinct training strings encode as
/// zero similarity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "EncoderRepr", into = "EncoderRepr")]
pub struct SimilarityEncoder {
    category: StringCategory,
    k: usize,
    dictionary: Vec<String>,
    refs: Vec<NgramCounts>,
}

#[derive(Serialize, Deserialize)]
struct EncoderRepr {
    category: StringCategory,
    k: usize,
    dictionary: Vec<String>,
}

impl From<EncoderRepr> for SimilarityEncoder {
    fn from(r: EncoderRepr) -> Self {
        SimilarityEncoder::from_dictionary(r.category, r.k, r.dictionary)
    }
}

impl From<SimilarityEncoder> for EncoderRepr {
    fn from(e: SimilarityEncoder) -> Self {
        EncoderRepr {
            category: e.category,
            k: e.k,
            dictionary: e.dictionary,
        }
    }
}

impl PartialEq for SimilarityEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.category == other.category && self.k == other.k && self.dictionary == other.dictionary
    }
}

impl SimilarityEncoder {
    pub fn from_dictionary(
        category: StringCategory,
        k: usize,
        mut dictionary: Vec<String>,
    ) -> Self {
        dictionary.truncate(k);
        let refs = dictionary.iter().map(|d| ngram_counts(d)).collect();
        SimilarityEncoder {
            category,
            k,
            dictionary,
            refs,
        }
    }

    /// An encoder with no reference strings; every input encodes to zeros.
    pub fn empty(category: StringCategory, k: usize) -> Self {
        Self::from_dictionary(category, k, Vec::new())
    }

    pub fn category(&self) -> StringCategory {
        self.category
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dictionary(&self) -> &[String] {
        &self.dictionary
    }

    pub fn encode(&self, s: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.encode_grams_into(&ngram_counts(s), &mut out);
        out
    }

    pub fn encode_grams_into(&self, grams: &NgramCounts, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.refs) {
            *o = grams.cosine(r);
        }
    }
}

/// Keeps the `k` most frequent strings, ties broken lexicographically.
pub fn fit_similarity_encoder<S: AsRef<str>>(
    strings: &[S],
    category: StringCategory,
    k: usize,
) -> Result<SimilarityEncoder> {
    if k == 0 {
        return Err(Error::config("dictionary size must be positive"));
    }
    if strings.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no {} strings to fit a dictionary",
            category.as_str()
        )));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for s in strings {
        *freq.entry(s.as_ref()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let dictionary = ranked
        .into_iter()
        .take(k)
        .map(|(s, _)| s.to_string())
        .collect();
    Ok(SimilarityEncoder::from_dictionary(category, k, dictionary))
}
