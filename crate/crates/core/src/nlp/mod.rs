//! Text view of reports: character cleaning, tokenization, vocabularies and
//! fixed-length id sequences.

mod bpe;
mod vocab;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Report;

pub use bpe::{train_bpe, BpeMerges};
pub use vocab::{build_vocab, encode_tokens, TokenSequence, Vocabulary, PAD, PAD_ID, UNK, UNK_ID};

/// Characters replaced by a space before tokenization.
pub const CLEANED_CHARS: &[char] = &['[', ']', '{', '}', '(', ')', ':', '\'', '"', '/', '\\', ','];

/// Replaces structural and path characters with spaces and collapses runs of whitespace.
pub fn clean_text(raw: &str) -> String {
    let replaced: String = raw
        .chars()
        .map(|c| if CLEANED_CHARS.contains(&c) { ' ' } else { c })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Whitespace,
    WordPunct,
    Bpe,
}

impl FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "whitespace" => Ok(TokenizerKind::Whitespace),
            "wordpunct" => Ok(TokenizerKind::WordPunct),
            "bpe" => Ok(TokenizerKind::Bpe),
            other => Err(Error::config(format!(
                "unknown tokenizer `{other}` (expected whitespace, wordpunct or bpe)"
            ))),
        }
    }
}

impl fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerKind::Whitespace => "whitespace",
            TokenizerKind::WordPunct => "wordpunct",
            TokenizerKind::Bpe => "bpe",
        })
    }
}

fn wordpunct_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]+").unwrap())
}

/// Splits a word stream into at most `limit` tokens.
fn tokenize_limited(
    stream: &str,
    method: TokenizerKind,
    merges: Option<&BpeMerges>,
    limit: usize,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    match method {
        TokenizerKind::Whitespace => {
            out.extend(stream.split_whitespace().take(limit).map(str::to_string));
        }
        TokenizerKind::WordPunct => {
            out.extend(
                wordpunct_re()
                    .find_iter(stream)
                    .take(limit)
                    .map(|m| m.as_str().to_string()),
            );
        }
        TokenizerKind::Bpe => {
            let merges =
                merges.ok_or_else(|| Error::config("bpe tokenization requires learned merges"))?;
            for word in stream.split_whitespace() {
                if out.len() >= limit {
                    break;
                }
                out.extend(merges.apply(word));
            }
            out.truncate(limit);
        }
    }
    Ok(out)
}

pub fn tokenize(
    stream: &str,
    method: TokenizerKind,
    merges: Option<&BpeMerges>,
) -> Result<Vec<String>> {
    tokenize_limited(stream, method, merges, usize::MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlpConfig {
    pub tokenizer: TokenizerKind,
    pub vocab_cap: usize,
    pub seq_len: usize,
    pub bpe_merges: usize,
    pub lowercase: bool,
    /// Drop the report schema keys (`calls`, `api`, `arguments`, `name`, `value`).
    pub strip_keys: bool,
}

impl Default for NlpConfig {
    fn default() -> Self {
        NlpConfig {
            tokenizer: TokenizerKind::Whitespace,
            vocab_cap: 70_000,
            seq_len: 1024,
            bpe_merges: 2000,
            lowercase: true,
            strip_keys: false,
        }
    }
}

impl NlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_cap < 3 {
            return Err(Error::config("vocab_cap must be at least 3"));
        }
        if self.seq_len == 0 {
            return Err(Error::config("seq_len must be positive"));
        }
        Ok(())
    }
}

const SCHEMA_KEYS: [&str; 5] = ["calls", "api", "arguments", "name", "value"];

/// Cleaned word stream of a report.
pub fn report_words(report: &Report, cfg: &NlpConfig) -> String {
    let mut text = clean_text(&report.to_sandbox_json());
    if cfg.strip_keys {
        text = text
            .split(' ')
            .filter(|w| !SCHEMA_KEYS.contains(w))
            .collect::<Vec<_>>()
            .join(" ");
    }
    if cfg.lowercase {
        text = text.to_lowercase();
    }
    text
}

pub const NLP_FORMAT: &str = "apifeat-nlp";
pub const NLP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NlpHeader {
    format: String,
    version: u32,
    config: NlpConfig,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    meta: std::collections::BTreeMap<String, String>,
}

/// Fitted tokenizer and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpPipeline {
    pub config: NlpConfig,
    pub merges: Option<BpeMerges>,
    pub vocab: Vocabulary,
}

impl NlpPipeline {
    /// Learns merges (for BPE) and the vocabulary from training reports only.
    pub fn fit(train: &[Report], cfg: &NlpConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyCorpus("no training reports".into()));
        }
        let streams: Vec<String> = train.iter().map(|r| report_words(r, cfg)).collect();
        let merges = match cfg.tokenizer {
            TokenizerKind::Bpe => {
                let words: Vec<Vec<&str>> = streams
                    .iter()
                    .map(|s| s.split_whitespace().collect())
                    .collect();
                Some(train_bpe(&words, cfg.bpe_merges)?)
            }
            _ => None,
        };
        let mut all = Vec::new();
        for s in &streams {
            all.extend(tokenize(s, cfg.tokenizer, merges.as_ref())?);
        }
        if all.is_empty() {
            return Err(Error::EmptyCorpus(
                "training reports produced no tokens".into(),
            ));
        }
        let vocab = build_vocab(&all, cfg.vocab_cap)?;
        log::info!(
            "nlp vocabulary: {} entries ({} tokenizer)",
            vocab.len(),
            cfg.tokenizer
        );
        Ok(NlpPipeline {
            config: cfg.clone(),
            merges,
            vocab,
        })
    }

    pub fn tokens(&self, report: &Report) -> Vec<String> {
        let words = report_words(report, &self.config);
        tokenize_limited(
            &words,
            self.config.tokenizer,
            self.merges.as_ref(),
            self.config.seq_len,
        )
        .expect("merges present for fitted bpe pipeline")
    }

    pub fn encode(&self, report: &Report) -> TokenSequence {
        encode_tokens(&self.vocab, &self.tokens(report), self.config.seq_len)
    }

    /// Writes `nlp.json`, `vocab.txt` and, for BPE, `merges.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with_meta(dir, &Default::default())
    }

    /// Like [`NlpPipeline::save`], recording free-form metadata in `nlp.json`.
    pub fn save_with_meta(
        &self,
        dir: &Path,
        meta: &std::collections::BTreeMap<String, String>,
    ) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = NlpHeader {
            format: NLP_FORMAT.into(),
            version: NLP_VERSION,
            config: self.config.clone(),
            meta: meta.clone(),
        };
        fs::write(
            dir.join("nlp.json"),
            serde_json::to_string_pretty(&header).map_err(|e| Error::format(e.to_string()))?,
        )?;
        self.vocab.write(fs::File::create(dir.join("vocab.txt"))?)?;
        if let Some(m) = &self.merges {
            m.write(fs::File::create(dir.join("merges.txt"))?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: NlpHeader = serde_json::from_slice(&fs::read(dir.join("nlp.json"))?)
            .map_err(|e| Error::format(format!("nlp.json: {e}")))?;
        if header.format != NLP_FORMAT || header.version != NLP_VERSION {
            return Err(Error::format(format!(
                "unsupported nlp artifact {} v{}",
                header.format, header.version
            )));
        }
        let vocab = Vocabulary::read(fs::File::open(dir.join("vocab.txt"))?)?;
        let merges = match header.config.tokenizer {
            TokenizerKind::Bpe => Some(BpeMerges::read(fs::File::open(dir.join("merges.txt"))?)?),
            _ => None,
        };
        Ok(NlpPipeline {
            config: header.config,
            merges,
            vocab,
        })
    }
}
