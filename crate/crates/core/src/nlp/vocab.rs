use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Token-to-id map with `<pad>` = 0 and `<unk>` = 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// `id<TAB>token`, one per line in id order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{i}\t{t}")?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let (id, tok) = line.split_once('\t').ok_or_else(|| {
                Error::format(format!("vocab line {}: expected `id<TAB>token`", n + 1))
            })?;
            if id.parse::<usize>().ok() != Some(tokens.len()) {
                return Err(Error::format(format!(
                    "vocab line {}: ids must be dense",
                    n + 1
                )));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err(Error::format("vocab must start with <pad> and <unk>"));
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Keeps the `cap - 2` most frequent tokens (ties lexicographic) after the specials.
pub fn build_vocab<I, S>(tokens: I, cap: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if cap < 3 {
        return Err(Error::config(format!("vocabulary cap {cap} is below 3")));
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    for t in tokens {
        let t = t.as_ref();
        if t == PAD || t == UNK {
            continue;
        }
        match freq.get_mut(t) {
            Some(c) => *c += 1,
            None => {
                freq.insert(t.to_string(), 1);
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut all = vec![PAD.to_string(), UNK.to_string()];
    all.extend(ranked.into_iter().take(cap - 2).map(|(t, _)| t));
    Ok(Vocabulary::from_tokens(all))
}

/// Fixed-length id sequence; positions at or after `true_length` hold `<pad>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

/// Truncates to `len`, maps unknown tokens to `<unk>` and pads to exactly `len`.
pub fn encode_tokens<S: AsRef<str>>(vocab: &Vocabulary, tokens: &[S], len: usize) -> TokenSequence {
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(len)
        .map(|t| vocab.id(t.as_ref()))
        .collect();
    let true_length = ids.len();
    ids.resize(len, PAD_ID);
    TokenSequence { ids, true_length }
}
