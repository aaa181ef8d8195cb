//! Byte-pair encoding learned over whitespace-delimited words.
//!
//! Merges never cross word boundaries. Pair frequencies count every adjacent
//! position (so `aaa` holds two `(a, a)` pairs) weighted by word frequency;
//! the most frequent pair wins, ties going to the lexicographically smallest
//! `(left, right)`. Training stops once no pair occurs at least twice.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

type Pair = (String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeMerges {
    merges: Vec<Pair>,
    ranks: HashMap<Pair, usize>,
}

impl BpeMerges {
    pub fn new(merges: Vec<Pair>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        BpeMerges { merges, ranks }
    }

    pub fn merges(&self) -> &[Pair] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Splits a word into characters and applies the merges in learned order.
    pub fn apply(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        let mut last: Option<usize> = None;
        loop {
            // Lowest-ranked applicable merge that comes after the last one
            // applied; equivalent to sweeping the merge list once in order.
            let next = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .filter(|&r| last.map_or(true, |l| r > l))
                .min();
            let Some(rank) = next else { break };
            let (left, right) = &self.merges[rank];
            symbols = merge_word(&symbols, left, right);
            last = Some(rank);
        }
        symbols
    }

    /// One `left right` pair per line, in learned order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut merges = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (l, r) = line.split_once(' ').ok_or_else(|| {
                Error::format(format!("merges line {}: expected `left right`", i + 1))
            })?;
            merges.push((l.to_string(), r.to_string()));
        }
        Ok(BpeMerges::new(merges))
    }
}

/// Replaces every non-overlapping `(left, right)` occurrence, scanning left to right.
fn merge_word(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Learns up to `num_merges` merge rules from whitespace-token streams.
pub fn train_bpe<S: AsRef<str>>(corpus: &[Vec<S>], num_merges: usize) -> Result<BpeMerges> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        for tok in doc {
            *freq.entry(tok.as_ref()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus("no tokens to learn merges from".into()));
    }
    let mut vocab: Vec<(&str, u64)> = freq.into_iter().collect();
    vocab.sort_unstable();
    let mut words: Vec<Vec<String>> = vocab
        .iter()
        .map(|(w, _)| w.chars().map(String::from).collect())
        .collect();
    let counts: Vec<u64> = vocab.iter().map(|(_, c)| *c).collect();

    let mut pair_counts: HashMap<Pair, u64> = HashMap::new();
    let mut where_: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (i, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            let pair = (p[0].clone(), p[1].clone());
            *pair_counts.entry(pair.clone()).or_default() += counts[i];
            where_.entry(pair).or_default().insert(i);
        }
    }

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let best = pair_counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(p, _)| p.clone());
        let Some(best) = best else { break };

        let mut touched: Vec<usize> = where_
            .remove(&best)
            .unwrap_or_default()
            .into_iter()
            .collect();
        touched.sort_unstable();
        for i in touched {
            let old = &words[i];
            let merged = merge_word(old, &best.0, &best.1);
            if merged.len() == old.len() {
                continue;
            }
            for p in old.windows(2) {
                let pair = (p[0].clone(), p[1].clone());
                if let Some(c) = pair_counts.get_mut(&pair) {
                    *c -= counts[i];
                    if *c == 0 {
                        pair_counts.remove(&pair);
                    }
                }
            }
            for p in merged.windows(2) {
                let pair = (p[0].clone(), p[1].clone());
                *pair_counts.entry(pair.clone()).or_default() += counts[i];
                where_.entry(pair).or_default().insert(i);
            }
            words[i] = merged;
        }
        pair_counts.remove(&best);
        merges.push(best);
    }
    Ok(BpeMerges::new(merges))
}
