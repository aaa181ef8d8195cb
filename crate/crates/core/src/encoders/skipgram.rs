//! Skip-gram with negative sampling over API-name sequences.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 32,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelRepr", into = "ModelRepr")]
pub struct SkipGramModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    window: usize,
    negatives: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    final_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    vocab: Vec<String>,
    dim: usize,
    window: usize,
    negatives: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    final_loss: f64,
}

impl From<ModelRepr> for SkipGramModel {
    fn from(r: ModelRepr) -> Self {
        let index = r
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        SkipGramModel {
            vocab: r.vocab,
            index,
            dim: r.dim,
            window: r.window,
            negatives: r.negatives,
            input: r.input,
            output: r.output,
            final_loss: r.final_loss,
        }
    }
}

impl From<SkipGramModel> for ModelRepr {
    fn from(m: SkipGramModel) -> Self {
        ModelRepr {
            vocab: m.vocab,
            dim: m.dim,
            window: m.window,
            negatives: m.negatives,
            input: m.input,
            output: m.output,
            final_loss: m.final_loss,
        }
    }
}

impl SkipGramModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Mean per-pair loss over the last epoch.
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn vector(&self, name: &str) -> Option<&[f64]> {
        self.index
            .get(name)
            .map(|&i| &self.input[i * self.dim..(i + 1) * self.dim])
    }

    /// Input vector of `name`, or zeros when it was never seen in training.
    pub fn embed(&self, name: &str) -> Vec<f64> {
        self.vector(name)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
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

/// Trains embeddings with a linearly decaying learning rate.
///
/// Single-threaded and fully determined by `cfg.seed`.
pub fn train_skipgram<S: AsRef<str>>(
    corpus: &[Vec<S>],
    cfg: &SkipGramConfig,
) -> Result<SkipGramModel> {
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Error::config("skip-gram dim and window must be positive"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for w in seq {
            *counts.entry(w.as_ref()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("no API names to embed".into()));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let vocab: Vec<String> = ranked.iter().map(|(w, _)| w.to_string()).collect();
    let index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();

    // Negative sampling distribution: unigram^0.75.
    let mut cumulative = Vec::with_capacity(ranked.len());
    let mut acc = 0.0;
    for (_, c) in &ranked {
        acc += (*c as f64).powf(0.75);
        cumulative.push(acc);
    }

    let dim = cfg.dim;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..v * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0; v * dim];

    let ids: Vec<Vec<usize>> = corpus
        .iter()
        .map(|seq| seq.iter().map(|w| index[w.as_ref()]).collect())
        .collect();
    let words_per_epoch: usize = ids.iter().map(Vec::len).sum();
    let total = (words_per_epoch * cfg.epochs) as f64 + 1.0;
    let min_lr = cfg.learning_rate * 1e-4;

    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];
    let mut final_loss = 0.0;
    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for seq in &ids {
            for (i, &center) in seq.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - processed as f64 / total)).max(min_lr);
                processed += 1;
                let reduced = rng.gen_range(0..cfg.window);
                let span = cfg.window - reduced;
                let lo = i.saturating_sub(span);
                let hi = (i + span).min(seq.len() - 1);
                for (j, &context) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let c_in = center * dim;
                    for d in 0..=cfg.negatives {
                        let (target, label) = if d == 0 {
                            (context, 1.0)
                        } else {
                            let r = rng.gen::<f64>() * acc;
                            let t = cumulative.partition_point(|&c| c <= r).min(v - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let t_out = target * dim;
                        let f: f64 = (0..dim).map(|k| input[c_in + k] * output[t_out + k]).sum();
                        loss -= if label > 0.0 {
                            log_sigmoid(f)
                        } else {
                            log_sigmoid(-f)
                        };
                        let g = (label - sigmoid(f)) * lr;
                        for k in 0..dim {
                            grad[k] += g * output[t_out + k];
                            output[t_out + k] += g * input[c_in + k];
                        }
                    }
                    for k in 0..dim {
                        input[c_in + k] += grad[k];
                    }
                    pairs += 1;
                }
            }
        }
        final_loss = if pairs > 0 { loss / pairs as f64 } else { 0.0 };
    }

    Ok(SkipGramModel {
        vocab,
        index,
        dim,
        window: cfg.window,
        negatives: cfg.negatives,
        input,
        output,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<&'static str>> {
        vec![
            vec![
                "LdrLoadDll",
                "LdrGetProcedureAddress",
                "LdrGetProcedureAddress",
                "NtClose",
            ],
            vec![
                "NtCreateFile",
                "NtWriteFile",
                "NtClose",
                "LdrGetProcedureAddress",
            ],
            vec!["RegOpenKeyExW", "RegQueryValueExW", "RegCloseKey"],
        ]
    }

    #[test]
    fn every_name_embedded() {
        let m = train_skipgram(&corpus(), &SkipGramConfig::default()).unwrap();
        assert_eq!(m.vocab().len(), 8);
        for seq in corpus() {
            for w in seq {
                assert_eq!(m.vector(w).unwrap().len(), 32);
            }
        }
        assert!(m.is_finite());
        assert!(m.final_loss().is_finite());
        assert_eq!(m.embed("FooBarApi"), vec![0.0; 32]);
        assert_eq!(m.embed("NtClose"), m.embed("NtClose"));
    }

    #[test]
    fn deterministic() {
        let a = train_skipgram(&corpus(), &SkipGramConfig::default()).unwrap();
        let b = train_skipgram(&corpus(), &SkipGramConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = train_skipgram(
            &corpus(),
            &SkipGramConfig {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_corpus() {
        let m = train_skipgram(&[vec!["NtClose"; 6]], &SkipGramConfig::default()).unwrap();
        assert!(m.vector("NtClose").is_some());
        assert!(m.final_loss().is_finite());
        assert!(m.is_finite());
        let m = train_skipgram(&[vec!["NtClose"]], &SkipGramConfig::default()).unwrap();
        assert_eq!(m.final_loss(), 0.0);
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(matches!(
            train_skipgram(&empty, &SkipGramConfig::default()),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn shared_contexts_give_similar_vectors() {
        let mut seqs = Vec::new();
        for _ in 0..300 {
            seqs.push(vec!["X", "A", "Y"]);
            seqs.push(vec!["X", "B", "Y"]);
            seqs.push(vec!["P", "C", "Q"]);
        }
        let cfg = SkipGramConfig {
            dim: 8,
            window: 1,
            ..Default::default()
        };
        let m = train_skipgram(&seqs, &cfg).unwrap();
        let cos = |x: &[f64], y: &[f64]| {
            let d: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            d / (x.iter().map(|a| a * a).sum::<f64>().sqrt()
                * y.iter().map(|a| a * a).sum::<f64>().sqrt())
        };
        let (a, b, c) = (
            m.vector("A").unwrap(),
            m.vector("B").unwrap(),
            m.vector("C").unwrap(),
        );
        assert!(
            cos(a, b) > cos(a, c) + 0.5,
            "{} vs {}",
            cos(a, b),
            cos(a, c)
        );
    }
}
