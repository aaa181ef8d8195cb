use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean_std, Attribution, AttributionReport, Method};
use crate::encoders::hashing::keyed_hash;
use crate::encoders::{FeatureGroup, Layout};
use crate::error::{Error, Result};
use crate::model::{compute_metrics, ClassMap, Classifier, Dataset, Inputs};
use crate::nlp::{Vocabulary, PAD_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationConfig {
    pub repeats: usize,
    pub seed: u64,
    /// Only the tokens whose presence varies most are scored.
    pub max_tokens: usize,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            repeats: 5,
            seed: 0,
            max_tokens: 50,
        }
    }
}

fn macro_f1(model: &dyn Classifier, data: &Dataset) -> f64 {
    compute_metrics(&model.predict_all(data), &data.labels, model.num_classes()).macro_f1
}

fn rng_for(seed: u64, feature: &str, repeat: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed_hash(seed, format!("{feature}/{repeat}").as_bytes()))
}

fn check(data: &Dataset, cfg: &PermutationConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus("no samples to permute".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::config(
            "permutation importance needs at least one repeat",
        ));
    }
    data.validate()
}

/// Shuffles each feature group's columns across samples (whole sequences move
/// together) and reports the mean macro-F1 drop.
pub fn permutation_importance_blocks(
    model: &dyn Classifier,
    data: &Dataset,
    layout: &Layout,
    cfg: &PermutationConfig,
) -> Result<AttributionReport> {
    check(data, cfg)?;
    let Inputs::Dense {
        seq_len,
        dim,
        values,
    } = &data.inputs
    else {
        return Err(Error::Shape(
            "block permutation needs knowledge-encoded inputs".into(),
        ));
    };
    if *dim != layout.total() {
        return Err(Error::Shape(format!(
            "rows have {dim} values, layout expects {}",
            layout.total()
        )));
    }
    let reference = macro_f1(model, data);
    let stride = seq_len * dim;
    let mut entries = Vec::new();
    for g in FeatureGroup::ALL {
        let range = layout.group_range(g);
        let mut drops = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let mut perm: Vec<usize> = (0..data.len()).collect();
            perm.shuffle(&mut rng_for(cfg.seed, g.as_str(), r));
            let mut shuffled = values.clone();
            for (i, &src) in perm.iter().enumerate() {
                for t in 0..*seq_len {
                    let (a, b) = (i * stride + t * dim, src * stride + t * dim);
                    shuffled[a + range.start..a + range.end]
                        .copy_from_slice(&values[b + range.start..b + range.end]);
                }
            }
            let perturbed = Dataset {
                inputs: Inputs::Dense {
                    seq_len: *seq_len,
                    dim: *dim,
                    values: shuffled,
                },
                ..data.clone()
            };
            drops.push(reference - macro_f1(model, &perturbed));
        }
        let (score, spread) = mean_std(&drops);
        entries.push(Attribution {
            feature: g.as_str().to_string(),
            score,
            spread,
        });
    }
    Ok(AttributionReport {
        method: Method::Permutation,
        target: "macro-f1".into(),
        reference,
        baseline: None,
        entries,
    })
}

fn token_view(data: &Dataset) -> Result<(usize, &[u32])> {
    match &data.inputs {
        Inputs::Tokens { seq_len, ids } => Ok((*seq_len, ids)),
        Inputs::Dense { .. } => Err(Error::Shape("token attribution needs token inputs".into())),
    }
}

/// Non-pad tokens by how many samples contain them, most widespread first.
pub fn candidate_tokens(data: &Dataset, max: usize) -> Result<Vec<u32>> {
    let mut v: Vec<(u32, usize)> = document_frequency(data)?.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(v.into_iter().take(max).map(|(t, _)| t).collect())
}

/// Tokens whose presence varies most across samples, by `df * (n - df)`.
/// A token every sample (or no sample) holds cannot move under a presence
/// shuffle, so it is never returned.
pub fn varying_tokens(data: &Dataset, max: usize) -> Result<Vec<u32>> {
    let n = data.len();
    let mut v: Vec<(u32, usize)> = document_frequency(data)?
        .into_iter()
        .filter(|&(_, df)| df < n)
        .map(|(t, df)| (t, df * (n - df)))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(v.into_iter().take(max).map(|(t, _)| t).collect())
}

fn document_frequency(data: &Dataset) -> Result<HashMap<u32, usize>> {
    let (seq_len, ids) = token_view(data)?;
    let mut df: HashMap<u32, usize> = HashMap::new();
    for (i, &len) in data.true_len.iter().enumerate() {
        let mut seen: Vec<u32> = ids[i * seq_len..i * seq_len + len]
            .iter()
            .copied()
            .filter(|&t| t != PAD_ID)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    Ok(df)
}

fn token_name(vocab: &Vocabulary, id: u32) -> String {
    vocab
        .token(id)
        .map_or_else(|| format!("#{id}"), str::to_string)
}

/// Token presence is the column: each sample takes the presence of a token
/// from a shuffled donor. Losing it deletes its occurrences; gaining it
/// inserts the donor's occurrences at the donor's positions. Reports the
/// mean macro-F1 drop.
pub fn permutation_importance_tokens(
    model: &dyn Classifier,
    data: &Dataset,
    vocab: &Vocabulary,
    cfg: &PermutationConfig,
) -> Result<AttributionReport> {
    check(data, cfg)?;
    let (seq_len, ids) = token_view(data)?;
    let reference = macro_f1(model, data);
    let rows: Vec<&[u32]> = (0..data.len())
        .map(|i| &ids[i * seq_len..i * seq_len + data.true_len[i]])
        .collect();
    let mut entries = Vec::new();
    for tok in varying_tokens(data, cfg.max_tokens)? {
        let name = token_name(vocab, tok);
        let positions: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &t)| t == tok)
                    .map(|(p, _)| p)
                    .collect()
            })
            .collect();
        let mut drops = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let mut perm: Vec<usize> = (0..data.len()).collect();
            perm.shuffle(&mut rng_for(cfg.seed, &name, r));
            let mut shuffled = Vec::with_capacity(ids.len());
            let mut true_len = Vec::with_capacity(data.len());
            for (i, &donor) in perm.iter().enumerate() {
                let has = !positions[i].is_empty();
                let gets = !positions[donor].is_empty();
                let mut row: Vec<u32> = match (has, gets) {
                    (true, false) => rows[i].iter().copied().filter(|&t| t != tok).collect(),
                    (false, true) => {
                        let mut row = rows[i].to_vec();
                        for &p in &positions[donor] {
                            row.insert(p.min(row.len()), tok);
                        }
                        row
                    }
                    _ => rows[i].to_vec(),
                };
                row.truncate(seq_len);
                true_len.push(row.len());
                row.resize(seq_len, PAD_ID);
                shuffled.extend(row);
            }
            let perturbed = Dataset {
                inputs: Inputs::Tokens {
                    seq_len,
                    ids: shuffled,
                },
                true_len,
                ..data.clone()
            };
            drops.push(reference - macro_f1(model, &perturbed));
        }
        let (score, spread) = mean_std(&drops);
        entries.push(Attribution {
            feature: name,
            score,
            spread,
        });
    }
    Ok(AttributionReport {
        method: Method::Permutation,
        target: "macro-f1".into(),
        reference,
        baseline: None,
        entries,
    })
}

/// Top tokens per class, one column per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTable {
    pub classes: Vec<String>,
    /// `columns[c]` holds up to `k` `(token, score)` pairs, best first.
    pub columns: Vec<Vec<(String, f64)>>,
}

impl TokenTable {
    /// Rows are ranks; each class contributes a token and a score column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["rank".to_string()];
        for c in &self.classes {
            header.push(format!("{c}_token"));
            header.push(format!("{c}_score"));
        }
        out.write_record(&header)?;
        let depth = self.columns.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..depth {
            let mut rec = vec![(r + 1).to_string()];
            for col in &self.columns {
                match col.get(r) {
                    Some((t, s)) => {
                        rec.push(t.clone());
                        rec.push(format!("{s:.6}"));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Occlusion: drop in the true-class probability when a token's occurrences
/// become padding, averaged over the samples that contain it.
///
/// Returns the overall ranking and the per-class top-`k` table.
pub fn occlusion_tokens(
    model: &dyn Classifier,
    data: &Dataset,
    vocab: &Vocabulary,
    classes: &ClassMap,
    max_tokens: usize,
    k: usize,
) -> Result<(AttributionReport, TokenTable)> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus("no samples to occlude".into()));
    }
    let (seq_len, ids) = token_view(data)?;
    let before = model.predict_all(data);
    let mut entries = Vec::new();
    let mut per_class: Vec<Vec<(String, f64)>> = vec![Vec::new(); classes.len()];
    for tok in candidate_tokens(data, max_tokens)? {
        let holders: Vec<usize> = (0..data.len())
            .filter(|&i| ids[i * seq_len..i * seq_len + data.true_len[i]].contains(&tok))
            .collect();
        let mut sub = data.subset(&holders);
        if let Inputs::Tokens { ids, .. } = &mut sub.inputs {
            ids.iter_mut()
                .filter(|t| **t == tok)
                .for_each(|t| *t = PAD_ID);
        }
        let after = model.predict_all(&sub);
        let mut sums = vec![(0.0, 0usize); classes.len()];
        let mut drops = Vec::with_capacity(holders.len());
        for (j, &i) in holders.iter().enumerate() {
            let y = data.labels[i];
            let d = before[i][y] - after[j][y];
            drops.push(d);
            if y < sums.len() {
                sums[y].0 += d;
                sums[y].1 += 1;
            }
        }
        let name = token_name(vocab, tok);
        for (c, (s, n)) in sums.into_iter().enumerate() {
            if n > 0 {
                per_class[c].push((name.clone(), s / n as f64));
            }
        }
        let (score, spread) = mean_std(&drops);
        entries.push(Attribution {
            feature: name,
            score,
            spread,
        });
    }
    for col in &mut per_class {
        col.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        col.truncate(k);
    }
    let reference = before
        .iter()
        .zip(&data.labels)
        .map(|(p, &y)| p[y])
        .sum::<f64>()
        / data.len() as f64;
    Ok((
        AttributionReport {
            method: Method::Occlusion,
            target: "p(true class)".into(),
            reference,
            baseline: None,
            entries,
        },
        TokenTable {
            classes: classes.names.clone(),
            columns: per_class,
        },
    ))
}
