use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderBundle, FeatureMask};
use crate::error::{Error, Result};
use crate::ingest::Report;
use crate::nlp::NlpPipeline;

/// Ordered class names; the class index is the position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub names: Vec<String>,
}

impl ClassMap {
    /// Sorted distinct labels.
    pub fn from_labels<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Self {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        ClassMap {
            names: set.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

/// Per-sample model input, stored densely for the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// `n * seq_len * dim` values, row-major; rows past a sample's length are zero.
    Dense {
        seq_len: usize,
        dim: usize,
        values: Vec<f64>,
    },
    /// `n * seq_len` token ids; positions past a sample's length hold the pad id.
    Tokens { seq_len: usize, ids: Vec<u32> },
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy)]
pub enum SampleInput<'a> {
    Dense { rows: &'a [f64], dim: usize },
    Tokens { ids: &'a [u32] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub true_len: Vec<usize>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        match &self.inputs {
            Inputs::Dense { seq_len, .. } | Inputs::Tokens { seq_len, .. } => *seq_len,
        }
    }

    pub fn sample(&self, i: usize) -> SampleInput<'_> {
        match &self.inputs {
            Inputs::Dense {
                seq_len,
                dim,
                values,
            } => {
                let n = seq_len * dim;
                SampleInput::Dense {
                    rows: &values[i * n..(i + 1) * n],
                    dim: *dim,
                }
            }
            Inputs::Tokens { seq_len, ids } => SampleInput::Tokens {
                ids: &ids[i * seq_len..(i + 1) * seq_len],
            },
        }
    }

    /// Checks buffer sizes against the sample count.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.true_len.len() != n || self.sample_ids.len() != n {
            return Err(Error::Shape(
                "labels, lengths and ids differ in count".into(),
            ));
        }
        let (expected, got) = match &self.inputs {
            Inputs::Dense {
                seq_len,
                dim,
                values,
            } => (n * seq_len * dim, values.len()),
            Inputs::Tokens { seq_len, ids } => (n * seq_len, ids.len()),
        };
        if expected != got {
            return Err(Error::Shape(format!(
                "input buffer holds {got} values, expected {expected}"
            )));
        }
        if self.true_len.iter().any(|&l| l > self.seq_len()) {
            return Err(Error::Shape("true length exceeds sequence length".into()));
        }
        Ok(())
    }

    /// Copies the listed samples into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let inputs = match &self.inputs {
            Inputs::Dense {
                seq_len,
                dim,
                values,
            } => {
                let n = seq_len * dim;
                let mut out = Vec::with_capacity(idx.len() * n);
                for &i in idx {
                    out.extend_from_slice(&values[i * n..(i + 1) * n]);
                }
                Inputs::Dense {
                    seq_len: *seq_len,
                    dim: *dim,
                    values: out,
                }
            }
            Inputs::Tokens { seq_len, ids } => {
                let mut out = Vec::with_capacity(idx.len() * seq_len);
                for &i in idx {
                    out.extend_from_slice(&ids[i * seq_len..(i + 1) * seq_len]);
                }
                Inputs::Tokens {
                    seq_len: *seq_len,
                    ids: out,
                }
            }
        };
        Dataset {
            inputs,
            true_len: idx.iter().map(|&i| self.true_len[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }

    /// Mean over each sample's first `true_len` rows (dense inputs only).
    pub fn mean_pooled(&self) -> Result<Vec<Vec<f64>>> {
        let Inputs::Dense {
            seq_len,
            dim,
            values,
        } = &self.inputs
        else {
            return Err(Error::Shape("mean pooling needs dense inputs".into()));
        };
        let mut out = Vec::with_capacity(self.len());
        for (i, &len) in self.true_len.iter().enumerate() {
            let base = i * seq_len * dim;
            let mut v = vec![0.0; *dim];
            for t in 0..len {
                for (acc, x) in v
                    .iter_mut()
                    .zip(&values[base + t * dim..base + (t + 1) * dim])
                {
                    *acc += x;
                }
            }
            if len > 0 {
                v.iter_mut().for_each(|x| *x /= len as f64);
            }
            out.push(v);
        }
        Ok(out)
    }
}

fn label_indices(reports: &[Report], classes: &ClassMap) -> Result<Vec<usize>> {
    reports
        .iter()
        .map(|r| {
            classes.index(r.label.as_str()).ok_or_else(|| {
                Error::Shape(format!(
                    "label `{}` of `{}` is not a known class",
                    r.label, r.sample_id
                ))
            })
        })
        .collect()
}

/// Encodes each report's first `seq_len` calls with the knowledge encoders.
pub fn knowledge_dataset(
    bundle: &EncoderBundle,
    reports: &[Report],
    mask: FeatureMask,
    seq_len: usize,
    classes: &ClassMap,
) -> Result<Dataset> {
    if seq_len == 0 {
        return Err(Error::config("seq_len must be positive"));
    }
    let dim = bundle.dim();
    let mut values = Vec::with_capacity(reports.len() * seq_len * dim);
    for r in reports {
        let rows = bundle.encode_report(r, mask, seq_len);
        let pad = seq_len * dim - rows.len();
        values.extend(rows);
        values.extend(std::iter::repeat(0.0).take(pad));
    }
    Ok(Dataset {
        inputs: Inputs::Dense {
            seq_len,
            dim,
            values,
        },
        true_len: reports.iter().map(|r| r.calls.len().min(seq_len)).collect(),
        labels: label_indices(reports, classes)?,
        sample_ids: reports.iter().map(|r| r.sample_id.clone()).collect(),
    })
}

/// Tokenizes each report into a fixed-length id sequence.
pub fn nlp_dataset(
    pipeline: &NlpPipeline,
    reports: &[Report],
    classes: &ClassMap,
) -> Result<Dataset> {
    let seq_len = pipeline.config.seq_len;
    let mut ids = Vec::with_capacity(reports.len() * seq_len);
    let mut true_len = Vec::with_capacity(reports.len());
    for r in reports {
        let s = pipeline.encode(r);
        ids.extend(s.ids);
        true_len.push(s.true_length);
    }
    Ok(Dataset {
        inputs: Inputs::Tokens { seq_len, ids },
        true_len,
        labels: label_indices(reports, classes)?,
        sample_ids: reports.iter().map(|r| r.sample_id.clone()).collect(),
    })
}

pub const DATASET_VERSION: u32 = 1;
const DATASET_MAGIC: &[u8; 8] = b"APFTDATA";

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    kind: String,
    seq_len: usize,
    dim: usize,
    true_len: Vec<usize>,
    labels: Vec<usize>,
    sample_ids: Vec<String>,
    classes: ClassMap,
    meta: std::collections::BTreeMap<String, String>,
}

impl Dataset {
    /// Magic, version, JSON header length and header, then only the first
    /// `true_len` rows (f64) or ids (u32) of each sample, little-endian.
    pub fn write<W: Write>(
        &self,
        mut w: W,
        classes: &ClassMap,
        meta: &std::collections::BTreeMap<String, String>,
    ) -> Result<()> {
        self.validate()?;
        let (kind, seq_len, dim) = match &self.inputs {
            Inputs::Dense { seq_len, dim, .. } => ("dense", *seq_len, *dim),
            Inputs::Tokens { seq_len, .. } => ("tokens", *seq_len, 1),
        };
        let header = DatasetHeader {
            kind: kind.into(),
            seq_len,
            dim,
            true_len: self.true_len.clone(),
            labels: self.labels.clone(),
            sample_ids: self.sample_ids.clone(),
            classes: classes.clone(),
            meta: meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format(e.to_string()))?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::new();
        for (i, &len) in self.true_len.iter().enumerate() {
            match self.sample(i) {
                SampleInput::Dense { rows, dim } => rows[..len * dim]
                    .iter()
                    .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
                SampleInput::Tokens { ids } => ids[..len]
                    .iter()
                    .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            }
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`Dataset::write`]; also returns the class map and metadata.
    pub fn read<R: Read>(
        mut r: R,
    ) -> Result<(
        Dataset,
        ClassMap,
        std::collections::BTreeMap<String, String>,
    )> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::format("not an encoded dataset"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != DATASET_VERSION {
            return Err(Error::format(format!(
                "unsupported dataset version {}",
                u32::from_le_bytes(b4)
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let mut json = vec![0u8; u64::from_le_bytes(b8) as usize];
        r.read_exact(&mut json)?;
        let h: DatasetHeader = serde_json::from_slice(&json)
            .map_err(|e| Error::format(format!("dataset header: {e}")))?;
        let n = h.labels.len();
        if h.true_len.len() != n
            || h.sample_ids.len() != n
            || h.true_len.iter().any(|&l| l > h.seq_len)
        {
            return Err(Error::format("inconsistent dataset header"));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let inputs = match h.kind.as_str() {
            "dense" => {
                let total: usize = h.true_len.iter().sum::<usize>() * h.dim;
                if payload.len() != total * 8 {
                    return Err(Error::format("dataset payload has the wrong size"));
                }
                let mut values = vec![0.0; n * h.seq_len * h.dim];
                let mut chunks = payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
                for (i, &len) in h.true_len.iter().enumerate() {
                    let base = i * h.seq_len * h.dim;
                    for v in &mut values[base..base + len * h.dim] {
                        *v = chunks.next().expect("size checked");
                    }
                }
                Inputs::Dense {
                    seq_len: h.seq_len,
                    dim: h.dim,
                    values,
                }
            }
            "tokens" => {
                if payload.len() != h.true_len.iter().sum::<usize>() * 4 {
                    return Err(Error::format("dataset payload has the wrong size"));
                }
                let mut ids = vec![crate::nlp::PAD_ID; n * h.seq_len];
                let mut chunks = payload
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")));
                for (i, &len) in h.true_len.iter().enumerate() {
                    for v in &mut ids[i * h.seq_len..i * h.seq_len + len] {
                        *v = chunks.next().expect("size checked");
                    }
                }
                Inputs::Tokens {
                    seq_len: h.seq_len,
                    ids,
                }
            }
            other => return Err(Error::format(format!("unknown dataset kind `{other}`"))),
        };
        let ds = Dataset {
            inputs,
            true_len: h.true_len,
            labels: h.labels,
            sample_ids: h.sample_ids,
        };
        Ok((ds, h.classes, h.meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let meta: std::collections::BTreeMap<String, String> =
            [("k".to_string(), "v".to_string())].into();
        let classes = ClassMap {
            names: vec!["a".into(), "b".into()],
        };
        let dense = Dataset {
            inputs: Inputs::Dense {
                seq_len: 3,
                dim: 2,
                values: vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, -1.5, 0.25, 0.0, 0.0, 0.0, 0.0],
            },
            true_len: vec![2, 1],
            labels: vec![1, 0],
            sample_ids: vec!["x".into(), "y".into()],
        };
        let tokens = Dataset {
            inputs: Inputs::Tokens {
                seq_len: 3,
                ids: vec![5, 6, 7, 9, 0, 0],
            },
            ..dense.clone()
        };
        let tokens = Dataset {
            true_len: vec![3, 1],
            ..tokens
        };
        for ds in [dense, tokens] {
            let mut buf = Vec::new();
            ds.write(&mut buf, &classes, &meta).unwrap();
            let (back, c, m) = Dataset::read(buf.as_slice()).unwrap();
            assert_eq!(back, ds);
            assert_eq!((c, m), (classes.clone(), meta.clone()));
            buf.pop();
            assert!(matches!(
                Dataset::read(buf.as_slice()),
                Err(Error::Format(_))
            ));
        }
    }

    #[test]
    fn subset_and_pool() {
        let ds = Dataset {
            inputs: Inputs::Dense {
                seq_len: 2,
                dim: 2,
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0],
            },
            true_len: vec![2, 1],
            labels: vec![0, 1],
            sample_ids: vec!["a".into(), "b".into()],
        };
        ds.validate().unwrap();
        assert_eq!(
            ds.mean_pooled().unwrap(),
            vec![vec![2.0, 3.0], vec![5.0, 6.0]]
        );
        let s = ds.subset(&[1]);
        assert_eq!(s.sample_ids, ["b"]);
        assert_eq!(s.mean_pooled().unwrap(), vec![vec![5.0, 6.0]]);
    }

    #[test]
    fn class_map_sorted() {
        let c = ClassMap::from_labels(["b", "a", "b"]);
        assert_eq!(c.names, ["a", "b"]);
        assert_eq!(c.index("b"), Some(1));
        assert_eq!(c.index("z"), None);
    }
}
