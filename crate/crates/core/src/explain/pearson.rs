use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoders::{FeatureGroup, Layout};
use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::model::{ClassMap, Classifier, Dataset, SampleInput};

/// Name of the malware-vs-goodware row.
pub const ALL_ROW: &str = "All";

/// Scalar that stands in for a whole block of one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryStat {
    /// Mean absolute activation over the block's entries and the sample's calls.
    #[default]
    MeanAbs,
    /// Mean over calls of the block's Euclidean norm.
    L2,
    /// Largest absolute activation.
    Max,
}

impl std::str::FromStr for SummaryStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-abs" => Ok(SummaryStat::MeanAbs),
            "l2" => Ok(SummaryStat::L2),
            "max" => Ok(SummaryStat::Max),
            _ => Err(Error::config(format!("unknown summary statistic `{s}`"))),
        }
    }
}

fn summarize(
    rows: &[f64],
    dim: usize,
    len: usize,
    range: std::ops::Range<usize>,
    stat: SummaryStat,
) -> f64 {
    if len == 0 || range.is_empty() {
        return 0.0;
    }
    let width = range.len() as f64;
    let calls = (0..len).map(|t| &rows[t * dim + range.start..t * dim + range.end]);
    match stat {
        SummaryStat::MeanAbs => {
            calls.flat_map(|b| b.iter()).map(|x| x.abs()).sum::<f64>() / (len as f64 * width)
        }
        SummaryStat::L2 => {
            calls
                .map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt())
                .sum::<f64>()
                / len as f64
        }
        SummaryStat::Max => calls
            .flat_map(|b| b.iter())
            .fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Per-sample summaries of the four feature groups, in [`FeatureGroup::ALL`] order.
pub fn block_summaries(
    data: &Dataset,
    layout: &Layout,
    stat: SummaryStat,
) -> Result<Vec<[f64; 4]>> {
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let SampleInput::Dense { rows, dim } = data.sample(i) else {
            return Err(Error::Shape(
                "block summaries need knowledge-encoded inputs".into(),
            ));
        };
        if dim != layout.total() {
            return Err(Error::Shape(format!(
                "rows have {dim} values, layout expects {}",
                layout.total()
            )));
        }
        let mut s = [0.0; 4];
        for (k, g) in FeatureGroup::ALL.iter().enumerate() {
            s[k] = summarize(rows, dim, data.true_len[i], layout.group_range(*g), stat);
        }
        out.push(s);
    }
    Ok(out)
}

/// Sample Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(&x[..n]) || constant(&y[..n]) {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub target: String,
    /// One per feature group; `None` marks an undefined (zero-variance) entry.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCorrelation {
    pub stat: SummaryStat,
    pub groups: Vec<FeatureGroup>,
    pub rows: Vec<CorrelationRow>,
}

impl BlockCorrelation {
    /// `None` if the row does not exist, `Some(None)` if the entry is undefined.
    pub fn get(&self, target: &str, group: FeatureGroup) -> Option<Option<f64>> {
        let k = self.groups.iter().position(|g| *g == group)?;
        self.rows
            .iter()
            .find(|r| r.target == target)
            .map(|r| r.values[k])
    }

    pub fn flagged(&self) -> Vec<(String, FeatureGroup)> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (v, g) in r.values.iter().zip(&self.groups) {
                if v.is_none() {
                    out.push((r.target.clone(), *g));
                }
            }
        }
        out
    }

    /// Undefined entries are written as `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["target".to_string()];
        header.extend(self.groups.iter().map(|g| g.as_str().to_string()));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.target.clone()];
            rec.extend(
                r.values
                    .iter()
                    .map(|v| v.map_or("NA".to_string(), |x| format!("{x:.6}"))),
            );
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Correlates block summaries with each class.
///
/// Without a model the target is the one-vs-rest label indicator; with one it
/// is the model's probability for that class. The `All` row uses
/// malware-vs-goodware (or one minus the goodware probability).
pub fn pearson_blocks(
    data: &Dataset,
    classes: &ClassMap,
    layout: &Layout,
    stat: SummaryStat,
    model: Option<&dyn Classifier>,
) -> Result<BlockCorrelation> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus("no samples to correlate".into()));
    }
    let summaries = block_summaries(data, layout, stat)?;
    let probs = model.map(|m| m.predict_all(data));
    let target = |c: usize| -> Vec<f64> {
        match &probs {
            Some(p) => p.iter().map(|row| row[c]).collect(),
            None => data
                .labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { 0.0 })
                .collect(),
        }
    };
    let correlate = |y: &[f64]| -> Vec<Option<f64>> {
        (0..FeatureGroup::ALL.len())
            .map(|k| {
                let x: Vec<f64> = summaries.iter().map(|s| s[k]).collect();
                pearson(&x, y)
            })
            .collect()
    };
    let mut rows: Vec<CorrelationRow> = (0..classes.len())
        .map(|c| CorrelationRow {
            target: classes.name(c).to_string(),
            values: correlate(&target(c)),
        })
        .collect();
    let good = classes
        .names
        .iter()
        .position(|n| Label::new(n.as_str()).is_goodware());
    let malware: Vec<f64> = match good {
        Some(g) => target(g).into_iter().map(|v| 1.0 - v).collect(),
        None => vec![1.0; data.len()],
    };
    rows.push(CorrelationRow {
        target: ALL_ROW.to_string(),
        values: correlate(&malware),
    });
    Ok(BlockCorrelation {
        stat,
        groups: FeatureGroup::ALL.to_vec(),
        rows,
    })
}
