//! Attribution of model decisions to feature blocks and tokens.
//!
//! Three tools: Pearson correlation between per-sample block summaries and
//! class indicators, permutation importance measured as the macro-F1 drop,
//! and exact Shapley values by coalition enumeration for small feature sets.

mod pearson;
mod permutation;
mod shapley;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use pearson::{
    block_summaries, pearson, pearson_blocks, BlockCorrelation, CorrelationRow, SummaryStat,
    ALL_ROW,
};
pub use permutation::{
    candidate_tokens, occlusion_tokens, permutation_importance_blocks,
    permutation_importance_tokens, varying_tokens, PermutationConfig, TokenTable,
};
pub use shapley::{
    shapley_blocks, shapley_coalitions, shapley_tokens, shapley_values, MAX_SHAPLEY_FEATURES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Permutation,
    ShapleyExact,
    Occlusion,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Permutation => "permutation",
            Method::ShapleyExact => "shapley-exact",
            Method::Occlusion => "occlusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    pub score: f64,
    /// Standard deviation over repeats; zero for deterministic methods.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub method: Method,
    /// What the scores are differences of, e.g. `macro-f1` or `p(class)`.
    pub target: String,
    /// Target value on the untouched input.
    pub reference: f64,
    /// Target value with every feature removed (Shapley only).
    pub baseline: Option<f64>,
    /// In feature order.
    pub entries: Vec<Attribution>,
}

impl AttributionReport {
    /// Entries by descending score, ties by feature name.
    pub fn ranked(&self) -> Vec<&Attribution> {
        let mut v: Vec<&Attribution> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.feature.cmp(&b.feature))
        });
        v
    }

    pub fn top(&self) -> Option<&Attribution> {
        self.ranked().into_iter().next()
    }

    pub fn score(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|a| a.feature == feature)
            .map(|a| a.score)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "feature", "score", "spread", "method", "target"])?;
        for (i, a) in self.ranked().into_iter().enumerate() {
            out.write_record([
                (i + 1).to_string(),
                a.feature.clone(),
                a.score.to_string(),
                a.spread.to_string(),
                self.method.as_str().to_string(),
                self.target.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
