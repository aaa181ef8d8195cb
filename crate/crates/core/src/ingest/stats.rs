use serde::{Deserialize, Serialize};

use super::{ArgValue, Report};
use crate::error::{Error, Result};

/// Raw unit counts: one per call for its API name, one per argument by type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub api_name: u64,
    pub string: u64,
    pub integer: u64,
    pub vaddr: u64,
}

impl TypeCounts {
    pub fn total(&self) -> u64 {
        self.api_name + self.string + self.integer + self.vaddr
    }

    pub fn add(&mut self, other: &TypeCounts) {
        self.api_name += other.api_name;
        self.string += other.string;
        self.integer += other.integer;
        self.vaddr += other.vaddr;
    }

    pub fn proportions(&self) -> Option<TypeProportions> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let t = total as f64;
        Some(TypeProportions {
            api_name: self.api_name as f64 / t,
            string: self.string as f64 / t,
            integer: self.integer as f64 / t,
            vaddr: self.vaddr as f64 / t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeProportions {
    pub api_name: f64,
    pub string: f64,
    pub integer: f64,
    pub vaddr: f64,
}

impl TypeProportions {
    pub fn as_array(&self) -> [f64; 4] {
        [self.api_name, self.string, self.integer, self.vaddr]
    }

    pub fn l1_distance(&self, other: &TypeProportions) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Counts units over at most the first `limit` calls of each report.
pub fn type_counts<'a, I>(corpus: I, limit: Option<usize>) -> TypeCounts
where
    I: IntoIterator<Item = &'a Report>,
{
    let mut c = TypeCounts::default();
    for report in corpus {
        let n = limit.unwrap_or(usize::MAX).min(report.calls.len());
        for call in &report.calls[..n] {
            c.api_name += 1;
            for arg in &call.arguments {
                match arg.value {
                    ArgValue::Str(_) => c.string += 1,
                    ArgValue::Int(_) => c.integer += 1,
                    ArgValue::VAddr(_) => c.vaddr += 1,
                }
            }
        }
    }
    c
}

/// Fraction of each value type across the corpus.
pub fn type_proportions(corpus: &[Report]) -> Result<TypeProportions> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(
            "type proportions need at least one report".into(),
        ));
    }
    type_counts(corpus, None)
        .proportions()
        .ok_or_else(|| Error::EmptyCorpus("corpus contains no API calls".into()))
}
