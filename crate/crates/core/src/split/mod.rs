//! Bias-aware temporal splitting.
//!
//! Samples are partitioned by month into train, validation and test. Within
//! each month malware families are downsampled to the smallest family and
//! goodware to a fixed multiple of the remaining malware. Families first seen
//! after the training window are kept out of train and validation entirely.

mod profile;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::hashing::keyed_hash;
use crate::error::{Error, Result};
use crate::ingest::{Label, ManifestEntry, Month};

pub use profile::{covariate_profile, CovariateProfile, MonthProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::format(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioScope {
    /// Goodware sized against the malware of the same month.
    #[default]
    PerMonth,
    /// Goodware sized against all malware, sampled from the whole pool.
    Global,
}

fn default_ratio() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_profile_calls() -> usize {
    1024
}
fn default_drift_threshold() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Last month (inclusive) of the training window.
    pub train_end: Month,
    /// Last month (inclusive) of the validation window.
    pub val_end: Month,
    #[serde(default = "default_ratio")]
    pub goodware_ratio: f64,
    #[serde(default)]
    pub ratio_scope: RatioScope,
    #[serde(default = "default_true")]
    pub balance_families: bool,
    #[serde(default = "default_true")]
    pub holdout_new_families: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_profile_calls")]
    pub profile_calls: usize,
    #[serde(default = "default_drift_threshold")]
    pub drift_threshold: f64,
}

impl SplitConfig {
    pub fn new(train_end: Month, val_end: Month) -> Self {
        SplitConfig {
            train_end,
            val_end,
            goodware_ratio: default_ratio(),
            ratio_scope: RatioScope::PerMonth,
            balance_families: true,
            holdout_new_families: true,
            seed: 0,
            profile_calls: default_profile_calls(),
            drift_threshold: default_drift_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_end >= self.val_end {
            return Err(Error::config(format!(
                "train_end {} must precede val_end {}",
                self.train_end, self.val_end
            )));
        }
        if !(self.goodware_ratio.is_finite() && self.goodware_ratio >= 0.0) {
            return Err(Error::config(
                "goodware_ratio must be a non-negative number",
            ));
        }
        Ok(())
    }

    pub fn split_of(&self, month: Month) -> Split {
        if month <= self.train_end {
            Split::Train
        } else if month <= self.val_end {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub sample_id: String,
    pub split: Split,
    pub month: Month,
    pub family: Label,
    pub kept: bool,
}

/// Downsampling outcome for one month.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub month: Option<Month>,
    pub family_available: BTreeMap<String, usize>,
    pub family_kept: BTreeMap<String, usize>,
    pub goodware_available: usize,
    pub goodware_kept: usize,
    pub goodware_shortfall: bool,
    pub no_malware: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_months: Vec<Month>,
    pub val_months: Vec<Month>,
    pub test_months: Vec<Month>,
    pub holdout_families: BTreeSet<String>,
    pub records: Vec<MonthRecord>,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    pub fn months(&self, split: Split) -> &[Month] {
        match split {
            Split::Train => &self.train_months,
            Split::Val => &self.val_months,
            Split::Test => &self.test_months,
        }
    }

    /// Kept sample ids of one split, in manifest order.
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.kept && a.split == split)
            .map(|a| a.sample_id.as_str())
            .collect()
    }

    pub fn kept_count(&self, split: Split) -> usize {
        self.assignments
            .iter()
            .filter(|a| a.kept && a.split == split)
            .count()
    }

    fn ensure_nonempty(&self) -> Result<()> {
        for s in Split::ALL {
            if self.kept_count(s) == 0 {
                return Err(Error::Split {
                    partition: s.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Assigns every sample to a split by month, keeping all of them.
pub fn temporal_split(
    entries: &[ManifestEntry],
    train_end: Month,
    val_end: Month,
) -> Result<SplitPlan> {
    let cfg = SplitConfig::new(train_end, val_end);
    cfg.validate()?;
    let plan = skeleton(entries, &cfg)?;
    plan.ensure_nonempty()?;
    Ok(plan)
}

fn skeleton(entries: &[ManifestEntry], cfg: &SplitConfig) -> Result<SplitPlan> {
    let mut seen = BTreeSet::new();
    let mut assignments = Vec::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.sample_id.as_str()) {
            return Err(Error::schema(
                "sample_id",
                format!("duplicate sample id `{}`", e.sample_id),
            ));
        }
        assignments.push(Assignment {
            sample_id: e.sample_id.clone(),
            split: cfg.split_of(e.month),
            month: e.month,
            family: e.label.clone(),
            kept: true,
        });
    }
    assignments.sort_by(|a, b| (a.month, &a.sample_id).cmp(&(b.month, &b.sample_id)));
    let months: BTreeSet<Month> = assignments.iter().map(|a| a.month).collect();
    let pick = |s: Split| {
        months
            .iter()
            .copied()
            .filter(|m| cfg.split_of(*m) == s)
            .collect()
    };
    Ok(SplitPlan {
        train_months: pick(Split::Train),
        val_months: pick(Split::Val),
        test_months: pick(Split::Test),
        holdout_families: BTreeSet::new(),
        records: Vec::new(),
        seed: cfg.seed,
        assignments,
        warnings: Vec::new(),
    })
}

/// Seeded uniform sample of `k` ids without replacement, returned sorted.
fn sample_ids(mut ids: Vec<String>, k: usize, seed: u64, tag: &str) -> Vec<String> {
    ids.sort_unstable();
    if k < ids.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(keyed_hash(seed, tag.as_bytes()));
        ids.shuffle(&mut rng);
        ids.truncate(k);
        ids.sort_unstable();
    }
    ids
}

/// Downsamples every malware family of one month to the smallest family's count.
///
/// Returns the kept sample ids. Goodware entries are ignored.
pub fn balance_families(month_entries: &[&ManifestEntry], seed: u64) -> Vec<String> {
    let mut by_family: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in month_entries.iter().filter(|e| !e.label.is_goodware()) {
        by_family
            .entry(e.label.as_str())
            .or_default()
            .push(e.sample_id.clone());
    }
    let Some(min) = by_family.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let month = month_entries
        .first()
        .map(|e| e.month.to_string())
        .unwrap_or_default();
    let mut kept = Vec::new();
    for (family, ids) in by_family {
        kept.extend(sample_ids(
            ids,
            min,
            seed,
            &format!("family/{month}/{family}"),
        ));
    }
    kept
}

/// Goodware count required for `malware` malware samples, rounded half up.
pub fn goodware_target(malware: usize, ratio: f64) -> usize {
    (ratio * malware as f64 + 0.5).floor() as usize
}

/// Outcome of [`enforce_goodware_ratio`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodwareSelection {
    pub kept: Vec<String>,
    pub target: usize,
    pub shortfall: bool,
}

/// Keeps `round(ratio * malware)` goodware, or all of it when there is not enough.
pub fn enforce_goodware_ratio(
    goodware: &[&ManifestEntry],
    malware: usize,
    ratio: f64,
    seed: u64,
    tag: &str,
) -> GoodwareSelection {
    let target = goodware_target(malware, ratio);
    let ids: Vec<String> = goodware.iter().map(|e| e.sample_id.clone()).collect();
    let shortfall = ids.len() < target;
    GoodwareSelection {
        kept: sample_ids(ids, target, seed, &format!("goodware/{tag}")),
        target,
        shortfall,
    }
}

/// Marks families first seen after the training window as test-only.
pub fn holdout_new_families(plan: &mut SplitPlan, train_end: Month) {
    let mut first: BTreeMap<&str, Month> = BTreeMap::new();
    for a in plan.assignments.iter().filter(|a| !a.family.is_goodware()) {
        let m = first.entry(a.family.as_str()).or_insert(a.month);
        *m = (*m).min(a.month);
    }
    let late: BTreeSet<String> = first
        .into_iter()
        .filter(|(_, m)| *m > train_end)
        .map(|(f, _)| f.to_string())
        .collect();
    for a in &mut plan.assignments {
        if a.split != Split::Test && late.contains(a.family.as_str()) {
            a.kept = false;
        }
    }
    plan.holdout_families = late;
}

/// Runs the full splitting protocol.
pub fn build_split(entries: &[ManifestEntry], cfg: &SplitConfig) -> Result<SplitPlan> {
    cfg.validate()?;
    let mut plan = skeleton(entries, cfg)?;
    if cfg.holdout_new_families {
        holdout_new_families(&mut plan, cfg.train_end);
    }

    let lookup: HashMap<&str, &ManifestEntry> =
        entries.iter().map(|e| (e.sample_id.as_str(), e)).collect();
    let mut by_month: BTreeMap<Month, Vec<&ManifestEntry>> = BTreeMap::new();
    for a in plan.assignments.iter().filter(|a| a.kept) {
        by_month
            .entry(a.month)
            .or_default()
            .push(lookup[a.sample_id.as_str()]);
    }

    let mut keep: BTreeSet<String> = BTreeSet::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut total_malware = 0usize;
    let mut all_goodware: Vec<&ManifestEntry> = Vec::new();
    for (month, rows) in &by_month {
        let mut rec = MonthRecord {
            month: Some(*month),
            ..Default::default()
        };
        let malware: Vec<&ManifestEntry> = rows
            .iter()
            .copied()
            .filter(|e| !e.label.is_goodware())
            .collect();
        let goodware: Vec<&ManifestEntry> = rows
            .iter()
            .copied()
            .filter(|e| e.label.is_goodware())
            .collect();
        for e in &malware {
            *rec.family_available.entry(e.label.to_string()).or_default() += 1;
        }
        let kept_malware = if cfg.balance_families {
            balance_families(&malware, cfg.seed)
        } else {
            malware.iter().map(|e| e.sample_id.clone()).collect()
        };
        for id in &kept_malware {
            *rec.family_kept
                .entry(lookup[id.as_str()].label.to_string())
                .or_default() += 1;
        }
        rec.goodware_available = goodware.len();
        rec.no_malware = kept_malware.is_empty();
        if rec.no_malware {
            warnings.push(format!("{month}: no malware, month flagged"));
        }
        total_malware += kept_malware.len();
        keep.extend(kept_malware.iter().cloned());

        match cfg.ratio_scope {
            RatioScope::PerMonth => {
                let sel = enforce_goodware_ratio(
                    &goodware,
                    kept_malware.len(),
                    cfg.goodware_ratio,
                    cfg.seed,
                    &month.to_string(),
                );
                if sel.shortfall {
                    warnings.push(format!(
                        "{month}: {} goodware available, {} needed; keeping all",
                        goodware.len(),
                        sel.target
                    ));
                }
                rec.goodware_kept = sel.kept.len();
                rec.goodware_shortfall = sel.shortfall;
                keep.extend(sel.kept);
            }
            RatioScope::Global => all_goodware.extend(goodware),
        }
        records.push(rec);
    }
    if cfg.ratio_scope == RatioScope::Global {
        let sel = enforce_goodware_ratio(
            &all_goodware,
            total_malware,
            cfg.goodware_ratio,
            cfg.seed,
            "global",
        );
        if sel.shortfall {
            warnings.push(format!(
                "{} goodware available, {} needed; keeping all",
                all_goodware.len(),
                sel.target
            ));
        }
        let kept: BTreeSet<&str> = sel.kept.iter().map(String::as_str).collect();
        for rec in &mut records {
            let m = rec.month;
            rec.goodware_kept = all_goodware
                .iter()
                .filter(|e| Some(e.month) == m && kept.contains(e.sample_id.as_str()))
                .count();
            rec.goodware_shortfall = sel.shortfall;
        }
        keep.extend(sel.kept);
    }

    for a in &mut plan.assignments {
        a.kept = a.kept && keep.contains(&a.sample_id);
    }
    for w in &warnings {
        log::warn!("split: {w}");
    }
    plan.records = records;
    plan.warnings = warnings;
    plan.ensure_nonempty()?;
    Ok(plan)
}

/// Writes `sample_id,split,month,family,kept` rows.
pub fn write_split_manifest<W: Write>(w: W, plan: &SplitPlan) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for a in &plan.assignments {
        wtr.serialize(a)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a split manifest, skipping `#` comment lines.
pub fn read_split_manifest<R: Read>(r: R) -> Result<Vec<Assignment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// JSON summary of a plan: per-split counts, holdouts, seed and month records.
pub fn split_summary(plan: &SplitPlan) -> serde_json::Value {
    let counts: BTreeMap<&str, usize> = Split::ALL
        .iter()
        .map(|s| (s.as_str(), plan.kept_count(*s)))
        .collect();
    serde_json::json!({
        "seed": plan.seed,
        "counts": counts,
        "train_months": plan.train_months,
        "val_months": plan.val_months,
        "test_months": plan.test_months,
        "holdout_families": plan.holdout_families,
        "months": plan.records,
        "warnings": plan.warnings,
    })
}
