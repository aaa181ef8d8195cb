use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::SplitPlan;
use crate::ingest::{type_counts, Month, Report, TypeCounts, TypeProportions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthProfile {
    pub month: Month,
    pub samples: usize,
    /// `None` when the month's samples made no calls.
    pub proportions: Option<TypeProportions>,
}

/// Monthly value-type mix over the first calls of every kept sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateProfile {
    pub months: Vec<MonthProfile>,
    /// Largest L1 distance between consecutive profiled months.
    pub max_drift: f64,
    pub max_drift_at: Option<(Month, Month)>,
    pub threshold: f64,
    pub flagged: bool,
}

/// Pools type counts per month over the kept samples of `plan`.
///
/// Samples absent from `reports` are skipped.
pub fn covariate_profile(
    plan: &SplitPlan,
    reports: &[Report],
    limit: usize,
    threshold: f64,
) -> CovariateProfile {
    let by_id: HashMap<&str, &Report> = reports.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let mut months: BTreeMap<Month, (usize, TypeCounts)> = BTreeMap::new();
    for a in plan.assignments.iter().filter(|a| a.kept) {
        if let Some(r) = by_id.get(a.sample_id.as_str()) {
            let slot = months.entry(a.month).or_default();
            slot.0 += 1;
            slot.1.add(&type_counts([*r], Some(limit)));
        }
    }
    let months: Vec<MonthProfile> = months
        .into_iter()
        .map(|(month, (samples, counts))| MonthProfile {
            month,
            samples,
            proportions: counts.proportions(),
        })
        .collect();

    let mut max_drift = 0.0;
    let mut max_drift_at = None;
    let present: Vec<(Month, TypeProportions)> = months
        .iter()
        .filter_map(|m| m.proportions.map(|p| (m.month, p)))
        .collect();
    for w in present.windows(2) {
        let d = w[0].1.l1_distance(&w[1].1);
        if d > max_drift {
            max_drift = d;
            max_drift_at = Some((w[0].0, w[1].0));
        }
    }
    CovariateProfile {
        months,
        max_drift,
        max_drift_at,
        threshold,
        flagged: max_drift > threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_report, type_proportions, Label, ManifestEntry};
    use crate::split::SplitConfig;

    fn report(id: &str, month: &str, body: &str) -> Report {
        parse_report(body.as_bytes(), id, Label::new("A"), month.parse().unwrap()).unwrap()
    }

    const STR_CALL: &str = r#"{"calls":[{"api":"A","arguments":[{"name":"p","value":"x.dll"}]}]}"#;
    const INT_CALL: &str = r#"{"calls":[{"api":"A","arguments":[{"name":"n","value":"5"},{"name":"m","value":"7"}]}]}"#;

    fn plan_for(reports: &[Report]) -> SplitPlan {
        let entries: Vec<ManifestEntry> = reports
            .iter()
            .map(|r| ManifestEntry {
                sample_id: r.sample_id.clone(),
                label: r.label.clone(),
                month: r.month,
            })
            .collect();
        let cfg = SplitConfig::new("2019-01".parse().unwrap(), "2019-02".parse().unwrap());
        super::super::skeleton(&entries, &cfg).unwrap()
    }

    #[test]
    fn single_month_matches_corpus_proportions() {
        let rs = vec![
            report("a", "2019-01", STR_CALL),
            report("b", "2019-01", INT_CALL),
        ];
        let p = covariate_profile(&plan_for(&rs), &rs, 1024, 0.1);
        assert_eq!(p.months.len(), 1);
        assert_eq!(
            p.months[0].proportions.unwrap(),
            type_proportions(&rs).unwrap()
        );
        assert!(!p.flagged);
    }

    #[test]
    fn duplication_is_scale_invariant() {
        let rs = vec![
            report("a", "2019-01", STR_CALL),
            report("b", "2019-01", INT_CALL),
        ];
        let mut doubled = rs.clone();
        doubled.push(report("c", "2019-01", STR_CALL));
        doubled.push(report("d", "2019-01", INT_CALL));
        let p1 = covariate_profile(&plan_for(&rs), &rs, 1024, 0.1);
        let p2 = covariate_profile(&plan_for(&doubled), &doubled, 1024, 0.1);
        assert_eq!(p1.months[0].proportions, p2.months[0].proportions);
    }

    #[test]
    fn planted_drift_flagged() {
        let rs = vec![
            report("a", "2019-01", STR_CALL),
            report("b", "2019-02", STR_CALL),
            report("c", "2019-03", INT_CALL),
        ];
        let p = covariate_profile(&plan_for(&rs), &rs, 1024, 0.1);
        // 1/2 api + 1/2 string vs 1/3 api + 2/3 integer.
        let expect = (0.5f64 - 1.0 / 3.0).abs() + 0.5 + 2.0 / 3.0;
        assert!((p.max_drift - expect).abs() < 1e-12);
        assert_eq!(
            p.max_drift_at,
            Some(("2019-02".parse().unwrap(), "2019-03".parse().unwrap()))
        );
        assert!(p.flagged);
    }
}
