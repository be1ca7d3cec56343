//! Compute accounting against an always-use-the-largest-tier baseline.
//!
//! With per-tier usage fractions among correct answers `c` and wrong answers
//! `w`, unit costs `u`, classifier accuracy `p` and baseline cost `B`:
//!
//! ```text
//! x = Σ c_k u_k        y = Σ w_k u_k
//! savings = (B - (p x + (1 - p) y)) / B
//! ```
//!
//! Costs are abstract units, not dollars or tokens.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::TierSet;
use crate::router::RouteRecord;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("{0} partition is empty; its usage fractions are undefined")]
    EmptyPartition(&'static str),
    #[error("{which} fractions sum to {sum}, expected 1")]
    FractionSum { which: &'static str, sum: f64 },
    #[error("{which} has {found} entries but there are {expected} tiers")]
    LengthMismatch {
        which: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{which} contains a negative or non-finite value")]
    InvalidValue { which: &'static str },
    #[error("accuracy {0} is outside [0, 1]")]
    Accuracy(f64),
    #[error("unit costs must be strictly increasing")]
    CostsNotIncreasing,
    #[error("baseline cost must be positive, got {0}")]
    Baseline(f64),
    #[error("record for task {0:?} carries no verdict")]
    MissingVerdict(String),
    #[error("record for task {task_id:?} names unknown tier {tier_id:?}")]
    UnknownTier { task_id: String, tier_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageDistribution {
    /// `None` when no answer was correct.
    pub fractions_correct: Option<Vec<f64>>,
    /// `None` when no answer was wrong.
    pub fractions_wrong: Option<Vec<f64>>,
    pub accuracy: f64,
    pub unit_costs: Vec<f64>,
    pub baseline_cost: f64,
}

impl UsageDistribution {
    pub fn new(
        fractions_correct: Vec<f64>,
        fractions_wrong: Vec<f64>,
        accuracy: f64,
        unit_costs: Vec<f64>,
        baseline_cost: f64,
    ) -> Self {
        UsageDistribution {
            fractions_correct: Some(fractions_correct),
            fractions_wrong: Some(fractions_wrong),
            accuracy,
            unit_costs,
            baseline_cost,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostOptions {
    /// Charge one call at the smallest tier's unit cost per task for the
    /// classifier. Off by default: a single-token classification is treated
    /// as negligible.
    pub include_classifier_overhead: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Average compute of a correct answer.
    pub x: f64,
    /// Average compute of a wrong answer.
    pub y: f64,
    pub expected_cost: f64,
    pub classifier_overhead: f64,
    pub savings: f64,
    pub inputs: UsageDistribution,
}

impl CostReport {
    pub fn render_table(&self, tier_ids: &[String]) -> String {
        let mut out = format!("{:<12}{:>10}{:>10}{:>10}\n", "tier", "cost", "correct", "wrong");
        let fc = self.inputs.fractions_correct.as_deref().unwrap_or(&[]);
        let fw = self.inputs.fractions_wrong.as_deref().unwrap_or(&[]);
        for (k, cost) in self.inputs.unit_costs.iter().enumerate() {
            let name = tier_ids.get(k).map(String::as_str).unwrap_or("?");
            out.push_str(&format!(
                "{:<12}{:>10}{:>10.3}{:>10.3}\n",
                name,
                cost,
                fc.get(k).copied().unwrap_or(0.0),
                fw.get(k).copied().unwrap_or(0.0)
            ));
        }
        out.push_str(&format!(
            "accuracy p = {:.4}\nx (correct) = {:.4}\ny (wrong) = {:.4}\nexpected cost = {:.4} (baseline {})\nsavings = {:.4}\n",
            self.inputs.accuracy, self.x, self.y, self.expected_cost, self.inputs.baseline_cost, self.savings
        ));
        out
    }
}

fn check_vector(which: &'static str, v: &[f64], k: usize, must_sum_to_one: bool) -> Result<(), CostError> {
    if v.len() != k {
        return Err(CostError::LengthMismatch {
            which,
            expected: k,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(CostError::InvalidValue { which });
    }
    if must_sum_to_one {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(CostError::FractionSum { which, sum });
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn compute_report(d: &UsageDistribution) -> Result<CostReport, CostError> {
    compute_report_with(d, &CostOptions::default())
}

pub fn compute_report_with(d: &UsageDistribution, opts: &CostOptions) -> Result<CostReport, CostError> {
    let k = d.unit_costs.len();
    check_vector("unit_costs", &d.unit_costs, k, false)?;
    if d.unit_costs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CostError::CostsNotIncreasing);
    }
    if !d.baseline_cost.is_finite() || d.baseline_cost <= 0.0 {
        return Err(CostError::Baseline(d.baseline_cost));
    }
    if !(0.0..=1.0).contains(&d.accuracy) {
        return Err(CostError::Accuracy(d.accuracy));
    }
    let fc = d
        .fractions_correct
        .as_deref()
        .ok_or(CostError::EmptyPartition("correct"))?;
    let fw = d.fractions_wrong.as_deref().ok_or(CostError::EmptyPartition("wrong"))?;
    check_vector("fractions_correct", fc, k, true)?;
    check_vector("fractions_wrong", fw, k, true)?;

    let x = dot(fc, &d.unit_costs);
    let y = dot(fw, &d.unit_costs);
    let overhead = if opts.include_classifier_overhead {
        d.unit_costs.first().copied().unwrap_or(0.0)
    } else {
        0.0
    };
    let expected_cost = d.accuracy * x + (1.0 - d.accuracy) * y + overhead;
    Ok(CostReport {
        x,
        y,
        expected_cost,
        classifier_overhead: overhead,
        savings: (d.baseline_cost - expected_cost) / d.baseline_cost,
        inputs: d.clone(),
    })
}

/// Per-tier dispatch counts split by verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteUsage {
    pub tier_ids: Vec<String>,
    pub counts_correct: Vec<u64>,
    pub counts_wrong: Vec<u64>,
}

impl RouteUsage {
    pub fn n_correct(&self) -> u64 {
        self.counts_correct.iter().sum()
    }

    pub fn n_wrong(&self) -> u64 {
        self.counts_wrong.iter().sum()
    }

    fn fractions(counts: &[u64]) -> Option<Vec<f64>> {
        let n: u64 = counts.iter().sum();
        (n > 0).then(|| counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    pub fn fractions_correct(&self) -> Option<Vec<f64>> {
        Self::fractions(&self.counts_correct)
    }

    pub fn fractions_wrong(&self) -> Option<Vec<f64>> {
        Self::fractions(&self.counts_wrong)
    }

    /// Pass share over all verified records, `None` when there are none.
    pub fn accuracy(&self) -> Option<f64> {
        let n = self.n_correct() + self.n_wrong();
        (n > 0).then(|| self.n_correct() as f64 / n as f64)
    }
}

/// Counts records per tier, split into pass and not-pass.
pub fn usage_from_routes(records: &[RouteRecord], tiers: &TierSet) -> Result<RouteUsage, CostError> {
    let k = tiers.len();
    let mut usage = RouteUsage {
        tier_ids: tiers.tiers().iter().map(|t| t.tier_id.clone()).collect(),
        counts_correct: vec![0; k],
        counts_wrong: vec![0; k],
    };
    for r in records {
        let pos = tiers.position(&r.tier_id).ok_or_else(|| CostError::UnknownTier {
            task_id: r.task_id.clone(),
            tier_id: r.tier_id.clone(),
        })?;
        let verdict = r
            .verdict
            .as_ref()
            .ok_or_else(|| CostError::MissingVerdict(r.task_id.clone()))?;
        if verdict.is_pass() {
            usage.counts_correct[pos] += 1;
        } else {
            usage.counts_wrong[pos] += 1;
        }
    }
    Ok(usage)
}

/// Empirical distribution from routed records. An empty partition leaves its
/// fraction vector undefined, which [`compute_report`] rejects.
pub fn distribution_from_routes(records: &[RouteRecord], tiers: &TierSet) -> Result<UsageDistribution, CostError> {
    let usage = usage_from_routes(records, tiers)?;
    Ok(UsageDistribution {
        fractions_correct: usage.fractions_correct(),
        fractions_wrong: usage.fractions_wrong(),
        accuracy: usage.accuracy().unwrap_or(0.0),
        unit_costs: tiers.unit_costs(),
        baseline_cost: tiers.largest().unit_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::test_support::three_tiers;
    use crate::verifier::{Verdict, VerdictKind};
    use proptest::prelude::*;

    fn paper_inputs() -> UsageDistribution {
        UsageDistribution::new(
            vec![0.67, 0.27, 0.06],
            vec![0.65, 0.29, 0.06],
            0.79,
            vec![1.0, 10.0, 100.0],
            100.0,
        )
    }

    #[test]
    fn reported_inputs() {
        let r = compute_report(&paper_inputs()).unwrap();
        assert!((r.x - 9.37).abs() < 1e-9);
        assert!((r.y - 9.55).abs() < 1e-9);
        // 0.79 * 9.37 + 0.21 * 9.55 = 9.4078 -> (100 - 9.4078) / 100
        assert!((r.savings - 0.905922).abs() < 1e-9, "{}", r.savings);
    }

    #[test]
    fn degenerate_cases() {
        let always_large = UsageDistribution::new(
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            0.5,
            vec![1.0, 10.0, 100.0],
            100.0,
        );
        let r = compute_report(&always_large).unwrap();
        assert_eq!((r.x, r.y, r.savings), (100.0, 100.0, 0.0));

        let perfect_small = UsageDistribution::new(
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            1.0,
            vec![1.0, 10.0, 100.0],
            100.0,
        );
        assert!((compute_report(&perfect_small).unwrap().savings - 0.99).abs() < 1e-12);
    }

    #[test]
    fn classifier_overhead_flag() {
        let r = compute_report_with(
            &paper_inputs(),
            &CostOptions {
                include_classifier_overhead: true,
            },
        )
        .unwrap();
        assert_eq!(r.classifier_overhead, 1.0);
        assert!((r.savings - 0.895922).abs() < 1e-9);
    }

    #[test]
    fn validation_errors() {
        let mut d = paper_inputs();
        d.fractions_correct = Some(vec![0.5, 0.2, 0.2]);
        assert!(matches!(
            compute_report(&d),
            Err(CostError::FractionSum {
                which: "fractions_correct",
                ..
            })
        ));
        let mut d = paper_inputs();
        d.fractions_wrong = None;
        assert_eq!(compute_report(&d), Err(CostError::EmptyPartition("wrong")));
        let mut d = paper_inputs();
        d.accuracy = 1.2;
        assert_eq!(compute_report(&d), Err(CostError::Accuracy(1.2)));
        let mut d = paper_inputs();
        d.unit_costs = vec![1.0, 1.0, 100.0];
        assert_eq!(compute_report(&d), Err(CostError::CostsNotIncreasing));
        let mut d = paper_inputs();
        d.unit_costs = vec![1.0, 100.0];
        assert!(matches!(compute_report(&d), Err(CostError::LengthMismatch { .. })));
        let mut d = paper_inputs();
        d.baseline_cost = 0.0;
        assert_eq!(compute_report(&d), Err(CostError::Baseline(0.0)));
    }

    fn record(task: &str, tier: &str, pass: Option<bool>) -> RouteRecord {
        RouteRecord {
            task_id: task.into(),
            predicted_level: 1,
            tier_id: tier.into(),
            verdict: pass.map(|p| Verdict::new(if p { VerdictKind::Pass } else { VerdictKind::Fail }, "", 0)),
            cost_units: 0.0,
            latency_ms: 0,
        }
    }

    #[test]
    fn distribution_hand_count() {
        let mut recs: Vec<_> = (0..9).map(|i| record(&format!("p{i}"), "small", Some(true))).collect();
        recs.push(record("f", "large", Some(false)));
        let d = distribution_from_routes(&recs, &three_tiers()).unwrap();
        assert_eq!(d.fractions_correct, Some(vec![1.0, 0.0, 0.0]));
        assert_eq!(d.fractions_wrong, Some(vec![0.0, 0.0, 1.0]));
        assert!((d.accuracy - 0.9).abs() < 1e-12);
        assert_eq!(d.baseline_cost, 100.0);
    }

    #[test]
    fn all_pass_leaves_wrong_partition_undefined() {
        let recs = vec![record("a", "small", Some(true)), record("b", "medium", Some(true))];
        let d = distribution_from_routes(&recs, &three_tiers()).unwrap();
        assert_eq!(d.fractions_wrong, None);
        assert_eq!(compute_report(&d), Err(CostError::EmptyPartition("wrong")));
        assert!(matches!(
            distribution_from_routes(&[record("a", "small", None)], &three_tiers()),
            Err(CostError::MissingVerdict(_))
        ));
        assert!(matches!(
            distribution_from_routes(&[record("a", "xl", Some(true))], &three_tiers()),
            Err(CostError::UnknownTier { .. })
        ));
    }

    #[test]
    fn hundred_record_fixture_reproduces_reported_fractions() {
        // 100 correct and 100 wrong records give the fractions exactly.
        let mut recs = Vec::new();
        for (tier, n) in [("small", 67), ("medium", 27), ("large", 6)] {
            recs.extend((0..n).map(|i| record(&format!("c-{tier}-{i}"), tier, Some(true))));
        }
        for (tier, n) in [("small", 65), ("medium", 29), ("large", 6)] {
            recs.extend((0..n).map(|i| record(&format!("w-{tier}-{i}"), tier, Some(false))));
        }
        let mut d = distribution_from_routes(&recs, &three_tiers()).unwrap();
        assert_eq!(d.fractions_correct, Some(vec![0.67, 0.27, 0.06]));
        assert_eq!(d.fractions_wrong, Some(vec![0.65, 0.29, 0.06]));
        d.accuracy = 0.79;
        let r = compute_report(&d).unwrap();
        let reference = compute_report(&paper_inputs()).unwrap();
        assert!((r.savings - reference.savings).abs() < 1e-12);
    }

    fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1u32..100, len).prop_map(|w| {
            let s: u32 = w.iter().sum();
            w.iter().map(|&x| x as f64 / s as f64).collect()
        })
    }

    proptest! {
        #[test]
        fn scale_invariance_and_bounds(
            fc in simplex(3),
            fw in simplex(3),
            p in 0.0f64..=1.0,
            c in 0.01f64..1000.0,
        ) {
            let fix = |v: Vec<f64>| {
                // Renormalise so the sum is exactly within tolerance.
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (fc, fw) = (fix(fc), fix(fw));
            let base = UsageDistribution::new(fc.clone(), fw.clone(), p, vec![1.0, 10.0, 100.0], 100.0);
            let scaled = UsageDistribution::new(fc, fw, p, vec![c, 10.0 * c, 100.0 * c], 100.0 * c);
            let a = compute_report(&base).unwrap();
            let b = compute_report(&scaled).unwrap();
            prop_assert!((a.savings - b.savings).abs() < 1e-9);
            prop_assert!(a.savings >= -1e-12 && a.savings <= 1.0 + 1e-12);
        }

        #[test]
        fn permutation_invariant(passes in prop::collection::vec((0usize..3, any::<bool>()), 2..40), k in 0usize..40) {
            let tiers = three_tiers();
            let ids = ["small", "medium", "large"];
            let mut recs: Vec<_> = passes
                .iter()
                .enumerate()
                .map(|(i, (t, ok))| record(&format!("t{i}"), ids[*t], Some(*ok)))
                .collect();
            let a = distribution_from_routes(&recs, &tiers).unwrap();
            let shift = k % recs.len();
            recs.rotate_left(shift);
            let b = distribution_from_routes(&recs, &tiers).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(compute_report(&a).ok(), compute_report(&b).ok());
        }
    }
}
