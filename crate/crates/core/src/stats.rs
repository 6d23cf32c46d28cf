//! Two-sample t-tests and the Weighted Rejection Score.
//!
//! The t statistic uses the unpooled (Welch) standard error with a small
//! `epsilon` added to the denominator so zero-variance samples still yield a
//! finite value:
//!
//! ```text
//! t = |mean(a) - mean(b)| / (sqrt(s_a²/n_a + s_b²/n_b) + ε)
//! ```
//!
//! Degrees of freedom follow Welch–Satterthwaite, falling back to
//! `n_a + n_b - 2` when both variances vanish. Each configured confidence
//! level contributes its weight to the score whenever the null hypothesis of
//! equal means is rejected for a class pair.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::corpus::{Attribute, ClassKey};
use crate::sas::ScoredRecord;

pub const DEFAULT_EPSILON: f64 = 0.0001;

/// Display threshold above which a t value is shown as `H`.
pub const HIGH_T: f64 = 1000.0;

/// Two-tailed confidence levels with published t-table columns.
const LARGE_DOF: f64 = 1e5;

pub const SUPPORTED_CI: [u32; 8] = [50, 60, 70, 80, 90, 95, 98, 99];

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample `{label}` has {len} values, need at least 2")]
    SampleTooSmall { label: String, len: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("unsupported confidence level {0}%")]
    UnsupportedCi(u32),
    #[error("no record carries a `{0:?}` label")]
    AttributeAbsent(Attribute),
    #[error("no scored records")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Bessel-corrected variance.
    fn variance(&self, mean: f64) -> f64 {
        let ss: f64 = self.values.iter().map(|v| (v - mean).powi(2)).sum();
        ss / (self.values.len() - 1) as f64
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.values.len() < 2 {
            return Err(StatsError::SampleTooSmall {
                label: self.label.clone(),
                len: self.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiWeight {
    pub ci: u32,
    pub weight: f64,
}

impl CiWeight {
    pub const fn new(ci: u32, weight: f64) -> Self {
        Self { ci, weight }
    }
}

pub const DEFAULT_CI_WEIGHTS: [CiWeight; 3] = [
    CiWeight::new(95, 1.0),
    CiWeight::new(70, 0.8),
    CiWeight::new(60, 0.6),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub t_abs: f64,
    pub dof: f64,
    /// Confidence levels (percent) at which equal means are rejected.
    pub rejected_at: BTreeSet<u32>,
}

impl TTestResult {
    pub fn rejected(&self, ci: u32) -> bool {
        self.rejected_at.contains(&ci)
    }

    /// `H` for extreme values, otherwise two decimals.
    pub fn display_t(&self) -> String {
        if self.t_abs > HIGH_T {
            "H".to_string()
        } else {
            format!("{:.2}", self.t_abs)
        }
    }
}

/// Two-tailed critical t value. `dof` is floored to a whole table row.
pub fn critical_t(ci: u32, dof: f64) -> Result<f64, StatsError> {
    if !SUPPORTED_CI.contains(&ci) {
        return Err(StatsError::UnsupportedCi(ci));
    }
    let alpha = 1.0 - f64::from(ci) / 100.0;
    let p = 1.0 - alpha / 2.0;
    let row = dof.floor().max(1.0);
    // past this row the t and normal quantiles agree to better than 1e-4
    if !dof.is_finite() || row > LARGE_DOF {
        return Ok(Normal::standard().inverse_cdf(p));
    }
    Ok(StudentsT::new(0.0, 1.0, row).expect("positive dof").inverse_cdf(p))
}

/// Rejection iff the critical value does not exceed t.
pub fn rejects(t_abs: f64, t_crit: f64) -> bool {
    !(t_crit > t_abs)
}

/// t statistic and dof without rejection flags.
pub fn t_statistic(a: &Sample, b: &Sample, epsilon: f64) -> Result<(f64, f64), StatsError> {
    a.check()?;
    b.check()?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(StatsError::BadEpsilon(epsilon));
    }
    let (na, nb) = (a.values.len() as f64, b.values.len() as f64);
    let (ma, mb) = (a.mean(), b.mean());
    let (qa, qb) = (a.variance(ma) / na, b.variance(mb) / nb);
    let se = (qa + qb).sqrt();
    let diff = (ma - mb).abs();
    let t_abs = if diff == 0.0 { 0.0 } else { diff / (se + epsilon) };
    let dof = if qa + qb == 0.0 {
        (na + nb - 2.0).max(1.0)
    } else {
        let welch = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        welch.max(1.0)
    };
    Ok((t_abs, dof))
}

pub fn welch_t(a: &Sample, b: &Sample, epsilon: f64, ci_weights: &[CiWeight]) -> Result<TTestResult, StatsError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(StatsError::BadEpsilon(epsilon));
    }
    let (t_abs, dof) = t_statistic(a, b, epsilon)?;
    let mut rejected_at = BTreeSet::new();
    for cw in ci_weights {
        if rejects(t_abs, critical_t(cw.ci, dof)?) {
            rejected_at.insert(cw.ci);
        }
    }
    Ok(TTestResult {
        t_abs,
        dof,
        rejected_at,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSamples {
    /// Samples in the attribute's canonical class order.
    pub samples: Vec<(ClassKey, Sample)>,
    /// Classes present with fewer than two records.
    pub omitted: Vec<ClassKey>,
}

impl ClassSamples {
    /// Unordered pairs (i < j) in canonical order.
    pub fn pairs(&self) -> impl Iterator<Item = (&(ClassKey, Sample), &(ClassKey, Sample))> {
        let s = &self.samples;
        (0..s.len()).flat_map(move |i| (i + 1..s.len()).map(move |j| (&s[i], &s[j])))
    }
}

/// Partitions scores by the classes of `attribute`.
pub fn class_samples(scored: &[ScoredRecord], attribute: Attribute) -> Result<ClassSamples, StatsError> {
    if scored.is_empty() {
        return Err(StatsError::Empty);
    }
    let classes = attribute.classes();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); classes.len()];
    let mut labelled = false;
    for s in scored {
        let class = attribute.class_of(&s.record);
        labelled |= !class.is_na();
        let idx = classes.iter().position(|c| *c == class).expect("known class");
        buckets[idx].push(s.score.value());
    }
    if !labelled {
        return Err(StatsError::AttributeAbsent(attribute));
    }
    let mut samples = Vec::new();
    let mut omitted = Vec::new();
    for (class, values) in classes.into_iter().zip(buckets) {
        match values.len() {
            0 => {}
            1 => omitted.push(class),
            _ => samples.push((class, Sample::new(class.label(), values))),
        }
    }
    Ok(ClassSamples { samples, omitted })
}

/// One class-pair t-test within one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTest {
    pub dataset: usize,
    pub attribute: Attribute,
    pub pair: (ClassKey, ClassKey),
    pub result: TTestResult,
}

impl PairTest {
    pub fn pair_label(&self) -> String {
        format!("{}-{}", self.pair.0, self.pair.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrsOutcome {
    pub psi: f64,
    pub tests: Vec<PairTest>,
}

/// Sums, over every confidence level, dataset, attribute and class pair,
/// the level's weight whenever equal means are rejected.
pub fn weighted_rejection_score(
    datasets: &[Vec<ScoredRecord>],
    attributes: &[Attribute],
    ci_weights: &[CiWeight],
    epsilon: f64,
) -> Result<WrsOutcome, StatsError> {
    let mut tests = Vec::new();
    for (d, scored) in datasets.iter().enumerate() {
        for &attribute in attributes {
            let samples = class_samples(scored, attribute)?;
            for ((ka, a), (kb, b)) in samples.pairs() {
                tests.push(PairTest {
                    dataset: d,
                    attribute,
                    pair: (*ka, *kb),
                    result: welch_t(a, b, epsilon, ci_weights)?,
                });
            }
        }
    }
    let mut psi = 0.0;
    for cw in ci_weights {
        for t in &tests {
            if t.result.rejected(cw.ci) {
                psi += cw.weight;
            }
        }
    }
    Ok(WrsOutcome { psi, tests })
}
