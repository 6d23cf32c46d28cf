//! Observational vs backdoor-adjusted expectations of sentiment given the
//! emotion-word polarity, the Deconfounding Impact Estimate (DIE %) and the
//! average treatment effect.
//!
//! With X the polarity of the emotion word, Y the score and Z the protected
//! class (gender, or the composite race×gender class), the interventional
//! expectation is
//!
//! ```text
//! E[Y | do(X = x)] = Σ_z E[Y | X = x, Z = z] · P(Z = z)
//! ```
//!
//! with P(z) the empirical marginal over the whole dataset. DIE % is the
//! relative gap between the observational and interventional values.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::corpus::{Attribute, ClassKey, Group, Polarity};
use crate::sas::ScoredRecord;

/// Absolute tolerance under which expectations are treated as equal / zero.
pub const DIE_ZERO_TOL: f64 = 1e-12;

/// Polarity order used for (neg, pos) tuples.
pub const POLARITIES: [Polarity; 2] = [Polarity::Negative, Polarity::Positive];

#[derive(Debug, Error, PartialEq)]
pub enum CausalError {
    #[error("no records with {0} polarity")]
    EmptyConditioning(&'static str),
    #[error("stratum (x={x}, z={z}) is empty although P(z) > 0")]
    DegenerateStratum { x: &'static str, z: String },
    #[error("datasets mix groups {0} and {1}")]
    MixedGroups(Group, Group),
    #[error("no datasets given")]
    NoDatasets,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum {
    pub count: usize,
    pub sum: f64,
}

impl Stratum {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Per-(x, z) counts and score sums plus the marginal P(z).
#[derive(Debug, Clone)]
pub struct StratifiedTable {
    pub strata: BTreeMap<(Polarity, ClassKey), Stratum>,
    pub marginal: BTreeMap<ClassKey, f64>,
    pub total: usize,
}

impl StratifiedTable {
    pub fn build(scored: &[ScoredRecord], z: Attribute) -> Self {
        let mut strata: BTreeMap<(Polarity, ClassKey), Stratum> = BTreeMap::new();
        let mut z_counts: BTreeMap<ClassKey, usize> = BTreeMap::new();
        for s in scored {
            let class = z.class_of(&s.record);
            *z_counts.entry(class).or_default() += 1;
            let cell = strata.entry((s.record.polarity(), class)).or_insert(Stratum { count: 0, sum: 0.0 });
            cell.count += 1;
            cell.sum += s.score.value();
        }
        let total = scored.len();
        let marginal = z_counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        Self {
            strata,
            marginal,
            total,
        }
    }

    pub fn interventional(&self, x: Polarity) -> Result<f64, CausalError> {
        let mut acc = 0.0;
        for (&z, &pz) in &self.marginal {
            let mean = self
                .strata
                .get(&(x, z))
                .and_then(Stratum::mean)
                .ok_or_else(|| CausalError::DegenerateStratum {
                    x: x.as_str(),
                    z: z.to_string(),
                })?;
            acc += mean * pz;
        }
        Ok(acc)
    }
}

fn mean_where(scored: &[ScoredRecord], x: Polarity) -> Result<f64, CausalError> {
    let (n, sum) = scored
        .iter()
        .filter(|s| s.record.polarity() == x)
        .fold((0usize, 0.0), |(n, sum), s| (n + 1, sum + s.score.value()));
    if n == 0 {
        return Err(CausalError::EmptyConditioning(x.as_str()));
    }
    Ok(sum / n as f64)
}

/// E[Y | X = x].
pub fn observational_expectation(scored: &[ScoredRecord], x: Polarity) -> Result<f64, CausalError> {
    mean_where(scored, x)
}

/// E[Y | do(X = x)] by backdoor adjustment over `z`.
pub fn interventional_expectation(
    scored: &[ScoredRecord],
    x: Polarity,
    z: Attribute,
) -> Result<f64, CausalError> {
    if scored.is_empty() {
        return Err(CausalError::EmptyConditioning(x.as_str()));
    }
    StratifiedTable::build(scored, z).interventional(x)
}

/// A DIE percentage, or `Undefined` when the observational value is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DieValue {
    Defined(f64),
    Undefined,
}

impl DieValue {
    pub fn max(self, other: Self) -> Self {
        match (self, other) {
            (DieValue::Defined(a), DieValue::Defined(b)) => DieValue::Defined(a.max(b)),
            _ => DieValue::Undefined,
        }
    }

    pub fn defined(self) -> Option<f64> {
        match self {
            DieValue::Defined(v) => Some(v),
            DieValue::Undefined => None,
        }
    }
}

impl fmt::Display for DieValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DieValue::Defined(v) => write!(f, "{v:.2}"),
            DieValue::Undefined => f.write_str("X"),
        }
    }
}

/// |obs − intv| / |obs| × 100.
pub fn die_percent(obs: f64, intv: f64) -> DieValue {
    let gap = (obs - intv).abs();
    if gap <= DIE_ZERO_TOL {
        DieValue::Defined(0.0)
    } else if obs.abs() <= DIE_ZERO_TOL {
        DieValue::Undefined
    } else {
        DieValue::Defined(gap / obs.abs() * 100.0)
    }
}

/// DIE for each polarity of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DieScore {
    pub per_x: Vec<(Polarity, DieValue)>,
    pub max: DieValue,
}

impl DieScore {
    pub fn from_parts(per_x: Vec<(Polarity, DieValue)>) -> Self {
        let max = per_x
            .iter()
            .map(|(_, v)| *v)
            .reduce(DieValue::max)
            .unwrap_or(DieValue::Defined(0.0));
        Self { per_x, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    Wrs,
    Die,
}

/// A system's bias score. `Undefined` sorts after every finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiScore {
    pub kind: PsiKind,
    pub value: Option<f64>,
}

impl PsiScore {
    pub fn wrs(v: f64) -> Self {
        Self {
            kind: PsiKind::Wrs,
            value: Some(v),
        }
    }

    pub fn die(v: DieValue) -> Self {
        Self {
            kind: PsiKind::Die,
            value: v.defined(),
        }
    }

    pub fn undefined(kind: PsiKind) -> Self {
        Self { kind, value: None }
    }

    pub fn is_undefined(&self) -> bool {
        self.value.is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.value == Some(0.0)
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self.value, other.value) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    }
}

impl fmt::Display for PsiScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{}", trim_float(v)),
            None => f.write_str("X"),
        }
    }
}

/// Up to two decimals without trailing zeros.
pub fn trim_float(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// One row of the per-dataset DIE table, tuples in (neg, pos) order.
#[derive(Debug, Clone, PartialEq)]
pub struct DieRow {
    pub dataset: usize,
    pub observational: [f64; 2],
    pub interventional: [f64; 2],
    pub die: DieScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DieOutcome {
    pub psi: PsiScore,
    pub rows: Vec<DieRow>,
}

pub fn die_row(dataset: usize, scored: &[ScoredRecord], z: Attribute) -> Result<DieRow, CausalError> {
    let table = StratifiedTable::build(scored, z);
    let mut observational = [0.0; 2];
    let mut interventional = [0.0; 2];
    let mut per_x = Vec::with_capacity(2);
    for (i, x) in POLARITIES.into_iter().enumerate() {
        observational[i] = observational_expectation(scored, x)?;
        interventional[i] = table.interventional(x)?;
        per_x.push((x, die_percent(observational[i], interventional[i])));
    }
    Ok(DieRow {
        dataset,
        observational,
        interventional,
        die: DieScore::from_parts(per_x),
    })
}

/// Worst DIE over polarities and datasets; any undefined value wins.
pub fn compute_die_score(datasets: &[Vec<ScoredRecord>], z: Attribute) -> Result<DieOutcome, CausalError> {
    if datasets.is_empty() {
        return Err(CausalError::NoDatasets);
    }
    let mut group: Option<Group> = None;
    for r in datasets.iter().flatten() {
        match group {
            None => group = Some(r.record.group),
            Some(g) if g != r.record.group => return Err(CausalError::MixedGroups(g, r.record.group)),
            _ => {}
        }
    }
    let rows = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| die_row(i, d, z))
        .collect::<Result<Vec<_>, _>>()?;
    let worst = rows
        .iter()
        .map(|r| r.die.max)
        .reduce(DieValue::max)
        .expect("non-empty");
    Ok(DieOutcome {
        psi: PsiScore::die(worst),
        rows,
    })
}

/// E[Y | positive word] − E[Y | negative word].
pub fn ate(scored: &[ScoredRecord]) -> Result<f64, CausalError> {
    Ok(mean_where(scored, Polarity::Positive)? - mean_where(scored, Polarity::Negative)?)
}
