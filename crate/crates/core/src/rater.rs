//! Partial orders over systems, fine-grained ratings per group, overall
//! ratings and report rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{compute_die_score, CausalError, DieOutcome, PsiKind, PsiScore};
use crate::corpus::{Attribute, Group};
use crate::sas::ScoredRecord;
use crate::stats::{weighted_rejection_score, CiWeight, StatsError, WrsOutcome};

#[derive(Debug, Error)]
pub enum RateError {
    #[error("rating levels must be at least 2, got {0}")]
    TooFewLevels(u32),
    #[error("no systems to rate")]
    Empty,
    #[error("unknown rating group '{0}'")]
    UnknownGroup(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Causal(#[from] CausalError),
}

/// A rating column. Group-3 corpora are rated once per attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RatingGroup {
    G1,
    G2,
    #[serde(rename = "G3_R")]
    G3R,
    #[serde(rename = "G3_G")]
    G3G,
    #[serde(rename = "G3_RG")]
    G3RG,
    G4,
}

impl RatingGroup {
    pub const ALL: [RatingGroup; 6] = [
        RatingGroup::G1,
        RatingGroup::G2,
        RatingGroup::G3R,
        RatingGroup::G3G,
        RatingGroup::G3RG,
        RatingGroup::G4,
    ];

    pub fn corpus_group(self) -> Group {
        match self {
            RatingGroup::G1 => Group::G1,
            RatingGroup::G2 => Group::G2,
            RatingGroup::G3R | RatingGroup::G3G | RatingGroup::G3RG => Group::G3,
            RatingGroup::G4 => Group::G4,
        }
    }

    pub fn for_corpus(group: Group) -> &'static [RatingGroup] {
        match group {
            Group::G1 => &[RatingGroup::G1],
            Group::G2 => &[RatingGroup::G2],
            Group::G3 => &[RatingGroup::G3R, RatingGroup::G3G, RatingGroup::G3RG],
            Group::G4 => &[RatingGroup::G4],
        }
    }

    pub fn psi_kind(self) -> PsiKind {
        if self.corpus_group().is_confounded() {
            PsiKind::Die
        } else {
            PsiKind::Wrs
        }
    }

    /// Attributes tested by the t-test branch.
    pub fn test_attributes(self) -> &'static [Attribute] {
        match self {
            RatingGroup::G1 | RatingGroup::G3G => &[Attribute::Gender],
            RatingGroup::G3R => &[Attribute::Race],
            RatingGroup::G3RG => &[Attribute::Rg],
            RatingGroup::G2 | RatingGroup::G4 => &[],
        }
    }

    /// Adjustment variable for the causal branch.
    pub fn confounder(self) -> Option<Attribute> {
        match self {
            RatingGroup::G2 => Some(Attribute::Gender),
            RatingGroup::G4 => Some(Attribute::Rg),
            _ => None,
        }
    }

    pub fn is_gender_side(self) -> bool {
        matches!(self, RatingGroup::G1 | RatingGroup::G2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatingGroup::G1 => "G1",
            RatingGroup::G2 => "G2",
            RatingGroup::G3R => "G3_R",
            RatingGroup::G3G => "G3_G",
            RatingGroup::G3RG => "G3_RG",
            RatingGroup::G4 => "G4",
        }
    }
}

impl fmt::Display for RatingGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatingGroup {
    type Err = RateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RatingGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| RateError::UnknownGroup(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct PsiParams {
    pub ci_weights: Vec<CiWeight>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupDetail {
    Wrs(WrsOutcome),
    Die(DieOutcome),
}

/// ψ of one system on one rating group's datasets.
pub fn group_psi(
    group: RatingGroup,
    datasets: &[Vec<ScoredRecord>],
    params: &PsiParams,
) -> Result<(PsiScore, GroupDetail), RateError> {
    match group.confounder() {
        Some(z) => {
            let out = compute_die_score(datasets, z)?;
            Ok((out.psi, GroupDetail::Die(out)))
        }
        None => {
            let out = weighted_rejection_score(datasets, group.test_attributes(), &params.ci_weights, params.epsilon)?;
            Ok((PsiScore::wrs(out.psi), GroupDetail::Wrs(out)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOrder {
    pub group: RatingGroup,
    pub entries: Vec<(String, PsiScore)>,
}

impl PartialOrder {
    /// Ascending ψ, undefined last, ties by name.
    pub fn from_scores(group: RatingGroup, scores: impl IntoIterator<Item = (String, PsiScore)>) -> Self {
        let mut entries: Vec<_> = scores.into_iter().collect();
        entries.sort_by(|(na, a), (nb, b)| a.total_cmp(b).then_with(|| na.cmp(nb)));
        Self { group, entries }
    }

    /// "A (0) < B (0.6) < C (X)"
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(n, p)| format!("{n} ({p})"))
            .collect::<Vec<_>>()
            .join(" < ")
    }
}

/// Computes ψ for every system and sorts them.
pub fn create_partial_order(
    group: RatingGroup,
    per_sas: &BTreeMap<String, Vec<Vec<ScoredRecord>>>,
    params: &PsiParams,
) -> Result<PartialOrder, RateError> {
    let mut scores = Vec::with_capacity(per_sas.len());
    for (name, datasets) in per_sas {
        scores.push((name.clone(), group_psi(group, datasets, params)?.0));
    }
    Ok(PartialOrder::from_scores(group, scores))
}

/// Partition sizes of an n-element array split into `parts` pieces.
pub fn array_split_sizes(n: usize, parts: usize) -> Vec<usize> {
    let (base, extra) = (n / parts, n % parts);
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

pub fn single_sas_rating(psi: PsiScore, levels: u32) -> u32 {
    if psi.is_zero() {
        1
    } else {
        levels
    }
}

/// Rates the systems of one partial order on levels 1..=L.
pub fn assign_rating(po: &PartialOrder, levels: u32) -> Result<BTreeMap<String, u32>, RateError> {
    if levels < 2 {
        return Err(RateError::TooFewLevels(levels));
    }
    if po.entries.is_empty() {
        return Err(RateError::Empty);
    }
    if po.entries.len() == 1 {
        let (name, psi) = &po.entries[0];
        return Ok(BTreeMap::from([(name.clone(), single_sas_rating(*psi, levels))]));
    }
    let finite: Vec<f64> = po.entries.iter().filter_map(|(_, p)| p.value).collect();
    let mut partition_of = Vec::with_capacity(finite.len());
    for (i, size) in array_split_sizes(finite.len(), levels as usize).into_iter().enumerate() {
        partition_of.extend(std::iter::repeat_n(i as u32 + 1, size));
    }
    let mut out = BTreeMap::new();
    for (name, psi) in &po.entries {
        let rating = match psi.value {
            None => levels,
            Some(v) => {
                let first = finite.iter().position(|f| *f == v).expect("value comes from the list");
                partition_of[first]
            }
        };
        out.insert(name.clone(), rating);
    }
    Ok(out)
}

/// Mean of the group ratings, rounded half away from zero.
pub fn overall_rating(ratings: &[u32], levels: u32) -> Option<u32> {
    if ratings.is_empty() {
        return None;
    }
    let mean = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64;
    Some((mean.round() as u32).clamp(1, levels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prominence {
    Gender,
    Race,
    Balanced,
}

impl fmt::Display for Prominence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prominence::Gender => "gender-prominent",
            Prominence::Race => "race-prominent",
            Prominence::Balanced => "balanced",
        })
    }
}

/// Compares the mean gender-side rating (G1, G2) with the mean race-side
/// rating (G3_*, G4). Needs every group.
pub fn prominence(per_group: &BTreeMap<RatingGroup, u32>) -> Option<Prominence> {
    if RatingGroup::ALL.iter().any(|g| !per_group.contains_key(g)) {
        return None;
    }
    let (mut gs, mut gn, mut rs, mut rn) = (0u64, 0u64, 0u64, 0u64);
    for (g, &r) in per_group {
        if g.is_gender_side() {
            gs += u64::from(r);
            gn += 1;
        } else {
            rs += u64::from(r);
            rn += 1;
        }
    }
    Some(match (gs * rn).cmp(&(rs * gn)) {
        std::cmp::Ordering::Greater => Prominence::Gender,
        std::cmp::Ordering::Less => Prominence::Race,
        std::cmp::Ordering::Equal => Prominence::Balanced,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingReport {
    pub levels: u32,
    pub sas: Vec<String>,
    pub orders: Vec<PartialOrder>,
    pub per_group: BTreeMap<RatingGroup, BTreeMap<String, u32>>,
    pub overall: BTreeMap<String, u32>,
    pub prominence: BTreeMap<String, Prominence>,
    pub warnings: Vec<String>,
}

impl RatingReport {
    /// Rates every order and aggregates. `sas` fixes the row order.
    pub fn build(sas: Vec<String>, orders: Vec<PartialOrder>, levels: u32) -> Result<Self, RateError> {
        let mut per_group = BTreeMap::new();
        for po in &orders {
            per_group.insert(po.group, assign_rating(po, levels)?);
        }
        let mut warnings = Vec::new();
        for g in RatingGroup::ALL {
            if !per_group.contains_key(&g) {
                warnings.push(format!("group {g} has no data; column omitted"));
            }
        }
        let mut overall = BTreeMap::new();
        let mut prom = BTreeMap::new();
        for name in &sas {
            let by_group: BTreeMap<RatingGroup, u32> = per_group
                .iter()
                .filter_map(|(g, m)| m.get(name).map(|r| (*g, *r)))
                .collect();
            let values: Vec<u32> = by_group.values().copied().collect();
            if let Some(r) = overall_rating(&values, levels) {
                overall.insert(name.clone(), r);
            }
            match prominence(&by_group) {
                Some(p) => {
                    prom.insert(name.clone(), p);
                }
                None => warnings.push(format!("{name}: prominence note omitted, not every group was rated")),
            }
        }
        Ok(Self {
            levels,
            sas,
            orders,
            per_group,
            overall,
            prominence: prom,
            warnings,
        })
    }

    fn columns(&self) -> Vec<RatingGroup> {
        RatingGroup::ALL.into_iter().filter(|g| self.per_group.contains_key(g)).collect()
    }

    fn cell(&self, group: RatingGroup, sas: &str) -> String {
        self.per_group
            .get(&group)
            .and_then(|m| m.get(sas))
            .map_or_else(|| "-".to_string(), u32::to_string)
    }

    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut out = String::from("| SAS |");
        for g in &cols {
            out.push_str(&format!(" {g} |"));
        }
        out.push_str(" Overall |\n|---|");
        for _ in &cols {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for name in &self.sas {
            out.push_str(&format!("| {name} |"));
            for g in &cols {
                out.push_str(&format!(" {} |", self.cell(*g, name)));
            }
            let overall = self.overall.get(name).map_or_else(|| "-".to_string(), u32::to_string);
            out.push_str(&format!(" {overall} |\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = String::from("sas");
        for g in &cols {
            out.push_str(&format!(",{g}"));
        }
        out.push_str(",overall\n");
        for name in &self.sas {
            out.push_str(name);
            for g in &cols {
                out.push_str(&format!(",{}", self.cell(*g, name)));
            }
            let overall = self.overall.get(name).map_or_else(String::new, u32::to_string);
            out.push_str(&format!(",{overall}\n"));
        }
        out
    }

    /// Partial and complete orders per group.
    pub fn orders_markdown(&self) -> String {
        let mut out = String::new();
        for po in &self.orders {
            let ratings = &self.per_group[&po.group];
            let complete = po
                .entries
                .iter()
                .map(|(n, _)| format!("{n}: {}", ratings[n]))
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!(
                "## {}\n\n- partial order: {}\n- complete order: {}\n\n",
                po.group,
                po.render(),
                complete
            ));
        }
        out
    }

    pub fn prominence_markdown(&self) -> String {
        let mut out = String::new();
        for name in &self.sas {
            if let Some(p) = self.prominence.get(name) {
                out.push_str(&format!("- {name}: {p}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::DieValue;
    use proptest::prelude::*;

    fn order(values: &[Option<f64>]) -> PartialOrder {
        let scores = values.iter().enumerate().map(|(i, v)| {
            let psi = match v {
                Some(v) => PsiScore::wrs(*v),
                None => PsiScore::undefined(PsiKind::Die),
            };
            (format!("s{i}"), psi)
        });
        PartialOrder::from_scores(RatingGroup::G1, scores)
    }

    fn ratings(values: &[Option<f64>]) -> Vec<u32> {
        let r = assign_rating(&order(values), 3).unwrap();
        (0..values.len()).map(|i| r[&format!("s{i}")]).collect()
    }

    #[test]
    fn split_sizes() {
        assert_eq!(array_split_sizes(5, 3), vec![2, 2, 1]);
        assert_eq!(array_split_sizes(4, 3), vec![2, 1, 1]);
        assert_eq!(array_split_sizes(2, 3), vec![1, 1, 0]);
        assert_eq!(array_split_sizes(6, 3), vec![2, 2, 2]);
    }

    #[test]
    fn rating_examples() {
        assert_eq!(ratings(&[Some(0.0), Some(0.0), Some(0.6), Some(2.6), Some(23.0)]), vec![1, 1, 2, 2, 3]);
        assert_eq!(ratings(&[Some(0.0), Some(0.0), Some(0.0), Some(10.4), Some(69.0)]), vec![1, 1, 1, 2, 3]);
        assert_eq!(ratings(&[Some(0.0), Some(0.0), Some(10.87), Some(128.5), None]), vec![1, 1, 2, 3, 3]);
    }

    #[test]
    fn order_places_undefined_last() {
        let po = PartialOrder::from_scores(
            RatingGroup::G2,
            [
                ("B".to_string(), PsiScore::die(DieValue::Undefined)),
                ("A".to_string(), PsiScore::die(DieValue::Defined(0.0))),
            ],
        );
        let names: Vec<_> = po.entries.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
        assert_eq!(po.render(), "A (0) < B (X)");
    }

    #[test]
    fn single_sas() {
        assert_eq!(single_sas_rating(PsiScore::wrs(0.0), 3), 1);
        assert_eq!(single_sas_rating(PsiScore::wrs(0.6), 3), 3);
        assert_eq!(single_sas_rating(PsiScore::undefined(PsiKind::Die), 5), 5);
        assert_eq!(ratings(&[Some(0.6)]), vec![3]);
        assert!(matches!(assign_rating(&order(&[Some(0.0)]), 1), Err(RateError::TooFewLevels(1))));
    }

    #[test]
    fn overall_examples() {
        assert_eq!(overall_rating(&[2, 3, 2, 2, 1, 3], 3), Some(2));
        assert_eq!(overall_rating(&[1, 2, 1, 1, 1, 2], 3), Some(1));
        assert_eq!(overall_rating(&[3; 6], 3), Some(3));
        assert_eq!(overall_rating(&[1, 2], 3), Some(2));
        assert_eq!(overall_rating(&[], 3), None);
    }

    fn groups(g: u32, r: u32) -> BTreeMap<RatingGroup, u32> {
        RatingGroup::ALL
            .into_iter()
            .map(|x| (x, if x.is_gender_side() { g } else { r }))
            .collect()
    }

    #[test]
    fn prominence_examples() {
        assert_eq!(prominence(&groups(3, 1)), Some(Prominence::Gender));
        assert_eq!(prominence(&groups(2, 2)), Some(Prominence::Balanced));
        assert_eq!(prominence(&groups(1, 3)), Some(Prominence::Race));
        let mut partial = groups(1, 1);
        partial.remove(&RatingGroup::G4);
        assert_eq!(prominence(&partial), None);
    }

    #[test]
    fn report_rendering() {
        let orders = vec![
            PartialOrder::from_scores(RatingGroup::G1, [("a".to_string(), PsiScore::wrs(0.0)), ("b".to_string(), PsiScore::wrs(5.0))]),
            PartialOrder::from_scores(RatingGroup::G2, [("a".to_string(), PsiScore::wrs(1.0)), ("b".to_string(), PsiScore::wrs(0.0))]),
        ];
        let report = RatingReport::build(vec!["b".into(), "a".into()], orders, 3).unwrap();
        assert_eq!(report.to_csv(), "sas,G1,G2,overall\nb,2,1,2\na,1,2,2\n");
        assert!(report.to_markdown().starts_with("| SAS | G1 | G2 | Overall |\n|---|---|---|---|\n| b | 2 | 1 | 2 |"));
        assert_eq!(report.warnings.iter().filter(|w| w.contains("omitted")).count(), 6);
        assert!(report.orders_markdown().contains("- complete order: a: 1, b: 2"));
    }

    #[test]
    fn group_names_round_trip() {
        for g in RatingGroup::ALL {
            assert_eq!(g.as_str().parse::<RatingGroup>().unwrap(), g);
        }
        assert!("G5".parse::<RatingGroup>().is_err());
    }

    fn psi_values() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(prop_oneof![9 => (0u32..8).prop_map(|v| Some(f64::from(v))), 1 => Just(None)], 2..10)
    }

    proptest! {
        #[test]
        fn rating_monotone(values in psi_values(), levels in 2u32..7) {
            let po = order(&values);
            let r = assign_rating(&po, levels).unwrap();
            for (na, pa) in &po.entries {
                for (nb, pb) in &po.entries {
                    if pa.total_cmp(pb).is_le() {
                        prop_assert!(r[na] <= r[nb]);
                    }
                    if pa.total_cmp(pb).is_eq() {
                        prop_assert_eq!(r[na], r[nb]);
                    }
                }
                prop_assert!((1..=levels).contains(&r[na]));
            }
        }

        #[test]
        fn rating_depends_only_on_order(values in psi_values(), levels in 2u32..7) {
            let transformed: Vec<_> = values.iter().map(|v| v.map(|x| x.powi(3) * 2.5 + 7.0)).collect();
            prop_assert_eq!(assign_rating(&order(&values), levels).unwrap(), assign_rating(&order(&transformed), levels).unwrap());
        }

        #[test]
        fn distinct_values_get_distinct_ratings(n in 2usize..7, extra in 0u32..3) {
            let values: Vec<_> = (0..n).map(|i| Some(i as f64)).collect();
            let levels = n as u32 + extra;
            let r = assign_rating(&order(&values), levels).unwrap();
            let set: std::collections::BTreeSet<_> = r.values().collect();
            prop_assert_eq!(set.len(), n);
        }

        #[test]
        fn overall_within_bounds(ratings in prop::collection::vec(1u32..6, 1..8)) {
            let o = overall_rating(&ratings, 5).unwrap();
            prop_assert!(o >= *ratings.iter().min().unwrap());
            prop_assert!(o <= *ratings.iter().max().unwrap());
        }
    }
}
