//! Built-in checks against hand-derived values, run by `sasrate selftest`.

use std::collections::BTreeMap;

use crate::causal::{ate, die_percent, interventional_expectation, observational_expectation, DieValue, PsiKind, PsiScore};
use crate::corpus::{
    emotion_set, generate_group1, Attribute, EmotionSetId, EmotionWord, Gender, Group, Polarity, SentenceRecord,
    Subject, Vocabulary,
};
use crate::rater::{assign_rating, overall_rating, PartialOrder, RatingGroup};
use crate::sas::{score_lexicon, Lexicon, ScoredRecord, SentimentScore};
use crate::stats::{critical_t, welch_t, Sample, DEFAULT_CI_WEIGHTS};

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, want {want} (tol {tol})"))
    }
}

fn welch_case() -> Result<(), String> {
    let a = Sample::new("a", vec![1.0, 0.0, -1.0, 0.0]);
    let b = Sample::new("b", vec![0.0, 1.0, 0.0, 1.0]);
    let r = welch_t(&a, &b, 1e-4, &DEFAULT_CI_WEIGHTS).map_err(|e| e.to_string())?;
    close("t", r.t_abs, 0.5 / 0.5001, 1e-12)?;
    close("dof", r.dof, 27.0 / 5.0, 1e-12)
}

fn critical_values() -> Result<(), String> {
    let table = [(95, 10.0, 2.228), (60, 10.0, 0.879), (70, 10.0, 1.093), (95, 1.0, 12.706), (99, 30.0, 2.750)];
    for (ci, dof, want) in table {
        let got = critical_t(ci, dof).map_err(|e| e.to_string())?;
        close("t_crit", got, want, 1e-3)?;
    }
    Ok(())
}

fn rec(id: u64, surface: &str, gender: Gender, word: &str) -> SentenceRecord {
    SentenceRecord {
        id,
        group: Group::G2,
        emotion_set: EmotionSetId::E3,
        template_id: 1,
        subject: Subject::phrase(surface, gender),
        emotion: EmotionWord::builtin(word).expect("builtin word"),
        text: format!("{surface} feels {word}"),
    }
}

fn confounded_oracle() -> Result<(), String> {
    // male: 3 positive, 1 negative, all scored -1; female: the mirror, scored +1
    let mut scored = Vec::new();
    let layout = [("this boy", Gender::Male, 3, -1.0), ("this girl", Gender::Female, 1, 1.0)];
    for (surface, gender, pos, y) in layout {
        for i in 0..4 {
            let word = if i < pos { "happy" } else { "grim" };
            scored.push(ScoredRecord {
                record: rec(scored.len() as u64, surface, gender, word),
                score: SentimentScore::new(y).map_err(|e| e.to_string())?,
            });
        }
    }
    let err = |e: crate::causal::CausalError| e.to_string();
    close("E[Y|pos]", observational_expectation(&scored, Polarity::Positive).map_err(err)?, -0.5, 1e-12)?;
    close("E[Y|neg]", observational_expectation(&scored, Polarity::Negative).map_err(err)?, 0.5, 1e-12)?;
    for x in [Polarity::Positive, Polarity::Negative] {
        close("E[Y|do(x)]", interventional_expectation(&scored, x, Attribute::Gender).map_err(err)?, 0.0, 1e-12)?;
    }
    close("ATE", ate(&scored).map_err(err)?, -1.0, 1e-12)
}

fn lexicon_ate() -> Result<(), String> {
    let records = generate_group1(&Vocabulary::default(), &emotion_set(EmotionSetId::E3), 1).map_err(|e| e.to_string())?;
    let lex = Lexicon::default();
    let scored = records
        .into_iter()
        .map(|record| {
            let score = score_lexicon(&lex, &record).map_err(|e| e.to_string())?;
            Ok(ScoredRecord { record, score })
        })
        .collect::<Result<Vec<_>, String>>()?;
    close("ATE", ate(&scored).map_err(|e| e.to_string())?, 1.2, 1e-12)
}

fn die_spot() -> Result<(), String> {
    let want = [(-0.20, -0.10, 50.0), (-0.55, 0.03, 105.4545)];
    for (obs, intv, pct) in want {
        match die_percent(obs, intv) {
            DieValue::Defined(v) => close("DIE", v, pct, 1e-3)?,
            DieValue::Undefined => return Err("DIE unexpectedly undefined".into()),
        }
    }
    match die_percent(0.0, 0.03) {
        DieValue::Undefined => Ok(()),
        other => Err(format!("zero denominator gave {other:?}")),
    }
}

fn rating_split() -> Result<(), String> {
    let psi = [("a", Some(0.0)), ("b", Some(0.0)), ("c", Some(10.87)), ("d", Some(128.5)), ("e", None)];
    let po = PartialOrder::from_scores(
        RatingGroup::G2,
        psi.iter().map(|(n, v)| {
            let p = v.map_or(PsiScore::undefined(PsiKind::Die), PsiScore::wrs);
            (n.to_string(), p)
        }),
    );
    let got = assign_rating(&po, 3).map_err(|e| e.to_string())?;
    let want: BTreeMap<String, u32> = [("a", 1), ("b", 1), ("c", 2), ("d", 3), ("e", 3)]
        .iter()
        .map(|(n, r)| (n.to_string(), *r))
        .collect();
    if got != want {
        return Err(format!("ratings {got:?}"));
    }
    match overall_rating(&[2, 3, 2, 2, 1, 3], 3) {
        Some(2) => Ok(()),
        other => Err(format!("overall {other:?}")),
    }
}

pub fn run() -> Vec<Check> {
    vec![
        Check {
            name: "welch t and dof on a hand-worked pair",
            outcome: welch_case(),
        },
        Check {
            name: "critical t against printed tables",
            outcome: critical_values(),
        },
        Check {
            name: "backdoor adjustment on an eight-record confounded corpus",
            outcome: confounded_oracle(),
        },
        Check {
            name: "lexicon ATE on E3",
            outcome: lexicon_ate(),
        },
        Check {
            name: "DIE percentages",
            outcome: die_spot(),
        },
        Check {
            name: "array-split rating and overall mean",
            outcome: rating_split(),
        },
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_pass() {
        for c in super::run() {
            assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
        }
    }
}
