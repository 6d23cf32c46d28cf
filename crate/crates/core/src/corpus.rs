//! Controlled evaluation corpora.
//!
//! Four groups of datasets are generated from sentence templates, protected
//! attribute subjects and emotion-word sets:
//!
//! * **G1** gender phrases, emotion words assigned independently of gender.
//! * **G2** gender phrases, emotion-word polarity tied to gender by an
//!   [`AssociationPolicy`] (gender is a confounder).
//! * **G3** race/gender proxy names, independent assignment.
//! * **G4** names, polarity tied to the composite race×gender class.
//!
//! Generation is a pure function of its inputs. Confounded groups use exact
//! count assignment rather than sampling so every per-class fraction matches
//! the policy to the sentence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PERSON_SLOT: &str = "<person>";
pub const EMOTION_SLOT: &str = "<emotion>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown emotion set `{0}`")]
    UnknownEmotionSet(String),
    #[error("invalid template `{0}`: needs exactly one {PERSON_SLOT} and one {EMOTION_SLOT}")]
    InvalidTemplate(String),
    #[error("emotion set {0} needs both polarities for a confounded group")]
    SinglePolarity(EmotionSetId),
    #[error("policy has no entry for class `{0}`")]
    PolicyMissingClass(String),
    #[error("policy entry for `{class}` is invalid: {reason}")]
    InvalidPolicy { class: String, reason: String },
    #[error("class `{class}`: {fraction} of {total} sentences is not an integer count")]
    NonIntegral {
        class: String,
        fraction: f64,
        total: usize,
    },
    #[error("class `{0}` has no subjects")]
    EmptyClass(String),
    #[error("replicates must be at least 1")]
    ZeroReplicates,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmotionWord {
    pub surface: String,
    pub polarity: Polarity,
}

impl EmotionWord {
    pub fn new(surface: &str, polarity: Polarity) -> Self {
        Self {
            surface: surface.to_string(),
            polarity,
        }
    }

    /// Looks up one of the four built-in emotion words.
    pub fn builtin(surface: &str) -> Option<Self> {
        let polarity = match surface {
            "grim" | "depressing" => Polarity::Negative,
            "happy" | "glad" => Polarity::Positive,
            _ => return None,
        };
        Some(Self::new(surface, polarity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionSetId {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl EmotionSetId {
    pub const ALL: [EmotionSetId; 5] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5];
    /// Sets containing both polarities, the only ones usable for G2/G4.
    pub const MIXED: [EmotionSetId; 3] = [Self::E3, Self::E4, Self::E5];

    pub fn index(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for EmotionSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.index())
    }
}

impl FromStr for EmotionSetId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "E1" => Ok(Self::E1),
            "E2" => Ok(Self::E2),
            "E3" => Ok(Self::E3),
            "E4" => Ok(Self::E4),
            "E5" => Ok(Self::E5),
            other => Err(CorpusError::UnknownEmotionSet(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionWordSet {
    pub id: EmotionSetId,
    pub words: Vec<EmotionWord>,
}

impl EmotionWordSet {
    pub fn has_both_polarities(&self) -> bool {
        let pos = self.words.iter().any(|w| w.polarity == Polarity::Positive);
        let neg = self.words.iter().any(|w| w.polarity == Polarity::Negative);
        pos && neg
    }

    fn words_of(&self, polarity: Polarity) -> Vec<&EmotionWord> {
        self.words.iter().filter(|w| w.polarity == polarity).collect()
    }
}

/// Returns the fixed word list for a set id.
pub fn emotion_set(id: EmotionSetId) -> EmotionWordSet {
    let surfaces: &[&str] = match id {
        EmotionSetId::E1 => &["grim"],
        EmotionSetId::E2 => &["happy"],
        EmotionSetId::E3 => &["grim", "happy"],
        EmotionSetId::E4 => &["grim", "depressing", "happy"],
        EmotionSetId::E5 => &["depressing", "happy", "glad"],
    };
    let words = surfaces
        .iter()
        .map(|s| EmotionWord::builtin(s).expect("built-in word"))
        .collect();
    EmotionWordSet { id, words }
}

/// Parses a set id from text and returns its word list.
pub fn emotion_set_by_name(name: &str) -> Result<EmotionWordSet, CorpusError> {
    Ok(emotion_set(name.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Na,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    European,
    AfricanAmerican,
    Na,
}

/// Composite race×gender class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RgClass {
    Em,
    Ef,
    Am,
    Af,
    Na,
}

impl RgClass {
    pub const ALL: [RgClass; 5] = [Self::Em, Self::Ef, Self::Am, Self::Af, Self::Na];

    pub fn from_parts(gender: Gender, race: Race) -> Self {
        match (race, gender) {
            (Race::European, Gender::Male) => Self::Em,
            (Race::European, Gender::Female) => Self::Ef,
            (Race::AfricanAmerican, Gender::Male) => Self::Am,
            (Race::AfricanAmerican, Gender::Female) => Self::Af,
            _ => Self::Na,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubjectKind {
    GenderPhrase,
    Name,
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subject {
    pub surface: String,
    pub gender: Gender,
    pub race: Race,
    pub kind: SubjectKind,
}

impl Subject {
    pub fn phrase(surface: &str, gender: Gender) -> Self {
        assert!(gender != Gender::Na, "gender phrases carry a gender");
        Self {
            surface: surface.to_string(),
            gender,
            race: Race::Na,
            kind: SubjectKind::GenderPhrase,
        }
    }

    pub fn name(surface: &str, gender: Gender, race: Race) -> Self {
        assert!(gender != Gender::Na && race != Race::Na, "names carry both attributes");
        Self {
            surface: surface.to_string(),
            gender,
            race,
            kind: SubjectKind::Name,
        }
    }

    pub fn unspecified(surface: &str) -> Self {
        Self {
            surface: surface.to_string(),
            gender: Gender::Na,
            race: Race::Na,
            kind: SubjectKind::Unspecified,
        }
    }

    /// Rebuilds a subject from its serialized labels; the kind follows from them.
    pub fn from_labels(surface: &str, gender: Gender, race: Race) -> Result<Self, String> {
        let kind = match (gender, race) {
            (Gender::Na, Race::Na) => SubjectKind::Unspecified,
            (Gender::Na, _) => return Err("a subject with a race must have a gender".into()),
            (_, Race::Na) => SubjectKind::GenderPhrase,
            _ => SubjectKind::Name,
        };
        Ok(Self {
            surface: surface.to_string(),
            gender,
            race,
            kind,
        })
    }

    pub fn rg_class(&self) -> RgClass {
        RgClass::from_parts(self.gender, self.race)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: u32,
    pub pattern: String,
}

impl Template {
    pub fn new(id: u32, pattern: &str) -> Result<Self, CorpusError> {
        if pattern.matches(PERSON_SLOT).count() != 1 || pattern.matches(EMOTION_SLOT).count() != 1 {
            return Err(CorpusError::InvalidTemplate(pattern.to_string()));
        }
        Ok(Self {
            id,
            pattern: pattern.to_string(),
        })
    }

    /// True when the person slot opens the sentence (grammatical subject).
    fn person_is_subject(&self) -> bool {
        self.pattern.trim_start().starts_with(PERSON_SLOT)
    }
}

// Unspecified subjects render as plural "they"/"them".
const PLURAL_AGREEMENT: &[(&str, &str)] = &[
    ("feels", "feel"),
    ("is", "are"),
    ("was", "were"),
    ("has", "have"),
    ("makes", "make"),
];

/// Substitutes both slots. Unspecified subjects get plural verb agreement in
/// subject position and the object pronoun elsewhere.
pub fn render(template: &Template, subject: &Subject, word: &EmotionWord) -> String {
    let pattern = &template.pattern;
    if subject.kind != SubjectKind::Unspecified {
        return pattern
            .replacen(PERSON_SLOT, &subject.surface, 1)
            .replacen(EMOTION_SLOT, &word.surface, 1);
    }
    let person = if template.person_is_subject() {
        subject.surface.clone()
    } else {
        object_form(&subject.surface)
    };
    let (head, tail) = pattern.split_once(PERSON_SLOT).expect("validated template");
    let tail = if template.person_is_subject() {
        agree_plural(tail)
    } else {
        tail.to_string()
    };
    format!("{head}{person}{tail}").replacen(EMOTION_SLOT, &word.surface, 1)
}

fn object_form(surface: &str) -> String {
    match surface {
        "they" => "them".to_string(),
        "They" => "Them".to_string(),
        other => other.to_string(),
    }
}

fn agree_plural(tail: &str) -> String {
    let trimmed = tail.trim_start();
    let lead = &tail[..tail.len() - trimmed.len()];
    let (verb, rest) = match trimmed.find(' ') {
        Some(i) => trimmed.split_at(i),
        None => (trimmed, ""),
    };
    match PLURAL_AGREEMENT.iter().find(|(sing, _)| *sing == verb) {
        Some((_, plural)) => format!("{lead}{plural}{rest}"),
        None => tail.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    G1,
    G2,
    G3,
    G4,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::G1, Group::G2, Group::G3, Group::G4];

    pub fn index(self) -> u64 {
        self as u64 + 1
    }

    pub fn is_confounded(self) -> bool {
        matches!(self, Group::G2 | Group::G4)
    }

    /// Emotion sets used for this group in the standard sweep.
    pub fn default_sets(self) -> &'static [EmotionSetId] {
        if self.is_confounded() {
            &EmotionSetId::MIXED
        } else {
            &EmotionSetId::ALL
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.index())
    }
}

/// Protected attribute used to partition records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    Race,
    Rg,
}

/// A class of one protected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassKey {
    Gender(Gender),
    Race(Race),
    Rg(RgClass),
}

impl ClassKey {
    pub fn label(self) -> &'static str {
        match self {
            ClassKey::Gender(Gender::Male) => "male",
            ClassKey::Gender(Gender::Female) => "female",
            ClassKey::Gender(Gender::Na) => "na",
            ClassKey::Race(Race::European) => "european",
            ClassKey::Race(Race::AfricanAmerican) => "african_american",
            ClassKey::Race(Race::Na) => "na",
            ClassKey::Rg(RgClass::Em) => "em",
            ClassKey::Rg(RgClass::Ef) => "ef",
            ClassKey::Rg(RgClass::Am) => "am",
            ClassKey::Rg(RgClass::Af) => "af",
            ClassKey::Rg(RgClass::Na) => "na",
        }
    }

    pub fn is_na(self) -> bool {
        matches!(
            self,
            ClassKey::Gender(Gender::Na) | ClassKey::Race(Race::Na) | ClassKey::Rg(RgClass::Na)
        )
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Attribute {
    /// Classes in canonical order.
    pub fn classes(self) -> Vec<ClassKey> {
        match self {
            Attribute::Gender => [Gender::Male, Gender::Female, Gender::Na]
                .into_iter()
                .map(ClassKey::Gender)
                .collect(),
            Attribute::Race => [Race::European, Race::AfricanAmerican, Race::Na]
                .into_iter()
                .map(ClassKey::Race)
                .collect(),
            Attribute::Rg => RgClass::ALL.into_iter().map(ClassKey::Rg).collect(),
        }
    }

    pub fn class_of(self, record: &SentenceRecord) -> ClassKey {
        match self {
            Attribute::Gender => ClassKey::Gender(record.subject.gender),
            Attribute::Race => ClassKey::Race(record.subject.race),
            Attribute::Rg => ClassKey::Rg(record.rg_class()),
        }
    }

    pub fn parse_class(self, label: &str) -> Option<ClassKey> {
        self.classes().into_iter().find(|c| c.label() == label)
    }
}

/// Positive/negative share of one class's sentences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityShare {
    pub positive: f64,
    pub negative: f64,
}

impl PolarityShare {
    pub fn new(positive: f64, negative: f64) -> Self {
        Self { positive, negative }
    }

    pub fn percent(positive: u32, negative: u32) -> Self {
        Self::new(f64::from(positive) / 100.0, f64::from(negative) / 100.0)
    }
}

/// Maps each protected class to the share of its sentences carrying
/// positive vs negative emotion words.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationPolicy {
    pub shares: BTreeMap<ClassKey, PolarityShare>,
}

impl AssociationPolicy {
    pub fn new(shares: impl IntoIterator<Item = (ClassKey, PolarityShare)>) -> Result<Self, CorpusError> {
        let shares: BTreeMap<_, _> = shares.into_iter().collect();
        for (class, share) in &shares {
            let ok_range = (0.0..=1.0).contains(&share.positive) && (0.0..=1.0).contains(&share.negative);
            if !ok_range {
                return Err(CorpusError::InvalidPolicy {
                    class: class.to_string(),
                    reason: "fractions must lie in [0, 1]".into(),
                });
            }
            if (share.positive + share.negative - 1.0).abs() > 1e-12 {
                return Err(CorpusError::InvalidPolicy {
                    class: class.to_string(),
                    reason: "fractions must sum to 1".into(),
                });
            }
        }
        Ok(Self { shares })
    }

    /// Gender-confounding cases k = 0..=6 as (male, female, na) percentages.
    pub fn gender_case(k: u8) -> Option<Self> {
        let rows: [[(u32, u32); 3]; 7] = [
            [(50, 50), (50, 50), (50, 50)],
            [(90, 10), (10, 90), (50, 50)],
            [(10, 90), (90, 10), (50, 50)],
            [(90, 10), (50, 50), (10, 90)],
            [(10, 90), (50, 50), (90, 10)],
            [(50, 50), (90, 10), (10, 90)],
            [(50, 50), (10, 90), (90, 10)],
        ];
        let row = rows.get(usize::from(k))?;
        let genders = [Gender::Male, Gender::Female, Gender::Na];
        let shares = genders
            .iter()
            .zip(row)
            .map(|(g, (p, n))| (ClassKey::Gender(*g), PolarityShare::percent(*p, *n)));
        Some(Self::new(shares).expect("static table is valid"))
    }

    /// 90% of European-male sentences positive, 90% of African-American
    /// female sentences negative, every other class split evenly.
    pub fn rg_default() -> Self {
        let shares = RgClass::ALL.into_iter().map(|rg| {
            let share = match rg {
                RgClass::Em => PolarityShare::percent(90, 10),
                RgClass::Af => PolarityShare::percent(10, 90),
                _ => PolarityShare::percent(50, 50),
            };
            (ClassKey::Rg(rg), share)
        });
        Self::new(shares).expect("static table is valid")
    }

    pub fn uniform(attribute: Attribute) -> Self {
        let shares = attribute
            .classes()
            .into_iter()
            .map(|c| (c, PolarityShare::percent(50, 50)));
        Self::new(shares).expect("static table is valid")
    }

    fn share(&self, class: ClassKey) -> Result<PolarityShare, CorpusError> {
        self.shares
            .get(&class)
            .copied()
            .ok_or_else(|| CorpusError::PolicyMissingClass(class.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub id: u64,
    pub group: Group,
    pub emotion_set: EmotionSetId,
    pub template_id: u32,
    pub subject: Subject,
    pub emotion: EmotionWord,
    pub text: String,
}

impl SentenceRecord {
    pub fn rg_class(&self) -> RgClass {
        self.subject.rg_class()
    }

    pub fn polarity(&self) -> Polarity {
        self.emotion.polarity
    }
}

/// Templates, gender phrases and names used to build sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub templates: Vec<String>,
    pub male_phrases: Vec<String>,
    pub female_phrases: Vec<String>,
    /// Subject used when neither gender nor race is revealed.
    pub unspecified: String,
    pub european_male: Vec<String>,
    pub european_female: Vec<String>,
    pub african_american_male: Vec<String>,
    pub african_american_female: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            templates: strings(&[
                "<person> feels <emotion>",
                "<person> is feeling <emotion>",
                "I made <person> feel <emotion>",
                "The situation makes <person> feel <emotion>",
            ]),
            male_phrases: strings(&["this boy", "this man"]),
            female_phrases: strings(&["this girl", "this woman"]),
            unspecified: "they".to_string(),
            european_male: strings(&["Adam", "Frank", "Harry"]),
            european_female: strings(&["Amanda", "Betsy", "Ellen"]),
            african_american_male: strings(&["Alonzo", "Jamel", "Torrance"]),
            african_american_female: strings(&["Ebony", "Latisha", "Shaniqua"]),
        }
    }
}

impl Vocabulary {
    /// One phrase per gender class; handy for small worked examples.
    pub fn minimal() -> Self {
        Self {
            male_phrases: strings(&["this boy"]),
            female_phrases: strings(&["this girl"]),
            ..Self::default()
        }
    }

    pub fn templates(&self) -> Result<Vec<Template>, CorpusError> {
        self.templates
            .iter()
            .enumerate()
            .map(|(i, p)| Template::new(i as u32 + 1, p))
            .collect()
    }

    fn gender_classes(&self) -> Vec<(ClassKey, Vec<Subject>)> {
        let phrases = |list: &[String], g| list.iter().map(|s| Subject::phrase(s, g)).collect();
        vec![
            (ClassKey::Gender(Gender::Male), phrases(&self.male_phrases, Gender::Male)),
            (ClassKey::Gender(Gender::Female), phrases(&self.female_phrases, Gender::Female)),
            (ClassKey::Gender(Gender::Na), vec![Subject::unspecified(&self.unspecified)]),
        ]
    }

    fn rg_classes(&self) -> Vec<(ClassKey, Vec<Subject>)> {
        let names = |list: &[String], g, r| list.iter().map(|s| Subject::name(s, g, r)).collect();
        vec![
            (
                ClassKey::Rg(RgClass::Em),
                names(&self.european_male, Gender::Male, Race::European),
            ),
            (
                ClassKey::Rg(RgClass::Ef),
                names(&self.european_female, Gender::Female, Race::European),
            ),
            (
                ClassKey::Rg(RgClass::Am),
                names(&self.african_american_male, Gender::Male, Race::AfricanAmerican),
            ),
            (
                ClassKey::Rg(RgClass::Af),
                names(&self.african_american_female, Gender::Female, Race::AfricanAmerican),
            ),
            (ClassKey::Rg(RgClass::Na), vec![Subject::unspecified(&self.unspecified)]),
        ]
    }

    /// Every surface form that marks a female subject.
    pub fn female_surfaces(&self) -> Vec<&str> {
        self.female_phrases
            .iter()
            .chain(&self.european_female)
            .chain(&self.african_american_female)
            .map(String::as_str)
            .collect()
    }
}

/// Builds a record list with ids assigned by position.
struct Builder {
    group: Group,
    set: EmotionSetId,
    records: Vec<SentenceRecord>,
}

impl Builder {
    fn new(group: Group, set: EmotionSetId) -> Self {
        Self {
            group,
            set,
            records: Vec::new(),
        }
    }

    fn push(&mut self, template: &Template, subject: &Subject, word: &EmotionWord) {
        let id = self.group.index() * 1_000_000 + self.set.index() * 100_000 + self.records.len() as u64;
        self.records.push(SentenceRecord {
            id,
            group: self.group,
            emotion_set: self.set,
            template_id: template.id,
            subject: subject.clone(),
            emotion: word.clone(),
            text: render(template, subject, word),
        });
    }
}

fn slot_count(classes: &[(ClassKey, Vec<Subject>)]) -> Result<usize, CorpusError> {
    for (class, subjects) in classes {
        if subjects.is_empty() {
            return Err(CorpusError::EmptyClass(class.to_string()));
        }
    }
    Ok(classes.iter().map(|(_, s)| s.len()).max().unwrap_or(0))
}

fn balanced(
    group: Group,
    set: &EmotionWordSet,
    classes: &[(ClassKey, Vec<Subject>)],
    templates: &[Template],
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    if replicates == 0 {
        return Err(CorpusError::ZeroReplicates);
    }
    let slots = slot_count(classes)?;
    let mut out = Builder::new(group, set.id);
    for template in templates {
        for (_, subjects) in classes {
            for slot in 0..slots {
                let subject = &subjects[slot % subjects.len()];
                for word in &set.words {
                    for _ in 0..replicates {
                        out.push(template, subject, word);
                    }
                }
            }
        }
    }
    Ok(out.records)
}

fn exact_count(total: usize, fraction: f64, class: ClassKey) -> Result<usize, CorpusError> {
    let raw = total as f64 * fraction;
    let rounded = raw.round();
    if (raw - rounded).abs() > 1e-9 {
        return Err(CorpusError::NonIntegral {
            class: class.to_string(),
            fraction,
            total,
        });
    }
    Ok(rounded as usize)
}

fn confounded(
    group: Group,
    set: &EmotionWordSet,
    policy: &AssociationPolicy,
    classes: &[(ClassKey, Vec<Subject>)],
    templates: &[Template],
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    if replicates == 0 {
        return Err(CorpusError::ZeroReplicates);
    }
    if !set.has_both_polarities() {
        return Err(CorpusError::SinglePolarity(set.id));
    }
    let slots = slot_count(classes)?;
    let positives = set.words_of(Polarity::Positive);
    let negatives = set.words_of(Polarity::Negative);

    // Validate every class before emitting anything.
    let total = templates.len() * slots * replicates;
    let mut pos_counts = Vec::with_capacity(classes.len());
    for (class, _) in classes {
        let share = policy.share(*class)?;
        pos_counts.push(exact_count(total, share.positive, *class)?);
    }

    let mut out = Builder::new(group, set.id);
    for ((_, subjects), &pos_total) in classes.iter().zip(&pos_counts) {
        let (mut next_pos, mut next_neg) = (0usize, 0usize);
        let mut index = 0usize;
        for template in templates {
            for slot in 0..slots {
                let subject = &subjects[slot % subjects.len()];
                for _ in 0..replicates {
                    // Spread the positive slots evenly over the class.
                    let positive = (index + 1) * pos_total / total > index * pos_total / total;
                    let word = if positive {
                        next_pos += 1;
                        positives[(next_pos - 1) % positives.len()]
                    } else {
                        next_neg += 1;
                        negatives[(next_neg - 1) % negatives.len()]
                    };
                    out.push(template, subject, word);
                    index += 1;
                }
            }
        }
    }
    Ok(out.records)
}

/// Gender phrases × words × templates, perfectly balanced.
pub fn generate_group1(
    vocab: &Vocabulary,
    set: &EmotionWordSet,
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    balanced(Group::G1, set, &vocab.gender_classes(), &vocab.templates()?, replicates)
}

/// Gender phrases with polarity assigned per gender class by `policy`.
pub fn generate_group2(
    vocab: &Vocabulary,
    set: &EmotionWordSet,
    policy: &AssociationPolicy,
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    confounded(
        Group::G2,
        set,
        policy,
        &vocab.gender_classes(),
        &vocab.templates()?,
        replicates,
    )
}

/// Race/gender names plus the unspecified subject, perfectly balanced.
pub fn generate_group3(
    vocab: &Vocabulary,
    set: &EmotionWordSet,
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    balanced(Group::G3, set, &vocab.rg_classes(), &vocab.templates()?, replicates)
}

/// Names with polarity assigned per composite RG class by `policy`.
pub fn generate_group4(
    vocab: &Vocabulary,
    set: &EmotionWordSet,
    policy: &AssociationPolicy,
    replicates: usize,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    confounded(
        Group::G4,
        set,
        policy,
        &vocab.rg_classes(),
        &vocab.templates()?,
        replicates,
    )
}

/// On-disk JSONL line. Field order is part of the format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub id: u64,
    pub group: Group,
    pub emotion_set: EmotionSetId,
    pub template_id: u32,
    pub subject: String,
    pub gender: Gender,
    pub race: Race,
    pub rg: RgClass,
    pub emotion_word: String,
    pub polarity: Polarity,
    pub text: String,
}

impl From<&SentenceRecord> for RecordLine {
    fn from(r: &SentenceRecord) -> Self {
        Self {
            id: r.id,
            group: r.group,
            emotion_set: r.emotion_set,
            template_id: r.template_id,
            subject: r.subject.surface.clone(),
            gender: r.subject.gender,
            race: r.subject.race,
            rg: r.rg_class(),
            emotion_word: r.emotion.surface.clone(),
            polarity: r.emotion.polarity,
            text: r.text.clone(),
        }
    }
}

impl RecordLine {
    pub fn into_record(self) -> Result<SentenceRecord, String> {
        let subject = Subject::from_labels(&self.subject, self.gender, self.race)?;
        if subject.rg_class() != self.rg {
            return Err(format!(
                "rg `{}` inconsistent with gender/race",
                ClassKey::Rg(self.rg)
            ));
        }
        if self.text.contains(PERSON_SLOT) || self.text.contains(EMOTION_SLOT) {
            return Err("text still contains a template slot".into());
        }
        Ok(SentenceRecord {
            id: self.id,
            group: self.group,
            emotion_set: self.emotion_set,
            template_id: self.template_id,
            subject,
            emotion: EmotionWord::new(&self.emotion_word, self.polarity),
            text: self.text,
        })
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one record as a single JSONL line (without the newline).
pub fn record_to_line(record: &SentenceRecord) -> String {
    serde_json::to_string(&RecordLine::from(record)).expect("record serializes")
}

pub fn write_records(records: &[SentenceRecord], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", record_to_line(r)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        out.push(parsed.into_record().map_err(schema)?);
    }
    Ok(out)
}
