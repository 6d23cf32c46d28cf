//! Run configuration: a single JSON document driving generate, score and rate.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{BridgeOptions, Endpoint};
use crate::corpus::{
    emotion_set, generate_group1, generate_group2, generate_group3, generate_group4, AssociationPolicy, Attribute,
    CorpusError, EmotionSetId, Group, PolarityShare, SentenceRecord, Vocabulary,
};
use crate::sas::{Lexicon, OutputMode, SasDescriptor, SasKind, ScoringOptions, DEFAULT_DEAD_ZONE};
use crate::stats::{CiWeight, DEFAULT_CI_WEIGHTS, DEFAULT_EPSILON, SUPPORTED_CI};

/// Suffix of the discretized variant of a SAS run in both modes.
pub const DISCRETE_SUFFIX: &str = "+d";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Continuous,
    Discrete,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SasEntry {
    pub name: String,
    pub kind: SasKind,
    pub output_mode: ModeChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Endpoint>,
}

/// A named policy ("k0".."k6", "default", "uniform") or explicit shares
/// keyed by class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Named(String),
    Explicit(BTreeMap<String, PolarityShare>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_sets: Option<Vec<EmotionSetId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_groups() -> BTreeMap<Group, GroupConfig> {
    Group::ALL.into_iter().map(|g| (g, GroupConfig::default())).collect()
}

fn default_ci_weights() -> Vec<CiWeight> {
    DEFAULT_CI_WEIGHTS.to_vec()
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_dead_zone() -> f64 {
    DEFAULT_DEAD_ZONE
}

fn default_levels() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub sas: Vec<SasEntry>,
    #[serde(default = "default_groups")]
    pub groups: BTreeMap<Group, GroupConfig>,
    #[serde(default = "default_ci_weights")]
    pub ci_weights: Vec<CiWeight>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_dead_zone")]
    pub dead_zone: f64,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default)]
    pub lexicon: Option<Lexicon>,
    #[serde(default)]
    pub vocabulary: Option<Vocabulary>,
    #[serde(default)]
    pub bridge: BridgeOptions,
}

/// One scored stream: a SAS in a single output mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SasVariant {
    pub base: String,
    pub descriptor: SasDescriptor,
    pub discretized: bool,
    pub mode: ModeChoice,
}

impl SasVariant {
    pub fn name(&self) -> &str {
        &self.descriptor.name
    }
}

/// A (group, emotion set) corpus to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPlan {
    pub group: Group,
    pub set: EmotionSetId,
    pub replicates: usize,
    pub policy: Option<AssociationPolicy>,
}

impl CorpusPlan {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.group, self.set)
    }

    pub fn generate(&self, vocab: &Vocabulary) -> Result<Vec<SentenceRecord>, CorpusError> {
        let set = emotion_set(self.set);
        match (self.group, &self.policy) {
            (Group::G1, _) => generate_group1(vocab, &set, self.replicates),
            (Group::G3, _) => generate_group3(vocab, &set, self.replicates),
            (Group::G2, Some(p)) => generate_group2(vocab, &set, p, self.replicates),
            (Group::G4, Some(p)) => generate_group4(vocab, &set, p, self.replicates),
            (g, None) => unreachable!("confounded group {g} planned without a policy"),
        }
    }
}

fn default_replicates(group: Group) -> usize {
    if group.is_confounded() {
        5
    } else {
        1
    }
}

fn resolve_policy(group: Group, spec: Option<&PolicySpec>) -> Result<AssociationPolicy, String> {
    let attribute = if group == Group::G2 { Attribute::Gender } else { Attribute::Rg };
    match spec {
        None if group == Group::G2 => Ok(AssociationPolicy::gender_case(1).expect("k1 exists")),
        None => Ok(AssociationPolicy::rg_default()),
        Some(PolicySpec::Named(name)) => match name.as_str() {
            "uniform" => Ok(AssociationPolicy::uniform(attribute)),
            "default" if group == Group::G4 => Ok(AssociationPolicy::rg_default()),
            "default" => Ok(AssociationPolicy::gender_case(1).expect("k1 exists")),
            k if group == Group::G2 && k.starts_with('k') => k[1..]
                .parse::<u8>()
                .ok()
                .and_then(AssociationPolicy::gender_case)
                .ok_or_else(|| format!("unknown case `{k}`, expected k0..k6")),
            other => Err(format!("unknown policy `{other}`")),
        },
        Some(PolicySpec::Explicit(map)) => {
            let mut shares = Vec::new();
            for (label, share) in map {
                let class = attribute
                    .parse_class(label)
                    .ok_or_else(|| format!("unknown class `{label}` for {group}"))?;
                shares.push((class, *share));
            }
            AssociationPolicy::new(shares).map_err(|e| e.to_string())
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '+'))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocabulary.clone().unwrap_or_default()
    }

    pub fn scoring_options(&self) -> ScoringOptions {
        ScoringOptions {
            dead_zone: self.dead_zone,
            lexicon: self.lexicon.clone().unwrap_or_default(),
            bridge: self.bridge.clone(),
        }
    }

    /// Corpora in group then emotion-set order.
    pub fn corpus_plans(&self) -> Result<Vec<CorpusPlan>, ConfigError> {
        let mut plans = Vec::new();
        for (&group, gc) in &self.groups {
            let field = format!("groups.{group}");
            let sets = gc.emotion_sets.clone().unwrap_or_else(|| group.default_sets().to_vec());
            let replicates = gc.replicates.unwrap_or_else(|| default_replicates(group));
            let policy = if group.is_confounded() {
                Some(resolve_policy(group, gc.policy.as_ref()).map_err(|m| invalid(format!("{field}.policy"), m))?)
            } else {
                if gc.policy.is_some() {
                    return Err(invalid(format!("{field}.policy"), "only G2 and G4 take a policy"));
                }
                None
            };
            let mut seen = BTreeSet::new();
            for set in sets {
                if !seen.insert(set) {
                    return Err(invalid(format!("{field}.emotion_sets"), format!("{set} listed twice")));
                }
                plans.push(CorpusPlan {
                    group,
                    set,
                    replicates,
                    policy: policy.clone(),
                });
            }
        }
        Ok(plans)
    }

    /// SAS streams to score; a SAS in both modes yields two.
    pub fn variants(&self) -> Vec<SasVariant> {
        let mut out = Vec::new();
        for e in &self.sas {
            let seed = if e.kind == SasKind::Random { e.seed.or(self.seed) } else { None };
            let make = |name: String, mode: OutputMode| SasDescriptor {
                name,
                kind: e.kind,
                output_mode: mode,
                seed,
                endpoint: e.endpoint.clone(),
            };
            let variant = |descriptor, discretized| SasVariant {
                base: e.name.clone(),
                descriptor,
                discretized,
                mode: e.output_mode,
            };
            match e.output_mode {
                ModeChoice::Continuous => out.push(variant(make(e.name.clone(), OutputMode::Continuous), false)),
                ModeChoice::Discrete => out.push(variant(make(e.name.clone(), OutputMode::Discrete), true)),
                ModeChoice::Both => {
                    out.push(variant(make(e.name.clone(), OutputMode::Continuous), false));
                    out.push(variant(make(format!("{}{DISCRETE_SUFFIX}", e.name), OutputMode::Discrete), true));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sas.is_empty() {
            return Err(invalid("sas", "at least one SAS is required"));
        }
        for (i, e) in self.sas.iter().enumerate() {
            let field = format!("sas[{i}]");
            if !valid_name(&e.name) {
                return Err(invalid(format!("{field}.name"), "use letters, digits, '_', '-', '.' or '+'"));
            }
            if e.name.ends_with(DISCRETE_SUFFIX) {
                return Err(invalid(format!("{field}.name"), format!("suffix `{DISCRETE_SUFFIX}` is reserved")));
            }
            match e.kind {
                SasKind::Random if e.seed.is_none() && self.seed.is_none() => {
                    return Err(invalid(format!("{field}.seed"), "a seed is required for a random SAS"));
                }
                SasKind::External if e.endpoint.is_none() => {
                    return Err(invalid(format!("{field}.endpoint"), "an external SAS needs an endpoint"));
                }
                SasKind::External => {
                    if let Some(Endpoint::Command(argv)) = &e.endpoint {
                        if argv.is_empty() {
                            return Err(invalid(format!("{field}.endpoint.command"), "empty command"));
                        }
                    }
                }
                _ if e.endpoint.is_some() => {
                    return Err(invalid(format!("{field}.endpoint"), "only external SASs take an endpoint"));
                }
                _ => {}
            }
        }
        let mut names = BTreeSet::new();
        for v in self.variants() {
            if !names.insert(v.name().to_string()) {
                return Err(invalid("sas", format!("duplicate name `{}`", v.name())));
            }
        }

        if self.groups.is_empty() {
            return Err(invalid("groups", "at least one group is required"));
        }
        for (group, gc) in &self.groups {
            let field = format!("groups.{group}");
            if gc.replicates == Some(0) {
                return Err(invalid(format!("{field}.replicates"), "must be at least 1"));
            }
            if let Some(sets) = &gc.emotion_sets {
                if sets.is_empty() {
                    return Err(invalid(format!("{field}.emotion_sets"), "must not be empty"));
                }
                if group.is_confounded() {
                    if let Some(bad) = sets.iter().find(|s| !EmotionSetId::MIXED.contains(s)) {
                        return Err(invalid(
                            format!("{field}.emotion_sets"),
                            format!("{bad} lacks one polarity; {group} needs E3, E4 or E5"),
                        ));
                    }
                }
            }
        }
        // integrality of policy fractions is checked by a dry run
        let vocab = self.vocabulary();
        vocab.templates().map_err(|e| invalid("vocabulary.templates", e.to_string()))?;
        for plan in self.corpus_plans()? {
            plan.generate(&vocab).map_err(|e| {
                let sub = if plan.group.is_confounded() { "policy" } else { "replicates" };
                invalid(format!("groups.{}.{sub}", plan.group), format!("{}: {e}", plan.set))
            })?;
        }

        if self.ci_weights.is_empty() {
            return Err(invalid("ci_weights", "at least one confidence level is required"));
        }
        let mut cis = BTreeSet::new();
        for (i, cw) in self.ci_weights.iter().enumerate() {
            if !SUPPORTED_CI.contains(&cw.ci) {
                return Err(invalid(
                    format!("ci_weights[{i}].ci"),
                    format!("{} is not one of {SUPPORTED_CI:?}", cw.ci),
                ));
            }
            if !(cw.weight.is_finite() && cw.weight >= 0.0) {
                return Err(invalid(format!("ci_weights[{i}].weight"), "must be a finite non-negative number"));
            }
            if !cis.insert(cw.ci) {
                return Err(invalid(format!("ci_weights[{i}].ci"), "listed twice"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dead_zone) {
            return Err(invalid("dead_zone", "must lie in [0, 1)"));
        }
        if self.levels < 2 {
            return Err(invalid("levels", "must be at least 2"));
        }
        if let Some(lex) = &self.lexicon {
            for (word, v) in &lex.0 {
                if !(-1.0..=1.0).contains(v) {
                    return Err(invalid(format!("lexicon.{word}"), "value outside [-1, 1]"));
                }
            }
        }
        if self.bridge.handshake_timeout_ms == 0 || self.bridge.request_timeout_ms == 0 {
            return Err(invalid("bridge", "timeouts must be positive"));
        }
        if self.bridge.max_in_flight == 0 {
            return Err(invalid("bridge.max_in_flight", "must be at least 1"));
        }
        Ok(())
    }
}
