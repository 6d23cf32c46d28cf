//! Sentiment analysis systems (SAS): the built-in synthetic scorers, the
//! discretization map and batch scoring over a corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{BridgeError, BridgeOptions, BridgeRequest, BridgeSession, Endpoint, RequestError};
use crate::corpus::{io_err, CorpusError, Gender, RecordLine, SentenceRecord};

pub const DEFAULT_DEAD_ZONE: f64 = 0.33;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("score {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("record {id}: no known emotion word in `{text}`")]
    NoLexiconWord { id: u64, text: String },
    #[error("record {id}: {count} lexicon words in `{text}`, expected exactly one")]
    AmbiguousLexicon { id: u64, count: usize, text: String },
    #[error("SAS `{0}` is random but has no seed")]
    MissingSeed(String),
    #[error("SAS `{0}` is external but has no endpoint")]
    MissingEndpoint(String),
    #[error("SAS `{0}` cannot be scored directly; it needs a bridge session")]
    NeedsBridge(String),
    #[error("bridge: {0}")]
    Bridge(#[from] BridgeError),
    #[error("record {id}: {source}")]
    Record {
        id: u64,
        #[source]
        source: RequestError,
    },
}

/// A sentiment value in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SentimentScore(f64);

impl SentimentScore {
    pub fn new(value: f64) -> Result<Self, ScoreError> {
        if value.is_finite() && (-1.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ScoreError::OutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SentimentScore {
    type Error = ScoreError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SentimentScore> for f64 {
    fn from(s: SentimentScore) -> f64 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SasKind {
    BiasedFemale,
    Random,
    Lexicon,
    External,
}

impl fmt::Display for SasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SasKind::BiasedFemale => "biased_female",
            SasKind::Random => "random",
            SasKind::Lexicon => "lexicon",
            SasKind::External => "external",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SasDescriptor {
    pub name: String,
    pub kind: SasKind,
    pub output_mode: OutputMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Endpoint>,
}

impl SasDescriptor {
    pub fn builtin(name: &str, kind: SasKind, output_mode: OutputMode) -> Self {
        Self {
            name: name.to_string(),
            kind,
            output_mode,
            seed: None,
            endpoint: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Word → polarity value table for the lexicon SAS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon(pub BTreeMap<String, f64>);

impl Default for Lexicon {
    fn default() -> Self {
        let entries = [("grim", -0.4), ("depressing", -0.9), ("happy", 0.8), ("glad", 0.5)];
        Self(entries.iter().map(|(w, v)| (w.to_string(), *v)).collect())
    }
}

impl Lexicon {
    /// Scores raw text: exactly one lexicon word must occur.
    pub fn score_text(&self, id: u64, text: &str) -> Result<SentimentScore, ScoreError> {
        let hits: Vec<f64> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .filter_map(|t| self.0.get(&t.to_lowercase()).copied())
            .collect();
        match hits.as_slice() {
            [v] => SentimentScore::new(*v),
            [] => Err(ScoreError::NoLexiconWord {
                id,
                text: text.to_string(),
            }),
            many => Err(ScoreError::AmbiguousLexicon {
                id,
                count: many.len(),
                text: text.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredRecord {
    pub record: SentenceRecord,
    pub score: SentimentScore,
}

pub fn score_biased_female(record: &SentenceRecord) -> SentimentScore {
    if record.subject.gender == Gender::Female {
        SentimentScore(1.0)
    } else {
        SentimentScore(-1.0)
    }
}

/// Draws from a ChaCha8 stream keyed by (seed, record id), so the value does
/// not depend on scoring order.
pub fn score_random(id: u64, seed: u64, mode: OutputMode) -> SentimentScore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    let v = match mode {
        OutputMode::Continuous => rng.random_range(-1.0..=1.0),
        OutputMode::Discrete => f64::from(rng.random_range(0..3i32) - 1),
    };
    SentimentScore(v)
}

pub fn score_lexicon(lexicon: &Lexicon, record: &SentenceRecord) -> Result<SentimentScore, ScoreError> {
    lexicon.score_text(record.id, &record.text)
}

/// Maps a score onto {-1, 0, +1} with a symmetric dead zone around zero.
/// Values exactly on ±dead_zone map to 0.
pub fn discretize(score: SentimentScore, dead_zone: f64) -> SentimentScore {
    let v = score.value();
    let d = if v > dead_zone {
        1.0
    } else if v < -dead_zone {
        -1.0
    } else {
        0.0
    };
    SentimentScore(d)
}

#[derive(Debug, Clone)]
pub struct ScoringOptions {
    pub dead_zone: f64,
    pub lexicon: Lexicon,
    pub bridge: BridgeOptions,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            dead_zone: DEFAULT_DEAD_ZONE,
            lexicon: Lexicon::default(),
            bridge: BridgeOptions::default(),
        }
    }
}

/// Raw score of a built-in SAS, before the output-mode map.
fn builtin_raw(
    sas: &SasDescriptor,
    opts: &ScoringOptions,
    record: &SentenceRecord,
) -> Result<SentimentScore, ScoreError> {
    match sas.kind {
        SasKind::BiasedFemale => Ok(score_biased_female(record)),
        SasKind::Random => {
            let seed = sas.seed.ok_or_else(|| ScoreError::MissingSeed(sas.name.clone()))?;
            Ok(score_random(record.id, seed, sas.output_mode))
        }
        SasKind::Lexicon => score_lexicon(&opts.lexicon, record),
        SasKind::External => Err(ScoreError::NeedsBridge(sas.name.clone())),
    }
}

fn apply_mode(sas: &SasDescriptor, opts: &ScoringOptions, raw: SentimentScore) -> SentimentScore {
    match sas.output_mode {
        OutputMode::Continuous => raw,
        OutputMode::Discrete => discretize(raw, opts.dead_zone),
    }
}

/// Scores records with a built-in SAS or through an already open bridge session.
pub fn score_with_session(
    sas: &SasDescriptor,
    opts: &ScoringOptions,
    records: &[SentenceRecord],
    session: Option<&mut BridgeSession>,
) -> Result<Vec<ScoredRecord>, ScoreError> {
    let raw: Vec<SentimentScore> = match (sas.kind, session) {
        (SasKind::External, Some(session)) => {
            let requests: Vec<BridgeRequest> = records
                .iter()
                .map(|r| BridgeRequest {
                    id: r.id,
                    text: r.text.clone(),
                })
                .collect();
            let responses = session.score_batch(&requests, opts.bridge.max_in_flight)?;
            responses
                .into_iter()
                .zip(records)
                .map(|(resp, rec)| {
                    let v = resp.map_err(|source| ScoreError::Record { id: rec.id, source })?;
                    SentimentScore::new(v)
                })
                .collect::<Result<_, _>>()?
        }
        (SasKind::External, None) => return Err(ScoreError::NeedsBridge(sas.name.clone())),
        _ => records
            .iter()
            .map(|r| builtin_raw(sas, opts, r))
            .collect::<Result<_, _>>()?,
    };
    Ok(records
        .iter()
        .zip(raw)
        .map(|(record, s)| ScoredRecord {
            record: record.clone(),
            score: apply_mode(sas, opts, s),
        })
        .collect())
}

/// Scores a dataset, opening a bridge session when the SAS is external.
pub fn score_dataset(
    sas: &SasDescriptor,
    opts: &ScoringOptions,
    records: &[SentenceRecord],
) -> Result<Vec<ScoredRecord>, ScoreError> {
    if sas.kind != SasKind::External {
        return score_with_session(sas, opts, records, None);
    }
    let endpoint = sas
        .endpoint
        .as_ref()
        .ok_or_else(|| ScoreError::MissingEndpoint(sas.name.clone()))?;
    let mut session = BridgeSession::connect(endpoint, &opts.bridge)?;
    score_with_session(sas, opts, records, Some(&mut session))
}

/// Scored JSONL line: the record followed by the SAS name, score and mode.
#[derive(Debug, Serialize, Deserialize)]
struct ScoredLine {
    #[serde(flatten)]
    record: RecordLine,
    sas: String,
    score: f64,
    discretized: bool,
}

/// A scored file's content.
#[derive(Debug, Clone)]
pub struct ScoredFile {
    pub sas: String,
    pub discretized: bool,
    pub records: Vec<ScoredRecord>,
}

pub fn write_scored(path: &Path, sas: &str, discretized: bool, scored: &[ScoredRecord]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for s in scored {
        let line = ScoredLine {
            record: RecordLine::from(&s.record),
            sas: sas.to_string(),
            score: s.score.value(),
            discretized,
        };
        let text = serde_json::to_string(&line).expect("scored line serializes");
        writeln!(w, "{text}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a scored file; every line must name the same SAS and mode.
pub fn read_scored(path: &Path) -> Result<ScoredFile, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out: Option<ScoredFile> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let parsed: ScoredLine = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let score = SentimentScore::new(parsed.score).map_err(|e| schema(e.to_string()))?;
        let record = parsed.record.into_record().map_err(schema)?;
        let acc = out.get_or_insert_with(|| ScoredFile {
            sas: parsed.sas.clone(),
            discretized: parsed.discretized,
            records: Vec::new(),
        });
        if acc.sas != parsed.sas || acc.discretized != parsed.discretized {
            return Err(schema("SAS name or mode differs from earlier lines".into()));
        }
        acc.records.push(ScoredRecord { record, score });
    }
    out.ok_or_else(|| CorpusError::Schema {
        line: 0,
        message: format!("{} is empty", path.display()),
    })
}
