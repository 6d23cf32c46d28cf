//! The generate → score → rate pipeline with checksummed manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bridge::BridgeSession;
use crate::causal::{DieRow, DieValue};
use crate::config::{ConfigError, ModeChoice, RunConfig, SasVariant};
use crate::corpus::{read_records, write_records, CorpusError, EmotionSetId, Group, SentenceRecord};
use crate::rater::{group_psi, GroupDetail, PartialOrder, PsiParams, RateError, RatingGroup, RatingReport};
use crate::sas::{read_scored, score_with_session, write_scored, SasKind, ScoreError, ScoredRecord};
use crate::stats::{CiWeight, PairTest};

pub const CORPUS_MANIFEST: &str = "corpus_manifest.json";
pub const SCORED_MANIFEST: &str = "scored_manifest.json";
const CORPUS_FORMAT: &str = "sasrate-corpus/1";
const SCORED_FORMAT: &str = "sasrate-scored/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
    #[error("checksum mismatch for {path}: manifest has {expected}, file has {actual}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("every SAS failed to score")]
    AllFailed,
    #[error("rating {group}: {source}")]
    Rate {
        group: RatingGroup,
        #[source]
        source: RateError,
    },
}

impl PipelineError {
    /// 1 for bad input the user can fix, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Manifest { .. } | PipelineError::Checksum { .. } => 1,
            _ => 2,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io(path))
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `target` expressed relative to `base`, with `/` separators.
fn relative_path(target: &Path, base: &Path) -> Result<String, PipelineError> {
    let t = fs::canonicalize(target).map_err(io(target))?;
    let b = fs::canonicalize(base).map_err(io(base))?;
    let tc: Vec<Component> = t.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut parts: Vec<String> = vec!["..".to_string(); bc.len() - common];
    parts.extend(tc[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    Ok(parts.join("/"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub group: Group,
    pub emotion_set: EmotionSetId,
    pub path: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub corpora: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub group: Group,
    pub emotion_set: EmotionSetId,
    pub path: String,
    pub records: usize,
    pub sha256: String,
    pub corpus_path: String,
    pub corpus_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SasStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSas {
    pub name: String,
    pub base: String,
    pub kind: SasKind,
    pub discretized: bool,
    pub mode: ModeChoice,
    pub status: SasStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<ScoredEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredManifest {
    pub format: String,
    pub sas: Vec<ScoredSas>,
}

impl ScoredManifest {
    pub fn failed(&self) -> impl Iterator<Item = &ScoredSas> {
        self.sas.iter().filter(|s| s.status == SasStatus::Failed)
    }
}

/// Writes one JSONL file per planned corpus plus the corpus manifest.
pub fn cmd_generate(config: &RunConfig, out_dir: &Path) -> Result<CorpusManifest, PipelineError> {
    config.validate()?;
    let vocab = config.vocabulary();
    let corpus_dir = out_dir.join("corpus");
    create_dir(&corpus_dir)?;
    let mut corpora = Vec::new();
    for plan in config.corpus_plans()? {
        let records = plan.generate(&vocab)?;
        let rel = format!("corpus/{}.jsonl", plan.file_stem());
        let path = out_dir.join(&rel);
        write_records(&records, &path)?;
        info!("wrote {} ({} records)", path.display(), records.len());
        corpora.push(CorpusEntry {
            group: plan.group,
            emotion_set: plan.set,
            path: rel,
            records: records.len(),
            sha256: sha256_file(&path)?,
        });
    }
    let manifest = CorpusManifest {
        format: CORPUS_FORMAT.to_string(),
        corpora,
    };
    write_json(&out_dir.join(CORPUS_MANIFEST), &manifest)?;
    Ok(manifest)
}

fn check_format(path: &Path, found: &str, expected: &str) -> Result<(), PipelineError> {
    if found == expected {
        Ok(())
    } else {
        Err(PipelineError::Manifest {
            path: path.display().to_string(),
            message: format!("format `{found}`, expected `{expected}`"),
        })
    }
}

fn verify(path: &Path, expected: &str) -> Result<(), PipelineError> {
    let actual = sha256_file(path)?;
    if actual != expected {
        return Err(PipelineError::Checksum {
            path: path.display().to_string(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

struct LoadedCorpus {
    entry: CorpusEntry,
    path: PathBuf,
    records: Vec<SentenceRecord>,
}

fn score_variant(
    variant: &SasVariant,
    config: &RunConfig,
    corpora: &[LoadedCorpus],
) -> Result<Vec<Vec<ScoredRecord>>, ScoreError> {
    let opts = config.scoring_options();
    let sas = &variant.descriptor;
    let mut session = match (&sas.kind, &sas.endpoint) {
        (SasKind::External, Some(ep)) => Some(BridgeSession::connect(ep, &opts.bridge)?),
        (SasKind::External, None) => return Err(ScoreError::MissingEndpoint(sas.name.clone())),
        _ => None,
    };
    corpora
        .iter()
        .map(|c| score_with_session(sas, &opts, &c.records, session.as_mut()))
        .collect()
}

/// Scores every corpus with every SAS variant, one thread per variant.
pub fn cmd_score(config: &RunConfig, corpus_manifest: &Path, out_dir: &Path) -> Result<ScoredManifest, PipelineError> {
    config.validate()?;
    let manifest: CorpusManifest = read_json(corpus_manifest)?;
    check_format(corpus_manifest, &manifest.format, CORPUS_FORMAT)?;
    let base = base_dir(corpus_manifest);
    let mut corpora = Vec::new();
    for entry in manifest.corpora {
        let path = base.join(&entry.path);
        verify(&path, &entry.sha256)?;
        let records = read_records(&path)?;
        corpora.push(LoadedCorpus { entry, path, records });
    }
    create_dir(out_dir)?;

    let variants = config.variants();
    let results: Vec<Result<Vec<Vec<ScoredRecord>>, ScoreError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| scope.spawn(|| score_variant(v, config, &corpora)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    });

    let mut entries = Vec::new();
    for (variant, result) in variants.iter().zip(results) {
        let mut sas = ScoredSas {
            name: variant.name().to_string(),
            base: variant.base.clone(),
            kind: variant.descriptor.kind,
            discretized: variant.discretized,
            mode: variant.mode,
            status: SasStatus::Ok,
            error: None,
            files: Vec::new(),
        };
        match result {
            Err(e) => {
                warn!("SAS {} failed: {e}", variant.name());
                sas.status = SasStatus::Failed;
                sas.error = Some(e.to_string());
            }
            Ok(scored) => {
                let dir = out_dir.join("scored").join(variant.name());
                create_dir(&dir)?;
                for (corpus, records) in corpora.iter().zip(scored) {
                    let rel = format!("scored/{}/{}_{}.jsonl", variant.name(), corpus.entry.group, corpus.entry.emotion_set);
                    let path = out_dir.join(&rel);
                    write_scored(&path, variant.name(), variant.discretized, &records)?;
                    sas.files.push(ScoredEntry {
                        group: corpus.entry.group,
                        emotion_set: corpus.entry.emotion_set,
                        path: rel,
                        records: records.len(),
                        sha256: sha256_file(&path)?,
                        corpus_path: relative_path(&corpus.path, out_dir)?,
                        corpus_sha256: corpus.entry.sha256.clone(),
                    });
                }
            }
        }
        entries.push(sas);
    }
    let manifest = ScoredManifest {
        format: SCORED_FORMAT.to_string(),
        sas: entries,
    };
    write_json(&out_dir.join(SCORED_MANIFEST), &manifest)?;
    if manifest.sas.iter().all(|s| s.status == SasStatus::Failed) {
        return Err(PipelineError::AllFailed);
    }
    Ok(manifest)
}

/// A set of SAS variants rated together and the directory their report goes to.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportView {
    pub dir: String,
    pub sas: Vec<String>,
}

/// One report normally; a SAS requested in both modes splits the run into
/// a discretized and a continuous report.
pub fn report_views(manifest: &ScoredManifest) -> Vec<ReportView> {
    let rated: Vec<&ScoredSas> = manifest.sas.iter().filter(|s| s.status == SasStatus::Ok).collect();
    if !rated.iter().any(|s| s.mode == ModeChoice::Both) {
        return vec![ReportView {
            dir: "report".to_string(),
            sas: rated.iter().map(|s| s.name.clone()).collect(),
        }];
    }
    let pick = |discretized: bool| {
        rated
            .iter()
            .filter(|s| s.mode != ModeChoice::Both || s.discretized == discretized)
            .map(|s| s.name.clone())
            .collect()
    };
    vec![
        ReportView {
            dir: "report/discretized".to_string(),
            sas: pick(true),
        },
        ReportView {
            dir: "report/continuous".to_string(),
            sas: pick(false),
        },
    ]
}

type ScoredData = BTreeMap<String, BTreeMap<Group, Vec<(EmotionSetId, Vec<ScoredRecord>)>>>;

fn load_scored(manifest: &ScoredManifest, base: &Path) -> Result<ScoredData, PipelineError> {
    let mut data: ScoredData = BTreeMap::new();
    for sas in manifest.sas.iter().filter(|s| s.status == SasStatus::Ok) {
        for f in &sas.files {
            verify(&base.join(&f.corpus_path), &f.corpus_sha256)?;
            let path = base.join(&f.path);
            verify(&path, &f.sha256)?;
            let file = read_scored(&path)?;
            if file.sas != sas.name || file.discretized != sas.discretized {
                return Err(PipelineError::Manifest {
                    path: path.display().to_string(),
                    message: format!("file content belongs to `{}`, manifest says `{}`", file.sas, sas.name),
                });
            }
            data.entry(sas.name.clone())
                .or_default()
                .entry(f.group)
                .or_default()
                .push((f.emotion_set, file.records));
        }
    }
    for groups in data.values_mut() {
        for sets in groups.values_mut() {
            sets.sort_by_key(|(s, _)| *s);
        }
    }
    Ok(data)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn t_table_csv(rows: &[(String, Vec<EmotionSetId>, Vec<PairTest>)], ci_weights: &[CiWeight]) -> String {
    let mut out = String::from("sas,emotion_set,attribute,pair,t,dof");
    for cw in ci_weights {
        out.push_str(&format!(",reject_{}", cw.ci));
    }
    out.push('\n');
    for (sas, sets, tests) in rows {
        for t in tests {
            let attr = serde_json::to_value(t.attribute).expect("attribute serializes");
            out.push_str(&format!(
                "{sas},{},{},{},{},{}",
                sets[t.dataset],
                attr.as_str().unwrap_or_default(),
                t.pair_label(),
                t.result.display_t(),
                fmt6(t.result.dof)
            ));
            for cw in ci_weights {
                out.push_str(if t.result.rejected(cw.ci) { ",1" } else { ",0" });
            }
            out.push('\n');
        }
    }
    out
}

fn die_cell(v: DieValue) -> String {
    match v {
        DieValue::Defined(x) => fmt6(x),
        DieValue::Undefined => "X".to_string(),
    }
}

fn die_table_csv(rows: &[(String, Vec<EmotionSetId>, Vec<DieRow>)]) -> String {
    let mut out = String::from("sas,emotion_set,obs_neg,obs_pos,int_neg,int_pos,die_neg,die_pos,die_max\n");
    for (sas, sets, die_rows) in rows {
        for r in die_rows {
            let per: Vec<String> = r.die.per_x.iter().map(|(_, v)| die_cell(*v)).collect();
            out.push_str(&format!(
                "{sas},{},{},{},{},{},{},{}\n",
                sets[r.dataset],
                fmt6(r.observational[0]),
                fmt6(r.observational[1]),
                fmt6(r.interventional[0]),
                fmt6(r.interventional[1]),
                per.join(","),
                die_cell(r.die.max)
            ));
        }
    }
    out
}

fn ratings_markdown(report: &RatingReport) -> String {
    let mut out = format!("# Ratings (L = {})\n\n", report.levels);
    if report.sas.len() == 1 {
        out.push_str("Single system: absolute rating, 1 = unbiased, L = biased.\n\n");
    }
    out.push_str(&report.to_markdown());
    if !report.prominence.is_empty() {
        out.push_str("\n## Prominence\n\n");
        out.push_str(&report.prominence_markdown());
    }
    if !report.warnings.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for w in &report.warnings {
            out.push_str(&format!("- {w}\n"));
        }
    }
    out
}

fn psi_csv(orders: &[PartialOrder]) -> String {
    let mut out = String::from("group,sas,psi\n");
    for po in orders {
        for (name, psi) in &po.entries {
            let v = psi.value.map_or_else(|| "X".to_string(), fmt6);
            out.push_str(&format!("{},{name},{v}\n", po.group));
        }
    }
    out
}

/// Rates one view and writes its report directory.
fn rate_view(
    view: &ReportView,
    data: &ScoredData,
    config: &RunConfig,
    levels: u32,
    out_dir: &Path,
) -> Result<RatingReport, PipelineError> {
    let params = PsiParams {
        ci_weights: config.ci_weights.clone(),
        epsilon: config.epsilon,
    };
    let dir = out_dir.join(&view.dir);
    create_dir(&dir)?;
    let mut orders = Vec::new();
    let mut extra_warnings = Vec::new();
    for group in RatingGroup::ALL {
        let mut scores = Vec::new();
        let mut t_rows = Vec::new();
        let mut die_rows = Vec::new();
        for name in &view.sas {
            let Some(sets) = data.get(name).and_then(|g| g.get(&group.corpus_group())) else {
                continue;
            };
            let ids: Vec<EmotionSetId> = sets.iter().map(|(s, _)| *s).collect();
            let datasets: Vec<Vec<ScoredRecord>> = sets.iter().map(|(_, r)| r.clone()).collect();
            let (psi, detail) =
                group_psi(group, &datasets, &params).map_err(|source| PipelineError::Rate { group, source })?;
            scores.push((name.clone(), psi));
            match detail {
                GroupDetail::Wrs(w) => t_rows.push((name.clone(), ids, w.tests)),
                GroupDetail::Die(d) => die_rows.push((name.clone(), ids, d.rows)),
            }
        }
        if scores.is_empty() {
            continue;
        }
        if scores.len() < view.sas.len() {
            extra_warnings.push(format!("group {group}: only {} of {} systems have data", scores.len(), view.sas.len()));
        }
        if group.confounder().is_some() {
            write_text(&dir.join(format!("die_table_{group}.csv")), &die_table_csv(&die_rows))?;
        } else {
            write_text(&dir.join(format!("t_table_{group}.csv")), &t_table_csv(&t_rows, &config.ci_weights))?;
        }
        orders.push(PartialOrder::from_scores(group, scores));
    }
    let mut report = RatingReport::build(view.sas.clone(), orders, levels).map_err(|source| PipelineError::Rate {
        group: RatingGroup::G1,
        source,
    })?;
    report.warnings.extend(extra_warnings);
    for w in &report.warnings {
        warn!("{}: {w}", view.dir);
    }
    write_text(&dir.join("psi.csv"), &psi_csv(&report.orders))?;
    write_text(&dir.join("orders.md"), &report.orders_markdown())?;
    write_text(&dir.join("ratings.md"), &ratings_markdown(&report))?;
    write_text(&dir.join("ratings.csv"), &report.to_csv())?;
    write_text(&dir.join("prominence.md"), &report.prominence_markdown())?;
    Ok(report)
}

/// Verifies checksums, computes ψ per group and writes the rating reports.
pub fn cmd_rate(
    config: &RunConfig,
    scored_manifest: &Path,
    levels: Option<u32>,
    out_dir: &Path,
) -> Result<Vec<(ReportView, RatingReport)>, PipelineError> {
    config.validate()?;
    let levels = levels.unwrap_or(config.levels);
    if levels < 2 {
        return Err(ConfigError::Invalid {
            field: "levels".into(),
            message: "must be at least 2".into(),
        }
        .into());
    }
    let manifest: ScoredManifest = read_json(scored_manifest)?;
    check_format(scored_manifest, &manifest.format, SCORED_FORMAT)?;
    for f in manifest.failed() {
        warn!("SAS {} failed during scoring and is not rated", f.name);
    }
    let data = load_scored(&manifest, &base_dir(scored_manifest))?;
    let mut out = Vec::new();
    for view in report_views(&manifest) {
        if view.sas.is_empty() {
            continue;
        }
        let report = rate_view(&view, &data, config, levels, out_dir)?;
        out.push((view, report));
    }
    if out.is_empty() {
        return Err(PipelineError::AllFailed);
    }
    Ok(out)
}
