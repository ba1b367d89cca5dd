//! Generation pipeline: FR subset -> batches -> per-model prompting, querying
//! and parsing -> one `LLM-<model_id>.json` artifact per model.
//!
//! Runs are resumable. `run.json` holds the manifest; artifacts are rewritten
//! atomically after every finished batch, so an interrupted run loses at most
//! the batches that were in flight.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::FrSubset;
use crate::error::{Error, Result};
use crate::llm_gateway::{Gateway, GatewayError, ModelConfig};
use crate::prompting::{self, FrRef, GeneratedNfr, PromptTemplate, ResponseContext};
use crate::util;

pub const RUN_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "run.json";

pub fn artifact_file_name(model_id: &str) -> String {
    format!("LLM-{model_id}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStatus {
    Pending,
    Partial,
    Complete,
    Failed,
}

impl ModelStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelStatus::Pending => "pending",
            ModelStatus::Partial => "partial",
            ModelStatus::Complete => "complete",
            ModelStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub run_id: String,
    pub subset: FrSubset,
    /// Model configs as run; credentials are never part of a config.
    pub models: Vec<ModelConfig>,
    pub prompt_fingerprint: String,
    pub template: PromptTemplate,
    pub batch_size: usize,
    pub statuses: BTreeMap<String, ModelStatus>,
    pub counts: BTreeMap<String, usize>,
}

impl GenerationRun {
    pub fn total_nfrs(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    fn check_consistency(&self) -> Result<()> {
        self.subset.validate()?;
        let known: HashSet<&str> = self.models.iter().map(|m| m.model_id.as_str()).collect();
        if known.len() != self.models.len() {
            return Err(Error::Integrity("manifest lists a model twice".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        for id in self.statuses.keys().chain(self.counts.keys()) {
            if !known.contains(id.as_str()) {
                return Err(Error::Integrity(format!("manifest references unknown model_id {id:?}")));
            }
        }
        if self.statuses.len() != self.models.len() {
            return Err(Error::Integrity("manifest statuses do not cover every model".into()));
        }
        if self.template.fingerprint() != self.prompt_fingerprint {
            return Err(Error::Integrity(
                "prompt fingerprint does not match the stored template".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Integrity("batch_size is zero".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format_version: u32,
    #[serde(flatten)]
    run: GenerationRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRejection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr_id: Option<String>,
    pub reason: String,
    pub raw_span: String,
}

/// Metadata and verbatim text of one successful model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub fr_ids: Vec<String>,
    pub request_fingerprint: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub timestamp_ms: u64,
    pub text: String,
}

/// A batch whose request did not produce a completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub fr_ids: Vec<String>,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    pub model_id: String,
    pub prompt_fingerprint: String,
    pub entries: Vec<GeneratedNfr>,
    pub rejections: Vec<ArtifactRejection>,
    pub completions: Vec<CompletionRecord>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format_version: u32,
    #[serde(flatten)]
    artifact: RunArtifact,
}

impl RunArtifact {
    fn empty(run: &GenerationRun, model_id: &str) -> Self {
        RunArtifact {
            run_id: run.run_id.clone(),
            model_id: model_id.to_string(),
            prompt_fingerprint: run.prompt_fingerprint.clone(),
            entries: Vec::new(),
            rejections: Vec::new(),
            completions: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// FR ids with a recorded completion.
    pub fn completed_frs(&self) -> HashSet<&str> {
        self.completions
            .iter()
            .flat_map(|c| c.fr_ids.iter().map(String::as_str))
            .collect()
    }

    pub fn status(&self, subset: &FrSubset) -> ModelStatus {
        let done = self.completed_frs();
        let covered = subset.ids().filter(|id| done.contains(id)).count();
        if covered == subset.len() {
            ModelStatus::Complete
        } else if covered > 0 {
            ModelStatus::Partial
        } else if !self.failures.is_empty() {
            ModelStatus::Failed
        } else {
            ModelStatus::Pending
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ArtifactFile {
            format_version: RUN_FORMAT_VERSION,
            artifact: self.clone(),
        })
        .expect("artifact serializes")
    }

    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        check_version(&text, path)?;
        let file: ArtifactFile = serde_json::from_str(&text)?;
        Ok(file.artifact)
    }

    fn check_against(&self, run: &GenerationRun) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Integrity(format!(
                "{}: {msg}",
                artifact_file_name(&self.model_id)
            )))
        };
        if self.run_id != run.run_id {
            return fail(format!(
                "belongs to run {:?}, manifest is {:?}",
                self.run_id, run.run_id
            ));
        }
        if self.prompt_fingerprint != run.prompt_fingerprint {
            return fail("prompt fingerprint differs from the manifest".into());
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if run.subset.get(&e.fr_id).is_none() {
                return fail(format!(
                    "entry {} references FR {:?} outside the subset",
                    e.nfr_id, e.fr_id
                ));
            }
            if e.model_id != self.model_id {
                return fail(format!("entry {} carries model_id {:?}", e.nfr_id, e.model_id));
            }
            if !ids.insert(e.nfr_id.as_str()) {
                return fail(format!("nfr_id {} appears twice", e.nfr_id));
            }
        }
        Ok(())
    }
}

fn check_version(text: &str, path: &Path) -> Result<()> {
    #[derive(Deserialize)]
    struct Probe {
        format_version: Option<u32>,
    }
    let probe: Probe = serde_json::from_str(text)?;
    match probe.format_version {
        Some(RUN_FORMAT_VERSION) => Ok(()),
        found => Err(Error::FormatVersion {
            path: path.to_path_buf(),
            found: found.unwrap_or(0),
            expected: RUN_FORMAT_VERSION,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    /// FRs per request.
    pub batch_size: usize,
    /// Models processed at once.
    pub model_concurrency: usize,
    /// In-flight batches per model.
    pub fr_concurrency: usize,
    /// Issue one more request when a response has no structured block.
    pub reprompt_on_parse_failure: bool,
    /// Replace an existing run in the output directory.
    pub force: bool,
    /// Checked before every request; once set no new request is started.
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            batch_size: 1,
            model_concurrency: 8,
            fr_concurrency: 4,
            reprompt_on_parse_failure: false,
            force: false,
            interrupt: None,
        }
    }
}

impl GenerationOptions {
    fn interrupted(&self) -> bool {
        self.interrupt.as_ref().is_some_and(|f| f.load(Ordering::SeqCst))
    }
}

fn run_id_for(subset: &FrSubset, models: &[ModelConfig], fingerprint: &str, batch_size: usize) -> String {
    let ids: Vec<&str> = subset.ids().collect();
    let models_json = serde_json::to_vec(models).expect("models serialize");
    let digest = util::sha256_hex(&[
        ids.join("\n").as_bytes(),
        &models_json,
        fingerprint.as_bytes(),
        &(batch_size as u64).to_le_bytes(),
    ]);
    format!("run-{}", &digest[..12])
}

fn write_manifest(out_dir: &Path, run: &GenerationRun) -> Result<()> {
    let text = serde_json::to_string_pretty(&ManifestFile {
        format_version: RUN_FORMAT_VERSION,
        run: run.clone(),
    })?;
    util::write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())
}

fn read_manifest(out_dir: &Path) -> Result<GenerationRun> {
    let path = out_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    check_version(&text, &path)?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    file.run.check_consistency()?;
    Ok(file.run)
}

/// Runs the pipeline for every model over every FR of `subset`.
///
/// The output directory is created and the manifest written before any
/// request, so an unwritable directory fails without network traffic. A model
/// whose requests all fail is marked failed; the others continue.
pub fn run_generation(
    subset: &FrSubset,
    models: &[ModelConfig],
    template: &PromptTemplate,
    out_dir: &Path,
    gateway: &Gateway,
    options: &GenerationOptions,
) -> Result<GenerationRun> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("a run needs at least one model".into()));
    }
    if subset.is_empty() {
        return Err(Error::InvalidArgument("a run needs at least one FR".into()));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    subset.validate()?;
    let mut seen = HashSet::new();
    for m in models {
        m.validate()?;
        if !seen.insert(m.model_id.as_str()) {
            return Err(Error::Validation(format!("model {} listed twice", m.model_id)));
        }
    }
    gateway.check_routes(models)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = out_dir.join(MANIFEST_FILE);
    if manifest.exists() {
        if !options.force {
            return Err(Error::Conflict(format!(
                "{} already holds a run; resume it or use --force",
                out_dir.display()
            )));
        }
        remove_artifacts(out_dir)?;
    }

    let fingerprint = template.fingerprint();
    let run = GenerationRun {
        run_id: run_id_for(subset, models, &fingerprint, options.batch_size),
        subset: subset.clone(),
        models: models.to_vec(),
        prompt_fingerprint: fingerprint,
        template: template.clone(),
        batch_size: options.batch_size,
        statuses: models
            .iter()
            .map(|m| (m.model_id.clone(), ModelStatus::Pending))
            .collect(),
        counts: BTreeMap::new(),
    };
    write_manifest(out_dir, &run)?;
    let artifacts = models.iter().map(|m| RunArtifact::empty(&run, &m.model_id)).collect();
    execute(run, artifacts, out_dir, gateway, options)
}

fn remove_artifacts(out_dir: &Path) -> Result<()> {
    let entries = std::fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(out_dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("LLM-") && name.ends_with(".json") {
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Re-queries only the (model, FR) pairs without a recorded completion.
///
/// Artifacts of complete models are not rewritten.
pub fn resume_run(out_dir: &Path, gateway: &Gateway, options: &GenerationOptions) -> Result<GenerationRun> {
    let loaded = load_run(out_dir)?;
    gateway.check_routes(&loaded.run.models)?;
    let artifacts = loaded
        .run
        .models
        .iter()
        .map(|m| {
            loaded
                .artifacts
                .iter()
                .find(|a| a.model_id == m.model_id)
                .cloned()
                .unwrap_or_else(|| RunArtifact::empty(&loaded.run, &m.model_id))
        })
        .collect();
    execute(loaded.run, artifacts, out_dir, gateway, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub run: GenerationRun,
    /// In manifest model order; models without a file are absent here.
    pub artifacts: Vec<RunArtifact>,
    /// Models whose artifact file is missing.
    pub missing: Vec<String>,
}

impl LoadedRun {
    pub fn artifact(&self, model_id: &str) -> Option<&RunArtifact> {
        self.artifacts.iter().find(|a| a.model_id == model_id)
    }

    /// All generated NFRs keyed by nfr_id.
    pub fn nfr_index(&self) -> HashMap<&str, &GeneratedNfr> {
        self.artifacts
            .iter()
            .flat_map(|a| a.entries.iter())
            .map(|e| (e.nfr_id.as_str(), e))
            .collect()
    }

    /// FR ids per model still lacking a completion.
    pub fn gaps(&self) -> BTreeMap<String, Vec<String>> {
        self.run
            .models
            .iter()
            .filter_map(|m| {
                let done = self
                    .artifact(&m.model_id)
                    .map(|a| a.completed_frs())
                    .unwrap_or_default();
                let open: Vec<String> = self
                    .run
                    .subset
                    .ids()
                    .filter(|id| !done.contains(id))
                    .map(str::to_string)
                    .collect();
                (!open.is_empty()).then(|| (m.model_id.clone(), open))
            })
            .collect()
    }
}

/// Reads a run back. Statuses and counts are recomputed from the artifacts,
/// which are the source of truth after a crash.
pub fn load_run(out_dir: &Path) -> Result<LoadedRun> {
    let mut run = read_manifest(out_dir)?;
    let mut artifacts = Vec::new();
    let mut missing = Vec::new();
    let known: HashSet<&str> = run.models.iter().map(|m| m.model_id.as_str()).collect();
    if let Ok(entries) = std::fs::read_dir(out_dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_prefix("LLM-").and_then(|n| n.strip_suffix(".json")) {
                if !known.contains(id) {
                    return Err(Error::Integrity(format!(
                        "artifact {name} is for a model not in the manifest"
                    )));
                }
            }
        }
    }
    for m in &run.models {
        let path = out_dir.join(artifact_file_name(&m.model_id));
        if !path.exists() {
            missing.push(m.model_id.clone());
            run.statuses.insert(m.model_id.clone(), ModelStatus::Pending);
            run.counts.remove(&m.model_id);
            continue;
        }
        let artifact = RunArtifact::load(&path)?;
        if artifact.model_id != m.model_id {
            return Err(Error::Integrity(format!(
                "{} holds model {:?}",
                path.display(),
                artifact.model_id
            )));
        }
        artifact.check_against(&run)?;
        run.statuses.insert(m.model_id.clone(), artifact.status(&run.subset));
        run.counts.insert(m.model_id.clone(), artifact.entries.len());
        artifacts.push(artifact);
    }
    Ok(LoadedRun {
        run,
        artifacts,
        missing,
    })
}

struct BatchResult {
    entries: Vec<GeneratedNfr>,
    rejections: Vec<ArtifactRejection>,
    completion: Option<CompletionRecord>,
    failure: Option<FailureRecord>,
    /// Stop issuing requests for this model (bad credentials and similar).
    fatal: bool,
}

fn run_batch(
    run: &GenerationRun,
    model: &ModelConfig,
    fr_ids: &[String],
    gateway: &Gateway,
    options: &GenerationOptions,
) -> BatchResult {
    let frs: Vec<FrRef> = fr_ids
        .iter()
        .map(|id| FrRef {
            id: id.clone(),
            text: run.subset.get(id).map(|r| r.text.clone()).unwrap_or_default(),
        })
        .collect();
    let failed = |err: &Error, fatal| BatchResult {
        entries: Vec::new(),
        rejections: Vec::new(),
        completion: None,
        failure: Some(FailureRecord {
            fr_ids: fr_ids.to_vec(),
            code: err.code().to_string(),
            message: err.to_string(),
        }),
        fatal,
    };
    let prompt = match prompting::build_prompt(&run.template.spec_for(frs)) {
        Ok(p) => p,
        Err(e) => return failed(&e, true),
    };
    let ctx = ResponseContext {
        model_id: model.model_id.clone(),
        fr_ids: fr_ids.to_vec(),
    };
    let attempts = if options.reprompt_on_parse_failure { 2 } else { 1 };
    let mut last = None;
    for _ in 0..attempts {
        let completion = match gateway.query_model_for(model, &prompt, fr_ids) {
            Ok(c) => c,
            Err(e) => {
                let fatal = matches!(
                    e,
                    GatewayError::Credential { .. } | GatewayError::UnroutableProvider { .. }
                );
                return failed(&Error::Gateway(e), fatal);
            }
        };
        let parsed = prompting::parse_llm_response(&completion.text, &ctx);
        let retry = parsed.is_err();
        last = Some((completion, parsed));
        if !retry || options.interrupted() {
            break;
        }
    }
    let (completion, parsed) = last.expect("at least one attempt");
    let record = CompletionRecord {
        fr_ids: fr_ids.to_vec(),
        request_fingerprint: completion.request_fingerprint,
        latency_ms: completion.latency_ms,
        attempt_count: completion.attempt_count,
        timestamp_ms: completion.timestamp_ms,
        text: completion.text,
    };
    match parsed {
        Ok(parsed) => BatchResult {
            entries: parsed.nfrs,
            rejections: parsed
                .rejections
                .into_iter()
                .map(|r| ArtifactRejection {
                    fr_id: r.fr_id,
                    reason: r.reason,
                    raw_span: r.raw_span,
                })
                .collect(),
            completion: Some(record),
            failure: None,
            fatal: false,
        },
        Err(failure) => BatchResult {
            entries: Vec::new(),
            rejections: fr_ids
                .iter()
                .map(|id| ArtifactRejection {
                    fr_id: Some(id.clone()),
                    reason: failure.reason.clone(),
                    raw_span: failure.raw.clone(),
                })
                .collect(),
            completion: Some(record),
            failure: None,
            fatal: false,
        },
    }
}

/// Orders an artifact by subset FR order so output does not depend on thread
/// scheduling.
fn normalize(artifact: &mut RunArtifact, order: &HashMap<&str, usize>) {
    let pos = |id: &str| order.get(id).copied().unwrap_or(usize::MAX);
    artifact.entries.sort_by_key(|e| pos(&e.fr_id));
    artifact
        .rejections
        .sort_by_key(|r| r.fr_id.as_deref().map(pos).unwrap_or(usize::MAX));
    artifact
        .completions
        .sort_by_key(|c| c.fr_ids.first().map(|id| pos(id)).unwrap_or(usize::MAX));
}

fn process_model(
    run: &GenerationRun,
    model: &ModelConfig,
    mut artifact: RunArtifact,
    out_dir: &Path,
    gateway: &Gateway,
    options: &GenerationOptions,
) -> Result<RunArtifact> {
    let done: HashSet<String> = artifact.completed_frs().into_iter().map(str::to_string).collect();
    let open: Vec<String> = run
        .subset
        .ids()
        .filter(|id| !done.contains(*id))
        .map(str::to_string)
        .collect();
    if open.is_empty() {
        return Ok(artifact);
    }
    let order: HashMap<&str, usize> = run.subset.ids().enumerate().map(|(i, id)| (id, i)).collect();
    let path = out_dir.join(artifact_file_name(&model.model_id));
    let queue: Mutex<VecDeque<Vec<String>>> = Mutex::new(open.chunks(run.batch_size).map(<[String]>::to_vec).collect());
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<BatchResult>();

    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..options.fr_concurrency.max(1) {
            let tx = tx.clone();
            let (queue, stop) = (&queue, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) || options.interrupted() {
                    break;
                }
                let Some(batch) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let result = run_batch(run, model, &batch, gateway, options);
                if result.fatal {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer for this model's file.
        for result in rx {
            artifact.entries.extend(result.entries);
            artifact.rejections.extend(result.rejections);
            artifact.completions.extend(result.completion);
            artifact.failures.extend(result.failure);
            normalize(&mut artifact, &order);
            if write_error.is_none() {
                if let Err(e) = util::write_atomic(&path, artifact.to_json().as_bytes()) {
                    write_error = Some(e);
                    stop.store(true, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    if stop.load(Ordering::SeqCst) && !options.interrupted() {
        // Record the batches skipped after a fatal error.
        let skipped: Vec<Vec<String>> = queue.into_inner().unwrap().into_iter().collect();
        if !skipped.is_empty() {
            let reason = artifact.failures.last().map(|f| f.message.clone()).unwrap_or_default();
            for fr_ids in skipped {
                artifact.failures.push(FailureRecord {
                    fr_ids,
                    code: "skipped".into(),
                    message: format!("not attempted after fatal error: {reason}"),
                });
            }
            util::write_atomic(&path, artifact.to_json().as_bytes())?;
        }
    }
    Ok(artifact)
}

fn execute(
    mut run: GenerationRun,
    artifacts: Vec<RunArtifact>,
    out_dir: &Path,
    gateway: &Gateway,
    options: &GenerationOptions,
) -> Result<GenerationRun> {
    let work: Mutex<VecDeque<(ModelConfig, RunArtifact)>> =
        Mutex::new(run.models.iter().cloned().zip(artifacts).collect());
    let finished: Mutex<Vec<Result<RunArtifact>>> = Mutex::new(Vec::new());
    let shared = &run;
    std::thread::scope(|scope| {
        for _ in 0..options.model_concurrency.clamp(1, shared.models.len()) {
            let (work, finished) = (&work, &finished);
            scope.spawn(move || loop {
                let Some((model, artifact)) = work.lock().unwrap().pop_front() else {
                    break;
                };
                let outcome = process_model(shared, &model, artifact, out_dir, gateway, options);
                if let Err(e) = &outcome {
                    log::error!("{}: {e}", model.model_id);
                }
                finished.lock().unwrap().push(outcome);
            });
        }
    });

    let mut first_error = None;
    for outcome in finished.into_inner().unwrap() {
        match outcome {
            Ok(artifact) => {
                let status = artifact.status(&run.subset);
                log::info!("{}: {:?}, {} NFRs", artifact.model_id, status, artifact.entries.len());
                run.statuses.insert(artifact.model_id.clone(), status);
                run.counts.insert(artifact.model_id.clone(), artifact.entries.len());
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    write_manifest(out_dir, &run)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

/// Paths of every artifact a run is expected to have.
pub fn artifact_paths(out_dir: &Path, run: &GenerationRun) -> Vec<PathBuf> {
    run.models
        .iter()
        .map(|m| out_dir.join(artifact_file_name(&m.model_id)))
        .collect()
}
