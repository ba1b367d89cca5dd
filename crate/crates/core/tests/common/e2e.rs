#![allow(dead_code)]

//! Mock end-to-end generation with a forced interrupt and resume, shared by
//! the generation tests and the acceptance target.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nfrgen::analysis::reference::reference_dataset;
use nfrgen::corpus::FrSubset;
use nfrgen::generation::{artifact_paths, load_run, resume_run, run_generation, GenerationOptions, ModelStatus};
use nfrgen::llm_gateway::{
    BackoffPolicy, ChatRequest, Gateway, GatewayConfig, MockTransport, ProviderOptions, Transport, TransportFailure,
    VirtualClock,
};
use nfrgen::prompting::{GeneratedNfr, PromptTemplate};

pub const NFRS_PER_FR: usize = 5;

/// Passes requests to a mock, logs (model, FRs), and raises the interrupt
/// flag once `stop_after` calls have gone out.
pub struct InterruptingTransport {
    inner: MockTransport,
    pub log: Mutex<Vec<(String, Vec<String>)>>,
    calls: AtomicUsize,
    stop_after: usize,
    flag: Arc<AtomicBool>,
}

impl InterruptingTransport {
    pub fn new(stop_after: usize, flag: Arc<AtomicBool>) -> Self {
        InterruptingTransport {
            inner: MockTransport::valid(NFRS_PER_FR),
            log: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
            stop_after,
            flag,
        }
    }
}

impl Transport for InterruptingTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        self.log
            .lock()
            .unwrap()
            .push((request.model_id.clone(), request.fr_ids.clone()));
        if self.calls.fetch_add(1, Ordering::SeqCst) + 1 >= self.stop_after {
            self.flag.store(true, Ordering::SeqCst);
        }
        self.inner.send(request)
    }
}

pub fn gateway(config: &GatewayConfig, transport: Arc<InterruptingTransport>) -> Gateway {
    let gw = Gateway::new(Arc::new(VirtualClock::new()), BackoffPolicy::default());
    for p in config.model_provider_ids() {
        gw.register_provider(&p, transport.clone(), ProviderOptions::default())
            .unwrap();
    }
    gw
}

#[derive(Debug)]
pub struct E2eReport {
    pub elapsed: Duration,
    pub artifacts: usize,
    pub complete_models: usize,
    pub entries: usize,
    pub schema_valid: usize,
    /// (model, FR) pairs requested more than once across both phases.
    pub duplicates: usize,
    /// Models complete after the interrupted phase.
    pub complete_before_resume: usize,
    /// Complete artifacts whose bytes changed during resume.
    pub rewritten_complete: usize,
    pub pending_after_interrupt: usize,
}

pub fn entry_schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/nfr-entries.schema.json");
    let text = std::fs::read_to_string(path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

pub fn schema_valid_count(validator: &jsonschema::Validator, entries: &[GeneratedNfr]) -> usize {
    entries
        .iter()
        .filter(|e| {
            let v = serde_json::to_value([e.to_schema_entry()]).unwrap();
            validator.is_valid(&v)
        })
        .count()
}

/// 34 reference FRs, the eight reference models, interrupted after
/// `stop_after` requests and then resumed.
pub fn interrupted_run(dir: &Path, stop_after: usize) -> Result<E2eReport, String> {
    let start = Instant::now();
    let config = GatewayConfig::reference();
    let subset = FrSubset::from_records(reference_dataset().frs).map_err(|e| e.to_string())?;
    let flag = Arc::new(AtomicBool::new(false));
    let transport = Arc::new(InterruptingTransport::new(stop_after, flag.clone()));
    let gw = gateway(&config, transport.clone());
    let options = GenerationOptions {
        interrupt: Some(flag.clone()),
        ..GenerationOptions::default()
    };
    let first = run_generation(&subset, &config.models, &PromptTemplate::default(), dir, &gw, &options)
        .map_err(|e| e.to_string())?;
    let complete_before: Vec<String> = first
        .statuses
        .iter()
        .filter(|(_, s)| **s == ModelStatus::Complete)
        .map(|(m, _)| m.clone())
        .collect();
    let pending_after_interrupt: usize = load_run(dir)
        .map_err(|e| e.to_string())?
        .gaps()
        .values()
        .map(Vec::len)
        .sum();
    let snapshot: HashMap<String, Vec<u8>> = artifact_paths(dir, &first)
        .into_iter()
        .filter_map(|p| std::fs::read(&p).ok().map(|b| (p.display().to_string(), b)))
        .collect();
    let complete_paths: Vec<String> = complete_before
        .iter()
        .map(|m| {
            dir.join(nfrgen::generation::artifact_file_name(m))
                .display()
                .to_string()
        })
        .collect();

    flag.store(false, Ordering::SeqCst);
    let resume_options = GenerationOptions::default();
    let done = resume_run(dir, &gw, &resume_options).map_err(|e| e.to_string())?;

    let rewritten_complete = complete_paths
        .iter()
        .filter(|p| std::fs::read(p).ok() != snapshot.get(*p).cloned())
        .count();

    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (model, frs) in transport.log.lock().unwrap().iter() {
        for fr in frs {
            *seen.entry((model.clone(), fr.clone())).or_default() += 1;
        }
    }
    let duplicates = seen.values().filter(|c| **c > 1).count();

    let loaded = load_run(dir).map_err(|e| e.to_string())?;
    let validator = entry_schema();
    let entries: usize = loaded.artifacts.iter().map(|a| a.entries.len()).sum();
    let schema_valid: usize = loaded
        .artifacts
        .iter()
        .map(|a| schema_valid_count(&validator, &a.entries))
        .sum();
    let artifacts = artifact_paths(dir, &done).into_iter().filter(|p| p.exists()).count();
    Ok(E2eReport {
        elapsed: start.elapsed(),
        artifacts,
        complete_models: done.statuses.values().filter(|s| **s == ModelStatus::Complete).count(),
        entries,
        schema_valid,
        duplicates,
        complete_before_resume: complete_before.len(),
        rewritten_complete,
        pending_after_interrupt,
    })
}
