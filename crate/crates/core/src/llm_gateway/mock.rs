//! Scripted offline provider.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use super::{ChatRequest, Transport, TransportFailure};
use crate::prompting::SchemaEntry;
use crate::quality_model::QualityAttribute;

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    Fail(TransportFailure),
    /// Successive calls take successive replies; the last one repeats.
    Sequence(Vec<MockReply>),
}

/// Answer for requests that match no script entry.
#[derive(Debug, Clone, PartialEq)]
pub enum MockDefault {
    /// A schema-valid answer with this many NFRs per requested FR.
    ValidTemplate {
        nfrs_per_fr: usize,
    },
    Fixed(String),
    Fail(TransportFailure),
}

/// Deterministic provider for offline runs and fault injection.
///
/// Lookup order per request: exact request fingerprint, then per FR
/// `"<model_id>/<fr_id>"`, then `"<fr_id>"`, then the default.
pub struct MockTransport {
    script: Mutex<HashMap<String, MockReply>>,
    cursors: Mutex<HashMap<String, usize>>,
    default: MockDefault,
    calls: AtomicUsize,
    per_model: Mutex<HashMap<String, usize>>,
}

impl MockTransport {
    pub fn new(default: MockDefault) -> Self {
        MockTransport {
            script: Mutex::new(HashMap::new()),
            cursors: Mutex::new(HashMap::new()),
            default,
            calls: AtomicUsize::new(0),
            per_model: Mutex::new(HashMap::new()),
        }
    }

    pub fn valid(nfrs_per_fr: usize) -> Self {
        Self::new(MockDefault::ValidTemplate { nfrs_per_fr })
    }

    pub fn script_fingerprint(&self, fingerprint: &str, reply: MockReply) {
        self.script.lock().unwrap().insert(fingerprint.to_string(), reply);
    }

    pub fn script_fr(&self, fr_id: &str, reply: MockReply) {
        self.script.lock().unwrap().insert(fr_id.to_string(), reply);
    }

    pub fn script_model_fr(&self, model_id: &str, fr_id: &str, reply: MockReply) {
        self.script.lock().unwrap().insert(format!("{model_id}/{fr_id}"), reply);
    }

    /// Total requests received.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, model_id: &str) -> usize {
        self.per_model.lock().unwrap().get(model_id).copied().unwrap_or(0)
    }

    fn play(&self, key: &str, reply: &MockReply) -> Result<String, TransportFailure> {
        match reply {
            MockReply::Text(t) => Ok(t.clone()),
            MockReply::Fail(f) => Err(f.clone()),
            MockReply::Sequence(items) => {
                let mut cursors = self.cursors.lock().unwrap();
                let cursor = cursors.entry(key.to_string()).or_insert(0);
                let Some(item) = items.get((*cursor).min(items.len().saturating_sub(1))) else {
                    return Err(TransportFailure::EmptyResponse);
                };
                *cursor += 1;
                drop(cursors);
                self.play(key, item)
            }
        }
    }

    fn reply_for_fr(&self, model_id: &str, fr_id: &str) -> Result<String, TransportFailure> {
        let scripted = {
            let script = self.script.lock().unwrap();
            let key = format!("{model_id}/{fr_id}");
            script
                .get(&key)
                .map(|r| (key, r.clone()))
                .or_else(|| script.get(fr_id).map(|r| (fr_id.to_string(), r.clone())))
        };
        match scripted {
            Some((key, reply)) => self.play(&format!("{model_id}|{key}"), &reply),
            None => self.default_reply(model_id, std::slice::from_ref(&fr_id.to_string())),
        }
    }

    fn default_reply(&self, model_id: &str, fr_ids: &[String]) -> Result<String, TransportFailure> {
        match &self.default {
            MockDefault::Fixed(t) => Ok(t.clone()),
            MockDefault::Fail(f) => Err(f.clone()),
            MockDefault::ValidTemplate { nfrs_per_fr } => {
                let entries: Vec<SchemaEntry> = fr_ids
                    .iter()
                    .flat_map(|fr| template_entries(model_id, fr, *nfrs_per_fr))
                    .collect();
                Ok(serde_json::to_string_pretty(&entries).expect("entries serialize"))
            }
        }
    }
}

/// `count` schema-valid entries for one FR, varied by model and FR.
pub fn template_entries(model_id: &str, fr_id: &str, count: usize) -> Vec<SchemaEntry> {
    let offset = model_id
        .bytes()
        .chain(fr_id.bytes())
        .fold(0usize, |acc, b| acc.wrapping_mul(31).wrapping_add(b as usize));
    (0..count)
        .map(|k| {
            let attribute = QualityAttribute::ALL[(offset + k) % QualityAttribute::ALL.len()];
            SchemaEntry {
                fr_id: fr_id.to_string(),
                attribute: attribute.canonical_name().to_string(),
                subcharacteristic: attribute.subcharacteristics().first().map(|s| s.to_string()),
                nfr: format!(
                    "The function described in {fr_id} shall meet requirement {} with a 95% success rate within {} seconds.",
                    k + 1,
                    k + 2
                ),
                justification: format!("{fr_id} needs a measurable {} target.", attribute.canonical_name().to_lowercase()),
            }
        })
        .collect()
}

fn merge_arrays(parts: Vec<String>) -> String {
    let arrays: Option<Vec<Vec<Value>>> = parts
        .iter()
        .map(|p| match serde_json::from_str::<Value>(p) {
            Ok(Value::Array(items)) => Some(items),
            _ => None,
        })
        .collect();
    match arrays {
        Some(arrays) => serde_json::to_string_pretty(&arrays.concat()).expect("values serialize"),
        None => parts.join("\n"),
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .per_model
            .lock()
            .unwrap()
            .entry(request.model_id.clone())
            .or_insert(0) += 1;

        let by_fingerprint = self.script.lock().unwrap().get(&request.fingerprint).cloned();
        if let Some(reply) = by_fingerprint {
            return self.play(&request.fingerprint, &reply);
        }
        match request.fr_ids.as_slice() {
            [] => self.default_reply(&request.model_id, &[]),
            [single] => self.reply_for_fr(&request.model_id, single),
            many => {
                let parts = many
                    .iter()
                    .map(|fr| self.reply_for_fr(&request.model_id, fr))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(merge_arrays(parts))
            }
        }
    }
}
