//! Protocol logic over the store: sampling, assignment, recording, payloads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::{self, Store};
use super::{Assignment, EvaluationSample, Evaluator, ScoreRecord, SelectionRecord, Task};
use crate::analysis::{Dataset, ExportedEvaluator};
use crate::corpus::RequirementRecord;
use crate::error::{Error, Result};
use crate::generation::LoadedRun;
use crate::prompting::GeneratedNfr;
use crate::quality_model::resolve_attribute;
use crate::util::{self, seeded_rng};

const PARTITION_KEY: &str = "fr_partition";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub task: Task,
    pub target_count: usize,
    pub seed: u64,
    /// FRs the sample may draw from. Defaults to this task's half of a seeded
    /// FR partition, fixed by the first sample created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr_ids: Option<Vec<String>>,
    /// Replace an existing sample for the task (only before any record).
    #[serde(default)]
    pub replace: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignRequest {
    pub evaluators: Vec<Evaluator>,
    #[serde(default = "default_frs_per_evaluator")]
    pub frs_per_evaluator: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_frs_per_evaluator() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringItem {
    pub item_id: String,
    pub nfr_text: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub justification: String,
    pub validity: Option<u8>,
    pub applicability: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringGroup {
    pub fr_id: String,
    pub fr_text: String,
    pub items: Vec<ScoringItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringPayload {
    pub task: Task,
    pub frozen: bool,
    pub progress: Progress,
    pub groups: Vec<ScoringGroup>,
}

/// One NFR in the blind selection task. There is deliberately no field for
/// the model's attribute or identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionItem {
    pub item_id: String,
    pub nfr_text: String,
    /// The evaluator's own earlier choice, if any.
    pub chosen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionGroup {
    pub fr_id: String,
    pub fr_text: String,
    pub items: Vec<SelectionItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPayload {
    pub task: Task,
    pub frozen: bool,
    pub progress: Progress,
    pub groups: Vec<SelectionGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskPayload {
    Scoring(ScoringPayload),
    Selection(SelectionPayload),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: Task,
    pub fr_count: usize,
    pub progress: Progress,
}

/// What an evaluator sees about their own assignments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub evaluator_id: String,
    pub display_name: String,
    pub frozen: bool,
    pub tasks: Vec<TaskSummary>,
}

/// Assignment plus the token handed to the evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedAssignment {
    #[serde(flatten)]
    pub assignment: Assignment,
    pub token: String,
}

pub struct EvalService {
    store: Store,
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn new_token() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    hex::encode(bytes)
}

#[derive(Serialize, Deserialize)]
struct Partition {
    scoring: Vec<String>,
    attribute_selection: Vec<String>,
}

impl Partition {
    fn get(&self, task: Task) -> &[String] {
        match task {
            Task::Scoring => &self.scoring,
            Task::AttributeSelection => &self.attribute_selection,
        }
    }
}

impl EvalService {
    pub fn new(store: Store) -> Self {
        EvalService { store }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::new(Store::open(path)?))
    }

    pub fn in_memory() -> Result<Self> {
        Ok(Self::new(Store::open_in_memory()?))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Adds the FRs and NFRs of a generation run to the pool.
    pub fn import_run(&self, run: &LoadedRun) -> Result<usize> {
        let nfrs: Vec<GeneratedNfr> = run.artifacts.iter().flat_map(|a| a.entries.iter().cloned()).collect();
        self.import_pool(&run.run.subset.members, &nfrs)
    }

    /// Adds FRs and NFRs; re-importing identical rows is a no-op.
    pub fn import_pool(&self, frs: &[RequirementRecord], nfrs: &[GeneratedNfr]) -> Result<usize> {
        self.store.write(|tx| {
            for fr in frs {
                store::insert_fr(tx, fr)?;
            }
            for n in nfrs {
                if store::get_fr(tx, &n.fr_id)?.is_none() {
                    return Err(Error::Integrity(format!(
                        "NFR {} references unknown FR {}",
                        n.nfr_id, n.fr_id
                    )));
                }
                store::insert_nfr(tx, n)?;
            }
            Ok(nfrs.len())
        })
    }

    /// Loads a full exported dataset, records included, into an empty store.
    pub fn import_dataset(&self, ds: &Dataset) -> Result<()> {
        ds.validate()?;
        self.import_pool(&ds.frs, &ds.nfrs)?;
        self.store.write(|tx| {
            if store::record_count(tx)? > 0 {
                return Err(Error::Conflict("store already holds evaluation records".into()));
            }
            for e in &ds.evaluators {
                store::upsert_evaluator(
                    tx,
                    &Evaluator {
                        evaluator_id: e.evaluator_id.clone(),
                        display_name: e.evaluator_id.clone(),
                        years_experience: e.years_experience,
                        role_title: e.role_title.clone(),
                    },
                )?;
            }
            for s in &ds.scores {
                store::upsert_score(tx, s)?;
            }
            for s in &ds.selections {
                store::upsert_selection(tx, s)?;
            }
            Ok(())
        })
    }

    pub fn sample(&self, task: Task) -> Result<Option<EvaluationSample>> {
        self.store.read(|c| store::get_sample(c, task))
    }

    /// Draws a sample stratified by model. Per-model counts differ by at most
    /// one; a model that cannot fill its share is a capacity error.
    ///
    /// Within a model the sample takes whole FR groups in a seeded FR order,
    /// so it touches as few FRs as possible and stays assignable at a few FRs
    /// per evaluator.
    pub fn create_sample(&self, req: &SampleRequest) -> Result<EvaluationSample> {
        self.store.write(|tx| {
            if store::is_frozen(tx)? {
                return Err(Error::Conflict("evaluation is frozen".into()));
            }
            let nfrs = store::all_nfrs(tx)?;
            let frs = store::all_frs(tx)?;
            let other = store::get_sample(tx, req.task.other())?;
            let other_frs: HashSet<String> = match &other {
                Some(s) => fr_set_of(tx, &s.members)?,
                None => HashSet::new(),
            };

            let scope: Vec<String> = match &req.fr_ids {
                Some(ids) => {
                    for id in ids {
                        if store::get_fr(tx, id)?.is_none() {
                            return Err(Error::NotFound(format!("FR {id}")));
                        }
                        if other_frs.contains(id) {
                            return Err(Error::Conflict(format!(
                                "FR {id} is already used by the {} sample",
                                req.task.other()
                            )));
                        }
                    }
                    ids.clone()
                }
                None => {
                    let partition = match store::meta_get(tx, PARTITION_KEY)? {
                        Some(text) => serde_json::from_str::<Partition>(&text)?,
                        None => {
                            let mut ids: Vec<String> = frs.iter().map(|f| f.id.clone()).collect();
                            ids.shuffle(&mut seeded_rng(req.seed));
                            let half = ids.len().div_ceil(2);
                            let p = Partition {
                                attribute_selection: ids.split_off(half),
                                scoring: ids,
                            };
                            store::meta_set(tx, PARTITION_KEY, &serde_json::to_string(&p)?)?;
                            p
                        }
                    };
                    partition
                        .get(req.task)
                        .iter()
                        .filter(|id| !other_frs.contains(*id))
                        .cloned()
                        .collect()
                }
            };

            let sample = draw_sample(&nfrs, &scope, req)?;
            if let Some(existing) = store::get_sample(tx, req.task)? {
                if existing == sample {
                    return Ok(existing);
                }
                if !req.replace {
                    return Err(Error::Conflict(format!(
                        "a different {} sample already exists; pass replace to overwrite it",
                        req.task
                    )));
                }
                if store::record_count(tx)? > 0 {
                    return Err(Error::Conflict("records exist; samples can no longer change".into()));
                }
                store::replace_assignments(tx, &[])?;
            }
            store::put_sample(tx, &sample, req.target_count)?;
            Ok(sample)
        })
    }

    /// Assigns FRs to evaluators for both tasks and issues tokens.
    ///
    /// Scoring: each evaluator has a designated model whose sampled FRs are
    /// split among that model's evaluators. When those evaluators run out of
    /// FR slots the remaining (model, FR) groups spill to other evaluators.
    /// Selection: sampled FRs are split across all evaluators. FRs may repeat
    /// across evaluators within a task; the two tasks never share an FR.
    pub fn assign_evaluators(&self, req: &AssignRequest) -> Result<Vec<IssuedAssignment>> {
        if req.evaluators.is_empty() {
            return Err(Error::Capacity {
                what: "evaluators".into(),
                requested: 1,
                available: 0,
            });
        }
        if req.frs_per_evaluator == 0 {
            return Err(Error::InvalidArgument("frs_per_evaluator must be positive".into()));
        }
        let mut ids = HashSet::new();
        for e in &req.evaluators {
            if e.evaluator_id.trim().is_empty() || !ids.insert(e.evaluator_id.as_str()) {
                return Err(Error::Validation(format!(
                    "evaluator id {:?} empty or repeated",
                    e.evaluator_id
                )));
            }
        }
        self.store.write(|tx| {
            if store::is_frozen(tx)? {
                return Err(Error::Conflict("evaluation is frozen".into()));
            }
            if store::record_count(tx)? > 0 {
                return Err(Error::Conflict(
                    "records exist; assignments can no longer change".into(),
                ));
            }
            let nfrs: HashMap<String, GeneratedNfr> = store::all_nfrs(tx)?
                .into_iter()
                .map(|n| (n.nfr_id.clone(), n))
                .collect();
            let mut assignments = Vec::new();
            if let Some(sample) = store::get_sample(tx, Task::Scoring)? {
                assignments.extend(assign_scoring(&sample, &nfrs, req)?);
            }
            if let Some(sample) = store::get_sample(tx, Task::AttributeSelection)? {
                assignments.extend(assign_selection(&sample, &nfrs, req)?);
            }
            check_disjoint(&assignments)?;

            for e in &req.evaluators {
                store::upsert_evaluator(tx, e)?;
            }
            store::replace_assignments(tx, &assignments)?;
            let mut issued = Vec::new();
            for a in assignments {
                let token = match store::token_for(tx, &a.evaluator_id)? {
                    Some(t) => t,
                    None => {
                        let t = new_token();
                        store::put_token(tx, &a.evaluator_id, &t)?;
                        t
                    }
                };
                issued.push(IssuedAssignment { assignment: a, token });
            }
            Ok(issued)
        })
    }

    pub fn assignments(&self) -> Result<Vec<Assignment>> {
        self.store.read(store::all_assignments)
    }

    pub fn token_for(&self, evaluator_id: &str) -> Result<String> {
        self.store
            .read(|c| store::token_for(c, evaluator_id))?
            .ok_or_else(|| Error::NotFound(format!("no token issued to evaluator {evaluator_id}")))
    }

    pub fn evaluator_for_token(&self, token: &str) -> Result<String> {
        self.store
            .read(|c| store::evaluator_for_token(c, token))?
            .ok_or_else(|| Error::Unauthorized("unknown token".into()))
    }

    /// Maps a public item id back to its task and internal nfr_id.
    pub fn resolve_item(&self, item_id: &str) -> Result<(Task, String)> {
        self.store
            .read(|c| store::resolve_item(c, item_id))?
            .ok_or_else(|| Error::NotFound(format!("item {item_id}")))
    }

    /// Resolves a public item id submitted for `task`. Unknown ids and ids of
    /// the other task are both Unauthorized.
    pub fn item_for_task(&self, item_id: &str, task: Task) -> Result<String> {
        let denied = || Error::Unauthorized(format!("item {item_id} is not in this evaluator's {task} assignment"));
        match self.resolve_item(item_id) {
            Ok((found, nfr_id)) if found == task => Ok(nfr_id),
            Ok(_) | Err(Error::NotFound(_)) => Err(denied()),
            Err(e) => Err(e),
        }
    }

    pub fn freeze(&self) -> Result<()> {
        self.store.write(|tx| store::meta_set(tx, "frozen", "true"))
    }

    pub fn is_frozen(&self) -> Result<bool> {
        self.store.read(store::is_frozen)
    }

    pub fn record_score(
        &self,
        evaluator_id: &str,
        nfr_id: &str,
        validity: u8,
        applicability: u8,
    ) -> Result<ScoreRecord> {
        for (name, v) in [("validity", validity), ("applicability", applicability)] {
            if !(1..=5).contains(&v) {
                return Err(Error::Validation(format!("{name} {v} outside 1..5")));
            }
        }
        self.store.write(|tx| {
            authorize(tx, evaluator_id, nfr_id, Task::Scoring)?;
            let record = ScoreRecord {
                evaluator_id: evaluator_id.to_string(),
                nfr_id: nfr_id.to_string(),
                validity,
                applicability,
                submitted_at: now_ms(),
            };
            if let Some(prev) = store::get_score(tx, evaluator_id, nfr_id)? {
                store::insert_audit(
                    tx,
                    record.submitted_at,
                    evaluator_id,
                    Task::Scoring,
                    nfr_id,
                    &serde_json::to_string(&prev)?,
                    &serde_json::to_string(&record)?,
                )?;
            }
            store::upsert_score(tx, &record)?;
            Ok(record)
        })
    }

    pub fn record_selection(&self, evaluator_id: &str, nfr_id: &str, attribute: &str) -> Result<SelectionRecord> {
        let chosen = resolve_attribute(attribute).map_err(|_| {
            Error::Validation(format!(
                "{:?} is not one of the nine quality attributes",
                attribute.trim()
            ))
        })?;
        self.store.write(|tx| {
            authorize(tx, evaluator_id, nfr_id, Task::AttributeSelection)?;
            let record = SelectionRecord {
                evaluator_id: evaluator_id.to_string(),
                nfr_id: nfr_id.to_string(),
                chosen_attribute: chosen,
                submitted_at: now_ms(),
            };
            if let Some(prev) = store::get_selection(tx, evaluator_id, nfr_id)? {
                store::insert_audit(
                    tx,
                    record.submitted_at,
                    evaluator_id,
                    Task::AttributeSelection,
                    nfr_id,
                    &serde_json::to_string(&prev)?,
                    &serde_json::to_string(&record)?,
                )?;
            }
            store::upsert_selection(tx, &record)?;
            Ok(record)
        })
    }

    pub fn summary(&self, evaluator_id: &str) -> Result<AssignmentSummary> {
        self.store.read(|c| {
            let evaluator = store::get_evaluator(c, evaluator_id)?
                .ok_or_else(|| Error::NotFound(format!("evaluator {evaluator_id}")))?;
            let mut tasks = Vec::new();
            for task in Task::ALL {
                if let Some(a) = store::get_assignment(c, evaluator_id, task)? {
                    tasks.push(TaskSummary {
                        task,
                        fr_count: a.fr_ids.len(),
                        progress: progress(c, &a)?,
                    });
                }
            }
            if tasks.is_empty() {
                return Err(Error::NotFound(format!("no assignment for evaluator {evaluator_id}")));
            }
            Ok(AssignmentSummary {
                evaluator_id: evaluator.evaluator_id,
                display_name: evaluator.display_name,
                frozen: store::is_frozen(c)?,
                tasks,
            })
        })
    }

    pub fn scoring_payload(&self, evaluator_id: &str) -> Result<ScoringPayload> {
        self.store.read(|c| {
            let a = assignment_or_not_found(c, evaluator_id, Task::Scoring)?;
            let mut groups = Vec::new();
            for (fr, nfrs) in grouped(c, &a)? {
                let mut items = Vec::new();
                for n in nfrs {
                    let prior = store::get_score(c, evaluator_id, &n.nfr_id)?;
                    items.push(ScoringItem {
                        item_id: item_id(c, Task::Scoring, &n.nfr_id)?,
                        nfr_text: n.text,
                        attribute: n.attribute.canonical_name().to_string(),
                        subcharacteristic: n.subcharacteristic,
                        justification: n.justification,
                        validity: prior.as_ref().map(|p| p.validity),
                        applicability: prior.as_ref().map(|p| p.applicability),
                    });
                }
                groups.push(ScoringGroup {
                    fr_id: fr.id,
                    fr_text: fr.text,
                    items,
                });
            }
            Ok(ScoringPayload {
                task: Task::Scoring,
                frozen: store::is_frozen(c)?,
                progress: progress(c, &a)?,
                groups,
            })
        })
    }

    pub fn selection_payload(&self, evaluator_id: &str) -> Result<SelectionPayload> {
        self.store.read(|c| {
            let a = assignment_or_not_found(c, evaluator_id, Task::AttributeSelection)?;
            let mut groups = Vec::new();
            for (fr, nfrs) in grouped(c, &a)? {
                let mut items = Vec::new();
                for n in nfrs {
                    let prior = store::get_selection(c, evaluator_id, &n.nfr_id)?;
                    items.push(SelectionItem {
                        item_id: item_id(c, Task::AttributeSelection, &n.nfr_id)?,
                        nfr_text: n.text,
                        chosen: prior.map(|p| p.chosen_attribute.canonical_name().to_string()),
                    });
                }
                groups.push(SelectionGroup {
                    fr_id: fr.id,
                    fr_text: fr.text,
                    items,
                });
            }
            Ok(SelectionPayload {
                task: Task::AttributeSelection,
                frozen: store::is_frozen(c)?,
                progress: progress(c, &a)?,
                groups,
            })
        })
    }

    pub fn evaluator_payload(&self, evaluator_id: &str, task: Task) -> Result<TaskPayload> {
        Ok(match task {
            Task::Scoring => TaskPayload::Scoring(self.scoring_payload(evaluator_id)?),
            Task::AttributeSelection => TaskPayload::Selection(self.selection_payload(evaluator_id)?),
        })
    }

    /// FRs, NFRs, records and evaluators (without names) as a dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        let snap = self.store.snapshot()?;
        Ok(Dataset {
            frs: snap.frs,
            nfrs: snap.nfrs,
            scores: snap.scores,
            selections: snap.selections,
            evaluators: snap.evaluators.iter().map(ExportedEvaluator::from).collect(),
        })
    }
}

fn fr_set_of(c: &rusqlite::Connection, nfr_ids: &[String]) -> Result<HashSet<String>> {
    nfr_ids
        .iter()
        .map(|id| {
            store::get_nfr(c, id)?
                .map(|n| n.fr_id)
                .ok_or_else(|| Error::Integrity(format!("sample member {id} is not stored")))
        })
        .collect()
}

fn draw_sample(nfrs: &[GeneratedNfr], scope: &[String], req: &SampleRequest) -> Result<EvaluationSample> {
    let in_scope: HashSet<&str> = scope.iter().map(String::as_str).collect();
    let mut models: Vec<&str> = Vec::new();
    let mut by_model: HashMap<&str, BTreeMap<&str, Vec<&GeneratedNfr>>> = HashMap::new();
    for n in nfrs.iter().filter(|n| in_scope.contains(n.fr_id.as_str())) {
        if !by_model.contains_key(n.model_id.as_str()) {
            models.push(&n.model_id);
        }
        by_model
            .entry(&n.model_id)
            .or_default()
            .entry(&n.fr_id)
            .or_default()
            .push(n);
    }
    let capacities: Vec<usize> = models
        .iter()
        .map(|m| by_model[m].values().map(Vec::len).sum())
        .collect();
    let available: usize = capacities.iter().sum();
    if req.target_count > available {
        return Err(Error::Capacity {
            what: format!("{} sample", req.task),
            requested: req.target_count,
            available,
        });
    }
    let mut rng = seeded_rng(req.seed);
    let quotas = util::balanced_quotas(req.target_count, &capacities, &mut rng);
    if let (Some(lo), Some(hi)) = (quotas.iter().min(), quotas.iter().max()) {
        if hi - lo > 1 {
            let (i, _) = quotas.iter().enumerate().min_by_key(|(_, q)| **q).expect("non-empty");
            return Err(Error::Capacity {
                what: format!("{} stratum for model {}", req.task, models[i]),
                requested: hi - 1,
                available: capacities[i],
            });
        }
    }
    let mut fr_order: Vec<&str> = scope.iter().map(String::as_str).collect();
    fr_order.shuffle(&mut rng);

    let mut members = Vec::new();
    let mut strata = BTreeMap::new();
    for (m, quota) in models.iter().zip(&quotas) {
        let groups = &by_model[m];
        let mut taken = 0;
        for fr in &fr_order {
            if taken == *quota {
                break;
            }
            let Some(group) = groups.get(fr) else { continue };
            let mut group = group.clone();
            group.shuffle(&mut rng);
            for n in group.into_iter().take(quota - taken) {
                members.push(n.nfr_id.clone());
                taken += 1;
            }
        }
        if *quota > 0 {
            strata.insert(m.to_string(), *quota);
        }
    }
    let digest = util::sha256_hex(&[
        req.task.as_str().as_bytes(),
        &req.seed.to_le_bytes(),
        members.join("\n").as_bytes(),
    ]);
    Ok(EvaluationSample {
        sample_id: format!("S-{}-{}", req.task, &digest[..10]),
        task: req.task,
        members,
        strata,
        seed: req.seed,
    })
}

/// FR ids of `members` in first-appearance order.
fn member_frs<'a>(members: &[String], nfrs: &'a HashMap<String, GeneratedNfr>) -> Result<Vec<&'a str>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for id in members {
        let n = nfrs
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("sample member {id} is not stored")))?;
        if seen.insert(n.fr_id.as_str()) {
            out.push(n.fr_id.as_str());
        }
    }
    Ok(out)
}

fn shuffled_evaluators(req: &AssignRequest, salt: u64) -> Vec<&Evaluator> {
    let mut order: Vec<&Evaluator> = req.evaluators.iter().collect();
    order.shuffle(&mut seeded_rng(req.seed ^ salt));
    order
}

fn assign_scoring(
    sample: &EvaluationSample,
    nfrs: &HashMap<String, GeneratedNfr>,
    req: &AssignRequest,
) -> Result<Vec<Assignment>> {
    let models: Vec<&String> = {
        let mut seen = HashSet::new();
        sample
            .members
            .iter()
            .filter_map(|id| nfrs.get(id))
            .map(|n| &n.model_id)
            .filter(|m| seen.insert(m.as_str()))
            .collect()
    };
    if models.is_empty() {
        return Ok(Vec::new());
    }
    let evaluators = shuffled_evaluators(req, 0x5c0);
    if evaluators.len() < models.len() {
        return Err(Error::Capacity {
            what: "scoring evaluators (one per model)".into(),
            requested: models.len(),
            available: evaluators.len(),
        });
    }
    // Per evaluator: designated model, FR order, and (model, FR) groups held.
    struct Slot<'a> {
        evaluator: &'a Evaluator,
        model: &'a str,
        frs: Vec<&'a str>,
        groups: Vec<(&'a str, &'a str)>,
        load: usize,
    }
    let group_size = |model: &str, fr: &str| {
        sample
            .members
            .iter()
            .filter(|id| nfrs.get(*id).is_some_and(|n| n.model_id == model && n.fr_id == fr))
            .count()
    };
    let mut slots: Vec<Slot> = evaluators
        .iter()
        .enumerate()
        .map(|(i, e)| Slot {
            evaluator: e,
            model: models[i % models.len()].as_str(),
            frs: Vec::new(),
            groups: Vec::new(),
            load: 0,
        })
        .collect();
    let mut overflow: Vec<(&str, &str)> = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        let mine: Vec<String> = sample
            .members
            .iter()
            .filter(|id| nfrs.get(*id).is_some_and(|n| &n.model_id == *model))
            .cloned()
            .collect();
        let frs = member_frs(&mine, nfrs)?;
        let designated: Vec<usize> = (0..slots.len()).filter(|i| i % models.len() == mi).collect();
        for (j, fr) in frs.iter().enumerate() {
            let k = designated[j % designated.len()];
            if slots[k].frs.len() < req.frs_per_evaluator {
                slots[k].frs.push(fr);
                slots[k].groups.push((model.as_str(), fr));
                slots[k].load += group_size(model, fr);
            } else {
                overflow.push((model.as_str(), fr));
            }
        }
    }
    // Groups beyond a model's own evaluators go to whoever already holds the
    // FR, else to an evaluator with a free FR slot; lightest load first.
    for (model, fr) in overflow.iter().copied() {
        let pick = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.frs.contains(&fr) || s.frs.len() < req.frs_per_evaluator)
            .min_by_key(|(_, s)| (!s.frs.contains(&fr), s.load))
            .map(|(i, _)| i);
        let Some(k) = pick else {
            let stranded = overflow
                .iter()
                .filter(|(_, f)| !slots.iter().any(|s| s.frs.contains(f)))
                .count();
            return Err(Error::Capacity {
                what: format!("scoring FR slots (short by {})", stranded.max(1)),
                requested: slots.iter().map(|s| s.frs.len()).sum::<usize>() + stranded.max(1),
                available: slots.len() * req.frs_per_evaluator,
            });
        };
        if !slots[k].frs.contains(&fr) {
            slots[k].frs.push(fr);
        }
        slots[k].groups.push((model, fr));
        slots[k].load += group_size(model, fr);
    }
    let mut out = Vec::new();
    for s in slots.into_iter().filter(|s| !s.frs.is_empty()) {
        let nfr_ids = sample
            .members
            .iter()
            .filter(|id| {
                let n = &nfrs[*id];
                s.groups.contains(&(n.model_id.as_str(), n.fr_id.as_str()))
            })
            .cloned()
            .collect();
        out.push(Assignment {
            evaluator_id: s.evaluator.evaluator_id.clone(),
            task: Task::Scoring,
            fr_ids: s.frs.iter().map(|f| f.to_string()).collect(),
            nfr_ids,
            designated_model: Some(s.model.to_string()),
        });
    }
    Ok(out)
}

fn assign_selection(
    sample: &EvaluationSample,
    nfrs: &HashMap<String, GeneratedNfr>,
    req: &AssignRequest,
) -> Result<Vec<Assignment>> {
    let frs = member_frs(&sample.members, nfrs)?;
    let evaluators = shuffled_evaluators(req, 0x5e1);
    let capacity = evaluators.len() * req.frs_per_evaluator;
    if frs.len() > capacity {
        return Err(Error::Capacity {
            what: format!("selection FR slots (short by {})", frs.len() - capacity),
            requested: frs.len(),
            available: capacity,
        });
    }
    let mut out = Vec::new();
    for (k, e) in evaluators.iter().enumerate() {
        let fr_ids: Vec<String> = frs
            .iter()
            .enumerate()
            .filter(|(j, _)| j % evaluators.len() == k)
            .map(|(_, f)| f.to_string())
            .collect();
        if fr_ids.is_empty() {
            continue;
        }
        let nfr_ids = sample
            .members
            .iter()
            .filter(|id| fr_ids.contains(&nfrs[*id].fr_id))
            .cloned()
            .collect();
        out.push(Assignment {
            evaluator_id: e.evaluator_id.clone(),
            task: Task::AttributeSelection,
            fr_ids,
            nfr_ids,
            designated_model: None,
        });
    }
    Ok(out)
}

fn check_disjoint(assignments: &[Assignment]) -> Result<()> {
    let frs = |task| -> BTreeSet<&str> {
        assignments
            .iter()
            .filter(|a| a.task == task)
            .flat_map(|a| a.fr_ids.iter().map(String::as_str))
            .collect()
    };
    let shared: Vec<&str> = frs(Task::Scoring)
        .intersection(&frs(Task::AttributeSelection))
        .copied()
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Integrity(format!("FRs {shared:?} appear in both tasks")))
    }
}

/// Frozen, assignment and cross-task disjointness checks for one record.
fn authorize(c: &rusqlite::Connection, evaluator_id: &str, nfr_id: &str, task: Task) -> Result<()> {
    if store::is_frozen(c)? {
        return Err(Error::Conflict("evaluation is frozen; submissions are closed".into()));
    }
    let assigned =
        store::get_assignment(c, evaluator_id, task)?.is_some_and(|a| a.nfr_ids.iter().any(|id| id == nfr_id));
    if !assigned {
        return Err(Error::Unauthorized(format!(
            "item is not in this evaluator's {task} assignment"
        )));
    }
    let fr = store::get_nfr(c, nfr_id)?
        .ok_or_else(|| Error::Integrity(format!("assigned NFR {nfr_id} is not stored")))?
        .fr_id;
    let clash = store::all_assignments(c)?
        .iter()
        .any(|a| a.task == task.other() && a.fr_ids.contains(&fr));
    if clash {
        return Err(Error::Integrity(format!("FR {fr} is assigned to both tasks")));
    }
    Ok(())
}

fn assignment_or_not_found(c: &rusqlite::Connection, evaluator_id: &str, task: Task) -> Result<Assignment> {
    store::get_assignment(c, evaluator_id, task)?
        .ok_or_else(|| Error::NotFound(format!("no {task} assignment for evaluator {evaluator_id}")))
}

fn item_id(c: &rusqlite::Connection, task: Task, nfr_id: &str) -> Result<String> {
    store::item_id_for(c, task, nfr_id)?
        .ok_or_else(|| Error::Integrity(format!("assigned NFR {nfr_id} is not in the {task} sample")))
}

fn grouped(c: &rusqlite::Connection, a: &Assignment) -> Result<Vec<(RequirementRecord, Vec<GeneratedNfr>)>> {
    let mut groups: Vec<(RequirementRecord, Vec<GeneratedNfr>)> = Vec::new();
    for fr_id in &a.fr_ids {
        let fr = store::get_fr(c, fr_id)?.ok_or_else(|| Error::Integrity(format!("FR {fr_id} is not stored")))?;
        groups.push((fr, Vec::new()));
    }
    for id in &a.nfr_ids {
        let n = store::get_nfr(c, id)?.ok_or_else(|| Error::Integrity(format!("NFR {id} is not stored")))?;
        if let Some(g) = groups.iter_mut().find(|(fr, _)| fr.id == n.fr_id) {
            g.1.push(n);
        }
    }
    Ok(groups)
}

fn progress(c: &rusqlite::Connection, a: &Assignment) -> Result<Progress> {
    let mut done = 0;
    for id in &a.nfr_ids {
        let has = match a.task {
            Task::Scoring => store::get_score(c, &a.evaluator_id, id)?.is_some(),
            Task::AttributeSelection => store::get_selection(c, &a.evaluator_id, id)?.is_some(),
        };
        done += usize::from(has);
    }
    Ok(Progress {
        done,
        total: a.nfr_ids.len(),
    })
}
