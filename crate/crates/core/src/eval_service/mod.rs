//! Dual human-evaluation protocol: stratified samples, evaluator assignments
//! with cross-task disjoint FR sets, blind selection payloads, score and
//! selection records in an embedded SQLite store, and the HTTP API.

pub mod api;
mod service;
mod store;

use serde::{Deserialize, Serialize};

use crate::quality_model::QualityAttribute;
use crate::util;

pub use service::{
    AssignRequest, AssignmentSummary, EvalService, IssuedAssignment, Progress, SampleRequest, ScoringGroup,
    ScoringItem, ScoringPayload, SelectionGroup, SelectionItem, SelectionPayload, TaskPayload, TaskSummary,
};
pub use store::{AuditEntry, Store, StoreSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Scoring,
    AttributeSelection,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Scoring, Task::AttributeSelection];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Scoring => "scoring",
            Task::AttributeSelection => "attribute_selection",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scoring" => Some(Task::Scoring),
            "attribute_selection" | "selection" => Some(Task::AttributeSelection),
            _ => None,
        }
    }

    pub fn other(self) -> Task {
        match self {
            Task::Scoring => Task::AttributeSelection,
            Task::AttributeSelection => Task::Scoring,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluator {
    pub evaluator_id: String,
    pub display_name: String,
    pub years_experience: u32,
    pub role_title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub evaluator_id: String,
    pub nfr_id: String,
    pub validity: u8,
    pub applicability: u8,
    /// Unix milliseconds.
    pub submitted_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub evaluator_id: String,
    pub nfr_id: String,
    pub chosen_attribute: QualityAttribute,
    pub submitted_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationSample {
    pub sample_id: String,
    pub task: Task,
    pub members: Vec<String>,
    pub strata: std::collections::BTreeMap<String, usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub evaluator_id: String,
    pub task: Task,
    pub fr_ids: Vec<String>,
    pub nfr_ids: Vec<String>,
    /// Scoring only: the model whose NFRs this evaluator rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated_model: Option<String>,
}

/// Id shown to evaluators in place of the internal nfr_id, which embeds the
/// model id. Keyed by sample so ids differ between studies.
pub fn public_item_id(sample_id: &str, nfr_id: &str) -> String {
    let digest = util::sha256_hex(&[b"item", sample_id.as_bytes(), nfr_id.as_bytes()]);
    format!("item-{}", &digest[..16])
}
