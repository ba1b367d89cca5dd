#![allow(dead_code)]

use nfrgen::corpus::{RequirementKind, RequirementRecord};
use nfrgen::eval_service::Evaluator;
use nfrgen::prompting::{nfr_id, GeneratedNfr};
use nfrgen::quality_model::QualityAttribute;

pub const MODELS: [&str; 8] = [
    "gpt-4o-mini",
    "claude-3-5-haiku",
    "claude-3-7-sonnet",
    "gemini-1.5-pro",
    "llama-3.3-70b",
    "deepseek-v3",
    "qwen2.5-72b",
    "grok-2",
];

pub fn frs(n: usize) -> Vec<RequirementRecord> {
    (1..=n)
        .map(|i| RequirementRecord {
            id: format!("FR-{i}"),
            text: format!("The system shall handle operation number {i} for the user."),
            kind: RequirementKind::Functional,
            source_doc: None,
            year: None,
        })
        .collect()
}

/// `per(model_index, fr_index)` NFRs for each (model, FR). Texts never name
/// an attribute.
pub fn pool(models: &[&str], frs: &[RequirementRecord], per: impl Fn(usize, usize) -> usize) -> Vec<GeneratedNfr> {
    let mut out = Vec::new();
    for (mi, m) in models.iter().enumerate() {
        for (fi, fr) in frs.iter().enumerate() {
            for k in 0..per(mi, fi) {
                let attribute = QualityAttribute::ALL[(mi + fi + k) % 9];
                out.push(GeneratedNfr {
                    nfr_id: nfr_id(m, &fr.id, k + 1),
                    fr_id: fr.id.clone(),
                    text: format!("Requirement {k} derived for {} must hold under load step {mi}.", fr.id),
                    attribute,
                    subcharacteristic: None,
                    justification: format!("Because {} matters here.", attribute.canonical_name()),
                    model_id: m.to_string(),
                    raw_span: String::new(),
                });
            }
        }
    }
    out
}

pub fn evaluators(n: usize) -> Vec<Evaluator> {
    (1..=n)
        .map(|i| Evaluator {
            evaluator_id: format!("E{i:02}"),
            display_name: format!("Evaluator {i}"),
            years_experience: 10 + i as u32,
            role_title: "Senior Software Engineer".into(),
        })
        .collect()
}
