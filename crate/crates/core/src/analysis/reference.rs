//! Synthetic dataset whose aggregates match the published study results.
//!
//! Score counts and the confusion table are derived from the reported
//! percentages and means; texts and the per-model split are synthetic. The
//! copy under `fixtures/reference/` is this dataset exported as JSON.

use rand::seq::SliceRandom;

use super::{Dataset, ExportedEvaluator};
use crate::corpus::{RequirementKind, RequirementRecord};
use crate::eval_service::{ScoreRecord, SelectionRecord};
use crate::llm_gateway::reference_models;
use crate::prompting::{nfr_id, GeneratedNfr};
use crate::quality_model::QualityAttribute::{self, *};
use crate::util::seeded_rng;

/// Validity counts for scores 1..5 (174 records).
pub const VALIDITY_COUNTS: [usize; 5] = [2, 3, 11, 25, 133];
/// Applicability counts for scores 1..5 (174 records).
pub const APPLICABILITY_COUNTS: [usize; 5] = [4, 10, 3, 19, 138];

/// (LLM-assigned, expert-selected, count) over 168 selections.
pub const CONFUSION: [(QualityAttribute, QualityAttribute, usize); 23] = [
    (FunctionalSuitability, FunctionalSuitability, 18),
    (FunctionalSuitability, Usability, 5),
    (FunctionalSuitability, Reliability, 7),
    (FunctionalSuitability, Security, 3),
    (FunctionalSuitability, PerformanceEfficiency, 2),
    (PerformanceEfficiency, PerformanceEfficiency, 25),
    (Compatibility, Compatibility, 12),
    (Usability, Usability, 18),
    (Usability, FunctionalSuitability, 2),
    (Reliability, Reliability, 17),
    (Reliability, Security, 2),
    (Reliability, Maintainability, 1),
    (Security, Security, 22),
    (Security, Safety, 1),
    (Security, Usability, 1),
    (Maintainability, Maintainability, 13),
    (Maintainability, Flexibility, 1),
    (Maintainability, Usability, 1),
    (Flexibility, Flexibility, 6),
    (Flexibility, Compatibility, 3),
    (Safety, Safety, 4),
    (Safety, Usability, 2),
    (Safety, Maintainability, 2),
];

pub const FR_COUNT: usize = 34;
pub const SCORING_FRS: usize = 17;
const SEED: u64 = 2025;
const BASE_TIME_MS: i64 = 1_735_689_600_000;

const ACTIONS: [&str; 6] = [
    "record each submitted order",
    "let an administrator deactivate a user account",
    "display the current status of a request",
    "export the monthly summary as a file",
    "notify the assigned operator when a task changes",
    "search stored entries by keyword",
];

fn expand(counts: &[usize; 5]) -> Vec<u8> {
    counts
        .iter()
        .zip(1u8..)
        .flat_map(|(&c, score)| std::iter::repeat_n(score, c))
        .collect()
}

fn make_nfr(model_id: &str, fr_id: &str, ordinal: usize, attribute: QualityAttribute) -> GeneratedNfr {
    let text = format!(
        "The function in {fr_id} shall satisfy its {} target for 99% of requests within {} seconds.",
        attribute.canonical_name().to_lowercase(),
        ordinal + 1
    );
    GeneratedNfr {
        nfr_id: nfr_id(model_id, fr_id, ordinal),
        fr_id: fr_id.to_string(),
        justification: format!(
            "{fr_id} depends on this {} property.",
            attribute.canonical_name().to_lowercase()
        ),
        raw_span: text.clone(),
        text,
        attribute,
        subcharacteristic: attribute.subcharacteristics().first().map(|s| s.to_string()),
        model_id: model_id.to_string(),
    }
}

pub fn reference_dataset() -> Dataset {
    let mut rng = seeded_rng(SEED);
    let frs: Vec<RequirementRecord> = (1..=FR_COUNT)
        .map(|i| RequirementRecord {
            id: format!("FR-{i}"),
            text: format!("The system shall {} (case {i}).", ACTIONS[i % ACTIONS.len()]),
            kind: RequirementKind::Functional,
            source_doc: None,
            year: None,
        })
        .collect();
    let models: Vec<String> = reference_models().into_iter().map(|m| m.model_id).collect();
    let (scoring_frs, selection_frs) = frs.split_at(SCORING_FRS);

    let mut ordinals = std::collections::HashMap::<(String, String), usize>::new();
    let mut next = |model: &str, fr: &str| {
        let n = ordinals.entry((model.to_string(), fr.to_string())).or_insert(0);
        *n += 1;
        *n
    };

    let mut nfrs = Vec::new();
    let mut scores = Vec::new();
    let mut validity = expand(&VALIDITY_COUNTS);
    let mut applicability = expand(&APPLICABILITY_COUNTS);
    validity.shuffle(&mut rng);
    applicability.shuffle(&mut rng);
    let strata: Vec<usize> = (0..models.len()).map(|i| if i < 6 { 22 } else { 21 }).collect();
    let mut k = 0;
    for (m, model) in models.iter().enumerate() {
        for j in 0..strata[m] {
            let fr = &scoring_frs[j % scoring_frs.len()].id;
            let attribute = QualityAttribute::ALL[(m + j) % 9];
            let nfr = make_nfr(model, fr, next(model, fr), attribute);
            scores.push(ScoreRecord {
                evaluator_id: format!("E{:02}", m + 1),
                nfr_id: nfr.nfr_id.clone(),
                validity: validity[k],
                applicability: applicability[k],
                submitted_at: BASE_TIME_MS + k as i64 * 1000,
            });
            nfrs.push(nfr);
            k += 1;
        }
    }

    let mut pairs: Vec<(QualityAttribute, QualityAttribute)> = CONFUSION
        .iter()
        .flat_map(|&(llm, expert, n)| std::iter::repeat_n((llm, expert), n))
        .collect();
    pairs.shuffle(&mut rng);
    let per_model = pairs.len() / models.len();
    let mut selections = Vec::new();
    for (i, (llm, expert)) in pairs.into_iter().enumerate() {
        let model = &models[i / per_model];
        let fr = &selection_frs[i % selection_frs.len()].id;
        let nfr = make_nfr(model, fr, next(model, fr), llm);
        selections.push(SelectionRecord {
            evaluator_id: format!("E{:02}", i % 10 + 1),
            nfr_id: nfr.nfr_id.clone(),
            chosen_attribute: expert,
            submitted_at: BASE_TIME_MS + (k + i) as i64 * 1000,
        });
        nfrs.push(nfr);
    }

    let years = [8, 10, 11, 12, 13, 13, 14, 15, 16, 18];
    let evaluators = years
        .iter()
        .enumerate()
        .map(|(i, &y)| ExportedEvaluator {
            evaluator_id: format!("E{:02}", i + 1),
            years_experience: y,
            role_title: if i % 2 == 0 {
                "Software Engineer"
            } else {
                "Requirements Engineer"
            }
            .into(),
        })
        .collect();

    Dataset {
        frs,
        nfrs,
        scores,
        selections,
        evaluators,
    }
}
