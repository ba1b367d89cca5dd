//! Study metrics: score distributions, exact/near/mismatch attribute
//! agreement, the 9x9 confusion matrix, per-model tables, and the dataset
//! export format the metrics are computed from.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RequirementRecord;
use crate::error::{Error, Result};
use crate::eval_service::{Evaluator, ScoreRecord, SelectionRecord};
use crate::generation::LoadedRun;
use crate::prompting::GeneratedNfr;
use crate::quality_model::{QualityAttribute, RelatednessMap, RubricDimension};
use crate::util;

pub mod reference;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub dimension: RubricDimension,
    pub total: usize,
    /// Index 0 holds the count for score 1.
    pub counts: [usize; 5],
    pub mean: f64,
    pub median: f64,
    pub proportions: [f64; 5],
}

impl ScoreDistribution {
    pub fn count(&self, score: u8) -> usize {
        self.counts[usize::from(score) - 1]
    }

    pub fn proportion(&self, score: u8) -> f64 {
        self.proportions[usize::from(score) - 1]
    }

    /// Share of records with `lo <= score <= hi`.
    pub fn share(&self, lo: u8, hi: u8) -> f64 {
        (lo..=hi).map(|s| self.proportion(s)).sum()
    }

    pub fn from_values(dimension: RubricDimension, values: &[u8]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("no {dimension} scores to summarize")));
        }
        let mut counts = [0usize; 5];
        for &v in values {
            if !(1..=5).contains(&v) {
                return Err(Error::Validation(format!("{dimension} score {v} outside 1..5")));
            }
            counts[usize::from(v) - 1] += 1;
        }
        let total = values.len();
        let sum: usize = counts.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
        let proportions = counts.map(|c| c as f64 / total as f64);
        Ok(ScoreDistribution {
            dimension,
            total,
            counts,
            mean: sum as f64 / total as f64,
            median: median_from_counts(&counts, total),
            proportions,
        })
    }
}

/// Value at 0-based rank `k` of the sorted multiset described by `counts`.
fn order_statistic(counts: &[usize; 5], k: usize) -> f64 {
    let mut seen = 0;
    for (i, c) in counts.iter().enumerate() {
        seen += c;
        if k < seen {
            return (i + 1) as f64;
        }
    }
    unreachable!("rank within total")
}

fn median_from_counts(counts: &[usize; 5], total: usize) -> f64 {
    if total % 2 == 1 {
        order_statistic(counts, total / 2)
    } else {
        (order_statistic(counts, total / 2 - 1) + order_statistic(counts, total / 2)) / 2.0
    }
}

pub fn score_distribution(records: &[ScoreRecord], dimension: RubricDimension) -> Result<ScoreDistribution> {
    let values: Vec<u8> = records
        .iter()
        .map(|r| match dimension {
            RubricDimension::Validity => r.validity,
            RubricDimension::Applicability => r.applicability,
        })
        .collect();
    ScoreDistribution::from_values(dimension, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    NearMiss,
    Mismatch,
}

pub fn classify_match(llm: QualityAttribute, expert: QualityAttribute, map: &RelatednessMap) -> MatchKind {
    if llm == expert {
        MatchKind::Exact
    } else if map.contains(llm, expert) {
        MatchKind::NearMiss
    } else {
        MatchKind::Mismatch
    }
}

/// What the metrics need to know about each generated NFR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NfrInfo {
    pub model_id: String,
    pub fr_id: String,
    pub attribute: QualityAttribute,
}

#[derive(Debug, Clone, Default)]
pub struct NfrIndex {
    map: HashMap<String, NfrInfo>,
}

impl NfrIndex {
    pub fn from_nfrs<'a>(nfrs: impl IntoIterator<Item = &'a GeneratedNfr>) -> Self {
        NfrIndex {
            map: nfrs
                .into_iter()
                .map(|n| {
                    (
                        n.nfr_id.clone(),
                        NfrInfo {
                            model_id: n.model_id.clone(),
                            fr_id: n.fr_id.clone(),
                            attribute: n.attribute,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_run(run: &LoadedRun) -> Self {
        Self::from_nfrs(run.artifacts.iter().flat_map(|a| a.entries.iter()))
    }

    pub fn get(&self, nfr_id: &str) -> Result<&NfrInfo> {
        self.map
            .get(nfr_id)
            .ok_or_else(|| Error::Integrity(format!("nfr_id {nfr_id:?} is not in any run artifact")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchBreakdown {
    pub exact: usize,
    pub near: usize,
    pub mismatch: usize,
    pub total: usize,
    pub exact_rate: f64,
    pub near_rate: f64,
    pub mismatch_rate: f64,
}

pub fn match_breakdown(
    selections: &[SelectionRecord],
    index: &NfrIndex,
    map: &RelatednessMap,
) -> Result<MatchBreakdown> {
    if selections.is_empty() {
        return Err(Error::InvalidArgument("no selections to compare".into()));
    }
    let (mut exact, mut near, mut mismatch) = (0, 0, 0);
    for s in selections {
        match classify_match(index.get(&s.nfr_id)?.attribute, s.chosen_attribute, map) {
            MatchKind::Exact => exact += 1,
            MatchKind::NearMiss => near += 1,
            MatchKind::Mismatch => mismatch += 1,
        }
    }
    let total = selections.len();
    let rate = |n: usize| n as f64 / total as f64;
    Ok(MatchBreakdown {
        exact,
        near,
        mismatch,
        total,
        exact_rate: rate(exact),
        near_rate: rate(near),
        mismatch_rate: rate(mismatch),
    })
}

/// Rows are LLM-assigned attributes, columns expert-selected, both in catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 9]; 9],
    /// Rows without any record stay all zero and are listed in `empty_rows`.
    pub row_normalized: [[f64; 9]; 9],
    pub empty_rows: Vec<QualityAttribute>,
    pub total: usize,
}

impl ConfusionMatrix {
    pub fn count(&self, llm: QualityAttribute, expert: QualityAttribute) -> usize {
        self.counts[llm.index()][expert.index()]
    }

    pub fn normalized(&self, llm: QualityAttribute, expert: QualityAttribute) -> f64 {
        self.row_normalized[llm.index()][expert.index()]
    }

    pub fn row_total(&self, llm: QualityAttribute) -> usize {
        self.counts[llm.index()].iter().sum()
    }

    pub fn diagonal_sum(&self) -> usize {
        (0..9).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(selections: &[SelectionRecord], index: &NfrIndex) -> Result<ConfusionMatrix> {
    if selections.is_empty() {
        return Err(Error::InvalidArgument("no selections to tabulate".into()));
    }
    let mut counts = [[0usize; 9]; 9];
    for s in selections {
        let llm = index.get(&s.nfr_id)?.attribute;
        counts[llm.index()][s.chosen_attribute.index()] += 1;
    }
    let mut row_normalized = [[0.0; 9]; 9];
    let mut empty_rows = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            empty_rows.push(QualityAttribute::ALL[i]);
            continue;
        }
        for (j, c) in row.iter().enumerate() {
            row_normalized[i][j] = *c as f64 / n as f64;
        }
    }
    Ok(ConfusionMatrix {
        counts,
        row_normalized,
        empty_rows,
        total: selections.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLlmRow {
    pub model_id: String,
    pub scored: usize,
    /// `None` when the model has no scored NFRs.
    pub avg_validity: Option<f64>,
    pub avg_applicability: Option<f64>,
    pub selected: usize,
    pub exact: usize,
    pub attr_accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLlmReport {
    pub rows: Vec<PerLlmRow>,
}

impl PerLlmReport {
    pub fn row(&self, model_id: &str) -> Option<&PerLlmRow> {
        self.rows.iter().find(|r| r.model_id == model_id)
    }
}

/// One row per model in `models`, plus any model that only appears in the
/// records. Models without records get explicit zero counts.
pub fn per_llm_report(
    scores: &[ScoreRecord],
    selections: &[SelectionRecord],
    index: &NfrIndex,
    models: &[String],
) -> Result<PerLlmReport> {
    #[derive(Default)]
    struct Acc {
        scored: usize,
        validity: usize,
        applicability: usize,
        selected: usize,
        exact: usize,
    }
    let mut order: Vec<String> = models.to_vec();
    let mut acc: HashMap<String, Acc> = HashMap::new();
    let touch = |id: &str, order: &mut Vec<String>| {
        if !order.iter().any(|m| m == id) {
            order.push(id.to_string());
        }
    };
    for s in scores {
        let info = index.get(&s.nfr_id)?;
        touch(&info.model_id, &mut order);
        let a = acc.entry(info.model_id.clone()).or_default();
        a.scored += 1;
        a.validity += usize::from(s.validity);
        a.applicability += usize::from(s.applicability);
    }
    for s in selections {
        let info = index.get(&s.nfr_id)?;
        touch(&info.model_id, &mut order);
        let a = acc.entry(info.model_id.clone()).or_default();
        a.selected += 1;
        if info.attribute == s.chosen_attribute {
            a.exact += 1;
        }
    }
    let rows = order
        .into_iter()
        .map(|model_id| {
            let a = acc.remove(&model_id).unwrap_or_default();
            let avg = |sum: usize| (a.scored > 0).then(|| sum as f64 / a.scored as f64);
            PerLlmRow {
                avg_validity: avg(a.validity),
                avg_applicability: avg(a.applicability),
                attr_accuracy_pct: (a.selected > 0).then(|| a.exact as f64 * 100.0 / a.selected as f64),
                model_id,
                scored: a.scored,
                selected: a.selected,
                exact: a.exact,
            }
        })
        .collect();
    Ok(PerLlmReport { rows })
}

/// Histogram series for one score dimension: (score, count) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dimension: RubricDimension,
    pub bins: Vec<(u8, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub validity: Option<ScoreDistribution>,
    pub applicability: Option<ScoreDistribution>,
    pub breakdown: Option<MatchBreakdown>,
    pub confusion: Option<ConfusionMatrix>,
    pub per_llm: PerLlmReport,
    pub histograms: Vec<Histogram>,
    /// The relatedness pairs behind the near-miss counts.
    pub relatedness_pairs: Vec<[String; 2]>,
}

/// Computes every metric over `dataset`. Empty record sets leave the
/// corresponding sections empty instead of failing.
pub fn analyze(dataset: &Dataset, map: &RelatednessMap) -> Result<MetricsReport> {
    dataset.validate()?;
    let index = NfrIndex::from_nfrs(&dataset.nfrs);
    let optional = |r: Result<ScoreDistribution>| (!dataset.scores.is_empty()).then_some(r).transpose();
    let validity = optional(score_distribution(&dataset.scores, RubricDimension::Validity))?;
    let applicability = optional(score_distribution(&dataset.scores, RubricDimension::Applicability))?;
    let (breakdown, confusion) = if dataset.selections.is_empty() {
        (None, None)
    } else {
        (
            Some(match_breakdown(&dataset.selections, &index, map)?),
            Some(confusion_matrix(&dataset.selections, &index)?),
        )
    };
    let per_llm = per_llm_report(&dataset.scores, &dataset.selections, &index, &dataset.model_ids())?;
    let histograms = [&validity, &applicability]
        .into_iter()
        .flatten()
        .map(|d| Histogram {
            dimension: d.dimension,
            bins: (1..=5).map(|s| (s, d.count(s))).collect(),
        })
        .collect();
    Ok(MetricsReport {
        validity,
        applicability,
        breakdown,
        confusion,
        per_llm,
        histograms,
        relatedness_pairs: map
            .pairs()
            .map(|p| {
                let (a, b) = p.members();
                [a.canonical_name().to_string(), b.canonical_name().to_string()]
            })
            .collect(),
    })
}

/// Percentage with one decimal, as printed in reports.
pub fn fmt_pct(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

/// Mean with two decimals, as printed in reports.
pub fn fmt_mean(mean: f64) -> String {
    format!("{mean:.2}")
}

fn bar(count: usize, max: usize) -> String {
    let width = if max == 0 { 0 } else { (count * 40).div_ceil(max) };
    "#".repeat(width)
}

/// Plain-text rendering with histogram bars.
pub fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    for d in [&report.validity, &report.applicability].into_iter().flatten() {
        let _ = writeln!(
            out,
            "{} (n={}): mean {}, median {:.1}",
            d.dimension,
            d.total,
            fmt_mean(d.mean),
            d.median
        );
        let max = d.counts.iter().copied().max().unwrap_or(0);
        for s in (1..=5).rev() {
            let _ = writeln!(
                out,
                "  {s} {:>6} {:>4} {}",
                fmt_pct(d.proportion(s)),
                d.count(s),
                bar(d.count(s), max)
            );
        }
    }
    if let Some(b) = &report.breakdown {
        let _ = writeln!(
            out,
            "attribute agreement (n={}): exact {} ({}), near miss {} ({}), mismatch {} ({})",
            b.total,
            b.exact,
            fmt_pct(b.exact_rate),
            b.near,
            fmt_pct(b.near_rate),
            b.mismatch,
            fmt_pct(b.mismatch_rate)
        );
        let pairs: Vec<String> = report
            .relatedness_pairs
            .iter()
            .map(|[a, b]| format!("{a}/{b}"))
            .collect();
        let _ = writeln!(
            out,
            "  near-miss pairs: {}",
            if pairs.is_empty() {
                "none".into()
            } else {
                pairs.join(", ")
            }
        );
    }
    if let Some(c) = &report.confusion {
        let _ = writeln!(out, "confusion matrix (rows: LLM, columns: expert)");
        let _ = writeln!(
            out,
            "  {:<24} {}",
            "",
            (1..=9).map(|i| format!("{i:>5}")).collect::<String>()
        );
        for (i, a) in QualityAttribute::ALL.iter().enumerate() {
            let cells: String = if c.empty_rows.contains(a) {
                format!("{:>5}", "-").repeat(9)
            } else {
                (0..9).map(|j| format!("{:>5.2}", c.row_normalized[i][j])).collect()
            };
            let _ = writeln!(out, "  {} {:<22} {cells}", i + 1, a.canonical_name());
        }
    }
    let _ = writeln!(
        out,
        "{:<28} {:>8} {:>13} {:>9}",
        "model", "validity", "applicability", "accuracy"
    );
    for r in &report.per_llm.rows {
        let show = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "{:<28} {:>8} {:>13} {:>9}",
            r.model_id,
            show(r.avg_validity, fmt_mean),
            show(r.avg_applicability, fmt_mean),
            show(r.attr_accuracy_pct, |p| format!("{p:.1}%")),
        );
    }
    out
}

/// Evaluator fields that leave the store: no names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedEvaluator {
    pub evaluator_id: String,
    pub years_experience: u32,
    pub role_title: String,
}

impl From<&Evaluator> for ExportedEvaluator {
    fn from(e: &Evaluator) -> Self {
        ExportedEvaluator {
            evaluator_id: e.evaluator_id.clone(),
            years_experience: e.years_experience,
            role_title: e.role_title.clone(),
        }
    }
}

/// Everything the metrics are computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub frs: Vec<RequirementRecord>,
    pub nfrs: Vec<GeneratedNfr>,
    pub scores: Vec<ScoreRecord>,
    pub selections: Vec<SelectionRecord>,
    pub evaluators: Vec<ExportedEvaluator>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format_version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

pub const DATASET_JSON: &str = "dataset.json";
pub const REPORT_JSON: &str = "report.json";

#[derive(Serialize, Deserialize)]
struct NfrRow {
    nfr_id: String,
    fr_id: String,
    model_id: String,
    attribute: QualityAttribute,
    subcharacteristic: Option<String>,
    text: String,
    justification: String,
    raw_span: String,
}

#[derive(Serialize, Deserialize)]
struct FrRow {
    id: String,
    text: String,
    kind: crate::corpus::RequirementKind,
    source_doc: Option<String>,
    year: Option<i32>,
}

impl Dataset {
    /// Model ids in first-appearance order over the NFRs.
    pub fn model_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.nfrs
            .iter()
            .filter(|n| seen.insert(n.model_id.as_str()))
            .map(|n| n.model_id.clone())
            .collect()
    }

    /// Referential checks: unique nfr ids, known FRs, resolvable records.
    pub fn validate(&self) -> Result<()> {
        let frs: HashSet<&str> = self.frs.iter().map(|f| f.id.as_str()).collect();
        let mut nfrs = HashSet::new();
        for n in &self.nfrs {
            if !nfrs.insert(n.nfr_id.as_str()) {
                return Err(Error::Integrity(format!("nfr_id {} appears twice", n.nfr_id)));
            }
            if !frs.is_empty() && !frs.contains(n.fr_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "NFR {} references unknown FR {}",
                    n.nfr_id, n.fr_id
                )));
            }
        }
        let mut keys = HashSet::new();
        for s in &self.scores {
            if !nfrs.contains(s.nfr_id.as_str()) {
                return Err(Error::Integrity(format!("score for unknown nfr_id {:?}", s.nfr_id)));
            }
            if !(1..=5).contains(&s.validity) || !(1..=5).contains(&s.applicability) {
                return Err(Error::Validation(format!("score for {} outside 1..5", s.nfr_id)));
            }
            if !keys.insert(("s", s.evaluator_id.as_str(), s.nfr_id.as_str())) {
                return Err(Error::Integrity(format!(
                    "two scores by {} for {}",
                    s.evaluator_id, s.nfr_id
                )));
            }
        }
        for s in &self.selections {
            if !nfrs.contains(s.nfr_id.as_str()) {
                return Err(Error::Integrity(format!("selection for unknown nfr_id {:?}", s.nfr_id)));
            }
            if !keys.insert(("a", s.evaluator_id.as_str(), s.nfr_id.as_str())) {
                return Err(Error::Integrity(format!(
                    "two selections by {} for {}",
                    s.evaluator_id, s.nfr_id
                )));
            }
        }
        Ok(())
    }

    /// Writes the dataset plus `report` into `dir`.
    pub fn export(&self, dir: &Path, format: ExportFormat, report: Option<&MetricsReport>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        match format {
            ExportFormat::Json => {
                let text = serde_json::to_string_pretty(&DatasetFile {
                    format_version: DATASET_FORMAT_VERSION,
                    dataset: self.clone(),
                })?;
                util::write_atomic(&dir.join(DATASET_JSON), text.as_bytes())?;
            }
            ExportFormat::Csv => self.write_csv(dir)?,
        }
        if let Some(report) = report {
            util::write_atomic(&dir.join(REPORT_JSON), serde_json::to_string_pretty(report)?.as_bytes())?;
            if format == ExportFormat::Csv {
                write_report_csv(dir, report)?;
            }
        }
        Ok(())
    }

    fn write_csv(&self, dir: &Path) -> Result<()> {
        write_csv_file(
            &dir.join("frs.csv"),
            self.frs.iter().map(|f| FrRow {
                id: f.id.clone(),
                text: f.text.clone(),
                kind: f.kind,
                source_doc: f.source_doc.clone(),
                year: f.year,
            }),
            &["id", "text", "kind", "source_doc", "year"],
        )?;
        write_csv_file(
            &dir.join("nfrs.csv"),
            self.nfrs.iter().map(|n| NfrRow {
                nfr_id: n.nfr_id.clone(),
                fr_id: n.fr_id.clone(),
                model_id: n.model_id.clone(),
                attribute: n.attribute,
                subcharacteristic: n.subcharacteristic.clone(),
                text: n.text.clone(),
                justification: n.justification.clone(),
                raw_span: n.raw_span.clone(),
            }),
            &[
                "nfr_id",
                "fr_id",
                "model_id",
                "attribute",
                "subcharacteristic",
                "text",
                "justification",
                "raw_span",
            ],
        )?;
        write_csv_file(
            &dir.join("scores.csv"),
            self.scores.iter().cloned(),
            &["evaluator_id", "nfr_id", "validity", "applicability", "submitted_at"],
        )?;
        write_csv_file(
            &dir.join("selections.csv"),
            self.selections.iter().cloned(),
            &["evaluator_id", "nfr_id", "chosen_attribute", "submitted_at"],
        )?;
        write_csv_file(
            &dir.join("evaluators.csv"),
            self.evaluators.iter().cloned(),
            &["evaluator_id", "years_experience", "role_title"],
        )
    }

    /// Reads a directory written by [`Dataset::export`] in either format.
    pub fn load(dir: &Path) -> Result<Self> {
        let json = dir.join(DATASET_JSON);
        if json.exists() {
            let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
            let file: DatasetFile = serde_json::from_str(&text)?;
            if file.format_version != DATASET_FORMAT_VERSION {
                return Err(Error::FormatVersion {
                    path: json,
                    found: file.format_version,
                    expected: DATASET_FORMAT_VERSION,
                });
            }
            return Ok(file.dataset);
        }
        if !dir.join("nfrs.csv").exists() {
            return Err(Error::NotFound(format!(
                "{} holds neither {DATASET_JSON} nor nfrs.csv",
                dir.display()
            )));
        }
        let frs: Vec<FrRow> = read_csv_file(&dir.join("frs.csv"))?;
        let nfrs: Vec<NfrRow> = read_csv_file(&dir.join("nfrs.csv"))?;
        Ok(Dataset {
            frs: frs
                .into_iter()
                .map(|f| RequirementRecord {
                    id: f.id,
                    text: f.text,
                    kind: f.kind,
                    source_doc: f.source_doc,
                    year: f.year,
                })
                .collect(),
            nfrs: nfrs
                .into_iter()
                .map(|n| GeneratedNfr {
                    nfr_id: n.nfr_id,
                    fr_id: n.fr_id,
                    text: n.text,
                    attribute: n.attribute,
                    subcharacteristic: n.subcharacteristic,
                    justification: n.justification,
                    model_id: n.model_id,
                    raw_span: n.raw_span,
                })
                .collect(),
            scores: read_csv_file(&dir.join("scores.csv"))?,
            selections: read_csv_file(&dir.join("selections.csv"))?,
            evaluators: read_csv_file(&dir.join("evaluators.csv"))?,
        })
    }
}

fn write_csv_file<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    // Explicit header so empty tables still describe their columns.
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    util::write_atomic(path, &bytes)
}

fn read_csv_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_report_csv(dir: &Path, report: &MetricsReport) -> Result<()> {
    let mut per = csv::Writer::from_writer(Vec::new());
    per.write_record([
        "model_id",
        "avg_validity",
        "avg_applicability",
        "attr_accuracy_pct",
        "scored",
        "selected",
    ])?;
    let opt = |v: Option<f64>, digits: usize| v.map(|v| format!("{v:.digits$}")).unwrap_or_default();
    for r in &report.per_llm.rows {
        per.write_record([
            r.model_id.clone(),
            opt(r.avg_validity, 2),
            opt(r.avg_applicability, 2),
            opt(r.attr_accuracy_pct, 1),
            r.scored.to_string(),
            r.selected.to_string(),
        ])?;
    }
    let path = dir.join("per_llm.csv");
    util::write_atomic(&path, &per.into_inner().map_err(|e| Error::io(&path, e.into_error()))?)?;

    if let Some(c) = &report.confusion {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["llm_attribute".to_string()];
        header.extend(QualityAttribute::ALL.iter().map(|a| a.canonical_name().to_string()));
        w.write_record(&header)?;
        for (i, a) in QualityAttribute::ALL.iter().enumerate() {
            let mut row = vec![a.canonical_name().to_string()];
            row.extend((0..9).map(|j| c.counts[i][j].to_string()));
            w.write_record(&row)?;
        }
        let path = dir.join("confusion.csv");
        util::write_atomic(&path, &w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?)?;
    }

    let mut h = csv::Writer::from_writer(Vec::new());
    h.write_record(["dimension", "score", "count"])?;
    for hist in &report.histograms {
        for (score, count) in &hist.bins {
            h.write_record([hist.dimension.to_string(), score.to_string(), count.to_string()])?;
        }
    }
    let path = dir.join("histograms.csv");
    util::write_atomic(&path, &h.into_inner().map_err(|e| Error::io(&path, e.into_error()))?)
}

/// Scores per model keyed by model id, for callers building their own tables.
pub fn scores_by_model<'a>(
    scores: &'a [ScoreRecord],
    index: &NfrIndex,
) -> Result<BTreeMap<String, Vec<&'a ScoreRecord>>> {
    let mut out: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
    for s in scores {
        out.entry(index.get(&s.nfr_id)?.model_id.clone()).or_default().push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use QualityAttribute::*;

    fn nfr(id: &str, model: &str, attr: QualityAttribute) -> GeneratedNfr {
        GeneratedNfr {
            nfr_id: id.into(),
            fr_id: "FR-1".into(),
            text: "t".into(),
            attribute: attr,
            subcharacteristic: None,
            justification: "j".into(),
            model_id: model.into(),
            raw_span: String::new(),
        }
    }

    fn sel(id: &str, attr: QualityAttribute) -> SelectionRecord {
        SelectionRecord {
            evaluator_id: "E1".into(),
            nfr_id: id.into(),
            chosen_attribute: attr,
            submitted_at: 0,
        }
    }

    fn score(id: &str, v: u8, a: u8) -> ScoreRecord {
        ScoreRecord {
            evaluator_id: "E1".into(),
            nfr_id: id.into(),
            validity: v,
            applicability: a,
            submitted_at: 0,
        }
    }

    #[test]
    fn small_distributions() {
        let d = ScoreDistribution::from_values(RubricDimension::Validity, &[1, 5]).unwrap();
        assert_eq!((d.mean, d.median), (3.0, 3.0));
        let d = ScoreDistribution::from_values(RubricDimension::Validity, &[5; 7]).unwrap();
        assert_eq!((d.mean, d.median), (5.0, 5.0));
        let d = ScoreDistribution::from_values(RubricDimension::Validity, &[1, 2, 4, 5]).unwrap();
        assert_eq!(d.median, 3.0);
        assert!(ScoreDistribution::from_values(RubricDimension::Validity, &[]).is_err());
        assert!(ScoreDistribution::from_values(RubricDimension::Validity, &[0]).is_err());
    }

    #[test]
    fn classify_examples() {
        let map = RelatednessMap::default();
        assert_eq!(classify_match(Security, Security, &map), MatchKind::Exact);
        assert_eq!(
            classify_match(PerformanceEfficiency, Reliability, &map),
            MatchKind::NearMiss
        );
        assert_eq!(
            classify_match(FunctionalSuitability, Security, &map),
            MatchKind::Mismatch
        );
    }

    #[test]
    fn per_llm_hand_fixture() {
        let nfrs = [
            nfr("a", "M", Security),
            nfr("b", "M", Security),
            nfr("c", "M", Security),
            nfr("d", "M", Usability),
            nfr("z", "Idle", Safety),
        ];
        let index = NfrIndex::from_nfrs(&nfrs);
        let scores = [score("a", 5, 5), score("b", 5, 4), score("c", 4, 4)];
        let selections = [
            sel("a", Security),
            sel("b", Security),
            sel("c", Usability),
            sel("d", Usability),
        ];
        let report = per_llm_report(&scores, &selections, &index, &["M".into(), "Idle".into()]).unwrap();
        let m = report.row("M").unwrap();
        assert_eq!(fmt_mean(m.avg_validity.unwrap()), "4.67");
        assert_eq!(m.attr_accuracy_pct, Some(75.0));
        let idle = report.row("Idle").unwrap();
        assert_eq!((idle.scored, idle.selected, idle.avg_validity), (0, 0, None));
    }

    #[test]
    fn unresolvable_selection_is_integrity_error() {
        let index = NfrIndex::from_nfrs(&[nfr("a", "M", Security)]);
        let err = match_breakdown(&[sel("nope", Security)], &index, &RelatednessMap::default()).unwrap_err();
        assert_eq!(err.code(), "integrity");
        assert!(match_breakdown(&[], &index, &RelatednessMap::default()).is_err());
    }

    #[test]
    fn zero_rows_are_flagged() {
        let index = NfrIndex::from_nfrs(&[nfr("a", "M", Security)]);
        let c = confusion_matrix(&[sel("a", Security)], &index).unwrap();
        assert_eq!(c.empty_rows.len(), 8);
        assert_eq!(c.normalized(Security, Security), 1.0);
        assert!(render_text(
            &analyze(
                &Dataset {
                    nfrs: vec![nfr("a", "M", Security)],
                    selections: vec![sel("a", Security)],
                    ..Default::default()
                },
                &RelatednessMap::default()
            )
            .unwrap()
        )
        .contains("    -"));
    }

    #[test]
    fn text_report_names_the_relatedness_pairs() {
        let ds = Dataset {
            nfrs: vec![nfr("a", "M", Security)],
            selections: vec![sel("a", Safety)],
            ..Default::default()
        };
        let text = render_text(&analyze(&ds, &RelatednessMap::default()).unwrap());
        assert!(
            text.contains("near-miss pairs:") && text.contains("Compatibility/Flexibility"),
            "{text}"
        );
        let text = render_text(&analyze(&ds, &RelatednessMap::empty()).unwrap());
        assert!(text.contains("near-miss pairs: none"), "{text}");
    }

    #[test]
    fn empty_dataset_exports_in_both_formats() {
        for format in [ExportFormat::Json, ExportFormat::Csv] {
            let dir = tempfile::tempdir().unwrap();
            let ds = Dataset::default();
            let report = analyze(&ds, &RelatednessMap::default()).unwrap();
            ds.export(dir.path(), format, Some(&report)).unwrap();
            assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
        }
    }
}
