//! Requirement dataset ingestion, SRS document filtering and FR subset selection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{self, seeded_rng};

pub const SUBSET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequirementKind {
    #[serde(rename = "FR")]
    Functional,
    #[serde(rename = "NFR")]
    NonFunctional,
}

impl RequirementKind {
    /// Accepts only the documented labels; "F", "NF" and friends are rejected.
    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "fr" | "functional" => Some(RequirementKind::Functional),
            "nfr" | "non-functional" => Some(RequirementKind::NonFunctional),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRecord {
    pub id: String,
    pub text: String,
    pub kind: RequirementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Tsv,
    Csv,
}

impl InputFormat {
    fn delimiter(self) -> u8 {
        match self {
            InputFormat::Tsv => b'\t',
            InputFormat::Csv => b',',
        }
    }

    /// Guesses from the file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Malformed,
    UnknownLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the source.
    pub row: usize,
    pub raw: String,
    pub reason: RejectReason,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub records: Vec<RequirementRecord>,
    pub rejected: Vec<RejectedRow>,
    /// Duplicate texts are kept under distinct ids and only reported here.
    pub warnings: Vec<String>,
    pub total_rows: usize,
}

impl ParseOutcome {
    /// Fails on the first rejected row instead of reporting it.
    pub fn into_strict(self) -> Result<Vec<RequirementRecord>> {
        match self.rejected.into_iter().next() {
            Some(r) => Err(Error::Parse {
                row: r.row,
                raw: r.raw,
                message: r.message,
            }),
            None => Ok(self.records),
        }
    }

    pub fn count(&self, kind: RequirementKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct ColumnMap {
    id: Option<usize>,
    text: usize,
    label: usize,
    source_doc: Option<usize>,
    year: Option<usize>,
}

impl ColumnMap {
    const POSITIONAL: ColumnMap = ColumnMap {
        id: None,
        text: 0,
        label: 1,
        source_doc: Some(2),
        year: Some(3),
    };

    fn from_header(fields: &csv::StringRecord) -> Option<ColumnMap> {
        let find = |name: &str| fields.iter().position(|f| f.trim() == name);
        Some(ColumnMap {
            id: find("id"),
            text: find("text")?,
            label: find("label")?,
            source_doc: find("source_doc"),
            year: find("year"),
        })
    }
}

/// Parses a TSV/CSV requirement table.
///
/// The first row is a header only if it contains the exact column names `text`
/// and `label`; otherwise columns are positional (text, label, source_doc,
/// year). Bad rows are reported in [`ParseOutcome::rejected`], never dropped.
pub fn parse_requirements<R: Read>(mut source: R, format: InputFormat) -> Result<ParseOutcome> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<requirements stream>", e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        row: 0,
        raw: String::new(),
        message: format!("stream is not valid UTF-8: {e}"),
    })?;

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .quoting(format == InputFormat::Csv)
        .from_reader(text.as_bytes());

    let mut outcome = ParseOutcome::default();
    let mut columns = None;
    let mut seen_text: HashMap<String, String> = HashMap::new();
    let mut data_index = 0usize;
    let delimiter = char::from(format.delimiter());

    for (i, result) in reader.records().enumerate() {
        let fields = match result {
            Ok(f) => f,
            Err(e) => {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(i + 1);
                outcome.total_rows += 1;
                outcome.rejected.push(RejectedRow {
                    row,
                    raw: String::new(),
                    reason: RejectReason::Malformed,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let row = fields.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if i == 0 {
            if let Some(map) = ColumnMap::from_header(&fields) {
                columns = Some(map);
                continue;
            }
        }
        // Blank lines are not rows.
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        outcome.total_rows += 1;
        data_index += 1;
        let map = columns.unwrap_or(ColumnMap::POSITIONAL);
        let raw = fields.iter().collect::<Vec<_>>().join(&delimiter.to_string());
        let reject = |reason, message: String| RejectedRow {
            row,
            raw: raw.clone(),
            reason,
            message,
        };

        let cell = |idx: Option<usize>| idx.and_then(|i| fields.get(i)).map(str::trim).filter(|s| !s.is_empty());
        let (Some(req_text), Some(label)) = (cell(Some(map.text)), fields.get(map.label)) else {
            outcome.rejected.push(reject(
                RejectReason::Malformed,
                "expected a non-empty text column and a label column".into(),
            ));
            continue;
        };
        let Some(kind) = RequirementKind::from_label(label) else {
            outcome.rejected.push(reject(
                RejectReason::UnknownLabel,
                format!("unknown label {:?}", label.trim()),
            ));
            continue;
        };
        let year = match cell(map.year) {
            None => None,
            Some(y) => match y.parse::<i32>() {
                Ok(y) => Some(y),
                Err(_) => {
                    outcome
                        .rejected
                        .push(reject(RejectReason::Malformed, format!("bad year {y:?}")));
                    continue;
                }
            },
        };
        let id = cell(map.id)
            .map(str::to_string)
            .unwrap_or_else(|| format!("REQ-{data_index}"));
        if let Some(first) = seen_text.get(req_text) {
            outcome
                .warnings
                .push(format!("row {row}: duplicate text of {first} kept as {id}"));
        } else {
            seen_text.insert(req_text.to_string(), id.clone());
        }
        outcome.records.push(RequirementRecord {
            id,
            text: req_text.to_string(),
            kind,
            source_doc: cell(map.source_doc).map(str::to_string),
            year,
        });
    }

    let mut ids = HashSet::new();
    for r in &outcome.records {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::Validation(format!("duplicate requirement id {}", r.id)));
        }
    }
    Ok(outcome)
}

pub fn parse_requirements_file(path: &Path) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_requirements(file, InputFormat::from_path(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrsDocument {
    pub name: String,
    pub topic: String,
    pub year: i32,
    pub fr_count: u32,
}

/// The fifteen source specifications the study corpus was drawn from.
pub fn reference_srs_documents() -> Vec<SrsDocument> {
    const DOCS: [(&str, &str, i32, u32); 15] = [
        ("Email", "Statewide enterprise e-mail system", 2009, 95),
        ("GParted", "Partition editor GUI", 2010, 24),
        ("opensg 0.1", "Information management framework", 2011, 18),
        ("Split merge", "PDF manipulation", 2010, 13),
        ("Fishing Logbook", "Electronic fishing vessel logbook", 2010, 35),
        ("home 1.3", "Digital home system", 2010, 33),
        ("Gaia", "Catalog data retrieval", 2009, 27),
        ("warc III", "Archive file manipulation", 2009, 35),
        (
            "Library System",
            "System administration for an integrated library system",
            2009,
            51,
        ),
        (
            "Peppol",
            "General purpose file and archive manager application",
            2009,
            11,
        ),
        ("VUB", "Publication management system", 2008, 31),
        ("Video Search", "Search video in multiple search engines", 2009, 16),
        ("Caiso", "Black Start Capability Plan", 2008, 54),
        ("KeePass", "Password Safe", 2008, 33),
        ("Peering", "Internetworking of Content Delivery Network", 2008, 27),
    ];
    DOCS.iter()
        .map(|&(name, topic, year, fr_count)| SrsDocument {
            name: name.into(),
            topic: topic.into(),
            year,
            fr_count,
        })
        .collect()
}

/// Keeps documents with `min_year <= year <= max_year`, preserving order.
pub fn filter_srs_documents(docs: &[SrsDocument], min_year: i32, max_year: i32) -> Result<Vec<SrsDocument>> {
    if min_year > max_year {
        return Err(Error::InvalidArgument(format!(
            "min_year {min_year} is after max_year {max_year}"
        )));
    }
    Ok(docs
        .iter()
        .filter(|d| (min_year..=max_year).contains(&d.year))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "ids")]
pub enum SelectionStrategy {
    UniformRandom,
    PerDocumentStratified,
    ExplicitList(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrSubset {
    pub members: Vec<RequirementRecord>,
    pub selection_seed: u64,
    pub strategy: SelectionStrategy,
}

#[derive(Serialize, Deserialize)]
struct SubsetFile {
    format_version: u32,
    #[serde(flatten)]
    subset: FrSubset,
}

impl FrSubset {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&RequirementRecord> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Wraps an already-chosen list of FRs (for example a curated TSV).
    pub fn from_records(records: Vec<RequirementRecord>) -> Result<Self> {
        let ids = records.iter().map(|r| r.id.clone()).collect();
        select_fr_subset(&records, records.len(), SelectionStrategy::ExplicitList(ids), 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SubsetFile {
            format_version: SUBSET_FORMAT_VERSION,
            subset: self.clone(),
        })
        .expect("subset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SubsetFile = serde_json::from_str(text)?;
        if file.format_version != SUBSET_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                path: "<subset>".into(),
                found: file.format_version,
                expected: SUBSET_FORMAT_VERSION,
            });
        }
        file.subset.validate()?;
        Ok(file.subset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for m in &self.members {
            if m.kind != RequirementKind::Functional {
                return Err(Error::Validation(format!("subset member {} is not an FR", m.id)));
            }
            if !ids.insert(m.id.as_str()) {
                return Err(Error::Validation(format!("subset member {} repeated", m.id)));
            }
        }
        Ok(())
    }
}

/// Draws `count` distinct FRs. Identical inputs give an identical subset.
///
/// `PerDocumentStratified` spreads the count over `source_doc` groups so that
/// per-document counts differ by at most one, except where a document runs out
/// of FRs and its share moves to the others.
pub fn select_fr_subset(
    records: &[RequirementRecord],
    count: usize,
    strategy: SelectionStrategy,
    seed: u64,
) -> Result<FrSubset> {
    let frs: Vec<&RequirementRecord> = records
        .iter()
        .filter(|r| r.kind == RequirementKind::Functional)
        .collect();

    let members: Vec<RequirementRecord> = match &strategy {
        SelectionStrategy::ExplicitList(ids) => {
            if ids.len() != count {
                return Err(Error::InvalidArgument(format!(
                    "explicit list has {} ids but count is {count}",
                    ids.len()
                )));
            }
            let by_id: HashMap<&str, &RequirementRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
            let mut out = Vec::with_capacity(ids.len());
            for id in ids {
                let rec = by_id
                    .get(id.as_str())
                    .ok_or_else(|| Error::NotFound(format!("requirement {id}")))?;
                if rec.kind != RequirementKind::Functional {
                    return Err(Error::Validation(format!("requirement {id} is not an FR")));
                }
                out.push((*rec).clone());
            }
            out
        }
        _ if count > frs.len() => {
            return Err(Error::Capacity {
                what: "FR subset".into(),
                requested: count,
                available: frs.len(),
            })
        }
        SelectionStrategy::UniformRandom => {
            let mut rng = seeded_rng(seed);
            let mut picked = rand::seq::index::sample(&mut rng, frs.len(), count).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| frs[i].clone()).collect()
        }
        SelectionStrategy::PerDocumentStratified => stratified_by_document(&frs, count, seed),
    };

    let subset = FrSubset {
        members,
        selection_seed: seed,
        strategy,
    };
    subset.validate()?;
    Ok(subset)
}

fn stratified_by_document(frs: &[&RequirementRecord], count: usize, seed: u64) -> Vec<RequirementRecord> {
    let mut rng = seeded_rng(seed);
    // Groups keyed by first appearance so that output order is input order.
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in frs.iter().enumerate() {
        let doc = r.source_doc.as_deref().unwrap_or("");
        groups
            .entry(doc)
            .or_insert_with(|| {
                order.push(doc);
                Vec::new()
            })
            .push(i);
    }
    let capacities: Vec<usize> = order.iter().map(|d| groups[d].len()).collect();
    let quotas = util::balanced_quotas(count, &capacities, &mut rng);

    let mut chosen = Vec::with_capacity(count);
    for (doc, quota) in order.iter().zip(quotas) {
        let mut idx = groups[doc].clone();
        idx.shuffle(&mut rng);
        chosen.extend(idx.into_iter().take(quota));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| frs[i].clone()).collect()
}

/// Per-document FR counts of a subset, keyed by document name ("" when absent).
pub fn per_document_counts(subset: &FrSubset) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for m in &subset.members {
        *counts.entry(m.source_doc.clone().unwrap_or_default()).or_insert(0) += 1;
    }
    counts
}
