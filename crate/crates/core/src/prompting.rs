//! Generation prompt assembly and structured response parsing.
//!
//! A prompt is a sequence of independently toggleable technique sections
//! followed by the FR block. Sections always appear in [`Technique::ALL`]
//! order, so enabling a technique inserts its section and leaves every other
//! byte of the prompt unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::quality_model::{resolve_attribute, QualityAttribute};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    RoleAssignment,
    TaskClarity,
    StructuredOutput,
    ExampleGuidance,
    ConstraintEnforcement,
    ContextualGrounding,
    IterativeRefinement,
    JustificationRequirement,
    InputFlexibility,
    ToneAndStyle,
}

impl Technique {
    pub const ALL: [Technique; 10] = [
        Technique::RoleAssignment,
        Technique::TaskClarity,
        Technique::StructuredOutput,
        Technique::ExampleGuidance,
        Technique::ConstraintEnforcement,
        Technique::ContextualGrounding,
        Technique::IterativeRefinement,
        Technique::JustificationRequirement,
        Technique::InputFlexibility,
        Technique::ToneAndStyle,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Technique::RoleAssignment => "Role Assignment",
            Technique::TaskClarity => "Task Clarity and Specificity",
            Technique::StructuredOutput => "Structured Output Format",
            Technique::ExampleGuidance => "Example-Based Guidance",
            Technique::ConstraintEnforcement => "Constraint Enforcement",
            Technique::ContextualGrounding => "Contextual Grounding",
            Technique::IterativeRefinement => "Iterative Refinement Instructions",
            Technique::JustificationRequirement => "Justification Requirement",
            Technique::InputFlexibility => "Input Flexibility",
            Technique::ToneAndStyle => "Tone and Style Direction",
        }
    }

    pub fn all() -> BTreeSet<Technique> {
        Technique::ALL.into_iter().collect()
    }

    /// The two-technique configuration that produced vague output in early trials.
    pub fn basic() -> BTreeSet<Technique> {
        [Technique::RoleAssignment, Technique::ContextualGrounding]
            .into_iter()
            .collect()
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// An FR as it is shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrRef {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarNfr {
    pub attribute: QualityAttribute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub nfr: String,
    pub justification: String,
}

/// Worked FR to NFRs example shown under example-based guidance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub fr: FrRef,
    pub nfrs: Vec<ExemplarNfr>,
}

impl Default for Exemplar {
    fn default() -> Self {
        use QualityAttribute::*;
        let nfr = |attribute, sub: &str, nfr: &str, justification: &str| ExemplarNfr {
            attribute,
            subcharacteristic: Some(sub.to_string()),
            nfr: nfr.to_string(),
            justification: justification.to_string(),
        };
        Exemplar {
            fr: FrRef {
                id: "EX-1".into(),
                text: "The system shall allow registered users to log in with a username and password.".into(),
            },
            nfrs: vec![
                nfr(
                    Security,
                    "Confidentiality",
                    "The system shall store passwords only as salted hashes using an algorithm with a work factor of at least 10, and shall transmit credentials exclusively over TLS 1.2 or higher.",
                    "EX-1 handles user credentials, so their confidentiality must be protected at rest and in transit.",
                ),
                nfr(
                    Security,
                    "Resistance",
                    "The system shall lock an account for 15 minutes after 5 consecutive failed login attempts.",
                    "Password login in EX-1 is exposed to brute-force guessing, which attempt limiting mitigates.",
                ),
                nfr(
                    PerformanceEfficiency,
                    "Time behaviour",
                    "The system shall complete 95% of login requests within 2 seconds under a load of 500 concurrent users.",
                    "Login in EX-1 is the entry point for every session, so its latency directly affects all users.",
                ),
                nfr(
                    Usability,
                    "User error protection",
                    "The system shall display an error message within 1 second of a failed login that does not reveal whether the username or the password was incorrect.",
                    "EX-1 involves user-entered credentials; feedback must help users recover without leaking account information.",
                ),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub techniques: BTreeSet<Technique>,
    pub frs: Vec<FrRef>,
    #[serde(default)]
    pub exemplar: Exemplar,
}

impl PromptSpec {
    pub fn new(techniques: BTreeSet<Technique>, frs: Vec<FrRef>) -> Self {
        PromptSpec {
            techniques,
            frs,
            exemplar: Exemplar::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frs.is_empty() {
            return Err(Error::InvalidArgument("prompt needs at least one FR".into()));
        }
        Ok(())
    }
}

/// Technique set and exemplar without the FRs; fingerprinted per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub techniques: BTreeSet<Technique>,
    #[serde(default)]
    pub exemplar: Exemplar,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            techniques: Technique::all(),
            exemplar: Exemplar::default(),
        }
    }
}

impl PromptTemplate {
    pub fn spec_for(&self, frs: Vec<FrRef>) -> PromptSpec {
        PromptSpec {
            techniques: self.techniques.clone(),
            frs,
            exemplar: self.exemplar.clone(),
        }
    }

    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("template serializes");
        util::sha256_hex(&[b"prompt-template/v1", &canonical])
    }
}

/// Wire form of one generated NFR, the structured-output contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub fr_id: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub nfr: String,
    pub justification: String,
}

const SCHEMA_SKELETON: &str = r#"[
  {
    "fr_id": "<id of the FR this NFR derives from>",
    "attribute": "<exactly one of the nine characteristic names>",
    "subcharacteristic": "<optional subcharacteristic name>",
    "nfr": "<the non-functional requirement statement>",
    "justification": "<why this NFR follows from the FR>"
  }
]"#;

fn technique_section(t: Technique, spec: &PromptSpec) -> String {
    match t {
        Technique::RoleAssignment => "You are a senior software quality engineer specializing in requirements engineering and the ISO/IEC 25010:2023 product quality model.".to_string(),
        Technique::TaskClarity => "Task: for each functional requirement (FR) listed at the end of this message, derive the non-functional requirements (NFRs) it implies. Each NFR must be aligned with exactly one ISO/IEC 25010:2023 quality characteristic. Do not restate the FR itself and do not invent new functionality.".to_string(),
        Technique::StructuredOutput => format!(
            "Output format: respond with a single JSON array and nothing else. Each element is an object with the fields shown below. \"subcharacteristic\" may be omitted; every other field is required and must be a non-empty string.\n```json\n{SCHEMA_SKELETON}\n```"
        ),
        Technique::ExampleGuidance => {
            let ex = &spec.exemplar;
            let entries: Vec<SchemaEntry> = ex
                .nfrs
                .iter()
                .map(|n| SchemaEntry {
                    fr_id: ex.fr.id.clone(),
                    attribute: n.attribute.canonical_name().to_string(),
                    subcharacteristic: n.subcharacteristic.clone(),
                    nfr: n.nfr.clone(),
                    justification: n.justification.clone(),
                })
                .collect();
            format!(
                "Example. Given the FR\n[{}] {}\na good answer is:\n```json\n{}\n```",
                ex.fr.id,
                ex.fr.text,
                serde_json::to_string_pretty(&entries).expect("entries serialize")
            )
        }
        Technique::ConstraintEnforcement => "Constraints: every NFR must be specific and testable. State a measurable threshold such as a time limit, a percentage, a count or a standard to comply with. Avoid vague wording like \"fast\", \"user-friendly\" or \"secure\" unless it is followed by a verifiable criterion.".to_string(),
        Technique::ContextualGrounding => {
            let mut s = String::from("Quality model: classify every NFR under one of these ISO/IEC 25010:2023 characteristics (subcharacteristics in parentheses):");
            for a in QualityAttribute::ALL {
                s.push_str(&format!(
                    "\n- {} ({})",
                    a.canonical_name(),
                    a.subcharacteristics().join(", ")
                ));
            }
            s
        }
        Technique::IterativeRefinement => "Method: work through the FRs one at a time. For each FR, analyse what it does, decide which characteristics genuinely apply to it, and generate NFRs only for those characteristics. Skip characteristics that are not relevant rather than padding the answer.".to_string(),
        Technique::JustificationRequirement => "Justification: for every NFR, give a justification that links it to specific characteristics of its FR, referring to the FR by its id.".to_string(),
        Technique::InputFlexibility => "Input: there may be one FR or many. Handle each FR independently and tag every NFR with the fr_id it was derived from.".to_string(),
        Technique::ToneAndStyle => "Style: write in formal technical language using \"shall\" statements, as in a software requirements specification.".to_string(),
    }
}

fn fr_block(frs: &[FrRef]) -> String {
    let mut s = String::from("Functional requirements:");
    for fr in frs {
        s.push_str(&format!("\n[{}] {}", fr.id, fr.text));
    }
    s
}

/// Renders the prompt. A pure function of `spec`.
pub fn build_prompt(spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    let mut out = String::new();
    for t in Technique::ALL {
        if spec.techniques.contains(&t) {
            out.push_str(&technique_section(t, spec));
            out.push_str("\n\n");
        }
    }
    out.push_str(&fr_block(&spec.frs));
    out.push('\n');
    Ok(out)
}

/// The section a technique contributes, including its trailing separator.
pub fn section_text(t: Technique, spec: &PromptSpec) -> String {
    format!("{}\n\n", technique_section(t, spec))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedNfr {
    pub nfr_id: String,
    pub fr_id: String,
    pub text: String,
    pub attribute: QualityAttribute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub justification: String,
    pub model_id: String,
    pub raw_span: String,
}

impl GeneratedNfr {
    pub fn to_schema_entry(&self) -> SchemaEntry {
        SchemaEntry {
            fr_id: self.fr_id.clone(),
            attribute: self.attribute.canonical_name().to_string(),
            subcharacteristic: self.subcharacteristic.clone(),
            nfr: self.text.clone(),
            justification: self.justification.clone(),
        }
    }
}

pub fn nfr_id(model_id: &str, fr_id: &str, ordinal: usize) -> String {
    format!("{model_id}/{fr_id}/{ordinal}")
}

/// Serializes NFRs into the structured-output contract.
pub fn to_schema_json(nfrs: &[GeneratedNfr]) -> String {
    let entries: Vec<SchemaEntry> = nfrs.iter().map(GeneratedNfr::to_schema_entry).collect();
    serde_json::to_string_pretty(&entries).expect("entries serialize")
}

/// What a response is checked against: the producing model and the FRs that
/// were in the request.
#[derive(Debug, Clone)]
pub struct ResponseContext {
    pub model_id: String,
    pub fr_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRejection {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr_id: Option<String>,
    pub reason: String,
    pub raw_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub nfrs: Vec<GeneratedNfr>,
    pub rejections: Vec<EntryRejection>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("no structured block in response: {reason}")]
pub struct ParseFailure {
    pub reason: String,
    pub raw: String,
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // Skip the info string ("json", "JSON", ...).
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                blocks.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => break,
        }
    }
    blocks
}

fn first_json_array(text: &str) -> Option<Vec<Value>> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            return Some(items);
        }
    }
    None
}

fn extract_structured_block(raw: &str) -> Option<Vec<Value>> {
    fenced_blocks(raw)
        .into_iter()
        .find_map(first_json_array)
        .or_else(|| first_json_array(raw))
}

fn required_str<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> std::result::Result<&'a str, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(format!("missing field \"{key}\"")),
        Some(Value::String(s)) if s.trim().is_empty() => Err(format!("empty {key}")),
        Some(Value::String(s)) => Ok(s.trim()),
        Some(_) => Err(format!("field \"{key}\" is not a string")),
    }
}

/// Extracts the first JSON array (bare or fenced) and validates each entry.
///
/// Invalid entries are returned as rejections next to the accepted ones; only
/// a response without any structured block is a [`ParseFailure`].
pub fn parse_llm_response(raw: &str, ctx: &ResponseContext) -> std::result::Result<ParsedResponse, ParseFailure> {
    let Some(items) = extract_structured_block(raw) else {
        return Err(ParseFailure {
            reason: "no JSON array found".into(),
            raw: raw.to_string(),
        });
    };
    let known: BTreeSet<&str> = ctx.fr_ids.iter().map(String::as_str).collect();
    let mut ordinals: HashMap<String, usize> = HashMap::new();
    let mut nfrs = Vec::new();
    let mut rejections = Vec::new();

    for (index, item) in items.iter().enumerate() {
        let raw_span = serde_json::to_string(item).expect("values serialize");
        let Value::Object(obj) = item else {
            rejections.push(EntryRejection {
                index,
                fr_id: None,
                reason: "entry is not an object".into(),
                raw_span,
            });
            continue;
        };
        let fr_id = obj.get("fr_id").and_then(Value::as_str).map(|s| s.trim().to_string());
        let checked = (|| {
            let fr_id = required_str(obj, "fr_id")?;
            if !known.contains(fr_id) {
                return Err(format!("unknown fr_id {fr_id:?}"));
            }
            let attr_name = required_str(obj, "attribute")?;
            let attribute = resolve_attribute(attr_name).map_err(|_| format!("unknown attribute {attr_name:?}"))?;
            let text = required_str(obj, "nfr")?;
            let justification = required_str(obj, "justification")?;
            let subcharacteristic = match obj.get("subcharacteristic") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) if s.trim().is_empty() => None,
                Some(Value::String(s)) => Some(s.trim().to_string()),
                Some(_) => return Err("field \"subcharacteristic\" is not a string".to_string()),
            };
            Ok((
                fr_id.to_string(),
                attribute,
                text.to_string(),
                justification.to_string(),
                subcharacteristic,
            ))
        })();
        match checked {
            Ok((fr_id, attribute, text, justification, subcharacteristic)) => {
                let ordinal = ordinals.entry(fr_id.clone()).or_insert(0);
                *ordinal += 1;
                nfrs.push(GeneratedNfr {
                    nfr_id: nfr_id(&ctx.model_id, &fr_id, *ordinal),
                    fr_id,
                    text,
                    attribute,
                    subcharacteristic,
                    justification,
                    model_id: ctx.model_id.clone(),
                    raw_span,
                });
            }
            Err(reason) => rejections.push(EntryRejection {
                index,
                fr_id,
                reason,
                raw_span,
            }),
        }
    }
    Ok(ParsedResponse {
        nfrs,
        rejections,
        raw: raw.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advisory {
    MissingMeasurableThreshold,
    JustificationDoesNotReferenceFr,
}

impl fmt::Display for Advisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Advisory::MissingMeasurableThreshold => f.write_str("missing measurable threshold"),
            Advisory::JustificationDoesNotReferenceFr => f.write_str("justification does not reference the FR"),
        }
    }
}

const COMPARATOR_PHRASES: &[&str] = &[
    "at least",
    "at most",
    "no more than",
    "no less than",
    "less than",
    "more than",
    "greater than",
    "fewer than",
    "up to",
    "not exceed",
    "maximum of",
    "minimum of",
];
const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "twelve", "twenty",
    "hundred", "thousand", "million", "percent",
];
const STOPWORDS: &[&str] = &[
    "the", "shall", "should", "must", "will", "system", "with", "that", "this", "from", "have", "into", "their",
    "which", "when", "able", "allow", "allows", "each", "every", "only", "also", "such", "than", "they", "them",
    "there", "these", "those", "being", "been", "were", "what",
];

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn has_threshold(text: &str) -> bool {
    if text
        .chars()
        .any(|c| c.is_ascii_digit() || matches!(c, '%' | '<' | '>' | '≤' | '≥'))
    {
        return true;
    }
    let lower = text.to_lowercase();
    COMPARATOR_PHRASES.iter().any(|p| lower.contains(p)) || words(text).any(|w| NUMBER_WORDS.contains(&w.as_str()))
}

fn content_words(text: &str) -> BTreeSet<String> {
    words(text)
        .filter(|w| w.chars().count() >= 4 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn references_fr(justification: &str, fr_id: &str, fr_text: &str) -> bool {
    let lower = justification.to_lowercase();
    if !fr_id.is_empty() && lower.contains(&fr_id.to_lowercase()) {
        return true;
    }
    if lower.contains("functional requirement") || words(justification).any(|w| w == "fr") {
        return true;
    }
    let fr_words = content_words(fr_text);
    content_words(justification).iter().any(|w| fr_words.contains(w))
}

/// Non-blocking quality advisories for a generated NFR.
pub fn lint_nfr(nfr: &GeneratedNfr, fr_text: &str) -> Vec<Advisory> {
    let mut out = Vec::new();
    if !has_threshold(&nfr.text) {
        out.push(Advisory::MissingMeasurableThreshold);
    }
    if !references_fr(&nfr.justification, &nfr.fr_id, fr_text) {
        out.push(Advisory::JustificationDoesNotReferenceFr);
    }
    out
}

/// Advisory counts over a set of NFRs, for run summaries.
pub fn lint_summary<'a, I>(nfrs: I, fr_text: impl Fn(&str) -> Option<&'a str>) -> BTreeMap<Advisory, usize>
where
    I: IntoIterator<Item = &'a GeneratedNfr>,
{
    let mut counts = BTreeMap::new();
    for n in nfrs {
        for a in lint_nfr(n, fr_text(&n.fr_id).unwrap_or("")) {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    counts
}
