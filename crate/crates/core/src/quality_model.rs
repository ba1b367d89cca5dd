//! ISO/IEC 25010:2023 product quality characteristics, scoring rubrics and the
//! attribute relatedness map used to separate near misses from mismatches.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the nine top-level quality characteristics.
///
/// Variant order is the catalog order and is used as the row/column order of
/// confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualityAttribute {
    FunctionalSuitability,
    PerformanceEfficiency,
    Compatibility,
    Usability,
    Reliability,
    Security,
    Maintainability,
    Flexibility,
    Safety,
}

impl QualityAttribute {
    pub const ALL: [QualityAttribute; 9] = [
        QualityAttribute::FunctionalSuitability,
        QualityAttribute::PerformanceEfficiency,
        QualityAttribute::Compatibility,
        QualityAttribute::Usability,
        QualityAttribute::Reliability,
        QualityAttribute::Security,
        QualityAttribute::Maintainability,
        QualityAttribute::Flexibility,
        QualityAttribute::Safety,
    ];

    pub fn canonical_name(self) -> &'static str {
        match self {
            QualityAttribute::FunctionalSuitability => "Functional Suitability",
            QualityAttribute::PerformanceEfficiency => "Performance Efficiency",
            QualityAttribute::Compatibility => "Compatibility",
            QualityAttribute::Usability => "Usability",
            QualityAttribute::Reliability => "Reliability",
            QualityAttribute::Security => "Security",
            QualityAttribute::Maintainability => "Maintainability",
            QualityAttribute::Flexibility => "Flexibility",
            QualityAttribute::Safety => "Safety",
        }
    }

    /// Position in the catalog, `0..9`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn subcharacteristics(self) -> &'static [&'static str] {
        match self {
            QualityAttribute::FunctionalSuitability => &[
                "Functional completeness",
                "Functional correctness",
                "Functional appropriateness",
            ],
            QualityAttribute::PerformanceEfficiency => &["Time behaviour", "Resource utilization", "Capacity"],
            QualityAttribute::Compatibility => &["Co-existence", "Interoperability"],
            QualityAttribute::Usability => &[
                "Appropriateness recognizability",
                "Learnability",
                "Operability",
                "User error protection",
                "User engagement",
                "Inclusivity",
                "User assistance",
                "Self-descriptiveness",
            ],
            QualityAttribute::Reliability => &["Faultlessness", "Availability", "Fault tolerance", "Recoverability"],
            QualityAttribute::Security => &[
                "Confidentiality",
                "Integrity",
                "Non-repudiation",
                "Accountability",
                "Authenticity",
                "Resistance",
            ],
            QualityAttribute::Maintainability => &[
                "Modularity",
                "Reusability",
                "Analysability",
                "Modifiability",
                "Testability",
            ],
            QualityAttribute::Flexibility => &["Adaptability", "Scalability", "Installability", "Replaceability"],
            QualityAttribute::Safety => &[
                "Operational constraint",
                "Risk identification",
                "Fail safe",
                "Hazard warning",
                "Safe integration",
            ],
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            QualityAttribute::FunctionalSuitability => {
                "Degree to which the product provides functions that meet stated and implied needs of intended users."
            }
            QualityAttribute::PerformanceEfficiency => {
                "Degree to which the product performs its functions within specified time and throughput parameters and is efficient in the use of resources."
            }
            QualityAttribute::Compatibility => {
                "Degree to which the product can exchange information with other products and perform its functions while sharing the same environment and resources."
            }
            QualityAttribute::Usability => {
                "Degree to which the product can be used by specified users to achieve specified goals effectively, efficiently and satisfyingly."
            }
            QualityAttribute::Reliability => {
                "Degree to which the system performs specified functions under specified conditions for a specified period of time without interruption."
            }
            QualityAttribute::Security => {
                "Degree to which the product defends against attack patterns and protects information and data from unauthorized access."
            }
            QualityAttribute::Maintainability => {
                "Degree of effectiveness and efficiency with which the product can be modified, corrected or adapted by its maintainers."
            }
            QualityAttribute::Flexibility => {
                "Degree to which the product can be adapted to changes in its requirements, contexts of use or system environment."
            }
            QualityAttribute::Safety => {
                "Degree to which the product, under defined conditions, avoids a state in which human life, health, property or the environment is endangered."
            }
        }
    }

    pub fn descriptor(self) -> AttributeDescriptor {
        AttributeDescriptor {
            canonical_name: self.canonical_name().to_string(),
            subcharacteristics: self.subcharacteristics().iter().map(|s| s.to_string()).collect(),
            description: self.description().to_string(),
        }
    }
}

impl fmt::Display for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl FromStr for QualityAttribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        resolve_attribute(s)
    }
}

impl Serialize for QualityAttribute {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for QualityAttribute {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        resolve_attribute(&s).map_err(serde::de::Error::custom)
    }
}

/// Catalog entry as exposed to prompts and the evaluation API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub canonical_name: String,
    pub subcharacteristics: Vec<String>,
    pub description: String,
}

/// The nine characteristics in catalog order.
pub fn attribute_catalog() -> Vec<AttributeDescriptor> {
    QualityAttribute::ALL.iter().map(|a| a.descriptor()).collect()
}

fn normalize(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Case- and whitespace-insensitive lookup of a canonical characteristic name.
/// No fuzzy matching: "Portability" and "Performance" are not found.
pub fn resolve_attribute(name: &str) -> Result<QualityAttribute> {
    let wanted = normalize(name);
    QualityAttribute::ALL
        .into_iter()
        .find(|a| normalize(a.canonical_name()) == wanted)
        .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricDimension {
    Validity,
    Applicability,
}

impl fmt::Display for RubricDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RubricDimension::Validity => f.write_str("validity"),
            RubricDimension::Applicability => f.write_str("applicability"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricLevel {
    pub dimension: RubricDimension,
    pub score: u8,
    pub label: String,
    pub definition: String,
}

const APPLICABILITY_LEVELS: [(&str, &str); 5] = [
    (
        "Not Applicable",
        "Completely unsuitable and unrelated to the NFR or FR.",
    ),
    ("Barely Applicable", "Minimal or tangential relevance to the FR."),
    ("Somewhat Applicable", "Moderately relevant, but with questionable fit."),
    ("Mostly Applicable", "Strong fit with minor doubts or edge cases."),
    ("Perfectly Applicable", "Exact and ideal match for the NFR and FR."),
];

const VALIDITY_LEVELS: [(&str, &str); 5] = [
    ("Invalid", "Incoherent, irrelevant, or contradictory to the FR."),
    (
        "Barely Valid",
        "Major flaws present, only partially relevant to the FR.",
    ),
    (
        "Partially Valid",
        "Somewhat clear but with noticeable issues or inconsistencies.",
    ),
    ("Mostly Valid", "Clear and relevant, with only minor flaws."),
    (
        "Fully Valid",
        "Specific, achievable, and perfectly justified in the context of the FR.",
    ),
];

/// Scoring rubric for one dimension, levels 1 through 5 in order.
pub fn rubric(dimension: RubricDimension) -> Vec<RubricLevel> {
    let levels = match dimension {
        RubricDimension::Validity => &VALIDITY_LEVELS,
        RubricDimension::Applicability => &APPLICABILITY_LEVELS,
    };
    levels
        .iter()
        .zip(1u8..)
        .map(|((label, definition), score)| RubricLevel {
            dimension,
            score,
            label: label.to_string(),
            definition: definition.to_string(),
        })
        .collect()
}

/// Unordered pair of distinct attributes, stored with the lower catalog index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributePair(QualityAttribute, QualityAttribute);

impl AttributePair {
    pub fn new(a: QualityAttribute, b: QualityAttribute) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "an attribute cannot be related to itself ({a})"
            )));
        }
        Ok(if a < b {
            AttributePair(a, b)
        } else {
            AttributePair(b, a)
        })
    }

    pub fn members(self) -> (QualityAttribute, QualityAttribute) {
        (self.0, self.1)
    }
}

/// Set of attribute pairs whose confusion counts as a near miss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelatednessMap {
    pairs: BTreeSet<AttributePair>,
}

impl Default for RelatednessMap {
    /// The first two pairs are the near-miss and confusion examples observed in
    /// expert review; the rest come from overlapping subcharacteristics.
    fn default() -> Self {
        use QualityAttribute::*;
        let pairs = [
            (PerformanceEfficiency, Reliability),
            (Flexibility, Compatibility),
            (Usability, FunctionalSuitability),
            (Security, Reliability),
            (Maintainability, Flexibility),
            (Safety, Security),
            (Safety, Reliability),
        ];
        RelatednessMap::from_pairs(pairs).expect("default pairs are distinct")
    }
}

impl RelatednessMap {
    pub fn empty() -> Self {
        RelatednessMap { pairs: BTreeSet::new() }
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (QualityAttribute, QualityAttribute)>,
    {
        let pairs = pairs
            .into_iter()
            .map(|(a, b)| AttributePair::new(a, b))
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(RelatednessMap { pairs })
    }

    /// Parses the override file format: a JSON list of two-element name arrays.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("relatedness map: {e}")))?;
        let mut pairs = Vec::with_capacity(raw.len());
        for (i, entry) in raw.iter().enumerate() {
            let [a, b] = entry.as_slice() else {
                return Err(Error::Validation(format!(
                    "relatedness map entry {i} must have exactly two names, got {}",
                    entry.len()
                )));
            };
            pairs.push((resolve_attribute(a)?, resolve_attribute(b)?));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<[&str; 2]> = self
            .pairs
            .iter()
            .map(|p| [p.0.canonical_name(), p.1.canonical_name()])
            .collect();
        serde_json::to_string_pretty(&raw).expect("plain strings serialize")
    }

    pub fn pairs(&self) -> impl Iterator<Item = AttributePair> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: QualityAttribute, b: QualityAttribute) -> bool {
        AttributePair::new(a, b)
            .map(|p| self.pairs.contains(&p))
            .unwrap_or(false)
    }
}

/// True iff `{a, b}` is a related pair. Equal attributes are an argument error:
/// they are an exact match, not a related one.
pub fn are_related(a: QualityAttribute, b: QualityAttribute, map: &RelatednessMap) -> Result<bool> {
    let pair = AttributePair::new(a, b)?;
    Ok(map.pairs.contains(&pair))
}
