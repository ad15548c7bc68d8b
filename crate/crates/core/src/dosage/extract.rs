//! Rule-based dose-phrase extraction used by the offline provider, and
//! the reply format shared with remote models.

use std::collections::HashSet;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoseKind {
    #[serde(rename = "INITIAL_DOSAGE")]
    Initial,
    #[serde(rename = "SPECIFIC_DOSAGE")]
    Specific,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedDosage {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: DoseKind,
    #[serde(default)]
    pub age_specific: Option<String>,
    #[serde(default)]
    pub administration: Option<String>,
    #[serde(default)]
    pub indication: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionOutput {
    pub dosages: Vec<ExtractedDosage>,
}

impl ExtractionOutput {
    /// Parses a model reply, tolerating prose or code fences around the
    /// JSON object.
    pub fn parse(reply: &str) -> Result<Self, String> {
        let start = reply.find('{').ok_or("reply contains no JSON object")?;
        let end = reply.rfind('}').ok_or("reply contains no JSON object")?;
        if end < start {
            return Err("reply contains no JSON object".into());
        }
        serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())
    }
}

const ROUTES: &[&str] = &[
    "oral",
    "intravenous",
    "iv",
    "intramuscular",
    "im",
    "subcutaneous",
    "sub-q",
    "topical",
    "rectal",
    "inhalation",
    "oral inhalation",
    "intranasal",
    "nasal",
    "transdermal",
    "ophthalmic",
    "sublingual",
    "buccal",
    "vaginal",
];

static QUANTITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b\d+(?:\.\d+)?(?:\s*(?:-|to|or)\s*\d+(?:\.\d+)?)?[\s-]*(?:mg|g|ml|mcg|units?|iu|meq|mmol)\b")
        .expect("valid regex")
});

static AGE_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:children|adolescents|adults|infants|neonates|pediatric|geriatric|elderly)\b|years?|months?|\bage\b",
    )
    .expect("valid regex")
});

static CONDITIONAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:(?P<keep>(?:if|when|after|unless)\s+[^,]+)|(?:in|for)\s+(?P<who>(?:patients|those|individuals|children|adults|women|men)\b[^,]*)),\s*(?P<dose>.+)$",
    )
    .expect("valid regex")
});

fn route_of(text: &str) -> Option<String> {
    let t = text.trim().trim_end_matches(['.', ':']).trim().to_lowercase();
    ROUTES.contains(&t.as_str()).then_some(t)
}

fn is_age_label(text: &str) -> bool {
    text.chars().count() <= 80 && AGE_LABEL.is_match(text) && !QUANTITY.is_match(text)
}

fn squash(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased, whitespace-collapsed, trailing ellipses and punctuation
/// removed.
fn clean_phrase(text: &str) -> String {
    let mut s = squash(text).to_lowercase();
    loop {
        let t = s.trim_end_matches(['.', '…', ',', ';', ':', ' ']).to_string();
        if t == s {
            break;
        }
        s = t;
    }
    s.trim().to_string()
}

fn segments(text: &str) -> Vec<&str> {
    text.split('\n')
        .flat_map(|l| l.split(". "))
        .flat_map(|l| l.split(';'))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Extracts dose phrases from one disease's route/context → text map.
///
/// The first unconditional phrase for each (route, age label) pair is the
/// initial dosage; phrases that open with a condition are specific
/// dosages carrying that condition; later unconditional phrases are
/// specific dosages without one.
pub fn extract_dosages(contexts: &IndexMap<String, String>) -> Vec<ExtractedDosage> {
    let mut out: Vec<ExtractedDosage> = Vec::new();
    let mut initial_seen: HashSet<(Option<String>, Option<String>)> = HashSet::new();
    for (context, text) in contexts {
        let mut route = route_of(context);
        let mut age: Option<String> = None;
        for seg in segments(text) {
            if let Some(r) = route_of(seg) {
                route = Some(r);
                continue;
            }
            let mut body = seg;
            if let Some((label, rest)) = seg.split_once(':') {
                if is_age_label(label) {
                    age = Some(clean_phrase(label));
                    body = rest;
                }
            }
            let body = body.trim();
            if !QUANTITY.is_match(body) {
                continue;
            }
            let (kind, indication, dose) = match CONDITIONAL.captures(body) {
                Some(c) if QUANTITY.is_match(&c["dose"]) => {
                    let cond = c.name("keep").or(c.name("who")).expect("one branch matched");
                    (
                        DoseKind::Specific,
                        Some(clean_phrase(cond.as_str())),
                        clean_phrase(&c["dose"]),
                    )
                }
                _ => {
                    let key = (route.clone(), age.clone());
                    let kind = if initial_seen.insert(key) {
                        DoseKind::Initial
                    } else {
                        DoseKind::Specific
                    };
                    (kind, None, clean_phrase(body))
                }
            };
            if dose.is_empty() {
                continue;
            }
            let entry = ExtractedDosage {
                name: dose,
                kind,
                age_specific: age.clone(),
                administration: route.clone(),
                indication,
            };
            if !out.contains(&entry) {
                out.push(entry);
            }
        }
    }
    out
}
