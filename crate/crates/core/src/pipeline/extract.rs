//! Turning prescription text into a structured case.
//!
//! Free text goes through the gateway, which rewrites it as labeled
//! lines:
//!
//! ```text
//! Case: rx-24
//! Age: 45
//! Diagnosis: Hypertension | I10
//! Item: Amlodipin + losartan | Troysar AM | 5 mg + 50 mg | 1 tablet daily
//! ```
//!
//! JSON case records skip that step.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{template, GatewayError, LmGateway, LmRequest};
use crate::model::{parse_icd10, Diagnosis, PatientProfile, PrescriptionCase, PrescriptionItem};

const LABELS: [&str; 5] = ["Case", "Age", "Notes", "Diagnosis", "Item"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("prescription text is empty")]
    Empty,
    #[error("prescription is missing: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Structured,
    LmReformatted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredExtraction {
    pub case_id: Option<String>,
    pub patient: PatientProfile,
    pub items: Vec<PrescriptionItem>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StructuredExtraction {
    pub fn into_case(self, fallback_id: &str) -> PrescriptionCase {
        PrescriptionCase {
            case_id: self.case_id.unwrap_or_else(|| fallback_id.to_string()),
            patient: self.patient,
            items: self.items,
        }
    }
}

/// The recognized `Label: value` lines of `text`, labels in canonical
/// case, everything else dropped.
pub fn labeled_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let (label, value) = line.split_once(':')?;
            let label = LABELS.iter().find(|l| l.eq_ignore_ascii_case(label.trim()))?;
            Some(format!("{label}: {}", value.trim()))
        })
        .collect()
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"));
static STRENGTH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(mg|mcg|µg|μg|g)?\b").expect("valid regex"));

/// A strength in mg: "300mg", "0.5 g", "250 mcg".
pub fn parse_strength_mg(text: &str) -> Option<f64> {
    let c = STRENGTH.captures(text)?;
    let n: f64 = c[1].parse().ok()?;
    Some(match c.get(2).map(|m| m.as_str().to_lowercase()) {
        Some(u) if u == "g" => n * 1000.0,
        Some(u) if u != "mg" => n / 1000.0,
        _ => n,
    })
}

fn parse_item(value: &str) -> PrescriptionItem {
    let mut fields = value.split('|').map(str::trim);
    let ingredient = fields.next().unwrap_or("").to_string();
    let brand = fields.next().filter(|s| !s.is_empty()).map(str::to_string);
    let strength = fields.next().unwrap_or("");
    let instruction = fields.next().unwrap_or("").to_string();
    let parts: Vec<Option<f64>> = strength
        .split('+')
        .filter(|s| !s.trim().is_empty())
        .map(parse_strength_mg)
        .collect();
    let mut item = PrescriptionItem::new(ingredient, None, instruction);
    item.brand_text = brand;
    match parts.as_slice() {
        [single] => item.strength_mg = *single,
        many if many.len() > 1 && many.iter().all(Option::is_some) => {
            item.component_strengths_mg = many.iter().flatten().copied().collect();
        }
        _ => {}
    }
    item
}

/// Parses labeled lines into a case. Missing age, diagnoses or items are
/// reported together.
pub fn parse_labeled(text: &str) -> Result<StructuredExtraction, ExtractionError> {
    let mut case_id = None;
    let mut age = None;
    let mut notes: Vec<String> = Vec::new();
    let mut diagnoses = Vec::new();
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for line in labeled_lines(text) {
        let (label, value) = line.split_once(": ").unwrap_or((line.as_str(), ""));
        let value = value.trim();
        match label {
            "Case" if !value.is_empty() => case_id = Some(value.to_string()),
            "Age" => match NUMBER.find(value).and_then(|m| m.as_str().parse::<f64>().ok()) {
                Some(a) => age = Some(a.floor() as u32),
                None => warnings.push(format!("unreadable age {value:?}")),
            },
            "Notes" if !value.is_empty() => notes.push(value.to_string()),
            "Diagnosis" => {
                let (text, code) = value.split_once('|').unwrap_or((value, ""));
                let (text, code) = (text.trim(), code.trim());
                if text.is_empty() && code.is_empty() {
                    continue;
                }
                let icd10 = match code {
                    "" => None,
                    c => match parse_icd10(c) {
                        Ok(code) => Some(code),
                        Err(e) => {
                            warnings.push(format!("diagnosis {text:?}: {e}"));
                            None
                        }
                    },
                };
                let text = if text.is_empty() { code } else { text };
                diagnoses.push(Diagnosis {
                    text: text.to_string(),
                    icd10,
                });
            }
            "Item" => {
                let item = parse_item(value);
                if item.ingredient_name_raw.is_empty() {
                    warnings.push(format!("item without ingredient: {value:?}"));
                } else {
                    items.push(item);
                }
            }
            _ => {}
        }
    }
    let mut missing = Vec::new();
    if age.is_none() {
        missing.push("age".to_string());
    }
    if diagnoses.is_empty() {
        missing.push("diagnoses".to_string());
    }
    if items.is_empty() {
        missing.push("items".to_string());
    }
    if !missing.is_empty() {
        return Err(ExtractionError::Incomplete(missing));
    }
    let mut patient = PatientProfile::new(age.expect("checked"), diagnoses);
    if !notes.is_empty() {
        patient.notes = Some(notes.join("; "));
    }
    Ok(StructuredExtraction {
        case_id,
        patient,
        items,
        provenance: Provenance::LmReformatted,
        warnings,
    })
}

/// JSON case records pass through unchanged; anything else is
/// reformatted by the gateway and parsed.
pub fn structure_prescription(raw: &str, gateway: &LmGateway) -> Result<StructuredExtraction, ExtractionError> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(ExtractionError::Empty);
    }
    if text.starts_with('{') {
        if let Ok(case) = serde_json::from_str::<PrescriptionCase>(text) {
            return Ok(StructuredExtraction {
                case_id: Some(case.case_id),
                patient: case.patient,
                items: case.items,
                provenance: Provenance::Structured,
                warnings: Vec::new(),
            });
        }
    }
    let reply = gateway.complete(&LmRequest::new(template::STRUCTURE_PRESCRIPTION).input(text))?;
    parse_labeled(&reply.text)
}

fn fmt_mg(mg: f64) -> String {
    format!("{mg} mg")
}

/// Renders a case in the labeled-line format.
pub fn to_labeled_text(case: &PrescriptionCase) -> String {
    let mut out = vec![
        format!("Case: {}", case.case_id),
        format!("Age: {}", case.patient.age_years),
    ];
    if let Some(n) = &case.patient.notes {
        out.push(format!("Notes: {n}"));
    }
    for d in &case.patient.diagnoses {
        match &d.icd10 {
            Some(c) => out.push(format!("Diagnosis: {} | {}", d.text, c)),
            None => out.push(format!("Diagnosis: {}", d.text)),
        }
    }
    for i in &case.items {
        let strength = if !i.component_strengths_mg.is_empty() {
            i.component_strengths_mg
                .iter()
                .map(|m| fmt_mg(*m))
                .collect::<Vec<_>>()
                .join(" + ")
        } else {
            i.strength_mg.map(fmt_mg).unwrap_or_default()
        };
        out.push(format!(
            "Item: {} | {} | {} | {}",
            i.ingredient_name_raw,
            i.brand_text.as_deref().unwrap_or(""),
            strength,
            i.dose_instruction
        ));
    }
    out.join("\n")
}
