//! Shared domain vocabulary: ICD-10 codes, age groups, prescriptions and
//! verification outcomes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default boundary between pediatric and adult patients, in years.
pub const DEFAULT_ADULT_AGE: u32 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed ICD-10 code {0:?}: expected a letter followed by two digits")]
    MalformedCode(String),
    #[error("unknown age group label {0:?}")]
    UnknownAgeGroup(String),
    #[error("invalid prescription case {case_id:?}: {reason}")]
    InvalidCase { case_id: String, reason: String },
}

/// The letter-plus-two-digits prefix of an ICD-10 code, e.g. `E11`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IcdCategory(String);

impl IcdCategory {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IcdCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for IcdCategory {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let code = parse_icd10(&value)?;
        if code.subcode.is_some() {
            return Err(ModelError::MalformedCode(value));
        }
        Ok(code.category)
    }
}

impl FromStr for IcdCategory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::try_from(s.to_string())
    }
}

impl From<IcdCategory> for String {
    fn from(c: IcdCategory) -> Self {
        c.0
    }
}

/// A parsed ICD-10 diagnosis code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Icd10Code {
    raw: String,
    category: IcdCategory,
    subcode: Option<String>,
}

impl Icd10Code {
    /// Normalized rendering (trimmed, uppercase).
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn category(&self) -> &IcdCategory {
        &self.category
    }

    pub fn subcode(&self) -> Option<&str> {
        self.subcode.as_deref()
    }
}

impl fmt::Display for Icd10Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for Icd10Code {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_icd10(s)
    }
}

impl Serialize for Icd10Code {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Icd10Code {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_icd10(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses an ICD-10 code such as `E11.9`, `I10` or `e119`.
///
/// The first three characters must be an ASCII letter followed by two
/// digits. Anything after that (an optional `.` and alphanumerics) is kept
/// as the subcode. Codes with a letter in the category position, like
/// `C4A`, are rejected.
pub fn parse_icd10(text: &str) -> Result<Icd10Code, ModelError> {
    let raw = text.trim().to_ascii_uppercase();
    let bytes = raw.as_bytes();
    if bytes.len() < 3 || !bytes[0].is_ascii_uppercase() || !bytes[1].is_ascii_digit() || !bytes[2].is_ascii_digit() {
        return Err(ModelError::MalformedCode(text.to_string()));
    }
    let rest = &raw[3..];
    let rest = rest.strip_prefix('.').unwrap_or(rest);
    if !rest.chars().all(|c| c.is_ascii_alphanumeric()) || (rest.is_empty() && raw.len() > 3) {
        return Err(ModelError::MalformedCode(text.to_string()));
    }
    let category = IcdCategory(raw[..3].to_string());
    let subcode = (!rest.is_empty()).then(|| rest.to_string());
    Ok(Icd10Code { raw, category, subcode })
}

/// True when both codes share the same three-character category.
pub fn icd_category_equal(a: &Icd10Code, b: &Icd10Code) -> bool {
    a.category == b.category
}

/// Pediatric or adult, the two partitions of the monograph data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeGroup {
    Pediatric,
    Adult,
}

impl AgeGroup {
    pub fn from_age(age_years: f64, adult_threshold: u32) -> Self {
        if age_years >= f64::from(adult_threshold) {
            AgeGroup::Adult
        } else {
            AgeGroup::Pediatric
        }
    }

    /// Label used on knowledge-graph edges (`"pediatric"` / `"adults"`).
    pub fn graph_label(self) -> &'static str {
        match self {
            AgeGroup::Pediatric => "pediatric",
            AgeGroup::Adult => "adults",
        }
    }

    /// Section heading used in monograph files.
    pub fn monograph_label(self) -> &'static str {
        match self {
            AgeGroup::Pediatric => "Pediatric Patients",
            AgeGroup::Adult => "Adults",
        }
    }

    /// Accepts the graph label, the monograph heading, and a few common
    /// synonyms, case-insensitively.
    pub fn from_label(label: &str) -> Result<Self, ModelError> {
        let norm = label.trim().to_ascii_lowercase();
        match norm.as_str() {
            "pediatric"
            | "pediatrics"
            | "pediatric patients"
            | "paediatric"
            | "paediatric patients"
            | "children"
            | "child" => Ok(AgeGroup::Pediatric),
            "adult" | "adults" | "adult patients" => Ok(AgeGroup::Adult),
            _ => Err(ModelError::UnknownAgeGroup(label.to_string())),
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.graph_label())
    }
}

impl Serialize for AgeGroup {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.graph_label())
    }
}

impl<'de> Deserialize<'de> for AgeGroup {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        AgeGroup::from_label(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icd10: Option<Icd10Code>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub age_years: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_group: Option<AgeGroup>,
    #[serde(default)]
    pub diagnoses: Vec<Diagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Set when the source prescription lacked diagnoses.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub incomplete: bool,
}

impl PatientProfile {
    pub fn new(age_years: u32, diagnoses: Vec<Diagnosis>) -> Self {
        Self {
            age_years,
            age_group: None,
            incomplete: diagnoses.is_empty(),
            diagnoses,
            notes: None,
        }
    }

    /// The explicit age group if one was recorded, otherwise the group
    /// derived from `age_years`.
    pub fn age_group(&self, adult_threshold: u32) -> AgeGroup {
        self.age_group
            .unwrap_or_else(|| AgeGroup::from_age(f64::from(self.age_years), adult_threshold))
    }

    fn check(&self, adult_threshold: u32) -> Result<(), String> {
        if let Some(group) = self.age_group {
            let derived = AgeGroup::from_age(f64::from(self.age_years), adult_threshold);
            if group != derived {
                return Err(format!(
                    "age group {group} inconsistent with age {} (adult threshold {adult_threshold})",
                    self.age_years
                ));
            }
        }
        if self.diagnoses.is_empty() && !self.incomplete {
            return Err("no diagnoses and case not marked incomplete".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionItem {
    #[serde(rename = "ingredient")]
    pub ingredient_name_raw: String,
    #[serde(default, rename = "brand", skip_serializing_if = "Option::is_none")]
    pub brand_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength_mg: Option<f64>,
    /// Per-component strengths for combination products (`A + B`), in
    /// the same order as the components.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub component_strengths_mg: Vec<f64>,
    #[serde(default)]
    pub dose_instruction: String,
}

impl PrescriptionItem {
    pub fn new(ingredient: impl Into<String>, strength_mg: Option<f64>, dose: impl Into<String>) -> Self {
        Self {
            ingredient_name_raw: ingredient.into(),
            brand_text: None,
            strength_mg,
            component_strengths_mg: Vec::new(),
            dose_instruction: dose.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionCase {
    pub case_id: String,
    pub patient: PatientProfile,
    pub items: Vec<PrescriptionItem>,
}

impl PrescriptionCase {
    pub fn validate(&self, adult_threshold: u32) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidCase {
            case_id: self.case_id.clone(),
            reason,
        };
        if self.case_id.trim().is_empty() {
            return Err(invalid("empty case_id".into()));
        }
        if self.items.is_empty() {
            return Err(invalid("no prescription items".into()));
        }
        if let Some(pos) = self.items.iter().position(|i| i.ingredient_name_raw.trim().is_empty()) {
            return Err(invalid(format!("item {pos} has an empty ingredient name")));
        }
        self.patient.check(adult_threshold).map_err(invalid)
    }
}

/// Fit of indication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndicationFit {
    Appropriate,
    Inappropriate,
    Unknown,
}

/// Fit of dosage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DosageFit {
    WithinBaseline,
    Deviates,
    NoInformation,
    NotEvaluated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitStatus {
    fi: IndicationFit,
    fd: DosageFit,
}

impl FitStatus {
    /// Builds a status, forcing `fd` to `NotEvaluated` when the indication
    /// failed.
    pub fn new(fi: IndicationFit, fd: DosageFit) -> Self {
        let fd = if fi == IndicationFit::Inappropriate {
            DosageFit::NotEvaluated
        } else {
            fd
        };
        Self { fi, fd }
    }

    pub fn fi(&self) -> IndicationFit {
        self.fi
    }

    pub fn fd(&self) -> DosageFit {
        self.fd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Appropriate,
    Inappropriate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Appropriate => "APPROPRIATE",
            Verdict::Inappropriate => "INAPPROPRIATE",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "APPROPRIATE" => Ok(Verdict::Appropriate),
            "INAPPROPRIATE" => Ok(Verdict::Inappropriate),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}
