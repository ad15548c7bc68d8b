//! Ingredient resolution and indication checking at the ICD-10 category
//! level.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::gateway::{template, GatewayError, LmGateway, LmRequest};
use crate::model::{parse_icd10, Diagnosis, IcdCategory, IndicationFit};
use crate::monograph::DrugMonograph;

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IcdError {
    #[error("ICD-10 codes needed from the language model, but it is unavailable: {0}")]
    LmUnavailable(String),
}

/// Lowercase, trim, collapse whitespace, strip diacritics.
pub fn normalize_name(text: &str) -> String {
    let stripped: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| match c {
            'đ' | 'Đ' => 'd',
            c => c,
        })
        .collect();
    stripped.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `1 - levenshtein / max_len` over character counts of normalized names.
pub fn similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(&a, &b) as f64 / max_len as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMethod {
    Exact,
    Fuzzy,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngredientMatch {
    pub query: String,
    pub matched_ingredient: Option<String>,
    pub score: f64,
    pub method: MatchMethod,
}

/// Resolves `query` against `corpus`. Ties on score go to the
/// lexicographically smallest candidate.
pub fn fuzzy_match<S: AsRef<str>>(query: &str, corpus: &[S], threshold: f64) -> IngredientMatch {
    let q = normalize_name(query);
    let mut best: Option<(f64, &str)> = None;
    for cand in corpus {
        let cand = cand.as_ref();
        if normalize_name(cand) == q {
            let better = match best {
                Some((s, name)) => s < 1.0 || cand < name,
                None => true,
            };
            if better {
                best = Some((1.0, cand));
            }
            continue;
        }
        let s = similarity(&q, cand);
        let better = match best {
            Some((bs, name)) => s > bs || (s == bs && cand < name),
            None => true,
        };
        if better {
            best = Some((s, cand));
        }
    }
    match best {
        Some((score, name)) if normalize_name(name) == q => IngredientMatch {
            query: query.to_string(),
            matched_ingredient: Some(name.to_string()),
            score: 1.0,
            method: MatchMethod::Exact,
        }
        .with_score(score),
        Some((score, name)) if score >= threshold => IngredientMatch {
            query: query.to_string(),
            matched_ingredient: Some(name.to_string()),
            score,
            method: MatchMethod::Fuzzy,
        },
        Some((score, _)) => IngredientMatch {
            query: query.to_string(),
            matched_ingredient: None,
            score,
            method: MatchMethod::None,
        },
        None => IngredientMatch {
            query: query.to_string(),
            matched_ingredient: None,
            score: 0.0,
            method: MatchMethod::None,
        },
    }
}

impl IngredientMatch {
    fn with_score(mut self, score: f64) -> Self {
        debug_assert_eq!(score, 1.0);
        self.score = score;
        self
    }
}

/// Splits a prescribed ingredient field into its components:
/// `"Amlodipin + losartan"` → `["Amlodipin", "losartan"]`, dropping
/// parenthesized abbreviations such as `(TDF)`.
pub fn ingredient_components(raw: &str) -> Vec<String> {
    raw.split('+')
        .map(|part| {
            let mut out = String::new();
            let mut depth = 0usize;
            for c in part.chars() {
                match c {
                    '(' | '[' => depth += 1,
                    ')' | ']' => depth = depth.saturating_sub(1),
                    c if depth == 0 => out.push(c),
                    _ => {}
                }
            }
            out.split_whitespace().collect::<Vec<_>>().join(" ")
        })
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeSource {
    Database,
    LanguageModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageCodes {
    pub categories: BTreeSet<IcdCategory>,
    pub source: CodeSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn collect_categories<'a>(
    codes: impl IntoIterator<Item = &'a str>,
    into: &mut BTreeSet<IcdCategory>,
    warnings: &mut Vec<String>,
) {
    for code in codes {
        match parse_icd10(code) {
            Ok(c) => {
                into.insert(c.category().clone());
            }
            Err(e) => warnings.push(format!("skipped code: {e}")),
        }
    }
}

/// Pulls code-like tokens out of a free-text model reply. Tokens that
/// start with a letter and contain a digit are treated as candidate
/// codes; the rest is prose.
fn code_tokens(reply: &str) -> impl Iterator<Item = &str> {
    reply
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '|' | '(' | ')' | '"' | '\''))
        .map(|t| t.trim_end_matches(['.', ':']))
        .filter(|t| t.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) && t.chars().any(|c| c.is_ascii_digit()))
}

fn lm_codes(
    gateway: &LmGateway,
    request: LmRequest,
    into: &mut BTreeSet<IcdCategory>,
    warnings: &mut Vec<String>,
) -> Result<(), IcdError> {
    match gateway.complete(&request) {
        Ok(resp) => {
            collect_categories(code_tokens(&resp.text), into, warnings);
            Ok(())
        }
        Err(GatewayError::Disabled) => Err(IcdError::LmUnavailable("gateway disabled".into())),
        Err(e) => Err(IcdError::LmUnavailable(e.to_string())),
    }
}

/// Usage categories for an ingredient.
///
/// Uses the monograph `usages` section when present. Otherwise asks the
/// gateway: per disease name when the monograph lists dosage diseases,
/// or per ingredient when there is no monograph at all.
pub fn find_usage_codes(
    ingredient: &str,
    monograph: Option<&DrugMonograph>,
    gateway: &LmGateway,
) -> Result<UsageCodes, IcdError> {
    let mut categories = BTreeSet::new();
    let mut warnings = Vec::new();
    if let Some(usages) = monograph.and_then(|m| m.usages.as_ref()).filter(|u| !u.is_empty()) {
        for (disease, codes) in usages {
            let before = warnings.len();
            collect_categories(codes.iter().map(String::as_str), &mut categories, &mut warnings);
            for w in &mut warnings[before..] {
                *w = format!("{disease}: {w}");
            }
        }
        return Ok(UsageCodes {
            categories,
            source: CodeSource::Database,
            warnings,
        });
    }

    let diseases: BTreeSet<String> = monograph
        .map(|m| m.dosage_by_age_group.values().flat_map(|d| d.keys().cloned()).collect())
        .unwrap_or_default();
    if diseases.is_empty() {
        lm_codes(
            gateway,
            LmRequest::new(template::ICD_FOR_INGREDIENT).var("ingredient", ingredient),
            &mut categories,
            &mut warnings,
        )?;
    } else {
        for disease in &diseases {
            lm_codes(
                gateway,
                LmRequest::new(template::ICD_FOR_DISEASE).var("disease", disease.as_str()),
                &mut categories,
                &mut warnings,
            )?;
        }
    }
    Ok(UsageCodes {
        categories,
        source: CodeSource::LanguageModel,
        warnings,
    })
}

/// Category of one diagnosis: its printed code, or a gateway lookup.
pub fn diagnosis_categories(
    diagnosis: &Diagnosis,
    gateway: &LmGateway,
) -> Result<(BTreeSet<IcdCategory>, Vec<String>), IcdError> {
    let mut set = BTreeSet::new();
    let mut warnings = Vec::new();
    match &diagnosis.icd10 {
        Some(code) => {
            set.insert(code.category().clone());
        }
        None => lm_codes(
            gateway,
            LmRequest::new(template::ICD_FOR_DISEASE).var("disease", diagnosis.text.as_str()),
            &mut set,
            &mut warnings,
        )?,
    }
    Ok((set, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Every usage category must be among the diagnoses.
    #[default]
    AllUsages,
    /// At least one usage category must be among the diagnoses.
    AnyOverlap,
}

pub fn match_indication(
    usage: &BTreeSet<IcdCategory>,
    diagnoses: &BTreeSet<IcdCategory>,
    mode: MatchMode,
) -> IndicationFit {
    if usage.is_empty() {
        return IndicationFit::Unknown;
    }
    let fits = match mode {
        MatchMode::AllUsages => usage.is_subset(diagnoses),
        MatchMode::AnyOverlap => !usage.is_disjoint(diagnoses),
    };
    if fits {
        IndicationFit::Appropriate
    } else {
        IndicationFit::Inappropriate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicationAssessment {
    pub ingredient: String,
    pub usage_categories: BTreeSet<IcdCategory>,
    pub diagnosis_categories: BTreeSet<IcdCategory>,
    pub label: IndicationFit,
    pub source: Option<CodeSource>,
    /// Set for model-generated codes and for unknown labels.
    pub caution: bool,
}

impl IndicationAssessment {
    pub fn new(
        ingredient: &str,
        usage: Option<&UsageCodes>,
        diagnoses: &BTreeSet<IcdCategory>,
        mode: MatchMode,
    ) -> Self {
        let usage_categories = usage.map(|u| u.categories.clone()).unwrap_or_default();
        let label = match_indication(&usage_categories, diagnoses, mode);
        let source = usage.map(|u| u.source);
        Self {
            ingredient: ingredient.to_string(),
            caution: source == Some(CodeSource::LanguageModel) || label == IndicationFit::Unknown,
            usage_categories,
            diagnosis_categories: diagnoses.clone(),
            label,
            source,
        }
    }

    /// Usage categories not found among the diagnoses.
    pub fn missing(&self) -> Vec<&IcdCategory> {
        self.usage_categories.difference(&self.diagnosis_categories).collect()
    }
}
