//! Loading and cleaning of active-ingredient monographs.
//!
//! A monograph file is a JSON object keyed by ingredient name:
//!
//! ```json
//! {"losartan": {
//!     "dosage": {"Adults": {"Hypertension": {"Oral": "Initially, 50 mg once daily"}}},
//!     "usages": {"Hypertension": ["I10"]}
//! }}
//! ```
//!
//! `usages` is optional. Every dosage text goes through [`clean_text`],
//! [`standardize_hyphens`] and [`convert_mcg_to_mg`] on load.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::{Captures, Regex};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::icd::normalize_name;
use crate::json::to_pretty_json;
use crate::model::AgeGroup;

#[derive(Debug, Error)]
pub enum MonographError {
    #[error("{}: cannot read file: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: parse error{}: {message}", path.display(), key.as_ref().map(|k| format!(" at {k:?}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        key: Option<String>,
        message: String,
    },
    #[error("{}: schema error at {key:?}: {message}", path.display())]
    Schema {
        path: PathBuf,
        key: String,
        message: String,
    },
}

/// disease name → route or context → dosage text
pub type DiseaseDosages = IndexMap<String, IndexMap<String, String>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DrugMonograph {
    /// Canonical lowercase name.
    pub ingredient: String,
    pub dosage_by_age_group: IndexMap<AgeGroup, DiseaseDosages>,
    /// disease name → ICD-10 code strings, as written in the file
    pub usages: Option<IndexMap<String, Vec<String>>>,
    /// Ingredient-level fields other than `dosage` and `usages`.
    pub extra: Map<String, Value>,
}

impl DrugMonograph {
    pub fn diseases(&self, group: AgeGroup) -> impl Iterator<Item = &str> {
        self.dosage_by_age_group
            .get(&group)
            .into_iter()
            .flat_map(|d| d.keys().map(String::as_str))
    }

    fn has_group(&self, group: AgeGroup) -> bool {
        self.dosage_by_age_group.get(&group).is_some_and(|d| !d.is_empty())
    }

    fn to_value(&self) -> Value {
        let mut dosage = Map::new();
        for (group, diseases) in &self.dosage_by_age_group {
            let mut d = Map::new();
            for (disease, contexts) in diseases {
                let c: Map<String, Value> = contexts
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect();
                d.insert(disease.clone(), Value::Object(c));
            }
            dosage.insert(group.monograph_label().to_string(), Value::Object(d));
        }
        let mut entry = Map::new();
        entry.insert("dosage".into(), Value::Object(dosage));
        if let Some(usages) = &self.usages {
            let u: Map<String, Value> = usages
                .iter()
                .map(|(k, codes)| {
                    (
                        k.clone(),
                        Value::Array(codes.iter().cloned().map(Value::String).collect()),
                    )
                })
                .collect();
            entry.insert("usages".into(), Value::Object(u));
        }
        for (k, v) in &self.extra {
            entry.insert(k.clone(), v.clone());
        }
        Value::Object(entry)
    }
}

/// Removes tabs and dagger marks, then collapses runs of spaces.
/// Newlines are kept.
pub fn clean_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_space = false;
    for ch in text.chars() {
        let ch = match ch {
            '\t' => ' ',
            '\u{2020}' | '\u{2021}' => continue,
            c => c,
        };
        if ch == ' ' {
            if prev_space {
                continue;
            }
            prev_space = true;
        } else {
            prev_space = false;
        }
        out.push(ch);
    }
    out
}

/// Maps en/em dashes and their relatives to ASCII `-`.
pub fn standardize_hyphens(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' | '\u{FE58}'
            | '\u{FE63}' | '\u{FF0D}' => '-',
            c => c,
        })
        .collect()
}

const NUMBER: &str = r"(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+";

static MICROGRAM_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)(?P<a>{NUMBER})(?:(?P<sep>[ \u{{A0}}]*(?:-|\u{{2013}}|\u{{2014}}|to)[ \u{{A0}}]*)(?P<b>{NUMBER}))?(?P<ws>[ \u{{A0}}]*)(?:mcg|µg|μg|ug)\b"
    ))
    .expect("microgram regex")
});

/// True when `text` still contains a number followed by a microgram unit.
pub fn has_microgram_quantity(text: &str) -> bool {
    MICROGRAM_RE.is_match(text)
}

/// Rewrites every microgram quantity (`mcg`, `µg`, `ug`) that directly
/// follows a number into milligrams. Ranges convert both endpoints.
pub fn convert_mcg_to_mg(text: &str) -> String {
    MICROGRAM_RE
        .replace_all(text, |caps: &Captures| {
            let mut out = divide_by_thousand(&caps["a"]);
            if let (Some(sep), Some(b)) = (caps.name("sep"), caps.name("b")) {
                out.push_str(sep.as_str());
                out.push_str(&divide_by_thousand(b.as_str()));
            }
            out.push_str(&caps["ws"]);
            out.push_str("mg");
            out
        })
        .into_owned()
}

/// Exact decimal division by 1000 on the string form, rendered without
/// trailing zeros or exponent.
fn divide_by_thousand(number: &str) -> String {
    let number: String = number.chars().filter(|c| *c != ',').collect();
    let (int, frac) = number.split_once('.').unwrap_or((&number, ""));
    let digits = format!("{int}{frac}");
    let point = int.len() as isize - 3;
    let (int_part, frac_part) = if point <= 0 {
        (
            String::from("0"),
            format!("{}{}", "0".repeat(point.unsigned_abs()), digits),
        )
    } else {
        let p = point as usize;
        (digits[..p].to_string(), digits[p..].to_string())
    };
    let int_part = int_part.trim_start_matches('0');
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.is_empty() {
        int_part.to_string()
    } else {
        format!("{int_part}.{frac_part}")
    }
}

/// The full normalization applied to every dosage text.
pub fn normalize_dosage_text(text: &str) -> String {
    convert_mcg_to_mg(&standardize_hyphens(&clean_text(text)))
}

fn normalize_key(text: &str) -> String {
    standardize_hyphens(&clean_text(text)).trim().to_string()
}

pub fn load_monographs(path: &Path) -> Result<Vec<DrugMonograph>, MonographError> {
    let raw = fs::read_to_string(path).map_err(|source| MonographError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_monographs(&raw, path)
}

/// Parses monograph JSON; `origin` is only used in error messages.
pub fn parse_monographs(raw: &str, origin: &Path) -> Result<Vec<DrugMonograph>, MonographError> {
    let parse_err = |key: Option<String>, message: String| MonographError::Parse {
        path: origin.to_path_buf(),
        key,
        message,
    };
    let schema_err = |key: String, message: &str| MonographError::Schema {
        path: origin.to_path_buf(),
        key,
        message: message.to_string(),
    };

    let value: Value = serde_json::from_str(raw).map_err(|e| parse_err(None, e.to_string()))?;
    let Value::Object(top) = value else {
        return Err(schema_err(
            "$".into(),
            "top level must be an object keyed by ingredient",
        ));
    };

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(top.len());
    for (name, entry) in top {
        let ingredient = normalize_name(&name);
        if ingredient.is_empty() {
            return Err(parse_err(Some(name), "empty ingredient name".into()));
        }
        if !seen.insert(ingredient.clone()) {
            return Err(schema_err(name, "duplicate ingredient after normalization"));
        }
        let Value::Object(mut entry) = entry else {
            return Err(schema_err(name, "ingredient entry must be an object"));
        };

        let mut dosage_by_age_group = IndexMap::new();
        match entry.shift_remove("dosage") {
            None => {}
            Some(Value::Object(groups)) => {
                for (label, diseases) in groups {
                    let key = format!("{name}.dosage.{label}");
                    let group =
                        AgeGroup::from_label(&label).map_err(|_| schema_err(key.clone(), "unknown age group"))?;
                    let Value::Object(diseases) = diseases else {
                        return Err(schema_err(key, "age group must map disease names to objects"));
                    };
                    let mut by_disease: DiseaseDosages = IndexMap::new();
                    for (disease, contexts) in diseases {
                        let dkey = format!("{key}.{disease}");
                        let Value::Object(contexts) = contexts else {
                            return Err(schema_err(dkey, "disease must map route/context to dosage text"));
                        };
                        let mut by_context = IndexMap::new();
                        for (context, text) in contexts {
                            let Value::String(text) = text else {
                                return Err(schema_err(format!("{dkey}.{context}"), "dosage text must be a string"));
                            };
                            by_context.insert(normalize_key(&context), normalize_dosage_text(&text));
                        }
                        by_disease
                            .entry(normalize_key(&disease))
                            .or_default()
                            .extend(by_context);
                    }
                    if dosage_by_age_group.insert(group, by_disease).is_some() {
                        return Err(schema_err(key, "age group listed twice"));
                    }
                }
            }
            Some(_) => return Err(schema_err(format!("{name}.dosage"), "dosage must be an object")),
        }

        let usages = match entry.shift_remove("usages") {
            None | Some(Value::Null) => None,
            Some(Value::Object(map)) => {
                let mut usages = IndexMap::new();
                for (disease, codes) in map {
                    let key = format!("{name}.usages.{disease}");
                    let Value::Array(codes) = codes else {
                        return Err(schema_err(key, "usage must be a list of ICD-10 strings"));
                    };
                    let codes = codes
                        .into_iter()
                        .map(|c| match c {
                            Value::String(s) => Ok(s),
                            _ => Err(schema_err(key.clone(), "ICD-10 codes must be strings")),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    usages.insert(normalize_key(&disease), codes);
                }
                Some(usages)
            }
            Some(_) => return Err(schema_err(format!("{name}.usages"), "usages must be an object")),
        };

        out.push(DrugMonograph {
            ingredient,
            dosage_by_age_group,
            usages,
            extra: entry,
        });
    }
    Ok(out)
}

/// Serializes monographs back to the file shape, 4-space indented.
pub fn serialize_monographs(monographs: &[DrugMonograph]) -> String {
    let top: Map<String, Value> = monographs
        .iter()
        .map(|m| (m.ingredient.clone(), m.to_value()))
        .collect();
    to_pretty_json(&Value::Object(top))
}

pub fn save_monographs(monographs: &[DrugMonograph], path: &Path) -> std::io::Result<()> {
    fs::write(path, serialize_monographs(monographs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub n_ingredients: usize,
    pub n_adult: usize,
    pub n_pediatric: usize,
    /// Whitespace-separated words across all dosage texts, per ingredient,
    /// in corpus order.
    pub description_word_counts: Vec<usize>,
    /// Distinct disease names across age groups, per ingredient.
    pub versatility: IndexMap<String, usize>,
}

impl CorpusStats {
    pub fn mean_versatility(&self) -> Option<f64> {
        if self.versatility.is_empty() {
            return None;
        }
        let total: usize = self.versatility.values().sum();
        Some(total as f64 / self.versatility.len() as f64)
    }
}

pub fn compute_stats(monographs: &[DrugMonograph]) -> CorpusStats {
    let mut stats = CorpusStats {
        n_ingredients: monographs.len(),
        n_adult: 0,
        n_pediatric: 0,
        description_word_counts: Vec::with_capacity(monographs.len()),
        versatility: IndexMap::new(),
    };
    for m in monographs {
        if m.has_group(AgeGroup::Adult) {
            stats.n_adult += 1;
        }
        if m.has_group(AgeGroup::Pediatric) {
            stats.n_pediatric += 1;
        }
        let words = m
            .dosage_by_age_group
            .values()
            .flat_map(|d| d.values())
            .flat_map(|c| c.values())
            .map(|t| t.split_whitespace().count())
            .sum();
        stats.description_word_counts.push(words);
        let diseases: BTreeSet<String> = m
            .dosage_by_age_group
            .values()
            .flat_map(|d| d.keys())
            .map(|d| normalize_name(d))
            .collect();
        stats.versatility.insert(m.ingredient.clone(), diseases.len());
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const RAW_SAMPLE: &str = include_str!("../fixtures/monographs_sample.json");

    fn parse(raw: &str) -> Result<Vec<DrugMonograph>, MonographError> {
        parse_monographs(raw, Path::new("test.json"))
    }

    #[test]
    fn clean_text_examples() {
        assert_eq!(clean_text("50 mg\tonce daily\u{2020}"), "50 mg once daily");
        assert_eq!(clean_text("line1\nline2"), "line1\nline2");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("a  \t b"), "a b");
    }

    #[test]
    fn hyphen_examples() {
        assert_eq!(standardize_hyphens("25\u{2013}50 mg"), "25-50 mg");
        assert_eq!(standardize_hyphens("25-50 mg"), "25-50 mg");
        assert_eq!(standardize_hyphens("a\u{2014}b\u{2013}c"), "a-b-c");
    }

    #[test]
    fn microgram_examples() {
        assert_eq!(convert_mcg_to_mg("500 mcg once daily"), "0.5 mg once daily");
        assert_eq!(convert_mcg_to_mg("give 200 mcg, then 1 mg"), "give 0.2 mg, then 1 mg");
        assert_eq!(convert_mcg_to_mg("no dose units here"), "no dose units here");
        assert_eq!(convert_mcg_to_mg("200-400 mcg"), "0.2-0.4 mg");
        assert_eq!(convert_mcg_to_mg("200 to 400 MCG daily"), "0.2 to 0.4 mg daily");
        assert_eq!(convert_mcg_to_mg("25µg/kg"), "0.025mg/kg");
        assert_eq!(convert_mcg_to_mg("1,500 ug"), "1.5 mg");
        assert_eq!(convert_mcg_to_mg("2.5 mcg"), "0.0025 mg");
        assert_eq!(convert_mcg_to_mg("3000 mcg"), "3 mg");
        assert_eq!(convert_mcg_to_mg(".5 mcg"), "0.0005 mg");
        assert_eq!(convert_mcg_to_mg("5 ugly ducks"), "5 ugly ducks");
        assert_eq!(convert_mcg_to_mg("dose in mcg"), "dose in mcg");
    }

    #[test]
    fn divide_exact() {
        assert_eq!(divide_by_thousand("1"), "0.001");
        assert_eq!(divide_by_thousand("1000"), "1");
        assert_eq!(divide_by_thousand("12345.6"), "12.3456");
        assert_eq!(divide_by_thousand("0"), "0");
    }

    #[test]
    fn loads_raw_sample() {
        let ms = parse(RAW_SAMPLE).unwrap();
        let names: Vec<_> = ms.iter().map(|m| m.ingredient.as_str()).collect();
        assert_eq!(names, ["losartan", "esomeprazole"]);
        let adult: Vec<_> = ms[0].diseases(AgeGroup::Adult).collect();
        for d in ["Hypertension", "Diabetic Nephropathy", "Heart Failure [off-label]"] {
            assert!(adult.contains(&d), "{d}");
        }
        assert!(ms[0].usages.is_none());
    }

    #[test]
    fn empty_and_malformed() {
        assert!(parse("{}").unwrap().is_empty());
        let err = parse(r#"{"x": {"dosage": "take some"}}"#).unwrap_err();
        assert!(matches!(err, MonographError::Schema { .. }), "{err}");
        let err = parse(r#"{"x": {"dosage": {"Adults": {"Pain": "take some"}}}}"#).unwrap_err();
        assert!(
            matches!(err, MonographError::Schema { ref key, .. } if key.contains("Pain")),
            "{err}"
        );
        let err = parse(r#"{"x": {"dosage": {"Elderly": {}}}}"#).unwrap_err();
        assert!(matches!(err, MonographError::Schema { .. }));
        let err = parse(r#"{"x": "#).unwrap_err();
        assert!(matches!(err, MonographError::Parse { .. }));
        let err = parse(r#"{"Losartan": {}, "losartan ": {}}"#).unwrap_err();
        assert!(matches!(err, MonographError::Schema { .. }));
    }

    #[test]
    fn load_applies_cleaning() {
        let raw = r#"{"  Test  Drug ": {"dosage": {"Adults": {"Pain\t": {"Oral": "100–200 mcg\tdaily†"}}}}}"#;
        let ms = parse(raw).unwrap();
        assert_eq!(ms[0].ingredient, "test drug");
        assert_eq!(
            ms[0].dosage_by_age_group[&AgeGroup::Adult]["Pain"]["Oral"],
            "0.1-0.2 mg daily"
        );
    }

    #[test]
    fn io_error_on_missing_file() {
        let err = load_monographs(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(matches!(err, MonographError::Io { .. }));
    }

    #[test]
    fn stats_on_raw_sample() {
        let ms = parse(RAW_SAMPLE).unwrap();
        let stats = compute_stats(&ms);
        assert_eq!(stats.n_ingredients, 2);
        assert_eq!(stats.n_adult, 2);
        assert_eq!(stats.n_pediatric, 2);
        assert_eq!(stats.versatility["losartan"], 4);
        assert_eq!(stats.versatility["esomeprazole"], 3);
        assert_eq!(stats.description_word_counts.len(), 2);
        assert!(stats.n_adult <= stats.n_ingredients && stats.n_pediatric <= stats.n_ingredients);
    }

    #[test]
    fn stats_counts() {
        assert_eq!(
            compute_stats(&[]),
            CorpusStats {
                n_ingredients: 0,
                n_adult: 0,
                n_pediatric: 0,
                description_word_counts: vec![],
                versatility: IndexMap::new(),
            }
        );
        let ms = parse(
            r#"{"a": {"dosage": {"Adults": {"X": {"Oral": "1 mg"}}}},
                "b": {"dosage": {"Adults": {"X": {"Oral": "1 mg"}}, "Pediatric Patients": {"Y": {"Oral": "two words"}}}}}"#,
        )
        .unwrap();
        let stats = compute_stats(&ms);
        assert_eq!((stats.n_adult, stats.n_pediatric), (2, 1));
        assert_eq!(stats.description_word_counts, [2, 4]);
        assert_eq!(stats.mean_versatility(), Some(1.5));
    }

    #[test]
    fn round_trip_structured_form() {
        let ms = parse(RAW_SAMPLE).unwrap();
        let again = parse(&serialize_monographs(&ms)).unwrap();
        assert_eq!(ms, again);
    }

    fn dose_text() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-z]{1,8}".prop_map(|s| s),
            (1u32..5000).prop_map(|n| format!("{n} mcg")),
            (1u32..5000, 1u32..5000).prop_map(|(a, b)| format!("{a}\u{2013}{b} mcg")),
            (1u32..500).prop_map(|n| format!("{n} mg")),
            Just("\t".to_string()),
            Just("\u{2020}".to_string()),
            Just("\u{2014}".to_string()),
            Just("\n".to_string()),
        ];
        proptest::collection::vec(piece, 0..12).prop_map(|p| p.join(" "))
    }

    proptest! {
        #[test]
        fn normalizers_are_idempotent(s in dose_text()) {
            let c = clean_text(&s);
            prop_assert_eq!(clean_text(&c), c.clone());
            let h = standardize_hyphens(&s);
            prop_assert_eq!(standardize_hyphens(&h), h.clone());
            let m = convert_mcg_to_mg(&s);
            prop_assert_eq!(convert_mcg_to_mg(&m), m.clone());
            let n = normalize_dosage_text(&s);
            prop_assert!(!has_microgram_quantity(&n));
            prop_assert!(!n.contains('\t') && !n.contains('\u{2020}'), "{:?}", n);
        }
    }
}
