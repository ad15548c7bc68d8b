//! Age-range text such as "children 8 to <10 years of age".

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DosageError;
use crate::model::DEFAULT_ADULT_AGE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeConstraint {
    pub min_years: f64,
    pub min_inclusive: bool,
    /// `None` is unbounded.
    pub max_years: Option<f64>,
    pub max_inclusive: bool,
    pub raw: String,
}

impl AgeConstraint {
    pub fn contains(&self, age_years: f64) -> bool {
        let above = if self.min_inclusive {
            age_years >= self.min_years
        } else {
            age_years > self.min_years
        };
        let below = match self.max_years {
            None => true,
            Some(max) if self.max_inclusive => age_years <= max,
            Some(max) => age_years < max,
        };
        above && below
    }

    /// Interval length; unbounded ranges are infinitely wide.
    pub fn width(&self) -> f64 {
        self.max_years.map_or(f64::INFINITY, |m| m - self.min_years)
    }
}

static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(\d+(?:\.\d+)?)\s*(?:(?:years?|yrs?|months?|weeks?)\s*)?(?:-|\x{2013}|\x{2014}|to|through)\s*(<=|≤|<)?\s*(\d+(?:\.\d+)?)").expect("valid regex")
});
static BOUND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(>=|≥|<=|≤|>|<|older than|over|at least|younger than|under)\s*(\d+(?:\.\d+)?)").expect("valid regex")
});
static AND_OLDER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(\d+(?:\.\d+)?)\s*(?:years?|yrs?|months?|weeks?)?(?:\s+of\s+age)?\s+(?:and|or)\s+(?:older|over)")
        .expect("valid regex")
});
static UNIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(years?|yrs?|months?|weeks?)\b").expect("valid regex"));

/// Scale to years, from the first unit word after byte `end`.
fn scale_after(text: &str, end: usize) -> f64 {
    match UNIT.find(&text[end..]).map(|m| m.as_str()) {
        Some(u) if u.starts_with("month") => 1.0 / 12.0,
        Some(u) if u.starts_with("week") => 1.0 / 52.0,
        _ => 1.0,
    }
}

fn number(text: &str, m: regex::Match<'_>) -> f64 {
    m.as_str().parse::<f64>().expect("regex matched a number") * scale_after(text, m.end())
}

pub fn parse_age_constraint(text: &str) -> Result<AgeConstraint, DosageError> {
    let raw = text.trim().to_string();
    let t = raw.to_lowercase();
    let unparseable = || DosageError::UnparseableAgeText(raw.clone());
    if t.is_empty() {
        return Err(unparseable());
    }
    let adult = f64::from(DEFAULT_ADULT_AGE);
    let c = if let Some(c) = RANGE.captures(&t) {
        let min = number(&t, c.get(1).expect("group"));
        let max = number(&t, c.get(3).expect("group"));
        AgeConstraint {
            min_years: min,
            min_inclusive: true,
            max_years: Some(max),
            max_inclusive: c.get(2).is_none_or(|op| op.as_str() != "<"),
            raw: raw.clone(),
        }
    } else if let Some(c) = AND_OLDER.captures(&t) {
        AgeConstraint {
            min_years: number(&t, c.get(1).expect("group")),
            min_inclusive: true,
            max_years: None,
            max_inclusive: false,
            raw: raw.clone(),
        }
    } else if let Some(c) = BOUND.captures(&t) {
        let n = number(&t, c.get(2).expect("group"));
        let (min_years, min_inclusive, max_years, max_inclusive) = match &c[1] {
            ">" | "older than" | "over" => (n, false, None, false),
            ">=" | "≥" | "at least" => (n, true, None, false),
            "<" | "younger than" | "under" => (0.0, true, Some(n), false),
            _ => (0.0, true, Some(n), true),
        };
        AgeConstraint {
            min_years,
            min_inclusive,
            max_years,
            max_inclusive,
            raw: raw.clone(),
        }
    } else if t.starts_with("adult") {
        AgeConstraint {
            min_years: adult,
            min_inclusive: true,
            max_years: None,
            max_inclusive: false,
            raw: raw.clone(),
        }
    } else if t.starts_with("children") || t.starts_with("pediatric") {
        AgeConstraint {
            min_years: 0.0,
            min_inclusive: true,
            max_years: Some(adult),
            max_inclusive: false,
            raw: raw.clone(),
        }
    } else {
        return Err(unparseable());
    };
    match c.max_years {
        Some(max) if max < c.min_years => Err(unparseable()),
        _ => Ok(c),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rosuvastatin_ranges() {
        let c = parse_age_constraint("children 8 to <10 years of age").unwrap();
        assert_eq!(
            (c.min_years, c.min_inclusive, c.max_years, c.max_inclusive),
            (8.0, true, Some(10.0), false)
        );
        assert!(c.contains(8.0) && c.contains(9.99) && !c.contains(10.0));

        let c = parse_age_constraint("children and adolescents 10-17 years of age").unwrap();
        assert_eq!((c.min_years, c.max_years, c.max_inclusive), (10.0, Some(17.0), true));
        assert!(c.contains(17.0) && !c.contains(17.5));

        let c = parse_age_constraint("adults").unwrap();
        assert_eq!((c.min_years, c.max_years), (18.0, None));
        assert!(c.contains(80.0) && !c.contains(17.0));
    }

    #[test]
    fn other_forms() {
        let c = parse_age_constraint("Children >6 years of age").unwrap();
        assert!(!c.min_inclusive && !c.contains(6.0) && c.contains(6.5));
        let c = parse_age_constraint("adults ≥65 years of age").unwrap();
        assert!(c.contains(65.0) && !c.contains(64.9));
        let c = parse_age_constraint("children <2 years").unwrap();
        assert!(c.contains(1.5) && !c.contains(2.0));
        let c = parse_age_constraint("children").unwrap();
        assert!(c.contains(0.0) && !c.contains(18.0));
        let c = parse_age_constraint("infants 6 months to 2 years").unwrap();
        assert_eq!((c.min_years, c.max_years), (0.5, Some(2.0)));
        let c = parse_age_constraint("children 2.5-5 years").unwrap();
        assert_eq!(c.min_years, 2.5);
        let c = parse_age_constraint("children 6 years of age and older").unwrap();
        assert!(c.contains(6.0) && c.max_years.is_none());
    }

    #[test]
    fn rejects() {
        assert!(matches!(
            parse_age_constraint("triple therapy"),
            Err(DosageError::UnparseableAgeText(_))
        ));
        assert!(parse_age_constraint("  ").is_err());
        assert!(parse_age_constraint("children 10-8 years").is_err());
    }

    proptest! {
        #[test]
        fn contains_matches_bounds(
            a in 0u32..40, span in 0u32..40, exclusive in any::<bool>(), age_tenths in 0u32..1000
        ) {
            let b = a + span;
            let text = if exclusive {
                format!("children {a} to <{b} years of age")
            } else {
                format!("children {a}-{b} years of age")
            };
            let c = parse_age_constraint(&text).unwrap();
            let age = f64::from(age_tenths) / 10.0;
            let (lo, hi) = (f64::from(a), f64::from(b));
            let expected = age >= lo && if exclusive { age < hi } else { age <= hi };
            prop_assert_eq!(c.contains(age), expected);
            prop_assert!(c.contains(lo) || (exclusive && a == b));
            prop_assert_eq!(c.contains(hi), !exclusive);
        }
    }
}
