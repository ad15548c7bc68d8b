//! Scoring verdicts against gold labels.
//!
//! APPROPRIATE is the positive class, so precision measures how often an
//! APPROPRIATE verdict can be trusted.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{LmResponse, UsageTotals};
use crate::icd::normalize_name;
use crate::model::Verdict;
use crate::pipeline::VerificationReport;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("keys differ: {} only in predictions, {} only in gold", only_predicted.len(), only_gold.len())]
    KeyMismatch {
        only_predicted: Vec<(String, String)>,
        only_gold: Vec<(String, String)>,
    },
    #[error("duplicate label for case {0:?}, ingredient {1:?}")]
    DuplicateKey(String, String),
    #[error("F-beta undefined for precision {precision}, recall {recall}")]
    Undefined { precision: f64, recall: f64 },
    #[error("no decisions to score")]
    Empty,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub case_id: String,
    pub ingredient: String,
    pub label: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: Verdict, gold: Verdict) {
        match (predicted, gold) {
            (Verdict::Appropriate, Verdict::Appropriate) => self.tp += 1,
            (Verdict::Appropriate, Verdict::Inappropriate) => self.fp += 1,
            (Verdict::Inappropriate, Verdict::Inappropriate) => self.tn += 1,
            (Verdict::Inappropriate, Verdict::Appropriate) => self.fn_ += 1,
        }
    }
}

fn keyed(labels: &[Label]) -> Result<BTreeMap<(String, String), Verdict>, EvalError> {
    let mut map = BTreeMap::new();
    for l in labels {
        let key = (l.case_id.trim().to_string(), normalize_name(&l.ingredient));
        if map.insert(key, l.label).is_some() {
            return Err(EvalError::DuplicateKey(l.case_id.clone(), l.ingredient.clone()));
        }
    }
    Ok(map)
}

/// Keys are (case id, normalized ingredient); both sides must have the
/// same keys.
pub fn score(predictions: &[Label], gold: &[Label]) -> Result<ConfusionCounts, EvalError> {
    let p = keyed(predictions)?;
    let g = keyed(gold)?;
    let only_predicted: Vec<_> = p.keys().filter(|k| !g.contains_key(*k)).cloned().collect();
    let only_gold: Vec<_> = g.keys().filter(|k| !p.contains_key(*k)).cloned().collect();
    if !only_predicted.is_empty() || !only_gold.is_empty() {
        return Err(EvalError::KeyMismatch {
            only_predicted,
            only_gold,
        });
    }
    let mut counts = ConfusionCounts::default();
    for (k, &pred) in &p {
        counts.add(pred, g[k]);
    }
    Ok(counts)
}

/// `(1 + β²)·P·R / (β²·P + R)`, on whatever scale P and R use.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Result<f64, EvalError> {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        return Err(EvalError::Undefined { precision, recall });
    }
    Ok((1.0 + b2) * precision * recall / denom)
}

/// Percentages. Components with a zero denominator are absent, except
/// that an error-free set scores 100 everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f05: Option<f64>,
}

pub fn metric_row(c: &ConfusionCounts) -> Result<MetricRow, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let pct = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    let perfect = c.fp == 0 && c.fn_ == 0;
    let precision = pct(c.tp, c.tp + c.fp).or(perfect.then_some(100.0));
    let recall = pct(c.tp, c.tp + c.fn_).or(perfect.then_some(100.0));
    let f05 = match (precision, recall) {
        (Some(p), Some(r)) => f_beta(p, r, 0.5).ok(),
        _ => None,
    };
    Ok(MetricRow {
        accuracy: 100.0 * (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f05,
    })
}

/// Half-up rounding to `places` decimals.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    // Snap away binary noise such as 1.005 * 100 = 100.49999999999999.
    let scaled = (x * scale * 1e6).round() / 1e6;
    (scaled + 0.5).floor() / scale
}

pub fn fmt2(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.2}", round_half_up(v, 2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceStats {
    pub calls: u64,
    pub total_time_s: f64,
    pub total_tokens: u64,
    pub ms_per_token: Option<f64>,
}

fn stats(calls: u64, latency_ms: u64, tokens: u64) -> InferenceStats {
    InferenceStats {
        calls,
        total_time_s: latency_ms as f64 / 1000.0,
        total_tokens: tokens,
        ms_per_token: (tokens > 0).then(|| latency_ms as f64 / tokens as f64),
    }
}

pub fn inference_stats(responses: &[LmResponse]) -> Result<InferenceStats, EvalError> {
    if responses.is_empty() {
        return Err(EvalError::Empty);
    }
    let latency = responses.iter().map(|r| r.latency_ms).sum();
    let tokens = responses.iter().map(|r| r.generated_tokens).sum();
    Ok(stats(responses.len() as u64, latency, tokens))
}

impl From<UsageTotals> for InferenceStats {
    fn from(u: UsageTotals) -> Self {
        stats(u.calls, u.latency_ms, u.generated_tokens)
    }
}

pub fn load_labels(path: &Path) -> Result<Vec<Label>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One label per report item.
pub fn predictions_from_reports(reports: &[VerificationReport]) -> Vec<Label> {
    reports
        .iter()
        .flat_map(|r| {
            r.items.iter().map(|i| Label {
                case_id: r.case_id.clone(),
                ingredient: i.ingredient.clone(),
                label: i.verdict,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct ReportItemView {
    ingredient: String,
    verdict: Verdict,
}

#[derive(Deserialize)]
struct ReportView {
    case_id: String,
    items: Vec<ReportItemView>,
}

/// Labels from a saved report file.
pub fn predictions_from_report_json(text: &str, origin: &Path) -> Result<Vec<Label>, EvalError> {
    let view: ReportView = serde_json::from_str(text).map_err(|e| EvalError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(view
        .items
        .into_iter()
        .map(|i| Label {
            case_id: view.case_id.clone(),
            ingredient: i.ingredient,
            label: i.verdict,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub metrics: MetricRow,
}

impl MetricsReport {
    pub fn new(counts: ConfusionCounts) -> Result<Self, EvalError> {
        Ok(Self {
            metrics: metric_row(&counts)?,
            counts,
        })
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let c = &self.counts;
        let rows = [
            ("Accuracy", fmt2(Some(m.accuracy))),
            ("Precision", fmt2(m.precision)),
            ("Recall", fmt2(m.recall)),
            ("F0.5", fmt2(m.f05)),
        ];
        let mut out = format!("tp={} fp={} tn={} fn={}\n", c.tp, c.fp, c.tn, c.fn_);
        for (name, v) in rows {
            out.push_str(&format!("{name:<10}{v:>8}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn l(case: &str, ing: &str, v: Verdict) -> Label {
        Label {
            case_id: case.into(),
            ingredient: ing.into(),
            label: v,
        }
    }

    use Verdict::{Appropriate as A, Inappropriate as I};

    #[test]
    fn score_examples() {
        let gold = vec![l("1", "losartan", A), l("1", "metformin", I), l("2", "x", A)];
        assert_eq!(
            score(&gold, &gold).unwrap(),
            ConfusionCounts {
                tp: 2,
                fp: 0,
                tn: 1,
                fn_: 0
            }
        );
        let pred = vec![l("1", "Losartan ", A), l("1", "metformin", A), l("2", "x", A)];
        assert_eq!(score(&pred, &gold).unwrap().fp, 1);
        let short = vec![l("1", "losartan", A)];
        match score(&short, &gold) {
            Err(EvalError::KeyMismatch {
                only_gold,
                only_predicted,
            }) => {
                assert_eq!(only_gold.len(), 2);
                assert!(only_predicted.is_empty());
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            score(&[l("1", "a", A), l("1", "A", I)], &[]),
            Err(EvalError::DuplicateKey(..))
        ));
    }

    #[test]
    fn f_beta_examples() {
        assert!((f_beta(82.67, 82.67, 0.5).unwrap() - 82.67).abs() < 1e-9);
        assert!((f_beta(66.29, 96.72, 0.5).unwrap() - 70.74).abs() < 0.01);
        assert_eq!(f_beta(100.0, 100.0, 0.5).unwrap(), 100.0);
        assert!(matches!(f_beta(0.0, 0.0, 0.5), Err(EvalError::Undefined { .. })));
    }

    #[test]
    fn metric_row_examples() {
        let m = metric_row(&ConfusionCounts {
            tp: 3,
            tn: 1,
            fp: 0,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f05),
            (100.0, Some(100.0), Some(100.0), Some(100.0))
        );
        let m = metric_row(&ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        })
        .unwrap();
        assert_eq!(fmt2(m.precision), "66.67");
        assert_eq!(fmt2(m.recall), "66.67");
        assert_eq!(fmt2(Some(m.accuracy)), "50.00");
        assert!(matches!(metric_row(&ConfusionCounts::default()), Err(EvalError::Empty)));
        let m = metric_row(&ConfusionCounts {
            tn: 4,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.f05, Some(100.0));
        let m = metric_row(&ConfusionCounts {
            tn: 4,
            fn_: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.precision, None);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(1.005, 2), 1.01);
        assert_eq!(round_half_up(77.275, 2), 77.28);
        assert_eq!(round_half_up(2.0 / 3.0 * 100.0, 2), 66.67);
        assert_eq!(fmt2(None), "-");
    }

    #[test]
    fn inference_examples() {
        let r = |ms, t| LmResponse {
            text: String::new(),
            generated_tokens: t,
            latency_ms: ms,
        };
        let s = inference_stats(&[r(1000, 100)]).unwrap();
        assert_eq!(s.ms_per_token, Some(10.0));
        assert_eq!(s.total_time_s, 1.0);
        assert_eq!(inference_stats(&[r(5, 0)]).unwrap().ms_per_token, None);
        let batch = [r(0, 3), r(0, 4), r(0, 5)];
        assert_eq!(inference_stats(&batch).unwrap().total_tokens, 12);
        assert!(inference_stats(&[]).is_err());
    }

    #[test]
    fn text_table() {
        let r = MetricsReport::new(ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        })
        .unwrap();
        let t = r.to_text();
        assert!(t.contains("Precision    66.67"), "{t}");
    }

    proptest! {
        #[test]
        fn identity_when_p_equals_r(p in 0.001f64..100.0, beta in 0.1f64..4.0) {
            prop_assert!((f_beta(p, p, beta).unwrap() - p).abs() < 1e-9);
        }

        #[test]
        fn strictly_increasing(p in 1.0f64..99.0, r in 1.0f64..99.0, d in 0.01f64..1.0) {
            prop_assert!(f_beta(p + d, r, 0.5).unwrap() > f_beta(p, r, 0.5).unwrap());
            prop_assert!(f_beta(p, r + d, 0.5).unwrap() > f_beta(p, r, 0.5).unwrap());
        }

        #[test]
        fn counts_match_recount(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
            let v = |b: bool| if b { A } else { I };
            let pred: Vec<Label> = pairs.iter().enumerate().map(|(i, (p, _))| l("c", &format!("d{i}"), v(*p))).collect();
            let gold: Vec<Label> = pairs.iter().enumerate().map(|(i, (_, g))| l("c", &format!("d{i}"), v(*g))).collect();
            let c = score(&pred, &gold).unwrap();
            let tp = pairs.iter().filter(|(p, g)| *p && *g).count() as u64;
            let fp = pairs.iter().filter(|(p, g)| *p && !*g).count() as u64;
            let tn = pairs.iter().filter(|(p, g)| !*p && !*g).count() as u64;
            let fn_ = pairs.iter().filter(|(p, g)| !*p && *g).count() as u64;
            prop_assert_eq!(c, ConfusionCounts { tp, fp, tn, fn_ });
            let m = metric_row(&c).unwrap();
            prop_assert!((m.accuracy - 100.0 * (tp + tn) as f64 / pairs.len() as f64).abs() < 1e-9);
            if tp + fp > 0 {
                prop_assert!((m.precision.unwrap() - 100.0 * tp as f64 / (tp + fp) as f64).abs() < 1e-9);
            }
        }
    }
}
