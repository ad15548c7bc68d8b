//! End-to-end verification: resolve ingredients, check indication, gate
//! dosage retrieval on it, and consolidate a verdict per item.

pub mod extract;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::dosage::{flag_deviation_mg, parse_mg_quantity, recommend, DosageGraph, DoseRecommendation, Recommendation};
use crate::gateway::{template, LmGateway, LmRequest};
use crate::icd::{
    diagnosis_categories, find_usage_codes, fuzzy_match, ingredient_components, IndicationAssessment, IngredientMatch,
    MatchMethod, MatchMode, DEFAULT_FUZZY_THRESHOLD,
};
use crate::interaction::{summarize, Embedder, TripletIndex};
use crate::json::to_pretty_json;
use crate::model::{
    parse_icd10, AgeGroup, DosageFit, FitStatus, IcdCategory, IndicationFit, PrescriptionCase, PrescriptionItem,
    Verdict, DEFAULT_ADULT_AGE,
};
use crate::monograph::DrugMonograph;

pub use extract::{structure_prescription, ExtractionError, Provenance, StructuredExtraction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("duplicate case id {0:?} in batch")]
    DuplicateCaseId(String),
    #[error(transparent)]
    InvalidCase(#[from] crate::model::ModelError),
}

/// Monographs indexed by canonical ingredient name.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    monographs: Vec<DrugMonograph>,
    names: Vec<String>,
    by_name: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(monographs: Vec<DrugMonograph>) -> Self {
        let names: Vec<String> = monographs.iter().map(|m| m.ingredient.clone()).collect();
        let by_name = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self {
            monographs,
            names,
            by_name,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, ingredient: &str) -> Option<&DrugMonograph> {
        self.by_name.get(ingredient).map(|&i| &self.monographs[i])
    }

    pub fn monographs(&self) -> &[DrugMonograph] {
        &self.monographs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierConfig {
    pub fuzzy_threshold: f64,
    pub match_mode: MatchMode,
    pub adult_threshold: u32,
    /// Triplets retrieved per ingredient for the interaction summary.
    pub interaction_k: usize,
    /// Retrieved triplets scoring below this are left out of the summary.
    pub interaction_min_score: f64,
    /// Also send the case to the evaluation prompt and keep the reply.
    pub lm_review: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            match_mode: MatchMode::AllUsages,
            adult_threshold: DEFAULT_ADULT_AGE,
            interaction_k: 3,
            interaction_min_score: 0.25,
            lm_review: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Indication,
    Dosage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Checked {
    pub verdict: Verdict,
    pub aspect: Option<Aspect>,
    pub warning: Option<String>,
    pub caution: bool,
}

pub const NO_DOSAGE_REFERENCE: &str = "no dosage reference";

/// The checker's decision table over every (FI, FD) pair.
pub fn verdict_of(status: FitStatus) -> Checked {
    let ok = |warning: Option<&str>| Checked {
        verdict: Verdict::Appropriate,
        aspect: None,
        warning: warning.map(str::to_string),
        caution: false,
    };
    match (status.fi(), status.fd()) {
        (IndicationFit::Appropriate, DosageFit::WithinBaseline) => ok(None),
        (IndicationFit::Appropriate, DosageFit::Deviates) => Checked {
            verdict: Verdict::Inappropriate,
            aspect: Some(Aspect::Dosage),
            warning: None,
            caution: false,
        },
        (IndicationFit::Appropriate, DosageFit::NoInformation) => ok(Some(NO_DOSAGE_REFERENCE)),
        (IndicationFit::Appropriate, DosageFit::NotEvaluated) => ok(Some("dosage not evaluated")),
        (IndicationFit::Inappropriate, _) => Checked {
            verdict: Verdict::Inappropriate,
            aspect: Some(Aspect::Indication),
            warning: None,
            caution: false,
        },
        (IndicationFit::Unknown, _) => Checked {
            verdict: Verdict::Inappropriate,
            aspect: Some(Aspect::Indication),
            warning: Some("indication could not be established".into()),
            caution: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosageCheck {
    pub fit: DosageFit,
    pub prescribed_mg: Option<f64>,
    pub disease: Option<String>,
    pub baseline: Option<DoseRecommendation>,
    pub reason: Option<String>,
}

impl DosageCheck {
    fn not_evaluated() -> Self {
        Self {
            fit: DosageFit::NotEvaluated,
            prescribed_mg: None,
            disease: None,
            baseline: None,
            reason: None,
        }
    }

    fn no_information(prescribed_mg: Option<f64>, reason: String) -> Self {
        Self {
            fit: DosageFit::NoInformation,
            prescribed_mg,
            disease: None,
            baseline: None,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub name: String,
    pub resolved: IngredientMatch,
    pub indication: IndicationAssessment,
    pub dosage: DosageCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemReport {
    pub ingredient: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
    pub components: Vec<ComponentReport>,
    pub fit: FitStatus,
    pub verdict: Verdict,
    pub aspect: Option<Aspect>,
    pub caution: bool,
    pub warnings: Vec<String>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub case_id: String,
    pub age_years: u32,
    pub age_group: AgeGroup,
    pub diagnosis_categories: BTreeSet<IcdCategory>,
    pub items: Vec<ItemReport>,
    pub overall: Verdict,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interaction_summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm_review: Option<String>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        to_pretty_json(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Case {}: {} (age {}, {})\n",
            self.case_id,
            self.overall,
            self.age_years,
            self.age_group.graph_label()
        ));
        let cats: Vec<&str> = self.diagnosis_categories.iter().map(IcdCategory::as_str).collect();
        out.push_str(&format!("Diagnosis categories: {}\n", cats.join(", ")));
        for (i, item) in self.items.iter().enumerate() {
            out.push_str(&format!("{}. {}", i + 1, item.ingredient));
            if let Some(b) = &item.brand {
                out.push_str(&format!(" - {b}"));
            }
            out.push_str(&format!(": {}", item.verdict));
            if item.caution {
                out.push_str(" [caution]");
            }
            out.push('\n');
            for line in item.explanation.lines() {
                out.push_str(&format!("   {line}\n"));
            }
            for w in &item.warnings {
                out.push_str(&format!("   warning: {w}\n"));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        if let Some(s) = &self.interaction_summary {
            out.push_str("Interactions:\n");
            for line in s.lines() {
                out.push_str(&format!("   {line}\n"));
            }
        }
        out
    }
}

pub struct InteractionGrounding {
    pub index: TripletIndex,
    pub embedder: Box<dyn Embedder>,
}

pub struct Verifier {
    corpus: Corpus,
    graph: DosageGraph,
    gateway: LmGateway,
    interactions: Option<InteractionGrounding>,
    config: VerifierConfig,
}

fn set_text(set: &BTreeSet<IcdCategory>) -> String {
    let v: Vec<&str> = set.iter().map(IcdCategory::as_str).collect();
    format!("{{{}}}", v.join(", "))
}

fn aggregate_fi(parts: &[&ComponentReport]) -> IndicationFit {
    let labels: Vec<IndicationFit> = parts.iter().map(|c| c.indication.label).collect();
    if labels.contains(&IndicationFit::Inappropriate) {
        IndicationFit::Inappropriate
    } else if labels.contains(&IndicationFit::Unknown) {
        IndicationFit::Unknown
    } else {
        IndicationFit::Appropriate
    }
}

fn aggregate_fd(parts: &[&ComponentReport]) -> DosageFit {
    let fits: Vec<DosageFit> = parts.iter().map(|c| c.dosage.fit).collect();
    if fits.contains(&DosageFit::Deviates) {
        DosageFit::Deviates
    } else if fits.contains(&DosageFit::NoInformation) || fits.contains(&DosageFit::NotEvaluated) {
        DosageFit::NoInformation
    } else {
        DosageFit::WithinBaseline
    }
}

fn explain_component(c: &ComponentReport) -> String {
    let a = &c.indication;
    let indication = match a.label {
        IndicationFit::Appropriate => format!(
            "usage categories {} all present in diagnoses",
            set_text(&a.usage_categories)
        ),
        IndicationFit::Inappropriate => {
            let missing: Vec<&str> = a.missing().into_iter().map(IcdCategory::as_str).collect();
            format!(
                "usage categories {} not among diagnoses {}",
                missing.join(", "),
                set_text(&a.diagnosis_categories)
            )
        }
        IndicationFit::Unknown => "no usage codes found".to_string(),
    };
    let d = &c.dosage;
    let dosage = match (d.fit, &d.baseline) {
        (DosageFit::WithinBaseline, Some(b)) => format!(
            "prescribed {} mg within baseline {:?}",
            d.prescribed_mg.unwrap_or_default(),
            b.dosage_text
        ),
        (DosageFit::Deviates, Some(b)) => format!(
            "prescribed {} mg deviates from baseline {:?}",
            d.prescribed_mg.unwrap_or_default(),
            b.dosage_text
        ),
        (DosageFit::NotEvaluated, _) => "not evaluated because the indication failed".to_string(),
        _ => format!(
            "{NO_DOSAGE_REFERENCE} ({})",
            d.reason.as_deref().unwrap_or("no baseline")
        ),
    };
    format!("{}: indication: {indication}; dosage: {dosage}", c.name)
}

impl Verifier {
    pub fn new(corpus: Corpus, graph: DosageGraph, gateway: LmGateway) -> Self {
        Self {
            corpus,
            graph,
            gateway,
            interactions: None,
            config: VerifierConfig::default(),
        }
    }

    pub fn with_config(mut self, config: VerifierConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_interactions(mut self, grounding: InteractionGrounding) -> Self {
        self.interactions = Some(grounding);
        self
    }

    pub fn gateway(&self) -> &LmGateway {
        &self.gateway
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    fn dosage_check(
        &self,
        drug: &str,
        monograph: Option<&DrugMonograph>,
        case: &PrescriptionCase,
        diagnoses: &BTreeSet<IcdCategory>,
        prescribed_mg: Option<f64>,
        warnings: &mut Vec<String>,
    ) -> DosageCheck {
        if self.graph.drug_id(drug).is_none() {
            return DosageCheck::no_information(prescribed_mg, format!("{drug} is not in the dosage graph"));
        }
        let group = case.patient.age_group(self.config.adult_threshold);
        let mut attempts: Vec<String> = Vec::new();
        if let Some(usages) = monograph.and_then(|m| m.usages.as_ref()) {
            for (disease, codes) in usages {
                let hits = codes
                    .iter()
                    .filter_map(|c| parse_icd10(c).ok())
                    .any(|c| diagnoses.contains(c.category()));
                if hits {
                    attempts.push(disease.clone());
                }
            }
        }
        attempts.extend(case.patient.diagnoses.iter().map(|d| d.text.clone()));
        let mut seen = HashSet::new();
        attempts.retain(|a| seen.insert(a.to_lowercase()));

        let age = f64::from(case.patient.age_years);
        let mut last_reason = format!("no {} dosage for {drug}", group.graph_label());
        for attempt in &attempts {
            match recommend(&self.graph, drug, group, attempt, age, &self.gateway) {
                Ok(found @ Recommendation::Found { .. }) => {
                    let Recommendation::Found { disease, .. } = &found else {
                        unreachable!()
                    };
                    let Some(baseline) = found.baseline().cloned() else {
                        last_reason = format!("no initial dosage for {drug} / {disease}");
                        continue;
                    };
                    return DosageCheck {
                        fit: flag_deviation_mg(prescribed_mg, &baseline.dosage_text),
                        prescribed_mg,
                        disease: Some(disease.clone()),
                        reason: parse_mg_quantity(&baseline.dosage_text)
                            .is_none()
                            .then(|| "baseline has no mg quantity".to_string())
                            .or_else(|| {
                                prescribed_mg
                                    .is_none()
                                    .then(|| "prescribed strength unknown".to_string())
                            }),
                        baseline: Some(baseline),
                    };
                }
                Ok(Recommendation::NoInformation { reason }) => last_reason = reason,
                Err(e) => {
                    warnings.push(format!("{drug} / {attempt}: {e}"));
                    last_reason = e.to_string();
                }
            }
        }
        DosageCheck::no_information(prescribed_mg, last_reason)
    }

    fn component(
        &self,
        name: &str,
        prescribed_mg: Option<f64>,
        case: &PrescriptionCase,
        diagnoses: &BTreeSet<IcdCategory>,
        warnings: &mut Vec<String>,
    ) -> ComponentReport {
        let resolved = fuzzy_match(name, self.corpus.names(), self.config.fuzzy_threshold);
        let monograph = resolved.matched_ingredient.as_deref().and_then(|n| self.corpus.get(n));
        if resolved.method == MatchMethod::None {
            warnings.push(format!("{name}: no monograph match (best score {:.3})", resolved.score));
        }
        let lookup_name = resolved
            .matched_ingredient
            .clone()
            .unwrap_or_else(|| name.to_lowercase());
        let usage = match find_usage_codes(&lookup_name, monograph, &self.gateway) {
            Ok(u) => {
                warnings.extend(u.warnings.iter().map(|w| format!("{name}: {w}")));
                Some(u)
            }
            Err(e) => {
                warnings.push(format!("{name}: {e}"));
                None
            }
        };
        let indication = IndicationAssessment::new(&lookup_name, usage.as_ref(), diagnoses, self.config.match_mode);
        let dosage = if indication.label == IndicationFit::Inappropriate {
            DosageCheck::not_evaluated()
        } else {
            self.dosage_check(&lookup_name, monograph, case, diagnoses, prescribed_mg, warnings)
        };
        ComponentReport {
            name: name.to_string(),
            resolved,
            indication,
            dosage,
        }
    }

    fn item(&self, case: &PrescriptionCase, diagnoses: &BTreeSet<IcdCategory>, item: &PrescriptionItem) -> ItemReport {
        let mut warnings = Vec::new();
        let mut names = ingredient_components(&item.ingredient_name_raw);
        if names.is_empty() {
            names.push(item.ingredient_name_raw.trim().to_string());
        }
        let instruction_mg = parse_mg_quantity(&item.dose_instruction).map(|q| q.low);
        let strengths: Vec<Option<f64>> = if names.len() == 1 {
            vec![item
                .strength_mg
                .or(item.component_strengths_mg.first().copied())
                .or(instruction_mg)]
        } else if item.component_strengths_mg.len() == names.len() {
            item.component_strengths_mg.iter().copied().map(Some).collect()
        } else {
            warnings.push("component strengths not given per ingredient".into());
            vec![None; names.len()]
        };
        let components: Vec<ComponentReport> = names
            .iter()
            .zip(strengths)
            .map(|(n, mg)| self.component(n, mg, case, diagnoses, &mut warnings))
            .collect();
        let refs: Vec<&ComponentReport> = components.iter().collect();
        let fit = FitStatus::new(aggregate_fi(&refs), aggregate_fd(&refs));
        let checked = verdict_of(fit);
        if let Some(w) = &checked.warning {
            warnings.push(w.clone());
        }
        let caution = checked.caution || components.iter().any(|c| c.indication.caution);
        let mut explanation: Vec<String> = components.iter().map(explain_component).collect();
        explanation.push(match checked.aspect {
            None => format!("Conclusion: {}", checked.verdict),
            Some(Aspect::Indication) => format!("Conclusion: {} (indication)", checked.verdict),
            Some(Aspect::Dosage) => format!("Conclusion: {} (dosage)", checked.verdict),
        });
        ItemReport {
            ingredient: item.ingredient_name_raw.clone(),
            brand: item.brand_text.clone(),
            components,
            fit,
            verdict: checked.verdict,
            aspect: checked.aspect,
            caution,
            warnings,
            explanation: explanation.join("\n"),
        }
    }

    fn interaction_summary(&self, items: &[ItemReport], warnings: &mut Vec<String>) -> Option<String> {
        let grounding = self.interactions.as_ref()?;
        if grounding.index.is_empty() {
            return None;
        }
        let mut picked: Vec<usize> = Vec::new();
        for c in items.iter().flat_map(|i| &i.components) {
            let query = c.resolved.matched_ingredient.as_deref().unwrap_or(&c.name);
            match grounding
                .index
                .retrieve(query, grounding.embedder.as_ref(), self.config.interaction_k.max(1))
            {
                Ok(hits) => {
                    for h in hits
                        .into_iter()
                        .filter(|h| h.score >= self.config.interaction_min_score)
                    {
                        if !picked.contains(&h.triplet_id) {
                            picked.push(h.triplet_id);
                        }
                    }
                }
                Err(e) => warnings.push(format!("interaction retrieval for {query}: {e}")),
            }
        }
        if picked.is_empty() {
            return None;
        }
        let triplets: Vec<_> = picked.iter().map(|&i| &grounding.index.triplets()[i]).collect();
        match summarize(&triplets, &self.gateway) {
            Ok(s) => Some(s),
            Err(e) => {
                warnings.push(format!("interaction summary: {e}"));
                None
            }
        }
    }

    pub fn verify_case(&self, case: &PrescriptionCase) -> VerificationReport {
        let mut warnings = Vec::new();
        if let Err(e) = case.validate(self.config.adult_threshold) {
            warnings.push(e.to_string());
        }
        let mut diagnoses = BTreeSet::new();
        for d in &case.patient.diagnoses {
            match diagnosis_categories(d, &self.gateway) {
                Ok((cats, ws)) => {
                    diagnoses.extend(cats);
                    warnings.extend(ws.into_iter().map(|w| format!("diagnosis {:?}: {w}", d.text)));
                }
                Err(e) => warnings.push(format!("diagnosis {:?}: {e}", d.text)),
            }
        }
        let items: Vec<ItemReport> = case.items.iter().map(|i| self.item(case, &diagnoses, i)).collect();
        let overall = if !items.is_empty() && items.iter().all(|i| i.verdict == Verdict::Appropriate) {
            Verdict::Appropriate
        } else {
            Verdict::Inappropriate
        };
        let interaction_summary = self.interaction_summary(&items, &mut warnings);
        let lm_review = self
            .config
            .lm_review
            .then(|| self.review(case, interaction_summary.as_deref(), &mut warnings))
            .flatten();
        VerificationReport {
            case_id: case.case_id.clone(),
            age_years: case.patient.age_years,
            age_group: case.patient.age_group(self.config.adult_threshold),
            diagnosis_categories: diagnoses,
            items,
            overall,
            warnings,
            interaction_summary,
            lm_review,
        }
    }

    fn review(&self, case: &PrescriptionCase, summary: Option<&str>, warnings: &mut Vec<String>) -> Option<String> {
        let input = extract::to_labeled_text(case);
        let request = match summary {
            Some(s) => LmRequest::new(template::INTERACTION_EVALUATION).var(template::INTERACTION_SUMMARY_SLOT, s),
            None => LmRequest::new(template::BASE_EVALUATION),
        }
        .input(input);
        match self.gateway.complete(&request) {
            Ok(r) => Some(r.text),
            Err(e) => {
                warnings.push(format!("review: {e}"));
                None
            }
        }
    }

    /// Verifies cases on up to `parallelism` threads. Reports come back in
    /// input order.
    pub fn verify_batch(
        &self,
        cases: &[PrescriptionCase],
        parallelism: usize,
    ) -> Result<Vec<VerificationReport>, PipelineError> {
        let mut ids = HashSet::new();
        if let Some(dup) = cases.iter().find(|c| !ids.insert(c.case_id.as_str())) {
            return Err(PipelineError::DuplicateCaseId(dup.case_id.clone()));
        }
        let workers = parallelism.clamp(1, cases.len().max(1));
        if workers == 1 {
            return Ok(cases.iter().map(|c| self.verify_case(c)).collect());
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<VerificationReport>>> = Mutex::new(vec![None; cases.len()]);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(case) = cases.get(i) else { break };
                    let report = self.verify_case(case);
                    slots.lock().expect("no panics while holding")[i] = Some(report);
                });
            }
        });
        Ok(slots
            .into_inner()
            .expect("workers finished")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect())
    }
}
