//! Prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Placeholder names may contain
//! spaces (the interaction prompt uses `{Indication query summarization}`).

use std::collections::BTreeMap;

use thiserror::Error;

pub const BASE_EVALUATION: &str = "base_evaluation";
pub const INTERACTION_EVALUATION: &str = "interaction_evaluation";
pub const ICD_FOR_DISEASE: &str = "icd_for_disease";
pub const ICD_FOR_INGREDIENT: &str = "icd_for_ingredient";
pub const DOSAGE_EXTRACTION: &str = "dosage_extraction";
pub const MATCH_DISEASE: &str = "match_disease";
pub const INTERACTION_SUMMARY: &str = "interaction_summary";
pub const STRUCTURE_PRESCRIPTION: &str = "structure_prescription";
/// Passes `{prompt}` through untouched.
pub const RAW: &str = "raw";

/// Slot filled with the interaction summary in [`INTERACTION_EVALUATION`].
pub const INTERACTION_SUMMARY_SLOT: &str = "Indication query summarization";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("unbound template variables: {}", .0.join(", "))]
    MissingVariable(Vec<String>),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
}

const BASE_EVALUATION_TEXT: &str = "\
You are a meticulous clinical pharmacist specializing in medication safety and appropriateness. Given a patient's
profile and prescription, your task is to thoroughly evaluate the prescription's suitability.
Pay close attention to the patient's age, medical conditions (especially kidney failure, liver disease, and
pregnancy), and any relevant allergies.
Follow these steps for each medication in the prescription:
1. Assess Patient Profile: Carefully review the patient's information to identify any potential risk factors
or contraindications.
2. Verify Indication: Determine if the medication or combination of medication is APPROPRIATE, INAPPROPRIATE, or
UNDERPRESCRIBED for the patient's diagnosed condition(s).
3. Verify Dosage and Administration (If Appropriate): If the medication is appropriate, confirm that the prescribed
dosage and administration instructions are safe and effective for the patient.
4. Conclusion: For each medication, provide a final assessment:
    * If APPROPRIATE, state \"APPROPRIATE\".
    * If INAPPROPRIATE, specify which aspect (e.g., dosage, active ingredient, interaction) is problematic and
provide a detailed explanation.
Prescription:";

const INTERACTION_EVALUATION_TEXT: &str = "\
You are a meticulous clinical pharmacist specializing in medication safety and appropriateness.
Given the reference materials bellow.
----------------------------------------
{Indication query summarization}
----------------------------------------
Your task is to thoroughly evaluate the prescription's suitability in english.
Pay close attention to the patient's age, medical conditions (especially kidney failure, liver disease, and
pregnancy), and any relevant allergies.
Follow these steps for each medication in the prescription:
1. Assess Patient Profile: Carefully review the patient's information to identify any potential risk factors or
contraindications.
2. Verify Indication: Determine if the medication or combination of medication is APPROPRIATE, INAPPROPRIATE,
or UNDERPRESCRIBED for the patient's diagnosed condition(s).
3. Verify Dosage and Administration (If Appropriate): If the medication is appropriate, confirm that the prescribed
dosage and administration instructions are safe and effective for the patient.
4. Conclusion: For each medication, provide a final assessment:
    * If APPROPRIATE, state \"APPROPRIATE\".
    * If INAPPROPRIATE, specify which aspect (e.g., dosage, active ingredient, interaction) is problematic and
provide a detailed explanation.
Prescription:";

const ICD_FOR_DISEASE_TEXT: &str = "\
List the ICD-10 codes for the condition below. Reply with the codes only, separated by commas.
Condition: {disease}";

const ICD_FOR_INGREDIENT_TEXT: &str = "\
List the ICD-10 codes of the conditions the active ingredient below is indicated to treat.
Reply with the codes only, separated by commas.
Active ingredient: {ingredient}";

const DOSAGE_EXTRACTION_TEXT: &str = "\
Extract dosage facts for one active ingredient, age group and disease from the monograph text below.
Reply with JSON only, shaped as
{{\"dosages\": [{{\"name\": \"<dose phrase>\", \"type\": \"INITIAL_DOSAGE\" or \"SPECIFIC_DOSAGE\",
\"age_specific\": \"<age text or null>\", \"administration\": \"<route or null>\", \"indication\": \"<condition or null>\"}}]}}
Use INITIAL_DOSAGE for the starting dose and SPECIFIC_DOSAGE for doses that apply only under a stated condition.
Active ingredient: {ingredient}
Age group: {age_group}
Disease: {disease}
Monograph text (JSON object of route or context to text):
{contexts}";

const MATCH_DISEASE_TEXT: &str = "\
Pick the candidate condition closest in meaning to the diagnosis.
Reply with the candidate exactly as written, or NONE if nothing is related.
Diagnosis: {disease}
Candidates:
{candidates}";

const INTERACTION_SUMMARY_TEXT: &str = "\
Condense the interaction facts below into a short reference note for a pharmacist, one line per relevant fact.
{triplets}";

const STRUCTURE_PRESCRIPTION_TEXT: &str = "\
Rewrite the prescription text below as labeled lines, one fact per line:
Case: <identifier>
Age: <age in years>
Notes: <weight, kidney function or other notes>
Diagnosis: <condition> | <ICD-10 code if printed>
Item: <active ingredient(s), joined by +> | <brand> | <strength, e.g. 5 mg + 50 mg> | <dose instruction>
Prescription text:";

const RAW_TEXT: &str = "{prompt}";

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let builtin = [
            (BASE_EVALUATION, BASE_EVALUATION_TEXT),
            (INTERACTION_EVALUATION, INTERACTION_EVALUATION_TEXT),
            (ICD_FOR_DISEASE, ICD_FOR_DISEASE_TEXT),
            (ICD_FOR_INGREDIENT, ICD_FOR_INGREDIENT_TEXT),
            (DOSAGE_EXTRACTION, DOSAGE_EXTRACTION_TEXT),
            (MATCH_DISEASE, MATCH_DISEASE_TEXT),
            (INTERACTION_SUMMARY, INTERACTION_SUMMARY_TEXT),
            (STRUCTURE_PRESCRIPTION, STRUCTURE_PRESCRIPTION_TEXT),
            (RAW, RAW_TEXT),
        ];
        Self {
            templates: builtin
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn render(&self, id: &str, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let text = self
            .get(id)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))?;
        render(text, variables)
    }
}

/// Renders the built-in template `id`.
pub fn render_template(id: &str, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    TemplateSet::default().render(id, variables)
}

pub fn render(template: &str, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut missing: Vec<String> = Vec::new();
    let mut rest = template;
    let mut offset = 0;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let consumed = if tail.starts_with("{{") {
            out.push('{');
            2
        } else if tail.starts_with("}}") {
            out.push('}');
            2
        } else if tail.starts_with('}') {
            return Err(TemplateError::UnbalancedBrace(offset + pos));
        } else {
            let close = tail[1..]
                .find(['{', '}', '\n'])
                .filter(|&i| tail.as_bytes()[1 + i] == b'}')
                .ok_or(TemplateError::UnbalancedBrace(offset + pos))?;
            let name = &tail[1..1 + close];
            match variables.get(name) {
                Some(v) => out.push_str(v),
                None => {
                    if !missing.iter().any(|m| m == name) {
                        missing.push(name.to_string());
                    }
                }
            }
            close + 2
        };
        rest = &tail[consumed..];
        offset += pos + consumed;
    }
    out.push_str(rest);
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(TemplateError::MissingVariable(missing))
    }
}
