//! Deterministic offline provider.
//!
//! Responses depend only on the template id, the variables and the
//! rendered prompt. Lookup order: exact rendered-prompt table, then the
//! rule for the template id, then an echo of the prompt.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;

use super::template;
use super::{GatewayError, Provider, ProviderCall, ProviderReply};
use crate::dosage::closest_by_token_overlap;
use crate::dosage::extract::{extract_dosages, ExtractionOutput};
use crate::icd::normalize_name;
use crate::pipeline::extract::labeled_lines;

#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    prompts: BTreeMap<String, String>,
    /// normalized disease name → ICD-10 code strings
    icd_table: BTreeMap<String, Vec<String>>,
    /// normalized ingredient name → ICD-10 code strings
    ingredient_table: BTreeMap<String, Vec<String>>,
}

impl StubProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixed reply for an exact rendered prompt.
    pub fn with_response(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.prompts.insert(prompt.into(), response.into());
        self
    }

    pub fn with_disease_codes<I, S>(mut self, disease: &str, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.icd_table
            .insert(normalize_name(disease), codes.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_ingredient_codes<I, S>(mut self, ingredient: &str, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.ingredient_table
            .insert(normalize_name(ingredient), codes.into_iter().map(Into::into).collect());
        self
    }

    /// Loads a JSON map of disease name → list of ICD-10 strings.
    pub fn with_icd_mapping_file(mut self, path: &Path) -> Result<Self, GatewayError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        for (disease, codes) in map {
            self.icd_table.insert(normalize_name(&disease), codes);
        }
        Ok(self)
    }

    fn rule(&self, call: &ProviderCall<'_>) -> Option<String> {
        let var = |name: &str| call.variables.get(name).map(String::as_str).unwrap_or("");
        match call.template_id {
            template::ICD_FOR_DISEASE => Some(
                self.icd_table
                    .get(&normalize_name(var("disease")))
                    .map(|c| c.join(", "))
                    .unwrap_or_default(),
            ),
            template::ICD_FOR_INGREDIENT => Some(
                self.ingredient_table
                    .get(&normalize_name(var("ingredient")))
                    .map(|c| c.join(", "))
                    .unwrap_or_default(),
            ),
            template::DOSAGE_EXTRACTION => {
                let contexts: IndexMap<String, String> = serde_json::from_str(var("contexts")).unwrap_or_default();
                let out = ExtractionOutput {
                    dosages: extract_dosages(&contexts),
                };
                Some(serde_json::to_string(&out).expect("serializable"))
            }
            template::MATCH_DISEASE => {
                let candidates: Vec<&str> = var("candidates")
                    .lines()
                    .map(|l| l.trim().trim_start_matches("- ").trim())
                    .filter(|l| !l.is_empty())
                    .collect();
                Some(
                    closest_by_token_overlap(var("disease"), &candidates)
                        .unwrap_or("NONE")
                        .to_string(),
                )
            }
            template::INTERACTION_SUMMARY => Some(var("triplets").to_string()),
            template::STRUCTURE_PRESCRIPTION => Some(labeled_lines(call.input.unwrap_or("")).join("\n")),
            _ => None,
        }
    }
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError> {
        let text = self
            .prompts
            .get(call.prompt)
            .cloned()
            .or_else(|| self.rule(call))
            .unwrap_or_else(|| call.prompt.to_string());
        Ok(ProviderReply {
            generated_tokens: Some(text.split_whitespace().count() as u64),
            latency_ms: Some(0),
            text,
        })
    }
}
