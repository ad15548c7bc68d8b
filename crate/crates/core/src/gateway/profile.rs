//! Sampling parameters and per-model hyperparameter profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmParams {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub max_tokens: u32,
}

impl LmParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidParams(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidParams("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamProfile {
    pub name: String,
    pub temperature: f64,
    /// Allowed temperature band for models tuned within a range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_range: Option<(f64, f64)>,
    pub top_p: f64,
    /// `None` means the provider does not accept top-k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub max_tokens: u32,
    /// template id → temperature
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub task_temperature: BTreeMap<String, f64>,
}

impl ParamProfile {
    pub fn supports_top_k(&self) -> bool {
        self.top_k.is_some()
    }

    pub fn defaults_for(&self, template_id: &str) -> LmParams {
        LmParams {
            temperature: self
                .task_temperature
                .get(template_id)
                .copied()
                .unwrap_or(self.temperature),
            top_p: self.top_p,
            top_k: self.top_k,
            max_tokens: self.max_tokens,
        }
    }

    /// Adapts caller-supplied params to what this profile accepts.
    /// Returns the adjusted params and any warnings about dropped settings.
    pub fn conform(&self, params: LmParams) -> (LmParams, Vec<String>) {
        let mut params = params;
        let mut warnings = Vec::new();
        if params.top_k.is_some() && !self.supports_top_k() {
            warnings.push(format!(
                "top_k {} dropped: profile {:?} has top-k disabled",
                params.top_k.unwrap_or_default(),
                self.name
            ));
            params.top_k = None;
        }
        if let Some((lo, hi)) = self.temperature_range {
            if params.temperature < lo || params.temperature > hi {
                let clamped = params.temperature.clamp(lo, hi);
                warnings.push(format!(
                    "temperature {} clamped to {clamped} for profile {:?}",
                    params.temperature, self.name
                ));
                params.temperature = clamped;
            }
        }
        (params, warnings)
    }
}

fn profile(name: &str, temperature: f64, top_p: f64, top_k: Option<u32>) -> ParamProfile {
    ParamProfile {
        name: name.to_string(),
        temperature,
        temperature_range: None,
        top_p,
        top_k,
        max_tokens: 2048,
        task_temperature: BTreeMap::new(),
    }
}

/// Seed profiles for the evaluated model families.
pub fn builtin_profiles() -> Vec<ParamProfile> {
    let mut llama_8b = profile("llama3.1-8b", 0.2, 0.7, Some(50));
    llama_8b.temperature_range = Some((0.0, 0.5));
    llama_8b
        .task_temperature
        .insert(super::template::INTERACTION_SUMMARY.to_string(), 0.5);
    vec![
        llama_8b,
        profile("llama3.1-70b", 0.0, 0.7, Some(50)),
        profile("qwen2-72b", 0.0, 0.7, Some(50)),
        profile("llama3.1-405b", 0.0, 0.7, Some(50)),
        profile("gpt-4o-mini", 1.0, 1.0, None),
        profile("claude-3.5-sonnet", 1.0, 0.999, None),
        profile("stub", 0.0, 0.7, Some(50)),
    ]
}

pub fn builtin_profile(name: &str) -> Option<ParamProfile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_model_settings_accepted() {
        let p = builtin_profile("llama3.1-70b").unwrap();
        let params = LmParams {
            temperature: 0.0,
            top_p: 0.7,
            top_k: Some(50),
            max_tokens: 512,
        };
        params.validate().unwrap();
        let (out, warnings) = p.conform(params);
        assert_eq!(out, params);
        assert!(warnings.is_empty());
        assert_eq!(
            p.defaults_for("anything"),
            LmParams {
                max_tokens: 2048,
                ..params
            }
        );
    }

    #[test]
    fn top_k_dropped_for_closed_models() {
        for name in ["gpt-4o-mini", "claude-3.5-sonnet"] {
            let p = builtin_profile(name).unwrap();
            let (out, warnings) = p.conform(LmParams {
                temperature: 1.0,
                top_p: 1.0,
                top_k: Some(50),
                max_tokens: 10,
            });
            assert_eq!(out.top_k, None);
            assert_eq!(warnings.len(), 1, "{warnings:?}");
        }
        assert_eq!(builtin_profile("claude-3.5-sonnet").unwrap().top_p, 0.999);
    }

    #[test]
    fn small_llama_band_and_task_override() {
        let p = builtin_profile("llama3.1-8b").unwrap();
        assert_eq!(
            p.defaults_for(super::super::template::INTERACTION_SUMMARY).temperature,
            0.5
        );
        let (out, w) = p.conform(LmParams {
            temperature: 0.9,
            top_p: 0.7,
            top_k: Some(50),
            max_tokens: 8,
        });
        assert_eq!(out.temperature, 0.5);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn param_validation() {
        let ok = LmParams {
            temperature: 0.0,
            top_p: 0.7,
            top_k: None,
            max_tokens: 1,
        };
        assert!(ok.validate().is_ok());
        assert!(LmParams { temperature: 2.5, ..ok }.validate().is_err());
        assert!(LmParams { top_p: 0.0, ..ok }.validate().is_err());
        assert!(LmParams { top_p: 1.01, ..ok }.validate().is_err());
        assert!(LmParams { max_tokens: 0, ..ok }.validate().is_err());
    }
}
