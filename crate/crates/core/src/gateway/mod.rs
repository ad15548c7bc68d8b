//! Provider-agnostic boundary for every language-model call.
//!
//! [`LmGateway`] renders a template, applies the hyperparameter profile,
//! enforces the concurrency limit and request spacing, retries transient
//! failures with exponential backoff, and keeps token/latency totals.
//! [`StubProvider`] answers deterministically so the engine runs offline.

pub mod profile;
pub mod remote;
pub mod stub;
pub mod template;
pub mod transport;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use profile::{builtin_profile, builtin_profiles, LmParams, ParamProfile};
pub use stub::StubProvider;
pub use template::{render_template, TemplateError, TemplateSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("language-model request timed out")]
    Timeout,
    #[error("rate limited by provider (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },
    #[error("language-model gateway is disabled")]
    Disabled,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("gateway configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout | GatewayError::RateLimited { .. } | GatewayError::Provider { retryable: true, .. }
        )
    }
}

/// What a provider sees for one call.
#[derive(Debug, Clone, Copy)]
pub struct ProviderCall<'a> {
    pub template_id: &'a str,
    pub variables: &'a BTreeMap<String, String>,
    pub input: Option<&'a str>,
    /// Rendered template followed by the input text, if any.
    pub prompt: &'a str,
    pub params: &'a LmParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub generated_tokens: Option<u64>,
    pub latency_ms: Option<u64>,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError>;
}

/// Refuses every call.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisabledProvider;

impl Provider for DisabledProvider {
    fn name(&self) -> &str {
        "disabled"
    }

    fn complete(&self, _call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError> {
        Err(GatewayError::Disabled)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmRequest {
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    /// Free text appended after the rendered template (e.g. the
    /// prescription under review).
    pub input: Option<String>,
    /// Overrides the profile defaults when set.
    pub params: Option<LmParams>,
}

impl LmRequest {
    pub fn new(template_id: &str) -> Self {
        Self {
            template_id: template_id.to_string(),
            ..Self::default()
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn input(mut self, text: impl Into<String>) -> Self {
        self.input = Some(text.into());
        self
    }

    pub fn params(mut self, params: LmParams) -> Self {
        self.params = Some(params);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmResponse {
    pub text: String,
    pub generated_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32, error: &GatewayError) -> Duration {
        let backoff = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(32))
            .min(self.max_delay_ms);
        let ms = match error {
            GatewayError::RateLimited {
                retry_after_ms: Some(after),
            } => (*after).max(backoff),
            _ => backoff,
        };
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub generated_tokens: u64,
    pub latency_ms: u64,
}

/// Counting semaphore plus minimum spacing between request starts.
struct Limiter {
    max_concurrent: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    min_interval: Duration,
    last_start: Mutex<Option<Instant>>,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max_concurrent: usize, min_interval: Duration) -> Self {
        Self {
            max_concurrent: max_concurrent.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            min_interval,
            last_start: Mutex::new(None),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max_concurrent {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        drop(n);
        if !self.min_interval.is_zero() {
            let mut last = self.last_start.lock().expect("limiter poisoned");
            if let Some(prev) = *last {
                let next = prev + self.min_interval;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                }
            }
            *last = Some(Instant::now());
        }
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LmGateway {
    provider: Arc<dyn Provider>,
    profile: ParamProfile,
    templates: TemplateSet,
    retry: RetryPolicy,
    limiter: Limiter,
    calls: AtomicU64,
    tokens: AtomicU64,
    latency: AtomicU64,
}

impl std::fmt::Debug for LmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LmGateway")
            .field("provider", &self.provider.name())
            .field("profile", &self.profile.name)
            .finish_non_exhaustive()
    }
}

impl LmGateway {
    pub fn new(provider: Arc<dyn Provider>, profile: ParamProfile) -> Self {
        Self {
            provider,
            profile,
            templates: TemplateSet::default(),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(4, Duration::ZERO),
            calls: AtomicU64::new(0),
            tokens: AtomicU64::new(0),
            latency: AtomicU64::new(0),
        }
    }

    pub fn stub(stub: StubProvider) -> Self {
        Self::new(
            Arc::new(stub),
            builtin_profile("stub").expect("stub profile is built in"),
        )
    }

    pub fn disabled() -> Self {
        Self::new(
            Arc::new(DisabledProvider),
            builtin_profile("stub").expect("stub profile is built in"),
        )
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limits(mut self, max_concurrent: usize, min_interval: Duration) -> Self {
        self.limiter = Limiter::new(max_concurrent, min_interval);
        self
    }

    pub fn with_template(mut self, id: &str, text: &str) -> Self {
        self.templates.insert(id, text);
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn profile(&self) -> &ParamProfile {
        &self.profile
    }

    pub fn render(&self, request: &LmRequest) -> Result<String, GatewayError> {
        let mut prompt = self.templates.render(&request.template_id, &request.variables)?;
        if let Some(input) = &request.input {
            prompt.push('\n');
            prompt.push_str(input);
        }
        Ok(prompt)
    }

    pub fn complete(&self, request: &LmRequest) -> Result<LmResponse, GatewayError> {
        let prompt = self.render(request)?;
        let requested = request
            .params
            .unwrap_or_else(|| self.profile.defaults_for(&request.template_id));
        requested.validate()?;
        let (params, warnings) = self.profile.conform(requested);
        for w in warnings {
            log::warn!("{w}");
        }
        let call = ProviderCall {
            template_id: &request.template_id,
            variables: &request.variables,
            input: request.input.as_deref(),
            prompt: &prompt,
            params: &params,
        };

        let mut attempt = 0;
        loop {
            let started = Instant::now();
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.complete(&call)
            };
            match result {
                Ok(reply) => {
                    let latency_ms = reply.latency_ms.unwrap_or_else(|| started.elapsed().as_millis() as u64);
                    let generated_tokens = reply
                        .generated_tokens
                        .unwrap_or_else(|| reply.text.split_whitespace().count() as u64);
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    self.tokens.fetch_add(generated_tokens, Ordering::Relaxed);
                    self.latency.fetch_add(latency_ms, Ordering::Relaxed);
                    return Ok(LmResponse {
                        text: reply.text,
                        generated_tokens,
                        latency_ms,
                    });
                }
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    let wait = self.retry.delay(attempt, &e);
                    log::warn!(
                        "{} call failed ({e}); retry {} in {:?}",
                        request.template_id,
                        attempt + 1,
                        wait
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn usage(&self) -> UsageTotals {
        UsageTotals {
            calls: self.calls.load(Ordering::Relaxed),
            generated_tokens: self.tokens.load(Ordering::Relaxed),
            latency_ms: self.latency.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Stub,
    Disabled,
    OpenaiCompatible,
}

/// Gateway settings. Secrets never live here: the API key is read from
/// the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "GatewayConfig::default_profile")]
    pub profile: String,
    #[serde(default = "GatewayConfig::default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "GatewayConfig::default_max_concurrent")]
    pub max_concurrent: usize,
    /// 0 disables request spacing.
    #[serde(default)]
    pub requests_per_minute: u32,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Stub,
            model: None,
            endpoint: None,
            profile: Self::default_profile(),
            api_key_env: Self::default_api_key_env(),
            max_concurrent: Self::default_max_concurrent(),
            requests_per_minute: 0,
            timeout_secs: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl GatewayConfig {
    fn default_profile() -> String {
        "stub".into()
    }

    fn default_api_key_env() -> String {
        "RXCHECK_API_KEY".into()
    }

    fn default_max_concurrent() -> usize {
        4
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GatewayError> {
        if let Ok(table) = text.parse::<toml::Table>() {
            if table.contains_key("api_key") {
                return Err(GatewayError::Config(
                    "api_key must not appear in config files; set the environment variable named by api_key_env".into(),
                ));
            }
        }
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Builds the gateway. `stub` supplies the offline provider when the
    /// config selects it.
    pub fn build(&self, stub: StubProvider) -> Result<LmGateway, GatewayError> {
        let profile = builtin_profile(&self.profile)
            .ok_or_else(|| GatewayError::Config(format!("unknown params profile {:?}", self.profile)))?;
        let provider: Arc<dyn Provider> = match self.provider {
            ProviderKind::Stub => Arc::new(stub),
            ProviderKind::Disabled => Arc::new(DisabledProvider),
            ProviderKind::OpenaiCompatible => self.remote_provider()?,
        };
        let spacing = if self.requests_per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_millis(60_000 / u64::from(self.requests_per_minute))
        };
        Ok(LmGateway::new(provider, profile)
            .with_retry(self.retry)
            .with_limits(self.max_concurrent, spacing))
    }

    fn remote_provider(&self) -> Result<Arc<dyn Provider>, GatewayError> {
        let model = self
            .model
            .clone()
            .ok_or_else(|| GatewayError::Config("remote provider needs `model`".into()))?;
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("remote provider needs `endpoint`".into()))?;
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", self.api_key_env)))?;
        let transport = self.http_transport()?;
        Ok(Arc::new(remote::RemoteProvider::new(model, endpoint, key, transport)))
    }

    #[cfg(feature = "http")]
    fn http_transport(&self) -> Result<Arc<dyn transport::Transport>, GatewayError> {
        let timeout = Duration::from_secs(self.timeout_secs.unwrap_or(60));
        Ok(Arc::new(transport::HttpTransport::new(timeout)))
    }

    #[cfg(not(feature = "http"))]
    fn http_transport(&self) -> Result<Arc<dyn transport::Transport>, GatewayError> {
        Err(GatewayError::Config("remote providers need the `http` feature".into()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::AtomicUsize;

    use super::*;

    struct Flaky {
        failures: Mutex<Vec<GatewayError>>,
        calls: AtomicUsize,
    }

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.failures.lock().unwrap().pop() {
                Some(e) => Err(e),
                None => Ok(ProviderReply {
                    text: "ok done".into(),
                    generated_tokens: None,
                    latency_ms: Some(7),
                }),
            }
        }
    }

    fn fast_retry(max_retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    #[test]
    fn stub_lookup_by_rendered_prompt() {
        let gw = LmGateway::stub(StubProvider::new().with_response("ICD for hypertension", "I10"));
        let resp = gw
            .complete(&LmRequest::new(template::RAW).var("prompt", "ICD for hypertension"))
            .unwrap();
        assert_eq!(resp.text, "I10");
        assert_eq!(resp.generated_tokens, 1);
        let echo = gw
            .complete(&LmRequest::new(template::RAW).var("prompt", "hello there"))
            .unwrap();
        assert_eq!(echo.text, "hello there");
        assert_eq!(
            gw.usage(),
            UsageTotals {
                calls: 2,
                generated_tokens: 3,
                latency_ms: 0
            }
        );
    }

    #[test]
    fn stub_icd_table() {
        let gw = LmGateway::stub(StubProvider::new().with_disease_codes("Hypertension", ["I10"]));
        let r = gw
            .complete(&LmRequest::new(template::ICD_FOR_DISEASE).var("disease", "  hypertension"))
            .unwrap();
        assert_eq!(r.text, "I10");
    }

    #[test]
    fn retries_transient_errors_then_succeeds() {
        let flaky = Arc::new(Flaky {
            failures: Mutex::new(vec![
                GatewayError::Timeout,
                GatewayError::RateLimited {
                    retry_after_ms: Some(1),
                },
            ]),
            calls: AtomicUsize::new(0),
        });
        let gw = LmGateway::new(flaky.clone(), builtin_profile("stub").unwrap()).with_retry(fast_retry(3));
        let r = gw.complete(&LmRequest::new(template::RAW).var("prompt", "x")).unwrap();
        assert_eq!(r.latency_ms, 7);
        assert_eq!(r.generated_tokens, 2);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn surfaces_error_after_retry_cap() {
        let flaky = Arc::new(Flaky {
            failures: Mutex::new(vec![GatewayError::Timeout; 5]),
            calls: AtomicUsize::new(0),
        });
        let gw = LmGateway::new(flaky.clone(), builtin_profile("stub").unwrap()).with_retry(fast_retry(2));
        let err = gw
            .complete(&LmRequest::new(template::RAW).var("prompt", "x"))
            .unwrap_err();
        assert_eq!(err, GatewayError::Timeout);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let flaky = Arc::new(Flaky {
            failures: Mutex::new(vec![GatewayError::Provider {
                message: "bad".into(),
                retryable: false,
            }]),
            calls: AtomicUsize::new(0),
        });
        let gw = LmGateway::new(flaky.clone(), builtin_profile("stub").unwrap()).with_retry(fast_retry(3));
        assert!(gw.complete(&LmRequest::new(template::RAW).var("prompt", "x")).is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay_ms: 100,
            max_delay_ms: 350,
        };
        let t = GatewayError::Timeout;
        assert_eq!(p.delay(0, &t), Duration::from_millis(100));
        assert_eq!(p.delay(1, &t), Duration::from_millis(200));
        assert_eq!(p.delay(2, &t), Duration::from_millis(350));
        let rl = GatewayError::RateLimited {
            retry_after_ms: Some(1000),
        };
        assert_eq!(p.delay(0, &rl), Duration::from_millis(1000));
    }

    #[test]
    fn disabled_and_template_errors() {
        let gw = LmGateway::disabled();
        assert_eq!(
            gw.complete(&LmRequest::new(template::RAW).var("prompt", "x"))
                .unwrap_err(),
            GatewayError::Disabled
        );
        let gw = LmGateway::stub(StubProvider::new());
        assert!(matches!(
            gw.complete(&LmRequest::new(template::INTERACTION_EVALUATION)),
            Err(GatewayError::Template(TemplateError::MissingVariable(_)))
        ));
        let bad = LmParams {
            temperature: 3.0,
            top_p: 0.5,
            top_k: None,
            max_tokens: 1,
        };
        assert!(matches!(
            gw.complete(&LmRequest::new(template::BASE_EVALUATION).params(bad)),
            Err(GatewayError::InvalidParams(_))
        ));
    }

    #[test]
    fn input_is_appended() {
        let gw = LmGateway::stub(StubProvider::new());
        let r = gw
            .complete(&LmRequest::new(template::BASE_EVALUATION).input("Age: 45"))
            .unwrap();
        assert!(r.text.ends_with("Prescription:\nAge: 45"));
    }

    #[test]
    fn concurrent_callers_share_gateway() {
        let gw = Arc::new(LmGateway::stub(StubProvider::new()).with_limits(2, Duration::ZERO));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let gw = gw.clone();
                std::thread::spawn(move || {
                    gw.complete(&LmRequest::new(template::RAW).var("prompt", format!("p{i}")))
                        .unwrap()
                        .text
                })
            })
            .collect();
        let mut outs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        outs.sort();
        assert_eq!(outs.len(), 8);
        assert_eq!(gw.usage().calls, 8);
    }

    #[test]
    fn config_parsing() {
        let cfg = GatewayConfig::from_toml_str(
            "provider = \"openai-compatible\"\nmodel = \"gpt-4o-mini\"\nendpoint = \"https://api.openai.com/v1\"\nprofile = \"gpt-4o-mini\"\n",
        )
        .unwrap();
        assert_eq!(cfg.provider, ProviderKind::OpenaiCompatible);
        assert_eq!(cfg.api_key_env, "RXCHECK_API_KEY");
        assert!(GatewayConfig::from_toml_str("provider = \"stub\"\napi_key = \"sk-123\"\n").is_err());
        assert!(GatewayConfig::from_toml_str("provider = \"stub\"\nbogus = 1\n").is_err());
        let stub = GatewayConfig::default().build(StubProvider::new()).unwrap();
        assert_eq!(stub.provider_name(), "stub");
        let unknown = GatewayConfig {
            profile: "nope".into(),
            ..GatewayConfig::default()
        };
        assert!(matches!(
            unknown.build(StubProvider::new()),
            Err(GatewayError::Config(_))
        ));
        let remote = GatewayConfig {
            api_key_env: "RXCHECK_TEST_UNSET_KEY_VAR".into(),
            ..cfg
        };
        assert!(matches!(
            remote.build(StubProvider::new()),
            Err(GatewayError::Config(_))
        ));
    }
}
