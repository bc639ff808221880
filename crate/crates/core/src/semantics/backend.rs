//! Inference backends that turn a built prompt into raw model text.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::split_question;

pub const MAX_NEW_TOKENS: u32 = 20;
pub const MAX_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend exceeded its deadline")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
}

pub trait ReasonerBackend {
    fn name(&self) -> &'static str;
    /// Raw completion for `prompt`. Implementations must give up with
    /// `Timeout` once `deadline` has elapsed.
    fn infer(&mut self, prompt: &str, deadline: Duration) -> Result<String, BackendError>;
}

/// Reads the first context line of its own prompt and answers with it.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicBackend;

fn first_context_fields(prompt: &str) -> Option<(bool, f64)> {
    let line = prompt.lines().find(|l| l.starts_with("[Classification:"))?;
    let rest = line.strip_prefix("[Classification:")?.trim_start();
    let (flag, rest) = rest.split_once(" |")?;
    let is_dynamic = match flag.trim() {
        "yes" => true,
        "no" => false,
        _ => return None,
    };
    let alt = rest.split_once("Minimum Altitude:")?.1;
    let z: f64 = alt.split_once("meters")?.0.trim().parse().ok()?;
    z.is_finite().then_some((is_dynamic, z))
}

/// JSON answer in the same shape as the template example.
pub fn format_answer(is_dynamic: bool, z_min: f64) -> String {
    format!(
        "{{\"is_dynamic\": \"{}\", \"z_min\": {:?}}}",
        if is_dynamic { "yes" } else { "no" },
        z_min
    )
}

impl DeterministicBackend {
    pub fn answer(prompt: &str) -> String {
        match first_context_fields(prompt) {
            Some((d, z)) => format_answer(d, z),
            None => String::new(),
        }
    }
}

impl ReasonerBackend for DeterministicBackend {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn infer(&mut self, prompt: &str, _deadline: Duration) -> Result<String, BackendError> {
        Ok(Self::answer(prompt))
    }
}

/// Unreliable generator: half of the outputs are malformed, the rest are
/// well-formed JSON with random field values unrelated to the prompt.
#[derive(Debug, Clone)]
pub struct NoisyBackend {
    rng: ChaCha8Rng,
    malformed_prob: f64,
}

const GARBAGE: &[&str] = &[
    "The area looks safe to land",
    "{\"is_dynamic\": \"yes\"",
    "```json\n{\"classification\": \"no\", \"altitude\": 2}\n```",
    "{\"is_dynamic\": \"maybe\", \"z_min\": 1.0}",
    "{\"is_dynamic\": \"no\", \"z_min\": \"high\"}",
    "Classification: yes, Minimum Altitude: 3 meters",
    "",
];

impl NoisyBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_probability(seed, 0.5)
    }

    pub fn with_probability(seed: u64, malformed_prob: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            malformed_prob: malformed_prob.clamp(0.0, 1.0),
        }
    }
}

impl ReasonerBackend for NoisyBackend {
    fn name(&self) -> &'static str {
        "noisy"
    }

    fn infer(&mut self, _prompt: &str, _deadline: Duration) -> Result<String, BackendError> {
        if self.rng.random_bool(self.malformed_prob) {
            let i = self.rng.random_range(0..GARBAGE.len());
            return Ok(GARBAGE[i].to_string());
        }
        let d = self.rng.random_bool(0.5);
        let z = (self.rng.random_range(0.0..10.0_f64) * 10.0).round() / 10.0;
        Ok(format_answer(d, z))
    }
}

/// Always answers with prose that contains no JSON.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysMalformed;

impl ReasonerBackend for AlwaysMalformed {
    fn name(&self) -> &'static str {
        "malformed"
    }

    fn infer(&mut self, _prompt: &str, _deadline: Duration) -> Result<String, BackendError> {
        Ok("The area looks safe to land".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full chat-completions URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub api_key: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: MAX_NEW_TOKENS,
            api_key: None,
        }
    }
}

impl RemoteConfig {
    /// Defaults overridden by `SEMLAND_LLM_URL`, `SEMLAND_LLM_MODEL` and
    /// `SEMLAND_LLM_API_KEY` when set.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(u) = std::env::var("SEMLAND_LLM_URL") {
            c.url = u;
        }
        if let Ok(m) = std::env::var("SEMLAND_LLM_MODEL") {
            c.model = m;
        }
        c.api_key = std::env::var("SEMLAND_LLM_API_KEY").ok();
        c
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.url.is_empty() {
            return Err("remote backend needs an endpoint URL".into());
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(format!("temperature must be in [0, {MAX_TEMPERATURE}]"));
        }
        if self.max_tokens == 0 || self.max_tokens > MAX_NEW_TOKENS {
            return Err(format!("max_tokens must be in [1, {MAX_NEW_TOKENS}]"));
        }
        Ok(())
    }

    /// Chat-completion request body for `prompt`.
    pub fn request_body(&self, prompt: &str) -> Value {
        let (system, question) = split_question(prompt);
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": question},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stream": false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }
}

fn map_ureq(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}

impl ReasonerBackend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn infer(&mut self, prompt: &str, deadline: Duration) -> Result<String, BackendError> {
        let mut req = ureq::post(&self.cfg.url)
            .config()
            .timeout_global(Some(deadline))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.cfg.request_body(prompt))
            .map_err(map_ureq)?;
        let body: Value = resp.body_mut().read_json().map_err(map_ureq)?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::Transport("response has no choices[0].message.content".into())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::parse::{parse_response, ParseLimits};

    #[test]
    fn brick_building_answer() {
        let p = "Context:\n[Classification: no | Minimum Altitude: 0.0 meters | Text: brick building]\n";
        assert_eq!(
            DeterministicBackend::answer(p),
            "{\"is_dynamic\": \"no\", \"z_min\": 0.0}"
        );
    }

    #[test]
    fn dynamic_line_says_yes() {
        let p = "[Classification: yes | Minimum Altitude: 2.0 meters | Text: person]";
        assert!(DeterministicBackend::answer(p).contains("\"is_dynamic\": \"yes\""));
    }

    #[test]
    fn template_example_line_is_not_context() {
        // the example line in the template is prefixed with "Context: "
        let p = "Context: [Classification: no | Minimum Altitude: 0.0 meters | Text: x]";
        assert_eq!(DeterministicBackend::answer(p), "");
    }

    #[test]
    fn noisy_is_seeded_and_mixed() {
        let limits = ParseLimits::default();
        let run = |seed| {
            let mut b = NoisyBackend::new(seed);
            (0..200)
                .map(|_| b.infer("", Duration::ZERO).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        let ok = a
            .iter()
            .filter(|s| parse_response(s, &limits).is_ok())
            .count();
        assert!((70..=130).contains(&ok), "{ok} valid outputs");
    }

    #[test]
    fn remote_config_limits() {
        let mut c = RemoteConfig {
            url: "http://x".into(),
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.temperature = 0.7;
        assert!(c.validate().is_err());
        c.temperature = 0.2;
        c.max_tokens = 64;
        assert!(c.validate().is_err());
        assert!(RemoteConfig::default().validate().is_err());
    }
}
