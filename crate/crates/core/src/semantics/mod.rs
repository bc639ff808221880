//! Scene reasoning: retrieval over the knowledge base, prompt assembly,
//! backend inference and validated safety specs.

pub mod backend;
pub mod kb;
pub mod parse;
pub mod prompt;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    AlwaysMalformed, BackendError, DeterministicBackend, NoisyBackend, ReasonerBackend,
    RemoteBackend, RemoteConfig,
};
pub use kb::{
    default_entries, index, index_with_alpha, retrieve, KnowledgeBase, KnowledgeEntry, Retrieved,
    DEFAULT_TOP_K,
};
pub use parse::{parse_response, MalformedOutput, ParseLimits, ParsedAnswer};
pub use prompt::{build_prompt, PROMPT_TEMPLATE};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(2);
pub const MAX_BUFFER: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("invalid knowledge entry: {0}")]
    InvalidEntry(String),
    #[error("malformed backend output: {0}")]
    Malformed(#[from] MalformedOutput),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub capture_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecSource {
    Backend,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub is_dynamic: bool,
    pub z_min: f64,
    pub buffer_radius: f64,
    pub matched_class: String,
    pub source: SpecSource,
    /// Capture time of the caption the spec was derived from.
    pub issued_at: f64,
}

impl SafetySpec {
    pub fn check(&self, limits: &ParseLimits) -> bool {
        (0.0..=limits.z_max).contains(&self.z_min)
            && (0.0..=MAX_BUFFER).contains(&self.buffer_radius)
            && self.issued_at >= 0.0
    }

    /// The safety-relevant fields, ignoring provenance.
    pub fn fields(&self) -> (bool, f64, f64) {
        (self.is_dynamic, self.z_min, self.buffer_radius)
    }
}

fn top_entry<'a>(kb: &'a KnowledgeBase, caption: &str) -> (Vec<Retrieved>, &'a KnowledgeEntry) {
    let hits = retrieve(kb, caption, DEFAULT_TOP_K);
    let top = &kb.entries()[hits[0].id];
    (hits, top)
}

fn run_backend(
    kb: &KnowledgeBase,
    hits: &[Retrieved],
    caption: &str,
    backend: &mut dyn ReasonerBackend,
    deadline: Duration,
    limits: &ParseLimits,
) -> Result<ParsedAnswer, SemanticsError> {
    let entries: Vec<&KnowledgeEntry> = hits.iter().map(|h| &kb.entries()[h.id]).collect();
    let prompt = build_prompt(caption, &entries);
    let started = Instant::now();
    let raw = backend.infer(&prompt, deadline)?;
    if started.elapsed() > deadline {
        return Err(BackendError::Timeout.into());
    }
    Ok(parse_response(&raw, limits)?)
}

/// Full pipeline without fallback: malformed output, timeouts and transport
/// failures are returned as errors.
pub fn infer_safety_strict(
    kb: &KnowledgeBase,
    caption: &Caption,
    backend: &mut dyn ReasonerBackend,
    deadline: Duration,
    limits: &ParseLimits,
) -> Result<SafetySpec, SemanticsError> {
    let (hits, top) = top_entry(kb, &caption.text);
    let ans = run_backend(kb, &hits, &caption.text, backend, deadline, limits)?;
    Ok(SafetySpec {
        is_dynamic: ans.is_dynamic,
        z_min: ans.z_min,
        buffer_radius: top.buffer_radius.clamp(0.0, MAX_BUFFER),
        matched_class: top.class_name.clone(),
        source: SpecSource::Backend,
        issued_at: caption.capture_time.max(0.0),
    })
}

/// Spec built from the top retrieved entry alone.
pub fn fallback_spec(kb: &KnowledgeBase, caption: &Caption, limits: &ParseLimits) -> SafetySpec {
    let (_, top) = top_entry(kb, &caption.text);
    SafetySpec {
        is_dynamic: top.is_dynamic,
        z_min: top.min_safe_altitude.clamp(0.0, limits.z_max),
        buffer_radius: top.buffer_radius.clamp(0.0, MAX_BUFFER),
        matched_class: top.class_name.clone(),
        source: SpecSource::Fallback,
        issued_at: caption.capture_time.max(0.0),
    }
}

/// Retrieve, prompt, infer and parse; any backend failure falls back to the
/// top retrieved entry. Total for every caption.
pub fn infer_safety(
    kb: &KnowledgeBase,
    caption: &Caption,
    backend: &mut dyn ReasonerBackend,
    deadline: Duration,
    limits: &ParseLimits,
) -> SafetySpec {
    infer_safety_strict(kb, caption, backend, deadline, limits)
        .unwrap_or_else(|_| fallback_spec(kb, caption, limits))
}
