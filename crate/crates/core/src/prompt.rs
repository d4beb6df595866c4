//! Composite prompts: a constraint set plus semantic text, packaged as a
//! generation request.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, sha256_hex};
use crate::compiler::{ConstraintSet, RelationKind};

pub const MAX_PROMPT_CHARS: usize = 2000;
pub const DEFAULT_TARGET_FACE_COUNT: u32 = 20_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("MissingSemanticPrompt: prompt text is empty")]
    MissingSemanticPrompt,
    #[error("PromptTooLong: {0} characters, limit is {MAX_PROMPT_CHARS}")]
    PromptTooLong(usize),
    #[error("InvalidConstraintSet: {0}")]
    InvalidConstraintSet(String),
    #[error("MalformedRequest: {0}")]
    MalformedRequest(String),
}

impl PromptError {
    pub fn code(&self) -> &'static str {
        match self {
            PromptError::MissingSemanticPrompt => "MissingSemanticPrompt",
            PromptError::PromptTooLong(_) => "PromptTooLong",
            PromptError::InvalidConstraintSet(_) => "InvalidConstraintSet",
            PromptError::MalformedRequest(_) => "MalformedRequest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SemanticPrompt {
    pub text: String,
    #[serde(default)]
    pub style_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_text: Option<String>,
}

impl SemanticPrompt {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.text.trim().is_empty() {
            return Err(PromptError::MissingSemanticPrompt);
        }
        let n = self.text.chars().count();
        if n > MAX_PROMPT_CHARS {
            return Err(PromptError::PromptTooLong(n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembleOptions {
    pub target_face_count: u32,
    pub backend_hints: BTreeMap<String, String>,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self { target_face_count: DEFAULT_TARGET_FACE_COUNT, backend_hints: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub constraint_set: ConstraintSet,
    /// [`render_constraint_text`] of `constraint_set`, for text-only backends.
    pub constraint_text: String,
    pub semantic_prompt: SemanticPrompt,
    pub seed: u64,
    pub target_face_count: u32,
    #[serde(default)]
    pub backend_hints: BTreeMap<String, String>,
}

impl GenerationRequest {
    /// Text sent to a language-only backend: semantic prompt, then constraints.
    pub fn backend_prompt(&self) -> String {
        let mut s = self.semantic_prompt.text.trim().to_string();
        if !self.semantic_prompt.style_tags.is_empty() {
            let _ = write!(s, ". style: {}", self.semantic_prompt.style_tags.join(", "));
        }
        let _ = write!(s, ". {}", self.constraint_text);
        s
    }

    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, PromptError> {
        canonical_request_bytes(self)
    }

    pub fn parse(bytes: &[u8]) -> Result<GenerationRequest, PromptError> {
        parse_request(bytes)
    }
}

fn request_id_of(req: &GenerationRequest) -> Result<String, PromptError> {
    let mut value = serde_json::to_value(req).map_err(|e| PromptError::MalformedRequest(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("request_id");
    }
    let bytes = serde_json::to_vec(&value).map_err(|e| PromptError::MalformedRequest(e.to_string()))?;
    Ok(sha256_hex(&bytes)[..16].to_string())
}

/// Build a deterministic request; `request_id` hashes everything else.
pub fn assemble(
    cs: &ConstraintSet,
    prompt: &SemanticPrompt,
    seed: u64,
    options: &AssembleOptions,
) -> Result<GenerationRequest, PromptError> {
    prompt.validate()?;
    cs.validate().map_err(|e| PromptError::InvalidConstraintSet(e.to_string()))?;
    let mut req = GenerationRequest {
        request_id: String::new(),
        constraint_set: cs.clone(),
        constraint_text: render_constraint_text(cs),
        semantic_prompt: prompt.clone(),
        seed,
        target_face_count: options.target_face_count,
        backend_hints: options.backend_hints.clone(),
    };
    req.request_id = request_id_of(&req)?;
    Ok(req)
}

fn relation_phrase(kind: RelationKind) -> &'static str {
    match kind {
        RelationKind::Above => "above",
        RelationKind::Contains => "contains",
        RelationKind::Adjacent => "adjacent to",
    }
}

/// Fixed template: global bounds, components ascending, relations in
/// canonical order. Lengths in meters with two decimals.
pub fn render_constraint_text(cs: &ConstraintSet) -> String {
    let e = cs.global_box.full_extents();
    let mut parts = vec![format!("overall bounds {:.2} x {:.2} x {:.2} m", e[0], e[1], e[2])];
    let mut components: Vec<_> = cs.components.iter().collect();
    components.sort_by_key(|c| c.component_id);
    for c in components {
        let a = c.extents_sorted.map(|x| x / c.extents_sorted[0]);
        parts.push(format!(
            "component {} ({}) aspect {:.2}:{:.2}:{:.2}",
            c.component_id,
            c.hardness.as_str(),
            a[0],
            a[1],
            a[2]
        ));
    }
    let mut relations: Vec<_> = cs.relations.iter().collect();
    relations.sort_by_key(|r| r.key());
    for r in relations {
        parts.push(format!("component {} {} component {}", r.subject, relation_phrase(r.kind), r.object));
    }
    parts.join("; ")
}

pub fn canonical_request_bytes(req: &GenerationRequest) -> Result<Vec<u8>, PromptError> {
    canonical::to_canonical_bytes(req).map_err(|e| PromptError::MalformedRequest(e.to_string()))
}

/// Parse a request file, checking the prompt, the constraint set and that
/// `request_id` matches the content.
pub fn parse_request(bytes: &[u8]) -> Result<GenerationRequest, PromptError> {
    let req: GenerationRequest =
        canonical::from_json_bytes(bytes).map_err(|e| PromptError::MalformedRequest(e.to_string()))?;
    req.semantic_prompt.validate().map_err(|e| PromptError::MalformedRequest(e.to_string()))?;
    req.constraint_set.validate().map_err(|e| PromptError::MalformedRequest(e.to_string()))?;
    let expected = request_id_of(&req)?;
    if req.request_id != expected {
        return Err(PromptError::MalformedRequest(format!(
            "request_id {} does not match content ({expected})",
            req.request_id
        )));
    }
    Ok(req)
}
