//! Recommendation-knowledge generation.
//!
//! A user's raw knowledge is the concatenation of the documents of their most recent items. Raw
//! knowledge is wrapped into key-factor prompts and sent to a [`LanguageModelClient`]; responses
//! are cached on disk by prompt hash.

mod cache;
mod client;
#[cfg(feature = "http")]
mod http;
mod prompt;

pub use cache::{prompt_hash, CacheEntry, KnowledgeCache};
pub use client::{
    CompletionRequest, Extractor, Fallback, LanguageModelClient, RetryPolicy, StubClient,
};
#[cfg(feature = "http")]
pub use http::HttpClient;
pub use prompt::{
    build_prompt, KeyFactorSet, Prompt, UserProfile, DEFAULT_ITEM_TEMPLATE, DEFAULT_USER_TEMPLATE,
    KNOWLEDGE_CLOSE, KNOWLEDGE_OPEN,
};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledInteraction;
use crate::{ItemId, Result, Target, UserId};

pub const DEFAULT_SEPARATOR: &str = "\n\n---\n\n";

/// Where a piece of recommendation knowledge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderTag {
    Raw,
    Llm,
    ExternalFile,
}

/// Knowledge source selected for an experiment arm. `None` disables semantic features entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    None,
    Raw,
    ExternalFile,
    Llm,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::None => "none",
            ProviderKind::Raw => "raw",
            ProviderKind::ExternalFile => "external-file",
            ProviderKind::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecKnowledge {
    pub target: Target,
    pub subject_id: u32,
    pub text: String,
    pub provider_tag: ProviderTag,
}

/// Concatenates the bodies of the user's `k` most recent interacted items that have documents,
/// oldest first.
///
/// `interactions` may contain other users' rows; they are ignored. Timestamp ties are ordered by
/// item id.
pub fn build_user_raw_knowledge(
    user_id: UserId,
    interactions: &[LabeledInteraction],
    item_docs: &HashMap<ItemId, String>,
    k: usize,
    separator: &str,
) -> String {
    assert!(k >= 1, "k must be at least 1");
    let mut history: Vec<&LabeledInteraction> = interactions
        .iter()
        .filter(|r| r.user_id == user_id && item_docs.contains_key(&r.item_id))
        .collect();
    history.sort_by_key(|r| (r.timestamp, r.item_id));
    let start = history.len().saturating_sub(k);
    history[start..]
        .iter()
        .map(|r| item_docs[&r.item_id].as_str())
        .collect::<Vec<_>>()
        .join(separator)
}

#[derive(Debug, Clone, Deserialize)]
struct ExternalRow {
    target: Target,
    subject_id: u32,
    text: String,
}

/// Loads precomputed knowledge texts (`{target, subject_id, text}` per line) for one side.
pub fn load_external(path: &Path, target: Target) -> Result<HashMap<u32, String>> {
    let rows: Vec<ExternalRow> = crate::jsonl::read(path)?;
    Ok(rows
        .into_iter()
        .filter(|r| r.target == target)
        .map(|r| (r.subject_id, r.text))
        .collect())
}
