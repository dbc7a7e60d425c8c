//! Interaction data, external-knowledge documents, title linking and user splits.

mod ingest;
mod link;
mod side;
mod split;

pub use ingest::{binarize, dedupe_latest, ingest_interactions, IngestReport, RatingsFormat, Reject};
pub use link::{levenshtein, link_items, title_similarity, LinkReport, UnlinkedItem};
pub use side::{load_items, load_users, ItemMeta, UserMeta};
pub use split::{split_users, Bucket, DatasetSplit, SplitRow};

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::{ItemId, Result, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub rating: u8,
    pub timestamp: i64,
}

/// Interaction with its rating collapsed to a click label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInteraction {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub label: u8,
    pub timestamp: i64,
}

/// Raw external text about an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    #[serde(deserialize_with = "string_or_number")]
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLink {
    pub item_id: ItemId,
    pub doc_id: String,
    pub link_score: f64,
}

fn string_or_number<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        S(String),
        N(u64),
    }
    Ok(match Raw::deserialize(de)? {
        Raw::S(s) => s,
        Raw::N(n) => n.to_string(),
    })
}

/// Loads a JSON-lines corpus, dropping documents whose body is blank.
pub fn load_corpus(path: &Path) -> Result<Vec<KnowledgeDoc>> {
    let docs: Vec<KnowledgeDoc> = crate::jsonl::read(path)?;
    let before = docs.len();
    let docs: Vec<KnowledgeDoc> = docs
        .into_iter()
        .filter(|d| d.body.split_whitespace().next().is_some())
        .collect();
    if docs.len() < before {
        log::warn!("{}: dropped {} documents with empty text", path.display(), before - docs.len());
    }
    Ok(docs)
}
