//! Knowledge-enhanced click-through-rate recommendation.
//!
//! The crate is organized as a staged pipeline:
//!
//! - [`corpus`]: interaction ingestion, label binarization, title linking and user splits
//! - [`knowledge`]: user raw-knowledge assembly, key-factor prompts, language-model clients and the
//!   response cache
//! - [`encoder`]: frozen text encoders and embedding tables
//! - [`behavior`]: SWING similarity and positive-pair mining
//! - [`model`]: the mixture-of-experts adapter, embedding augmentation and the DeepFM / DIN backbones
//! - [`training`]: contrastive and recommendation losses and the joint trainer
//! - [`eval`]: AUC / LogLoss, experiment arms and sweeps
//! - [`pipeline`]: configuration, artifact manifest and stage orchestration
//!
//! Data-parallel loops go through [`par`], which maps onto rayon when the `parallel` feature is
//! enabled and onto plain iterators otherwise.

pub mod behavior;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod jsonl;
pub mod knowledge;
pub mod model;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;

pub type UserId = u32;
pub type ItemId = u32;

/// Which side of the bipartite graph a record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    User,
    Item,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::User => "user",
            Target::Item => "item",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
