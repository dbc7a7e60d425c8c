//! Adapter, embedding augmentation and CTR backbones.

mod adapter;
mod checkpoint;
mod ctr;
mod data;
mod deepfm;
mod din;

pub use adapter::{AdaptedEmbedding, AdapterCache, AdapterConfig, MoeAdapter};
pub use checkpoint::{read_checkpoint, Checkpoint};
pub use ctr::{sigmoid, CtrModel, ForwardCache, SemanticPath, PROB_EPS};
pub use data::{CtrDataset, Row, SemanticTables, SideSizes, Vocab};
pub use deepfm::{fm_second_order, DeepFm, DeepFmCache};
pub use din::{Din, DinCache, HistoryLayout};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Deepfm,
    Din,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Deepfm => "deepfm",
            BackboneKind::Din => "din",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which parts of the knowledge path are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Trainable adapter plus contrastive losses.
    Full,
    /// Trainable adapter, contrastive weights forced to zero.
    NoCl,
    /// Semantic embeddings pass through a fixed projection instead of the adapter.
    NoAdapter,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCl => "no_cl",
            Ablation::NoAdapter => "no_adapter",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub id_dim: usize,
    pub num_experts: usize,
    /// Defaults to half the semantic dimension.
    pub expert_hidden_dim: Option<usize>,
    /// Defaults to `id_dim`.
    pub adapter_output_dim: Option<usize>,
    pub mlp_hidden: Vec<usize>,
    pub attention_hidden: Vec<usize>,
    pub history_len_cap: usize,
    pub dropout: f64,
    /// Bound of the uniform initialization of ID and side-feature embeddings.
    pub embedding_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneKind::Din,
            id_dim: 16,
            num_experts: 4,
            expert_hidden_dim: None,
            adapter_output_dim: None,
            mlp_hidden: vec![64, 32],
            attention_hidden: vec![32],
            history_len_cap: 30,
            dropout: 0.0,
            embedding_init: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn adapter_config(&self, semantic_dim: usize) -> AdapterConfig {
        AdapterConfig {
            input_dim: semantic_dim,
            output_dim: self.adapter_output_dim.unwrap_or(self.id_dim),
            num_experts: self.num_experts,
            expert_hidden_dim: self.expert_hidden_dim.unwrap_or((semantic_dim / 2).max(1)),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(format!("model.{m}")));
        if self.id_dim == 0 {
            return bad("id_dim must be at least 1");
        }
        if self.num_experts == 0 {
            return bad("num_experts must be at least 1");
        }
        if self.adapter_output_dim == Some(0) || self.expert_hidden_dim == Some(0) {
            return bad("adapter dimensions must be at least 1");
        }
        if self.mlp_hidden.contains(&0) || self.attention_hidden.contains(&0) {
            return bad("hidden widths must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.embedding_init >= 0.0 && self.embedding_init.is_finite()) {
            return bad("embedding_init must be non-negative");
        }
        Ok(())
    }
}

/// `[id ‖ adapted]`.
pub fn augment(id_embedding: &[f64], adapted: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(id_embedding.len() + adapted.len());
    v.extend_from_slice(id_embedding);
    v.extend_from_slice(adapted);
    v
}

/// Row-wise [`augment`].
pub fn augment_rows(id_embedding: ArrayView2<f64>, adapted: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[id_embedding.view(), adapted.view()]).expect("row counts match")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_concatenates() {
        let v = augment(&[1.0; 32], &[2.0; 64]);
        assert_eq!(v.len(), 96);
        assert_eq!(v[31], 1.0);
        assert_eq!(v[32], 2.0);
        let z = augment(&[0.5, -0.5], &[0.0, 0.0, 0.0]);
        assert_eq!(z, vec![0.5, -0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adapter_defaults_follow_ids() {
        let c = ModelConfig::default();
        let a = c.adapter_config(64);
        assert_eq!((a.output_dim, a.expert_hidden_dim, a.num_experts), (16, 32, 4));
        c.validate().unwrap();
        let bad = ModelConfig { dropout: 1.0, ..c };
        assert!(bad.validate().is_err());
    }
}
