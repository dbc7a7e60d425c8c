use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::RatingsFormat;
use crate::eval::{ArmSpec, SweepParameter, SweepSpec};
use crate::knowledge::{Fallback, KeyFactorSet, ProviderKind};
use crate::model::{Ablation, BackboneKind, ModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory with `ratings.dat`, `users.dat` and `movies.dat` (or `.csv` files).
    pub dataset: PathBuf,
    /// JSONL knowledge corpus with `doc_id`, `title` and `text`.
    pub corpus: PathBuf,
    /// Where stage artifacts are written.
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: "data".into(),
            corpus: "data/corpus.jsonl".into(),
            workdir: "work".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub format: RatingsFormat,
    /// Ratings strictly above this are positive.
    pub rating_threshold: u8,
    pub split_ratio: [u32; 3],
    pub split_seed: u64,
    /// Minimum title similarity for an item-document link.
    pub link_min_score: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            format: RatingsFormat::Ml1m,
            rating_threshold: 3,
            split_ratio: [8, 1, 1],
            split_seed: 2024,
            link_min_score: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackend {
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: LlmBackend,
    /// Characters the stub backend echoes from the knowledge section.
    pub stub_max_chars: usize,
    pub url: String,
    pub model: String,
    /// Environment variable holding the API key; credentials never live in the file.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_tokens: u32,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub fallback: FallbackMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackMode {
    Raw,
    Fail,
}

impl From<FallbackMode> for Fallback {
    fn from(m: FallbackMode) -> Self {
        match m {
            FallbackMode::Raw => Fallback::Raw,
            FallbackMode::Fail => Fallback::Fail,
        }
    }
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: LlmBackend::Stub,
            stub_max_chars: 200,
            url: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "TRAWL_API_KEY".into(),
            timeout_secs: 60,
            max_tokens: 256,
            temperature: 0.0,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
            fallback: FallbackMode::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    /// Knowledge sources to build; `none` needs no artifacts and is ignored here.
    pub providers: Vec<ProviderKind>,
    /// Number of most recent items in a user's raw knowledge.
    pub user_history_k: usize,
    pub separator: String,
    pub key_factors: KeyFactorSet,
    pub include_profile: bool,
    /// Template files; the bundled templates are used when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_template: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_template: Option<PathBuf>,
    /// Precomputed `{target, subject_id, text}` rows for the `external-file` provider.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_file: Option<PathBuf>,
    pub llm: LlmConfig,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            providers: vec![ProviderKind::Llm],
            user_history_k: 10,
            separator: crate::knowledge::DEFAULT_SEPARATOR.into(),
            key_factors: KeyFactorSet::default(),
            include_profile: true,
            item_template: None,
            user_template: None,
            external_file: None,
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Hash,
    /// Tables produced by an external encoder, `<provider>.user.emb` / `<provider>.item.emb`.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub backend: EncoderKind,
    pub dim: usize,
    pub buckets: usize,
    pub seed: u64,
    pub window: usize,
    /// L2-normalize semantic embeddings before the adapter.
    pub normalize_input: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precomputed_dir: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            backend: EncoderKind::Hash,
            dim: 64,
            buckets: 4096,
            seed: 17,
            window: 512,
            normalize_input: false,
            precomputed_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub alpha: f64,
    pub candidate_cap: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            alpha: 1.0,
            candidate_cap: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub arms: Vec<ArmSpec>,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let arm = |provider, ablation| ArmSpec {
            provider,
            backbone: BackboneKind::Din,
            ablation,
        };
        EvalConfig {
            arms: vec![
                arm(ProviderKind::None, Ablation::Full),
                arm(ProviderKind::Llm, Ablation::Full),
                arm(ProviderKind::Llm, Ablation::NoCl),
                arm(ProviderKind::Llm, Ablation::NoAdapter),
            ],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub arm: ArmSpec,
    #[serde(default = "default_sweep_seed")]
    pub seed: u64,
}

impl SweepConfig {
    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            parameter: self.parameter,
            grid: self.grid.clone(),
        }
    }
}

fn default_sweep_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub knowledge: KnowledgeConfig,
    pub encoder: EncoderConfig,
    pub behavior: BehaviorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn range(ok: bool, field: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {msg}")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        range((1..=5).contains(&c.rating_threshold), "corpus.rating_threshold", "must be in 1..=5")?;
        range(c.split_ratio.iter().all(|&r| r > 0), "corpus.split_ratio", "components must be positive")?;
        range((0.0..=1.0).contains(&c.link_min_score), "corpus.link_min_score", "must be in [0, 1]")?;
        let k = &self.knowledge;
        range(k.user_history_k >= 1, "knowledge.user_history_k", "must be at least 1")?;
        range(k.llm.max_in_flight >= 1, "knowledge.llm.max_in_flight", "must be at least 1")?;
        range(k.llm.stub_max_chars >= 1, "knowledge.llm.stub_max_chars", "must be at least 1")?;
        range(k.llm.temperature >= 0.0, "knowledge.llm.temperature", "must be non-negative")?;
        if k.providers.contains(&ProviderKind::ExternalFile) {
            range(k.external_file.is_some(), "knowledge.external_file", "required by the external-file provider")?;
        }
        let e = &self.encoder;
        range(e.dim >= 1 && e.buckets >= 1 && e.window >= 1, "encoder", "dim, buckets and window must be at least 1")?;
        if e.backend == EncoderKind::Precomputed {
            range(e.precomputed_dir.is_some(), "encoder.precomputed_dir", "required by the precomputed backend")?;
        }
        range(self.behavior.alpha > 0.0, "behavior.alpha", "must be positive")?;
        range(self.behavior.candidate_cap >= 1, "behavior.candidate_cap", "must be at least 1")?;
        self.model.validate()?;
        self.train.validate()?;
        range(!self.eval.seeds.is_empty(), "eval.seeds", "must not be empty")?;
        for arm in &self.eval.arms {
            if arm.provider != ProviderKind::None {
                range(
                    k.providers.contains(&arm.provider),
                    "eval.arms",
                    &format!("provider {} is not listed in knowledge.providers", arm.provider.as_str()),
                )?;
            }
        }
        if let Some(s) = &self.sweep {
            s.spec().validate()?;
        }
        Ok(())
    }

    /// Resolves relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.dataset);
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.workdir);
        for p in [
            &mut self.knowledge.item_template,
            &mut self.knowledge.user_template,
            &mut self.knowledge.external_file,
            &mut self.encoder.precomputed_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// Parses, fills defaults, range-checks and resolves paths relative to the file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = PipelineConfig::from_toml(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.train.cl_weight_user, 0.004);
        assert_eq!(cfg.train.cl_weight_item, 0.008);
        assert_eq!(cfg.train.temperature, 0.15);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.train.learning_rate, 1e-4);
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = PipelineConfig::default().to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(PipelineConfig::from_toml("[train]\ntemperature = -1.0\n").is_err());
        assert!(PipelineConfig::from_toml("[train]\ntemprature = 0.2\n").is_err());
        assert!(PipelineConfig::from_toml("[behaviour]\nalpha = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("[behavior]\nalpha = 0.0\n").is_err());
        let err = PipelineConfig::from_toml("[corpus]\nrating_threshold = 9\n").unwrap_err();
        assert!(err.to_string().contains("corpus.rating_threshold"));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = PipelineConfig::from_toml("[train]\ncl_weight_item = 0.01\n[model]\nbackbone = \"deepfm\"\n").unwrap();
        assert_eq!(cfg.train.cl_weight_item, 0.01);
        assert_eq!(cfg.train.cl_weight_user, 0.004);
        assert_eq!(cfg.model.backbone, BackboneKind::Deepfm);
    }

    #[test]
    fn parses_arms_and_sweep() {
        let cfg = PipelineConfig::from_toml(
            r#"
            [knowledge]
            providers = ["llm", "raw"]
            [eval]
            seeds = [3]
            arms = [{ provider = "raw", backbone = "deepfm", ablation = "no_cl" }]
            [sweep]
            parameter = "tau"
            grid = [0.05, 0.15, 0.5]
            arm = { provider = "llm", backbone = "din", ablation = "full" }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.eval.arms[0].ablation, Ablation::NoCl);
        assert_eq!(cfg.sweep.as_ref().unwrap().grid.len(), 3);
        assert!(PipelineConfig::from_toml("[eval]\narms = [{ provider = \"raw\", backbone = \"din\", ablation = \"full\" }]\n").is_err());
    }
}
