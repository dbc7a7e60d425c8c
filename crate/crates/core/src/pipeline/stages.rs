use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{EncoderKind, LlmBackend, PipelineConfig};
use super::manifest::{stage_digest, Input, Manifest};
use crate::behavior::{mine_positives, InteractionIndex, PositivePairIndex};
use crate::corpus::{
    binarize, dedupe_latest, ingest_interactions, link_items, load_corpus, load_items, load_users, split_users,
    DatasetSplit, ItemLink, ItemMeta, LabeledInteraction, RatingsFormat, SplitRow, UserMeta,
};
use crate::encoder::{encode_texts, EmbeddingTable, EncoderBackend, HashEncoder};
use crate::eval::{
    config_digest, run_arm, run_sweep, score_rows, summarize, sweep_table, arm_train_config, ArmInputs, ArmSpec, EvalSplit,
    MetricsReport,
};
use crate::jsonl;
use crate::knowledge::{
    build_prompt, build_user_raw_knowledge, load_external, Extractor, KnowledgeCache, LanguageModelClient,
    ProviderKind, ProviderTag, RecKnowledge, StubClient, UserProfile, DEFAULT_ITEM_TEMPLATE, DEFAULT_USER_TEMPLATE,
};
use crate::model::{read_checkpoint, Checkpoint, CtrDataset, CtrModel, SemanticTables};
use crate::par::*;
use crate::training::{Positives, TrainState};
use crate::{Error, Result, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Link,
    Generate,
    Encode,
    Mine,
    Train,
    Evaluate,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Link,
        Stage::Generate,
        Stage::Encode,
        Stage::Mine,
        Stage::Train,
        Stage::Evaluate,
        Stage::Sweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Link => "link",
            Stage::Generate => "generate",
            Stage::Encode => "encode",
            Stage::Mine => "mine",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub outputs: Vec<PathBuf>,
}

/// Training metadata stored next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunMeta {
    arm: String,
    seed: u64,
    epochs_run: usize,
    best_epoch: usize,
    best_valid_auc: Option<f64>,
    valid_auc: Vec<Option<f64>>,
}

/// Stage runner over one validated configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    pub force: bool,
}

const INTERACTIONS: &str = "interactions.jsonl";
const SPLIT: &str = "split.jsonl";
const USERS: &str = "users.jsonl";
const ITEMS: &str = "items.jsonl";
const REJECTS: &str = "ingest_rejects.jsonl";
const LINKS: &str = "links.jsonl";
const UNLINKED: &str = "unlinked.jsonl";
const LLM_CACHE: &str = "llm_cache.jsonl";
const ENCODER_INFO: &str = "embeddings/encoder.json";
const PAIRS_USER: &str = "pairs.user.jsonl";
const PAIRS_ITEM: &str = "pairs.item.jsonl";
const REPORTS: &str = "reports.jsonl";
const SUMMARY: &str = "summary.jsonl";
const SWEEP_REPORTS: &str = "sweep.jsonl";
const SWEEP_TABLE: &str = "sweep.tsv";

fn knowledge_file(p: ProviderKind) -> String {
    format!("knowledge/{}.jsonl", p.as_str())
}

fn embedding_file(p: ProviderKind, target: Target) -> String {
    format!("embeddings/{}.{}.emb", p.as_str(), target)
}

fn run_stem(arm: &ArmSpec, seed: u64) -> String {
    format!("{}.s{seed}", arm.name())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

impl Pipeline {
    /// `seed` replaces the configured evaluation seeds.
    pub fn new(mut config: PipelineConfig, seed: Option<u64>, force: bool) -> Self {
        let seeds = match seed {
            Some(s) => vec![s],
            None => config.eval.seeds.clone(),
        };
        if let (Some(s), Some(sw)) = (seed, config.sweep.as_mut()) {
            sw.seed = s;
        }
        Pipeline { config, seeds, force }
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    fn work(&self, rel: &str) -> PathBuf {
        self.config.paths.workdir.join(rel)
    }

    fn input(&self, rel: &str, producer: &'static str) -> Input {
        Input::new(self.work(rel), producer)
    }

    fn dataset_files(&self) -> [PathBuf; 3] {
        let ext = match self.config.corpus.format {
            RatingsFormat::Ml1m => "dat",
            RatingsFormat::Csv => "csv",
        };
        let d = &self.config.paths.dataset;
        [
            d.join(format!("ratings.{ext}")),
            d.join(format!("users.{ext}")),
            d.join(format!("movies.{ext}")),
        ]
    }

    /// Non-`none` providers the evaluation or sweep arms need.
    fn arm_providers(&self) -> Vec<ProviderKind> {
        let mut set: BTreeSet<ProviderKind> = self.config.eval.arms.iter().map(|a| a.provider).collect();
        if let Some(s) = &self.config.sweep {
            set.insert(s.arm.provider);
        }
        set.remove(&ProviderKind::None);
        set.into_iter().collect()
    }

    fn built_providers(&self) -> Vec<ProviderKind> {
        let set: BTreeSet<ProviderKind> = self.config.knowledge.providers.iter().copied().collect();
        set.into_iter().filter(|&p| p != ProviderKind::None).collect()
    }

    fn jobs(&self) -> Vec<(ArmSpec, u64)> {
        self.config
            .eval
            .arms
            .iter()
            .flat_map(|&a| self.seeds.iter().map(move |&s| (a, s)))
            .collect()
    }

    fn training_inputs(&self) -> Vec<Input> {
        let mut inputs = vec![
            self.input(INTERACTIONS, "ingest"),
            self.input(SPLIT, "ingest"),
            self.input(USERS, "ingest"),
            self.input(ITEMS, "ingest"),
            self.input(PAIRS_USER, "mine"),
            self.input(PAIRS_ITEM, "mine"),
        ];
        for p in self.arm_providers() {
            for t in [Target::User, Target::Item] {
                let f = embedding_file(p, t);
                inputs.push(self.input(&f, "encode"));
                inputs.push(Input::new(EmbeddingTable::ids_path(&self.work(&f)), "encode"));
            }
        }
        inputs
    }

    fn plan(&self, stage: Stage) -> Result<(serde_json::Value, Vec<Input>)> {
        let c = &self.config;
        Ok(match stage {
            Stage::Ingest => (
                json!({"corpus": to_value(&c.corpus)}),
                self.dataset_files().into_iter().map(|p| Input::new(p, "ingest")).collect(),
            ),
            Stage::Link => (
                json!({"link_min_score": c.corpus.link_min_score}),
                vec![self.input(ITEMS, "ingest"), Input::new(&c.paths.corpus, "ingest")],
            ),
            Stage::Generate => {
                let mut inputs = vec![
                    self.input(INTERACTIONS, "ingest"),
                    self.input(USERS, "ingest"),
                    self.input(ITEMS, "ingest"),
                    self.input(LINKS, "link"),
                    Input::new(&c.paths.corpus, "ingest"),
                ];
                let k = &c.knowledge;
                for p in [&k.item_template, &k.user_template, &k.external_file].into_iter().flatten() {
                    inputs.push(Input::new(p, "generate"));
                }
                let mut cfg = to_value(k);
                // paths are covered by their contents
                for key in ["item_template", "user_template", "external_file"] {
                    cfg.as_object_mut().expect("object").remove(key);
                }
                (json!({"knowledge": cfg}), inputs)
            }
            Stage::Encode => {
                let mut inputs: Vec<Input> = self
                    .built_providers()
                    .into_iter()
                    .map(|p| self.input(&knowledge_file(p), "generate"))
                    .collect();
                let mut enc = to_value(&c.encoder);
                enc.as_object_mut().expect("object").remove("precomputed_dir");
                if let (EncoderKind::Precomputed, Some(dir)) = (c.encoder.backend, &c.encoder.precomputed_dir) {
                    for p in self.built_providers() {
                        for t in [Target::User, Target::Item] {
                            let f = dir.join(format!("{}.{}.emb", p.as_str(), t));
                            inputs.push(Input::new(EmbeddingTable::ids_path(&f), "encode"));
                            inputs.push(Input::new(f, "encode"));
                        }
                    }
                }
                (json!({"encoder": enc, "providers": self.built_providers()}), inputs)
            }
            Stage::Mine => (
                json!({"behavior": to_value(&c.behavior)}),
                vec![self.input(INTERACTIONS, "ingest"), self.input(SPLIT, "ingest")],
            ),
            Stage::Train => (self.training_config_value(), self.training_inputs()),
            Stage::Evaluate => {
                let mut inputs = self.training_inputs();
                for (arm, seed) in self.jobs() {
                    let stem = run_stem(&arm, seed);
                    inputs.push(self.input(&format!("models/{stem}.ckpt"), "train"));
                    inputs.push(self.input(&format!("models/{stem}.json"), "train"));
                }
                (self.training_config_value(), inputs)
            }
            Stage::Sweep => {
                let sweep = c
                    .sweep
                    .as_ref()
                    .ok_or_else(|| Error::Config("no [sweep] section in the configuration".into()))?;
                (
                    json!({
                        "model": to_value(&c.model),
                        "train": to_value(&c.train),
                        "sweep": to_value(sweep),
                        "normalize_input": c.encoder.normalize_input,
                    }),
                    self.training_inputs(),
                )
            }
        })
    }

    fn training_config_value(&self) -> serde_json::Value {
        let c = &self.config;
        json!({
            "model": to_value(&c.model),
            "train": to_value(&c.train),
            "arms": to_value(&c.eval.arms),
            "seeds": self.seeds,
            "normalize_input": c.encoder.normalize_input,
        })
    }

    /// Runs `stage` unless the manifest shows identical inputs and the outputs still exist.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        let workdir = self.workdir();
        std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
        let (cfg, inputs) = self.plan(stage)?;
        let digest = stage_digest(&cfg, &inputs)?;
        let manifest = Manifest::load(workdir)?;
        if !self.force && manifest.is_fresh(stage.as_str(), &digest, workdir) {
            log::info!("{stage}: inputs unchanged, skipping");
            let outputs = manifest.stages[stage.as_str()].outputs.iter().map(|o| workdir.join(o)).collect();
            return Ok(StageOutcome {
                stage,
                skipped: true,
                outputs,
            });
        }
        log::info!("{stage}: running");
        let outputs = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Link => self.link()?,
            Stage::Generate => self.generate()?,
            Stage::Encode => self.encode()?,
            Stage::Mine => self.mine()?,
            Stage::Train => self.train()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::Sweep => self.sweep()?,
        };
        let mut manifest = Manifest::load(workdir)?;
        manifest.record(stage.as_str(), digest, outputs.clone());
        manifest.save(workdir)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            outputs: outputs.iter().map(|o| workdir.join(o)).collect(),
        })
    }

    /// Every stage in order; the sweep only when configured.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        Stage::ALL
            .into_iter()
            .filter(|&s| s != Stage::Sweep || self.config.sweep.is_some())
            .map(|s| self.run(s))
            .collect()
    }

    fn ingest(&self) -> Result<Vec<String>> {
        let c = &self.config.corpus;
        let [ratings, users_path, items_path] = self.dataset_files();
        let report = ingest_interactions(&ratings, c.format)?;
        let records = dedupe_latest(&report.records);
        let mut labeled = binarize(&records, c.rating_threshold);
        labeled.sort_by_key(|r| (r.user_id, r.timestamp, r.item_id));
        let users = load_users(&users_path, c.format)?;
        let items = load_items(&items_path, c.format)?;
        let split = split_users(labeled.iter().map(|r| r.user_id), c.split_ratio, c.split_seed)?;
        log::info!(
            "ingest: {} interactions ({} rejected, {} duplicates dropped), users train/valid/test = {}/{}/{}",
            labeled.len(),
            report.rejected.len(),
            report.records.len() - records.len(),
            split.train.len(),
            split.valid.len(),
            split.test.len()
        );
        let rejects: Vec<serde_json::Value> = report
            .rejected
            .iter()
            .map(|r| json!({"line": r.line, "reason": r.reason}))
            .collect();
        jsonl::write(&self.work(INTERACTIONS), &labeled)?;
        jsonl::write(&self.work(SPLIT), &split.to_rows())?;
        jsonl::write(&self.work(USERS), &users)?;
        jsonl::write(&self.work(ITEMS), &items)?;
        jsonl::write(&self.work(REJECTS), &rejects)?;
        Ok([INTERACTIONS, SPLIT, USERS, ITEMS, REJECTS].map(String::from).to_vec())
    }

    fn link(&self) -> Result<Vec<String>> {
        let items: Vec<ItemMeta> = jsonl::read(&self.work(ITEMS))?;
        let docs = load_corpus(&self.config.paths.corpus)?;
        let titles: Vec<(u32, String)> = items.iter().map(|i| (i.item_id, i.title.clone())).collect();
        let report = link_items(&titles, &docs, self.config.corpus.link_min_score);
        log::info!("link: {} linked, {} unlinked", report.links.len(), report.unlinked.len());
        jsonl::write(&self.work(LINKS), &report.links)?;
        jsonl::write(&self.work(UNLINKED), &report.unlinked)?;
        Ok(vec![LINKS.into(), UNLINKED.into()])
    }

    fn client(&self) -> Result<Box<dyn LanguageModelClient>> {
        let llm = &self.config.knowledge.llm;
        match llm.backend {
            LlmBackend::Stub => Ok(Box::new(StubClient {
                max_chars: llm.stub_max_chars,
            })),
            #[cfg(feature = "http")]
            LlmBackend::Http => {
                let key = std::env::var(&llm.api_key_env).ok();
                Ok(Box::new(crate::knowledge::HttpClient::new(
                    &llm.url,
                    &llm.model,
                    key,
                    Duration::from_secs(llm.timeout_secs),
                )?))
            }
            #[cfg(not(feature = "http"))]
            LlmBackend::Http => Err(Error::Config("built without the `http` feature".into())),
        }
    }

    fn generate(&self) -> Result<Vec<String>> {
        let k = &self.config.knowledge;
        let interactions: Vec<LabeledInteraction> = jsonl::read(&self.work(INTERACTIONS))?;
        let users: Vec<UserMeta> = jsonl::read(&self.work(USERS))?;
        let items: Vec<ItemMeta> = jsonl::read(&self.work(ITEMS))?;
        let links: Vec<ItemLink> = jsonl::read(&self.work(LINKS))?;
        let docs: HashMap<String, String> = load_corpus(&self.config.paths.corpus)?
            .into_iter()
            .map(|d| (d.doc_id, d.body))
            .collect();
        let item_docs: HashMap<u32, String> = links
            .iter()
            .filter_map(|l| docs.get(&l.doc_id).map(|b| (l.item_id, b.clone())))
            .collect();

        let item_ids: BTreeSet<u32> = items.iter().map(|i| i.item_id).chain(interactions.iter().map(|r| r.item_id)).collect();
        let mut per_user: BTreeMap<u32, Vec<LabeledInteraction>> = users.iter().map(|u| (u.user_id, Vec::new())).collect();
        for r in &interactions {
            per_user.entry(r.user_id).or_default().push(*r);
        }
        let item_raw: BTreeMap<u32, String> = item_ids
            .iter()
            .map(|&i| (i, item_docs.get(&i).cloned().unwrap_or_default()))
            .collect();
        let user_raw: BTreeMap<u32, String> = per_user
            .iter()
            .map(|(&u, rows)| (u, build_user_raw_knowledge(u, rows, &item_docs, k.user_history_k, &k.separator)))
            .collect();
        let profiles: HashMap<u32, UserProfile> = users
            .iter()
            .map(|u| UserProfile::new(u.user_id, u.profile()).map(|p| (u.user_id, p)))
            .collect::<Result<_>>()?;

        let mut outputs = Vec::new();
        let mut llm_used = false;
        for provider in self.built_providers() {
            let rows: Vec<RecKnowledge> = match provider {
                ProviderKind::Raw => raw_rows(&user_raw, &item_raw),
                ProviderKind::ExternalFile => {
                    let path = k.external_file.as_ref().expect("validated");
                    let users_ext = load_external(path, Target::User)?;
                    let items_ext = load_external(path, Target::Item)?;
                    let pick = |m: &HashMap<u32, String>, ids: &mut dyn Iterator<Item = u32>, target| {
                        ids.map(|id| RecKnowledge {
                            target,
                            subject_id: id,
                            text: m.get(&id).cloned().unwrap_or_default(),
                            provider_tag: ProviderTag::ExternalFile,
                        })
                        .collect::<Vec<_>>()
                    };
                    let mut rows = pick(&users_ext, &mut user_raw.keys().copied(), Target::User);
                    rows.extend(pick(&items_ext, &mut item_raw.keys().copied(), Target::Item));
                    rows
                }
                ProviderKind::Llm => {
                    llm_used = true;
                    self.extract_llm(&user_raw, &item_raw, &profiles)?
                }
                ProviderKind::None => unreachable!("filtered"),
            };
            let rel = knowledge_file(provider);
            jsonl::write(&self.work(&rel), &rows)?;
            log::info!("generate: {} knowledge rows for provider {}", rows.len(), provider.as_str());
            outputs.push(rel);
        }
        if llm_used && self.work(LLM_CACHE).exists() {
            outputs.push(LLM_CACHE.into());
        }
        Ok(outputs)
    }

    fn extract_llm(
        &self,
        user_raw: &BTreeMap<u32, String>,
        item_raw: &BTreeMap<u32, String>,
        profiles: &HashMap<u32, UserProfile>,
    ) -> Result<Vec<RecKnowledge>> {
        let k = &self.config.knowledge;
        let read_template = |p: &Option<PathBuf>, default: &str| -> Result<String> {
            match p {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
                None => Ok(default.to_string()),
            }
        };
        let item_t = read_template(&k.item_template, DEFAULT_ITEM_TEMPLATE)?;
        let user_t = read_template(&k.user_template, DEFAULT_USER_TEMPLATE)?;
        let mut jobs = Vec::with_capacity(user_raw.len() + item_raw.len());
        for (&u, raw) in user_raw {
            let profile = if k.include_profile { profiles.get(&u) } else { None };
            jobs.push((build_prompt(Target::User, u, raw, profile, &k.key_factors, &user_t)?, raw.clone()));
        }
        for (&i, raw) in item_raw {
            jobs.push((build_prompt(Target::Item, i, raw, None, &k.key_factors, &item_t)?, raw.clone()));
        }
        let client = self.client()?;
        let cache = KnowledgeCache::open(&self.work(LLM_CACHE))?;
        let mut ex = Extractor::new(client.as_ref(), cache);
        ex.max_tokens = k.llm.max_tokens;
        ex.temperature = k.llm.temperature;
        ex.retry.max_retries = k.llm.max_retries;
        ex.retry.backoff = Duration::from_millis(k.llm.backoff_ms);
        ex.fallback = k.llm.fallback.into();
        let rows = ex.extract_all(&jobs, k.llm.max_in_flight)?;
        log::info!("generate: {} client calls for {} prompts", ex.client_calls(), jobs.len());
        ex.into_cache().compact()?;
        Ok(rows)
    }

    fn encode(&self) -> Result<Vec<String>> {
        let e = &self.config.encoder;
        let mut outputs = Vec::new();
        let checksum = match e.backend {
            EncoderKind::Hash => {
                let enc = HashEncoder::new(e.dim, e.buckets, e.seed).with_window(e.window);
                for p in self.built_providers() {
                    let rows: Vec<RecKnowledge> = jsonl::read(&self.work(&knowledge_file(p)))?;
                    for target in [Target::User, Target::Item] {
                        let texts: BTreeMap<u32, String> = rows
                            .iter()
                            .filter(|r| r.target == target)
                            .map(|r| (r.subject_id, r.text.clone()))
                            .collect();
                        let table = encode_texts(&texts, &enc, target)?;
                        let zero = table.zero_rows().len();
                        if zero > 0 {
                            log::info!("encode: {zero} {target}s of provider {} have empty text", p.as_str());
                        }
                        let rel = embedding_file(p, target);
                        table.write(&self.work(&rel))?;
                        outputs.push(rel);
                    }
                }
                enc.parameter_checksum()
            }
            EncoderKind::Precomputed => {
                let dir = e.precomputed_dir.as_ref().expect("validated");
                let mut h = Vec::new();
                for p in self.built_providers() {
                    for target in [Target::User, Target::Item] {
                        let src = dir.join(format!("{}.{}.emb", p.as_str(), target));
                        let table = EmbeddingTable::read(&src)?;
                        if table.target() != target {
                            return Err(Error::Config(format!("{} holds {} embeddings", src.display(), table.target())));
                        }
                        h.push(super::manifest::file_digest(&src)?);
                        let rel = embedding_file(p, target);
                        table.write(&self.work(&rel))?;
                        outputs.push(rel);
                    }
                }
                h.join("")
            }
        };
        let info = json!({"backend": e.backend, "dim": e.dim, "parameter_checksum": checksum});
        jsonl::write_atomic(&self.work(ENCODER_INFO), format!("{info}\n").as_bytes())?;
        outputs.push(ENCODER_INFO.into());
        Ok(outputs)
    }

    fn read_split(&self) -> Result<DatasetSplit> {
        let rows: Vec<SplitRow> = jsonl::read(&self.work(SPLIT))?;
        DatasetSplit::from_rows(&rows)
    }

    fn mine(&self) -> Result<Vec<String>> {
        let b = &self.config.behavior;
        let interactions: Vec<LabeledInteraction> = jsonl::read(&self.work(INTERACTIONS))?;
        let split = self.read_split()?;
        let train: Vec<LabeledInteraction> = interactions.into_iter().filter(|r| split.train.contains(&r.user_id)).collect();
        let index = InteractionIndex::build(&train, true);
        let users = mine_positives(Target::User, &index, b.alpha, b.candidate_cap)?;
        let items = mine_positives(Target::Item, &index, b.alpha, b.candidate_cap)?;
        log::info!("mine: {} user pairs, {} item pairs", users.len(), items.len());
        users.write(&self.work(PAIRS_USER))?;
        items.write(&self.work(PAIRS_ITEM))?;
        Ok(vec![PAIRS_USER.into(), PAIRS_ITEM.into()])
    }

    /// Dataset, semantic tables and mined pairs for training runs.
    pub fn load_arm_inputs(&self) -> Result<ArmInputs> {
        for input in self.training_inputs() {
            if !input.path.exists() {
                return Err(Error::MissingArtifact {
                    stage: input.producer.into(),
                    path: input.path,
                });
            }
        }
        let interactions: Vec<LabeledInteraction> = jsonl::read(&self.work(INTERACTIONS))?;
        let users: Vec<UserMeta> = jsonl::read(&self.work(USERS))?;
        let items: Vec<ItemMeta> = jsonl::read(&self.work(ITEMS))?;
        let split = self.read_split()?;
        let data = CtrDataset::build(&interactions, &split, &users, &items, self.config.model.history_len_cap)?;
        let mut semantic = BTreeMap::new();
        for p in self.arm_providers() {
            let u = EmbeddingTable::read(&self.work(&embedding_file(p, Target::User)))?;
            let i = EmbeddingTable::read(&self.work(&embedding_file(p, Target::Item)))?;
            semantic.insert(p, SemanticTables::from_tables(&u, &i, &data, self.config.encoder.normalize_input)?);
        }
        let pu = PositivePairIndex::read(&self.work(PAIRS_USER), Target::User)?;
        let pi = PositivePairIndex::read(&self.work(PAIRS_ITEM), Target::Item)?;
        let positives = Positives::new(&data, &pu, &pi);
        Ok(ArmInputs {
            data,
            semantic,
            positives,
        })
    }

    fn train(&self) -> Result<Vec<String>> {
        let inputs = self.load_arm_inputs()?;
        std::fs::create_dir_all(self.work("models")).map_err(|e| Error::io(self.work("models"), e))?;
        std::fs::create_dir_all(self.work("logs")).map_err(|e| Error::io(self.work("logs"), e))?;
        let c = &self.config;
        let jobs = self.jobs();
        let written: Vec<Vec<String>> = jobs
            .par_iter()
            .map(|&(arm, seed)| {
                let run = run_arm(&inputs, arm, &c.model, &c.train, seed, EvalSplit::Valid)?;
                let stem = run_stem(&arm, seed);
                let ckpt = format!("models/{stem}.ckpt");
                let meta = format!("models/{stem}.json");
                let log = format!("logs/{stem}.jsonl");
                let mut model_cfg = c.model.clone();
                model_cfg.backbone = arm.backbone;
                Checkpoint::from_store(&model_cfg, seed, run.model.store()).write(&self.work(&ckpt))?;
                let state: &TrainState = &run.state;
                let m = RunMeta {
                    arm: arm.name(),
                    seed,
                    epochs_run: state.epochs_run,
                    best_epoch: state.best_epoch,
                    best_valid_auc: state.best_valid_auc,
                    valid_auc: state.valid_auc.clone(),
                };
                jsonl::write_atomic(&self.work(&meta), format!("{}\n", serde_json::to_string(&m)?).as_bytes())?;
                jsonl::write(&self.work(&log), &state.history)?;
                Ok(vec![ckpt, meta, log])
            })
            .collect::<Result<_>>()?;
        Ok(written.into_iter().flatten().collect())
    }

    fn evaluate(&self) -> Result<Vec<String>> {
        let inputs = self.load_arm_inputs()?;
        let c = &self.config;
        let reports: Vec<MetricsReport> = self
            .jobs()
            .par_iter()
            .map(|&(arm, seed)| {
                let stem = run_stem(&arm, seed);
                let ckpt = read_checkpoint(&self.work(&format!("models/{stem}.ckpt")))?;
                let meta_path = self.work(&format!("models/{stem}.json"));
                let meta: RunMeta = serde_json::from_str(
                    &std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
                )?;
                let mut model_cfg = c.model.clone();
                model_cfg.backbone = arm.backbone;
                if ckpt.config != model_cfg || ckpt.seed != seed {
                    return Err(Error::Checkpoint(format!("{stem}: checkpoint was trained with a different config")));
                }
                let semantic = if arm.provider == ProviderKind::None {
                    None
                } else {
                    inputs.semantic.get(&arm.provider).cloned()
                };
                let mut model = CtrModel::new(&model_cfg, &inputs.data, semantic, arm.ablation, seed)?;
                ckpt.load_into(model.store_mut())?;
                let (auc, logloss) = score_rows(&model, &inputs.data, &inputs.data.test);
                let mut train = arm_train_config(&arm, &c.train);
                train.seed = seed;
                Ok(MetricsReport {
                    arm: arm.name(),
                    split: EvalSplit::Test,
                    auc,
                    logloss,
                    seed,
                    config_digest: config_digest(&arm, &model_cfg, &train),
                    best_epoch: meta.best_epoch,
                    epochs_run: meta.epochs_run,
                    sweep_parameter: None,
                    sweep_value: None,
                })
            })
            .collect::<Result<_>>()?;
        let summary = summarize(&reports);
        for s in &summary {
            log::info!(
                "evaluate: {} median test auc {:?} over {} seeds (range {:?}..{:?})",
                s.arm,
                s.median_auc,
                s.seeds,
                s.min_auc,
                s.max_auc
            );
        }
        jsonl::write(&self.work(REPORTS), &reports)?;
        jsonl::write(&self.work(SUMMARY), &summary)?;
        Ok(vec![REPORTS.into(), SUMMARY.into()])
    }

    fn sweep(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let sweep = c.sweep.as_ref().expect("planned");
        let inputs = self.load_arm_inputs()?;
        let reports = run_sweep(&inputs, &sweep.spec(), sweep.arm, &c.model, &c.train, sweep.seed)?;
        jsonl::write(&self.work(SWEEP_REPORTS), &reports)?;
        jsonl::write_atomic(&self.work(SWEEP_TABLE), sweep_table(&reports).as_bytes())?;
        Ok(vec![SWEEP_REPORTS.into(), SWEEP_TABLE.into()])
    }
}

fn raw_rows(user_raw: &BTreeMap<u32, String>, item_raw: &BTreeMap<u32, String>) -> Vec<RecKnowledge> {
    let side = |m: &BTreeMap<u32, String>, target| {
        m.iter()
            .map(move |(&id, text)| RecKnowledge {
                target,
                subject_id: id,
                text: text.clone(),
                provider_tag: ProviderTag::Raw,
            })
            .collect::<Vec<_>>()
    };
    let mut rows = side(user_raw, Target::User);
    rows.extend(side(item_raw, Target::Item));
    rows
}
