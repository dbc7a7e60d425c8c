use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{auc, logloss};
use crate::knowledge::ProviderKind;
use crate::model::{Ablation, BackboneKind, CtrDataset, CtrModel, ModelConfig, Row, SemanticTables};
use crate::par::*;
use crate::training::{train_joint, Positives, TrainConfig, TrainState};
use crate::{Error, Result};

/// One cell of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmSpec {
    pub provider: ProviderKind,
    pub backbone: BackboneKind,
    pub ablation: Ablation,
}

impl ArmSpec {
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.provider.as_str(), self.backbone, self.ablation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arm: String,
    pub split: EvalSplit,
    /// `None` when the evaluated rows hold a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub seed: u64,
    pub config_digest: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<SweepParameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
}

/// Everything a training run reads: the dataset, semantic tables per provider and mined pairs.
#[derive(Debug, Clone)]
pub struct ArmInputs {
    pub data: CtrDataset,
    pub semantic: BTreeMap<ProviderKind, SemanticTables>,
    pub positives: Positives,
}

impl ArmInputs {
    fn semantic_for(&self, provider: ProviderKind) -> Result<Option<SemanticTables>> {
        if provider == ProviderKind::None {
            return Ok(None);
        }
        self.semantic.get(&provider).cloned().map(Some).ok_or_else(|| Error::MissingArtifact {
            stage: "encode".into(),
            path: format!("semantic embeddings for provider {}", provider.as_str()).into(),
        })
    }
}

/// Applies the ablation to the training config.
pub fn arm_train_config(arm: &ArmSpec, train: &TrainConfig) -> TrainConfig {
    let mut t = train.clone();
    if arm.ablation == Ablation::NoCl {
        t.cl_weight_user = 0.0;
        t.cl_weight_item = 0.0;
    }
    t
}

/// Digest of everything but the seed, so reports of one arm across seeds share it.
pub fn config_digest(arm: &ArmSpec, model: &ModelConfig, train: &TrainConfig) -> String {
    let mut t = train.clone();
    t.seed = 0;
    let json = serde_json::to_vec(&(arm, model, &t)).expect("configs serialize");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub report: MetricsReport,
    pub state: TrainState,
    pub model: CtrModel,
}

/// AUC and LogLoss of `model` on `rows`.
pub fn score_rows(model: &CtrModel, data: &CtrDataset, rows: &[Row]) -> (Option<f64>, f64) {
    let scores = model.predict(data, rows);
    let labels: Vec<u8> = rows.iter().map(|r| r.label as u8).collect();
    (auc(&scores, &labels), logloss(&scores, &labels))
}

/// Trains one arm with `seed` and evaluates the best-validation parameters on `split`.
pub fn run_arm(
    inputs: &ArmInputs,
    arm: ArmSpec,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    split: EvalSplit,
) -> Result<ArmRun> {
    let mut model_cfg = model_cfg.clone();
    model_cfg.backbone = arm.backbone;
    let mut train = arm_train_config(&arm, train_cfg);
    train.seed = seed;
    let semantic = inputs.semantic_for(arm.provider)?;
    let mut model = CtrModel::new(&model_cfg, &inputs.data, semantic, arm.ablation, seed)?;
    let state = train_joint(&mut model, &inputs.data, &inputs.positives, &train)?;
    let rows = match split {
        EvalSplit::Valid => &inputs.data.valid,
        EvalSplit::Test => &inputs.data.test,
    };
    let (auc, logloss) = score_rows(&model, &inputs.data, rows);
    log::info!("{} seed {seed}: {split:?} auc {auc:?} logloss {logloss:.4}", arm.name());
    Ok(ArmRun {
        report: MetricsReport {
            arm: arm.name(),
            split,
            auc,
            logloss,
            seed,
            config_digest: config_digest(&arm, &model_cfg, &train),
            best_epoch: state.best_epoch,
            epochs_run: state.epochs_run,
            sweep_parameter: None,
            sweep_value: None,
        },
        state,
        model,
    })
}

/// Runs every `(arm, seed)` job, in parallel when enabled; results keep the job order.
pub fn run_arms(
    inputs: &ArmInputs,
    jobs: &[(ArmSpec, u64)],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    split: EvalSplit,
) -> Result<Vec<MetricsReport>> {
    jobs.par_iter()
        .map(|&(arm, seed)| run_arm(inputs, arm, model_cfg, train_cfg, seed, split).map(|r| r.report))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    W1,
    W2,
    Tau,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::W1 => "w1",
            SweepParameter::W2 => "w2",
            SweepParameter::Tau => "tau",
        }
    }

    fn apply(self, train: &mut TrainConfig, value: f64) {
        match self {
            SweepParameter::W1 => train.cl_weight_user = value,
            SweepParameter::W2 => train.cl_weight_item = value,
            SweepParameter::Tau => train.temperature = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep.grid must not be empty".into()));
        }
        let ok = |v: f64| match self.parameter {
            SweepParameter::Tau => v > 0.0 && v.is_finite(),
            _ => v >= 0.0 && v.is_finite(),
        };
        if let Some(v) = self.grid.iter().find(|&&v| !ok(v)) {
            return Err(Error::Config(format!("sweep.grid value {v} out of range for {}", self.parameter.as_str())));
        }
        Ok(())
    }
}

/// One validation report per grid point, everything else fixed.
pub fn run_sweep(
    inputs: &ArmInputs,
    spec: &SweepSpec,
    arm: ArmSpec,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    spec.validate()?;
    spec.grid
        .par_iter()
        .map(|&value| {
            let mut train = train_cfg.clone();
            spec.parameter.apply(&mut train, value);
            let mut r = run_arm(inputs, arm, model_cfg, &train, seed, EvalSplit::Valid)?.report;
            r.sweep_parameter = Some(spec.parameter);
            r.sweep_value = Some(value);
            Ok(r)
        })
        .collect()
}

/// Tab-separated `parameter value seed auc logloss` table for plotting.
pub fn sweep_table(reports: &[MetricsReport]) -> String {
    let mut out = String::from("parameter\tvalue\tseed\tauc\tlogloss\n");
    for r in reports {
        let auc = r.auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}",
            r.sweep_parameter.map_or("", |p| p.as_str()),
            r.sweep_value.map_or_else(String::new, |v| v.to_string()),
            r.seed,
            auc,
            r.logloss
        );
    }
    out
}

/// Median and range of an arm's metrics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: usize,
    pub median_auc: Option<f64>,
    pub min_auc: Option<f64>,
    pub max_auc: Option<f64>,
    pub median_logloss: f64,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Groups reports by arm (first-seen order).
pub fn summarize(reports: &[MetricsReport]) -> Vec<ArmSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.arm.as_str()) {
            order.push(&r.arm);
        }
    }
    order
        .into_iter()
        .map(|arm| {
            let rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.arm == arm).collect();
            let mut aucs: Vec<f64> = rs.iter().filter_map(|r| r.auc).collect();
            let mut lls: Vec<f64> = rs.iter().map(|r| r.logloss).collect();
            ArmSummary {
                arm: arm.to_string(),
                seeds: rs.len(),
                median_auc: median(&mut aucs),
                min_auc: aucs.first().copied(),
                max_auc: aucs.last().copied(),
                median_logloss: median(&mut lls).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(arm: &str, auc: f64) -> MetricsReport {
        MetricsReport {
            arm: arm.into(),
            split: EvalSplit::Test,
            auc: Some(auc),
            logloss: 1.0 - auc,
            seed: 0,
            config_digest: String::new(),
            best_epoch: 1,
            epochs_run: 1,
            sweep_parameter: None,
            sweep_value: None,
        }
    }

    #[test]
    fn summary_takes_median_and_range() {
        let rs = [report("a", 0.7), report("b", 0.5), report("a", 0.9), report("a", 0.6)];
        let s = summarize(&rs);
        assert_eq!(s[0].arm, "a");
        assert_eq!(s[0].seeds, 3);
        assert_eq!(s[0].median_auc, Some(0.7));
        assert_eq!((s[0].min_auc, s[0].max_auc), (Some(0.6), Some(0.9)));
        assert_eq!(s[1].median_auc, Some(0.5));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn sweep_grid_is_validated() {
        let bad = SweepSpec {
            parameter: SweepParameter::Tau,
            grid: vec![0.1, 0.0],
        };
        assert!(bad.validate().is_err());
        assert!(SweepSpec {
            parameter: SweepParameter::W1,
            grid: vec![]
        }
        .validate()
        .is_err());
        SweepSpec {
            parameter: SweepParameter::W1,
            grid: vec![0.0, 0.004],
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn digest_ignores_seed_only() {
        let arm = ArmSpec {
            provider: ProviderKind::Llm,
            backbone: BackboneKind::Din,
            ablation: Ablation::Full,
        };
        let m = ModelConfig::default();
        let a = TrainConfig { seed: 1, ..TrainConfig::default() };
        let b = TrainConfig { seed: 2, ..TrainConfig::default() };
        let c = TrainConfig { temperature: 0.5, ..TrainConfig::default() };
        assert_eq!(config_digest(&arm, &m, &a), config_digest(&arm, &m, &b));
        assert_ne!(config_digest(&arm, &m, &a), config_digest(&arm, &m, &c));
        assert_eq!(arm.name(), "llm-din-full");
        let nocl = arm_train_config(&ArmSpec { ablation: Ablation::NoCl, ..arm }, &a);
        assert_eq!((nocl.cl_weight_user, nocl.cl_weight_item), (0.0, 0.0));
    }

    #[test]
    fn sweep_table_has_header_and_rows() {
        let mut r = report("a", 0.75);
        r.sweep_parameter = Some(SweepParameter::Tau);
        r.sweep_value = Some(0.15);
        let t = sweep_table(&[r]);
        assert_eq!(t, "parameter\tvalue\tseed\tauc\tlogloss\ntau\t0.15\t0\t0.750000\t0.250000\n");
    }
}
