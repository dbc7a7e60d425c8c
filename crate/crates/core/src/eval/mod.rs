//! Metrics, experiment arms and hyperparameter sweeps.

mod arms;
mod metrics;

pub use arms::{
    arm_train_config, config_digest, median, run_arm, run_arms, run_sweep, score_rows, summarize, sweep_table, ArmInputs, ArmRun,
    ArmSpec, ArmSummary, EvalSplit, MetricsReport, SweepParameter, SweepSpec,
};
pub use metrics::{auc, logloss};
