//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any gating check fails.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always visible under `cargo test`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trawl::behavior::{mine_positives, swing_item, swing_user, InteractionIndex};
use trawl::corpus::LabeledInteraction;
use trawl::encoder::{EncoderBackend, HashEncoder};
use trawl::eval::{auc, logloss, ArmSpec, ArmSummary};
use trawl::knowledge::ProviderKind;
use trawl::model::{Ablation, BackboneKind, CtrModel, SemanticPath};
use trawl::pipeline::{file_digest, Pipeline, PipelineConfig, Stage};
use trawl::synth::{self, SynthConfig};
use trawl::training::{infonce, infonce_grad, total_loss, train_joint, InfoNceReduction, TrainConfig};
use trawl::{Result, Target};

type Check = std::result::Result<String, String>;

fn run(label: &str, gating: bool, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = f();
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("[PASS] {label} ({secs:.1}s): {detail}");
            true
        }
        Err(detail) if !gating => {
            println!("[SKIP] {label} (non-gating): {detail}");
            true
        }
        Err(detail) => {
            println!("[FAIL] {label} ({secs:.1}s): {detail}");
            false
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn err(e: trawl::Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------------------------
// 1. SWING

fn random_graph(rng: &mut ChaCha8Rng) -> Vec<LabeledInteraction> {
    let users = rng.gen_range(2..=50u32);
    let items = rng.gen_range(2..=50u32);
    let density = rng.gen_range(0.02..=0.3);
    let mut edges = Vec::new();
    for u in 1..=users {
        for i in 1..=items {
            if rng.gen::<f64>() < density {
                edges.push(LabeledInteraction {
                    user_id: u,
                    item_id: i,
                    label: 1,
                    timestamp: 0,
                });
            }
        }
    }
    edges
}

/// Literal double loop over ordered pairs of common neighbors.
fn brute_swing(edges: &HashSet<(u32, u32)>, a: u32, b: u32, target: Target, alpha: f64) -> f64 {
    // orient edges as (subject, pivot)
    let oriented: HashSet<(u32, u32)> = match target {
        Target::User => edges.clone(),
        Target::Item => edges.iter().map(|&(u, i)| (i, u)).collect(),
    };
    let subjects: BTreeSet<u32> = oriented.iter().map(|e| e.0).collect();
    let pivots: BTreeSet<u32> = oriented.iter().map(|e| e.1).collect();
    let linked = |s: u32, p: u32| oriented.contains(&(s, p));
    let common: Vec<u32> = pivots.iter().copied().filter(|&p| linked(a, p) && linked(b, p)).collect();
    let mut total = 0.0;
    for &i in &common {
        for &j in &common {
            let shared = subjects.iter().filter(|&&s| linked(s, i) && linked(s, j)).count();
            total += 1.0 / (alpha + shared as f64);
        }
    }
    total
}

fn criterion_swing() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs_checked = 0usize;
    let mut mined_checked = 0usize;
    for g in 0..100 {
        let graph = random_graph(&mut rng);
        let alpha = [0.5, 1.0, 2.0][g % 3];
        let edges: HashSet<(u32, u32)> = graph.iter().map(|e| (e.user_id, e.item_id)).collect();
        let index = InteractionIndex::build(&graph, true);
        for target in [Target::User, Target::Item] {
            let ids: Vec<u32> = match target {
                Target::User => index.user_items().keys().copied().collect(),
                Target::Item => index.item_users().keys().copied().collect(),
            };
            let mut oracle_best: BTreeMap<u32, (u32, f64)> = BTreeMap::new();
            for &a in &ids {
                for &b in &ids {
                    if a == b {
                        continue;
                    }
                    let got = match target {
                        Target::User => swing_user(a, b, &index, alpha),
                        Target::Item => swing_item(a, b, &index, alpha),
                    }
                    .map_err(err)?;
                    let want = brute_swing(&edges, a, b, target, alpha);
                    ensure((got - want).abs() <= 1e-12 * want.abs().max(1.0), || {
                        format!("graph {g} {target} ({a},{b}): {got} vs brute force {want}")
                    })?;
                    pairs_checked += 1;
                    // ids ascend, so a strict improvement keeps the smaller id on ties
                    if want > 0.0 && oracle_best.get(&a).is_none_or(|&(_, s)| want > s) {
                        oracle_best.insert(a, (b, want));
                    }
                }
            }
            let mined = mine_positives(target, &index, alpha, 500).map_err(err)?;
            let got: BTreeMap<u32, u32> = mined.pairs.iter().map(|(&a, p)| (a, p.partner)).collect();
            let want: BTreeMap<u32, u32> = oracle_best.iter().map(|(&a, &(b, _))| (a, b)).collect();
            ensure(got == want, || format!("graph {g} {target}: mined partners differ from exhaustive argmax"))?;
            mined_checked += got.len();
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "100 graphs, {pairs_checked} ordered pairs match the brute force, {mined_checked} mined partners match the argmax"
    ))
}

// ---------------------------------------------------------------------------------------------
// 2. InfoNCE

fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((b, d), |_| rng.gen_range(-1.0f64..1.0));
    for mut row in m.axis_iter_mut(Axis(0)) {
        let n: f64 = row.dot(&row).sqrt();
        row /= n;
    }
    m
}

/// Direct summation of the in-batch-negative loss.
fn infonce_oracle(a: &Array2<f64>, p: &Array2<f64>, tau: f64) -> f64 {
    let b = a.nrows();
    let mut loss = 0.0;
    for j in 0..b {
        let num = (a.row(j).dot(&p.row(j)) / tau).exp();
        let den: f64 = (0..b).map(|k| (a.row(j).dot(&p.row(k)) / tau).exp()).sum();
        loss -= (num / den).ln();
    }
    loss
}

fn criterion_infonce() -> Check {
    let start = Instant::now();
    let tau = 0.15;
    for b in [1usize, 2, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(b as u64);
        let row = unit_rows(&mut rng, 1, 16);
        let same = Array2::from_shape_fn((b, 16), |(_, k)| row[[0, k]]);
        let loss = infonce(same.view(), same.view(), tau, InfoNceReduction::Sum).map_err(err)?;
        let want = b as f64 * (b as f64).ln();
        ensure((loss - want).abs() < 1e-6, || format!("B={b}: {loss} vs B·log B = {want}"))?;
    }
    let h = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = unit_rows(&mut rng, 8, 16);
        let p = unit_rows(&mut rng, 8, 16);
        let (loss, da, dp) = infonce_grad(a.view(), p.view(), tau, InfoNceReduction::Sum).map_err(err)?;
        let oracle = infonce_oracle(&a, &p, tau);
        ensure((loss - oracle).abs() < 1e-9, || format!("seed {seed}: {loss} vs summation {oracle}"))?;
        for (which, grad) in [(0, &da), (1, &dp)] {
            for r in 0..8 {
                for c in 0..16 {
                    let eval = |delta: f64| {
                        let (mut a2, mut p2) = (a.clone(), p.clone());
                        if which == 0 {
                            a2[[r, c]] += delta;
                        } else {
                            p2[[r, c]] += delta;
                        }
                        infonce(a2.view(), p2.view(), tau, InfoNceReduction::Sum).expect("within norm tolerance")
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let g = grad[[r, c]];
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
    }
    ensure(worst < 1e-3, || format!("worst relative gradient error {worst:.2e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "B·log B holds for B in {{1,2,8}}; 20 seeds at B=8, dim=16: worst relative gradient error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------------------------
// shared synthetic workspace

fn small_synth() -> SynthConfig {
    SynthConfig {
        users: 300,
        items: 120,
        seed: 11,
        ..SynthConfig::default()
    }
}

/// Writes a synthetic dataset into `dir` and returns its pipeline configuration.
fn synth_workspace(dir: &Path, synth_cfg: &SynthConfig, tweak: impl FnOnce(&mut PipelineConfig)) -> Result<PipelineConfig> {
    synth::generate(synth_cfg).write(dir)?;
    let mut cfg = synth::pipeline_config();
    tweak(&mut cfg);
    cfg.resolve_paths(dir);
    cfg.validate()?;
    Ok(cfg)
}

fn prepared(cfg: &PipelineConfig) -> Result<Pipeline> {
    let p = Pipeline::new(cfg.clone(), None, false);
    for s in [Stage::Ingest, Stage::Link, Stage::Generate, Stage::Encode, Stage::Mine] {
        p.run(s)?;
    }
    Ok(p)
}

fn llm_arm(ablation: Ablation) -> ArmSpec {
    ArmSpec {
        provider: ProviderKind::Llm,
        backbone: BackboneKind::Din,
        ablation,
    }
}

// ---------------------------------------------------------------------------------------------
// 3. loss composition

fn criterion_loss_composition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (r, u, i): (f64, f64, f64) = (rng.gen_range(0.0..5.0), rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0));
        let (w1, w2): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let got = total_loss(r, u, i, w1, w2);
        ensure(got == r + w1 * u + w2 * i, || format!("total_loss({r},{u},{i},{w1},{w2}) = {got}"))?;
    }
    ensure(total_loss(0.5, 1.0, 2.0, 0.1, 0.2) == 0.5 + 0.1 + 0.4, || "fixture".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = synth_workspace(dir.path(), &small_synth(), |_| {}).map_err(err)?;
    let inputs = prepared(&cfg).and_then(|p| p.load_arm_inputs()).map_err(err)?;
    let semantic = inputs.semantic[&ProviderKind::Llm].clone();
    let train = TrainConfig {
        cl_weight_user: 0.0,
        cl_weight_item: 0.0,
        epochs: 2,
        ..cfg.train.clone()
    };
    let trajectory = |compute_cl: bool| -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
        let mut model = CtrModel::new(&cfg.model, &inputs.data, Some(semantic.clone()), Ablation::Full, 5)?;
        let tc = TrainConfig { compute_cl, ..train.clone() };
        let state = train_joint(&mut model, &inputs.data, &inputs.positives, &tc)?;
        let cl = state.history.iter().map(|r| (r.l_uu, r.l_ii)).collect();
        Ok((model.store().values().to_vec(), cl))
    };
    let (with_cl, logged) = trajectory(true).map_err(err)?;
    let (without_cl, _) = trajectory(false).map_err(err)?;
    ensure(logged.iter().any(|&(u, i)| u > 0.0 && i > 0.0), || "CL components were not logged".into())?;
    ensure(with_cl == without_cl, || "w1 = w2 = 0 diverged from the CL-disabled run".into())?;
    Ok(format!(
        "total_loss exact on 1000 random inputs; w1=w2=0 matches the CL-disabled run bit for bit over {} params, {} logged steps with non-zero CL terms",
        with_cl.len(),
        logged.len()
    ))
}

// ---------------------------------------------------------------------------------------------
// 4. metrics

fn pairwise_auc(s: &[f64], l: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in s.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            if l[i] == 1 && l[j] == 0 {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn criterion_metrics() -> Check {
    let s = [0.1, 0.4, 0.35, 0.8];
    let l = [0, 0, 1, 1];
    let oracle = pairwise_auc(&s, &l);
    ensure(oracle == 0.75, || format!("pairwise oracle gives {oracle}"))?;
    let got = auc(&s, &l).ok_or("undefined AUC")?;
    ensure((got - 0.75).abs() < 1e-12, || format!("4-point fixture: {got}"))?;
    ensure(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]) == Some(1.0), || "separable fixture".into())?;
    ensure(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]) == Some(0.5), || "all-ties fixture".into())?;
    let ll = logloss(&[0.5; 8], &[1, 0, 1, 1, 0, 0, 1, 0]);
    ensure((ll - 2f64.ln()).abs() < 1e-9, || format!("uniform logloss {ll}"))?;
    Ok("AUC 0.75 / 1.0 / 0.5 and LogLoss ln 2 reproduced".into())
}

// ---------------------------------------------------------------------------------------------
// 5. frozen encoder

fn criterion_frozen_encoder() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = synth_workspace(dir.path(), &small_synth(), |_| {}).map_err(err)?;
    let pipeline = prepared(&cfg).map_err(err)?;
    let e = &cfg.encoder;
    let encoder = HashEncoder::new(e.dim, e.buckets, e.seed).with_window(e.window);
    let before = encoder.parameter_checksum();
    let info: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(cfg.paths.workdir.join("embeddings/encoder.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure(info["parameter_checksum"] == before.as_str(), || "encode stage recorded another checksum".into())?;
    let tables = ["llm.user.emb", "llm.item.emb"].map(|f| cfg.paths.workdir.join("embeddings").join(f));
    let digests_before: Vec<String> = tables.iter().map(|t| file_digest(t)).collect::<Result<_>>().map_err(err)?;

    let inputs = pipeline.load_arm_inputs().map_err(err)?;
    let semantic = inputs.semantic[&ProviderKind::Llm].clone();
    let mut model = CtrModel::new(&cfg.model, &inputs.data, Some(semantic.clone()), Ablation::Full, 1).map_err(err)?;
    let tc = TrainConfig {
        epochs: 2,
        ..cfg.train.clone()
    };
    train_joint(&mut model, &inputs.data, &inputs.positives, &tc).map_err(err)?;

    let after = encoder.parameter_checksum();
    ensure(before == after, || format!("checksum changed: {before} -> {after}"))?;
    let digests_after: Vec<String> = tables.iter().map(|t| file_digest(t)).collect::<Result<_>>().map_err(err)?;
    ensure(digests_before == digests_after, || "embedding tables changed on disk".into())?;
    match model.semantic_path() {
        SemanticPath::Adapter { tables, .. } => {
            ensure(tables == &semantic, || "semantic tables inside the model changed".into())?
        }
        _ => return Err("full arm has no adapter".into()),
    }
    Ok(format!("encoder checksum {} unchanged across training", &before[..16.min(before.len())]))
}

// ---------------------------------------------------------------------------------------------
// 6. synthetic end-to-end

fn criterion_synthetic_e2e() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = synth_workspace(dir.path(), &SynthConfig::default(), |c| {
        c.eval.arms = vec![llm_arm(Ablation::Full), llm_arm(Ablation::NoCl), llm_arm(Ablation::NoAdapter)];
        c.eval.seeds = vec![1, 2, 3, 4, 5];
    })
    .map_err(err)?;
    Pipeline::new(cfg.clone(), None, false).run_all().map_err(err)?;
    let summary: Vec<ArmSummary> = trawl::jsonl::read(&cfg.paths.workdir.join("summary.jsonl")).map_err(err)?;
    let median = |a: Ablation| -> std::result::Result<f64, String> {
        let name = llm_arm(a).name();
        summary
            .iter()
            .find(|s| s.arm == name && s.seeds == 5)
            .and_then(|s| s.median_auc)
            .ok_or(format!("no 5-seed summary for {name}"))
    };
    let (full, no_cl, no_adapter) = (median(Ablation::Full)?, median(Ablation::NoCl)?, median(Ablation::NoAdapter)?);
    let detail = format!(
        "median test AUC full {full:.4} >= no_cl {no_cl:.4} >= no_adapter {no_adapter:.4}, margin {:.4}, {:.0}s",
        full - no_adapter,
        start.elapsed().as_secs_f64()
    );
    ensure(full >= no_cl && no_cl >= no_adapter, || format!("ordering violated: {detail}"))?;
    ensure(full - no_adapter >= 0.01, || format!("margin below 0.01: {detail}"))?;
    within(start, Duration::from_secs(600))?;
    Ok(detail)
}

// ---------------------------------------------------------------------------------------------
// 7. ML-1M direction (manual)

fn criterion_ml1m() -> Check {
    let Ok(path) = std::env::var("TRAWL_ML1M_CONFIG") else {
        return Err("set TRAWL_ML1M_CONFIG to a pipeline config over ML-1M to run it; reference DIN 0.7796 -> 0.7812".into());
    };
    let cfg = trawl::pipeline::validate_config(Path::new(&path)).map_err(err)?;
    Pipeline::new(cfg.clone(), None, false).run_all().map_err(err)?;
    let summary: Vec<ArmSummary> = trawl::jsonl::read(&cfg.paths.workdir.join("summary.jsonl")).map_err(err)?;
    let get = |name: &str| summary.iter().find(|s| s.arm == name).and_then(|s| s.median_auc);
    match (get("none-din-full"), get("llm-din-full")) {
        (Some(base), Some(k)) if k > base => Ok(format!("DIN {base:.4} -> {k:.4} with knowledge (reference 0.7796 -> 0.7812)")),
        (Some(base), Some(k)) => Err(format!("DIN {base:.4} -> {k:.4}: no improvement")),
        _ => Err("summary lacks none-din-full or llm-din-full".into()),
    }
}

// ---------------------------------------------------------------------------------------------
// 8. determinism

fn criterion_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = synth_workspace(dir.path(), &small_synth(), |c| {
        c.eval.seeds = vec![3];
        c.train.epochs = 3;
    })
    .map_err(err)?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = base.clone();
        cfg.paths.workdir = dir.path().join(format!("work-{run}"));
        Pipeline::new(cfg.clone(), None, false).run_all().map_err(err)?;
        let read = |f: &str| std::fs::read(cfg.paths.workdir.join(f)).map_err(|e| e.to_string());
        outputs.push((read("reports.jsonl")?, read("summary.jsonl")?));
    }
    ensure(outputs[0] == outputs[1], || "metric reports differ between identical runs".into())?;
    let lines = String::from_utf8_lossy(&outputs[0].0).lines().count();
    Ok(format!("two run-all executions wrote byte-identical reports ({lines} rows)"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |key: &str| filter.is_empty() || filter.iter().any(|f| key.contains(f.as_str()));
    let criteria: [(&str, bool, fn() -> Check); 8] = [
        ("criterion 1 swing oracle equivalence", true, criterion_swing),
        ("criterion 2 infonce correctness", true, criterion_infonce),
        ("criterion 3 loss composition", true, criterion_loss_composition),
        ("criterion 4 metric fixtures", true, criterion_metrics),
        ("criterion 5 frozen encoder", true, criterion_frozen_encoder),
        ("criterion 6 synthetic end-to-end", true, criterion_synthetic_e2e),
        ("criterion 7 ml-1m direction", false, criterion_ml1m),
        ("criterion 8 run-all determinism", true, criterion_determinism),
    ];
    let mut failed = 0;
    for (label, gating, f) in criteria {
        if wanted(label) && !run(label, gating, f) {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
