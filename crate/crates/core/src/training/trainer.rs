use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{infonce_grad, rec_loss, total_loss, InfoNceReduction};
use crate::behavior::PositivePairIndex;
use crate::eval::auc;
use crate::model::{sigmoid, CtrDataset, CtrModel, Row, PROB_EPS};
use crate::nn::{gather_rows, normalize_rows, normalize_rows_backward, Adam, Grads};
use crate::{Error, Result, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// InfoNCE temperature τ.
    pub temperature: f64,
    /// Weight w1 of the user-user contrastive loss.
    pub cl_weight_user: f64,
    /// Weight w2 of the item-item contrastive loss.
    pub cl_weight_item: f64,
    pub epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub reduction: InfoNceReduction,
    /// When false the contrastive losses are neither computed nor logged.
    pub compute_cl: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            learning_rate: 1e-4,
            temperature: 0.15,
            cl_weight_user: 0.004,
            cl_weight_item: 0.008,
            epochs: 20,
            patience: 3,
            seed: 42,
            reduction: InfoNceReduction::Sum,
            compute_cl: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.cl_weight_user >= 0.0 && self.cl_weight_item >= 0.0) {
            return bad("cl weights must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

/// Mined partners keyed by dense id.
#[derive(Debug, Clone, Default)]
pub struct Positives {
    pub user: Vec<Option<usize>>,
    pub item: Vec<Option<usize>>,
}

impl Positives {
    pub fn new(data: &CtrDataset, user: &PositivePairIndex, item: &PositivePairIndex) -> Self {
        let map = |idx: &PositivePairIndex, vocab: &crate::model::Vocab| {
            (0..vocab.len())
                .map(|d| idx.partner(vocab.raw(d)).and_then(|p| vocab.dense(p)))
                .collect::<Vec<_>>()
        };
        Positives {
            user: map(user, &data.users),
            item: map(item, &data.items),
        }
    }

    pub fn none(data: &CtrDataset) -> Self {
        Positives {
            user: vec![None; data.users.len()],
            item: vec![None; data.items.len()],
        }
    }

    pub fn count(&self) -> (usize, usize) {
        let c = |v: &[Option<usize>]| v.iter().filter(|p| p.is_some()).count();
        (c(&self.user), c(&self.item))
    }
}

/// One training-log line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    #[serde(rename = "L_rec")]
    pub l_rec: f64,
    #[serde(rename = "L_uu")]
    pub l_uu: f64,
    #[serde(rename = "L_ii")]
    pub l_ii: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_auc: Option<f64>,
    pub valid_auc: Vec<Option<f64>>,
    pub history: Vec<LossRecord>,
}

/// Distinct subjects of a batch that have a mined partner, in first-seen order.
fn contrastive_pairs(ids: impl Iterator<Item = usize>, partners: &[Option<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut seen = std::collections::HashSet::new();
    let mut anchors = Vec::new();
    let mut pos = Vec::new();
    for id in ids {
        if !seen.insert(id) {
            continue;
        }
        if let Some(p) = partners[id] {
            anchors.push(id);
            pos.push(p);
        }
    }
    (anchors, pos)
}

const MIN_CL_NORM: f64 = 1e-12;

/// InfoNCE over adapter outputs; gradients are accumulated with weight `w` when `w > 0`.
fn contrastive_term(
    model: &CtrModel,
    target: Target,
    anchors: &[usize],
    partners: &[usize],
    config: &TrainConfig,
    w: f64,
    g: &mut Grads,
) -> Result<f64> {
    let Some((adapter, table)) = model.adapter(target) else {
        return Ok(0.0);
    };
    if anchors.is_empty() {
        return Ok(0.0);
    }
    let store = model.store();
    let run = |ids: &[usize]| {
        let x = gather_rows(table.view(), ids);
        let (raw, cache) = adapter.forward(store, x.view());
        let (unit, norms) = normalize_rows(raw.view());
        (unit, norms, cache)
    };
    let (a, a_norms, a_cache) = run(anchors);
    let (p, p_norms, p_cache) = run(partners);
    // a zero adapter output (e.g. empty knowledge text) has no direction to contrast
    let keep: Vec<usize> = (0..anchors.len()).filter(|&k| a_norms[k] > MIN_CL_NORM && p_norms[k] > MIN_CL_NORM).collect();
    if keep.len() < anchors.len() {
        let pick = |ids: &[usize]| keep.iter().map(|&k| ids[k]).collect::<Vec<_>>();
        return contrastive_term(model, target, &pick(anchors), &pick(partners), config, w, g);
    }
    let (loss, da, dp) = infonce_grad(a.view(), p.view(), config.temperature, config.reduction)?;
    if w > 0.0 {
        let da = normalize_rows_backward(a.view(), &a_norms, (da * w).view());
        let dp = normalize_rows_backward(p.view(), &p_norms, (dp * w).view());
        adapter.backward(store, g, &a_cache, da.view());
        adapter.backward(store, g, &p_cache, dp.view());
    }
    Ok(loss)
}

/// Loss components and gradient of the total loss on one batch.
///
/// `dropout` enables the model's dropout (training mode).
pub fn loss_and_grad(
    model: &CtrModel,
    data: &CtrDataset,
    rows: &[Row],
    positives: &Positives,
    config: &TrainConfig,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(LossRecord, Grads)> {
    let mut g = model.store().zeros_grad();
    let (logit, cache) = model.forward(data, rows, dropout);
    let n = rows.len() as f64;
    let labels: Array1<f64> = rows.iter().map(|r| r.label).collect();
    let probs = logit.mapv(sigmoid);
    let l_rec = rec_loss(probs.view(), labels.view());
    // the clamp in the loss is flat outside [eps, 1 - eps]
    let dlogit: Array1<f64> = probs
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) { (p - y) / n } else { 0.0 })
        .collect();
    model.backward(&mut g, &cache, &dlogit);

    let (mut l_uu, mut l_ii) = (0.0, 0.0);
    if config.compute_cl {
        let (ua, up) = contrastive_pairs(rows.iter().map(|r| r.user), &positives.user);
        l_uu = contrastive_term(model, Target::User, &ua, &up, config, config.cl_weight_user, &mut g)?;
        let (ia, ip) = contrastive_pairs(rows.iter().map(|r| r.item), &positives.item);
        l_ii = contrastive_term(model, Target::Item, &ia, &ip, config, config.cl_weight_item, &mut g)?;
    }
    let record = LossRecord {
        step: 0,
        l_rec,
        l_uu,
        l_ii,
        total: total_loss(l_rec, l_uu, l_ii, config.cl_weight_user, config.cl_weight_item),
    };
    Ok((record, g))
}

/// AUC of `model` on `rows`; `None` when the rows hold a single class.
pub fn evaluate_auc(model: &CtrModel, data: &CtrDataset, rows: &[Row]) -> Option<f64> {
    let scores = model.predict(data, rows);
    let labels: Vec<u8> = rows.iter().map(|r| r.label as u8).collect();
    auc(&scores, &labels)
}

/// Joint optimization of the backbone and adapters with early stopping on validation AUC.
///
/// On return `model` holds the best-validation parameters.
pub fn train_joint(model: &mut CtrModel, data: &CtrDataset, positives: &Positives, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let (pu, pi) = positives.count();
    if config.compute_cl && pu + pi == 0 && (config.cl_weight_user > 0.0 || config.cl_weight_item > 0.0) {
        log::warn!("no mined positive pairs; contrastive terms contribute nothing");
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = Adam::new(model.store().len(), config.learning_rate);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut rows = Vec::with_capacity(config.batch_size);

    let mut state = TrainState {
        epochs_run: 0,
        best_epoch: 0,
        best_valid_auc: None,
        valid_auc: Vec::new(),
        history: Vec::new(),
    };
    let mut best = model.store().values().to_vec();
    let mut step = 0u64;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            rows.clear();
            rows.extend(chunk.iter().map(|&k| data.train[k]));
            let (mut record, g) = loss_and_grad(model, data, &rows, positives, config, Some(&mut dropout_rng))?;
            step += 1;
            record.step = step;
            state.history.push(record);
            adam.step(model.store_mut().values_mut(), g.data());
        }
        state.epochs_run = epoch + 1;

        let valid = evaluate_auc(model, data, &data.valid);
        state.valid_auc.push(valid);
        let last = state.history.last().expect("at least one step");
        log::debug!(
            "epoch {}: L_rec {:.4} L_uu {:.4} L_ii {:.4} valid auc {:?}",
            epoch + 1,
            last.l_rec,
            last.l_uu,
            last.l_ii,
            valid
        );
        let improved = match (valid, state.best_valid_auc) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            // without a usable validation signal the latest parameters are kept
            (None, _) => state.best_valid_auc.is_none(),
        };
        if improved {
            state.best_valid_auc = valid.or(state.best_valid_auc);
            state.best_epoch = epoch + 1;
            best.copy_from_slice(model.store().values());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.store_mut().values_mut().copy_from_slice(&best);
    Ok(state)
}
