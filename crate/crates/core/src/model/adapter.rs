use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{silu, silu_grad, Grads, Linear, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub num_experts: usize,
    pub expert_hidden_dim: usize,
}

/// Mixture of two-layer SiLU experts combined by a softmax gate:
/// `out(x) = Σ_e softmax(x G + g)_e · (silu(x W1_e + b1_e) W2_e + b2_e)`.
#[derive(Debug, Clone)]
pub struct MoeAdapter {
    pub config: AdapterConfig,
    gate: Linear,
    experts: Vec<(Linear, Linear)>,
}

#[derive(Debug, Clone)]
pub struct AdapterCache {
    x: Array2<f64>,
    gates: Array2<f64>,
    hidden_pre: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedEmbedding {
    pub subject_id: u32,
    pub vector: Vec<f64>,
    pub normalized: bool,
}

pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

impl MoeAdapter {
    pub fn new(store: &mut ParamStore, name: &str, config: AdapterConfig, rng: &mut impl Rng) -> Self {
        assert!(config.output_dim >= 1 && config.num_experts >= 1 && config.expert_hidden_dim >= 1);
        let gate = Linear::new(store, &format!("{name}.gate"), config.input_dim, config.num_experts, rng);
        let experts = (0..config.num_experts)
            .map(|e| {
                let l1 = Linear::new(
                    store,
                    &format!("{name}.expert{e}.0"),
                    config.input_dim,
                    config.expert_hidden_dim,
                    rng,
                );
                let l2 = Linear::new(
                    store,
                    &format!("{name}.expert{e}.1"),
                    config.expert_hidden_dim,
                    config.output_dim,
                    rng,
                );
                (l1, l2)
            })
            .collect();
        MoeAdapter { config, gate, experts }
    }

    pub fn gates(&self, p: &ParamStore, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = self.gate.forward(p, x);
        softmax_rows(&mut z);
        z
    }

    pub fn forward(&self, p: &ParamStore, x: ArrayView2<f64>) -> (Array2<f64>, AdapterCache) {
        assert_eq!(x.ncols(), self.config.input_dim, "adapter input width");
        let gates = self.gates(p, x);
        let mut out = Array2::zeros((x.nrows(), self.config.output_dim));
        let mut cache = AdapterCache {
            x: x.to_owned(),
            gates,
            hidden_pre: Vec::with_capacity(self.experts.len()),
            hidden: Vec::with_capacity(self.experts.len()),
            outputs: Vec::with_capacity(self.experts.len()),
        };
        for (e, (l1, l2)) in self.experts.iter().enumerate() {
            let pre = l1.forward(p, x);
            let h = pre.mapv(silu);
            let y = l2.forward(p, h.view());
            let g = cache.gates.column(e).insert_axis(Axis(1));
            out += &(&y * &g);
            cache.hidden_pre.push(pre);
            cache.hidden.push(h);
            cache.outputs.push(y);
        }
        (out, cache)
    }

    /// Accumulates parameter gradients. The semantic input is frozen, so no input gradient is
    /// produced.
    pub fn backward(&self, p: &ParamStore, g: &mut Grads, cache: &AdapterCache, dout: ArrayView2<f64>) {
        let n = cache.x.nrows();
        let n_exp = self.experts.len();
        // dL/dgate_e = <dout, y_e> per row
        let mut dgate = Array2::zeros((n, n_exp));
        for (e, (l1, l2)) in self.experts.iter().enumerate() {
            let y = &cache.outputs[e];
            let dg: Array1<f64> = (&dout * y).sum_axis(Axis(1));
            dgate.column_mut(e).assign(&dg);
            let gcol = cache.gates.column(e).insert_axis(Axis(1));
            let dy = &dout * &gcol;
            let mut dh = l2.backward(p, g, cache.hidden[e].view(), dy.view());
            ndarray::Zip::from(&mut dh)
                .and(&cache.hidden_pre[e])
                .for_each(|d, &z| *d *= silu_grad(z));
            l1.backward(p, g, cache.x.view(), dh.view());
        }
        // softmax backward: dz = s ⊙ (ds - <s, ds>)
        let dot = (&cache.gates * &dgate).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dz = &cache.gates * &(&dgate - &dot);
        self.gate.backward(p, g, cache.x.view(), dz.view());
    }

    /// Adapts a single semantic vector, optionally L2-normalizing the result.
    pub fn adapt(&self, p: &ParamStore, subject_id: u32, semantic: &[f64], normalize: bool) -> Result<AdaptedEmbedding> {
        if semantic.len() != self.config.input_dim {
            return Err(Error::Dimension {
                expected: self.config.input_dim,
                got: semantic.len(),
            });
        }
        let x = ArrayView2::from_shape((1, semantic.len()), semantic).expect("row vector");
        let (out, _) = self.forward(p, x);
        let mut vector = out.row(0).to_vec();
        if normalize {
            let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                vector.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(AdaptedEmbedding {
            subject_id,
            vector,
            normalized: normalize,
        })
    }
}
