use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::nn::{Dropout, Grads, Mlp, MlpCache, ParamStore};

/// FM second-order interactions plus a deep MLP over concatenated fields.
///
/// First-order weights live with the embedding tables in the owning model; this block returns
/// `FM(fields) + MLP(fields) + bias`.
#[derive(Debug, Clone)]
pub struct DeepFm {
    pub num_fields: usize,
    pub field_dim: usize,
    mlp: Mlp,
    bias: crate::nn::ParamId,
}

#[derive(Debug, Clone)]
pub struct DeepFmCache {
    sum: Array2<f64>,
    mlp: MlpCache,
}

/// `0.5 Σ_d [(Σ_f v_fd)^2 - Σ_f v_fd^2]` per row: the sum of pairwise field dot products.
pub fn fm_second_order(fields: &[Array2<f64>]) -> Array1<f64> {
    let mut sum = fields[0].clone();
    let mut sq = fields[0].mapv(|v| v * v);
    for f in &fields[1..] {
        sum += f;
        sq += &f.mapv(|v| v * v);
    }
    (sum.mapv(|v| v * v) - sq).sum_axis(Axis(1)) * 0.5
}

impl DeepFm {
    pub fn new(store: &mut ParamStore, num_fields: usize, field_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut dims = vec![num_fields * field_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        DeepFm {
            num_fields,
            field_dim,
            mlp: Mlp::new(store, "deepfm.mlp", &dims, rng),
            bias: store.add("deepfm.bias", &[1], crate::nn::Init::Zeros, rng),
        }
    }

    pub fn forward<R: Rng>(&self, p: &ParamStore, fields: &[Array2<f64>], dropout: Option<Dropout<'_, R>>) -> (Array1<f64>, DeepFmCache) {
        assert_eq!(fields.len(), self.num_fields);
        let fm = fm_second_order(fields);
        let views: Vec<ArrayView2<f64>> = fields.iter().map(|f| f.view()).collect();
        let flat = concatenate(Axis(1), &views).expect("fields share row count");
        let (deep, mlp) = self.mlp.forward(p, flat.view(), dropout);
        let mut sum = fields[0].clone();
        for f in &fields[1..] {
            sum += f;
        }
        let logit = fm + deep.column(0) + p.get(self.bias)[0];
        (logit, DeepFmCache { sum, mlp })
    }

    /// Returns the gradient with respect to each field.
    pub fn backward(&self, p: &ParamStore, g: &mut Grads, cache: &DeepFmCache, fields: &[Array2<f64>], dlogit: &Array1<f64>) -> Vec<Array2<f64>> {
        g.get_mut(self.bias)[0] += dlogit.sum();
        let dcol = dlogit.view().insert_axis(Axis(1));
        let dflat = self.mlp.backward(p, g, &cache.mlp, dcol);
        let d = self.field_dim;
        fields
            .iter()
            .enumerate()
            .map(|(k, f)| {
                // d/dv_f of the FM term is (Σ v - v_f)
                let mut df = (&cache.sum - f) * &dcol;
                df += &dflat.slice(s![.., k * d..(k + 1) * d]);
                df
            })
            .collect()
    }
}
