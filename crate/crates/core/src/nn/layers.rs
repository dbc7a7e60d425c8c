use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{Grads, Init, ParamId, ParamStore};

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// `y = x W + b` with `W: [input, output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let w = store.add(&format!("{name}.w"), &[input, output], Init::FanIn, rng);
        let b = store.add(&format!("{name}.b"), &[output], Init::Zeros, rng);
        Linear { w, b, input, output }
    }

    pub fn forward(&self, p: &ParamStore, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&p.mat(self.w));
        y += &p.mat(self.b);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, p: &ParamStore, g: &mut Grads, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
        {
            let mut gw = g.mat_mut(self.w);
            ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut gw);
        }
        {
            let mut gb = g.mat_mut(self.b);
            gb += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dy.dot(&p.mat(self.w).t())
    }
}

/// Inverted dropout applied to hidden activations during training.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Stack of linear layers with SiLU between them and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| Linear::new(store, &format!("{name}.{k}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward<R: Rng>(
        &self,
        p: &ParamStore,
        x: ArrayView2<f64>,
        mut dropout: Option<Dropout<'_, R>>,
    ) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(p, h.view());
            cache.inputs.push(h);
            if k == last {
                cache.pre.push(Array2::zeros((0, 0)));
                cache.masks.push(None);
                return (z, cache);
            }
            let mut a = z.mapv(silu);
            let mask = match dropout.as_mut() {
                Some(d) if d.rate > 0.0 => {
                    let keep = 1.0 - d.rate;
                    let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                        if d.rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            cache.pre.push(z);
            cache.masks.push(mask);
            h = a;
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn backward(&self, p: &ParamStore, g: &mut Grads, cache: &MlpCache, dy: ArrayView2<f64>) -> Array2<f64> {
        let mut d = dy.to_owned();
        for k in (0..self.layers.len()).rev() {
            if k + 1 < self.layers.len() {
                if let Some(m) = &cache.masks[k] {
                    d *= m;
                }
                let pre = &cache.pre[k];
                ndarray::Zip::from(&mut d).and(pre).for_each(|dv, &z| *dv *= silu_grad(z));
            }
            d = self.layers[k].backward(p, g, cache.inputs[k].view(), d.view());
        }
        d
    }
}
