use std::sync::Arc;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `±bound`.
    Uniform(f64),
    /// Uniform in `±1/sqrt(shape[0])`.
    FanIn,
}

/// All trainable tensors of a model in one contiguous buffer.
#[derive(Debug, Clone)]
pub struct ParamStore {
    values: Vec<f64>,
    specs: Arc<Vec<ParamSpec>>,
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore {
            values: Vec::new(),
            specs: Arc::new(Vec::new()),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        assert!(
            !self.specs.iter().any(|s| s.name == name),
            "duplicate parameter name {name}"
        );
        let len: usize = shape.iter().product();
        let offset = self.values.len();
        match init {
            Init::Zeros => self.values.resize(offset + len, 0.0),
            Init::Uniform(bound) => self.values.extend((0..len).map(|_| rng.gen_range(-bound..=bound))),
            Init::FanIn => {
                let bound = 1.0 / (shape[0].max(1) as f64).sqrt();
                self.values.extend((0..len).map(|_| rng.gen_range(-bound..=bound)));
            }
        }
        Arc::make_mut(&mut self.specs).push(ParamSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        let s = &self.specs[id.0];
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.specs[id.0];
        &mut self.values[s.offset..s.offset + s.len]
    }

    /// 2-D view; 1-D tensors are viewed as a single row.
    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let (r, c) = dims2(&self.specs[id.0].shape);
        ArrayView2::from_shape((r, c), self.get(id)).expect("shape matches length")
    }

    pub fn zeros_grad(&self) -> Grads {
        Grads {
            data: vec![0.0; self.values.len()],
            specs: Arc::clone(&self.specs),
        }
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        other => panic!("expected a 1-D or 2-D tensor, got shape {other:?}"),
    }
}

/// Gradient buffer with the same layout as its [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    data: Vec<f64>,
    specs: Arc<Vec<ParamSpec>>,
}

impl Grads {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn zero(&mut self) {
        self.data.fill(0.0);
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        let s = &self.specs[id.0];
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.specs[id.0];
        &mut self.data[s.offset..s.offset + s.len]
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        let (r, c) = dims2(&self.specs[id.0].shape);
        ArrayViewMut2::from_shape((r, c), self.get_mut(id)).expect("shape matches length")
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}
