//! Minimal dense-network toolkit: a flat parameter store, linear/MLP layers with hand-written
//! backward passes, and Adam.

mod adam;
mod layers;
mod params;

pub use adam::Adam;
pub use layers::{silu, silu_grad, Dropout, Linear, Mlp, MlpCache};
pub use params::{Grads, Init, ParamId, ParamSpec, ParamStore};

use ndarray::{Array2, ArrayView2, Axis};

/// Copies `rows` of `table` into a new matrix.
pub fn gather_rows(table: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    table.select(Axis(0), rows)
}

/// Adds row `k` of `src` into row `rows[k]` of `dst`.
pub fn scatter_add_rows(dst: &mut ndarray::ArrayViewMut2<f64>, rows: &[usize], src: ArrayView2<f64>) {
    for (k, &r) in rows.iter().enumerate() {
        let mut d = dst.row_mut(r);
        d += &src.row(k);
    }
}

/// Row-wise L2 normalization. Returns the normalized rows and the norms.
pub fn normalize_rows(x: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
        norms.push(n);
    }
    (out, norms)
}

/// Backward of [`normalize_rows`]: `dx = (dy - y (y . dy)) / |x|`.
pub fn normalize_rows_backward(y: ArrayView2<f64>, norms: &[f64], dy: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    for (k, mut row) in dx.rows_mut().into_iter().enumerate() {
        if norms[k] == 0.0 {
            row.fill(0.0);
            continue;
        }
        let yr = y.row(k);
        let proj = yr.dot(&dy.row(k));
        row.scaled_add(-proj, &yr);
        row /= norms[k];
    }
    dx
}
