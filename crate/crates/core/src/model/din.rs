use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::nn::{gather_rows, scatter_add_rows, Dropout, Grads, Mlp, MlpCache, ParamStore};

/// Behavior-history attention: each history element is scored by an MLP over
/// `[h, c, h - c, h ⊙ c]`, scores are softmax-normalized over the row's history, and the weighted
/// history sum joins the candidate and user fields in the output MLP.
#[derive(Debug, Clone)]
pub struct Din {
    pub field_dim: usize,
    pub other_width: usize,
    attention: Mlp,
    output: Mlp,
}

/// Flattened histories of one batch. Position `t` belongs to row `pos_row[t]` and points at
/// local item `pos_item[t]`; row `r` owns positions `offsets[r]..offsets[r + 1]`.
#[derive(Debug, Clone, Default)]
pub struct HistoryLayout {
    pub pos_item: Vec<usize>,
    pub pos_row: Vec<usize>,
    pub offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DinCache {
    hist: Array2<f64>,
    cand_rep: Array2<f64>,
    weights: Array1<f64>,
    att: MlpCache,
    out: MlpCache,
}

impl Din {
    pub fn new(
        store: &mut ParamStore,
        field_dim: usize,
        other_width: usize,
        attention_hidden: &[usize],
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        let mut att_dims = vec![4 * field_dim];
        att_dims.extend_from_slice(attention_hidden);
        att_dims.push(1);
        let mut out_dims = vec![2 * field_dim + other_width];
        out_dims.extend_from_slice(hidden);
        out_dims.push(1);
        Din {
            field_dim,
            other_width,
            attention: Mlp::new(store, "din.attention", &att_dims, rng),
            output: Mlp::new(store, "din.output", &out_dims, rng),
        }
    }

    fn attention_input(hist: &Array2<f64>, cand_rep: &Array2<f64>) -> Array2<f64> {
        let diff = hist - cand_rep;
        let prod = hist * cand_rep;
        concatenate(Axis(1), &[hist.view(), cand_rep.view(), diff.view(), prod.view()]).expect("same rows")
    }

    /// Softmax of `scores` within each row's segment of positions.
    fn segment_softmax(scores: &Array1<f64>, offsets: &[usize]) -> Array1<f64> {
        let mut w = Array1::zeros(scores.len());
        for win in offsets.windows(2) {
            let (a, b) = (win[0], win[1]);
            if a == b {
                continue;
            }
            let seg = scores.slice(s![a..b]);
            let max = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let e = seg.mapv(|v| (v - max).exp());
            let total = e.sum();
            w.slice_mut(s![a..b]).assign(&(e / total));
        }
        w
    }

    fn pool(weights: &Array1<f64>, hist: &Array2<f64>, layout: &HistoryLayout, rows: usize, d: usize) -> Array2<f64> {
        let mut pooled = Array2::zeros((rows, d));
        for (t, &r) in layout.pos_row.iter().enumerate() {
            pooled.row_mut(r).scaled_add(weights[t], &hist.row(t));
        }
        pooled
    }

    /// Attention weights per history position.
    pub fn attention_weights(&self, p: &ParamStore, item_aug: &Array2<f64>, cand: &[usize], layout: &HistoryLayout) -> Array1<f64> {
        let hist = gather_rows(item_aug.view(), &layout.pos_item);
        let cand_aug = gather_rows(item_aug.view(), cand);
        let cand_rep = gather_rows(cand_aug.view(), &layout.pos_row);
        let (scores, _) = self
            .attention
            .forward::<rand_chacha::ChaCha8Rng>(p, Self::attention_input(&hist, &cand_rep).view(), None);
        Self::segment_softmax(&scores.column(0).to_owned(), &layout.offsets)
    }

    /// Weighted history sum per row (zero for rows without history).
    pub fn pooled(&self, p: &ParamStore, item_aug: &Array2<f64>, cand: &[usize], layout: &HistoryLayout) -> Array2<f64> {
        let w = self.attention_weights(p, item_aug, cand, layout);
        let hist = gather_rows(item_aug.view(), &layout.pos_item);
        Self::pool(&w, &hist, layout, cand.len(), self.field_dim)
    }

    /// `item_aug`: augmented embeddings of the batch's distinct items; `cand[r]` is row `r`'s
    /// candidate among them; `other`: the row's user-side fields, `n x other_width`.
    pub fn forward<R: Rng>(
        &self,
        p: &ParamStore,
        item_aug: &Array2<f64>,
        cand: &[usize],
        layout: &HistoryLayout,
        other: ArrayView2<f64>,
        dropout: Option<Dropout<'_, R>>,
    ) -> (Array1<f64>, DinCache) {
        let n = cand.len();
        let d = self.field_dim;
        let hist = gather_rows(item_aug.view(), &layout.pos_item);
        let cand_aug = gather_rows(item_aug.view(), cand);
        let cand_rep = gather_rows(cand_aug.view(), &layout.pos_row);
        let (scores, att) = self
            .attention
            .forward::<R>(p, Self::attention_input(&hist, &cand_rep).view(), None);
        let weights = Self::segment_softmax(&scores.column(0).to_owned(), &layout.offsets);
        let pooled = Self::pool(&weights, &hist, layout, n, d);
        let input = concatenate(Axis(1), &[pooled.view(), cand_aug.view(), other.view()]).expect("same rows");
        let (logit, out) = self.output.forward(p, input.view(), dropout);
        (
            logit.column(0).to_owned(),
            DinCache {
                hist,
                cand_rep,
                weights,
                att,
                out,
            },
        )
    }

    /// Returns (gradient w.r.t. `item_aug`, gradient w.r.t. `other`).
    pub fn backward(
        &self,
        p: &ParamStore,
        g: &mut Grads,
        cache: &DinCache,
        item_rows: usize,
        cand: &[usize],
        layout: &HistoryLayout,
        dlogit: &Array1<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let d = self.field_dim;
        let din = self
            .output
            .backward(p, g, &cache.out, dlogit.view().insert_axis(Axis(1)));
        let dpooled = din.slice(s![.., ..d]);
        let mut dcand = din.slice(s![.., d..2 * d]).to_owned();
        let dother = din.slice(s![.., 2 * d..]).to_owned();

        let positions = layout.pos_item.len();
        let mut dhist = Array2::zeros((positions, d));
        let mut dw = Array1::zeros(positions);
        for (t, &r) in layout.pos_row.iter().enumerate() {
            dw[t] = dpooled.row(r).dot(&cache.hist.row(t));
            dhist.row_mut(t).scaled_add(cache.weights[t], &dpooled.row(r));
        }
        if positions > 0 {
            // segment softmax backward
            let mut dscore = Array2::zeros((positions, 1));
            for win in layout.offsets.windows(2) {
                let (a, b) = (win[0], win[1]);
                let dot: f64 = (a..b).map(|t| cache.weights[t] * dw[t]).sum();
                for t in a..b {
                    dscore[[t, 0]] = cache.weights[t] * (dw[t] - dot);
                }
            }
            let datt = self.attention.backward(p, g, &cache.att, dscore.view());
            let a1 = datt.slice(s![.., ..d]);
            let a2 = datt.slice(s![.., d..2 * d]);
            let a3 = datt.slice(s![.., 2 * d..3 * d]);
            let a4 = datt.slice(s![.., 3 * d..]);
            dhist += &a1;
            dhist += &a3;
            dhist += &(&a4 * &cache.cand_rep);
            let dcand_rep = &a2 - &a3 + &a4 * &cache.hist;
            scatter_add_rows(&mut dcand.view_mut(), &layout.pos_row, dcand_rep.view());
        }
        let mut ditem = Array2::zeros((item_rows, d));
        scatter_add_rows(&mut ditem.view_mut(), &layout.pos_item, dhist.view());
        scatter_add_rows(&mut ditem.view_mut(), cand, dcand.view());
        (ditem, dother)
    }
}
