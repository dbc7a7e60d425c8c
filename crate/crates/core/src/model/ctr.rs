use std::collections::HashMap;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adapter::{AdaptedEmbedding, AdapterCache, MoeAdapter};
use super::data::{CtrDataset, Row, SemanticTables};
use super::deepfm::{DeepFm, DeepFmCache};
use super::din::{Din, DinCache, HistoryLayout};
use super::{Ablation, BackboneKind, ModelConfig};
use crate::nn::{gather_rows, scatter_add_rows, Dropout, Grads, Init, ParamId, ParamStore};
use crate::{Error, Result, Target};

/// Predicted probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Where the semantic half of the augmented embedding comes from.
#[derive(Debug, Clone)]
pub enum SemanticPath {
    /// No knowledge: the augmented embedding is the ID embedding alone.
    None,
    /// Trainable adapters over frozen semantic tables.
    Adapter {
        user: MoeAdapter,
        item: MoeAdapter,
        tables: SemanticTables,
    },
    /// Frozen semantic tables after a fixed projection.
    Fixed { user: Array2<f64>, item: Array2<f64> },
}

#[derive(Debug, Clone)]
struct FirstOrder {
    user: ParamId,
    item: ParamId,
    gender: ParamId,
    age: ParamId,
    occupation: ParamId,
    genre: ParamId,
}

#[derive(Debug, Clone)]
enum Backbone {
    DeepFm { net: DeepFm, first: FirstOrder },
    Din(Din),
}

/// Batch-local index: distinct users/items and where each row points.
#[derive(Debug, Clone)]
struct BatchPlan {
    users: Vec<usize>,
    items: Vec<usize>,
    row_user: Vec<usize>,
    row_item: Vec<usize>,
    layout: HistoryLayout,
}

impl BatchPlan {
    fn new(data: &CtrDataset, rows: &[Row], with_history: bool) -> Self {
        fn local(map: &mut HashMap<usize, usize>, list: &mut Vec<usize>, id: usize) -> usize {
            *map.entry(id).or_insert_with(|| {
                list.push(id);
                list.len() - 1
            })
        }
        let (mut um, mut im) = (HashMap::new(), HashMap::new());
        let mut plan = BatchPlan {
            users: Vec::new(),
            items: Vec::new(),
            row_user: Vec::with_capacity(rows.len()),
            row_item: Vec::with_capacity(rows.len()),
            layout: HistoryLayout::default(),
        };
        plan.layout.offsets.push(0);
        for (r, row) in rows.iter().enumerate() {
            plan.row_user.push(local(&mut um, &mut plan.users, row.user));
            plan.row_item.push(local(&mut im, &mut plan.items, row.item));
            if with_history {
                for &h in data.history_of(row) {
                    let l = local(&mut im, &mut plan.items, h);
                    plan.layout.pos_item.push(l);
                    plan.layout.pos_row.push(r);
                }
                plan.layout.offsets.push(plan.layout.pos_item.len());
            }
        }
        plan
    }
}

#[derive(Debug, Clone)]
enum BackboneCache {
    DeepFm { fields: Vec<Array2<f64>>, net: DeepFmCache },
    Din { item_aug_rows: usize, net: DinCache },
}

/// Intermediate values of one forward pass, consumed by [`CtrModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    plan: BatchPlan,
    side: [Vec<usize>; 3],
    genres: Vec<Vec<usize>>,
    user_adapter: Option<AdapterCache>,
    item_adapter: Option<AdapterCache>,
    backbone: BackboneCache,
}

/// A CTR backbone over `[id ‖ semantic]` embeddings plus user and item side features.
#[derive(Debug, Clone)]
pub struct CtrModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub ablation: Ablation,
    store: ParamStore,
    user_id: ParamId,
    item_id: ParamId,
    gender: ParamId,
    age: ParamId,
    occupation: ParamId,
    genre: ParamId,
    semantic: SemanticPath,
    backbone: Backbone,
    field_dim: usize,
}

impl CtrModel {
    /// `semantic: None` builds the no-knowledge model regardless of `ablation`.
    pub fn new(
        config: &ModelConfig,
        data: &CtrDataset,
        semantic: Option<SemanticTables>,
        ablation: Ablation,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.id_dim;
        let out_dim = config.adapter_output_dim.unwrap_or(d);

        let semantic = match semantic {
            None => SemanticPath::None,
            Some(tables) => {
                if tables.user.nrows() != data.users.len() || tables.item.nrows() != data.items.len() {
                    return Err(Error::Dimension {
                        expected: data.users.len() + data.items.len(),
                        got: tables.user.nrows() + tables.item.nrows(),
                    });
                }
                match ablation {
                    Ablation::Full | Ablation::NoCl => {
                        let cfg = config.adapter_config(tables.dim());
                        let user = MoeAdapter::new(&mut store, "adapter.user", cfg, &mut rng);
                        let item = MoeAdapter::new(&mut store, "adapter.item", cfg, &mut rng);
                        SemanticPath::Adapter { user, item, tables }
                    }
                    Ablation::NoAdapter => {
                        let proj = fixed_projection(tables.dim(), out_dim, seed);
                        SemanticPath::Fixed {
                            user: tables.user.dot(&proj),
                            item: tables.item.dot(&proj),
                        }
                    }
                }
            }
        };
        let field_dim = d + match semantic {
            SemanticPath::None => 0,
            _ => out_dim,
        };

        let init = Init::Uniform(config.embedding_init);
        let sizes = data.side_sizes;
        let user_id = store.add("embed.user_id", &[data.users.len(), d], init, &mut rng);
        let item_id = store.add("embed.item_id", &[data.items.len(), d], init, &mut rng);
        let gender = store.add("embed.gender", &[sizes.gender, field_dim], init, &mut rng);
        let age = store.add("embed.age", &[sizes.age, field_dim], init, &mut rng);
        let occupation = store.add("embed.occupation", &[sizes.occupation, field_dim], init, &mut rng);
        let genre = store.add("embed.genre", &[sizes.genre, field_dim], init, &mut rng);

        let backbone = match config.backbone {
            BackboneKind::Deepfm => {
                let mut w = |name: &str, n: usize| store.add(&format!("first.{name}"), &[n, 1], Init::Zeros, &mut rng);
                let first = FirstOrder {
                    user: w("user", data.users.len()),
                    item: w("item", data.items.len()),
                    gender: w("gender", sizes.gender),
                    age: w("age", sizes.age),
                    occupation: w("occupation", sizes.occupation),
                    genre: w("genre", sizes.genre),
                };
                let net = DeepFm::new(&mut store, 6, field_dim, &config.mlp_hidden, &mut rng);
                Backbone::DeepFm { net, first }
            }
            BackboneKind::Din => Backbone::Din(Din::new(
                &mut store,
                field_dim,
                5 * field_dim,
                &config.attention_hidden,
                &config.mlp_hidden,
                &mut rng,
            )),
        };

        Ok(CtrModel {
            config: config.clone(),
            seed,
            ablation,
            store,
            user_id,
            item_id,
            gender,
            age,
            occupation,
            genre,
            semantic,
            backbone,
            field_dim,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn semantic_path(&self) -> &SemanticPath {
        &self.semantic
    }

    /// The trainable adapter and its frozen input table for `target`, if any.
    pub fn adapter(&self, target: Target) -> Option<(&MoeAdapter, &Array2<f64>)> {
        match &self.semantic {
            SemanticPath::Adapter { user, item, tables } => Some(match target {
                Target::User => (user, &tables.user),
                Target::Item => (item, &tables.item),
            }),
            _ => None,
        }
    }

    /// Adapter output for one dense subject.
    pub fn adapted(&self, target: Target, dense: usize, normalize: bool) -> Option<Result<AdaptedEmbedding>> {
        let (adapter, table) = self.adapter(target)?;
        let row = table.row(dense).to_vec();
        Some(adapter.adapt(&self.store, dense as u32, &row, normalize))
    }

    /// Semantic half for `ids` (width 0 without knowledge).
    fn semantic_rows(&self, target: Target, ids: &[usize]) -> (Array2<f64>, Option<AdapterCache>) {
        match &self.semantic {
            SemanticPath::None => (Array2::zeros((ids.len(), 0)), None),
            SemanticPath::Fixed { user, item } => {
                let t = if target == Target::User { user } else { item };
                (gather_rows(t.view(), ids), None)
            }
            SemanticPath::Adapter { .. } => {
                let (adapter, table) = self.adapter(target).expect("adapter path");
                let x = gather_rows(table.view(), ids);
                let (out, cache) = adapter.forward(&self.store, x.view());
                (out, Some(cache))
            }
        }
    }

    fn augmented(&self, target: Target, ids: &[usize]) -> (Array2<f64>, Option<AdapterCache>) {
        let table = if target == Target::User { self.user_id } else { self.item_id };
        let id = gather_rows(self.store.mat(table), ids);
        let (sem, cache) = self.semantic_rows(target, ids);
        (super::augment_rows(id.view(), sem.view()), cache)
    }

    fn genre_mean(&self, genres: &[Vec<usize>]) -> Array2<f64> {
        let table = self.store.mat(self.genre);
        let mut out = Array2::zeros((genres.len(), table.ncols()));
        for (r, gs) in genres.iter().enumerate() {
            let w = 1.0 / gs.len() as f64;
            for &g in gs {
                out.row_mut(r).scaled_add(w, &table.row(g));
            }
        }
        out
    }

    /// Logits for `rows`. Dropout is applied only when `rng` is given.
    pub fn forward(&self, data: &CtrDataset, rows: &[Row], rng: Option<&mut ChaCha8Rng>) -> (Array1<f64>, ForwardCache) {
        let with_history = matches!(self.backbone, Backbone::Din(_));
        let plan = BatchPlan::new(data, rows, with_history);
        let (user_aug, user_adapter) = self.augmented(Target::User, &plan.users);
        let (item_aug, item_adapter) = self.augmented(Target::Item, &plan.items);

        let side: [Vec<usize>; 3] = std::array::from_fn(|k| rows.iter().map(|r| data.user_side[r.user][k]).collect());
        let genres: Vec<Vec<usize>> = rows.iter().map(|r| data.item_genres[r.item].clone()).collect();
        let side_fields = [
            gather_rows(self.store.mat(self.gender), &side[0]),
            gather_rows(self.store.mat(self.age), &side[1]),
            gather_rows(self.store.mat(self.occupation), &side[2]),
            self.genre_mean(&genres),
        ];
        let dropout = rng.filter(|_| self.config.dropout > 0.0).map(|rng| Dropout {
            rate: self.config.dropout,
            rng,
        });
        let users_rows = gather_rows(user_aug.view(), &plan.row_user);

        let (logits, backbone) = match &self.backbone {
            Backbone::DeepFm { net, first } => {
                let items_rows = gather_rows(item_aug.view(), &plan.row_item);
                let mut fields = vec![users_rows, items_rows];
                fields.extend(side_fields);
                let (mut logit, cache) = net.forward(&self.store, &fields, dropout);
                let lin = |id: ParamId, k: usize| self.store.get(id)[k];
                for (r, row) in rows.iter().enumerate() {
                    let g: f64 = genres[r].iter().map(|&g| lin(first.genre, g)).sum::<f64>() / genres[r].len() as f64;
                    logit[r] += lin(first.user, row.user)
                        + lin(first.item, row.item)
                        + lin(first.gender, side[0][r])
                        + lin(first.age, side[1][r])
                        + lin(first.occupation, side[2][r])
                        + g;
                }
                (logit, BackboneCache::DeepFm { fields, net: cache })
            }
            Backbone::Din(net) => {
                let views: Vec<ArrayView2<f64>> = std::iter::once(users_rows.view())
                    .chain(side_fields.iter().map(|f| f.view()))
                    .collect();
                let other = concatenate(Axis(1), &views).expect("same rows");
                let (logit, cache) = net.forward(&self.store, &item_aug, &plan.row_item, &plan.layout, other.view(), dropout);
                (
                    logit,
                    BackboneCache::Din {
                        item_aug_rows: item_aug.nrows(),
                        net: cache,
                    },
                )
            }
        };
        (
            logits,
            ForwardCache {
                plan,
                side,
                genres,
                user_adapter,
                item_adapter,
                backbone,
            },
        )
    }

    /// Accumulates `dL/dθ` given `dL/dlogit`.
    pub fn backward(&self, g: &mut Grads, cache: &ForwardCache, dlogit: &Array1<f64>) {
        let plan = &cache.plan;
        let f = self.field_dim;
        let n = dlogit.len();
        let (d_user_rows, d_item_aug, d_side): (Array2<f64>, Array2<f64>, [Array2<f64>; 4]) = match (&self.backbone, &cache.backbone) {
            (Backbone::DeepFm { net, first }, BackboneCache::DeepFm { fields, net: nc }) => {
                let mut add = |id: ParamId, k: usize, v: f64| g.get_mut(id)[k] += v;
                for r in 0..n {
                    let d = dlogit[r];
                    add(first.user, plan.users[plan.row_user[r]], d);
                    add(first.item, plan.items[plan.row_item[r]], d);
                    add(first.gender, cache.side[0][r], d);
                    add(first.age, cache.side[1][r], d);
                    add(first.occupation, cache.side[2][r], d);
                    let w = d / cache.genres[r].len() as f64;
                    for &gg in &cache.genres[r] {
                        add(first.genre, gg, w);
                    }
                }
                let mut df = net.backward(&self.store, g, nc, fields, dlogit).into_iter();
                let du = df.next().expect("user field");
                let di_rows = df.next().expect("item field");
                let mut di = Array2::zeros((plan.items.len(), f));
                scatter_add_rows(&mut di.view_mut(), &plan.row_item, di_rows.view());
                let side: Vec<Array2<f64>> = df.collect();
                (du, di, side.try_into().expect("four side fields"))
            }
            (Backbone::Din(net), BackboneCache::Din { item_aug_rows, net: nc }) => {
                let (di, dother) = net.backward(&self.store, g, nc, *item_aug_rows, &plan.row_item, &plan.layout, dlogit);
                let block = |k: usize| dother.slice(s![.., k * f..(k + 1) * f]).to_owned();
                (block(0), di, [block(1), block(2), block(3), block(4)])
            }
            _ => unreachable!("cache from a different backbone"),
        };

        let mut du = Array2::zeros((plan.users.len(), f));
        scatter_add_rows(&mut du.view_mut(), &plan.row_user, d_user_rows.view());
        self.backward_augmented(g, Target::User, &plan.users, &du, cache.user_adapter.as_ref());
        self.backward_augmented(g, Target::Item, &plan.items, &d_item_aug, cache.item_adapter.as_ref());

        let [dg, da, doc, dgen] = d_side;
        scatter_add_rows(&mut g.mat_mut(self.gender), &cache.side[0], dg.view());
        scatter_add_rows(&mut g.mat_mut(self.age), &cache.side[1], da.view());
        scatter_add_rows(&mut g.mat_mut(self.occupation), &cache.side[2], doc.view());
        let mut gt = g.mat_mut(self.genre);
        for (r, gs) in cache.genres.iter().enumerate() {
            let w = 1.0 / gs.len() as f64;
            for &gg in gs {
                gt.row_mut(gg).scaled_add(w, &dgen.row(r));
            }
        }
    }

    fn backward_augmented(&self, g: &mut Grads, target: Target, ids: &[usize], daug: &Array2<f64>, cache: Option<&AdapterCache>) {
        let d = self.config.id_dim;
        let table = if target == Target::User { self.user_id } else { self.item_id };
        scatter_add_rows(&mut g.mat_mut(table), ids, daug.slice(s![.., ..d]));
        if let (Some((adapter, _)), Some(cache)) = (self.adapter(target), cache) {
            adapter.backward(&self.store, g, cache, daug.slice(s![.., d..]));
        }
    }

    /// Clamped click probabilities, evaluated in chunks without dropout.
    pub fn predict(&self, data: &CtrDataset, rows: &[Row]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(1024) {
            let (logit, _) = self.forward(data, chunk, None);
            out.extend(logit.iter().map(|&z| sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS)));
        }
        out
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Seeded projection `in → out`; the identity when the widths already match.
fn fixed_projection(input: usize, output: usize, seed: u64) -> Array2<f64> {
    if input == output {
        return Array2::eye(input);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1ce_d000_0001);
    let bound = (3.0 / input as f64).sqrt();
    Array2::from_shape_simple_fn((input, output), || rng.gen_range(-bound..=bound))
}
