//! Dense-indexed CTR dataset: id vocabularies, side-feature codes, per-row behavior histories.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;

use crate::corpus::{Bucket, DatasetSplit, ItemMeta, LabeledInteraction, UserMeta};
use crate::encoder::EmbeddingTable;
use crate::{Error, Result};

/// Raw id <-> dense index, dense order = ascending raw id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
}

impl Vocab {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let ids: Vec<u32> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Vocab { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dense(&self, raw: u32) -> Option<usize> {
        self.index.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> u32 {
        self.ids[dense]
    }
}

/// Categorical code book where 0 is reserved for unknown values.
#[derive(Debug, Clone, Default)]
struct Codes(BTreeMap<String, usize>);

impl Codes {
    fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = values.into_iter().collect();
        Codes(set.into_iter().enumerate().map(|(i, v)| (v.to_string(), i + 1)).collect())
    }

    fn code(&self, v: &str) -> usize {
        self.0.get(v).copied().unwrap_or(0)
    }

    fn size(&self) -> usize {
        self.0.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideSizes {
    pub gender: usize,
    pub age: usize,
    pub occupation: usize,
    pub genre: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub user: usize,
    pub item: usize,
    pub label: f64,
    /// Range into [`CtrDataset::history`]: the user's earlier positive items, oldest first.
    pub hist_start: usize,
    pub hist_end: usize,
}

#[derive(Debug, Clone)]
pub struct CtrDataset {
    pub users: Vocab,
    pub items: Vocab,
    /// `[gender, age, occupation]` codes per dense user.
    pub user_side: Vec<[usize; 3]>,
    pub item_genres: Vec<Vec<usize>>,
    pub side_sizes: SideSizes,
    pub history: Vec<usize>,
    pub train: Vec<Row>,
    pub valid: Vec<Row>,
    pub test: Vec<Row>,
}

impl CtrDataset {
    pub fn build(
        interactions: &[LabeledInteraction],
        split: &DatasetSplit,
        users: &[UserMeta],
        items: &[ItemMeta],
        history_cap: usize,
    ) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::Config("no interactions to train on".into()));
        }
        let user_vocab = Vocab::from_ids(
            interactions.iter().map(|r| r.user_id).chain(users.iter().map(|u| u.user_id)),
        );
        let item_vocab = Vocab::from_ids(
            interactions.iter().map(|r| r.item_id).chain(items.iter().map(|i| i.item_id)),
        );

        let genders = Codes::from_values(users.iter().map(|u| u.gender.as_str()));
        let ages = Codes::from_values(users.iter().map(|u| u.age.as_str()));
        let occs = Codes::from_values(users.iter().map(|u| u.occupation.as_str()));
        let genres = Codes::from_values(items.iter().flat_map(|i| i.genres.iter().map(String::as_str)));

        let mut user_side = vec![[0usize; 3]; user_vocab.len()];
        for u in users {
            let d = user_vocab.dense(u.user_id).expect("user in vocab");
            user_side[d] = [genders.code(&u.gender), ages.code(&u.age), occs.code(&u.occupation)];
        }
        let mut item_genres = vec![vec![0usize]; item_vocab.len()];
        for it in items {
            let d = item_vocab.dense(it.item_id).expect("item in vocab");
            if !it.genres.is_empty() {
                item_genres[d] = it.genres.iter().map(|g| genres.code(g)).collect();
            }
        }

        let mut per_user: BTreeMap<u32, Vec<&LabeledInteraction>> = BTreeMap::new();
        for r in interactions {
            per_user.entry(r.user_id).or_default().push(r);
        }
        let mut history = Vec::new();
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        let mut unsplit = 0usize;
        for (user, mut rows) in per_user {
            let Some(bucket) = split.bucket_of(user) else {
                unsplit += rows.len();
                continue;
            };
            rows.sort_by_key(|r| (r.timestamp, r.item_id));
            let u = user_vocab.dense(user).expect("user in vocab");
            let block_start = history.len();
            let out = match bucket {
                Bucket::Train => &mut train,
                Bucket::Valid => &mut valid,
                Bucket::Test => &mut test,
            };
            for r in rows {
                let item = item_vocab.dense(r.item_id).expect("item in vocab");
                let hist_end = history.len();
                out.push(Row {
                    user: u,
                    item,
                    label: r.label as f64,
                    hist_start: hist_end.saturating_sub(history_cap).max(block_start),
                    hist_end,
                });
                if r.label == 1 {
                    history.push(item);
                }
            }
        }
        if unsplit > 0 {
            log::warn!("{unsplit} interactions belong to users outside the split and were skipped");
        }
        Ok(CtrDataset {
            users: user_vocab,
            items: item_vocab,
            user_side,
            item_genres,
            side_sizes: SideSizes {
                gender: genders.size(),
                age: ages.size(),
                occupation: occs.size(),
                genre: genres.size(),
            },
            history,
            train,
            valid,
            test,
        })
    }

    pub fn history_of(&self, row: &Row) -> &[usize] {
        &self.history[row.hist_start..row.hist_end]
    }
}

/// Frozen semantic embeddings laid out by dense id.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTables {
    pub user: Array2<f64>,
    pub item: Array2<f64>,
}

impl SemanticTables {
    /// Subjects missing from a table get the zero (empty-text) vector.
    pub fn from_tables(
        user: &EmbeddingTable,
        item: &EmbeddingTable,
        data: &CtrDataset,
        normalize: bool,
    ) -> Result<Self> {
        if user.dim() != item.dim() {
            return Err(Error::Dimension {
                expected: user.dim(),
                got: item.dim(),
            });
        }
        let (user, item) = if normalize {
            (user.normalized(), item.normalized())
        } else {
            (user.clone(), item.clone())
        };
        let dense = |table: &EmbeddingTable, vocab: &Vocab| {
            let mut m = Array2::zeros((vocab.len(), table.dim()));
            for d in 0..vocab.len() {
                if let Some(row) = table.row(vocab.raw(d)) {
                    for (dst, &v) in m.row_mut(d).iter_mut().zip(row) {
                        *dst = v as f64;
                    }
                }
            }
            m
        };
        Ok(SemanticTables {
            user: dense(&user, &data.users),
            item: dense(&item, &data.items),
        })
    }

    pub fn dim(&self) -> usize {
        self.user.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_users;

    fn li(user_id: u32, item_id: u32, label: u8, timestamp: i64) -> LabeledInteraction {
        LabeledInteraction {
            user_id,
            item_id,
            label,
            timestamp,
        }
    }

    #[test]
    fn histories_are_prior_positives() {
        let inter = vec![li(1, 10, 1, 1), li(1, 11, 0, 2), li(1, 12, 1, 3), li(1, 13, 1, 4), li(2, 10, 1, 1), li(3, 10, 1, 1)];
        let split = split_users([1, 2, 3], [1, 1, 1], 0).unwrap();
        let data = CtrDataset::build(&inter, &split, &[], &[], 1).unwrap();
        let all: Vec<&Row> = data.train.iter().chain(&data.valid).chain(&data.test).collect();
        let u1 = data.users.dense(1).unwrap();
        let rows: Vec<&&Row> = all.iter().filter(|r| r.user == u1).collect();
        assert_eq!(rows.len(), 4);
        assert!(data.history_of(rows[0]).is_empty());
        let i10 = data.items.dense(10).unwrap();
        let i12 = data.items.dense(12).unwrap();
        assert_eq!(data.history_of(rows[1]), &[i10]);
        assert_eq!(data.history_of(rows[2]), &[i10]);
        // capped at one element, the most recent
        assert_eq!(data.history_of(rows[3]), &[i12]);
    }

    #[test]
    fn unknown_side_values_map_to_zero() {
        let inter = vec![li(1, 10, 1, 1), li(2, 10, 1, 1), li(3, 11, 0, 1)];
        let split = split_users([1, 2, 3], [1, 1, 1], 0).unwrap();
        let users = vec![UserMeta {
            user_id: 1,
            gender: "F".into(),
            age: "1".into(),
            occupation: "10".into(),
        }];
        let items = vec![ItemMeta {
            item_id: 10,
            title: "x".into(),
            genres: vec!["Drama".into(), "Comedy".into()],
        }];
        let data = CtrDataset::build(&inter, &split, &users, &items, 5).unwrap();
        assert_eq!(data.user_side[data.users.dense(1).unwrap()], [1, 1, 1]);
        assert_eq!(data.user_side[data.users.dense(2).unwrap()], [0, 0, 0]);
        assert_eq!(data.item_genres[data.items.dense(10).unwrap()], vec![2, 1]);
        assert_eq!(data.item_genres[data.items.dense(11).unwrap()], vec![0]);
        assert_eq!(data.side_sizes.genre, 3);
    }
}
