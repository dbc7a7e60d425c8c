use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: BTreeSet<UserId>,
    pub valid: BTreeSet<UserId>,
    pub test: BTreeSet<UserId>,
    pub ratio: [u32; 3],
    pub seed: u64,
}

/// On-disk form: one line per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub user_id: UserId,
    pub bucket: Bucket,
    pub seed: u64,
    pub ratio: [u32; 3],
}

impl DatasetSplit {
    pub fn bucket_of(&self, user: UserId) -> Option<Bucket> {
        if self.train.contains(&user) {
            Some(Bucket::Train)
        } else if self.valid.contains(&user) {
            Some(Bucket::Valid)
        } else if self.test.contains(&user) {
            Some(Bucket::Test)
        } else {
            None
        }
    }

    pub fn to_rows(&self) -> Vec<SplitRow> {
        let mut rows: Vec<SplitRow> = [
            (Bucket::Train, &self.train),
            (Bucket::Valid, &self.valid),
            (Bucket::Test, &self.test),
        ]
        .into_iter()
        .flat_map(|(bucket, set)| {
            set.iter().map(move |&user_id| SplitRow {
                user_id,
                bucket,
                seed: self.seed,
                ratio: self.ratio,
            })
        })
        .collect();
        rows.sort_by_key(|r| r.user_id);
        rows
    }

    pub fn from_rows(rows: &[SplitRow]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Config("split file is empty".into()))?;
        let mut split = DatasetSplit {
            train: BTreeSet::new(),
            valid: BTreeSet::new(),
            test: BTreeSet::new(),
            ratio: first.ratio,
            seed: first.seed,
        };
        for r in rows {
            match r.bucket {
                Bucket::Train => split.train.insert(r.user_id),
                Bucket::Valid => split.valid.insert(r.user_id),
                Bucket::Test => split.test.insert(r.user_id),
            };
        }
        Ok(split)
    }
}

/// Bucket sizes by largest remainder, then topped up so no bucket is empty.
fn bucket_sizes(n: usize, ratio: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratio.iter().map(|&r| r as u64).sum();
    let mut sizes = [0usize; 3];
    let mut rems = [(0u64, 0usize); 3];
    for (k, &r) in ratio.iter().enumerate() {
        let num = n as u64 * r as u64;
        sizes[k] = (num / total) as usize;
        rems[k] = (num % total, k);
    }
    let mut left = n - sizes.iter().sum::<usize>();
    // larger remainder first, earlier bucket on ties
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rems.iter() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    for k in 0..3 {
        if sizes[k] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[k] += 1;
        }
    }
    sizes
}

/// Deterministic seeded partition of users into train / validation / test.
///
/// Input order does not matter: ids are sorted before the seeded shuffle.
pub fn split_users(
    user_ids: impl IntoIterator<Item = UserId>,
    ratio: [u32; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    if ratio.contains(&0) {
        return Err(Error::Config(format!("split ratio components must be positive: {ratio:?}")));
    }
    let mut ids: Vec<UserId> = user_ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 3 {
        return Err(Error::TooFewUsers {
            needed: 3,
            got: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let [n_train, n_valid, _] = bucket_sizes(ids.len(), ratio);
    Ok(DatasetSplit {
        train: ids[..n_train].iter().copied().collect(),
        valid: ids[n_train..n_train + n_valid].iter().copied().collect(),
        test: ids[n_train + n_valid..].iter().copied().collect(),
        ratio,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(s: &DatasetSplit) -> (usize, usize, usize) {
        (s.train.len(), s.valid.len(), s.test.len())
    }

    #[test]
    fn exact_ratios() {
        assert_eq!(sizes(&split_users(0..10, [8, 1, 1], 7).unwrap()), (8, 1, 1));
        assert_eq!(sizes(&split_users(0..100, [8, 1, 1], 7).unwrap()), (80, 10, 10));
    }

    #[test]
    fn same_seed_same_split() {
        let a = split_users(0..57, [8, 1, 1], 3).unwrap();
        let b = split_users(0..57, [8, 1, 1], 3).unwrap();
        assert_eq!(a, b);
        let c = split_users(0..57, [8, 1, 1], 4).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn too_few_users() {
        assert!(matches!(
            split_users([1, 2], [8, 1, 1], 0),
            Err(Error::TooFewUsers { .. })
        ));
        assert!(split_users(0..10, [8, 0, 1], 0).is_err());
        assert_eq!(sizes(&split_users(0..3, [8, 1, 1], 0).unwrap()), (1, 1, 1));
    }

    #[test]
    fn rows_round_trip() {
        let s = split_users(0..20, [8, 1, 1], 11).unwrap();
        assert_eq!(DatasetSplit::from_rows(&s.to_rows()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn partition_invariants(
            mut ids in proptest::collection::btree_set(0u32..10_000, 3..300),
            seed in 0u64..1000,
            a in 1u32..10, b in 1u32..10, c in 1u32..10,
        ) {
            let ordered: Vec<u32> = ids.iter().copied().collect();
            let mut reversed = ordered.clone();
            reversed.reverse();
            let s1 = split_users(ordered.clone(), [a, b, c], seed).unwrap();
            let s2 = split_users(reversed, [a, b, c], seed).unwrap();
            prop_assert_eq!(&s1, &s2);
            prop_assert!(s1.train.is_disjoint(&s1.valid));
            prop_assert!(s1.train.is_disjoint(&s1.test));
            prop_assert!(s1.valid.is_disjoint(&s1.test));
            let n = ordered.len();
            prop_assert_eq!(s1.train.len() + s1.valid.len() + s1.test.len(), n);
            for id in &ordered { ids.remove(id); }
            prop_assert!(ids.is_empty());
            if n >= 30 {
                let total = (a + b + c) as f64;
                for (size, r) in [(s1.train.len(), a), (s1.valid.len(), b), (s1.test.len(), c)] {
                    let ideal = n as f64 * r as f64 / total;
                    prop_assert!((size as f64 - ideal).abs() <= 1.0 + 1e-9, "size {} ideal {}", size, ideal);
                }
            }
        }
    }
}
