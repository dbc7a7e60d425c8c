//! SWING behavioral similarity and positive-pair mining.
//!
//! For two users with common items `C = I_u ∩ I_v`:
//!
//! ```text
//! s(u, v) = Σ_{i ∈ C} Σ_{j ∈ C} 1 / (α + |U_i ∩ U_j|)
//! ```
//!
//! summed over ordered pairs with `i = j` included. The item-side score swaps users and items.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledInteraction;
use crate::par::*;
use crate::{Error, Result, Target};

/// Bidirectional user/item adjacency. Neighbor lists are sorted and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionIndex {
    user_items: BTreeMap<u32, Vec<u32>>,
    item_users: BTreeMap<u32, Vec<u32>>,
}

impl InteractionIndex {
    pub fn build(train: &[LabeledInteraction], positives_only: bool) -> Self {
        let mut user_items: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut item_users: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for r in train.iter().filter(|r| !positives_only || r.label == 1) {
            user_items.entry(r.user_id).or_default().push(r.item_id);
            item_users.entry(r.item_id).or_default().push(r.user_id);
        }
        for list in user_items.values_mut().chain(item_users.values_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        InteractionIndex {
            user_items,
            item_users,
        }
    }

    pub fn user_items(&self) -> &BTreeMap<u32, Vec<u32>> {
        &self.user_items
    }

    pub fn item_users(&self) -> &BTreeMap<u32, Vec<u32>> {
        &self.item_users
    }

    pub fn is_empty(&self) -> bool {
        self.user_items.is_empty()
    }

    /// (subject -> neighbors, neighbor -> subjects) for one side.
    fn side(&self, target: Target) -> (&BTreeMap<u32, Vec<u32>>, &BTreeMap<u32, Vec<u32>>) {
        match target {
            Target::User => (&self.user_items, &self.item_users),
            Target::Item => (&self.item_users, &self.user_items),
        }
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn intersect_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("swing alpha must be positive, got {alpha}")))
    }
}

/// `pair_overlap(i, j)` returns `|U_i ∩ U_j|` for neighbor ids `i`, `j`.
fn swing_over(common: &[u32], alpha: f64, mut pair_overlap: impl FnMut(u32, u32) -> usize) -> f64 {
    let mut s = 0.0;
    for &i in common {
        for &j in common {
            s += 1.0 / (alpha + pair_overlap(i, j) as f64);
        }
    }
    s
}

fn swing(target: Target, a: u32, b: u32, index: &InteractionIndex, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (members, pivots) = index.side(target);
    let get = |id| members.get(&id).ok_or(Error::UnknownId { target, id });
    let common = intersect(get(a)?, get(b)?);
    Ok(swing_over(&common, alpha, |i, j| intersect_len(&pivots[&i], &pivots[&j])))
}

pub fn swing_user(u: u32, v: u32, index: &InteractionIndex, alpha: f64) -> Result<f64> {
    swing(Target::User, u, v, index, alpha)
}

pub fn swing_item(i: u32, j: u32, index: &InteractionIndex, alpha: f64) -> Result<f64> {
    swing(Target::Item, i, j, index, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivePair {
    pub partner: u32,
    pub score: f64,
}

/// Each subject's most similar other subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePairIndex {
    pub target: Target,
    pub pairs: BTreeMap<u32, PositivePair>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    target: Target,
    subject_id: u32,
    partner_id: u32,
    score: f64,
}

impl PositivePairIndex {
    pub fn partner(&self, subject: u32) -> Option<u32> {
        self.pairs.get(&subject).map(|p| p.partner)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let rows: Vec<PairRow> = self
            .pairs
            .iter()
            .map(|(&subject_id, p)| PairRow {
                target: self.target,
                subject_id,
                partner_id: p.partner,
                score: p.score,
            })
            .collect();
        crate::jsonl::write(path, &rows)
    }

    pub fn read(path: &Path, target: Target) -> Result<Self> {
        let rows: Vec<PairRow> = crate::jsonl::read(path)?;
        Ok(PositivePairIndex {
            target,
            pairs: rows
                .into_iter()
                .filter(|r| r.target == target)
                .map(|r| {
                    (
                        r.subject_id,
                        PositivePair {
                            partner: r.partner_id,
                            score: r.score,
                        },
                    )
                })
                .collect(),
        })
    }
}

/// Mines the highest-SWING partner of every subject.
///
/// Candidates are subjects sharing at least one neighbor, ranked by co-interaction count (ties by
/// id) and truncated to `candidate_cap`. The partner is the candidate with the highest score, ties
/// to the smaller id. Subjects without a positive-score candidate are left out.
pub fn mine_positives(
    target: Target,
    index: &InteractionIndex,
    alpha: f64,
    candidate_cap: usize,
) -> Result<PositivePairIndex> {
    check_alpha(alpha)?;
    let (members, pivots) = index.side(target);
    let subjects: Vec<(&u32, &Vec<u32>)> = members.iter().collect();
    let mined: Vec<Option<(u32, PositivePair)>> = subjects
        .par_iter()
        .map(|&(&a, own)| {
            let mut counts: HashMap<u32, u32> = HashMap::new();
            for p in own {
                for &b in &pivots[p] {
                    if b != a {
                        *counts.entry(b).or_default() += 1;
                    }
                }
            }
            let mut cands: Vec<(u32, u32)> = counts.into_iter().collect();
            cands.sort_unstable_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            cands.truncate(candidate_cap);

            // every pair of common neighbors lies in own x own; memoize their overlaps
            let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
            let mut best: Option<PositivePair> = None;
            for (b, _) in cands {
                let common = intersect(own, &members[&b]);
                let score = swing_over(&common, alpha, |i, j| {
                    let key = if i <= j { (i, j) } else { (j, i) };
                    *overlap
                        .entry(key)
                        .or_insert_with(|| intersect_len(&pivots[&key.0], &pivots[&key.1]))
                });
                let better = match best {
                    None => true,
                    Some(cur) => score > cur.score || (score == cur.score && b < cur.partner),
                };
                if better {
                    best = Some(PositivePair { partner: b, score });
                }
            }
            best.filter(|p| p.score > 0.0).map(|p| (a, p))
        })
        .collect();
    Ok(PositivePairIndex {
        target,
        pairs: mined.into_iter().flatten().collect(),
    })
}
