use serde::{Deserialize, Serialize};

use super::{ItemLink, KnowledgeDoc};
use crate::par::*;
use crate::ItemId;

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lev_chars(&a, &b)
}

fn lev_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)`, with two empty strings scoring 1.
pub fn title_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_chars(&a, &b)
}

fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - lev_chars(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlinkedItem {
    pub item_id: ItemId,
    pub title: String,
    pub best_doc: Option<String>,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LinkReport {
    pub links: Vec<ItemLink>,
    pub unlinked: Vec<UnlinkedItem>,
}

/// Links every item to the document whose title is closest by normalized edit distance.
///
/// Items whose best score falls below `min_score` are reported as unlinked. Equal scores go to the
/// smallest `doc_id`.
pub fn link_items(items: &[(ItemId, String)], docs: &[KnowledgeDoc], min_score: f64) -> LinkReport {
    let doc_titles: Vec<Vec<char>> = docs.iter().map(|d| d.title.trim().chars().collect()).collect();
    let best: Vec<Option<(usize, f64)>> = items
        .par_iter()
        .map(|(_, title)| {
            let title: Vec<char> = title.trim().chars().collect();
            let mut best: Option<(usize, f64)> = None;
            for (idx, dt) in doc_titles.iter().enumerate() {
                let longest = title.len().max(dt.len());
                if longest > 0 {
                    // the length difference bounds the distance from below
                    let bound = 1.0 - title.len().abs_diff(dt.len()) as f64 / longest as f64;
                    if let Some((_, s)) = best {
                        if bound < s {
                            continue;
                        }
                    }
                }
                let score = similarity_chars(&title, dt);
                let better = match best {
                    None => true,
                    Some((b_idx, b_score)) => {
                        score > b_score || (score == b_score && docs[idx].doc_id < docs[b_idx].doc_id)
                    }
                };
                if better {
                    best = Some((idx, score));
                }
            }
            best
        })
        .collect();

    let mut report = LinkReport::default();
    for ((item_id, title), best) in items.iter().zip(best) {
        match best {
            Some((idx, score)) if score >= min_score => report.links.push(ItemLink {
                item_id: *item_id,
                doc_id: docs[idx].doc_id.clone(),
                link_score: score,
            }),
            other => report.unlinked.push(UnlinkedItem {
                item_id: *item_id,
                title: title.clone(),
                best_doc: other.map(|(idx, _)| docs[idx].doc_id.clone()),
                best_score: other.map(|(_, s)| s),
            }),
        }
    }
    report
}
