use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InteractionRecord, LabeledInteraction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatingsFormat {
    /// `UserID::MovieID::Rating::Timestamp`
    #[default]
    Ml1m,
    /// Header `user_id,item_id,rating,timestamp`.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub records: Vec<InteractionRecord>,
    pub rejected: Vec<Reject>,
}

pub fn ingest_interactions(path: &Path, format: RatingsFormat) -> Result<IngestReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut report = IngestReport::default();
    match format {
        RatingsFormat::Ml1m => {
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.trim().split("::").collect();
                accept(&mut report, idx + 1, &fields);
            }
        }
        RatingsFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .flexible(true)
                .from_reader(text.as_bytes());
            for (idx, row) in reader.records().enumerate() {
                // header is line 1
                let line = idx + 2;
                match row {
                    Ok(row) => {
                        let fields: Vec<&str> = row.iter().collect();
                        accept(&mut report, line, &fields);
                    }
                    Err(e) => report.rejected.push(Reject {
                        line,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    for r in &report.rejected {
        log::warn!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    log::info!(
        "{}: {} interactions, {} rejected",
        path.display(),
        report.records.len(),
        report.rejected.len()
    );
    Ok(report)
}

fn accept(report: &mut IngestReport, line: usize, fields: &[&str]) {
    match parse_fields(fields) {
        Ok(rec) => report.records.push(rec),
        Err(reason) => report.rejected.push(Reject { line, reason }),
    }
}

fn parse_fields(fields: &[&str]) -> std::result::Result<InteractionRecord, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let id = |s: &str, what: &str| {
        s.parse::<u32>()
            .map_err(|_| format!("{what} {s:?} is not a non-negative integer"))
    };
    let user_id = id(fields[0], "user id")?;
    let item_id = id(fields[1], "item id")?;
    let rating: i64 = fields[2]
        .parse()
        .map_err(|_| format!("rating {:?} is not an integer", fields[2]))?;
    if !(1..=5).contains(&rating) {
        return Err(format!("rating {rating} out of range [1,5]"));
    }
    let timestamp = fields[3]
        .parse::<i64>()
        .map_err(|_| format!("timestamp {:?} is not an integer", fields[3]))?;
    Ok(InteractionRecord {
        user_id,
        item_id,
        rating: rating as u8,
        timestamp,
    })
}

/// Label is 1 iff `rating > threshold`; order and count are preserved.
pub fn binarize(records: &[InteractionRecord], threshold: u8) -> Vec<LabeledInteraction> {
    assert!((1..=5).contains(&threshold), "threshold {threshold} outside [1,5]");
    records
        .iter()
        .map(|r| LabeledInteraction {
            user_id: r.user_id,
            item_id: r.item_id,
            label: u8::from(r.rating > threshold),
            timestamp: r.timestamp,
        })
        .collect()
}

/// Keeps the latest record per (user, item); equal timestamps keep the one read last.
pub fn dedupe_latest(records: &[InteractionRecord]) -> Vec<InteractionRecord> {
    let mut latest: HashMap<(u32, u32), usize> = HashMap::with_capacity(records.len());
    for (idx, r) in records.iter().enumerate() {
        latest
            .entry((r.user_id, r.item_id))
            .and_modify(|cur| {
                if r.timestamp >= records[*cur].timestamp {
                    *cur = idx;
                }
            })
            .or_insert(idx);
    }
    let mut keep: Vec<usize> = latest.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| records[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_ml1m_line() {
        let f = write_tmp("1::1193::5::978300760\n");
        let rep = ingest_interactions(f.path(), RatingsFormat::Ml1m).unwrap();
        assert_eq!(
            rep.records,
            vec![InteractionRecord {
                user_id: 1,
                item_id: 1193,
                rating: 5,
                timestamp: 978300760
            }]
        );
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn empty_file_is_empty() {
        let f = write_tmp("");
        let rep = ingest_interactions(f.path(), RatingsFormat::Ml1m).unwrap();
        assert!(rep.records.is_empty());
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn rejects_out_of_range_rating() {
        let f = write_tmp("1::1193::9::0\n2::10::3::5\nnot a line\n-1::3::4::0\n");
        let rep = ingest_interactions(f.path(), RatingsFormat::Ml1m).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.rejected.len(), 3);
        assert_eq!(rep.rejected[0].line, 1);
        assert!(rep.rejected[0].reason.contains("out of range"));
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = ingest_interactions(Path::new("/nonexistent/ratings.dat"), RatingsFormat::Ml1m);
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn csv_format() {
        let f = write_tmp("user_id,item_id,rating,timestamp\n3,4,2,100\n3,5,0,1\n");
        let rep = ingest_interactions(f.path(), RatingsFormat::Csv).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.records[0].rating, 2);
        assert_eq!(rep.rejected[0].line, 3);
    }

    #[test]
    fn binarize_threshold() {
        let recs: Vec<_> = [4u8, 3, 5, 1]
            .iter()
            .map(|&rating| InteractionRecord {
                user_id: 0,
                item_id: 0,
                rating,
                timestamp: 0,
            })
            .collect();
        let labels: Vec<u8> = binarize(&recs, 3).iter().map(|l| l.label).collect();
        assert_eq!(labels, vec![1, 0, 1, 0]);
    }

    #[test]
    fn dedupe_keeps_latest() {
        let r = |item, rating, timestamp| InteractionRecord {
            user_id: 1,
            item_id: item,
            rating,
            timestamp,
        };
        let out = dedupe_latest(&[r(1, 5, 10), r(2, 1, 3), r(1, 2, 20), r(1, 4, 15)]);
        assert_eq!(out, vec![r(2, 1, 3), r(1, 2, 20)]);
    }

    proptest::proptest! {
        #[test]
        fn binarize_counts_match(ratings in proptest::collection::vec(1u8..=5, 0..200), threshold in 1u8..=5) {
            let recs: Vec<_> = ratings.iter().enumerate().map(|(i, &rating)| InteractionRecord {
                user_id: i as u32, item_id: 0, rating, timestamp: i as i64,
            }).collect();
            let labeled = binarize(&recs, threshold);
            proptest::prop_assert_eq!(labeled.len(), recs.len());
            let ones = labeled.iter().filter(|l| l.label == 1).count();
            proptest::prop_assert_eq!(ones, ratings.iter().filter(|&&r| r > threshold).count());
        }
    }
}
