//! User and item side files (ML-1M `users.dat` / `movies.dat` or CSV).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RatingsFormat;
use crate::{Error, ItemId, Result, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub item_id: ItemId,
    pub title: String,
    pub genres: Vec<String>,
}

/// Ordered user attributes. Categorical codes feed the model; `profile` is the readable form used
/// in prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMeta {
    pub user_id: UserId,
    pub gender: String,
    pub age: String,
    pub occupation: String,
}

impl UserMeta {
    pub fn profile(&self) -> Vec<(String, String)> {
        vec![
            ("gender".into(), gender_label(&self.gender).to_string()),
            ("age".into(), age_label(&self.age).to_string()),
            ("occupation".into(), occupation_label(&self.occupation).to_string()),
        ]
    }
}

fn gender_label(code: &str) -> &str {
    match code {
        "M" => "male",
        "F" => "female",
        other => other,
    }
}

fn age_label(code: &str) -> &str {
    match code {
        "1" => "under 18",
        "18" => "18-24",
        "25" => "25-34",
        "35" => "35-44",
        "45" => "45-49",
        "50" => "50-55",
        "56" => "56+",
        other => other,
    }
}

fn occupation_label(code: &str) -> &str {
    const NAMES: [&str; 21] = [
        "other",
        "academic/educator",
        "artist",
        "clerical/admin",
        "college/grad student",
        "customer service",
        "doctor/health care",
        "executive/managerial",
        "farmer",
        "homemaker",
        "K-12 student",
        "lawyer",
        "programmer",
        "retired",
        "sales/marketing",
        "scientist",
        "self-employed",
        "technician/engineer",
        "tradesman/craftsman",
        "unemployed",
        "writer",
    ];
    code.parse::<usize>()
        .ok()
        .and_then(|i| NAMES.get(i).copied())
        .unwrap_or(code)
}

/// ML-1M files are Latin-1; fall back to a byte-to-char mapping when they are not UTF-8.
fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

fn rows(path: &Path, format: RatingsFormat) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read_text(path)?;
    match format {
        RatingsFormat::Ml1m => Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.trim_end().split("::").map(str::to_string).collect()))
            .collect()),
        RatingsFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let mut out = Vec::new();
            for (i, row) in reader.records().enumerate() {
                let row = row.map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: e.to_string(),
                })?;
                out.push((i + 2, row.iter().map(str::to_string).collect()));
            }
            Ok(out)
        }
    }
}

fn parse_id(path: &Path, line: usize, s: &str) -> Result<u32> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad id {s:?}"),
    })
}

/// `MovieID::Title::Genre|Genre` or CSV `item_id,title,genres`.
pub fn load_items(path: &Path, format: RatingsFormat) -> Result<Vec<ItemMeta>> {
    let mut out = Vec::new();
    for (line, f) in rows(path, format)? {
        if f.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected id and title".into(),
            });
        }
        let genres = f
            .get(2)
            .map(|g| g.split('|').filter(|s| !s.is_empty()).map(str::to_string).collect())
            .unwrap_or_default();
        out.push(ItemMeta {
            item_id: parse_id(path, line, &f[0])?,
            title: f[1].clone(),
            genres,
        });
    }
    Ok(out)
}

/// `UserID::Gender::Age::Occupation::Zip` or CSV `user_id,gender,age,occupation`.
pub fn load_users(path: &Path, format: RatingsFormat) -> Result<Vec<UserMeta>> {
    let mut out = Vec::new();
    for (line, f) in rows(path, format)? {
        if f.len() < 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected id, gender, age, occupation".into(),
            });
        }
        out.push(UserMeta {
            user_id: parse_id(path, line, &f[0])?,
            gender: f[1].clone(),
            age: f[2].clone(),
            occupation: f[3].clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_ml1m_side_files() {
        let mut movies = tempfile::NamedTempFile::new().unwrap();
        movies
            .write_all(b"1::Toy Story (1995)::Animation|Children's|Comedy\n2::Caf\xe9 (1990)::Drama\n")
            .unwrap();
        let items = load_items(movies.path(), RatingsFormat::Ml1m).unwrap();
        assert_eq!(items[0].genres, vec!["Animation", "Children's", "Comedy"]);
        assert_eq!(items[1].title, "Café (1990)");

        let mut users = tempfile::NamedTempFile::new().unwrap();
        users.write_all(b"1::F::1::10::48067\n").unwrap();
        let users = load_users(users.path(), RatingsFormat::Ml1m).unwrap();
        let profile = users[0].profile();
        assert_eq!(profile[1], ("age".to_string(), "under 18".to_string()));
        assert_eq!(profile[2].1, "K-12 student");
    }
}
