//! Seeded synthetic MovieLens-style dataset with a matching document corpus.
//!
//! Every item has a latent genre mix; each user likes two genres and dislikes one. Item documents
//! are drawn from per-genre vocabularies, so their text encodes the latent mix, while the genre
//! column of `movies.dat` is only a noisy hint. Users are exposed to items in proportion to their
//! affinity, and ratings follow the same affinity plus noise.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::jsonl::write_atomic;
use crate::pipeline::PipelineConfig;
use crate::training::InfoNceReduction;
use crate::Result;

pub const GENRES: [&str; 8] = [
    "Action",
    "Comedy",
    "Drama",
    "Horror",
    "Romance",
    "Sci-Fi",
    "Documentary",
    "Animation",
];

const GENRE_WORDS: [&[&str]; 8] = [
    &["explosion", "chase", "heist", "mercenary", "firefight", "stunt", "rescue", "commando", "pursuit", "showdown", "assassin", "convoy"],
    &["laugh", "prank", "sitcom", "quirky", "slapstick", "banter", "parody", "mishap", "goofy", "satire", "wedding", "roommate"],
    &["grief", "family", "redemption", "courtroom", "memoir", "struggle", "betrayal", "inheritance", "illness", "reconciliation", "poverty", "ambition"],
    &["haunted", "demon", "slasher", "curse", "zombie", "ritual", "nightmare", "possession", "creature", "cemetery", "scream", "asylum"],
    &["love", "kiss", "courtship", "heartbreak", "soulmate", "romance", "affair", "proposal", "longing", "serenade", "valentine", "sweetheart"],
    &["spaceship", "android", "alien", "galaxy", "cyborg", "wormhole", "robot", "colony", "laser", "dystopia", "starship", "clone"],
    &["interview", "archive", "footage", "investigation", "wildlife", "history", "journalist", "testimony", "expedition", "census", "climate", "biography"],
    &["cartoon", "animated", "talking", "puppet", "fairy", "toy", "magic", "dragon", "musical", "adventure", "princess", "kingdom"],
];

const FILLER: &[&str] = &[
    "film", "story", "director", "cast", "scene", "release", "studio", "character", "audience", "plot", "screen",
    "production", "script", "sequence", "critics", "premiere", "runtime", "narrative", "actor", "actress", "score",
    "setting", "city", "summer", "winter", "night", "journey", "friend", "stranger", "secret", "town", "years",
];

const TITLE_A: &[&str] = &[
    "Silent", "Crimson", "Broken", "Golden", "Last", "Hidden", "Electric", "Wild", "Distant", "Frozen", "Burning",
    "Lonely", "Midnight", "Velvet", "Iron", "Paper", "Glass", "Hollow", "Savage", "Gentle",
];
const TITLE_B: &[&str] = &[
    "Harbor", "Garden", "Empire", "River", "Mirror", "Signal", "Kingdom", "Summer", "Station", "Frontier", "Orchard",
    "Circus", "Lantern", "Voyage", "Letter", "Horizon", "Island", "Theory", "Carnival", "Machine",
];

const TITLE_PREFIX: &[&str] = &["Return to", "Escape from", "Beyond", "Tales of", "Legend of", "Secrets of"];

const AGES: [&str; 7] = ["1", "18", "25", "35", "45", "50", "56"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub min_interactions: usize,
    pub max_interactions: usize,
    /// Weight of affinity in the exposure distribution.
    pub exposure_bias: f64,
    /// Standard deviation of the rating noise.
    pub rating_noise: f64,
    /// Probability that an item's listed genre is its true primary genre.
    pub genre_label_accuracy: f64,
    pub words_per_doc: usize,
    /// Fraction of items without a document.
    pub undocumented: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 2000,
            items: 500,
            min_interactions: 15,
            max_interactions: 35,
            exposure_bias: 1.5,
            rating_noise: 0.6,
            genre_label_accuracy: 0.5,
            words_per_doc: 28,
            undocumented: 0.04,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
struct Item {
    mix: [f64; 8],
    quality: f64,
    title: String,
    year: u32,
    listed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub ratings: String,
    pub users: String,
    pub movies: String,
    pub corpus: String,
}

impl SynthDataset {
    /// Writes `ratings.dat`, `users.dat`, `movies.dat` and `corpus.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        write_atomic(&dir.join("ratings.dat"), self.ratings.as_bytes())?;
        write_atomic(&dir.join("users.dat"), self.users.as_bytes())?;
        write_atomic(&dir.join("movies.dat"), self.movies.as_bytes())?;
        write_atomic(&dir.join("corpus.jsonl"), self.corpus.as_bytes())?;
        Ok(())
    }
}

fn make_items(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Item> {
    let mut used = std::collections::HashSet::new();
    (0..cfg.items)
        .map(|_| {
            let primary = rng.gen_range(0..8);
            let mut secondary = rng.gen_range(0..7);
            if secondary >= primary {
                secondary += 1;
            }
            let mut mix = [0.0; 8];
            mix[primary] = 1.0;
            mix[secondary] = rng.gen_range(0.2..0.6);
            let listed_primary = if rng.gen::<f64>() < cfg.genre_label_accuracy {
                primary
            } else {
                rng.gen_range(0..8)
            };
            let mut listed = vec![listed_primary];
            if rng.gen::<f64>() < 0.3 && listed_primary != secondary {
                listed.push(secondary);
            }
            let mut title = format!(
                "The {} {}",
                TITLE_A.choose(rng).expect("non-empty"),
                TITLE_B.choose(rng).expect("non-empty")
            );
            // a prefix keeps duplicates apart; a trailing number would read like a year to the linker
            let base = title.clone();
            let mut n = 0;
            while !used.insert(title.clone()) {
                let prefix = TITLE_PREFIX[n % TITLE_PREFIX.len()];
                title = match n / TITLE_PREFIX.len() {
                    0 => format!("{prefix} {base}"),
                    r => format!("{prefix} {base} Part {}", r + 1),
                };
                n += 1;
            }
            Item {
                mix,
                quality: rng.gen_range(-0.4..0.4),
                title,
                year: rng.gen_range(1960..2000),
                listed,
            }
        })
        .collect()
}

fn document(item: &Item, words: usize, rng: &mut ChaCha8Rng) -> String {
    let total: f64 = item.mix.iter().sum();
    let mut out: Vec<&str> = Vec::with_capacity(words);
    for _ in 0..words {
        if rng.gen::<f64>() < 0.35 {
            out.push(FILLER.choose(rng).expect("non-empty"));
            continue;
        }
        let mut x = rng.gen::<f64>() * total;
        let mut g = 0;
        while g < 7 && x >= item.mix[g] {
            x -= item.mix[g];
            g += 1;
        }
        out.push(GENRE_WORDS[g].choose(rng).expect("non-empty"));
    }
    let mut text = format!("{} is a {} film.", item.title, item.year);
    for chunk in out.chunks(7) {
        text.push(' ');
        text.push_str(&chunk.join(" "));
        text.push('.');
    }
    text
}

/// Builds the dataset deterministically from `cfg.seed`.
/// Pipeline settings for a dataset written by [`SynthDataset::write`], with paths relative to
/// that directory.
pub fn pipeline_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.dataset = ".".into();
    cfg.paths.corpus = "corpus.jsonl".into();
    cfg.paths.workdir = "work".into();
    // user knowledge concatenates up to ten documents; keep all of it
    cfg.knowledge.llm.stub_max_chars = 2400;
    // desk-scale schedule: far fewer steps than the full-size defaults assume
    cfg.train.learning_rate = 1e-2;
    cfg.train.epochs = 10;
    cfg.train.patience = 2;
    // summed contrastive terms swamp the recommendation loss at the default weights
    cfg.train.reduction = InfoNceReduction::Mean;
    cfg
}

pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    assert!(cfg.users >= 3 && cfg.items >= 2, "synthetic dataset too small");
    assert!(cfg.min_interactions >= 1 && cfg.min_interactions <= cfg.max_interactions);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let items = make_items(cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.rating_noise.max(1e-12)).expect("valid deviation");

    let mut movies = String::new();
    for (k, it) in items.iter().enumerate() {
        let genres: Vec<&str> = it.listed.iter().map(|&g| GENRES[g]).collect();
        let _ = writeln!(movies, "{}::{} ({})::{}", k + 1, it.title, it.year, genres.join("|"));
    }

    let mut corpus = String::new();
    for (k, it) in items.iter().enumerate() {
        let text = document(it, cfg.words_per_doc, &mut rng);
        if rng.gen::<f64>() < cfg.undocumented {
            continue;
        }
        let row = serde_json::json!({"doc_id": format!("d{:05}", k + 1), "title": it.title, "text": text});
        corpus.push_str(&row.to_string());
        corpus.push('\n');
    }

    let mut users = String::new();
    let mut ratings = String::new();
    let mut t0: i64 = 978_300_000;
    for u in 1..=cfg.users {
        let like = rng.gen_range(0..8);
        let mut like2 = rng.gen_range(0..7);
        if like2 >= like {
            like2 += 1;
        }
        let dislike = loop {
            let d = rng.gen_range(0..8);
            if d != like && d != like2 {
                break d;
            }
        };
        let mut pref = [0.0; 8];
        pref[like] = 1.0;
        pref[like2] = 0.6;
        pref[dislike] = -0.8;

        // demographics carry a weak hint of the main taste
        let gender = if (like % 2 == 0) ^ (rng.gen::<f64>() < 0.3) { "M" } else { "F" };
        let age = AGES[(like + rng.gen_range(0..3)) % AGES.len()];
        let occupation = rng.gen_range(0..21);
        let _ = writeln!(users, "{u}::{gender}::{age}::{occupation}::{:05}", rng.gen_range(10000..99999));

        let affinity: Vec<f64> = items
            .iter()
            .map(|it| it.mix.iter().zip(&pref).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let weights: Vec<f64> = affinity.iter().map(|a| (cfg.exposure_bias * a).exp()).collect();
        let n = rng.gen_range(cfg.min_interactions..=cfg.max_interactions).min(items.len());
        let chosen = rand::seq::index::sample_weighted(&mut rng, items.len(), |k| weights[k], n)
            .expect("positive weights");
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.shuffle(&mut rng);
        for (step, k) in chosen.into_iter().enumerate() {
            let score = 1.6 * affinity[k] + items[k].quality + noise.sample(&mut rng);
            let rating = (2.4 + 1.4 * score).round().clamp(1.0, 5.0) as u8;
            let _ = writeln!(ratings, "{u}::{}::{rating}::{}", k + 1, t0 + step as i64 * 60);
        }
        t0 += 86_400;
    }

    SynthDataset {
        ratings,
        users,
        movies,
        corpus,
    }
}
