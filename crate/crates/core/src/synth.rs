//! Small seeded synthetic datasets for tests, demos and the toy example.
//!
//! Items belong to genres whose titles share vocabulary; every user has a
//! favourite genre that most of their interactions come from, so history
//! overlap is a meaningful (if weak) signal.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::catalog::{
    build_sequences, leave_one_out_split, Catalog, InteractionRecord, ItemRecord, LeaveOneOutSplit,
    UserSequence, DEFAULT_MAX_SEQUENCE_LEN,
};
use crate::digest::rng_for;

struct Genre {
    name: &'static str,
    platform: &'static str,
    words: [&'static str; 4],
    nouns: [&'static str; 3],
}

const GENRES: [Genre; 8] = [
    Genre {
        name: "Racing",
        platform: "PlayStation 4",
        words: ["Turbo", "Nitro", "Drift", "Asphalt"],
        nouns: ["Rally", "Circuit", "Speedway"],
    },
    Genre {
        name: "Shooter",
        platform: "Xbox One",
        words: ["Tactical", "Siege", "Orbital", "Ghost"],
        nouns: ["Warfare", "Strike", "Squadron"],
    },
    Genre {
        name: "Role-Playing",
        platform: "PC",
        words: ["Elder", "Shadow", "Crystal", "Ancient"],
        nouns: ["Chronicles", "Legends", "Saga"],
    },
    Genre {
        name: "Puzzle",
        platform: "Nintendo Switch",
        words: ["Tiny", "Clever", "Color", "Pixel"],
        nouns: ["Blocks", "Riddles", "Tiles"],
    },
    Genre {
        name: "Sports",
        platform: "PlayStation 4",
        words: ["Pro", "League", "Champion", "Stadium"],
        nouns: ["Soccer", "Hoops", "Tennis"],
    },
    Genre {
        name: "Horror",
        platform: "PC",
        words: ["Silent", "Haunted", "Dead", "Midnight"],
        nouns: ["Manor", "Asylum", "Outbreak"],
    },
    Genre {
        name: "Platformer",
        platform: "Nintendo Switch",
        words: ["Super", "Jumping", "Bouncy", "Star"],
        nouns: ["Adventure", "Quest", "Journey"],
    },
    Genre {
        name: "Strategy",
        platform: "PC",
        words: ["Empire", "Total", "Grand", "Iron"],
        nouns: ["Conquest", "Tactics", "Dominion"],
    },
];

const OPENERS: [&str; 5] = [
    "We wanted a {genre} game for family nights and this one fits.",
    "I was looking for a {genre} game on {platform} with plenty of content.",
    "Our kids asked for something like this and we love it.",
    "Great {genre} title, the controls feel tight on {platform}.",
    "I needed a gift for my brother who plays {genre} games.",
];

const CLOSERS: [&str; 4] = [
    "Would buy again.",
    "The story is a bit short but worth it.",
    "Arrived quickly and works fine.",
    "Five stars.",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub users: usize,
    /// Items per genre, at most 48.
    pub items_per_genre: usize,
    pub events_per_user: usize,
    /// Share of a user's events drawn from their favourite genre.
    pub loyalty: f64,
    pub review_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            users: 60,
            items_per_genre: 12,
            events_per_user: 8,
            loyalty: 0.8,
            review_rate: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub catalog: Catalog,
    pub sequences: Vec<UserSequence>,
    pub split: LeaveOneOutSplit,
    /// Favourite genre per user.
    pub favourites: BTreeMap<String, String>,
}

fn items(config: &SynthConfig) -> Vec<(usize, ItemRecord)> {
    let mut out = Vec::new();
    for (g, genre) in GENRES.iter().enumerate() {
        let mut titles = Vec::new();
        for w in genre.words {
            for n in genre.nouns {
                titles.push(format!("{w} {n}"));
            }
        }
        for k in 0..config.items_per_genre.min(48) {
            let base = &titles[k % titles.len()];
            let title = match k / titles.len() {
                0 => base.clone(),
                r => format!("{base} {}", r + 1),
            };
            let id = format!("g{g}i{k:02}");
            out.push((
                g,
                ItemRecord::new(id, title, &["Video Games", genre.platform, genre.name]),
            ));
        }
    }
    out
}

fn review(rng: &mut impl Rng, genre: &Genre) -> String {
    let opener = OPENERS[rng.gen_range(0..OPENERS.len())]
        .replace("{genre}", &genre.name.to_lowercase())
        .replace("{platform}", genre.platform);
    format!("{opener} {}", CLOSERS[rng.gen_range(0..CLOSERS.len())])
}

/// Generate a catalog, its sequences and leave-one-out split.
pub fn synthetic_dataset(config: &SynthConfig) -> SynthData {
    let items = items(config);
    let mut by_genre: Vec<Vec<usize>> = vec![Vec::new(); GENRES.len()];
    for (idx, (g, _)) in items.iter().enumerate() {
        by_genre[*g].push(idx);
    }
    let events = config.events_per_user.min(items.len());
    let mut interactions = Vec::new();
    let mut favourites = BTreeMap::new();
    for u in 0..config.users {
        let user = format!("u{u:03}");
        let mut rng = rng_for(config.seed, &["synth-user", &user]);
        let fav = rng.gen_range(0..GENRES.len());
        favourites.insert(user.clone(), GENRES[fav].name.to_string());
        let mut seen = vec![false; items.len()];
        let mut ts = 1_600_000_000 + rng.gen_range(0..86_400i64);
        for _ in 0..events {
            let pool: Vec<usize> = if rng.gen_bool(config.loyalty) {
                by_genre[fav].iter().copied().filter(|&i| !seen[i]).collect()
            } else {
                Vec::new()
            };
            let pool = if pool.is_empty() {
                (0..items.len()).filter(|&i| !seen[i]).collect()
            } else {
                pool
            };
            let &pick = pool.choose(&mut rng).expect("events capped by item count");
            seen[pick] = true;
            ts += rng.gen_range(3_600..30 * 86_400i64);
            let (g, item) = &items[pick];
            let text = rng
                .gen_bool(config.review_rate)
                .then(|| review(&mut rng, &GENRES[*g]));
            interactions.push(InteractionRecord {
                user_id: user.clone(),
                item_id: item.item_id.clone(),
                timestamp: ts,
                rating: Some(rng.gen_range(3..=5) as f64),
                review_text: text,
            });
        }
    }
    let catalog = Catalog {
        items: items.into_iter().map(|(_, i)| (i.item_id.clone(), i)).collect(),
        interactions,
        provenance: format!("synthetic:seed={}", config.seed),
    };
    let sequences = build_sequences(&catalog, DEFAULT_MAX_SEQUENCE_LEN);
    let split = leave_one_out_split(&sequences);
    SynthData {
        catalog,
        sequences,
        split,
        favourites,
    }
}

/// Write the catalog as the raw line-delimited files `ingest` reads.
pub fn write_raw<I: std::io::Write, M: std::io::Write>(
    catalog: &Catalog,
    interactions: &mut I,
    items: &mut M,
) -> std::io::Result<()> {
    for item in catalog.items.values() {
        serde_json::to_writer(&mut *items, item)?;
        items.write_all(b"\n")?;
    }
    for row in &catalog.interactions {
        serde_json::to_writer(&mut *interactions, row)?;
        interactions.write_all(b"\n")?;
    }
    Ok(())
}
