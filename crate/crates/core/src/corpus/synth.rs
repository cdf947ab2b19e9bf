//! Synthetic corpus generator. Each user gets a latent preference vector
//! drawn from a symmetric Dirichlet over genres; activities then sample a
//! genre from that vector and an item uniformly from the genre's catalog
//! slice, so a small `dirichlet_alpha` yields sharply genre-loyal users.
//! Ratings follow the latent preference: `clamp(round(1 + 4*p[genre] +
//! noise), 1, 5)` with gaussian noise (sd 0.5).

use super::{ActivityRecord, CatalogEntry, CorpusError, UserLog};
use crate::rng::{stream, substream};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_genres: usize,
    pub catalog_size: usize,
    pub activities_per_user: usize,
    /// Symmetric Dirichlet concentration; small values make users loyal
    /// to one genre.
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 500,
            num_genres: 8,
            catalog_size: 96,
            activities_per_user: 60,
            dirichlet_alpha: 0.05,
            seed: 17,
        }
    }
}

const GENRE_WORDS: [&str; 16] = [
    "action", "comedy", "drama", "horror", "romance", "thriller", "mystery", "western", "fantasy",
    "crime", "history", "musical", "war", "animation", "documentary", "adventure",
];

// Single-token item names; the tokenizer must keep each name to one token
// so catalog items never share vocabulary with each other or the genres.
const NAME_WORDS: [&str; 161] = [
    "falcon", "otter", "maple", "ember", "quartz", "harbor", "willow", "comet", "badger", "tundra",
    "saffron", "pebble", "lynx", "meadow", "cobalt", "drift", "heron", "juniper", "kestrel",
    "lagoon", "marble", "nectar", "onyx", "prairie", "quiver", "raven", "sable", "timber",
    "umber", "vortex", "walnut", "zephyr", "anchor", "basalt", "cinder", "dune", "eagle", "fjord",
    "garnet", "hazel", "icicle", "jasper", "krill", "lantern", "mesa", "nimbus", "orchid",
    "pelican", "quill", "reef", "sparrow", "thistle", "urchin", "valley", "wren", "yarrow",
    "zinnia", "aspen", "birch", "cedar", "delta", "elder", "fern", "grove", "heath", "iris",
    "jade", "kelp", "larch", "moss", "nettle", "oak", "pine", "quince", "rowan", "sage", "teak",
    "ulmus", "vine", "wheat", "yew", "zest", "amber", "brook", "cliff", "dell", "eddy", "flint",
    "glen", "hollow", "inlet", "knoll", "ledge", "marsh", "notch", "oxbow", "pond", "quarry",
    "ridge", "shoal", "tarn", "upland", "vale", "wharf", "yonder", "zenith", "acorn", "bramble",
    "clover", "dandelion", "elm", "foxglove", "gorse", "hawthorn", "ivy", "jonquil", "kudzu",
    "lilac", "mallow", "nightshade", "oleander", "poppy", "rose", "sorrel", "tulip", "umbel",
    "violet", "wisteria", "yucca", "zinger", "arrow", "bell", "crown", "dagger", "emblem",
    "feather", "gauge", "hammer", "ingot", "jewel", "kite", "ladder", "mirror", "needle", "organ",
    "plume", "ribbon", "saddle", "trumpet", "urn", "vessel", "wheel", "yoke", "zipper", "beacon",
    "candle", "drum", "easel", "flute", "goblet", "helm",
];

const AGE_RANGES: [&str; 7] = ["Under 18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+"];
const GENDERS: [&str; 2] = ["female", "male"];
const OCCUPATIONS: [&str; 6] =
    ["academic", "artist", "engineer", "farmer", "scientist", "writer"];

fn genre_name(i: usize) -> String {
    if i < GENRE_WORDS.len() {
        GENRE_WORDS[i].to_string()
    } else {
        format!("genre{}", i + 1)
    }
}

fn item_name(i: usize) -> String {
    if i < NAME_WORDS.len() {
        NAME_WORDS[i].to_string()
    } else {
        format!("{}{}", NAME_WORDS[i % NAME_WORDS.len()], i / NAME_WORDS.len() + 1)
    }
}

fn validate(cfg: &SynthConfig) -> Result<(), CorpusError> {
    if cfg.num_genres == 0 {
        return Err(CorpusError::InvalidConfig("num_genres must be positive".into()));
    }
    if cfg.catalog_size < 4 * cfg.num_genres {
        return Err(CorpusError::InvalidConfig(format!(
            "catalog_size {} is below 4 * num_genres = {}",
            cfg.catalog_size,
            4 * cfg.num_genres
        )));
    }
    if !(cfg.dirichlet_alpha > 0.0) {
        return Err(CorpusError::InvalidConfig("dirichlet_alpha must be positive".into()));
    }
    if cfg.num_users > 0 && cfg.activities_per_user < 2 {
        return Err(CorpusError::InvalidConfig("activities_per_user must be at least 2".into()));
    }
    Ok(())
}

/// Generates a corpus and its catalog. Byte-identical output for equal
/// configs: the catalog and every user draw from fixed seed substreams.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vec<UserLog>, Vec<CatalogEntry>), CorpusError> {
    let (logs, catalog, _) = synth_generate_with_latents(cfg)?;
    Ok((logs, catalog))
}

/// [`synth_generate`] plus each user's latent genre-preference vector,
/// for tests that compare derived labels against the generating state.
pub fn synth_generate_with_latents(
    cfg: &SynthConfig,
) -> Result<(Vec<UserLog>, Vec<CatalogEntry>, Vec<Vec<f64>>), CorpusError> {
    validate(cfg)?;

    // Items are laid out in contiguous per-genre slices; slice sizes
    // differ by at most one when num_genres does not divide catalog_size.
    let mut catalog = Vec::with_capacity(cfg.catalog_size);
    let mut slices: Vec<(usize, usize)> = Vec::with_capacity(cfg.num_genres);
    let base = cfg.catalog_size / cfg.num_genres;
    let extra = cfg.catalog_size % cfg.num_genres;
    let mut next = 0;
    for g in 0..cfg.num_genres {
        let len = base + usize::from(g < extra);
        slices.push((next, len));
        for i in 0..len {
            catalog.push(CatalogEntry { name: item_name(next + i), genre: genre_name(g) });
        }
        next += len;
    }

    let noise = Normal::new(0.0, 0.5).expect("valid normal");
    let mut logs = Vec::with_capacity(cfg.num_users);
    let mut latents = Vec::with_capacity(cfg.num_users);
    for u in 0..cfg.num_users {
        let mut rng = substream(cfg.seed, &[stream::SYNTH_USER, u as u64]);
        let prefs = sample_dirichlet(cfg.dirichlet_alpha, cfg.num_genres, &mut rng);

        let mut activities = Vec::with_capacity(cfg.activities_per_user);
        for i in 0..cfg.activities_per_user {
            let g = sample_categorical(&prefs, &mut rng);
            let (start, len) = slices[g];
            let item = &catalog[start + rng.gen_range(0..len)];
            let rating = (1.0 + 4.0 * prefs[g] + noise.sample(&mut rng)).round().clamp(1.0, 5.0);
            activities.push(ActivityRecord {
                name: item.name.clone(),
                rating: Some(rating),
                order_index: i as i64,
                attributes: BTreeMap::from([("genre".to_string(), vec![item.genre.clone()])]),
            });
        }

        let demographics = BTreeMap::from([
            ("age_range".to_string(), AGE_RANGES[rng.gen_range(0..AGE_RANGES.len())].to_string()),
            ("gender".to_string(), GENDERS[rng.gen_range(0..GENDERS.len())].to_string()),
            (
                "occupation".to_string(),
                OCCUPATIONS[rng.gen_range(0..OCCUPATIONS.len())].to_string(),
            ),
        ]);

        logs.push(UserLog { user_id: format!("u{u:05}"), activities, demographics });
        latents.push(prefs);
    }
    Ok((logs, catalog, latents))
}

/// Symmetric Dirichlet via normalized Gamma(alpha, 1) draws; handles the
/// single-genre case directly.
fn sample_dirichlet(alpha: f64, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let gamma = rand_distr::Gamma::new(alpha, 1.0).expect("valid gamma");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
