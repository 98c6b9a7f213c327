//! Seeded demo-corpus generator: raw ratings and trust files shaped like
//! the public review datasets (sparse non-contiguous ids, integer ratings,
//! directed trust), small enough to drive the whole pipeline in seconds.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{mix, rng_from};
use crate::{sigmoid, Error, Result};

/// Shape of the generated demo corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Rank of the planted taste factors behind the integer ratings.
    pub dim: usize,
    /// Chance that a user rates any given item on their own.
    pub density: f64,
    /// Mean directed trust out-degree.
    pub mean_degree: f64,
    /// Chance per trust edge that the truster co-rates one of the trusted
    /// user's items, so social links carry rating signal.
    pub co_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n_users: 400, n_items: 240, dim: 3, density: 0.05, mean_degree: 6.0, co_rate: 0.5, seed: 17 }
    }
}

/// Generated raw files plus their headline counts.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Comma-separated `user,item,rating` lines.
    pub ratings: String,
    /// Whitespace-separated `truster trustee` lines.
    pub trust: String,
    pub n_ratings: usize,
    pub n_edges: usize,
}

/// Raw ids are strictly increasing with irregular gaps, so the densifier
/// downstream has real work to do.
fn raw_user(u: usize) -> usize {
    10 + 7 * u + u % 3
}

fn raw_item(i: usize) -> usize {
    5 + 9 * i + i % 4
}

/// Quantize a planted affinity into a 1..=5 star rating.
fn star(affinity: f64) -> u8 {
    1 + (sigmoid(1.2 * affinity) * 4.999).floor() as u8
}

/// Build the demo corpus: low-rank planted ratings, random directed trust,
/// and co-rating along trust edges. Same spec, same bytes.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    if spec.n_users < 2 || spec.n_items < 2 || spec.dim == 0 {
        return Err(Error::invalid("demo corpus needs at least 2 users, 2 items, and rank 1"));
    }
    if !(0.0..=1.0).contains(&spec.density) || !(0.0..=1.0).contains(&spec.co_rate) {
        return Err(Error::invalid("density and co_rate are probabilities"));
    }
    if spec.mean_degree < 0.0 || spec.mean_degree >= spec.n_users as f64 {
        return Err(Error::invalid("mean_degree must be in [0, n_users)"));
    }
    let mut rng = rng_from(mix(spec.seed, 0x5f2d));
    let scale = 1.0 / (spec.dim as f64).sqrt();
    let factor = |rng: &mut crate::rng::SeededRng, n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..spec.dim).map(|_| rng.random_range(-1.5..1.5) * scale).collect()).collect()
    };
    let users = factor(&mut rng, spec.n_users);
    let items = factor(&mut rng, spec.n_items);

    // Organic ratings: an independent coin per (user, item).
    let mut rated: Vec<Vec<usize>> = vec![Vec::new(); spec.n_users];
    for (u, row) in rated.iter_mut().enumerate() {
        for i in 0..spec.n_items {
            if rng.random::<f64>() < spec.density {
                row.push(i);
            }
        }
        // Nobody leaves empty-handed; isolated users carry no signal.
        if row.is_empty() {
            row.push(rng.random_range(0..spec.n_items));
        }
        let _ = u;
    }

    // Directed trust: per-user out-degree uniform in [0, 2 * mean].
    let max_deg = (2.0 * spec.mean_degree).round() as usize;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut pool: Vec<usize> = (0..spec.n_users).collect();
    for u in 0..spec.n_users {
        let deg = rng.random_range(0..=max_deg).min(spec.n_users - 1);
        pool.shuffle(&mut rng);
        edges.extend(pool.iter().filter(|&&v| v != u).take(deg).map(|&v| (u, v)));
    }
    edges.sort_unstable();
    edges.dedup();

    // Co-rating: trusters sometimes adopt an item from a trusted user.
    for &(a, b) in &edges.clone() {
        if rng.random::<f64>() < spec.co_rate && !rated[b].is_empty() {
            let pick = rated[b][rng.random_range(0..rated[b].len())];
            rated[a].push(pick);
        }
    }

    let mut ratings = String::new();
    let mut n_ratings = 0;
    for (u, row) in rated.iter_mut().enumerate() {
        row.sort_unstable();
        row.dedup();
        for &i in row.iter() {
            let affinity: f64 = users[u].iter().zip(&items[i]).map(|(a, b)| a * b).sum::<f64>()
                + rng.random_range(-0.3..0.3);
            ratings.push_str(&format!("{},{},{}\n", raw_user(u), raw_item(i), star(affinity)));
            n_ratings += 1;
        }
    }
    let mut trust = String::new();
    for &(a, b) in &edges {
        trust.push_str(&format!("{} {}\n", raw_user(a), raw_user(b)));
    }
    Ok(SynthOutput { ratings, trust, n_ratings, n_edges: edges.len() })
}
