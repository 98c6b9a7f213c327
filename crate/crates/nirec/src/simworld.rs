//! Ground-truth simulated world. Oracle embeddings define every user's true
//! interest in every item and the social pull between connected users; the
//! feedback probability for an exposed pair mixes the pair's own interest
//! with the interference of the user's exposed neighbors. The module also
//! houses the propensity-based exposure sampler, Bernoulli feedback
//! generation, and the rejection sampler that picks steering targets.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbones::EmbeddingTable;
use crate::corpus::{influential_pairs, SocialGraph};
use crate::mat::dot;
use crate::rng::{mix, rng_from, unit_hash};
use crate::{sigmoid, Error, Result};

/// Interest is measured against the rating midpoint: embedding dot products
/// above 3 read as positive interest.
pub const INTEREST_OFFSET: f64 = 3.0;

/// Immutable ground truth: interest is `e*_u . e*_i - 3`, social pull is
/// `sigma(e*_u . e*_u')`, and feedback probability is `sigma(eta + beta * delta)`.
#[derive(Debug, Clone)]
pub struct SimOracle {
    emb: EmbeddingTable,
    beta: f64,
    graph: Arc<SocialGraph>,
}

impl SimOracle {
    pub fn new(emb: EmbeddingTable, beta: f64, graph: Arc<SocialGraph>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("interference strength beta must be finite and >= 0"));
        }
        if graph.n_users() != emb.n_users() {
            return Err(Error::invalid(format!(
                "graph covers {} users but embeddings cover {}",
                graph.n_users(),
                emb.n_users()
            )));
        }
        if !emb.all_finite() {
            return Err(Error::invalid("oracle embeddings contain non-finite values"));
        }
        Ok(SimOracle { emb, beta, graph })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn graph(&self) -> &Arc<SocialGraph> {
        &self.graph
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.emb
    }

    pub fn n_users(&self) -> usize {
        self.emb.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.emb.n_items()
    }

    /// True interest of user `u` in item `i`, centered at the rating midpoint.
    pub fn eta(&self, u: usize, i: usize) -> f64 {
        self.emb.score(u, i) - INTEREST_OFFSET
    }

    /// Social pull of user `v` on user `u`: sigma of the user-user dot.
    pub fn affinity(&self, u: usize, v: usize) -> f64 {
        sigmoid(dot(self.emb.users.row(u), self.emb.users.row(v)))
    }

    /// Interference on `(u, i)` from exposed neighbors, degree-normalized by
    /// `1/sqrt(|N_u|)`. Zero when `u` has no neighbors.
    pub fn delta(&self, u: usize, i: usize, exposure: &ExposureMatrix) -> f64 {
        let nbrs = self.graph.nbrs(u);
        if nbrs.is_empty() {
            return 0.0;
        }
        let sum: f64 = nbrs
            .iter()
            .filter(|&&v| exposure.contains(v, i))
            .map(|&v| self.affinity(u, v) * self.eta(v, i))
            .sum();
        sum / (nbrs.len() as f64).sqrt()
    }

    /// `delta` with the neighbor exposures given directly as a bit vector
    /// aligned to `graph.nbrs(u)`. This is the hook steering uses to ask
    /// "what if these neighbors were exposed".
    pub fn delta_bits(&self, u: usize, i: usize, bits: &[bool]) -> f64 {
        let nbrs = self.graph.nbrs(u);
        debug_assert_eq!(bits.len(), nbrs.len());
        if nbrs.is_empty() {
            return 0.0;
        }
        let sum: f64 = nbrs
            .iter()
            .zip(bits)
            .filter(|(_, &on)| on)
            .map(|(&v, _)| self.affinity(u, v) * self.eta(v, i))
            .sum();
        sum / (nbrs.len() as f64).sqrt()
    }

    /// Probability that user `u` gives positive feedback on item `i` under
    /// the given exposure state.
    pub fn outcome_prob(&self, u: usize, i: usize, exposure: &ExposureMatrix) -> f64 {
        sigmoid(self.eta(u, i) + self.beta * self.delta(u, i, exposure))
    }

    pub fn outcome_prob_bits(&self, u: usize, i: usize, bits: &[bool]) -> f64 {
        sigmoid(self.eta(u, i) + self.beta * self.delta_bits(u, i, bits))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExposureListing {
    n_users: usize,
    n_items: usize,
    pairs: Vec<(u32, u32)>,
}

impl From<ExposureMatrix> for ExposureListing {
    fn from(m: ExposureMatrix) -> Self {
        let pairs = m.sorted_pairs();
        ExposureListing { n_users: m.n_users, n_items: m.n_items, pairs }
    }
}

impl TryFrom<ExposureListing> for ExposureMatrix {
    type Error = Error;

    fn try_from(l: ExposureListing) -> Result<Self> {
        let mut m = ExposureMatrix::new(l.n_users, l.n_items);
        for (u, i) in l.pairs {
            m.insert(u, i)?;
        }
        Ok(m)
    }
}

/// Set of `(user, item)` pairs with exposure bit 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "ExposureListing", try_from = "ExposureListing")]
pub struct ExposureMatrix {
    n_users: usize,
    n_items: usize,
    pairs: HashSet<(u32, u32)>,
}

impl ExposureMatrix {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        ExposureMatrix { n_users, n_items, pairs: HashSet::new() }
    }

    pub fn insert(&mut self, u: u32, i: u32) -> Result<bool> {
        if u as usize >= self.n_users || i as usize >= self.n_items {
            return Err(Error::invalid(format!("exposure pair ({u}, {i}) out of range")));
        }
        Ok(self.pairs.insert((u, i)))
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.pairs.contains(&(u as u32, i as u32))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn pair_set(&self) -> &HashSet<(u32, u32)> {
        &self.pairs
    }

    /// Pairs in ascending `(user, item)` order; the canonical iteration order
    /// for anything that feeds an artifact or an rng stream.
    pub fn sorted_pairs(&self) -> Vec<(u32, u32)> {
        let mut v: Vec<(u32, u32)> = self.pairs.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Exposure bits of `u`'s neighbors for item `i`, aligned to `graph.nbrs(u)`.
    pub fn neighbor_bits(&self, graph: &SocialGraph, u: usize, i: usize) -> Vec<bool> {
        graph.nbrs(u).iter().map(|&v| self.contains(v, i)).collect()
    }
}

/// Mixture weights and matching targets for the exposure sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub target_d_size: usize,
    /// When set, alpha3 is re-bisected across whole-sampler restarts until
    /// the influential-pair count lands within 5% of this.
    pub target_influential: Option<u64>,
    pub rounds: usize,
    /// Exposed-neighbor count at which the social propensity term saturates.
    pub saturation: f64,
    /// Lower bound applied to every pair's mixed propensity so that
    /// social-only configurations can seed their first exposures.
    pub floor: f64,
}

impl PropensityParams {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64, target_d_size: usize) -> Self {
        PropensityParams {
            alpha1,
            alpha2,
            alpha3,
            target_d_size,
            target_influential: None,
            rounds: 10,
            saturation: 5.0,
            floor: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = [self.alpha1, self.alpha2, self.alpha3];
        if a.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(Error::invalid("propensity weights must lie in [0, 1]"));
        }
        if ((self.alpha1 + self.alpha2 + self.alpha3) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("propensity weights must sum to 1"));
        }
        if self.rounds == 0 || self.target_d_size == 0 {
            return Err(Error::invalid("rounds and target_d_size must be positive"));
        }
        if !(self.saturation > 0.0) || self.floor < 0.0 || self.floor >= 1.0 {
            return Err(Error::invalid("saturation must be > 0 and floor in [0, 1)"));
        }
        Ok(())
    }
}

/// What the sampler actually achieved, kept alongside the exposure artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExposureDiagnostics {
    pub achieved_d: usize,
    pub target_d: usize,
    pub d_matched: bool,
    pub influential: u64,
    pub target_influential: Option<u64>,
    pub influential_matched: bool,
    pub rounds: usize,
    pub restarts: u32,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

const D_TOLERANCE: f64 = 0.01;
const INFLUENTIAL_TOLERANCE: f64 = 0.05;
const MAX_ALPHA3_RESTARTS: u32 = 16;

fn within(achieved: f64, target: f64, tol: f64) -> bool {
    (achieved - target).abs() <= tol * target
}

/// One full multi-round sampling pass at a fixed alpha mixture.
fn sample_rounds(
    oracle: &SimOracle,
    params: &PropensityParams,
    alphas: (f64, f64, f64),
    seed: u64,
    restart: u32,
) -> ExposureMatrix {
    let (a1, a2, a3) = alphas;
    let (n, m) = (oracle.n_users(), oracle.n_items());
    let n_pairs = n * m;
    let target = params.target_d_size.min(n_pairs);

    // Interest and per-pair-uniform terms never change across rounds.
    let mut p1 = vec![0.0f64; n_pairs];
    let mut p2 = vec![0.0f64; n_pairs];
    for u in 0..n {
        for i in 0..m {
            let idx = u * m + i;
            p1[idx] = sigmoid(oracle.eta(u, i));
            p2[idx] = unit_hash(seed, u as u64, i as u64, 0x9a17);
        }
    }

    let mut exposed = vec![false; n_pairs];
    let mut exposed_count = 0usize;
    let mut items_by_user: Vec<Vec<u32>> = vec![Vec::new(); n];

    for round in 1..=params.rounds {
        // Ramp the cumulative quota linearly so the social term sees earlier
        // rounds' exposures; the last round lands on the full target.
        let quota = target * round / params.rounds;
        let needed = quota.saturating_sub(exposed_count);
        if needed == 0 {
            continue;
        }

        // Social term: exposed-neighbor count per pair, then saturate.
        let mut nbr_count = vec![0u32; n_pairs];
        if a3 > 0.0 {
            for u in 0..n {
                for &v in oracle.graph.nbrs(u) {
                    for &i in &items_by_user[v] {
                        nbr_count[u * m + i as usize] += 1;
                    }
                }
            }
        }

        // Acceptance ratio v/q per still-unexposed pair; a pair joins when
        // v <= s*q, so the round reduces to choosing the scale s.
        let mut cand: Vec<(f64, u32)> = Vec::with_capacity(n_pairs - exposed_count);
        for idx in 0..n_pairs {
            if exposed[idx] {
                continue;
            }
            let p3 = ((nbr_count[idx] as f64) / params.saturation).min(1.0);
            let q = (a1 * p1[idx] + a2 * p2[idx] + a3 * p3).max(params.floor);
            let v = unit_hash(seed, idx as u64, round as u64, 0x00d0 ^ u64::from(restart) << 16);
            let ratio = if q > 0.0 { v / q } else { f64::INFINITY };
            cand.push((ratio, idx as u32));
        }
        cand.sort_unstable_by(|a, b| a.partial_cmp(b).expect("ratios have a total order"));

        // Bisect the global scale until the acceptance count hits the quota.
        let count_at = |s: f64| cand.partition_point(|&(r, _)| r <= s);
        let reachable = cand.partition_point(|&(r, _)| r.is_finite());
        let take = if needed >= reachable {
            reachable
        } else {
            let mut hi = 1.0f64;
            while count_at(hi) < needed && hi < 1e18 {
                hi *= 2.0;
            }
            let mut lo = 0.0f64;
            for _ in 0..96 {
                let mid = 0.5 * (lo + hi);
                if count_at(mid) >= needed {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            count_at(hi)
        };

        for &(_, idx) in &cand[..take] {
            let idx = idx as usize;
            exposed[idx] = true;
            exposed_count += 1;
            items_by_user[idx / m].push((idx % m) as u32);
        }
    }

    let mut out = ExposureMatrix::new(n, m);
    for idx in 0..n_pairs {
        if exposed[idx] {
            out.pairs.insert(((idx / m) as u32, (idx % m) as u32));
        }
    }
    out
}

/// Draw an exposure matrix whose size converges to `target_d_size` (within
/// 1%) and, when `target_influential` is set, whose influential-pair count
/// converges to it (within 5%) by re-running with bisected alpha3. Failure
/// to match is reported through the diagnostics, not an error.
pub fn sample_exposure(
    oracle: &SimOracle,
    params: &PropensityParams,
    seed: u64,
) -> Result<(ExposureMatrix, ExposureDiagnostics)> {
    params.validate()?;
    let n_pairs = oracle.n_users() * oracle.n_items();
    if params.target_d_size > n_pairs {
        return Err(Error::invalid(format!(
            "target_d_size {} exceeds the {} available pairs",
            params.target_d_size, n_pairs
        )));
    }

    // alpha1:alpha2 keep their ratio as alpha3 moves; an all-social start
    // splits the freed mass evenly.
    let base = params.alpha1 + params.alpha2;
    let (w1, w2) = if base > 1e-12 { (params.alpha1 / base, params.alpha2 / base) } else { (0.5, 0.5) };
    let mixture = |a3: f64| ((1.0 - a3) * w1, (1.0 - a3) * w2, a3);

    let run = |a3: f64, restart: u32| -> (ExposureMatrix, u64, (f64, f64, f64)) {
        let alphas = mixture(a3);
        let exp = sample_rounds(oracle, params, alphas, seed, restart);
        let inf = influential_pairs(&oracle.graph, &exp.pairs);
        (exp, inf, alphas)
    };

    let mut restarts = 0u32;
    let (mut best, mut best_inf, mut best_alphas) = run(params.alpha3, restarts);

    if let Some(target_inf) = params.target_influential {
        let tgt = target_inf as f64;
        if !within(best_inf as f64, tgt, INFLUENTIAL_TOLERANCE) {
            // The influential count grows with alpha3; bisect it.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            if best_inf as f64 > tgt {
                hi = params.alpha3;
            } else {
                lo = params.alpha3;
            }
            let mut best_gap = (best_inf as f64 - tgt).abs();
            while restarts < MAX_ALPHA3_RESTARTS {
                restarts += 1;
                let a3 = 0.5 * (lo + hi);
                let (exp, inf, alphas) = run(a3, restarts);
                let gap = (inf as f64 - tgt).abs();
                if gap < best_gap {
                    best_gap = gap;
                    best = exp;
                    best_inf = inf;
                    best_alphas = alphas;
                }
                if within(inf as f64, tgt, INFLUENTIAL_TOLERANCE) {
                    break;
                }
                if (inf as f64) > tgt {
                    hi = a3;
                } else {
                    lo = a3;
                }
            }
        }
    }

    let diag = ExposureDiagnostics {
        achieved_d: best.len(),
        target_d: params.target_d_size,
        d_matched: within(best.len() as f64, params.target_d_size as f64, D_TOLERANCE),
        influential: best_inf,
        target_influential: params.target_influential,
        influential_matched: params
            .target_influential
            .map(|t| within(best_inf as f64, t as f64, INFLUENTIAL_TOLERANCE))
            .unwrap_or(true),
        rounds: params.rounds,
        restarts,
        alpha1: best_alphas.0,
        alpha2: best_alphas.1,
        alpha3: best_alphas.2,
    };
    Ok((best, diag))
}

/// One observed feedback event plus the generator probability behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSyntheticRecord {
    pub user: u32,
    pub item: u32,
    pub y: bool,
    pub truth_prob: f64,
}

/// Bernoulli feedback for every exposed pair, drawn from one seeded stream
/// over pairs in ascending order (the draw order is part of the contract).
pub fn generate_feedback(
    oracle: &SimOracle,
    exposure: &ExposureMatrix,
    seed: u64,
) -> Result<Vec<SemiSyntheticRecord>> {
    if exposure.is_empty() {
        return Err(Error::invalid("cannot generate feedback from an empty exposure matrix"));
    }
    let mut rng = rng_from(mix(seed, 0xfeed));
    let mut out = Vec::with_capacity(exposure.len());
    for (u, i) in exposure.sorted_pairs() {
        let p = oracle.outcome_prob(u as usize, i as usize, exposure);
        let y = rng.random::<f64>() < p;
        out.push(SemiSyntheticRecord { user: u, item: i, y, truth_prob: p });
    }
    Ok(out)
}

/// A steering instance: one target item, the users to steer toward it, and
/// the neighbor units whose exposure the optimizer controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target_item: u32,
    pub target_users: Vec<u32>,
    pub neighbor_users: Vec<u32>,
    pub threshold: f64,
}

impl TargetSpec {
    /// Re-check the selection invariants against the world that produced it.
    pub fn validate_against(&self, oracle: &SimOracle) -> Result<()> {
        let i = self.target_item as usize;
        let members: HashSet<u32> = self.target_users.iter().copied().collect();
        for &u in &self.target_users {
            let u = u as usize;
            if oracle.eta(u, i) > self.threshold {
                return Err(Error::invalid(format!("target user {u} exceeds the interest threshold")));
            }
            if !oracle.graph.nbrs(u).iter().any(|&v| oracle.eta(v, i) > 0.0) {
                return Err(Error::invalid(format!("target user {u} has no interested neighbor")));
            }
        }
        for &v in &self.neighbor_users {
            if members.contains(&v) {
                return Err(Error::invalid("neighbor list overlaps the target group"));
            }
        }
        Ok(())
    }
}

/// Sample steering targets: items uniformly without replacement, rejecting
/// any whose qualified-user count is below `group_size`; a user qualifies
/// when their own interest is at most `t` and some neighbor's interest is
/// positive. Errors only when no item at all is accepted.
pub fn select_targets(
    oracle: &SimOracle,
    group_size: usize,
    t: f64,
    n_items_wanted: usize,
    seed: u64,
) -> Result<Vec<TargetSpec>> {
    if group_size == 0 || n_items_wanted == 0 {
        return Err(Error::invalid("group_size and n_items_wanted must be positive"));
    }
    if !t.is_finite() {
        return Err(Error::invalid("interest threshold t must be finite"));
    }
    let (n, m) = (oracle.n_users(), oracle.n_items());
    let mut rng = rng_from(mix(seed, 0x7a96));
    let mut item_order: Vec<usize> = (0..m).collect();
    item_order.shuffle(&mut rng);

    // A user with no interested neighbor can never qualify for any item of
    // positive interest to nobody; the neighbor scan is per item, so just
    // cache neighbor lists.
    let mut specs = Vec::new();
    let mut rejected = 0usize;
    for &item in &item_order {
        if specs.len() == n_items_wanted {
            break;
        }
        let mut qualified: Vec<u32> = Vec::new();
        for u in 0..n {
            if oracle.eta(u, item) <= t && oracle.graph.nbrs(u).iter().any(|&v| oracle.eta(v, item) > 0.0) {
                qualified.push(u as u32);
            }
        }
        if qualified.len() < group_size {
            rejected += 1;
            continue;
        }
        qualified.shuffle(&mut rng);
        let mut target_users: Vec<u32> = qualified[..group_size].to_vec();
        target_users.sort_unstable();
        let members: HashSet<u32> = target_users.iter().copied().collect();
        let mut neighbor_users: Vec<u32> = target_users
            .iter()
            .flat_map(|&u| oracle.graph.nbrs(u as usize).iter().map(|&v| v as u32))
            .filter(|v| !members.contains(v))
            .collect();
        neighbor_users.sort_unstable();
        neighbor_users.dedup();
        specs.push(TargetSpec { target_item: item as u32, target_users, neighbor_users, threshold: t });
    }
    if specs.is_empty() {
        return Err(Error::Convergence(format!(
            "no target item has {group_size} qualified users (rejected all {rejected} items)"
        )));
    }
    Ok(specs)
}
