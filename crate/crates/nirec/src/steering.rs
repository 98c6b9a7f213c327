//! Post-learning exposure optimization: neighbor experience costs, the
//! steering-vs-damage objective, greedy search with frozen flips, a small
//! exhaustive oracle for tests, the gamma sweep, and the Direct/Sim
//! baselines.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backbones::{top_k, EmbeddingTable, Scorer};
use crate::corpus::SocialGraph;
use crate::estimator::NIRecModel;
use crate::sigmoid;
use crate::simworld::{SimOracle, TargetSpec};
use crate::{Error, Result};

/// Outcome model used by the optimizer: predicts a target user's positive
/// feedback probability under a hypothetical neighbor exposure vector
/// (aligned to `graph().nbrs(u)`).
pub trait PotentialPredictor {
    fn graph(&self) -> &Arc<SocialGraph>;
    fn predict(&self, u: usize, i: usize, neighbor_bits: &[bool]) -> f64;
}

impl PotentialPredictor for NIRecModel {
    fn graph(&self) -> &Arc<SocialGraph> {
        NIRecModel::graph(self)
    }
    fn predict(&self, u: usize, i: usize, neighbor_bits: &[bool]) -> f64 {
        self.predict_potential(u, i, neighbor_bits)
    }
}

impl PotentialPredictor for SimOracle {
    fn graph(&self) -> &Arc<SocialGraph> {
        SimOracle::graph(self)
    }
    fn predict(&self, u: usize, i: usize, neighbor_bits: &[bool]) -> f64 {
        self.outcome_prob_bits(u, i, neighbor_bits)
    }
}

/// Per-neighbor recommendation-list state around one target item: what the
/// experience model would show each neighbor, whether the item already
/// makes their list, and the list-boundary ratings that price a forced
/// insertion or removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceContext {
    k: usize,
    target_item: u32,
    /// Unit ids in `TargetSpec.neighbor_users` order; bit j of every
    /// assignment refers to `neighbors[j]`.
    neighbors: Vec<u32>,
    /// Each neighbor's top-k list, rating-descending.
    top_lists: Vec<Vec<u32>>,
    /// Model rating of the target item per neighbor.
    r_target: Vec<f64>,
    /// Whether the target item is in the neighbor's organic top-k.
    exposed: Vec<bool>,
    /// Rating of the k-th (last in-list) item per neighbor.
    kth: Vec<f64>,
    /// Rating of the (k+1)-th (first out-of-list) item per neighbor.
    k1th: Vec<f64>,
}

impl ExperienceContext {
    /// Score every neighbor's top-(k+1) items once and derive the exposure
    /// flags and boundary ratings.
    pub fn build<S: Scorer + ?Sized>(model: &S, k: usize, target_item: u32, neighbors: &[u32]) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("experience list length k must be >= 1"));
        }
        if model.n_items() < k + 1 {
            return Err(Error::invalid(format!(
                "need at least {} scoreable items for a top-{k} boundary, have {}",
                k + 1,
                model.n_items()
            )));
        }
        let mut top_lists = Vec::with_capacity(neighbors.len());
        let mut r_target = Vec::with_capacity(neighbors.len());
        let mut exposed = Vec::with_capacity(neighbors.len());
        let mut kth = Vec::with_capacity(neighbors.len());
        let mut k1th = Vec::with_capacity(neighbors.len());
        let none = std::collections::HashSet::new();
        for &v in neighbors {
            let head = top_k(model, v as usize, k + 1, &none)?;
            kth.push(model.score(v as usize, head[k - 1]));
            k1th.push(model.score(v as usize, head[k]));
            r_target.push(model.score(v as usize, target_item as usize));
            exposed.push(head[..k].contains(&(target_item as usize)));
            top_lists.push(head[..k].iter().map(|&i| i as u32).collect());
        }
        Ok(ExperienceContext { k, target_item, neighbors: neighbors.to_vec(), top_lists, r_target, exposed, kth, k1th })
    }

    /// Assemble a context from explicit per-neighbor numbers (tests and
    /// hand-built instances; the builder path is `build`). Top lists are
    /// left empty.
    pub fn from_parts(
        k: usize,
        target_item: u32,
        neighbors: Vec<u32>,
        r_target: Vec<f64>,
        exposed: Vec<bool>,
        kth: Vec<f64>,
        k1th: Vec<f64>,
    ) -> Result<Self> {
        let n = neighbors.len();
        if r_target.len() != n || exposed.len() != n || kth.len() != n || k1th.len() != n {
            return Err(Error::invalid("per-neighbor field lengths disagree"));
        }
        if k == 0 {
            return Err(Error::invalid("experience list length k must be >= 1"));
        }
        Ok(ExperienceContext { k, target_item, neighbors, top_lists: vec![Vec::new(); n], r_target, exposed, kth, k1th })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn target_item(&self) -> u32 {
        self.target_item
    }

    pub fn neighbors(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn top_list(&self, j: usize) -> &[u32] {
        &self.top_lists[j]
    }

    pub fn is_exposed(&self, j: usize) -> bool {
        self.exposed[j]
    }

    /// The organic exposure bits, i.e. the zero-damage assignment.
    pub fn observed_bits(&self) -> Vec<bool> {
        self.exposed.clone()
    }

    /// Experience damage for forcing neighbor j's exposure bit to `o`:
    /// zero at the organic bit; otherwise the rating gap the forced list
    /// edit displaces. Removal pushes the target item below the (k+1)-th
    /// item; insertion pushes the k-th item out.
    pub fn cost(&self, j: usize, o: bool) -> f64 {
        if o == self.exposed[j] {
            return 0.0;
        }
        let gap = if self.exposed[j] { self.r_target[j] - self.k1th[j] } else { self.kth[j] - self.r_target[j] };
        // Boundary ties can go fractionally negative through float noise.
        gap.max(0.0)
    }
}

/// One exposure assignment over the steerable neighbor units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    /// Bit j exposes `ctx.neighbors()[j]`.
    pub bits: Vec<bool>,
    /// Indices reassigned away from the organic exposure, in the order the
    /// search fixed them.
    pub frozen: Vec<usize>,
}

impl TreatmentAssignment {
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// The two halves of the steering objective at one assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// Sum over target users of the predicted positive-outcome probability.
    pub steering_sum: f64,
    /// Sum over neighbor units of the experience cost.
    pub damage: f64,
    pub gamma: f64,
    /// steering_sum - gamma * damage.
    pub value: f64,
}

impl ObjectiveBreakdown {
    pub fn new(steering_sum: f64, damage: f64, gamma: f64) -> Self {
        ObjectiveBreakdown { steering_sum, damage, gamma, value: steering_sum - gamma * damage }
    }
}

/// A finished search: the assignment it settled on, the objective there,
/// and how many candidate evaluations it spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub assignment: TreatmentAssignment,
    pub breakdown: ObjectiveBreakdown,
    pub evaluations: u64,
}

/// Where each of a target user's graph neighbors gets its exposure bit
/// during objective evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum BitSource {
    /// Fellow target-group member: always exposed under the steering term.
    Member,
    /// Searchable unit: read from the assignment at this index.
    Searched(usize),
    /// Outside the instance entirely; keeps the ambient (unexposed) state.
    /// Unreachable for specs built by select_targets, which put every
    /// non-member neighbor into the searchable set.
    Ambient,
}

pub(crate) fn bit_sources(graph: &SocialGraph, spec: &TargetSpec) -> Vec<Vec<BitSource>> {
    let members: HashMap<u32, ()> = spec.target_users.iter().map(|&u| (u, ())).collect();
    let position: HashMap<u32, usize> = spec.neighbor_users.iter().enumerate().map(|(j, &v)| (v, j)).collect();
    spec.target_users
        .iter()
        .map(|&u| {
            graph
                .nbrs(u as usize)
                .iter()
                .map(|&v| {
                    let v = v as u32;
                    if members.contains_key(&v) {
                        BitSource::Member
                    } else if let Some(&j) = position.get(&v) {
                        BitSource::Searched(j)
                    } else {
                        BitSource::Ambient
                    }
                })
                .collect()
        })
        .collect()
}

pub(crate) fn materialize(sources: &[BitSource], bits: &[bool]) -> Vec<bool> {
    sources
        .iter()
        .map(|s| match *s {
            BitSource::Member => true,
            BitSource::Searched(j) => bits[j],
            BitSource::Ambient => false,
        })
        .collect()
}

/// Evaluate the bi-objective at one assignment: predicted steering mass
/// over the target group minus gamma times the neighbors' experience
/// damage.
pub fn objective<P: PotentialPredictor + ?Sized>(
    predictor: &P,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    bits: &[bool],
    gamma: f64,
) -> Result<ObjectiveBreakdown> {
    if bits.len() != spec.neighbor_users.len() {
        return Err(Error::invalid(format!(
            "assignment has {} bits for {} steerable neighbors",
            bits.len(),
            spec.neighbor_users.len()
        )));
    }
    let graph = predictor.graph();
    let item = spec.target_item as usize;
    let sources = bit_sources(graph, spec);
    let steering_sum: f64 = spec
        .target_users
        .iter()
        .zip(&sources)
        .map(|(&u, src)| predictor.predict(u as usize, item, &materialize(src, bits)))
        .sum();
    let damage: f64 = (0..bits.len()).map(|j| ctx.cost(j, bits[j])).sum();
    Ok(ObjectiveBreakdown::new(steering_sum, damage, gamma))
}

/// Greedy ascent over single-bit flips. Starts from the organic exposure,
/// each round flips the not-yet-frozen bit with the largest objective gain
/// (ties to the lowest index) and freezes it, and stops when the best gain
/// is non-positive or every bit is frozen.
pub fn greedy_optimize<P: PotentialPredictor + ?Sized>(
    predictor: &P,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    gamma: f64,
) -> Result<SearchOutcome> {
    let n = spec.neighbor_users.len();
    if ctx.neighbors() != &spec.neighbor_users[..] {
        return Err(Error::invalid("experience context neighbors disagree with the target spec"));
    }
    let graph = Arc::clone(predictor.graph());
    let item = spec.target_item as usize;
    let sources = bit_sources(&graph, spec);

    let mut bits = ctx.observed_bits();
    // Per-target treatment vectors and predictions, kept exact by
    // re-predicting affected targets after every applied flip.
    let mut treatments: Vec<Vec<bool>> = sources.iter().map(|src| materialize(src, &bits)).collect();
    let mut preds: Vec<f64> = spec
        .target_users
        .iter()
        .zip(&treatments)
        .map(|(&u, t)| predictor.predict(u as usize, item, t))
        .collect();
    // bit j -> (target index, position in that target's neighbor list)
    let mut touches: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (ti, src) in sources.iter().enumerate() {
        for (pos, s) in src.iter().enumerate() {
            if let BitSource::Searched(j) = *s {
                touches[j].push((ti, pos));
            }
        }
    }

    let mut damage: f64 = (0..n).map(|j| ctx.cost(j, bits[j])).sum();
    let mut frozen = Vec::new();
    let mut frozen_mask = vec![false; n];
    let mut evaluations = 0u64;

    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if frozen_mask[j] {
                continue;
            }
            evaluations += 1;
            let flipped = !bits[j];
            let dcost = ctx.cost(j, flipped) - ctx.cost(j, bits[j]);
            let mut dsteer = 0.0;
            for &(ti, pos) in &touches[j] {
                let mut t = treatments[ti].clone();
                t[pos] = flipped;
                dsteer += predictor.predict(spec.target_users[ti] as usize, item, &t) - preds[ti];
            }
            let gain = dsteer - gamma * dcost;
            // Strict > keeps the lowest index on ties.
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, gain)) = best else { break };
        if gain <= 0.0 {
            break;
        }
        bits[j] = !bits[j];
        frozen_mask[j] = true;
        frozen.push(j);
        for &(ti, pos) in &touches[j] {
            treatments[ti][pos] = bits[j];
            preds[ti] = predictor.predict(spec.target_users[ti] as usize, item, &treatments[ti]);
        }
        damage = (0..n).map(|i| ctx.cost(i, bits[i])).sum();
    }

    let steering_sum: f64 = preds.iter().sum();
    Ok(SearchOutcome {
        assignment: TreatmentAssignment { bits, frozen },
        breakdown: ObjectiveBreakdown::new(steering_sum, damage, gamma),
        evaluations,
    })
}

/// Exhaustive maximizer over all 2^n assignments; ties resolve to the
/// lexicographically smallest bit vector. Test oracle, capped at n <= 20.
pub fn brute_force<P: PotentialPredictor + ?Sized>(
    predictor: &P,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    gamma: f64,
) -> Result<SearchOutcome> {
    let n = spec.neighbor_users.len();
    if n > 20 {
        return Err(Error::invalid(format!("brute force caps at 20 neighbor bits, got {n}")));
    }
    let observed = ctx.observed_bits();
    let mut best: Option<(Vec<bool>, ObjectiveBreakdown)> = None;
    let mut evaluations = 0u64;
    for m in 0u64..(1u64 << n) {
        // bits[0] is the most significant digit so m ascends in
        // lexicographic bit order; strict > keeps the smallest maximizer.
        let bits: Vec<bool> = (0..n).map(|j| (m >> (n - 1 - j)) & 1 == 1).collect();
        let b = objective(predictor, spec, ctx, &bits, gamma)?;
        evaluations += 1;
        if best.as_ref().map_or(true, |(_, cur)| b.value > cur.value) {
            best = Some((bits, b));
        }
    }
    let (bits, breakdown) = best.expect("at least the empty assignment");
    let frozen = bits.iter().zip(&observed).enumerate().filter(|(_, (b, o))| b != o).map(|(j, _)| j).collect();
    Ok(SearchOutcome { assignment: TreatmentAssignment { bits, frozen }, breakdown, evaluations })
}

/// One record per gamma: independent greedy runs along the grid.
pub fn sweep_gamma<P: PotentialPredictor + ?Sized>(
    predictor: &P,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    grid: &[f64],
) -> Result<Vec<(f64, SearchOutcome)>> {
    if grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("gamma grid must be strictly ascending"));
    }
    grid.iter().map(|&g| Ok((g, greedy_optimize(predictor, spec, ctx, g)?))).collect()
}

/// Direct baseline: expose neighbors the backbone thinks like the item.
/// The surrogate objective sum_j o_j (sigma(e_v . e_i) - 0.5) - gamma *
/// damage is separable, so each bit is solved exactly; zero margins keep
/// the organic bit.
pub fn baseline_direct(
    backbone: &EmbeddingTable,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    gamma: f64,
) -> Result<TreatmentAssignment> {
    if ctx.neighbors() != &spec.neighbor_users[..] {
        return Err(Error::invalid("experience context neighbors disagree with the target spec"));
    }
    let item = spec.target_item as usize;
    let mut bits = Vec::with_capacity(spec.neighbor_users.len());
    let mut frozen = Vec::new();
    for (j, &v) in spec.neighbor_users.iter().enumerate() {
        let liking = sigmoid(backbone.score(v as usize, item)) - 0.5;
        let margin_on = liking - gamma * ctx.cost(j, true);
        let margin_off = -gamma * ctx.cost(j, false);
        let organic = ctx.is_exposed(j);
        let bit = match margin_on.partial_cmp(&margin_off).expect("finite margins") {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => organic,
        };
        if bit != organic {
            frozen.push(j);
        }
        bits.push(bit);
    }
    Ok(TreatmentAssignment { bits, frozen })
}

/// Sim baseline: run the greedy search against a simulated-feedback world
/// built from backbone embeddings (the oracle functional form with learned
/// vectors in place of the oracle's).
pub fn baseline_sim(
    backbone: &EmbeddingTable,
    graph: &Arc<SocialGraph>,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    gamma: f64,
    beta: f64,
) -> Result<TreatmentAssignment> {
    let world = SimOracle::new(backbone.clone(), beta, Arc::clone(graph))?;
    Ok(greedy_optimize(&world, spec, ctx, gamma)?.assignment)
}
