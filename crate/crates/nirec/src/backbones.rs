//! Recommendation backbones: squared-loss matrix factorization on explicit
//! ratings, pairwise-ranking training on implicit positives with optional
//! graph-propagated embeddings, marginal alignment of completed ratings to a
//! reference distribution, and top-k retrieval.
//!
//! The BPR trainer optimizes the base embeddings with plain dot-product
//! scoring; layer propagation over the user-item graph is applied once after
//! training, and the propagated table (the per-layer mean, layer 0 included)
//! is what `score` uses.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionRecord, RATING_MAX, RATING_MIN};
use crate::mat::{axpy, dot, Mat};
use crate::optim::{run_descent, Descend, TrainTrace};
use crate::rng::{mix, rng_from};
use crate::{sigmoid, Error, Result};

/// Paired user/item embedding matrices with a shared width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub users: Mat,
    pub items: Mat,
}

impl EmbeddingTable {
    pub fn random(n_users: usize, n_items: usize, dim: usize, mean: f64, std: f64, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(mean, std).expect("finite init parameters");
        let users = Mat::from_fn(n_users, dim, |_, _| normal.sample(&mut rng));
        let items = Mat::from_fn(n_items, dim, |_, _| normal.sample(&mut rng));
        EmbeddingTable { users, items }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn n_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    /// Raw interest score: dot product of the user and item vectors.
    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.users.row(u), self.items.row(i))
    }

    pub fn all_finite(&self) -> bool {
        self.users.all_finite() && self.items.all_finite()
    }
}

/// Shared trainer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Per-entry mean of the Gaussian embedding init; raising it starts dot
    /// products near a target value instead of 0 (used by the bias-free
    /// rating model so predictions begin on the rating scale).
    #[serde(default)]
    pub init_mean: f64,
    /// Fix `global_bias` to the training-set mean rating instead of 0.
    #[serde(default)]
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            epochs: 200,
            learning_rate: 0.05,
            l2_reg: 1e-4,
            seed: 0,
            batch_size: 512,
            init_mean: 0.0,
            use_bias: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("dim, epochs, and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.l2_reg < 0.0 {
            return Err(Error::invalid("learning_rate must be > 0 and l2_reg >= 0"));
        }
        Ok(())
    }
}

const MF_INIT_STD: f64 = 0.1;

/// Rating predictor: `global_bias + e_u . e_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MFModel {
    pub embeddings: EmbeddingTable,
    pub global_bias: f64,
}

impl MFModel {
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.global_bias + self.embeddings.score(u, i)
    }
}

/// Squared error of one rating; the quantity the MF trainer descends.
pub fn mf_sample_loss(model: &MFModel, r: &InteractionRecord) -> f64 {
    let err = model.predict(r.user, r.item) - r.rating;
    err * err
}

pub fn mf_rmse(model: &MFModel, records: &[InteractionRecord]) -> f64 {
    let mse: f64 = records.iter().map(|r| mf_sample_loss(model, r)).sum::<f64>() / records.len() as f64;
    mse.sqrt()
}

struct MfDescent<'a> {
    emb: EmbeddingTable,
    bias: f64,
    data: &'a [InteractionRecord],
    cfg: &'a TrainConfig,
    order: Vec<u32>,
}

impl Descend for MfDescent<'_> {
    type Snapshot = EmbeddingTable;

    fn snapshot(&self) -> EmbeddingTable {
        self.emb.clone()
    }

    fn restore(&mut self, snap: EmbeddingTable) {
        self.emb = snap;
    }

    fn epoch(&mut self, epoch: usize, lr: f64) {
        let mut rng = rng_from(mix(self.cfg.seed, 0x4d46_0000 ^ epoch as u64));
        self.order.shuffle(&mut rng);
        let d = self.emb.dim();
        let l2 = self.cfg.l2_reg;
        for batch in self.order.chunks(self.cfg.batch_size) {
            let mut gu: HashMap<usize, Vec<f64>> = HashMap::new();
            let mut gi: HashMap<usize, Vec<f64>> = HashMap::new();
            for &idx in batch {
                let r = &self.data[idx as usize];
                let err = self.bias + self.emb.score(r.user, r.item) - r.rating;
                let (eu, ei) = (self.emb.users.row(r.user), self.emb.items.row(r.item));
                let gu_row = gu.entry(r.user).or_insert_with(|| vec![0.0; d]);
                for k in 0..d {
                    gu_row[k] += 2.0 * err * ei[k] + 2.0 * l2 * eu[k];
                }
                let gi_row = gi.entry(r.item).or_insert_with(|| vec![0.0; d]);
                for k in 0..d {
                    gi_row[k] += 2.0 * err * eu[k] + 2.0 * l2 * ei[k];
                }
            }
            let scale = -lr / batch.len() as f64;
            for (u, g) in gu {
                axpy(self.emb.users.row_mut(u), scale, &g);
            }
            for (i, g) in gi {
                axpy(self.emb.items.row_mut(i), scale, &g);
            }
        }
    }

    fn eval(&self) -> f64 {
        let mse: f64 = self
            .data
            .iter()
            .map(|r| {
                let err = self.bias + self.emb.score(r.user, r.item) - r.rating;
                err * err
            })
            .sum();
        mse / self.data.len() as f64
    }
}

/// Train a rating MF model by seeded mini-batch gradient descent on squared
/// error with L2 on the rows each sample touches.
pub fn train_mf_ratings(
    records: &[InteractionRecord],
    n_users: usize,
    n_items: usize,
    cfg: &TrainConfig,
) -> Result<(MFModel, TrainTrace)> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("no interactions to train on"));
    }
    for r in records {
        if r.user >= n_users || r.item >= n_items {
            return Err(Error::invalid(format!("record ({}, {}) out of range", r.user, r.item)));
        }
    }
    let bias = if cfg.use_bias { records.iter().map(|r| r.rating).sum::<f64>() / records.len() as f64 } else { 0.0 };
    let emb = EmbeddingTable::random(n_users, n_items, cfg.dim, cfg.init_mean, MF_INIT_STD, mix(cfg.seed, 0x4d46));
    let mut task = MfDescent { emb, bias, data: records, cfg, order: (0..records.len() as u32).collect() };
    let trace = run_descent(&mut task, cfg.epochs, cfg.learning_rate);
    if trace.diverged {
        return Err(Error::Diverged { accepted: trace.epoch_loss.len() });
    }
    Ok((MFModel { embeddings: task.emb, global_bias: bias }, trace))
}

pub const ALIGN_BINS: usize = 50;
const BIN_WIDTH: f64 = (RATING_MAX - RATING_MIN) / ALIGN_BINS as f64;

/// Rating marginal as 50 bin weights over [1, 5], normalized to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingHistogram {
    bins: Vec<f64>,
}

impl RatingHistogram {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.len() != ALIGN_BINS {
            return Err(Error::invalid(format!("expected {ALIGN_BINS} bins, got {}", bins.len())));
        }
        if bins.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("histogram weights must be finite and non-negative"));
        }
        let total: f64 = bins.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("histogram has no mass"));
        }
        Ok(RatingHistogram { bins: bins.into_iter().map(|w| w / total).collect() })
    }

    pub fn from_ratings(values: impl Iterator<Item = f64>) -> Result<Self> {
        let mut bins = vec![0.0; ALIGN_BINS];
        let mut n = 0usize;
        for v in values {
            let b = (((v - RATING_MIN) / BIN_WIDTH) as usize).min(ALIGN_BINS - 1);
            bins[b] += 1.0;
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("no ratings to build a histogram from"));
        }
        RatingHistogram::new(bins)
    }

    pub fn weights(&self) -> &[f64] {
        &self.bins
    }

    /// Invert the CDF at quantile `q`, treating mass as uniform within bins.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let mut cum = 0.0;
        for (b, &w) in self.bins.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if q <= cum + w {
                let frac = (q - cum) / w;
                return RATING_MIN + (b as f64 + frac) * BIN_WIDTH;
            }
            cum += w;
        }
        RATING_MAX
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Monotone piecewise-linear transform between two score distributions,
/// fitted at 101 matched quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap {
    xs: Vec<f64>,
    ys: Vec<f64>,
    pub degenerate: bool,
}

const MAP_KNOTS: usize = 101;
const DEGENERATE_SPREAD: f64 = 1e-9;

impl MonotoneMap {
    fn fit(sample_sorted: &[f64], reference: &RatingHistogram) -> MonotoneMap {
        let n = sample_sorted.len();
        let spread = sample_sorted[n - 1] - sample_sorted[0];
        if spread < DEGENERATE_SPREAD {
            let m = reference.median();
            return MonotoneMap { xs: vec![sample_sorted[0]], ys: vec![m], degenerate: true };
        }
        let mut xs = Vec::with_capacity(MAP_KNOTS);
        let mut ys = Vec::with_capacity(MAP_KNOTS);
        for j in 0..MAP_KNOTS {
            let q = j as f64 / (MAP_KNOTS - 1) as f64;
            let pos = q * (n - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            let x = if lo == hi {
                sample_sorted[lo]
            } else {
                let frac = pos - lo as f64;
                sample_sorted[lo] * (1.0 - frac) + sample_sorted[hi] * frac
            };
            xs.push(x);
            ys.push(reference.quantile(q));
        }
        // Collapse duplicate x knots (ties in the sample) to keep the map a
        // single-valued function; group means preserve monotonicity.
        let mut cx = Vec::with_capacity(xs.len());
        let mut cy = Vec::with_capacity(ys.len());
        let mut i = 0;
        while i < xs.len() {
            let mut j = i;
            let mut acc = 0.0;
            while j < xs.len() && xs[j] == xs[i] {
                acc += ys[j];
                j += 1;
            }
            cx.push(xs[i]);
            cy.push(acc / (j - i) as f64);
            i = j;
        }
        MonotoneMap { xs: cx, ys: cy, degenerate: false }
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.degenerate {
            return self.ys[0];
        }
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let hi = self.xs.partition_point(|&v| v < x).min(n - 1);
        let lo = hi - 1;
        let span = self.xs[hi] - self.xs[lo];
        let frac = if span > 0.0 { (x - self.xs[lo]) / span } else { 0.0 };
        self.ys[lo] * (1.0 - frac) + self.ys[hi] * frac
    }
}

/// Completed rating provider: observed cells keep their original rating,
/// missing cells get the model prediction pushed through a monotone map onto
/// the reference marginal, clamped into [1, 5].
#[derive(Debug, Clone)]
pub struct AlignedRatings {
    model: MFModel,
    observed: HashMap<(u32, u32), f64>,
    map: MonotoneMap,
}

impl AlignedRatings {
    pub fn rating(&self, u: usize, i: usize) -> f64 {
        if let Some(&r) = self.observed.get(&(u as u32, i as u32)) {
            return r;
        }
        self.map.apply(self.model.predict(u, i)).clamp(RATING_MIN, RATING_MAX)
    }

    pub fn degenerate(&self) -> bool {
        self.map.degenerate
    }

    pub fn map(&self) -> &MonotoneMap {
        &self.map
    }
}

/// Fit the completion transform from a seeded sample of model predictions
/// (all cells when the matrix is small enough) onto `reference`.
pub fn complete_and_align(
    model: &MFModel,
    observed: &[InteractionRecord],
    n_users: usize,
    n_items: usize,
    reference: &RatingHistogram,
    sample_cap: usize,
    seed: u64,
) -> Result<AlignedRatings> {
    if n_users == 0 || n_items == 0 {
        return Err(Error::invalid("empty rating matrix"));
    }
    let total = n_users * n_items;
    let mut sample = Vec::with_capacity(total.min(sample_cap.max(2)));
    if total <= sample_cap {
        for u in 0..n_users {
            for i in 0..n_items {
                sample.push(model.predict(u, i));
            }
        }
    } else {
        let mut rng = rng_from(mix(seed, 0xa11b));
        for _ in 0..sample_cap.max(2) {
            let u = rng.random_range(0..n_users);
            let i = rng.random_range(0..n_items);
            sample.push(model.predict(u, i));
        }
    }
    sample.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite predictions"));
    let map = MonotoneMap::fit(&sample, reference);
    let observed_map = observed.iter().map(|r| ((r.user as u32, r.item as u32), r.rating)).collect();
    Ok(AlignedRatings { model: model.clone(), observed: observed_map, map })
}

/// Base embeddings plus their graph-propagated counterpart; `score` uses the
/// propagated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredGraphModel {
    pub base: EmbeddingTable,
    pub layers: usize,
    pub final_emb: EmbeddingTable,
}

impl LayeredGraphModel {
    pub fn score(&self, u: usize, i: usize) -> f64 {
        self.final_emb.score(u, i)
    }
}

/// Mean of layer-0..layers embeddings under symmetric degree-normalized
/// propagation over the user-item interaction graph. With no interactions or
/// zero layers the base table is returned unchanged.
pub fn propagate(base: &EmbeddingTable, positives: &[(u32, u32)], layers: usize) -> EmbeddingTable {
    if layers == 0 || positives.is_empty() {
        return base.clone();
    }
    let (n_users, n_items, d) = (base.n_users(), base.n_items(), base.dim());
    let mut user_items: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    let mut item_users: Vec<Vec<u32>> = vec![Vec::new(); n_items];
    for &(u, i) in positives {
        user_items[u as usize].push(i);
        item_users[i as usize].push(u);
    }
    let norm = |du: usize, di: usize| 1.0 / ((du as f64).sqrt() * (di as f64).sqrt());

    let mut cur_u = base.users.clone();
    let mut cur_i = base.items.clone();
    let mut acc_u = base.users.clone();
    let mut acc_i = base.items.clone();
    for _ in 0..layers {
        let mut next_u = Mat::zeros(n_users, d);
        let mut next_i = Mat::zeros(n_items, d);
        for (u, items) in user_items.iter().enumerate() {
            let du = items.len();
            if du == 0 {
                continue;
            }
            for &i in items {
                let w = norm(du, item_users[i as usize].len());
                axpy(next_u.row_mut(u), w, cur_i.row(i as usize));
            }
        }
        for (i, users) in item_users.iter().enumerate() {
            let di = users.len();
            if di == 0 {
                continue;
            }
            for &u in users {
                let w = norm(user_items[u as usize].len(), di);
                axpy(next_i.row_mut(i), w, cur_u.row(u as usize));
            }
        }
        for (a, &n) in acc_u.data_mut().iter_mut().zip(next_u.data()) {
            *a += n;
        }
        for (a, &n) in acc_i.data_mut().iter_mut().zip(next_i.data()) {
            *a += n;
        }
        cur_u = next_u;
        cur_i = next_i;
    }
    let scale = 1.0 / (layers + 1) as f64;
    for v in acc_u.data_mut() {
        *v *= scale;
    }
    for v in acc_i.data_mut() {
        *v *= scale;
    }
    EmbeddingTable { users: acc_u, items: acc_i }
}

/// Per-triple ranking loss: -ln sigma(s_ui - s_uj).
pub fn bpr_triple_loss(emb: &EmbeddingTable, u: usize, i: usize, j: usize) -> f64 {
    -sigmoid(emb.score(u, i) - emb.score(u, j)).ln()
}

struct BprDescent<'a> {
    emb: EmbeddingTable,
    positives: &'a [(u32, u32)],
    user_pos: &'a [Vec<u32>],
    n_items: usize,
    cfg: &'a TrainConfig,
    order: Vec<u32>,
    /// One fixed negative per positive, drawn once, so `eval` is a
    /// deterministic function of the parameters.
    eval_neg: Vec<u32>,
}

impl BprDescent<'_> {
    fn sample_negative(&self, u: usize, rng: &mut crate::rng::SeededRng) -> u32 {
        let pos = &self.user_pos[u];
        for _ in 0..10_000 {
            let j = rng.random_range(0..self.n_items) as u32;
            if pos.binary_search(&j).is_err() {
                return j;
            }
        }
        // Dense user: walk from a random offset to the first non-positive.
        let start = rng.random_range(0..self.n_items);
        for off in 0..self.n_items {
            let j = ((start + off) % self.n_items) as u32;
            if pos.binary_search(&j).is_err() {
                return j;
            }
        }
        unreachable!("caller guarantees a candidate negative exists");
    }
}

impl Descend for BprDescent<'_> {
    type Snapshot = EmbeddingTable;

    fn snapshot(&self) -> EmbeddingTable {
        self.emb.clone()
    }

    fn restore(&mut self, snap: EmbeddingTable) {
        self.emb = snap;
    }

    fn epoch(&mut self, epoch: usize, lr: f64) {
        let mut rng = rng_from(mix(self.cfg.seed, 0xb950_0000 ^ epoch as u64));
        self.order.shuffle(&mut rng);
        let d = self.emb.dim();
        let l2 = self.cfg.l2_reg;
        for batch in self.order.chunks(self.cfg.batch_size) {
            let mut gu: HashMap<usize, Vec<f64>> = HashMap::new();
            let mut gi: HashMap<usize, Vec<f64>> = HashMap::new();
            for &idx in batch {
                let (u, i) = self.positives[idx as usize];
                let (u, i) = (u as usize, i as usize);
                let j = self.sample_negative(u, &mut rng) as usize;
                let x = self.emb.score(u, i) - self.emb.score(u, j);
                let s = sigmoid(x);
                let gl = s - 1.0;
                let (eu, ei, ej) = (self.emb.users.row(u), self.emb.items.row(i), self.emb.items.row(j));
                let gu_row = gu.entry(u).or_insert_with(|| vec![0.0; d]);
                for k in 0..d {
                    gu_row[k] += gl * (ei[k] - ej[k]) + 2.0 * l2 * eu[k];
                }
                let gi_row = gi.entry(i).or_insert_with(|| vec![0.0; d]);
                for k in 0..d {
                    gi_row[k] += gl * eu[k] + 2.0 * l2 * ei[k];
                }
                let gj_row = gi.entry(j).or_insert_with(|| vec![0.0; d]);
                for k in 0..d {
                    gj_row[k] += -gl * eu[k] + 2.0 * l2 * ej[k];
                }
            }
            let scale = -lr / batch.len() as f64;
            for (u, g) in gu {
                axpy(self.emb.users.row_mut(u), scale, &g);
            }
            for (i, g) in gi {
                axpy(self.emb.items.row_mut(i), scale, &g);
            }
        }
    }

    fn eval(&self) -> f64 {
        let loss: f64 = self
            .positives
            .iter()
            .zip(&self.eval_neg)
            .map(|(&(u, i), &j)| bpr_triple_loss(&self.emb, u as usize, i as usize, j as usize))
            .sum();
        loss / self.positives.len() as f64
    }
}

/// Train base embeddings with one seeded uniform non-positive item sampled
/// per positive per epoch, then propagate `layers` times.
pub fn train_bpr(
    positives: &[(u32, u32)],
    n_users: usize,
    n_items: usize,
    layers: usize,
    cfg: &TrainConfig,
) -> Result<(LayeredGraphModel, TrainTrace)> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::invalid("no positive interactions to train on"));
    }
    let mut user_pos: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for &(u, i) in positives {
        if u as usize >= n_users || i as usize >= n_items {
            return Err(Error::invalid(format!("positive ({u}, {i}) out of range")));
        }
        user_pos[u as usize].push(i);
    }
    for (u, pos) in user_pos.iter_mut().enumerate() {
        pos.sort_unstable();
        pos.dedup();
        if pos.len() == n_items {
            return Err(Error::invalid(format!("user {u} has no candidate negative items")));
        }
    }
    let base = EmbeddingTable::random(n_users, n_items, cfg.dim, 0.0, MF_INIT_STD, mix(cfg.seed, 0xb950));
    let mut task = BprDescent {
        emb: base,
        positives,
        user_pos: &user_pos,
        n_items,
        cfg,
        order: (0..positives.len() as u32).collect(),
        eval_neg: Vec::new(),
    };
    let mut eval_rng = rng_from(mix(cfg.seed, 0xb950_e7a1));
    task.eval_neg = positives.iter().map(|&(u, _)| task.sample_negative(u as usize, &mut eval_rng)).collect();
    let trace = run_descent(&mut task, cfg.epochs, cfg.learning_rate);
    if trace.diverged {
        return Err(Error::Diverged { accepted: trace.epoch_loss.len() });
    }
    let final_emb = propagate(&task.emb, positives, layers);
    Ok((LayeredGraphModel { base: task.emb, layers, final_emb }, trace))
}

/// Anything that can score every item for a user.
pub trait Scorer {
    fn n_items(&self) -> usize;
    fn score(&self, u: usize, i: usize) -> f64;
}

impl Scorer for MFModel {
    fn n_items(&self) -> usize {
        self.embeddings.n_items()
    }
    fn score(&self, u: usize, i: usize) -> f64 {
        self.predict(u, i)
    }
}

impl Scorer for LayeredGraphModel {
    fn n_items(&self) -> usize {
        self.final_emb.n_items()
    }
    fn score(&self, u: usize, i: usize) -> f64 {
        self.final_emb.score(u, i)
    }
}

impl Scorer for EmbeddingTable {
    fn n_items(&self) -> usize {
        self.n_items()
    }
    fn score(&self, u: usize, i: usize) -> f64 {
        EmbeddingTable::score(self, u, i)
    }
}

/// The `k` highest-scoring items for `u` outside `exclude`, score descending
/// with ties broken by ascending item id.
pub fn top_k<S: Scorer + ?Sized>(model: &S, u: usize, k: usize, exclude: &HashSet<usize>) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("top-k requires k >= 1"));
    }
    let n = model.n_items();
    let mut scored: Vec<(usize, f64)> = (0..n).filter(|i| !exclude.contains(i)).map(|i| (i, model.score(u, i))).collect();
    if scored.len() < k {
        return Err(Error::invalid(format!("only {} candidate items for top-{k}", scored.len())));
    }
    scored.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Result of comparing analytic gradients against central finite differences.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

pub(crate) const FD_STEP: f64 = 1e-4;

pub(crate) fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
}

/// Select up to `n_coords` coordinates from a pool, seeded.
pub(crate) fn pick_coords<T: Copy>(pool: Vec<T>, n_coords: usize, seed: u64) -> Vec<T> {
    let mut pool = pool;
    let mut rng = rng_from(mix(seed, 0xc0de));
    pool.shuffle(&mut rng);
    pool.truncate(n_coords);
    pool
}

#[derive(Debug, Clone, Copy)]
enum EmbCoord {
    User(usize, usize),
    Item(usize, usize),
}

/// Check MF gradients of the summed per-sample squared loss over `samples`.
pub fn gradcheck_mf(model: &MFModel, samples: &[InteractionRecord], n_coords: usize, seed: u64) -> GradCheck {
    let d = model.embeddings.dim();
    let mut touched_users: Vec<usize> = samples.iter().map(|r| r.user).collect();
    let mut touched_items: Vec<usize> = samples.iter().map(|r| r.item).collect();
    touched_users.sort_unstable();
    touched_users.dedup();
    touched_items.sort_unstable();
    touched_items.dedup();

    let mut gu: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut gi: HashMap<usize, Vec<f64>> = HashMap::new();
    for r in samples {
        let err = model.predict(r.user, r.item) - r.rating;
        let (eu, ei) = (model.embeddings.users.row(r.user), model.embeddings.items.row(r.item));
        let gur = gu.entry(r.user).or_insert_with(|| vec![0.0; d]);
        let gir = gi.entry(r.item).or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            gur[k] += 2.0 * err * ei[k];
            gir[k] += 2.0 * err * eu[k];
        }
    }

    let mut pool = Vec::new();
    for &u in &touched_users {
        for k in 0..d {
            pool.push(EmbCoord::User(u, k));
        }
    }
    for &i in &touched_items {
        for k in 0..d {
            pool.push(EmbCoord::Item(i, k));
        }
    }
    let coords = pick_coords(pool, n_coords, seed);

    let mut work = model.clone();
    let loss = |m: &MFModel| samples.iter().map(|r| mf_sample_loss(m, r)).sum::<f64>();
    let mut max_err = 0.0f64;
    for c in &coords {
        let (analytic, cur) = match *c {
            EmbCoord::User(r, k) => (gu[&r][k], work.embeddings.users.get(r, k)),
            EmbCoord::Item(r, k) => (gi[&r][k], work.embeddings.items.get(r, k)),
        };
        let setv = |m: &mut MFModel, v: f64| match *c {
            EmbCoord::User(r, k) => m.embeddings.users.set(r, k, v),
            EmbCoord::Item(r, k) => m.embeddings.items.set(r, k, v),
        };
        setv(&mut work, cur + FD_STEP);
        let up = loss(&work);
        setv(&mut work, cur - FD_STEP);
        let down = loss(&work);
        setv(&mut work, cur);
        let fd = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic, fd));
    }
    GradCheck { max_rel_err: max_err, checked: coords.len() }
}

/// Check BPR gradients of the summed per-triple loss over `(u, i, j)` triples.
pub fn gradcheck_bpr(emb: &EmbeddingTable, triples: &[(usize, usize, usize)], n_coords: usize, seed: u64) -> GradCheck {
    let d = emb.dim();
    let mut gu: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut gi: HashMap<usize, Vec<f64>> = HashMap::new();
    for &(u, i, j) in triples {
        let s = sigmoid(emb.score(u, i) - emb.score(u, j));
        let gl = s - 1.0;
        let (eu, ei, ej) = (emb.users.row(u), emb.items.row(i), emb.items.row(j));
        let gur = gu.entry(u).or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            gur[k] += gl * (ei[k] - ej[k]);
        }
        let gir = gi.entry(i).or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            gir[k] += gl * eu[k];
        }
        let gjr = gi.entry(j).or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            gjr[k] += -gl * eu[k];
        }
    }
    let mut pool = Vec::new();
    for &u in gu.keys() {
        for k in 0..d {
            pool.push(EmbCoord::User(u, k));
        }
    }
    for &i in gi.keys() {
        for k in 0..d {
            pool.push(EmbCoord::Item(i, k));
        }
    }
    pool.sort_by_key(|c| match *c {
        EmbCoord::User(r, k) => (0, r, k),
        EmbCoord::Item(r, k) => (1, r, k),
    });
    let coords = pick_coords(pool, n_coords, seed);

    let mut work = emb.clone();
    let loss =
        |e: &EmbeddingTable| triples.iter().map(|&(u, i, j)| bpr_triple_loss(e, u, i, j)).sum::<f64>();
    let mut max_err = 0.0f64;
    for c in &coords {
        let (analytic, cur) = match *c {
            EmbCoord::User(r, k) => (gu[&r][k], work.users.get(r, k)),
            EmbCoord::Item(r, k) => (gi[&r][k], work.items.get(r, k)),
        };
        let setv = |e: &mut EmbeddingTable, v: f64| match *c {
            EmbCoord::User(r, k) => e.users.set(r, k, v),
            EmbCoord::Item(r, k) => e.items.set(r, k, v),
        };
        setv(&mut work, cur + FD_STEP);
        let up = loss(&work);
        setv(&mut work, cur - FD_STEP);
        let down = loss(&work);
        setv(&mut work, cur);
        let fd = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic, fd));
    }
    GradCheck { max_rel_err: max_err, checked: coords.len() }
}
