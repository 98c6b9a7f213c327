//! Interference-aware potential-outcome estimator. A prediction for user u
//! on item i concatenates an individual representation (e_u elementwise e_i)
//! with an interference representation: a learned d-by-d mix of the
//! treatment-masked, attention-weighted neighbor representations. Attention
//! over the neighborhood is a linear quotient, not a softmax, with a uniform
//! fallback when the denominator cancels. Training minimizes cross-entropy
//! on observed exposures with fully analytic gradients, including through
//! the attention quotient.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::backbones::{EmbeddingTable, TrainConfig};
use crate::corpus::SocialGraph;
use crate::mat::{dot, Mat};
use crate::optim::{run_descent, Descend, TrainTrace};
use crate::rng::{mix, rng_from};
use crate::simworld::{ExposureMatrix, SemiSyntheticRecord};
use crate::{sigmoid, Error, Result};

/// Init scale for embeddings and the mix matrix.
pub const NIREC_INIT_STD: f64 = 0.1;

/// Init mean for embeddings. Attention denominators are sums of
/// w-weighted embedding coordinates; a positive shared mean keeps every
/// user's denominator at order one from the first step instead of leaving
/// it a zero-mean sum that lands arbitrarily close to the singularity.
/// Attention weights are invariant under a global sign flip of w, so a
/// positive-denominator start concedes no expressiveness.
pub const EMB_INIT_MEAN: f64 = 0.2;

/// Init distribution for the attention vector: mostly-positive entries,
/// matching the positive embedding mean so denominators start with margin.
pub const ATTN_INIT_MEAN: f64 = 0.7;
pub const ATTN_INIT_STD: f64 = 0.25;

/// Attention denominators smaller than this in magnitude trigger the
/// uniform fallback.
pub const ATTENTION_EPS: f64 = 1e-8;

/// One supervised unit: an exposed pair, its binary feedback, and the
/// exposure bits of the user's neighbors for this item (aligned to
/// `graph.nbrs(user)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub user: u32,
    pub item: u32,
    pub y: bool,
    pub neighbor_treatments: Vec<bool>,
}

/// Build training samples from generated feedback: one sample per observed
/// record, with neighbor treatments read off the exposure matrix.
pub fn samples_from_feedback(
    records: &[SemiSyntheticRecord],
    exposure: &ExposureMatrix,
    graph: &SocialGraph,
) -> Vec<TrainSample> {
    records
        .iter()
        .map(|r| TrainSample {
            user: r.user,
            item: r.item,
            y: r.y,
            neighbor_treatments: exposure.neighbor_bits(graph, r.user as usize, r.item as usize),
        })
        .collect()
}

/// Serializable parameter container; the social graph is re-attached on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NIRecCheckpoint {
    pub emb: EmbeddingTable,
    pub w_mix: Mat,
    pub attn: Vec<f64>,
    pub degenerate_hits: u64,
}

#[derive(Debug)]
pub struct NIRecModel {
    emb: EmbeddingTable,
    /// d-by-d interference mix applied to the aggregated neighbor vector.
    w_mix: Mat,
    /// 2d attention weights over [e_u || e_u'].
    attn: Vec<f64>,
    graph: Arc<SocialGraph>,
    /// Number of predictions that hit the uniform attention fallback.
    degenerate_hits: AtomicU64,
}

impl Clone for NIRecModel {
    fn clone(&self) -> Self {
        NIRecModel {
            emb: self.emb.clone(),
            w_mix: self.w_mix.clone(),
            attn: self.attn.clone(),
            graph: Arc::clone(&self.graph),
            degenerate_hits: AtomicU64::new(self.degenerate_hits.load(Ordering::Relaxed)),
        }
    }
}

impl NIRecModel {
    pub fn random(n_users: usize, n_items: usize, dim: usize, graph: Arc<SocialGraph>, seed: u64) -> Result<Self> {
        if graph.n_users() != n_users {
            return Err(Error::invalid("graph size does not match n_users"));
        }
        let emb = EmbeddingTable::random(n_users, n_items, dim, EMB_INIT_MEAN, NIREC_INIT_STD, mix(seed, 0xe5));
        let mut prng = rng_from(mix(seed, 0xe6));
        use rand_distr::Distribution;
        let normal = rand_distr::Normal::new(0.0, NIREC_INIT_STD).expect("finite init parameters");
        let wide = rand_distr::Normal::new(ATTN_INIT_MEAN, ATTN_INIT_STD).expect("finite init parameters");
        let w_mix = Mat::from_fn(dim, dim, |_, _| normal.sample(&mut prng));
        let attn = (0..2 * dim).map(|_| wide.sample(&mut prng)).collect();
        Ok(NIRecModel { emb, w_mix, attn, graph, degenerate_hits: AtomicU64::new(0) })
    }

    /// Start from pre-trained embeddings; the mix and attention parameters
    /// are still drawn fresh.
    pub fn warm_start(emb: EmbeddingTable, graph: Arc<SocialGraph>, seed: u64) -> Result<Self> {
        if graph.n_users() != emb.n_users() {
            return Err(Error::invalid("graph size does not match the embedding table"));
        }
        let dim = emb.dim();
        let mut model = NIRecModel::random(emb.n_users(), emb.n_items(), dim, graph, seed)?;
        model.emb = emb;
        Ok(model)
    }

    pub fn from_checkpoint(ck: NIRecCheckpoint, graph: Arc<SocialGraph>) -> Result<Self> {
        let d = ck.emb.dim();
        if ck.w_mix.rows() != d || ck.w_mix.cols() != d || ck.attn.len() != 2 * d {
            return Err(Error::invalid("checkpoint parameter shapes disagree"));
        }
        if graph.n_users() != ck.emb.n_users() {
            return Err(Error::invalid("checkpoint does not match the social graph"));
        }
        Ok(NIRecModel {
            emb: ck.emb,
            w_mix: ck.w_mix,
            attn: ck.attn,
            graph,
            degenerate_hits: AtomicU64::new(ck.degenerate_hits),
        })
    }

    pub fn to_checkpoint(&self) -> NIRecCheckpoint {
        NIRecCheckpoint {
            emb: self.emb.clone(),
            w_mix: self.w_mix.clone(),
            attn: self.attn.clone(),
            degenerate_hits: self.degenerate_hits.load(Ordering::Relaxed),
        }
    }

    pub fn dim(&self) -> usize {
        self.emb.dim()
    }

    pub fn n_users(&self) -> usize {
        self.emb.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.emb.n_items()
    }

    pub fn graph(&self) -> &Arc<SocialGraph> {
        &self.graph
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.emb
    }

    pub fn degeneracy_count(&self) -> u64 {
        self.degenerate_hits.load(Ordering::Relaxed)
    }

    /// Elementwise product e_u * e_i.
    pub fn individual_rep(&self, u: usize, i: usize) -> Vec<f64> {
        let (eu, ei) = (self.emb.users.row(u), self.emb.items.row(i));
        eu.iter().zip(ei).map(|(a, b)| a * b).collect()
    }

    /// Raw attention numerator for one neighbor.
    fn attn_num(&self, u: usize, v: usize) -> f64 {
        let d = self.dim();
        let (eu, ev) = (self.emb.users.row(u), self.emb.users.row(v));
        dot(&self.attn[..d], eu) + dot(&self.attn[d..], ev)
    }

    /// Attention weights over all of N_u in neighbor order, plus whether the
    /// uniform fallback fired. Weights always sum to 1.
    pub fn attention_vector(&self, u: usize) -> (Vec<f64>, bool) {
        let nbrs = self.graph.nbrs(u);
        if nbrs.is_empty() {
            return (Vec::new(), false);
        }
        let nums: Vec<f64> = nbrs.iter().map(|&v| self.attn_num(u, v)).collect();
        let z: f64 = nums.iter().sum();
        if z.abs() < ATTENTION_EPS {
            self.degenerate_hits.fetch_add(1, Ordering::Relaxed);
            let k = nbrs.len() as f64;
            return (vec![1.0 / k; nbrs.len()], true);
        }
        (nums.iter().map(|c| c / z).collect(), false)
    }

    /// Attention weight of one edge; errors when v is not a neighbor of u.
    pub fn attention_weight(&self, u: usize, v: usize) -> Result<f64> {
        let nbrs = self.graph.neighbors(u)?;
        let pos = nbrs
            .binary_search(&v)
            .map_err(|_| Error::invalid(format!("user {v} is not a neighbor of user {u}")))?;
        Ok(self.attention_vector(u).0[pos])
    }

    /// Treatment-masked aggregate before the mix: sum over treated neighbors
    /// of a_{uv} * (e_v * e_i).
    fn masked_sum(&self, u: usize, i: usize, bits: &[bool]) -> Vec<f64> {
        let d = self.dim();
        let nbrs = self.graph.nbrs(u);
        debug_assert_eq!(bits.len(), nbrs.len());
        let mut h = vec![0.0; d];
        if nbrs.is_empty() || bits.iter().all(|b| !b) {
            return h;
        }
        let (a, _) = self.attention_vector(u);
        let ei = self.emb.items.row(i);
        for ((&v, &on), &av) in nbrs.iter().zip(bits).zip(&a) {
            if on {
                let ev = self.emb.users.row(v);
                for t in 0..d {
                    h[t] += av * ev[t] * ei[t];
                }
            }
        }
        h
    }

    /// Interference representation g = W * masked aggregate; zero when the
    /// neighborhood is empty or fully untreated.
    pub fn interference_rep(&self, u: usize, i: usize, bits: &[bool]) -> Vec<f64> {
        self.w_mix.matvec(&self.masked_sum(u, i, bits))
    }

    /// Predicted probability of positive feedback under the given neighbor
    /// treatments: sigma of the sum of both representations' entries.
    pub fn predict_potential(&self, u: usize, i: usize, bits: &[bool]) -> f64 {
        let ind: f64 = self.individual_rep(u, i).iter().sum();
        let inter: f64 = self.interference_rep(u, i, bits).iter().sum();
        sigmoid(ind + inter)
    }

    /// Mean cross-entropy of the model on a sample set.
    pub fn cross_entropy(&self, samples: &[TrainSample]) -> f64 {
        let total: f64 = samples
            .iter()
            .map(|s| {
                let p = self.predict_potential(s.user as usize, s.item as usize, &s.neighbor_treatments);
                if s.y {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum();
        total / samples.len() as f64
    }
}

/// Per-sample analytic gradients; neighbor rows are keyed by user id.
struct SampleGrads {
    d_eu: Vec<f64>,
    d_ei: Vec<f64>,
    d_nbrs: Vec<(usize, Vec<f64>)>,
    d_w_mix: Mat,
    d_attn: Vec<f64>,
}

/// Forward pass plus analytic gradients of the per-sample cross-entropy.
/// The attention quotient contributes (G_j - sum_k G_k a_k) / Z to each
/// numerator's gradient; the uniform fallback branch is constant in the
/// attention parameters, so it contributes nothing.
fn sample_grads(model: &NIRecModel, s: &TrainSample, w_grad_scale: f64) -> SampleGrads {
    let d = model.dim();
    let (u, i) = (s.user as usize, s.item as usize);
    let nbrs = model.graph.nbrs(u);
    let bits = &s.neighbor_treatments;
    debug_assert_eq!(bits.len(), nbrs.len());

    let eu = model.emb.users.row(u).to_vec();
    let ei = model.emb.items.row(i).to_vec();

    // Forward.
    let nums: Vec<f64> = nbrs.iter().map(|&v| model.attn_num(u, v)).collect();
    let z_att: f64 = nums.iter().sum();
    let degenerate = nbrs.is_empty() || z_att.abs() < ATTENTION_EPS;
    let a: Vec<f64> = if degenerate {
        vec![1.0 / nbrs.len().max(1) as f64; nbrs.len()]
    } else {
        nums.iter().map(|c| c / z_att).collect()
    };
    let mut h = vec![0.0; d];
    for ((&v, &on), &av) in nbrs.iter().zip(bits).zip(&a) {
        if on {
            let ev = model.emb.users.row(v);
            for t in 0..d {
                h[t] += av * ev[t] * ei[t];
            }
        }
    }
    let g = model.w_mix.matvec(&h);
    let logit: f64 = eu.iter().zip(&ei).map(|(a, b)| a * b).sum::<f64>() + g.iter().sum::<f64>();
    let p = sigmoid(logit);
    let r = p - f64::from(u8::from(s.y));

    // Backward. d(logit)/d(entry sums) is 1 everywhere, so everything scales r.
    let mut d_eu: Vec<f64> = ei.iter().map(|b| r * b).collect();
    let mut d_ei: Vec<f64> = eu.iter().map(|a| r * a).collect();

    // Through g = W h: the logit sums g's entries, so dL/dW is rank-1 in h
    // and dL/dh is W's column sums.
    let mut d_w_mix = Mat::zeros(d, d);
    for row in 0..d {
        for col in 0..d {
            d_w_mix.set(row, col, w_grad_scale * r * h[col]);
        }
    }
    let col_sums = model.w_mix.col_sums();
    let dh: Vec<f64> = col_sums.iter().map(|c| r * c).collect();

    let mut d_nbrs: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut d_attn = vec![0.0; 2 * d];
    if !nbrs.is_empty() {
        // Per-neighbor scalar gradient on the attention weight.
        let mut g_att = vec![0.0; nbrs.len()];
        for (k, (&v, &on)) in nbrs.iter().zip(bits).enumerate() {
            if !on {
                continue;
            }
            let ev = model.emb.users.row(v);
            // dL/da_k = dh . (e_v * e_i); dL/de_v gets the masked a_k term.
            let mut dv = vec![0.0; d];
            let mut da = 0.0;
            for t in 0..d {
                da += dh[t] * ev[t] * ei[t];
                dv[t] = a[k] * dh[t] * ei[t];
                d_ei[t] += a[k] * dh[t] * ev[t];
            }
            g_att[k] = da;
            d_nbrs.push((v, dv));
        }
        if !degenerate {
            let weighted: f64 = g_att.iter().zip(&a).map(|(g, a)| g * a).sum();
            for (k, &v) in nbrs.iter().enumerate() {
                let dc = (g_att[k] - weighted) / z_att;
                if dc == 0.0 {
                    continue;
                }
                let ev = model.emb.users.row(v);
                for t in 0..d {
                    d_attn[t] += dc * eu[t];
                    d_attn[d + t] += dc * ev[t];
                    d_eu[t] += dc * model.attn[t];
                }
                let dvrow: Vec<f64> = model.attn[d..].iter().map(|w| dc * w).collect();
                match d_nbrs.iter_mut().find(|(id, _)| *id == v) {
                    Some((_, dv)) => {
                        for t in 0..d {
                            dv[t] += dvrow[t];
                        }
                    }
                    None => d_nbrs.push((v, dvrow)),
                }
            }
        }
    }

    SampleGrads { d_eu, d_ei, d_nbrs, d_w_mix, d_attn }
}

/// Caps on gradient L2 norms: per sample before accumulation, and on the
/// batch mean before stepping. The linear attention quotient divides by a
/// denominator with zero crossings in parameter space, so one near-singular
/// neighborhood can spike a batch gradient by the reciprocal. The clip
/// rescales the whole batch mean, never individual samples, so the update
/// direction stays the true steepest descent and the halving rule can do its
/// backtracking against a real descent direction.
const GRAD_CLIP: f64 = 1.0;

struct NIRecDescent<'a> {
    model: NIRecModel,
    samples: &'a [TrainSample],
    cfg: &'a TrainConfig,
    order: Vec<u32>,
}

struct ParamSnapshot {
    emb: EmbeddingTable,
    w_mix: Mat,
    attn: Vec<f64>,
}

impl Descend for NIRecDescent<'_> {
    type Snapshot = ParamSnapshot;

    fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot { emb: self.model.emb.clone(), w_mix: self.model.w_mix.clone(), attn: self.model.attn.clone() }
    }

    fn restore(&mut self, snap: ParamSnapshot) {
        self.model.emb = snap.emb;
        self.model.w_mix = snap.w_mix;
        self.model.attn = snap.attn;
    }

    fn epoch(&mut self, _epoch: usize, lr: f64) {
        let d = self.model.dim();
        let l2 = self.cfg.l2_reg;
        for batch in self.order.chunks(self.cfg.batch_size) {
            let mut gu: HashMap<usize, Vec<f64>> = HashMap::new();
            let mut gi: HashMap<usize, Vec<f64>> = HashMap::new();
            let mut gw = Mat::zeros(d, d);
            let mut ga = vec![0.0; 2 * d];
            for &idx in batch {
                let s = &self.samples[idx as usize];
                let grads = sample_grads(&self.model, s, 1.0);
                let (u, i) = (s.user as usize, s.item as usize);
                let gu_row = gu.entry(u).or_insert_with(|| vec![0.0; d]);
                for t in 0..d {
                    gu_row[t] += grads.d_eu[t];
                }
                let gi_row = gi.entry(i).or_insert_with(|| vec![0.0; d]);
                for t in 0..d {
                    gi_row[t] += grads.d_ei[t];
                }
                for (v, dv) in grads.d_nbrs {
                    let gv_row = gu.entry(v).or_insert_with(|| vec![0.0; d]);
                    for t in 0..d {
                        gv_row[t] += dv[t];
                    }
                }
                for (acc, dw) in gw.data_mut().iter_mut().zip(grads.d_w_mix.data()) {
                    *acc += dw;
                }
                for (acc, da) in ga.iter_mut().zip(&grads.d_attn) {
                    *acc += da;
                }
            }
            let inv_b = 1.0 / batch.len() as f64;
            let sq: f64 = gu
                .values()
                .chain(gi.values())
                .flatten()
                .chain(gw.data())
                .chain(&ga)
                .map(|g| (g * inv_b).powi(2))
                .sum();
            let norm = sq.sqrt();
            let clip = if norm > GRAD_CLIP { GRAD_CLIP / norm } else { 1.0 };
            let scale = -lr * clip * inv_b;
            for (u, g) in gu {
                crate::mat::axpy(self.model.emb.users.row_mut(u), scale, &g);
            }
            for (i, g) in gi {
                crate::mat::axpy(self.model.emb.items.row_mut(i), scale, &g);
            }
            crate::mat::axpy(self.model.w_mix.data_mut(), scale, gw.data());
            crate::mat::axpy(&mut self.model.attn, scale, &ga);
            // Decoupled L2 on every parameter, matching the penalty in eval.
            if l2 > 0.0 {
                let shrink = 1.0 - 2.0 * l2 * lr;
                for x in self
                    .model
                    .emb
                    .users
                    .data_mut()
                    .iter_mut()
                    .chain(self.model.emb.items.data_mut())
                    .chain(self.model.w_mix.data_mut())
                    .chain(&mut self.model.attn)
                {
                    *x *= shrink;
                }
            }
        }
    }

    fn eval(&self) -> f64 {
        let sq: f64 = self
            .model
            .emb
            .users
            .data()
            .iter()
            .chain(self.model.emb.items.data())
            .chain(self.model.w_mix.data())
            .chain(&self.model.attn)
            .map(|x| x * x)
            .sum();
        self.model.cross_entropy(self.samples) + self.cfg.l2_reg * sq
    }
}

/// Train the estimator on observed exposures by seeded mini-batch descent on
/// mean cross-entropy. `start` carries the initialization (random or warm).
pub fn train_nirec(start: NIRecModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<(NIRecModel, TrainTrace)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if start.dim() != cfg.dim {
        return Err(Error::invalid("model dim does not match the training config"));
    }
    for s in samples {
        if s.user as usize >= start.n_users() || s.item as usize >= start.n_items() {
            return Err(Error::invalid(format!("sample ({}, {}) out of range", s.user, s.item)));
        }
        if s.neighbor_treatments.len() != start.graph.nbrs(s.user as usize).len() {
            return Err(Error::invalid(format!("sample ({}, {}) treatment bits misaligned", s.user, s.item)));
        }
    }
    // One seeded shuffle, then fixed batches: every epoch is the same
    // deterministic map, so an epoch-end loss rise always means a genuine
    // overshoot and never sampling noise.
    let mut order: Vec<u32> = (0..samples.len() as u32).collect();
    order.shuffle(&mut rng_from(mix(cfg.seed, 0xe57)));
    let mut task = NIRecDescent { model: start, samples, cfg, order };
    let trace = run_descent(&mut task, cfg.epochs, cfg.learning_rate);
    if trace.diverged {
        return Err(Error::Diverged { accepted: trace.epoch_loss.len() });
    }
    Ok((task.model, trace))
}

/// Result of an analytic-vs-finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

const FD_STEP: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

/// Which parameter a single checked coordinate lives in.
#[derive(Clone, Copy)]
enum Coord {
    User(usize, usize),
    Item(usize, usize),
    Mix(usize, usize),
    Attn(usize),
}

fn coord_get(model: &NIRecModel, c: Coord) -> f64 {
    match c {
        Coord::User(r, t) => model.emb.users.get(r, t),
        Coord::Item(r, t) => model.emb.items.get(r, t),
        Coord::Mix(r, t) => model.w_mix.get(r, t),
        Coord::Attn(t) => model.attn[t],
    }
}

fn coord_set(model: &mut NIRecModel, c: Coord, v: f64) {
    match c {
        Coord::User(r, t) => model.emb.users.set(r, t, v),
        Coord::Item(r, t) => model.emb.items.set(r, t, v),
        Coord::Mix(r, t) => model.w_mix.set(r, t, v),
        Coord::Attn(t) => model.attn[t] = v,
    }
}

fn sample_loss(model: &NIRecModel, s: &TrainSample) -> f64 {
    let p = model.predict_potential(s.user as usize, s.item as usize, &s.neighbor_treatments);
    if s.y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn grad_coord(grads: &SampleGrads, s: &TrainSample, model: &NIRecModel, c: Coord) -> f64 {
    let (u, i) = (s.user as usize, s.item as usize);
    match c {
        Coord::User(r, t) if r == u => grads.d_eu[t],
        Coord::User(r, t) => grads.d_nbrs.iter().find(|(id, _)| *id == r).map_or(0.0, |(_, g)| g[t]),
        Coord::Item(r, t) if r == i => grads.d_ei[t],
        Coord::Item(_, _) => 0.0,
        Coord::Mix(r, t) => grads.d_w_mix.get(r, t),
        Coord::Attn(t) => {
            let _ = model;
            grads.d_attn[t]
        }
    }
}

fn gradient_check_scaled(model: &NIRecModel, s: &TrainSample, n_coords: usize, seed: u64, w_grad_scale: f64) -> GradCheckReport {
    let d = model.dim();
    let u = s.user as usize;
    let i = s.item as usize;
    let mut pool: Vec<Coord> = Vec::new();
    for t in 0..d {
        pool.push(Coord::User(u, t));
        pool.push(Coord::Item(i, t));
        for &v in model.graph.nbrs(u) {
            pool.push(Coord::User(v, t));
        }
        for r in 0..d {
            pool.push(Coord::Mix(r, t));
        }
    }
    for t in 0..2 * d {
        pool.push(Coord::Attn(t));
    }
    let mut rng = rng_from(mix(seed, 0x6c));
    pool.shuffle(&mut rng);
    pool.truncate(n_coords.max(1).min(pool.len()));

    let grads = sample_grads(model, s, w_grad_scale);
    let mut probe = model.clone();
    let mut max_err = 0.0f64;
    for &c in &pool {
        let orig = coord_get(&probe, c);
        coord_set(&mut probe, c, orig + FD_STEP);
        let up = sample_loss(&probe, s);
        coord_set(&mut probe, c, orig - FD_STEP);
        let down = sample_loss(&probe, s);
        coord_set(&mut probe, c, orig);
        let fd = (up - down) / (2.0 * FD_STEP);
        let analytic = grad_coord(&grads, s, model, c);
        let e = rel_err(analytic, fd);
        if e > max_err {
            max_err = e;
        }
    }
    GradCheckReport { max_rel_err: max_err, checked: pool.len() }
}

/// Compare analytic per-sample gradients against central finite differences
/// on up to `n_coords` randomly chosen coordinates spanning the user row,
/// item row, neighbor rows, the mix matrix, and the attention vector.
pub fn gradient_check(model: &NIRecModel, s: &TrainSample, n_coords: usize, seed: u64) -> GradCheckReport {
    gradient_check_scaled(model, s, n_coords, seed, 1.0)
}
