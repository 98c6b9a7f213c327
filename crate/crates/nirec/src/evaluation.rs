//! Steering evaluation: the interaction-probability improvement metric, the
//! neighbor-experience damage metric, trade-off curves per optimizer, the
//! group-adjustment study, and aggregation across target specs.
//!
//! Both metrics judge an exposure assignment under the simulated world's
//! true outcome model, regardless of which predictor chose the assignment.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backbones::EmbeddingTable;
use crate::corpus::SocialGraph;
use crate::estimator::NIRecModel;
use crate::rng::{mix, rng_from};
use crate::simworld::{SimOracle, TargetSpec};
use crate::steering::{
    baseline_direct, baseline_sim, bit_sources, greedy_optimize, materialize, ExperienceContext,
    PotentialPredictor,
};
use crate::{Error, Result};

/// One target user's outcome probability before (no interference) and
/// after (interference under the evaluated assignment) steering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProbs {
    pub user: u32,
    pub before: f64,
    pub after: f64,
}

/// Headline metrics for one assignment plus the per-user probabilities
/// they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ioip: f64,
    pub dtne: f64,
    pub per_user_probs: Vec<UserProbs>,
}

impl MetricReport {
    /// The improvement metric rebuilt from the stored probabilities; always
    /// within 1e-9 of the headline field.
    pub fn recomputed_ioip(&self) -> f64 {
        let n = self.per_user_probs.len() as f64;
        self.per_user_probs.iter().map(|p| (p.after - p.before) / p.before).sum::<f64>() / n
    }
}

/// Mean relative gain in the targets' positive-outcome probability under
/// the world's true model: (1/|U*|) sum of (after - before) / before,
/// where before drops the interference term entirely.
pub fn ioip(oracle: &SimOracle, spec: &TargetSpec, bits: &[bool]) -> Result<f64> {
    Ok(per_user_probs(oracle, spec, bits)?
        .iter()
        .map(|p| (p.after - p.before) / p.before)
        .sum::<f64>()
        / spec.target_users.len() as f64)
}

/// Total experience damage of an assignment: the sum of forced-edit costs
/// over all steerable neighbors. Matches the damage term inside the
/// steering objective by construction.
pub fn dtne(ctx: &ExperienceContext, bits: &[bool]) -> Result<f64> {
    if bits.len() != ctx.neighbors().len() {
        return Err(Error::invalid(format!(
            "assignment has {} bits for {} steerable neighbors",
            bits.len(),
            ctx.neighbors().len()
        )));
    }
    Ok((0..bits.len()).map(|j| ctx.cost(j, bits[j])).sum())
}

/// Evaluate one assignment end to end: per-user probabilities, their mean
/// relative improvement, and the neighbors' total damage.
pub fn metric_report(
    oracle: &SimOracle,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    bits: &[bool],
) -> Result<MetricReport> {
    let per_user_probs = per_user_probs(oracle, spec, bits)?;
    let n = per_user_probs.len() as f64;
    let ioip = per_user_probs.iter().map(|p| (p.after - p.before) / p.before).sum::<f64>() / n;
    Ok(MetricReport { ioip, dtne: dtne(ctx, bits)?, per_user_probs })
}

fn per_user_probs(oracle: &SimOracle, spec: &TargetSpec, bits: &[bool]) -> Result<Vec<UserProbs>> {
    if bits.len() != spec.neighbor_users.len() {
        return Err(Error::invalid(format!(
            "assignment has {} bits for {} steerable neighbors",
            bits.len(),
            spec.neighbor_users.len()
        )));
    }
    let item = spec.target_item as usize;
    let sources = bit_sources(oracle.graph(), spec);
    Ok(spec
        .target_users
        .iter()
        .zip(&sources)
        .map(|(&u, src)| {
            let eta = oracle.eta(u as usize, item);
            UserProbs {
                user: u,
                before: crate::sigmoid(eta),
                after: oracle.outcome_prob_bits(u as usize, item, &materialize(src, bits)),
            }
        })
        .collect())
}

/// The optimizers compared on a trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    NIRec,
    Oracle,
    DirectMf,
    SimMf,
    DirectLgc,
    SimLgc,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::NIRec, Method::Oracle, Method::DirectMf, Method::SimMf, Method::DirectLgc, Method::SimLgc];

    pub fn tag(self) -> &'static str {
        match self {
            Method::NIRec => "NIRec",
            Method::Oracle => "Oracle",
            Method::DirectMf => "Direct-MF",
            Method::SimMf => "Sim-MF",
            Method::DirectLgc => "Direct-LGC",
            Method::SimLgc => "Sim-LGC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method tag `{s}`")))
    }
}

/// One (damage, improvement) measurement on a trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: Method,
    pub gamma: f64,
    pub ioip: f64,
    pub dtne: f64,
}

/// Models the curve methods draw on. Only the fields a requested method
/// touches need to be present.
#[derive(Debug, Clone, Copy)]
pub struct MethodInputs<'a> {
    pub nirec: Option<&'a NIRecModel>,
    pub mf: Option<&'a EmbeddingTable>,
    pub lgc: Option<&'a EmbeddingTable>,
    /// Interference strength the Sim-* baselines assume in their surrogate
    /// world; normally the evaluation world's own beta.
    pub sim_beta: f64,
}

fn need<'a, T>(opt: Option<&'a T>, method: Method, what: &str) -> Result<&'a T> {
    opt.ok_or_else(|| Error::invalid(format!("the {method} curve needs {what}")))
}

fn method_bits(
    oracle: &SimOracle,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    method: Method,
    gamma: f64,
    inputs: &MethodInputs<'_>,
) -> Result<Vec<bool>> {
    let graph = oracle.graph();
    let bits = match method {
        Method::Oracle => greedy_optimize(oracle, spec, ctx, gamma)?.assignment.bits,
        Method::NIRec => {
            let model = need(inputs.nirec, method, "a trained estimator")?;
            greedy_optimize(model, spec, ctx, gamma)?.assignment.bits
        }
        Method::DirectMf => baseline_direct(need(inputs.mf, method, "backbone embeddings")?, spec, ctx, gamma)?.bits,
        Method::DirectLgc => {
            baseline_direct(need(inputs.lgc, method, "backbone embeddings")?, spec, ctx, gamma)?.bits
        }
        Method::SimMf => {
            baseline_sim(need(inputs.mf, method, "backbone embeddings")?, graph, spec, ctx, gamma, inputs.sim_beta)?
                .bits
        }
        Method::SimLgc => {
            baseline_sim(need(inputs.lgc, method, "backbone embeddings")?, graph, spec, ctx, gamma, inputs.sim_beta)?
                .bits
        }
    };
    Ok(bits)
}

/// Run one method's optimizer at every grid penalty and score each chosen
/// assignment under the true world. Grid entries are solved independently,
/// so the grid needs no particular order.
pub fn build_curve(
    oracle: &SimOracle,
    spec: &TargetSpec,
    ctx: &ExperienceContext,
    method: Method,
    gamma_grid: &[f64],
    inputs: &MethodInputs<'_>,
) -> Result<Vec<CurvePoint>> {
    if gamma_grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if gamma_grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::invalid("gamma grid entries must be finite and nonnegative"));
    }
    gamma_grid
        .iter()
        .map(|&gamma| {
            let bits = method_bits(oracle, spec, ctx, method, gamma, inputs)?;
            Ok(CurvePoint { method, gamma, ioip: ioip(oracle, spec, &bits)?, dtne: dtne(ctx, &bits)? })
        })
        .collect()
}

/// How a member's exposure is priced when ranking group members by the
/// harm they do to fellow members' steering odds.
pub enum ImpactScorer<'a> {
    /// Closed form from the world model: each member v that trusts u
    /// receives affinity(v,u) * eta(u, i*) / sqrt(|N_v|) from u's exposure.
    Oracle(&'a SimOracle),
    /// Learned estimator: u's contribution to v is the leave-one-exposure-
    /// out difference of the predicted potential, holding every other unit
    /// at its organic exposure.
    NIRec { model: &'a NIRecModel, ctx: &'a ExperienceContext },
}

impl ImpactScorer<'_> {
    fn graph(&self) -> &Arc<SocialGraph> {
        match self {
            ImpactScorer::Oracle(oracle) => oracle.graph(),
            ImpactScorer::NIRec { model, .. } => model.graph(),
        }
    }
}

/// Total harm member u's exposure does to fellow group members: the sum of
/// min(0, contribution) over members that trust u. Positive contributions
/// do not offset negative ones.
pub fn negative_impact(scorer: &ImpactScorer<'_>, u: u32, spec: &TargetSpec) -> Result<f64> {
    if !spec.target_users.contains(&u) {
        return Err(Error::invalid(format!("user {u} is not in the target group")));
    }
    let graph = Arc::clone(scorer.graph());
    let item = spec.target_item as usize;
    let sources = match scorer {
        ImpactScorer::NIRec { .. } => bit_sources(&graph, spec),
        ImpactScorer::Oracle(_) => Vec::new(),
    };
    let mut total = 0.0;
    for (idx, &v) in spec.target_users.iter().enumerate() {
        if v == u {
            continue;
        }
        let nbrs = graph.nbrs(v as usize);
        let Some(pos) = nbrs.iter().position(|&w| w == u as usize) else {
            continue;
        };
        let contribution = match scorer {
            ImpactScorer::Oracle(oracle) => {
                oracle.affinity(v as usize, u as usize) * oracle.eta(u as usize, item)
                    / (nbrs.len() as f64).sqrt()
            }
            ImpactScorer::NIRec { model, ctx } => {
                let mut bits = materialize(&sources[idx], &ctx.observed_bits());
                bits[pos] = true;
                let on = model.predict(v as usize, item, &bits);
                bits[pos] = false;
                on - model.predict(v as usize, item, &bits)
            }
        };
        total += contribution.min(0.0);
    }
    Ok(total)
}

/// How the members whose in-group edges get cut are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjustStrategy {
    HighestNegativeImpact,
    Random,
}

impl AdjustStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            AdjustStrategy::HighestNegativeImpact => "highest-negative-impact",
            AdjustStrategy::Random => "random",
        }
    }
}

impl fmt::Display for AdjustStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AdjustStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [AdjustStrategy::HighestNegativeImpact, AdjustStrategy::Random]
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown adjustment strategy `{s}`")))
    }
}

/// Result of the group-adjustment study's edge surgery. Membership never
/// changes; only the selected members' influence edges into the group are
/// severed, so the improvement metric keeps its denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdjustment {
    pub strategy: AdjustStrategy,
    /// Members whose outgoing influence into the group is cut, ascending.
    pub removed_or_cut: Vec<u32>,
    /// Severed trust edges as (truster, trusted) pairs, ascending.
    pub cut_edges: Vec<(u32, u32)>,
    pub adjusted_spec: TargetSpec,
}

impl GroupAdjustment {
    /// The social graph with the selected influence edges removed.
    pub fn apply(&self, graph: &SocialGraph) -> SocialGraph {
        let cut: Vec<(usize, usize)> =
            self.cut_edges.iter().map(|&(v, u)| (v as usize, u as usize)).collect();
        graph.without_edges(&cut)
    }
}

/// Pick n_remove group members (worst negative impact first, or seeded
/// uniform) and cut their influence edges into the rest of the group.
pub fn adjust_group(
    scorer: &ImpactScorer<'_>,
    spec: &TargetSpec,
    strategy: AdjustStrategy,
    n_remove: usize,
    seed: u64,
) -> Result<GroupAdjustment> {
    if n_remove >= spec.target_users.len() {
        return Err(Error::invalid(format!(
            "cannot cut {n_remove} of {} group members; at least one must keep its edges",
            spec.target_users.len()
        )));
    }
    let mut selected: Vec<u32> = match strategy {
        AdjustStrategy::HighestNegativeImpact => {
            let mut scored: Vec<(f64, u32)> = spec
                .target_users
                .iter()
                .map(|&u| Ok((negative_impact(scorer, u, spec)?, u)))
                .collect::<Result<_>>()?;
            // Most harmful first; zero-impact members only ever fill leftover
            // slots after every negative one.
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scored.into_iter().take(n_remove).map(|(_, u)| u).collect()
        }
        AdjustStrategy::Random => {
            use rand::seq::SliceRandom;
            let mut pool = spec.target_users.clone();
            pool.shuffle(&mut rng_from(mix(seed, 0x9d31)));
            pool.into_iter().take(n_remove).collect()
        }
    };
    selected.sort_unstable();

    let graph = scorer.graph();
    let mut cut_edges = Vec::new();
    for &v in &spec.target_users {
        let nbrs = graph.nbrs(v as usize);
        for &u in &selected {
            if u != v && nbrs.contains(&(u as usize)) {
                cut_edges.push((v, u));
            }
        }
    }
    cut_edges.sort_unstable();

    Ok(GroupAdjustment { strategy, removed_or_cut: selected, cut_edges, adjusted_spec: spec.clone() })
}

/// One evaluated curve point tagged with the cell it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: Method,
    pub gamma: f64,
    pub group_size: usize,
    pub beta: f64,
    pub t: f64,
    pub ioip: f64,
    pub dtne: f64,
}

/// Mean and standard error of every metric in one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub gamma: f64,
    pub group_size: usize,
    pub beta: f64,
    pub t: f64,
    pub ioip_mean: f64,
    pub ioip_se: f64,
    pub dtne_mean: f64,
    pub dtne_se: f64,
    pub n_specs: usize,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    // Sample variance (n-1 denominator); SE of the mean.
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Average per-spec measurements within each (method, gamma, group size,
/// beta, t) cell. Cells come back in a deterministic sorted order.
pub fn aggregate(rows: &[CurveRow]) -> Result<Vec<CellSummary>> {
    if rows.is_empty() {
        return Err(Error::invalid("no curve rows to aggregate"));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let key = |r: &CurveRow| (r.method, r.group_size, r.beta, r.t, r.gamma);
    order.sort_by(|&a, &b| {
        let (ma, ga, ba, ta, xa) = key(&rows[a]);
        let (mb, gb, bb, tb, xb) = key(&rows[b]);
        ma.cmp(&mb)
            .then(ga.cmp(&gb))
            .then(ba.total_cmp(&bb))
            .then(ta.total_cmp(&tb))
            .then(xa.total_cmp(&xb))
    });
    let mut cells = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let head = &rows[order[start]];
        let mut end = start + 1;
        while end < order.len() && key(&rows[order[end]]) == key(head) {
            end += 1;
        }
        let ioips: Vec<f64> = order[start..end].iter().map(|&i| rows[i].ioip).collect();
        let dtnes: Vec<f64> = order[start..end].iter().map(|&i| rows[i].dtne).collect();
        let (ioip_mean, ioip_se) = mean_se(&ioips);
        let (dtne_mean, dtne_se) = mean_se(&dtnes);
        cells.push(CellSummary {
            method: head.method,
            gamma: head.gamma,
            group_size: head.group_size,
            beta: head.beta,
            t: head.t,
            ioip_mean,
            ioip_se,
            dtne_mean,
            dtne_se,
            n_specs: end - start,
        });
        start = end;
    }
    Ok(cells)
}

pub const CURVE_CSV_HEADER: &str =
    "method,gamma,group_size,beta,t,ioip_mean,ioip_se,dtne_mean,dtne_se,n_specs";

/// Render aggregated cells as CSV with a pinned column order.
pub fn curve_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.method, c.gamma, c.group_size, c.beta, c.t, c.ioip_mean, c.ioip_se, c.dtne_mean, c.dtne_se, c.n_specs
        ));
    }
    out
}
