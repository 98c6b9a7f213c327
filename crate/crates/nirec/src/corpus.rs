//! Rating/trust corpus handling: text loading, k-core filtering with dense
//! re-identification, the directed trust graph, and summary statistics.
//!
//! Conventions fixed here and relied on everywhere else:
//! - ids are dense and 0-based after `k_core_filter`, assigned by ascending
//!   raw id;
//! - a trust edge (a, b) means "a trusts b", so b influences a and b appears
//!   in `neighbors(a)`;
//! - neighbor lists are sorted ascending and never contain the user itself.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;

/// One (user, item, rating) triple. Ids are raw as loaded, dense after
/// `k_core_filter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Split on any run of whitespace or commas.
    Auto,
    Comma,
    Whitespace,
}

/// Which columns of a delimited text file hold user, item, and rating.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub delimiter: Delimiter,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec { user: 0, item: 1, rating: 2, delimiter: Delimiter::Auto }
    }
}

fn split_line(line: &str, delim: Delimiter) -> Vec<&str> {
    match delim {
        Delimiter::Auto => line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect(),
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Whitespace => line.split_whitespace().collect(),
    }
}

#[derive(Debug, Clone)]
pub struct LoadedRatings {
    pub records: Vec<InteractionRecord>,
    /// Ratings that fell outside [1, 5] and were clamped.
    pub clamp_warnings: usize,
}

/// Parse a ratings file. Raw ids are preserved; blank lines are skipped;
/// any malformed line is an error. Out-of-range ratings are clamped into
/// [1, 5] and counted.
pub fn load_ratings(path: &Path, cols: &ColumnSpec) -> Result<LoadedRatings> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let needed = cols.user.max(cols.item).max(cols.rating) + 1;
    let mut records = Vec::new();
    let mut clamp_warnings = 0usize;
    for (idx, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields = split_line(line, cols.delimiter);
        let err = |msg: String| Error::Parse { path: path.display().to_string(), line: idx + 1, msg };
        if fields.len() < needed {
            return Err(err(format!("expected at least {needed} fields, found {}", fields.len())));
        }
        let user: usize = fields[cols.user].parse().map_err(|_| err(format!("bad user id {:?}", fields[cols.user])))?;
        let item: usize = fields[cols.item].parse().map_err(|_| err(format!("bad item id {:?}", fields[cols.item])))?;
        let rating: f64 =
            fields[cols.rating].parse().map_err(|_| err(format!("bad rating {:?}", fields[cols.rating])))?;
        if !rating.is_finite() {
            return Err(err(format!("non-finite rating {rating}")));
        }
        let clamped = rating.clamp(RATING_MIN, RATING_MAX);
        if clamped != rating {
            clamp_warnings += 1;
        }
        records.push(InteractionRecord { user, item, rating: clamped });
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("{}: no rating records", path.display())));
    }
    Ok(LoadedRatings { records, clamp_warnings })
}

#[derive(Debug, Clone)]
pub struct LoadedTrust {
    /// Directed (truster, trustee) pairs, deduplicated.
    pub edges: HashSet<(usize, usize)>,
    /// Self-loops dropped during loading.
    pub self_loop_warnings: usize,
}

/// Parse a trust-edge file of (truster, trustee) id pairs.
pub fn load_trust(path: &Path) -> Result<LoadedTrust> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = HashSet::new();
    let mut self_loop_warnings = 0usize;
    for (idx, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields = split_line(line, Delimiter::Auto);
        let err = |msg: String| Error::Parse { path: path.display().to_string(), line: idx + 1, msg };
        if fields.len() < 2 {
            return Err(err("expected two ids".into()));
        }
        let a: usize = fields[0].parse().map_err(|_| err(format!("bad truster id {:?}", fields[0])))?;
        let b: usize = fields[1].parse().map_err(|_| err(format!("bad trustee id {:?}", fields[1])))?;
        if a == b {
            self_loop_warnings += 1;
            continue;
        }
        edges.insert((a, b));
    }
    Ok(LoadedTrust { edges, self_loop_warnings })
}

/// Directed trust graph over dense user ids. `neighbors(u)` lists the users
/// u trusts, i.e. the users whose item exposure can influence u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    n_users: usize,
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
}

impl SocialGraph {
    pub fn from_edges(n_users: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n_users];
        for (a, b) in edges {
            if a >= n_users || b >= n_users {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n_users} users")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on user {a}")));
            }
            neighbors[a].push(b);
        }
        let mut n_edges = 0;
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            n_edges += list.len();
        }
        Ok(SocialGraph { n_users, neighbors, n_edges })
    }

    pub fn empty(n_users: usize) -> Self {
        SocialGraph { n_users, neighbors: vec![Vec::new(); n_users], n_edges: 0 }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Sorted list of users trusted by `u`.
    pub fn neighbors(&self, u: usize) -> Result<&[usize]> {
        if u >= self.n_users {
            return Err(Error::invalid(format!("user id {u} out of range ({} users)", self.n_users)));
        }
        Ok(&self.neighbors[u])
    }

    /// Unchecked neighbor access for validated ids on hot paths.
    pub fn nbrs(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn has_edge(&self, truster: usize, trustee: usize) -> bool {
        truster < self.n_users && self.neighbors[truster].binary_search(&trustee).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(a, list)| list.iter().map(move |&b| (a, b)))
    }

    /// Copy of the graph with the given (truster, trustee) edges removed.
    pub fn without_edges(&self, cut: &[(usize, usize)]) -> SocialGraph {
        let cut: HashSet<(usize, usize)> = cut.iter().copied().collect();
        let mut neighbors = self.neighbors.clone();
        let mut n_edges = 0;
        for (a, list) in neighbors.iter_mut().enumerate() {
            list.retain(|&b| !cut.contains(&(a, b)));
            n_edges += list.len();
        }
        SocialGraph { n_users: self.n_users, neighbors, n_edges }
    }
}

/// Counters describing what filtering did to the raw corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k_core: usize,
    pub clamp_warnings: usize,
    pub self_loop_warnings: usize,
    pub duplicates_dropped: usize,
    pub raw_interactions: usize,
    pub raw_edges: usize,
}

/// Filtered corpus with dense ids plus the maps back to raw ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    /// Sorted by (user, item); (user, item) pairs are unique.
    pub interactions: Vec<InteractionRecord>,
    pub graph: SocialGraph,
    /// Raw user id for each dense user id (ascending).
    pub user_ids: Vec<usize>,
    /// Raw item id for each dense item id (ascending).
    pub item_ids: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Positive-rating membership set as (user, item) pairs.
    pub fn pair_set(&self) -> HashSet<(u32, u32)> {
        self.interactions.iter().map(|r| (r.user as u32, r.item as u32)).collect()
    }
}

/// Iteratively drop users and items with fewer than `k` interactions until
/// both minimum degrees reach `k`, then re-identify everything densely and
/// prune trust edges to the surviving users. Duplicate (user, item) ratings
/// keep the last occurrence.
pub fn k_core_filter(records: &[InteractionRecord], edges: &HashSet<(usize, usize)>, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::invalid("k-core threshold must be >= 1"));
    }
    if records.is_empty() {
        return Err(Error::invalid("no interactions to filter"));
    }
    let mut last: HashMap<(usize, usize), f64> = HashMap::with_capacity(records.len());
    for r in records {
        last.insert((r.user, r.item), r.rating);
    }
    let duplicates_dropped = records.len() - last.len();
    let mut pairs: Vec<(usize, usize, f64)> = last.iter().map(|(&(u, i), &r)| (u, i, r)).collect();

    loop {
        let mut user_deg: HashMap<usize, usize> = HashMap::new();
        let mut item_deg: HashMap<usize, usize> = HashMap::new();
        for &(u, i, _) in &pairs {
            *user_deg.entry(u).or_insert(0) += 1;
            *item_deg.entry(i).or_insert(0) += 1;
        }
        let before = pairs.len();
        pairs.retain(|&(u, i, _)| user_deg[&u] >= k && item_deg[&i] >= k);
        if pairs.is_empty() {
            return Err(Error::invalid(format!("{k}-core filtering removed every interaction")));
        }
        if pairs.len() == before {
            break;
        }
    }

    let mut raw_users: Vec<usize> = pairs.iter().map(|&(u, _, _)| u).collect();
    raw_users.sort_unstable();
    raw_users.dedup();
    let mut raw_items: Vec<usize> = pairs.iter().map(|&(_, i, _)| i).collect();
    raw_items.sort_unstable();
    raw_items.dedup();
    let user_map: HashMap<usize, usize> = raw_users.iter().enumerate().map(|(d, &r)| (r, d)).collect();
    let item_map: HashMap<usize, usize> = raw_items.iter().enumerate().map(|(d, &r)| (r, d)).collect();

    let mut interactions: Vec<InteractionRecord> = pairs
        .into_iter()
        .map(|(u, i, r)| InteractionRecord { user: user_map[&u], item: item_map[&i], rating: r })
        .collect();
    interactions.sort_unstable_by_key(|r| (r.user, r.item));

    let kept_edges = edges
        .iter()
        .filter(|(a, b)| user_map.contains_key(a) && user_map.contains_key(b))
        .map(|(a, b)| (user_map[a], user_map[b]));
    let graph = SocialGraph::from_edges(raw_users.len(), kept_edges)?;

    Ok(Dataset {
        n_users: raw_users.len(),
        n_items: raw_items.len(),
        interactions,
        graph,
        user_ids: raw_users,
        item_ids: raw_items,
        provenance: Provenance {
            k_core: k,
            clamp_warnings: 0,
            self_loop_warnings: 0,
            duplicates_dropped,
            raw_interactions: records.len(),
            raw_edges: edges.len(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_social_edges: usize,
    /// Directed edge density: edges / (n * (n - 1)).
    pub edge_density: f64,
    /// Total count, over observed (u, i) pairs, of neighbors u' of u whose
    /// (u', i) is also observed. A pair with several such neighbors counts
    /// once per neighbor.
    pub n_influential_pairs: u64,
}

/// Count neighbor co-observations: sum over pairs in `set` of the number of
/// the user's neighbors that share the item.
pub fn influential_pairs(graph: &SocialGraph, set: &HashSet<(u32, u32)>) -> u64 {
    let mut total = 0u64;
    for &(u, i) in set {
        for &v in graph.nbrs(u as usize) {
            if set.contains(&(v as u32, i)) {
                total += 1;
            }
        }
    }
    total
}

/// Corpus summary. `observed` switches the influential-pair count from the
/// rating interactions to an explicit exposure pair list.
pub fn stats(ds: &Dataset, observed: Option<&[(u32, u32)]>) -> DatasetStats {
    let set: HashSet<(u32, u32)> = match observed {
        Some(pairs) => pairs.iter().copied().collect(),
        None => ds.pair_set(),
    };
    let n = ds.n_users;
    let edge_density = if n > 1 { ds.graph.n_edges() as f64 / (n as f64 * (n as f64 - 1.0)) } else { 0.0 };
    DatasetStats {
        n_users: ds.n_users,
        n_items: ds.n_items,
        n_interactions: ds.interactions.len(),
        n_social_edges: ds.graph.n_edges(),
        edge_density,
        n_influential_pairs: influential_pairs(&ds.graph, &set),
    }
}

const DATASET_FORMAT: &str = "nirec-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    dataset: Dataset,
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let file = DatasetFile { format: DATASET_FORMAT.into(), version: DATASET_VERSION, dataset: ds.clone() };
    crate::persist::write_json(path, &file)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file: DatasetFile = crate::persist::read_json(path)?;
    crate::persist::expect_format(path, DATASET_FORMAT, DATASET_VERSION, &file.format, file.version)?;
    Ok(file.dataset)
}
