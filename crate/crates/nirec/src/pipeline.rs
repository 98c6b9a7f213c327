//! Staged experiment pipeline: synth -> prepare -> simulate -> train ->
//! steer -> report, with a manifest that chains per-stage config hashes and
//! artifact checksums so stale artifacts are refused and identical configs
//! reproduce identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbones::{
    complete_and_align, train_bpr, train_mf_ratings, EmbeddingTable, LayeredGraphModel, RatingHistogram,
    TrainConfig,
};
use crate::corpus::{self, load_ratings, load_trust, ColumnSpec, DatasetStats};
use crate::estimator::{samples_from_feedback, train_nirec, NIRecCheckpoint, NIRecModel};
use crate::evaluation::{
    adjust_group, aggregate, curve_csv, ioip, AdjustStrategy, CurveRow, ImpactScorer, Method, MethodInputs,
};
use crate::optim::TrainTrace;
use crate::persist::{fname_num, read_json, sha256_file, sha256_hex, write_json};
use crate::plot::curve_chart;
use crate::rng::{mix, rng_from};
use crate::simworld::{
    generate_feedback, sample_exposure, select_targets, ExposureDiagnostics, ExposureMatrix,
    PropensityParams, SemiSyntheticRecord, SimOracle, TargetSpec,
};
use crate::steering::{greedy_optimize, ExperienceContext};
use crate::synth::{generate, SynthSpec};
use crate::{Error, Result};

// ---------------------------------------------------------------- config --

/// Hyperparameters of one gradient-descent run; `init_mean` falls back to
/// sqrt(3/dim) for the rating-scale models when left unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub batch_size: usize,
    pub init_mean: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { dim: 8, epochs: 200, learning_rate: 0.05, l2_reg: 1e-4, batch_size: 512, init_mean: None }
    }
}

impl TrainSection {
    fn to_config(self, seed: u64, rating_scale: bool) -> TrainConfig {
        let init_mean = self.init_mean.unwrap_or(if rating_scale { (3.0 / self.dim as f64).sqrt() } else { 0.0 });
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            l2_reg: self.l2_reg,
            seed,
            batch_size: self.batch_size,
            init_mean,
            use_bias: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub ratings: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub columns: ColumnsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnsSection {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub delimiter: crate::corpus::Delimiter,
}

impl Default for ColumnsSection {
    fn default() -> Self {
        ColumnsSection { user: 0, item: 1, rating: 2, delimiter: crate::corpus::Delimiter::Auto }
    }
}

impl ColumnsSection {
    fn to_spec(self) -> ColumnSpec {
        ColumnSpec { user: self.user, item: self.item, rating: self.rating, delimiter: self.delimiter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub co_rate: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthSection {
            n_users: s.n_users,
            n_items: s.n_items,
            dim: s.dim,
            density: s.density,
            mean_degree: s.mean_degree,
            co_rate: s.co_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareSection {
    pub k_core: usize,
}

impl Default for PrepareSection {
    fn default() -> Self {
        PrepareSection { k_core: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Interference strengths; each beta gets its own world, feedback, and
    /// downstream models.
    pub betas: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Observed-pair budget as a fraction of the n x m pair grid.
    pub target_d_frac: f64,
    pub target_influential: Option<u64>,
    pub rounds: usize,
    /// Seeded prediction sample used to fit the rating-alignment map.
    pub align_sample: usize,
    /// Completed-matrix cells sampled to train the stage-two factorization.
    pub stage2_cells: usize,
    pub stage1: TrainSection,
    pub stage2: TrainSection,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            betas: vec![10.0],
            alpha1: 1.0 / 3.0,
            alpha2: 1.0 / 3.0,
            alpha3: 1.0 / 3.0,
            target_d_frac: 0.08,
            target_influential: None,
            rounds: 10,
            align_sample: 20_000,
            stage2_cells: 60_000,
            stage1: TrainSection::default(),
            stage2: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetsSection {
    /// Individual-interest thresholds t.
    pub ts: Vec<f64>,
    pub group_sizes: Vec<usize>,
    /// Target items drawn per (t, group size) combination.
    pub n_items: usize,
}

impl Default for TargetsSection {
    fn default() -> Self {
        TargetsSection { ts: vec![1.0], group_sizes: vec![1, 10], n_items: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainStageSection {
    pub estimator: TrainSection,
    /// Pairwise-ranking config shared by the experience model and the
    /// baseline backbones.
    pub ranking: TrainSection,
    /// Propagation depth of the experience model; 0 collapses it to plain
    /// matrix factorization.
    pub experience_layers: usize,
    /// Seed the estimator's embeddings from the ranking backbone instead of
    /// random init; requires estimator and ranking dims to match.
    pub warm_start: bool,
}

impl Default for TrainStageSection {
    fn default() -> Self {
        TrainStageSection {
            estimator: TrainSection {
                dim: 8,
                epochs: 1500,
                learning_rate: 1.0,
                l2_reg: 1e-4,
                batch_size: 1024,
                init_mean: None,
            },
            ranking: TrainSection {
                dim: 8,
                epochs: 300,
                learning_rate: 0.2,
                l2_reg: 1e-5,
                batch_size: 64,
                init_mean: None,
            },
            experience_layers: 2,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteerSection {
    /// Recommendation-list length defining exposure and its edit costs.
    pub k: usize,
    pub gamma_grid: Vec<f64>,
    pub methods: Vec<String>,
}

impl Default for SteerSection {
    fn default() -> Self {
        SteerSection {
            k: 5,
            gamma_grid: vec![0.0, 0.5, 2.0],
            methods: Method::ALL.iter().map(|m| m.tag().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustSection {
    pub enabled: bool,
    /// Members whose in-group edges are cut, as a fraction of group size.
    pub n_remove_frac: f64,
    pub strategies: Vec<String>,
}

impl Default for AdjustSection {
    fn default() -> Self {
        AdjustSection {
            enabled: false,
            n_remove_frac: 0.1,
            strategies: vec!["highest-negative-impact".into(), "random".into()],
        }
    }
}

/// Whole-run configuration; any omitted key takes its default, unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub io: IoSection,
    pub synth: Option<SynthSection>,
    pub prepare: PrepareSection,
    pub simulate: SimulateSection,
    pub targets: TargetsSection,
    pub train: TrainStageSection,
    pub steer: SteerSection,
    pub adjust: AdjustSection,
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>, out_override: Option<&Path>) -> Result<RunConfig> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&body)
            .map_err(|e| Error::Parse { path: path.display().to_string(), line: 0, msg: e.to_string() })?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        if let Some(out) = out_override {
            cfg.out_dir = out.to_path_buf();
        }
        if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = PathBuf::from("runs/default");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulate.betas.is_empty() {
            return Err(Error::invalid("simulate.betas must list at least one interference strength"));
        }
        if self.simulate.betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::invalid("simulate.betas entries must be finite and nonnegative"));
        }
        if !(self.simulate.target_d_frac > 0.0 && self.simulate.target_d_frac <= 1.0) {
            return Err(Error::invalid("simulate.target_d_frac must lie in (0, 1]"));
        }
        if self.targets.ts.is_empty() || self.targets.group_sizes.is_empty() || self.targets.n_items == 0 {
            return Err(Error::invalid("targets.ts, targets.group_sizes, and targets.n_items must be nonempty"));
        }
        if self.steer.k == 0 || self.steer.gamma_grid.is_empty() || self.steer.methods.is_empty() {
            return Err(Error::invalid("steer.k, steer.gamma_grid, and steer.methods must be nonempty"));
        }
        for tag in &self.steer.methods {
            tag.parse::<Method>()?;
        }
        for tag in &self.adjust.strategies {
            tag.parse::<AdjustStrategy>()?;
        }
        if !(0.0..=1.0).contains(&self.adjust.n_remove_frac) {
            return Err(Error::invalid("adjust.n_remove_frac must lie in [0, 1]"));
        }
        Ok(())
    }

    fn echo(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

// ------------------------------------------------------- stage hashing --

/// Chained per-stage config digests: a stage's hash covers every config
/// section it reads plus the hash of the stage it consumes, so any upstream
/// change invalidates everything downstream and nothing else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageHashes {
    pub synth: String,
    pub prepare: String,
    pub simulate: String,
    pub train: String,
    pub steer: String,
}

fn digest(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{1f}").as_bytes())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config sections serialize")
}

impl StageHashes {
    pub fn of(cfg: &RunConfig) -> StageHashes {
        let seed = cfg.seed.to_string();
        let synth = digest(&["synth", &json(&cfg.synth), &seed]);
        let prepare = digest(&["prepare", &synth, &json(&cfg.io), &json(&cfg.prepare), &seed]);
        let simulate = digest(&["simulate", &prepare, &json(&cfg.simulate), &json(&cfg.targets)]);
        let train = digest(&["train", &simulate, &json(&cfg.train)]);
        let steer = digest(&["steer", &train, &json(&cfg.steer), &json(&cfg.adjust)]);
        StageHashes { synth, prepare, simulate, train, steer }
    }
}

// ------------------------------------------------------------- manifest --

pub const MANIFEST_FORMAT: &str = "nirec-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage_hash: String,
    pub artifacts: Vec<ArtifactRecord>,
    pub wall_ms: u64,
}

/// Ledger of everything a run produced; lives at `<out_dir>/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub crate_version: String,
    pub seed: u64,
    pub config_echo: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    fn fresh(cfg: &RunConfig) -> RunManifest {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_echo: cfg.echo(),
            stages: BTreeMap::new(),
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}

fn load_manifest(out: &Path) -> Result<RunManifest> {
    let path = manifest_path(out);
    let m: RunManifest = read_json(&path)?;
    crate::persist::expect_format(&path, MANIFEST_FORMAT, MANIFEST_VERSION, &m.format, m.version)?;
    Ok(m)
}

fn load_or_new_manifest(out: &Path, cfg: &RunConfig) -> RunManifest {
    load_manifest(out).unwrap_or_else(|_| RunManifest::fresh(cfg))
}

/// Record a completed stage (replacing any previous record) and write the
/// manifest back.
fn record_stage(
    out: &Path,
    manifest: &mut RunManifest,
    cfg: &RunConfig,
    name: &str,
    stage_hash: &str,
    files: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let mut artifacts = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        artifacts.push(ArtifactRecord { path: rel, sha256: sha256_file(f)? });
    }
    manifest.config_echo = cfg.echo();
    manifest.seed = cfg.seed;
    manifest.stages.insert(
        name.into(),
        StageRecord { stage_hash: stage_hash.into(), artifacts, wall_ms: started.elapsed().as_millis() as u64 },
    );
    write_json(&manifest_path(out), manifest)
}

/// Refuse to run on top of artifacts from a different config: the upstream
/// stage must be recorded with the expected hash and its files must still
/// checksum-match.
fn require_stage(out: &Path, manifest: &RunManifest, name: &str, want_hash: &str) -> Result<()> {
    let rec = manifest
        .stages
        .get(name)
        .ok_or_else(|| Error::Artifact(format!("stage `{name}` has not been run in {}", out.display())))?;
    if rec.stage_hash != want_hash {
        return Err(Error::Artifact(format!(
            "artifacts from stage `{name}` were built under a different config or seed; re-run `{name}`"
        )));
    }
    for a in &rec.artifacts {
        let path = out.join(&a.path);
        let got = sha256_file(&path)?;
        if got != a.sha256 {
            return Err(Error::Artifact(format!("{}: checksum drifted since `{name}` ran", path.display())));
        }
    }
    Ok(())
}

// ------------------------------------------------------------ artifacts --

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    format: String,
    version: u32,
    beta: f64,
    emb: EmbeddingTable,
    stage1_trace: TrainTrace,
    stage2_trace: TrainTrace,
}

#[derive(Serialize, Deserialize)]
struct ExposureDoc {
    format: String,
    version: u32,
    n_users: usize,
    n_items: usize,
    pairs: Vec<(u32, u32)>,
    diagnostics: ExposureDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct FeedbackDoc {
    format: String,
    version: u32,
    seed: u64,
    beta: f64,
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    d_matched: bool,
    influential_matched: bool,
    records: Vec<SemiSyntheticRecord>,
}

#[derive(Serialize, Deserialize)]
struct TargetsDoc {
    format: String,
    version: u32,
    t: f64,
    group_size: usize,
    specs: Vec<TargetSpec>,
}

#[derive(Serialize, Deserialize)]
struct EstimatorDoc {
    format: String,
    version: u32,
    config: TrainConfig,
    checkpoint: NIRecCheckpoint,
    trace: TrainTrace,
    gradcheck_max_rel_err: f64,
}

#[derive(Serialize, Deserialize)]
struct RankDoc {
    format: String,
    version: u32,
    config: TrainConfig,
    model: LayeredGraphModel,
    trace: TrainTrace,
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let head: Header = read_json(path)?;
    crate::persist::expect_format(path, format, 1, &head.format, head.version)?;
    read_json(path)
}

fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.json")
}

fn world_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("world_b{}.json", fname_num(beta)))
}

fn exposure_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("exposure_b{}.json", fname_num(beta)))
}

fn feedback_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("feedback_b{}.json", fname_num(beta)))
}

fn targets_path(out: &Path, t: f64, g: usize) -> PathBuf {
    out.join(format!("targets_t{}_g{g}.json", fname_num(t)))
}

fn estimator_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("estimator_b{}.json", fname_num(beta)))
}

fn mf_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("backbone_mf_b{}.json", fname_num(beta)))
}

fn experience_path(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("experience_b{}.json", fname_num(beta)))
}

// ------------------------------------------------------------- commands --

pub struct StageReport {
    pub stage: &'static str,
    pub wall_ms: u64,
}

/// Generate the demo raw corpus into `<out_dir>/raw/`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let section = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no [synth] section; point [io] at real raw files instead"))?;
    let spec = SynthSpec {
        n_users: section.n_users,
        n_items: section.n_items,
        dim: section.dim,
        density: section.density,
        mean_degree: section.mean_degree,
        co_rate: section.co_rate,
        seed: mix(cfg.seed, 0x5e17),
    };
    let outcome = generate(&spec)?;
    let raw = cfg.out_dir.join("raw");
    fs::create_dir_all(&raw).map_err(|e| Error::io(&raw, e))?;
    let rpath = raw.join("ratings.txt");
    let tpath = raw.join("trust.txt");
    fs::write(&rpath, &outcome.ratings).map_err(|e| Error::io(&rpath, e))?;
    fs::write(&tpath, &outcome.trust).map_err(|e| Error::io(&tpath, e))?;
    println!("synth: {} ratings, {} trust edges -> {}", outcome.n_ratings, outcome.n_edges, raw.display());

    let hashes = StageHashes::of(cfg);
    let mut manifest = load_or_new_manifest(&cfg.out_dir, cfg);
    record_stage(&cfg.out_dir, &mut manifest, cfg, "synth", &hashes.synth, &[rpath, tpath], started)?;
    Ok(StageReport { stage: "synth", wall_ms: started.elapsed().as_millis() as u64 })
}

fn raw_paths(cfg: &RunConfig) -> (PathBuf, PathBuf) {
    let default_ratings = cfg.out_dir.join("raw/ratings.txt");
    let default_trust = cfg.out_dir.join("raw/trust.txt");
    (
        cfg.io.ratings.clone().unwrap_or(default_ratings),
        cfg.io.trust.clone().unwrap_or(default_trust),
    )
}

/// Load the raw corpus, k-core filter it, persist the dataset, and print
/// its headline stats.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let hashes = StageHashes::of(cfg);
    let mut manifest = load_or_new_manifest(&cfg.out_dir, cfg);
    if cfg.synth.is_some() && cfg.io.ratings.is_none() {
        require_stage(&cfg.out_dir, &manifest, "synth", &hashes.synth)?;
    }
    let (rpath, tpath) = raw_paths(cfg);
    let ratings = load_ratings(&rpath, &cfg.io.columns.to_spec())?;
    let trust = load_trust(&tpath)?;
    let dataset = corpus::k_core_filter(&ratings.records, &trust.edges, cfg.prepare.k_core)?;
    let stats = corpus::stats(&dataset, None);

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let dpath = dataset_path(&cfg.out_dir);
    corpus::save_dataset(&dpath, &dataset)?;
    let spath = cfg.out_dir.join("stats.json");
    write_json(&spath, &stats)?;
    print_stats(&stats, cfg.prepare.k_core);

    record_stage(&cfg.out_dir, &mut manifest, cfg, "prepare", &hashes.prepare, &[dpath, spath], started)?;
    Ok(StageReport { stage: "prepare", wall_ms: started.elapsed().as_millis() as u64 })
}

fn print_stats(stats: &DatasetStats, k: usize) {
    println!("prepare: {k}-core dataset");
    println!("  users               {:>10}", stats.n_users);
    println!("  items               {:>10}", stats.n_items);
    println!("  interactions        {:>10}", stats.n_interactions);
    println!("  social edges        {:>10}", stats.n_social_edges);
    println!("  edge density        {:>10.5}", stats.edge_density);
    println!("  influential pairs   {:>10}", stats.n_influential_pairs);
}

/// Two-stage factorization into a ground-truth world per beta, then
/// exposure sampling, feedback generation, and target selection.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let hashes = StageHashes::of(cfg);
    let mut manifest = load_manifest(&cfg.out_dir)?;
    require_stage(&cfg.out_dir, &manifest, "prepare", &hashes.prepare)?;
    let dataset = corpus::load_dataset(&dataset_path(&cfg.out_dir))?;
    let (n, m) = (dataset.n_users, dataset.n_items);
    let graph = Arc::new(dataset.graph.clone());
    let mut files = Vec::new();

    // Stage 1: factorize the observed ratings.
    let s1cfg = cfg.simulate.stage1.to_config(mix(cfg.seed, 0x51), true);
    let (stage1, stage1_trace) = train_mf_ratings(&dataset.interactions, n, m, &s1cfg)?;
    // Complete the matrix and align the predicted-rating marginal to the
    // observed one.
    let hist = RatingHistogram::from_ratings(dataset.interactions.iter().map(|r| r.rating))?;
    let aligned = complete_and_align(
        &stage1,
        &dataset.interactions,
        n,
        m,
        &hist,
        cfg.simulate.align_sample,
        mix(cfg.seed, 0xa1),
    )?;
    // Stage 2: fit fresh factors to a seeded sample of the completed
    // matrix; their dot products are the world's true preferences.
    let cells = sample_cells(n, m, cfg.simulate.stage2_cells, mix(cfg.seed, 0x52));
    let completed: Vec<corpus::InteractionRecord> = cells
        .iter()
        .map(|&(u, i)| corpus::InteractionRecord { user: u, item: i, rating: aligned.rating(u, i) })
        .collect();
    let s2cfg = cfg.simulate.stage2.to_config(mix(cfg.seed, 0x53), true);
    let (stage2, stage2_trace) = train_mf_ratings(&completed, n, m, &s2cfg)?;
    let emb = stage2.embeddings.clone();
    println!(
        "simulate: stage-1 loss {:.4}, stage-2 loss {:.4} over {} cells",
        stage1_trace.final_loss(),
        stage2_trace.final_loss(),
        completed.len()
    );

    for &beta in &cfg.simulate.betas {
        let oracle = SimOracle::new(emb.clone(), beta, Arc::clone(&graph))?;
        let params = PropensityParams {
            target_influential: cfg.simulate.target_influential,
            rounds: cfg.simulate.rounds,
            ..PropensityParams::new(
                cfg.simulate.alpha1,
                cfg.simulate.alpha2,
                cfg.simulate.alpha3,
                ((n * m) as f64 * cfg.simulate.target_d_frac).round().max(1.0) as usize,
            )
        };
        let (exposure, diag) = sample_exposure(&oracle, &params, mix(cfg.seed, 0xe0))?;
        let records = generate_feedback(&oracle, &exposure, mix(cfg.seed, 0xfb))?;
        println!(
            "simulate: beta {beta}: |D| {} (target {}, matched {}), influential {} ({}), positives {}",
            diag.achieved_d,
            diag.target_d,
            diag.d_matched,
            diag.influential,
            diag.influential_matched,
            records.iter().filter(|r| r.y).count()
        );

        let wpath = world_path(&cfg.out_dir, beta);
        write_json(
            &wpath,
            &WorldDoc {
                format: "nirec-world".into(),
                version: 1,
                beta,
                emb: emb.clone(),
                stage1_trace: stage1_trace.clone(),
                stage2_trace: stage2_trace.clone(),
            },
        )?;
        let epath = exposure_path(&cfg.out_dir, beta);
        write_json(
            &epath,
            &ExposureDoc {
                format: "nirec-exposure".into(),
                version: 1,
                n_users: n,
                n_items: m,
                pairs: exposure.sorted_pairs(),
                diagnostics: diag.clone(),
            },
        )?;
        let fpath = feedback_path(&cfg.out_dir, beta);
        write_json(
            &fpath,
            &FeedbackDoc {
                format: "nirec-feedback".into(),
                version: 1,
                seed: cfg.seed,
                beta,
                alpha1: diag.alpha1,
                alpha2: diag.alpha2,
                alpha3: diag.alpha3,
                d_matched: diag.d_matched,
                influential_matched: diag.influential_matched,
                records,
            },
        )?;
        files.extend([wpath, epath, fpath]);
    }

    // Target specs depend on interests only, not on beta: share them.
    let oracle = SimOracle::new(emb.clone(), cfg.simulate.betas[0], Arc::clone(&graph))?;
    for &t in &cfg.targets.ts {
        for &g in &cfg.targets.group_sizes {
            let seed = mix(cfg.seed, 0x7a00 ^ t.to_bits() ^ ((g as u64) << 17));
            let specs = select_targets(&oracle, g, t, cfg.targets.n_items, seed)?;
            println!("simulate: t {t}, group size {g}: {} target specs", specs.len());
            let path = targets_path(&cfg.out_dir, t, g);
            write_json(
                &path,
                &TargetsDoc { format: "nirec-targets".into(), version: 1, t, group_size: g, specs },
            )?;
            files.push(path);
        }
    }

    record_stage(&cfg.out_dir, &mut manifest, cfg, "simulate", &hashes.simulate, &files, started)?;
    Ok(StageReport { stage: "simulate", wall_ms: started.elapsed().as_millis() as u64 })
}

/// Seeded distinct (user, item) cells; the whole grid when it fits.
fn sample_cells(n: usize, m: usize, want: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * m;
    if want >= total {
        return (0..total).map(|idx| (idx / m, idx % m)).collect();
    }
    let mut rng = rng_from(seed);
    let mut seen = HashSet::with_capacity(want * 2);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let idx = rng.random_range(0..total);
        if seen.insert(idx) {
            out.push((idx / m, idx % m));
        }
    }
    out.sort_unstable();
    out
}

/// Train the interference-aware estimator on each beta's feedback, plus the
/// experience model and baseline backbones on its positives.
pub fn cmd_train(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let hashes = StageHashes::of(cfg);
    let mut manifest = load_manifest(&cfg.out_dir)?;
    require_stage(&cfg.out_dir, &manifest, "simulate", &hashes.simulate)?;
    let dataset = corpus::load_dataset(&dataset_path(&cfg.out_dir))?;
    let (n, m) = (dataset.n_users, dataset.n_items);
    let graph = Arc::new(dataset.graph.clone());
    let mut files = Vec::new();

    for &beta in &cfg.simulate.betas {
        let feedback: FeedbackDoc = read_doc(&feedback_path(&cfg.out_dir, beta), "nirec-feedback")?;
        let exposure_doc: ExposureDoc = read_doc(&exposure_path(&cfg.out_dir, beta), "nirec-exposure")?;
        let mut exposure = ExposureMatrix::new(exposure_doc.n_users, exposure_doc.n_items);
        for (u, i) in exposure_doc.pairs {
            exposure.insert(u, i)?;
        }

        let positives: Vec<(u32, u32)> =
            feedback.records.iter().filter(|r| r.y).map(|r| (r.user, r.item)).collect();
        let rank_cfg = cfg.train.ranking.to_config(mix(cfg.seed, 0xb9), false);
        let (mf, mf_trace) = train_bpr(&positives, n, m, 0, &rank_cfg)?;
        let exp_cfg = cfg.train.ranking.to_config(mix(cfg.seed, 0xba), false);
        let (experience, exp_trace) = train_bpr(&positives, n, m, cfg.train.experience_layers, &exp_cfg)?;
        println!(
            "train: beta {beta}: ranking losses mf {:.4}, experience {:.4} on {} positives",
            mf_trace.final_loss(),
            exp_trace.final_loss(),
            positives.len()
        );

        let samples = samples_from_feedback(&feedback.records, &exposure, &graph);
        let est_cfg = cfg.train.estimator.to_config(mix(cfg.seed, 0xe5), false);
        let start = if cfg.train.warm_start {
            if est_cfg.dim != rank_cfg.dim {
                return Err(Error::invalid(format!(
                    "warm start needs matching dims: estimator {} vs ranking {}",
                    est_cfg.dim, rank_cfg.dim
                )));
            }
            NIRecModel::warm_start(mf.final_emb.clone(), Arc::clone(&graph), est_cfg.seed)?
        } else {
            NIRecModel::random(n, m, est_cfg.dim, Arc::clone(&graph), est_cfg.seed)?
        };
        let (model, trace) = train_nirec(start, &samples, &est_cfg)?;
        // Post-training sanity: analytic gradients against central finite
        // differences on a sample with live neighbor bits.
        let probe = samples
            .iter()
            .find(|s| s.neighbor_treatments.iter().any(|&b| b))
            .or_else(|| samples.first())
            .expect("training samples are nonempty");
        let check = crate::estimator::gradient_check(&model, probe, 120, mix(cfg.seed, 0x6c));
        if check.max_rel_err > 1e-4 {
            println!(
                "train: WARNING: beta {beta} estimator gradient check at {:.2e} exceeds 1e-4",
                check.max_rel_err
            );
        }
        println!(
            "train: beta {beta}: estimator loss {:.4} over {} epochs ({} rejected), gradcheck {:.2e}",
            trace.final_loss(),
            trace.epoch_loss.len() - 1,
            trace.rejected_epochs,
            check.max_rel_err
        );
        let epath = estimator_path(&cfg.out_dir, beta);
        write_json(
            &epath,
            &EstimatorDoc {
                format: "nirec-estimator".into(),
                version: 1,
                config: est_cfg,
                checkpoint: model.to_checkpoint(),
                trace,
                gradcheck_max_rel_err: check.max_rel_err,
            },
        )?;
        files.push(epath);

        let mpath = mf_path(&cfg.out_dir, beta);
        write_json(
            &mpath,
            &RankDoc { format: "nirec-rank".into(), version: 1, config: rank_cfg, model: mf, trace: mf_trace },
        )?;
        let xpath = experience_path(&cfg.out_dir, beta);
        write_json(
            &xpath,
            &RankDoc {
                format: "nirec-rank".into(),
                version: 1,
                config: exp_cfg,
                model: experience,
                trace: exp_trace,
            },
        )?;
        files.extend([mpath, xpath]);
    }

    record_stage(&cfg.out_dir, &mut manifest, cfg, "train", &hashes.train, &files, started)?;
    Ok(StageReport { stage: "train", wall_ms: started.elapsed().as_millis() as u64 })
}

// ---------------------------------------------------------------- steer --

/// One evaluated sweep measurement; also the row format of sweep.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub t: f64,
    pub group_size: usize,
    pub spec: usize,
    pub method: Method,
    pub gamma: f64,
    pub ioip: f64,
    pub dtne: f64,
}

pub const SWEEP_CSV_HEADER: &str = "beta,t,group_size,spec,method,gamma,ioip,dtne";

/// One group-adjustment comparison; also the row format of adjust.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustRow {
    pub beta: f64,
    pub t: f64,
    pub group_size: usize,
    pub spec: usize,
    pub strategy: AdjustStrategy,
    pub n_remove: usize,
    pub ioip_before: f64,
    pub ioip_after: f64,
}

pub const ADJUST_CSV_HEADER: &str = "beta,t,group_size,spec,strategy,n_remove,ioip_before,ioip_after";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartialLine {
    stage_hash: String,
    beta: f64,
    t: f64,
    group_size: usize,
    spec: usize,
    rows: Vec<SweepRow>,
    adjust: Vec<AdjustRow>,
}

fn partial_path(out: &Path) -> PathBuf {
    out.join("sweep_partial.jsonl")
}

fn read_partial(out: &Path, stage_hash: &str) -> Vec<PartialLine> {
    let Ok(body) = fs::read_to_string(partial_path(out)) else {
        return Vec::new();
    };
    body.lines()
        .filter_map(|l| serde_json::from_str::<PartialLine>(l).ok())
        .filter(|l| l.stage_hash == stage_hash)
        .collect()
}

struct BetaBundle {
    oracle: SimOracle,
    estimator: NIRecModel,
    mf: EmbeddingTable,
    experience: LayeredGraphModel,
}

fn load_beta_bundle(out: &Path, beta: f64, graph: &Arc<corpus::SocialGraph>) -> Result<BetaBundle> {
    let world: WorldDoc = read_doc(&world_path(out, beta), "nirec-world")?;
    let est: EstimatorDoc = read_doc(&estimator_path(out, beta), "nirec-estimator")?;
    let mf: RankDoc = read_doc(&mf_path(out, beta), "nirec-rank")?;
    let experience: RankDoc = read_doc(&experience_path(out, beta), "nirec-rank")?;
    Ok(BetaBundle {
        oracle: SimOracle::new(world.emb, world.beta, Arc::clone(graph))?,
        estimator: NIRecModel::from_checkpoint(est.checkpoint, Arc::clone(graph))?,
        mf: mf.model.final_emb,
        experience: experience.model,
    })
}

/// Run every configured optimizer over every target spec and gamma, score
/// the assignments under the true world, and write sweep.csv (and
/// adjust.csv when the group-adjustment study is on). Completed specs are
/// checkpointed to sweep_partial.jsonl and skipped on re-runs.
pub fn cmd_steer(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let hashes = StageHashes::of(cfg);
    let mut manifest = load_manifest(&cfg.out_dir)?;
    require_stage(&cfg.out_dir, &manifest, "train", &hashes.train)?;
    let dataset = corpus::load_dataset(&dataset_path(&cfg.out_dir))?;
    let graph = Arc::new(dataset.graph.clone());
    let methods: Vec<Method> = cfg.steer.methods.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let strategies: Vec<AdjustStrategy> =
        cfg.adjust.strategies.iter().map(|s| s.parse()).collect::<Result<_>>()?;

    let done: HashSet<(u64, u64, usize, usize)> = read_partial(&cfg.out_dir, &hashes.steer)
        .iter()
        .map(|l| (l.beta.to_bits(), l.t.to_bits(), l.group_size, l.spec))
        .collect();
    let sink = Mutex::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(partial_path(&cfg.out_dir))
            .map_err(|e| Error::io(&partial_path(&cfg.out_dir), e))?,
    );

    let mut computed = 0usize;
    let mut skipped = 0usize;
    for &beta in &cfg.simulate.betas {
        let bundle = load_beta_bundle(&cfg.out_dir, beta, &graph)?;
        for &t in &cfg.targets.ts {
            for &g in &cfg.targets.group_sizes {
                let doc: TargetsDoc = read_doc(&targets_path(&cfg.out_dir, t, g), "nirec-targets")?;
                let work: Vec<(usize, &TargetSpec)> = doc
                    .specs
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| !done.contains(&(beta.to_bits(), t.to_bits(), g, *idx)))
                    .collect();
                skipped += doc.specs.len() - work.len();
                computed += work.len();
                work.par_iter()
                    .map(|&(idx, spec)| {
                        let line = steer_one(cfg, &hashes.steer, &bundle, beta, t, g, idx, spec, &methods, &strategies)?;
                        let mut file = sink.lock().expect("partial sink");
                        let mut payload = serde_json::to_string(&line).expect("partial line serializes");
                        payload.push('\n');
                        file.write_all(payload.as_bytes()).map_err(|e| Error::io(&partial_path(&cfg.out_dir), e))?;
                        Ok(())
                    })
                    .collect::<Result<Vec<()>>>()?;
            }
        }
    }
    println!("steer: {computed} specs evaluated, {skipped} resumed from checkpoint");

    // Deterministic final tables regardless of worker interleaving.
    let mut lines = read_partial(&cfg.out_dir, &hashes.steer);
    lines.sort_by(|a, b| {
        a.beta
            .total_cmp(&b.beta)
            .then(a.t.total_cmp(&b.t))
            .then(a.group_size.cmp(&b.group_size))
            .then(a.spec.cmp(&b.spec))
    });
    lines.dedup_by_key(|l| (l.beta.to_bits(), l.t.to_bits(), l.group_size, l.spec));
    let mut rows: Vec<SweepRow> = lines.iter().flat_map(|l| l.rows.clone()).collect();
    rows.sort_by(|a, b| {
        a.beta
            .total_cmp(&b.beta)
            .then(a.t.total_cmp(&b.t))
            .then(a.group_size.cmp(&b.group_size))
            .then(a.spec.cmp(&b.spec))
            .then(a.method.cmp(&b.method))
            .then(a.gamma.total_cmp(&b.gamma))
    });
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.beta, r.t, r.group_size, r.spec, r.method, r.gamma, r.ioip, r.dtne
        ));
    }
    let sweep = cfg.out_dir.join("sweep.csv");
    fs::write(&sweep, csv).map_err(|e| Error::io(&sweep, e))?;
    let mut files = vec![sweep];

    if cfg.adjust.enabled {
        let mut arows: Vec<AdjustRow> = lines.iter().flat_map(|l| l.adjust.clone()).collect();
        arows.sort_by(|a, b| {
            a.beta
                .total_cmp(&b.beta)
                .then(a.t.total_cmp(&b.t))
                .then(a.group_size.cmp(&b.group_size))
                .then(a.spec.cmp(&b.spec))
                .then(a.strategy.tag().cmp(b.strategy.tag()))
        });
        let mut csv = String::from(ADJUST_CSV_HEADER);
        csv.push('\n');
        for r in &arows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.beta, r.t, r.group_size, r.spec, r.strategy, r.n_remove, r.ioip_before, r.ioip_after
            ));
        }
        let apath = cfg.out_dir.join("adjust.csv");
        fs::write(&apath, csv).map_err(|e| Error::io(&apath, e))?;
        files.push(apath);
    }

    record_stage(&cfg.out_dir, &mut manifest, cfg, "steer", &hashes.steer, &files, started)?;
    Ok(StageReport { stage: "steer", wall_ms: started.elapsed().as_millis() as u64 })
}

#[allow(clippy::too_many_arguments)]
fn steer_one(
    cfg: &RunConfig,
    stage_hash: &str,
    bundle: &BetaBundle,
    beta: f64,
    t: f64,
    g: usize,
    spec_idx: usize,
    spec: &TargetSpec,
    methods: &[Method],
    strategies: &[AdjustStrategy],
) -> Result<PartialLine> {
    let ctx = ExperienceContext::build(&bundle.experience, cfg.steer.k, spec.target_item, &spec.neighbor_users)?;
    let inputs = MethodInputs {
        nirec: Some(&bundle.estimator),
        mf: Some(&bundle.mf),
        lgc: Some(&bundle.experience.final_emb),
        sim_beta: beta,
    };
    let mut rows = Vec::new();
    for &method in methods {
        let points = crate::evaluation::build_curve(&bundle.oracle, spec, &ctx, method, &cfg.steer.gamma_grid, &inputs)?;
        for p in points {
            rows.push(SweepRow {
                beta,
                t,
                group_size: g,
                spec: spec_idx,
                method,
                gamma: p.gamma,
                ioip: p.ioip,
                dtne: p.dtne,
            });
        }
    }

    let mut adjust = Vec::new();
    if cfg.adjust.enabled && spec.target_users.len() >= 2 {
        let n_remove = ((spec.target_users.len() as f64 * cfg.adjust.n_remove_frac).round() as usize)
            .clamp(1, spec.target_users.len() - 1);
        let before_bits = greedy_optimize(&bundle.estimator, spec, &ctx, 0.0)?.assignment.bits;
        let ioip_before = ioip(&bundle.oracle, spec, &before_bits)?;
        let scorer = ImpactScorer::NIRec { model: &bundle.estimator, ctx: &ctx };
        for &strategy in strategies {
            let adj = adjust_group(&scorer, spec, strategy, n_remove, mix(cfg.seed, spec_idx as u64))?;
            let cut_graph = Arc::new(adj.apply(bundle.oracle.graph()));
            let cut_oracle =
                SimOracle::new(bundle.oracle.embeddings().clone(), beta, Arc::clone(&cut_graph))?;
            let cut_model =
                NIRecModel::from_checkpoint(bundle.estimator.to_checkpoint(), Arc::clone(&cut_graph))?;
            let after_bits = greedy_optimize(&cut_model, spec, &ctx, 0.0)?.assignment.bits;
            let ioip_after = ioip(&cut_oracle, spec, &after_bits)?;
            adjust.push(AdjustRow {
                beta,
                t,
                group_size: g,
                spec: spec_idx,
                strategy,
                n_remove,
                ioip_before,
                ioip_after,
            });
        }
    }

    Ok(PartialLine { stage_hash: stage_hash.into(), beta, t, group_size: g, spec: spec_idx, rows, adjust })
}

// --------------------------------------------------------------- report --

fn parse_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        if ln == 0 {
            if line != SWEEP_CSV_HEADER {
                return Err(Error::Artifact(format!("{}: unexpected sweep header", path.display())));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let err = |msg: &str| Error::Parse { path: path.display().to_string(), line: ln + 1, msg: msg.into() };
        if f.len() != 8 {
            return Err(err("expected 8 fields"));
        }
        rows.push(SweepRow {
            beta: f[0].parse().map_err(|_| err("bad beta"))?,
            t: f[1].parse().map_err(|_| err("bad t"))?,
            group_size: f[2].parse().map_err(|_| err("bad group_size"))?,
            spec: f[3].parse().map_err(|_| err("bad spec"))?,
            method: f[4].parse()?,
            gamma: f[5].parse().map_err(|_| err("bad gamma"))?,
            ioip: f[6].parse().map_err(|_| err("bad ioip"))?,
            dtne: f[7].parse().map_err(|_| err("bad dtne"))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: sweep table has no measurements", path.display())));
    }
    Ok(rows)
}

/// Aggregate the sweep into per-cell means, write aggregate.csv, and render
/// one trade-off chart per (group size, beta, t) slice.
pub fn cmd_report(cfg: &RunConfig) -> Result<StageReport> {
    let started = Instant::now();
    let hashes = StageHashes::of(cfg);
    let mut manifest = load_manifest(&cfg.out_dir)?;
    require_stage(&cfg.out_dir, &manifest, "steer", &hashes.steer)?;
    let rows = parse_sweep_csv(&cfg.out_dir.join("sweep.csv"))?;
    let curve_rows: Vec<CurveRow> = rows
        .iter()
        .map(|r| CurveRow {
            method: r.method,
            gamma: r.gamma,
            group_size: r.group_size,
            beta: r.beta,
            t: r.t,
            ioip: r.ioip,
            dtne: r.dtne,
        })
        .collect();
    let cells = aggregate(&curve_rows)?;
    let apath = cfg.out_dir.join("aggregate.csv");
    fs::write(&apath, curve_csv(&cells)).map_err(|e| Error::io(&apath, e))?;
    let mut files = vec![apath];

    let plot_dir = cfg.out_dir.join("plots");
    fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    let mut slices: Vec<(usize, u64, u64)> =
        cells.iter().map(|c| (c.group_size, c.beta.to_bits(), c.t.to_bits())).collect();
    slices.sort_unstable();
    slices.dedup();
    for (g, bbits, tbits) in slices {
        let (beta, t) = (f64::from_bits(bbits), f64::from_bits(tbits));
        let slice: Vec<_> = cells
            .iter()
            .filter(|c| c.group_size == g && c.beta == beta && c.t == t)
            .cloned()
            .collect();
        let svg = curve_chart(&format!("group size {g}, beta {beta}, t {t}"), &slice)?;
        let path = plot_dir.join(format!("curve_b{}_t{}_g{g}.svg", fname_num(beta), fname_num(t)));
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }

    // Headline table: improvement per method at the loosest penalty.
    let gamma0 = cfg.steer.gamma_grid.iter().copied().fold(f64::INFINITY, f64::min);
    println!("report: mean improvement at gamma {gamma0}");
    for c in cells.iter().filter(|c| c.gamma == gamma0) {
        println!(
            "  beta {:>6} t {:>4} group {:>4} {:<11} ioip {:>9.4} (se {:.4})  dtne {:>9.4}",
            c.beta, c.t, c.group_size, c.method.tag(), c.ioip_mean, c.ioip_se, c.dtne_mean
        );
    }

    let adjust_path = cfg.out_dir.join("adjust.csv");
    if adjust_path.exists() {
        let body = fs::read_to_string(&adjust_path).map_err(|e| Error::io(&adjust_path, e))?;
        let mut per: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for line in body.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 8 {
                let e = per.entry(f[4].to_string()).or_insert((0.0, 0.0, 0));
                e.0 += f[6].parse::<f64>().unwrap_or(0.0);
                e.1 += f[7].parse::<f64>().unwrap_or(0.0);
                e.2 += 1;
            }
        }
        for (strategy, (before, after, n)) in per {
            if n > 0 {
                println!(
                    "report: adjustment `{strategy}`: mean ioip {:.4} -> {:.4} over {n} specs",
                    before / n as f64,
                    after / n as f64
                );
            }
        }
    }

    record_stage(&cfg.out_dir, &mut manifest, cfg, "report", &hashes.steer, &files, started)?;
    Ok(StageReport { stage: "report", wall_ms: started.elapsed().as_millis() as u64 })
}

/// Run every stage in order (synth only when configured).
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<StageReport>> {
    let mut reports = Vec::new();
    if cfg.synth.is_some() && cfg.io.ratings.is_none() {
        reports.push(cmd_synth(cfg)?);
    }
    reports.push(cmd_prepare(cfg)?);
    reports.push(cmd_simulate(cfg)?);
    reports.push(cmd_train(cfg)?);
    reports.push(cmd_steer(cfg)?);
    reports.push(cmd_report(cfg)?);
    for r in &reports {
        println!("run: {:<9} {:>7} ms", r.stage, r.wall_ms);
    }
    Ok(reports)
}
