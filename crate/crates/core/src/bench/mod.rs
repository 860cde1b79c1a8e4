//! Benchmark experiments: baseline kernels, replicated runs of every
//! algorithm, and the comparison tables and plot data built from them.

mod models;
mod table;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use models::{build_glmm, build_litters, build_litters_with, build_spatial, LITTERS_TRUTH, SPATIAL_TRUTH};
pub use table::{BoxplotRow, ComparisonRow, ComparisonTable};

use crate::blocking::{cluster_tree, cut_tree, MAX_BLOCK};
use crate::diagnostics::{correlation_matrix, efficiency_report, ChainTrace};
use crate::engine::{
    all_scalar_kernel, default_scalar_kind, run_segment, AutoAdapt, AutoAdaptConfig, KernelComposition, OuterRecord,
    SamplerArchive, TimeSource, Trigger,
};
use crate::error::{Error, Result};
use crate::model::{parse_model, ModelGraph};
use crate::samplers::{SamplerAssignment, SamplerKind};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "AUTOADAPT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchModel {
    Litters,
    Glmm,
    Spatial,
}

impl BenchModel {
    pub fn name(&self) -> &'static str {
        match self {
            BenchModel::Litters => "litters",
            BenchModel::Glmm => "glmm",
            BenchModel::Spatial => "spatial",
        }
    }

    /// Litters per group, subjects, or sites.
    pub fn default_size(&self) -> usize {
        match self {
            BenchModel::Litters => 16,
            BenchModel::Glmm => 20,
            BenchModel::Spatial => 25,
        }
    }

    pub fn default_inner(&self) -> usize {
        match self {
            BenchModel::Litters => 10_000,
            BenchModel::Glmm | BenchModel::Spatial => 5_000,
        }
    }

    pub fn build(&self, size: usize, data_seed: u64) -> Result<ModelGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        match self {
            BenchModel::Litters => build_litters(size, &mut rng),
            BenchModel::Glmm => build_glmm(size, &mut rng),
            BenchModel::Spatial => build_spatial(size, &mut rng),
        }
    }
}

impl FromStr for BenchModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "litters" => Ok(BenchModel::Litters),
            "glmm" => Ok(BenchModel::Glmm),
            "spatial" => Ok(BenchModel::Spatial),
            other => Err(Error::Config(format!("unknown model `{other}` (expected litters, glmm or spatial)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AllScalar,
    AllBlocked,
    Default,
    AutoBlockBaseline,
    AutoAdapt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::AllScalar,
        Algorithm::AllBlocked,
        Algorithm::Default,
        Algorithm::AutoBlockBaseline,
        Algorithm::AutoAdapt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AllScalar => "all_scalar",
            Algorithm::AllBlocked => "all_blocked",
            Algorithm::Default => "default",
            Algorithm::AutoBlockBaseline => "auto_block_baseline",
            Algorithm::AutoAdapt => "auto_adapt",
        }
    }

    /// Whether the algorithm spends time choosing its kernel.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Algorithm::AutoBlockBaseline | Algorithm::AutoAdapt)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// A static kernel by name: `all_scalar`, `all_blocked` or `default`.
pub fn build_baseline_kernel(name: &str, graph: &ModelGraph) -> Result<KernelComposition> {
    match name.parse::<Algorithm>()? {
        Algorithm::AllScalar => all_scalar_kernel(graph),
        Algorithm::AllBlocked => {
            if graph.dim() < 2 {
                return all_scalar_kernel(graph);
            }
            let all: Vec<usize> = (0..graph.dim()).collect();
            let s = SamplerAssignment::new(SamplerKind::BlockArw, all, graph)?;
            Ok(KernelComposition::new(vec![s], 0))
        }
        Algorithm::Default => default_kernel(graph),
        other => Err(Error::Config(format!("`{other}` is not a static kernel"))),
    }
}

/// Conjugate Gibbs where available, one block random walk per vector
/// node, scalar random walks elsewhere.
fn default_kernel(graph: &ModelGraph) -> Result<KernelComposition> {
    let groups = graph.vector_groups();
    let mut in_group = vec![false; graph.dim()];
    for g in &groups {
        g.iter().for_each(|&k| in_group[k] = true);
    }
    let mut samplers = Vec::new();
    let mut emitted = vec![false; groups.len()];
    for k in 0..graph.dim() {
        if in_group[k] {
            let gi = groups.iter().position(|g| g.contains(&k)).expect("grouped");
            if !emitted[gi] {
                emitted[gi] = true;
                samplers.push(SamplerAssignment::new(SamplerKind::BlockArw, groups[gi].clone(), graph)?);
            }
        } else if graph.detect_conjugacy(k).is_some() {
            samplers.push(SamplerAssignment::new(SamplerKind::Gibbs, vec![k], graph)?);
        } else {
            samplers.push(SamplerAssignment::new(default_scalar_kind(graph, k), vec![k], graph)?);
        }
    }
    Ok(KernelComposition::new(samplers, 0))
}

/// Kernel from a global cut of the correlation tree: block random walks
/// on clusters (split into chunks of at most [`MAX_BLOCK`]), scalar
/// random walks on singletons.
pub fn cut_kernel(graph: &ModelGraph, trace: &ChainTrace, h: f64) -> Result<KernelComposition> {
    let corr = correlation_matrix(trace);
    let tree = cluster_tree(&corr)?;
    let mut clusters = cut_tree(&tree, h);
    for k in (0..graph.dim()).filter(|&k| corr.zero_variance[k]) {
        clusters.push(vec![k]);
    }
    clusters.sort();
    let mut samplers = Vec::new();
    for c in clusters {
        for chunk in c.chunks(MAX_BLOCK) {
            if chunk.len() == 1 {
                let k = chunk[0];
                samplers.push(SamplerAssignment::new(default_scalar_kind(graph, k), vec![k], graph)?);
            } else {
                samplers.push(SamplerAssignment::new(SamplerKind::BlockArw, chunk.to_vec(), graph)?);
            }
        }
    }
    Ok(KernelComposition::new(samplers, 0))
}

/// Everything needed to run a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: BenchModel,
    /// Path to a model file; replaces the built-in model when set.
    pub model_file: Option<String>,
    /// Litters per group, subjects or sites; model default when unset.
    pub size: Option<usize>,
    pub algorithms: Vec<Algorithm>,
    pub reps: usize,
    /// Outer iterations M.
    pub outer: usize,
    /// Sweeps per outer iteration; model default when unset.
    pub inner: Option<usize>,
    /// Length of the final efficiency run.
    pub final_iters: usize,
    /// Adaptive warm-up of the static kernels before the final run;
    /// `outer * inner` when unset, matching the Auto Adapt budget.
    pub burn_in: Option<usize>,
    pub seed: u64,
    /// Seed of the simulated data set, shared by all replications.
    pub data_seed: u64,
    pub candidates: Vec<SamplerKind>,
    pub trigger: Trigger,
    pub cut_heights: Vec<f64>,
    pub time: TimeSource,
    pub threads: Option<usize>,
    /// Keep final-run samples for writing trace files.
    pub keep_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let aa = AutoAdaptConfig::default();
        Self {
            model: BenchModel::Litters,
            model_file: None,
            size: None,
            algorithms: Algorithm::ALL.to_vec(),
            reps: 20,
            outer: aa.outer,
            inner: None,
            final_iters: 200_000,
            burn_in: None,
            seed: 1,
            data_seed: 2024,
            candidates: aa.candidates,
            trigger: aa.trigger,
            cut_heights: aa.cut_heights,
            time: TimeSource::Cost,
            threads: None,
            keep_traces: false,
        }
    }
}

impl ExperimentConfig {
    pub fn size(&self) -> usize {
        self.size.unwrap_or_else(|| self.model.default_size())
    }

    pub fn inner(&self) -> usize {
        self.inner.unwrap_or_else(|| self.model.default_inner())
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.outer * self.inner())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.final_iters < 1000 {
            return Err(Error::Config(format!("final run needs at least 1000 iterations, got {}", self.final_iters)));
        }
        if self.size() == 0 {
            return Err(Error::Config("model size must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.algorithms.contains(&Algorithm::AutoBlockBaseline) && self.inner() < crate::diagnostics::MIN_CHAIN {
            return Err(Error::Config("auto_block_baseline needs at least 50 inner iterations".into()));
        }
        self.auto_adapt_config().validate()
    }

    pub fn auto_adapt_config(&self) -> AutoAdaptConfig {
        AutoAdaptConfig {
            outer: self.outer,
            inner: self.inner(),
            candidates: self.candidates.clone(),
            trigger: self.trigger,
            cut_heights: self.cut_heights.clone(),
            time: self.time,
            retain_traces: false,
            ..AutoAdaptConfig::default()
        }
    }

    pub fn build_graph(&self) -> Result<ModelGraph> {
        match &self.model_file {
            Some(path) => Ok(parse_model(&std::fs::read_to_string(path)?)?),
            None => self.model.build(self.size(), self.data_seed),
        }
    }

    /// Thread count from the config, then the environment.
    pub fn thread_count(&self) -> Option<usize> {
        self.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
    }
}

/// One efficiency measurement on the time axis of a replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// 1-based outer iteration, or `None` for the final run.
    pub stage: Option<usize>,
    /// Cumulative time at the end of the stage.
    pub time: f64,
    pub efficiency: f64,
}

/// Result of one algorithm on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub seed: u64,
    pub adapt_time: f64,
    pub final_efficiency: f64,
    pub final_time: f64,
    pub final_k_min: String,
    pub kernel: Vec<String>,
    pub series: Vec<SeriesPoint>,
    pub history: Vec<OuterRecord>,
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub final_trace: Option<ChainTrace>,
}

/// Run one algorithm once with its own random stream.
pub fn run_arm(graph: &ModelGraph, algorithm: Algorithm, cfg: &ExperimentConfig, rep: usize, seed: u64) -> Result<ArmResult> {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut archive = SamplerArchive::new();
    let inner = cfg.inner();
    let mut series = Vec::new();
    let mut history = Vec::new();
    let (mut kernel, mut x, adapt_time) = match algorithm {
        Algorithm::AutoAdapt => {
            let aa = AutoAdapt::new(graph, cfg.auto_adapt_config(), &mut rng)?.run()?;
            let mut t = 0.0;
            for rec in &aa.history {
                t += rec.segment_time;
                series.push(SeriesPoint {
                    stage: Some(rec.iteration),
                    time: t,
                    efficiency: rec.efficiency,
                });
            }
            history = aa.history;
            archive = aa.archive;
            (aa.best, aa.state, aa.adapt_time)
        }
        Algorithm::AutoBlockBaseline => {
            let mut x = graph.initial_state();
            let mut pilot = all_scalar_kernel(graph)?;
            let seg = run_segment(&mut pilot, graph, &mut x, inner, cfg.time, &mut archive, true, &mut rng)?;
            let mut spent = seg.trace.time;
            let mut best = (efficiency_report(&seg.trace)?.overall, pilot);
            let mut stage = 1;
            series.push(SeriesPoint {
                stage: Some(stage),
                time: spent,
                efficiency: best.0,
            });
            for &h in &cfg.cut_heights {
                let mut k = cut_kernel(graph, &seg.trace, h)?;
                let s = run_segment(&mut k, graph, &mut x, inner, cfg.time, &mut archive, true, &mut rng)?;
                spent += s.trace.time;
                let eff = efficiency_report(&s.trace)?.overall;
                stage += 1;
                series.push(SeriesPoint {
                    stage: Some(stage),
                    time: spent,
                    efficiency: eff,
                });
                if eff > best.0 {
                    best = (eff, k);
                }
            }
            (best.1, x, spent)
        }
        static_algo => {
            let mut k = build_baseline_kernel(static_algo.name(), graph)?;
            let mut x = graph.initial_state();
            run_segment(&mut k, graph, &mut x, cfg.burn_in(), cfg.time, &mut archive, false, &mut rng)?;
            (k, x, 0.0)
        }
    };
    let seg = run_segment(&mut kernel, graph, &mut x, cfg.final_iters, cfg.time, &mut archive, true, &mut rng)?;
    let report = efficiency_report(&seg.trace)?;
    series.push(SeriesPoint {
        stage: None,
        time: adapt_time + seg.trace.time,
        efficiency: report.overall,
    });
    Ok(ArmResult {
        algorithm,
        rep,
        seed,
        adapt_time: if algorithm.is_adaptive() { adapt_time } else { 0.0 },
        final_efficiency: report.overall,
        final_time: seg.trace.time,
        final_k_min: graph.dims()[report.k_min].name.clone(),
        kernel: kernel.describe(graph),
        series,
        history,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_trace: cfg.keep_traces.then_some(seg.trace),
    })
}

/// All arms of a comparison plus the aggregated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub config: ExperimentConfig,
    pub table: ComparisonTable,
    pub arms: Vec<ArmResult>,
}

impl ComparisonResult {
    pub fn boxplot_rows(&self) -> Vec<BoxplotRow> {
        self.arms
            .iter()
            .flat_map(|a| {
                a.series.iter().map(move |p| BoxplotRow {
                    algorithm: a.algorithm.name().to_string(),
                    rep: a.rep,
                    stage: p.stage.map_or_else(|| "final".to_string(), |s| s.to_string()),
                    time: p.time,
                    efficiency: p.efficiency,
                })
            })
            .collect()
    }

    pub fn arms_of(&self, algorithm: Algorithm) -> impl Iterator<Item = &ArmResult> {
        self.arms.iter().filter(move |a| a.algorithm == algorithm)
    }
}

/// Target effective sample size for the time-to column.
pub const TARGET_ESS: f64 = 10_000.0;

/// Run every algorithm `reps` times in parallel. Arm `i` (algorithms in
/// order, replications within) uses seed `seed + i`, so results do not
/// depend on scheduling or thread count.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonResult> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let jobs: Vec<(Algorithm, usize, u64)> = cfg
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(ai, &a)| (0..cfg.reps).map(move |r| (a, r, (ai * cfg.reps + r) as u64)))
        .map(|(a, r, i)| (a, r, cfg.seed.wrapping_add(i)))
        .collect();
    let run = || -> Result<Vec<ArmResult>> {
        jobs.par_iter()
            .map(|&(a, r, s)| run_arm(&graph, a, cfg, r, s))
            .collect()
    };
    let arms = match cfg.thread_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let table = ComparisonTable::from_arms(&cfg.algorithms, &arms, TARGET_ESS);
    Ok(ComparisonResult {
        config: cfg.clone(),
        table,
        arms,
    })
}

#[cfg(test)]
mod tests;
