//! The adaptive engine: runs a kernel for a segment, measures its
//! efficiency, and between segments may swap the sampler on the
//! worst-mixing dimension.

mod kernel;
mod propose;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{validate_kernel, ClockState, KernelComposition, KernelValidity, SamplerArchive};
pub use propose::{propose_kernel, Proposal, ProposalSettings};

use crate::blocking::CUT_HEIGHTS;
use crate::diagnostics::{efficiency_report, ChainTrace, EfficiencyReport, PooledMoments};
use crate::error::{Error, Result};
use crate::model::{ModelGraph, StateVector};
use crate::samplers::{adapt_if_due, sampler_step, SamplerAssignment, SamplerKind, Workspace};

/// What a segment's computation time is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    /// Deterministic cost units from the model's density work.
    #[default]
    Cost,
    /// Elapsed seconds on a monotonic clock.
    Wall,
}

/// Probability of attempting an outer adaptation after outer step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// `min(1, k^-1/2)`.
    Decay,
    Constant(f64),
}

impl Default for Trigger {
    fn default() -> Self {
        Trigger::Decay
    }
}

impl Trigger {
    pub fn probability(&self, k: usize) -> f64 {
        match *self {
            Trigger::Decay => (1.0 / (k.max(1) as f64).sqrt()).min(1.0),
            Trigger::Constant(p) => p,
        }
    }
}

/// Outer and inner schedules of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoAdaptConfig {
    /// Number of outer iterations M.
    pub outer: usize,
    /// Kernel sweeps per outer iteration.
    pub inner: usize,
    /// Sampler kinds the outer adapter may choose from.
    pub candidates: Vec<SamplerKind>,
    pub trigger: Trigger,
    pub cut_heights: Vec<f64>,
    /// Chance of keeping other block members' existing samplers.
    pub keep_probability: f64,
    pub time: TimeSource,
    /// Keep every segment's samples in the result.
    pub retain_traces: bool,
}

impl Default for AutoAdaptConfig {
    fn default() -> Self {
        Self {
            outer: 15,
            inner: 10_000,
            candidates: SamplerKind::ALL.to_vec(),
            trigger: Trigger::Decay,
            cut_heights: CUT_HEIGHTS.to_vec(),
            keep_probability: 0.5,
            time: TimeSource::Cost,
            retain_traces: true,
        }
    }
}

impl AutoAdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer > 0 && self.inner < crate::diagnostics::MIN_CHAIN {
            return Err(Error::Config(format!(
                "inner iterations must be at least {}, got {}",
                crate::diagnostics::MIN_CHAIN,
                self.inner
            )));
        }
        if self.candidates.is_empty() {
            return Err(Error::Config("candidate sampler list is empty".into()));
        }
        if self.cut_heights.is_empty() || self.cut_heights.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return Err(Error::Config("cut heights must be non-empty and within [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(Error::Config("keep probability must be within [0, 1]".into()));
        }
        if let Trigger::Constant(p) = self.trigger {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("trigger probability must be within [0, 1]".into()));
            }
        }
        Ok(())
    }

    fn proposal_settings(&self) -> ProposalSettings {
        ProposalSettings {
            candidates: self.candidates.clone(),
            cut_heights: self.cut_heights.clone(),
            keep_probability: self.keep_probability,
        }
    }
}

/// Scalar kind used for a dimension by the all-scalar kernel.
pub fn default_scalar_kind(graph: &ModelGraph, k: usize) -> SamplerKind {
    if graph.support(k).is_positive() {
        SamplerKind::Arwls
    } else {
        SamplerKind::Arw
    }
}

/// One scalar random-walk sampler per dimension, log-scale where the
/// support is positive.
pub fn all_scalar_kernel(graph: &ModelGraph) -> Result<KernelComposition> {
    let samplers = (0..graph.dim())
        .map(|k| SamplerAssignment::new(default_scalar_kind(graph, k), vec![k], graph))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(KernelComposition::new(samplers, 0))
}

/// Samples and timing of one run of a kernel.
#[derive(Debug, Clone)]
pub struct Segment {
    pub trace: ChainTrace,
    /// Cost units spent on sampling steps.
    pub step_cost: u64,
    /// Cost units spent on inner adaptation.
    pub adapt_cost: u64,
    pub wall_seconds: f64,
}

impl Segment {
    pub fn cost(&self) -> u64 {
        self.step_cost + self.adapt_cost
    }
}

/// Apply the kernel `n` times, adapting each sampler on its own cadence.
/// Sampler states are written to `archive` afterwards.
#[allow(clippy::too_many_arguments)]
pub fn run_segment<R: Rng + ?Sized>(
    kernel: &mut KernelComposition,
    graph: &ModelGraph,
    x: &mut StateVector,
    n: usize,
    time: TimeSource,
    archive: &mut SamplerArchive,
    record: bool,
    rng: &mut R,
) -> Result<Segment> {
    let start = Instant::now();
    let mut ws: Vec<Workspace> = kernel
        .samplers
        .iter()
        .map(|s| Workspace::new(graph, s))
        .collect();
    let mut trace = ChainTrace::with_capacity(graph.dim_names(), if record { n } else { 0 });
    trace.kernel = kernel.describe(graph);
    let mut step_cost = 0;
    let mut adapt_cost = 0;
    for _ in 0..n {
        for (s, w) in kernel.samplers.iter_mut().zip(ws.iter_mut()) {
            step_cost += sampler_step(s, graph, x, w, rng)?.density_evals;
            if let Some(c) = adapt_if_due(s) {
                adapt_cost += c;
            }
        }
        if record {
            trace.push(x.values());
        }
    }
    archive.store_kernel(kernel);
    let wall_seconds = start.elapsed().as_secs_f64();
    trace.time = match time {
        TimeSource::Cost => (step_cost + adapt_cost) as f64,
        TimeSource::Wall => wall_seconds,
    };
    Ok(Segment {
        trace,
        step_cost,
        adapt_cost,
        wall_seconds,
    })
}

/// What happened in one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub kernel_id: String,
    pub kernel: Vec<String>,
    pub efficiency: f64,
    pub k_min: usize,
    pub k_min_name: String,
    pub segment_time: f64,
    pub best_efficiency: f64,
    pub improved: bool,
    pub reverted: bool,
    pub triggered: bool,
    /// Clock values after this iteration's transition.
    pub clocks: ClockState,
    pub proposal: Option<String>,
    /// Set when a proposal was attempted but no candidate applied.
    pub proposal_flagged: bool,
    pub valid: bool,
}

/// Best kernel found so far and the report it was measured with.
#[derive(Debug, Clone)]
struct Best {
    kernel: KernelComposition,
    efficiency: f64,
}

/// Outer adaptation loop as an explicit state machine, so callers can
/// inspect the kernel, clocks and archive between outer iterations.
pub struct AutoAdapt<'g, R: Rng> {
    graph: &'g ModelGraph,
    config: AutoAdaptConfig,
    rng: R,
    kernel: KernelComposition,
    best: Option<Best>,
    archive: SamplerArchive,
    clocks: ClockState,
    x: StateVector,
    iteration: usize,
    history: Vec<OuterRecord>,
    reports: Vec<EfficiencyReport>,
    traces: Vec<ChainTrace>,
    /// Moments of every sample drawn so far, for block selection.
    pooled: PooledMoments,
    wall_seconds: Vec<f64>,
    adapt_time: f64,
}

/// Everything a finished outer loop produced.
#[derive(Debug, Clone)]
pub struct AutoAdaptResult {
    pub best: KernelComposition,
    pub best_efficiency: f64,
    pub history: Vec<OuterRecord>,
    pub reports: Vec<EfficiencyReport>,
    pub traces: Vec<ChainTrace>,
    pub archive: SamplerArchive,
    pub clocks: ClockState,
    /// Chain state after the last segment.
    pub state: StateVector,
    /// Total segment time across outer iterations.
    pub adapt_time: f64,
    pub wall_seconds: Vec<f64>,
}

impl<'g, R: Rng> AutoAdapt<'g, R> {
    /// Start from the all-scalar kernel at the graph's initial state.
    pub fn new(graph: &'g ModelGraph, config: AutoAdaptConfig, rng: R) -> Result<Self> {
        let kernel = all_scalar_kernel(graph)?;
        Self::with_kernel(graph, config, kernel, graph.initial_state(), rng)
    }

    pub fn with_kernel(
        graph: &'g ModelGraph,
        config: AutoAdaptConfig,
        kernel: KernelComposition,
        x: StateVector,
        rng: R,
    ) -> Result<Self> {
        config.validate()?;
        let validity = validate_kernel(&kernel, graph.dim());
        if !validity.is_ok() {
            return Err(Error::InvalidKernel(validity.uncovered));
        }
        Ok(Self {
            graph,
            config,
            rng,
            kernel,
            best: None,
            archive: SamplerArchive::new(),
            clocks: ClockState::default(),
            x,
            iteration: 0,
            history: Vec::new(),
            reports: Vec::new(),
            traces: Vec::new(),
            pooled: PooledMoments::new(graph.dim()),
            wall_seconds: Vec::new(),
            adapt_time: 0.0,
        })
    }

    pub fn kernel(&self) -> &KernelComposition {
        &self.kernel
    }

    pub fn archive(&self) -> &SamplerArchive {
        &self.archive
    }

    pub fn clocks(&self) -> ClockState {
        self.clocks
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &[OuterRecord] {
        &self.history
    }

    pub fn state(&self) -> &StateVector {
        &self.x
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.outer
    }

    /// Replace the working kernel, e.g. to force a particular swap.
    pub fn set_kernel(&mut self, kernel: KernelComposition) -> Result<()> {
        let validity = validate_kernel(&kernel, self.graph.dim());
        if !validity.is_ok() {
            return Err(Error::InvalidKernel(validity.uncovered));
        }
        self.kernel = kernel;
        Ok(())
    }

    /// Run one segment with the working kernel, update the best kernel,
    /// then draw the outer trigger and possibly propose a new kernel.
    pub fn step(&mut self) -> Result<&OuterRecord> {
        let graph = self.graph;
        self.iteration += 1;
        let n = self.iteration;
        let seg = run_segment(
            &mut self.kernel,
            graph,
            &mut self.x,
            self.config.inner,
            self.config.time,
            &mut self.archive,
            true,
            &mut self.rng,
        )?;
        self.adapt_time += seg.trace.time;
        self.wall_seconds.push(seg.wall_seconds);
        let report = efficiency_report(&seg.trace)?;
        self.pooled.add_trace(&seg.trace);
        let eff = report.overall;
        let measured_kernel = self.kernel.clone();

        let improved = self.best.as_ref().is_none_or(|b| eff >= b.efficiency);
        let mut reverted = false;
        if improved {
            self.best = Some(Best {
                kernel: self.kernel.clone(),
                efficiency: eff,
            });
        } else {
            let best = self.best.as_ref().expect("best exists after first iteration");
            self.kernel = self.restore(&best.kernel)?;
            reverted = true;
        }
        let best = self.best.as_ref().expect("best set");
        let best_eff = best.efficiency;
        let k_min = report.k_min;

        let p = self.config.trigger.probability(n + 1);
        let triggered = self.rng.random::<f64>() < p;
        let mut proposal = None;
        let mut flagged = false;
        if triggered {
            let corr = self.pooled.correlation();
            let prop = propose_kernel(
                &self.kernel,
                graph,
                k_min,
                &corr,
                &self.config.proposal_settings(),
                &self.archive,
                n,
                &mut self.rng,
            )?;
            flagged = !prop.changed;
            proposal = Some(prop.description);
            self.kernel = prop.kernel;
        }
        self.clocks.advance(triggered);
        let valid = validate_kernel(&self.kernel, graph.dim()).is_ok();
        if !valid {
            return Err(Error::InvalidKernel(validate_kernel(&self.kernel, graph.dim()).uncovered));
        }

        self.history.push(OuterRecord {
            iteration: n,
            kernel_id: measured_kernel.id_hex(),
            kernel: measured_kernel.describe(graph),
            efficiency: eff,
            k_min: report.k_min,
            k_min_name: graph.dims()[report.k_min].name.clone(),
            segment_time: seg.trace.time,
            best_efficiency: best_eff,
            improved,
            reverted,
            triggered,
            clocks: self.clocks,
            proposal,
            proposal_flagged: flagged,
            valid,
        });
        self.reports.push(report);
        if self.config.retain_traces {
            self.traces.push(seg.trace);
        }
        Ok(self.history.last().expect("just pushed"))
    }

    /// The structure of `k` with each sampler's latest archived state.
    fn restore(&self, k: &KernelComposition) -> Result<KernelComposition> {
        let samplers = k
            .samplers
            .iter()
            .map(|s| self.archive.activate(s.kind, s.block.clone(), self.graph))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(KernelComposition::new(samplers, k.created_at))
    }

    /// Run the remaining outer iterations and return the results.
    pub fn run(mut self) -> Result<AutoAdaptResult> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }

    /// Stop and return the best kernel, with archived states.
    pub fn finish(self) -> Result<AutoAdaptResult> {
        let (best, best_efficiency) = match &self.best {
            Some(b) => (self.restore(&b.kernel)?, b.efficiency),
            None => (self.kernel.clone(), f64::NAN),
        };
        Ok(AutoAdaptResult {
            best,
            best_efficiency,
            history: self.history,
            reports: self.reports,
            traces: self.traces,
            archive: self.archive,
            clocks: self.clocks,
            state: self.x,
            adapt_time: self.adapt_time,
            wall_seconds: self.wall_seconds,
        })
    }
}

/// Run the full outer loop from the all-scalar kernel.
pub fn run_auto_adapt<R: Rng>(graph: &ModelGraph, config: &AutoAdaptConfig, rng: R) -> Result<AutoAdaptResult> {
    AutoAdapt::new(graph, config.clone(), rng)?.run()
}

#[cfg(test)]
mod tests;
