//! The candidate sampler catalog.
//!
//! Four scalar samplers (random walk, log-scale random walk, slice, and
//! conjugate Gibbs) and three block samplers (multivariate random walk,
//! automated factor slice, automated factor random walk). Each sampler
//! carries its own adaptation state and internal clock; the clock counts
//! adaptation rounds and survives deactivation because whole states are
//! archived by the engine.

mod step;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use step::{sampler_step, StepOutcome, Workspace};

use crate::error::SamplerError;
use crate::model::{ConjugacyRelation, ModelGraph};

/// Sampler invocations between two adaptation rounds.
pub const ADAPT_INTERVAL: u64 = 200;
/// Acceptance target for univariate random-walk updates.
pub const SCALAR_TARGET: f64 = 0.44;
/// Acceptance target for multivariate random-walk updates.
pub const BLOCK_TARGET: f64 = 0.234;
/// Initial optimal-scaling constant.
pub const INITIAL_SCALE: f64 = 2.38;
/// Stepping-out limit for slice updates.
pub const MAX_SLICE_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Arw,
    Arwls,
    Slice,
    Gibbs,
    BlockArw,
    Afss,
    Afrw,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 7] = [
        SamplerKind::Arw,
        SamplerKind::Arwls,
        SamplerKind::Slice,
        SamplerKind::Gibbs,
        SamplerKind::BlockArw,
        SamplerKind::Afss,
        SamplerKind::Afrw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Arw => "arw",
            SamplerKind::Arwls => "arwls",
            SamplerKind::Slice => "slice",
            SamplerKind::Gibbs => "gibbs",
            SamplerKind::BlockArw => "block_arw",
            SamplerKind::Afss => "afss",
            SamplerKind::Afrw => "afrw",
        }
    }

    pub fn is_block(&self) -> bool {
        matches!(
            self,
            SamplerKind::BlockArw | SamplerKind::Afss | SamplerKind::Afrw
        )
    }

    fn uses_covariance(&self) -> bool {
        self.is_block()
    }

    fn uses_rotation(&self) -> bool {
        matches!(self, SamplerKind::Afss | SamplerKind::Afrw)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SamplerError::UnknownKind(s.to_string()))
    }
}

/// Tuning parameters, clock and bookkeeping of one sampler.
///
/// Matrices are stored row-major; `rotation` holds one axis per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub clock: u64,
    pub log_scales: Vec<f64>,
    pub mean: Vec<f64>,
    pub mean_initialized: bool,
    pub cov: Vec<f64>,
    /// Lower Cholesky factor of `cov`, used by block random-walk proposals.
    pub cov_factor: Vec<f64>,
    pub rotation: Vec<f64>,
    pub rotation_estimated: bool,
    pub widths: Vec<f64>,
    pub accepts: Vec<u64>,
    pub tries: Vec<u64>,
    pub expansion_sum: Vec<f64>,
    pub invocations: u64,
    pub batch_sum: Vec<f64>,
    pub batch_outer: Vec<f64>,
    pub batch_n: u64,
}

impl SamplerState {
    pub fn scale(&self) -> f64 {
        self.log_scales.first().map_or(f64::NAN, |l| l.exp())
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let b = self.mean.len();
        (b > 0 && self.cov.len() == b * b).then(|| DMatrix::from_row_slice(b, b, &self.cov))
    }

    /// Acceptance rate per axis since the last adaptation.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepts
            .iter()
            .zip(&self.tries)
            .map(|(&a, &t)| if t == 0 { f64::NAN } else { a as f64 / t as f64 })
            .collect()
    }
}

/// One sampler placed on a block of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerAssignment {
    pub kind: SamplerKind,
    pub block: Vec<usize>,
    pub state: SamplerState,
    #[serde(skip)]
    pub(crate) conjugacy: Option<ConjugacyRelation>,
}

impl SamplerAssignment {
    /// Validate `kind` on `block` and attach a default state.
    pub fn new(kind: SamplerKind, block: Vec<usize>, graph: &ModelGraph) -> Result<Self, SamplerError> {
        let state = default_state(kind, &block, graph)?;
        Self::with_state(kind, block, state, graph)
    }

    /// Validate `kind` on `block` and attach an existing state.
    pub fn with_state(
        kind: SamplerKind,
        block: Vec<usize>,
        state: SamplerState,
        graph: &ModelGraph,
    ) -> Result<Self, SamplerError> {
        check_compatible(kind, &block, graph)?;
        let conjugacy = if kind == SamplerKind::Gibbs {
            graph.detect_conjugacy(block[0])
        } else {
            None
        };
        Ok(Self {
            kind,
            block,
            state,
            conjugacy,
        })
    }

    /// Reattach derived data (conjugacy) after deserialisation.
    pub fn rebind(&mut self, graph: &ModelGraph) -> Result<(), SamplerError> {
        check_compatible(self.kind, &self.block, graph)?;
        if self.kind == SamplerKind::Gibbs {
            self.conjugacy = graph.detect_conjugacy(self.block[0]);
        }
        Ok(())
    }

    pub fn describe(&self, graph: &ModelGraph) -> String {
        let names: Vec<&str> = self
            .block
            .iter()
            .map(|&k| graph.dims()[k].name.as_str())
            .collect();
        format!("{}({})", self.kind, names.join(","))
    }
}

fn unsupported(kind: SamplerKind, block: &[usize], reason: &str) -> SamplerError {
    SamplerError::Unsupported {
        kind: kind.name().to_string(),
        block: block.to_vec(),
        reason: reason.to_string(),
    }
}

/// Whether `kind` may update `block` in `graph`.
pub fn check_compatible(kind: SamplerKind, block: &[usize], graph: &ModelGraph) -> Result<(), SamplerError> {
    if block.is_empty() {
        return Err(unsupported(kind, block, "empty block"));
    }
    if let Some(&k) = block.iter().find(|&&k| k >= graph.dim()) {
        return Err(unsupported(kind, block, &format!("dimension {k} out of range")));
    }
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != block.len() {
        return Err(unsupported(kind, block, "repeated dimension"));
    }
    if kind.is_block() {
        if block.len() < 2 {
            return Err(unsupported(kind, block, "block samplers need at least two dimensions"));
        }
    } else if block.len() != 1 {
        return Err(unsupported(kind, block, "scalar samplers take exactly one dimension"));
    }
    match kind {
        SamplerKind::Arwls if !graph.support(block[0]).is_positive() => {
            Err(unsupported(kind, block, "dimension is not positive-valued"))
        }
        SamplerKind::Gibbs if graph.detect_conjugacy(block[0]).is_none() => {
            Err(unsupported(kind, block, "no conjugate relation"))
        }
        _ => Ok(()),
    }
}

/// Initial tuning for a sampler that has never run.
pub fn default_state(kind: SamplerKind, block: &[usize], graph: &ModelGraph) -> Result<SamplerState, SamplerError> {
    check_compatible(kind, block, graph)?;
    let b = block.len();
    let log_scale = (INITIAL_SCALE / (b as f64).sqrt()).ln();
    let identity: Vec<f64> = (0..b * b)
        .map(|i| if i / b == i % b { 1.0 } else { 0.0 })
        .collect();
    let axes = match kind {
        SamplerKind::Afss | SamplerKind::Afrw => b,
        _ => 1,
    };
    let (log_scales, widths) = match kind {
        SamplerKind::Arw | SamplerKind::Arwls | SamplerKind::BlockArw => (vec![log_scale], vec![]),
        SamplerKind::Afrw => (vec![log_scale; b], vec![]),
        SamplerKind::Slice => (vec![], vec![1.0]),
        SamplerKind::Afss => (vec![], vec![1.0; b]),
        SamplerKind::Gibbs => (vec![], vec![]),
    };
    let cov_like = |v: &Vec<f64>| if kind.uses_covariance() { v.clone() } else { Vec::new() };
    Ok(SamplerState {
        clock: 0,
        log_scales,
        mean: if kind.uses_covariance() { vec![0.0; b] } else { Vec::new() },
        mean_initialized: false,
        cov: cov_like(&identity),
        cov_factor: cov_like(&identity),
        rotation: if kind.uses_rotation() { identity.clone() } else { Vec::new() },
        rotation_estimated: false,
        widths,
        accepts: vec![0; axes],
        tries: vec![0; axes],
        expansion_sum: vec![0.0; axes],
        invocations: 0,
        batch_sum: if kind.uses_covariance() { vec![0.0; b] } else { Vec::new() },
        batch_outer: cov_like(&vec![0.0; b * b]),
        batch_n: 0,
    })
}

/// A rotation and whether it came from an estimated covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    pub matrix: DMatrix<f64>,
    pub estimated: bool,
}

/// Eigenvectors of the sampler's covariance estimate, one per column,
/// ordered by descending eigenvalue; identity while fewer than two
/// adaptation rounds have run.
pub fn factor_rotation(state: &SamplerState) -> Rotation {
    let b = state.mean.len();
    match state.covariance() {
        Some(cov) if state.clock >= 2 => Rotation {
            matrix: eigen_rotation(&cov),
            estimated: true,
        },
        _ => Rotation {
            matrix: DMatrix::identity(b, b),
            estimated: false,
        },
    }
}

/// Orthonormal eigenvectors of a symmetric matrix, columns by descending
/// eigenvalue, each column's first non-negligible component positive.
pub fn eigen_rotation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut out = DMatrix::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col = -col;
            }
        }
        out.set_column(c, &col);
    }
    out
}

/// Robbins-Monro step size for internal clock value `c`.
pub fn step_size(c: u64) -> f64 {
    (1.0 + c as f64).powf(-0.7)
}

/// Run an adaptation round when the interval has elapsed, using the step
/// size of the incremented clock. Returns the matrix-work cost, if any.
pub fn adapt_if_due(a: &mut SamplerAssignment) -> Option<u64> {
    (a.state.invocations >= ADAPT_INTERVAL).then(|| {
        let gamma = step_size(a.state.clock + 1);
        sampler_adapt(a, gamma)
    })
}

/// Apply one adaptation round with step size `gamma`. Returns the cost
/// units spent on matrix work.
pub fn sampler_adapt(a: &mut SamplerAssignment, gamma: f64) -> u64 {
    let kind = a.kind;
    let st = &mut a.state;
    st.clock += 1;
    let b = a.block.len();
    let mut cost = 0;

    let target = if kind == SamplerKind::BlockArw { BLOCK_TARGET } else { SCALAR_TARGET };
    for (axis, ls) in st.log_scales.iter_mut().enumerate() {
        if st.tries[axis] > 0 {
            let rate = st.accepts[axis] as f64 / st.tries[axis] as f64;
            *ls += gamma * (rate - target);
        }
    }

    if kind.uses_covariance() && st.batch_n > 0 {
        let moved = kind == SamplerKind::Afss || st.accepts.iter().any(|&x| x > 0);
        if moved {
            let n = st.batch_n as f64;
            for i in 0..b * b {
                let s = st.batch_outer[i] / n;
                st.cov[i] += gamma * (s - st.cov[i]);
            }
            // keep exact symmetry
            for i in 0..b {
                for j in 0..i {
                    let v = 0.5 * (st.cov[i * b + j] + st.cov[j * b + i]);
                    st.cov[i * b + j] = v;
                    st.cov[j * b + i] = v;
                }
            }
            for i in 0..b {
                st.mean[i] += gamma * st.batch_sum[i] / n;
            }
            cost += (b * b * b).div_ceil(32) as u64;
            if kind == SamplerKind::BlockArw {
                st.cov_factor = lower_factor(&st.cov, b);
            }
            if kind.uses_rotation() && st.clock >= 2 {
                let cov = DMatrix::from_row_slice(b, b, &st.cov);
                let rot = eigen_rotation(&cov);
                st.rotation = rot.transpose().as_slice().to_vec();
                st.rotation_estimated = true;
            }
        }
    }

    for (axis, w) in st.widths.iter_mut().enumerate() {
        if st.tries[axis] > 0 {
            let mean_expansion = st.expansion_sum[axis] / st.tries[axis] as f64;
            let step = (mean_expansion.ln() - std::f64::consts::LN_2).clamp(-1.0, 1.0);
            *w *= (gamma * step).exp();
        }
    }

    st.accepts.iter_mut().for_each(|x| *x = 0);
    st.tries.iter_mut().for_each(|x| *x = 0);
    st.expansion_sum.iter_mut().for_each(|x| *x = 0.0);
    st.batch_sum.iter_mut().for_each(|x| *x = 0.0);
    st.batch_outer.iter_mut().for_each(|x| *x = 0.0);
    st.batch_n = 0;
    st.invocations = 0;
    cost
}

/// Row-major lower Cholesky factor, regularised if needed.
fn lower_factor(cov: &[f64], b: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(b, b, cov);
    let max_diag = (0..b).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for jitter in [0.0, 1e-10, 1e-8, 1e-6, 1e-4] {
        let mut mj = m.clone();
        for i in 0..b {
            mj[(i, i)] += jitter * max_diag;
        }
        if let Some(ch) = nalgebra::Cholesky::new(mj) {
            return ch.l().transpose().as_slice().to_vec();
        }
    }
    // diagonal fallback
    let mut out = vec![0.0; b * b];
    for i in 0..b {
        out[i * b + i] = m[(i, i)].abs().sqrt().max(1e-12);
    }
    out
}

#[cfg(test)]
mod tests;
