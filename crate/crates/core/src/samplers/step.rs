use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};

use super::{SamplerAssignment, SamplerKind, MAX_SLICE_STEPS};
use crate::error::SamplerError;
use crate::model::{ModelGraph, NodeId, StateVector};

/// Result of one sampler invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// Cost units spent on conditional log-density work.
    pub density_evals: u64,
}

/// Scratch space tied to one assignment: its density blanket and buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    blanket: Vec<NodeId>,
    terms: Vec<f64>,
    saved: Vec<f64>,
    direction: Vec<f64>,
}

impl Workspace {
    pub fn new(graph: &ModelGraph, a: &SamplerAssignment) -> Self {
        let b = a.block.len();
        Self {
            blanket: graph.blanket(&a.block),
            terms: Vec::new(),
            saved: vec![0.0; b],
            direction: vec![0.0; b],
        }
    }

    pub fn blanket(&self) -> &[NodeId] {
        &self.blanket
    }
}

/// One transition of the assignment's sampler, modifying only its block.
pub fn sampler_step<R: Rng + ?Sized>(
    a: &mut SamplerAssignment,
    graph: &ModelGraph,
    x: &mut StateVector,
    ws: &mut Workspace,
    rng: &mut R,
) -> Result<StepOutcome, SamplerError> {
    let mut cost = 0;
    let accepted = match a.kind {
        SamplerKind::Arw => {
            let k = a.block[0];
            let x0 = x.get(k);
            let z: f64 = rng.sample(StandardNormal);
            let y = x0 + a.state.log_scales[0].exp() * z;
            mh_scalar(graph, x, ws, k, y, 0.0, rng, &mut cost)
        }
        SamplerKind::Arwls => {
            let k = a.block[0];
            let x0 = x.get(k);
            let z: f64 = rng.sample(StandardNormal);
            let step = a.state.log_scales[0].exp() * z;
            let y = x0 * step.exp();
            mh_scalar(graph, x, ws, k, y, step, rng, &mut cost)
        }
        SamplerKind::Slice => {
            ws.direction[0] = 1.0;
            let ratio = slice_along(graph, x, ws, &a.block, a.state.widths[0], 0, rng, &mut cost);
            a.state.expansion_sum[0] += ratio;
            true
        }
        SamplerKind::Gibbs => {
            let k = a.block[0];
            let rel = a.conjugacy.as_ref().ok_or_else(|| SamplerError::Unsupported {
                kind: a.kind.name().to_string(),
                block: a.block.clone(),
                reason: "no conjugate relation".to_string(),
            })?;
            let (pa, pb) = rel.posterior(graph, x.values());
            let draw = Beta::new(pa, pb)
                .map(|d| d.sample(rng))
                .unwrap_or(x.get(k));
            let v = draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            x.values_mut()[k] = v;
            graph.eval_nodes(x, &ws.blanket, &mut ws.terms, &mut cost);
            x.commit(&ws.blanket, &ws.terms);
            true
        }
        SamplerKind::BlockArw => {
            let b = a.block.len();
            let s = a.state.log_scales[0].exp();
            let z: Vec<f64> = (0..b).map(|_| rng.sample(StandardNormal)).collect();
            let l = &a.state.cov_factor;
            for i in 0..b {
                let mut d = 0.0;
                for j in 0..=i {
                    d += l[i * b + j] * z[j];
                }
                ws.direction[i] = s * d;
            }
            cost += (b * b).div_ceil(32) as u64;
            mh_block(graph, x, ws, &a.block, 1.0, rng, &mut cost)
        }
        SamplerKind::Afss => {
            let b = a.block.len();
            for axis in 0..b {
                for i in 0..b {
                    ws.direction[i] = a.state.rotation[i * b + axis];
                }
                let w = a.state.widths[axis];
                let ratio = slice_along(graph, x, ws, &a.block, w, b, rng, &mut cost);
                a.state.expansion_sum[axis] += ratio;
                a.state.tries[axis] += 1;
                a.state.accepts[axis] += 1;
            }
            true
        }
        SamplerKind::Afrw => {
            let b = a.block.len();
            let mut any = false;
            for axis in 0..b {
                for i in 0..b {
                    ws.direction[i] = a.state.rotation[i * b + axis];
                }
                let z: f64 = rng.sample(StandardNormal);
                let t = a.state.log_scales[axis].exp() * z;
                cost += b.div_ceil(32) as u64;
                let ok = mh_block(graph, x, ws, &a.block, t, rng, &mut cost);
                a.state.tries[axis] += 1;
                if ok {
                    a.state.accepts[axis] += 1;
                }
                any |= ok;
            }
            any
        }
    };

    let st = &mut a.state;
    match a.kind {
        SamplerKind::Arw | SamplerKind::Arwls | SamplerKind::BlockArw => {
            st.tries[0] += 1;
            if accepted {
                st.accepts[0] += 1;
            }
        }
        SamplerKind::Slice | SamplerKind::Gibbs => {
            st.tries[0] += 1;
            st.accepts[0] += 1;
        }
        SamplerKind::Afss | SamplerKind::Afrw => {}
    }
    if a.kind.is_block() {
        record_batch(a, x);
    }
    a.state.invocations += 1;
    Ok(StepOutcome {
        accepted,
        density_evals: cost,
    })
}

/// Accumulate the scatter of the block's current value about the mean.
fn record_batch(a: &mut SamplerAssignment, x: &StateVector) {
    let st = &mut a.state;
    let b = a.block.len();
    if !st.mean_initialized {
        for (m, &k) in st.mean.iter_mut().zip(&a.block) {
            *m = x.get(k);
        }
        st.mean_initialized = true;
    }
    for i in 0..b {
        let di = x.get(a.block[i]) - st.mean[i];
        st.batch_sum[i] += di;
        for j in 0..b {
            let dj = x.get(a.block[j]) - st.mean[j];
            st.batch_outer[i * b + j] += di * dj;
        }
    }
    st.batch_n += 1;
}

/// Metropolis-Hastings on one dimension; `log_jacobian` is added to the
/// log acceptance ratio.
#[allow(clippy::too_many_arguments)]
fn mh_scalar<R: Rng + ?Sized>(
    graph: &ModelGraph,
    x: &mut StateVector,
    ws: &mut Workspace,
    k: usize,
    y: f64,
    log_jacobian: f64,
    rng: &mut R,
    cost: &mut u64,
) -> bool {
    let x0 = x.get(k);
    let old = x.cached_sum(&ws.blanket);
    x.values_mut()[k] = y;
    let new = graph.eval_nodes(x, &ws.blanket, &mut ws.terms, cost);
    if accept(log_accept_ratio(new, old, log_jacobian), rng) {
        x.commit(&ws.blanket, &ws.terms);
        true
    } else {
        x.values_mut()[k] = x0;
        false
    }
}

/// Metropolis-Hastings move `x + t * direction` on the block.
fn mh_block<R: Rng + ?Sized>(
    graph: &ModelGraph,
    x: &mut StateVector,
    ws: &mut Workspace,
    block: &[usize],
    t: f64,
    rng: &mut R,
    cost: &mut u64,
) -> bool {
    let old = x.cached_sum(&ws.blanket);
    for (i, &k) in block.iter().enumerate() {
        ws.saved[i] = x.get(k);
        x.values_mut()[k] = ws.saved[i] + t * ws.direction[i];
    }
    let new = graph.eval_nodes(x, &ws.blanket, &mut ws.terms, cost);
    if accept(new - old, rng) {
        x.commit(&ws.blanket, &ws.terms);
        true
    } else {
        for (i, &k) in block.iter().enumerate() {
            x.values_mut()[k] = ws.saved[i];
        }
        false
    }
}

/// Log acceptance ratio of a move proposed symmetrically in a transformed
/// space; for log-scale proposals `log_jacobian = ln y - ln x`.
pub(crate) fn log_accept_ratio(lp_new: f64, lp_old: f64, log_jacobian: f64) -> f64 {
    lp_new - lp_old + log_jacobian
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Log density of the blanket at `x0 + t * direction`; leaves the block
/// at that point.
#[allow(clippy::too_many_arguments)]
fn density_at(
    graph: &ModelGraph,
    x: &mut StateVector,
    ws: &mut Workspace,
    block: &[usize],
    t: f64,
    axis_cost: u64,
    cost: &mut u64,
) -> f64 {
    for (i, &k) in block.iter().enumerate() {
        x.values_mut()[k] = ws.saved[i] + t * ws.direction[i];
    }
    *cost += axis_cost;
    graph.eval_nodes(x, &ws.blanket, &mut ws.terms, cost)
}

/// Slice update along `direction` with stepping out and shrinkage.
/// Returns the stepped-out bracket length in units of `w`.
#[allow(clippy::too_many_arguments)]
fn slice_along<R: Rng + ?Sized>(
    graph: &ModelGraph,
    x: &mut StateVector,
    ws: &mut Workspace,
    block: &[usize],
    w: f64,
    block_len: usize,
    rng: &mut R,
    cost: &mut u64,
) -> f64 {
    let axis_cost = if block_len > 1 { block_len.div_ceil(32) as u64 } else { 0 };
    for (i, &k) in block.iter().enumerate() {
        ws.saved[i] = x.get(k);
    }
    let f0 = x.cached_sum(&ws.blanket);
    let e: f64 = rng.sample(Exp1);
    let level = f0 - e;

    let u: f64 = rng.random();
    let mut lo = -w * u;
    let mut hi = lo + w;
    let j = (rng.random::<f64>() * MAX_SLICE_STEPS as f64).floor() as usize;
    let mut left_steps = j;
    let mut right_steps = MAX_SLICE_STEPS - 1 - j;
    while left_steps > 0 && density_at(graph, x, ws, block, lo, axis_cost, cost) > level {
        lo -= w;
        left_steps -= 1;
    }
    while right_steps > 0 && density_at(graph, x, ws, block, hi, axis_cost, cost) > level {
        hi += w;
        right_steps -= 1;
    }
    let ratio = (hi - lo) / w;

    loop {
        let t = lo + rng.random::<f64>() * (hi - lo);
        let f = density_at(graph, x, ws, block, t, axis_cost, cost);
        if f > level {
            x.commit(&ws.blanket, &ws.terms);
            return ratio;
        }
        if t < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= f64::EPSILON * (1.0 + ws.saved.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            // bracket collapsed onto the current point
            for (i, &k) in block.iter().enumerate() {
                x.values_mut()[k] = ws.saved[i];
            }
            graph.eval_nodes(x, &ws.blanket, &mut ws.terms, cost);
            x.commit(&ws.blanket, &ws.terms);
            return ratio;
        }
    }
}
