//! Bayesian hierarchical models as directed acyclic graphs.
//!
//! A [`ModelGraph`] holds stochastic and deterministic nodes in topological
//! order. Every element of a non-observed stochastic node is one sampled
//! scalar dimension; a [`StateVector`] stores those values flat, together
//! with a per-node cache of log-density terms that samplers keep in sync.

mod dist;
mod expr;
mod parse;

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use dist::{
    ln_beta_density, ln_binomial_kernel, ln_choose, ln_gamma_density, ln_normal, ln_normal_prec,
    ln_poisson_kernel, ln_uniform, DistKind, DistanceMatrix, Distribution, NormalScale, Support,
};
pub use expr::{Expr, Link, NameRef, ValueRef};
pub use parse::parse_model;

use crate::error::ModelError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind<R = ValueRef> {
    Stochastic {
        dist: Distribution<R>,
        observed: Option<Vec<f64>>,
        init: Option<Vec<f64>>,
    },
    Deterministic {
        expr: Expr<R>,
    },
}

/// One node of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec<R = ValueRef> {
    pub name: String,
    pub kind: NodeKind<R>,
    pub len: usize,
    pub support: Support,
}

impl NodeSpec<NameRef> {
    pub fn observe(&mut self, values: Vec<f64>) -> &mut Self {
        if let NodeKind::Stochastic { observed, .. } = &mut self.kind {
            *observed = Some(values);
        }
        self
    }

    pub fn init(&mut self, values: Vec<f64>) -> &mut Self {
        if let NodeKind::Stochastic { init, .. } = &mut self.kind {
            *init = Some(values);
        }
        self
    }

    /// Restrict a normal node to `(0, inf)`.
    pub fn truncate_positive(&mut self) -> &mut Self {
        self.support = Support::PositiveReal;
        self
    }
}

impl<R> NodeSpec<R> {
    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, NodeKind::Stochastic { .. })
    }

    pub fn is_observed(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Stochastic {
                observed: Some(_),
                ..
            }
        )
    }

    pub fn distribution(&self) -> Option<&Distribution<R>> {
        match &self.kind {
            NodeKind::Stochastic { dist, .. } => Some(dist),
            NodeKind::Deterministic { .. } => None,
        }
    }

    fn refs(&self) -> Vec<&R> {
        match &self.kind {
            NodeKind::Stochastic { dist, .. } => {
                dist.params().into_iter().flat_map(|e| e.refs()).collect()
            }
            NodeKind::Deterministic { expr } => expr.refs().collect(),
        }
    }
}

/// Declarative model description; nodes may be declared in any order
/// consistent with a DAG.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    nodes: Vec<NodeSpec<NameRef>>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stochastic(
        &mut self,
        name: impl Into<String>,
        dist: Distribution<NameRef>,
    ) -> &mut NodeSpec<NameRef> {
        let len = match &dist {
            Distribution::MvnExpCov { distances, .. } => distances.n,
            _ => 1,
        };
        let support = dist.default_support();
        self.nodes.push(NodeSpec {
            name: name.into(),
            kind: NodeKind::Stochastic {
                dist,
                observed: None,
                init: None,
            },
            len,
            support,
        });
        self.nodes.last_mut().unwrap()
    }

    pub fn observed(
        &mut self,
        name: impl Into<String>,
        dist: Distribution<NameRef>,
        values: Vec<f64>,
    ) -> &mut NodeSpec<NameRef> {
        self.stochastic(name, dist).observe(values)
    }

    pub fn deterministic(
        &mut self,
        name: impl Into<String>,
        expr: Expr<NameRef>,
    ) -> &mut NodeSpec<NameRef> {
        self.nodes.push(NodeSpec {
            name: name.into(),
            kind: NodeKind::Deterministic { expr },
            len: 1,
            support: Support::Real,
        });
        self.nodes.last_mut().unwrap()
    }

    pub fn push(&mut self, node: NodeSpec<NameRef>) {
        self.nodes.push(node);
    }

    pub fn nodes(&self) -> &[NodeSpec<NameRef>] {
        &self.nodes
    }

    pub fn build(self) -> Result<ModelGraph, ModelError> {
        ModelGraph::from_specs(self.nodes)
    }
}

/// Location of one sampled scalar dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimInfo {
    pub node: NodeId,
    pub elem: usize,
    pub name: String,
    pub support: Support,
}

/// Beta-binomial is the only family handled in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateFamily {
    BetaBinomial,
}

/// A closed-form full conditional for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyRelation {
    pub dim: usize,
    pub family: ConjugateFamily,
    prior_a: Expr,
    prior_b: Expr,
    /// Observed binomial nodes whose success probability is this dimension.
    pub dependents: Vec<NodeId>,
}

impl ConjugacyRelation {
    /// Posterior `Beta(a + sum y, b + sum (n - y))` at the current state.
    pub fn posterior(&self, graph: &ModelGraph, values: &[f64]) -> (f64, f64) {
        let mut a = graph.eval_expr(&self.prior_a, values);
        let mut b = graph.eval_expr(&self.prior_b, values);
        for &d in &self.dependents {
            let node = &graph.nodes[d];
            if let NodeKind::Stochastic {
                dist: Distribution::Binomial { n, .. },
                observed: Some(y),
                ..
            } = &node.kind
            {
                let n = graph.eval_expr(n, values);
                a += y[0];
                b += n - y[0];
            }
        }
        (a, b)
    }
}

/// Cholesky factor of an exponential correlation matrix.
#[derive(Debug)]
struct Factor {
    l: DMatrix<f64>,
    logdet: f64,
}

/// Two most recent factorizations of an MVN node, keyed by range.
#[derive(Debug, Clone, Default)]
struct FactorCache {
    slots: [Option<(u64, Arc<Factor>)>; 2],
    next: usize,
}

impl FactorCache {
    fn lookup(&self, key: u64) -> Option<Arc<Factor>> {
        self.slots
            .iter()
            .flatten()
            .find(|(k, _)| *k == key)
            .map(|(_, f)| f.clone())
    }

    fn insert(&mut self, key: u64, f: Arc<Factor>) {
        self.slots[self.next] = Some((key, f));
        self.next = 1 - self.next;
    }
}

/// The current point of a chain plus cached per-node log-density terms.
#[derive(Debug, Clone)]
pub struct StateVector {
    values: Vec<f64>,
    terms: Vec<f64>,
    factors: Vec<FactorCache>,
}

impl StateVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of the cached node terms.
    pub fn cached_log_density(&self) -> f64 {
        self.terms.iter().sum()
    }

    pub fn cached_term(&self, node: NodeId) -> f64 {
        self.terms[node]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn cached_sum(&self, nodes: &[NodeId]) -> f64 {
        nodes.iter().map(|&n| self.terms[n]).sum()
    }

    pub(crate) fn commit(&mut self, nodes: &[NodeId], terms: &[f64]) {
        for (&n, &t) in nodes.iter().zip(terms) {
            self.terms[n] = t;
        }
    }
}

/// Cost units charged per node-term evaluation.
pub mod cost {
    /// Work of a quadratic form with a cached `n x n` factor.
    pub fn mvn_solve(n: usize) -> u64 {
        1 + (n * n).div_ceil(32) as u64
    }

    /// Work of refactorising an `n x n` covariance.
    pub fn mvn_factor(n: usize) -> u64 {
        (n * n * n).div_ceil(192) as u64
    }
}

/// A model as a DAG over stochastic and deterministic nodes.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    nodes: Vec<NodeSpec>,
    names: HashMap<String, NodeId>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    dims: Vec<DimInfo>,
    offsets: Vec<Option<usize>>,
    /// Owner node plus stochastic dependents of each dimension, sorted.
    dim_blanket: Vec<Vec<NodeId>>,
    /// Constant part of observed binomial / Poisson terms.
    obs_const: Vec<f64>,
}

impl ModelGraph {
    pub fn from_specs(specs: Vec<NodeSpec<NameRef>>) -> Result<Self, ModelError> {
        let mut decl: HashMap<&str, usize> = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            if decl.insert(s.name.as_str(), i).is_some() {
                return Err(ModelError::DuplicateName(s.name.clone()));
            }
        }

        // resolve parent declarations
        let mut decl_parents: Vec<Vec<usize>> = Vec::with_capacity(specs.len());
        for s in &specs {
            let mut ps = BTreeSet::new();
            for r in s.refs() {
                let Some(&p) = decl.get(r.name.as_str()) else {
                    return Err(ModelError::UnresolvedReference {
                        node: s.name.clone(),
                        reference: r.to_string(),
                    });
                };
                let target = &specs[p];
                let elem = r.elem.unwrap_or(0);
                if r.elem.is_none() && target.len > 1 {
                    return Err(ModelError::Invalid {
                        node: s.name.clone(),
                        msg: format!("reference to vector `{}` needs an index", r.name),
                    });
                }
                if elem >= target.len {
                    return Err(ModelError::UnresolvedReference {
                        node: s.name.clone(),
                        reference: r.to_string(),
                    });
                }
                ps.insert(p);
            }
            decl_parents.push(ps.into_iter().collect());
        }

        // Kahn's algorithm, lowest declaration index first
        let n = specs.len();
        let mut indeg = vec![0usize; n];
        let mut decl_children = vec![Vec::new(); n];
        for (i, ps) in decl_parents.iter().enumerate() {
            indeg[i] = ps.len();
            for &p in ps {
                decl_children[p].push(i);
            }
        }
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = heap.pop() {
            order.push(i);
            for &c in &decl_children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    heap.push(Reverse(c));
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap();
            return Err(ModelError::Cycle(specs[stuck].name.clone()));
        }
        let mut new_id = vec![0usize; n];
        for (pos, &d) in order.iter().enumerate() {
            new_id[d] = pos;
        }

        let mut nodes = Vec::with_capacity(n);
        for &d in &order {
            let s = &specs[d];
            let resolve = |r: &NameRef| -> Result<ValueRef, ModelError> {
                Ok(ValueRef {
                    node: new_id[decl[r.name.as_str()]],
                    elem: r.elem.unwrap_or(0),
                })
            };
            let kind = match &s.kind {
                NodeKind::Stochastic {
                    dist,
                    observed,
                    init,
                } => NodeKind::Stochastic {
                    dist: dist.try_map(resolve)?,
                    observed: observed.clone(),
                    init: init.clone(),
                },
                NodeKind::Deterministic { expr } => NodeKind::Deterministic {
                    expr: expr.try_map(resolve)?,
                },
            };
            nodes.push(NodeSpec {
                name: s.name.clone(),
                kind,
                len: s.len,
                support: s.support,
            });
        }
        for node in &nodes {
            validate_node(node)?;
        }

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (d, ps) in decl_parents.iter().enumerate() {
            for &p in ps {
                parents[new_id[d]].push(new_id[p]);
                children[new_id[p]].push(new_id[d]);
            }
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }

        let mut dims = Vec::new();
        let mut offsets = vec![None; n];
        for (id, node) in nodes.iter().enumerate() {
            if node.is_stochastic() && !node.is_observed() {
                offsets[id] = Some(dims.len());
                for e in 0..node.len {
                    let name = if node.len == 1 {
                        node.name.clone()
                    } else {
                        format!("{}[{}]", node.name, e)
                    };
                    dims.push(DimInfo {
                        node: id,
                        elem: e,
                        name,
                        support: node.support,
                    });
                }
            }
        }

        // element-level dependents, following deterministic chains
        let mut referrers: HashMap<ValueRef, Vec<NodeId>> = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for r in node.refs() {
                if seen.insert(*r) {
                    referrers.entry(*r).or_default().push(id);
                }
            }
        }
        let mut dim_blanket = Vec::with_capacity(dims.len());
        for d in &dims {
            let mut out = BTreeSet::new();
            out.insert(d.node);
            let mut stack = vec![ValueRef {
                node: d.node,
                elem: d.elem,
            }];
            let mut visited = BTreeSet::new();
            while let Some(r) = stack.pop() {
                for &c in referrers.get(&r).map(Vec::as_slice).unwrap_or(&[]) {
                    if !visited.insert(c) {
                        continue;
                    }
                    if nodes[c].is_stochastic() {
                        out.insert(c);
                    } else {
                        stack.push(ValueRef { node: c, elem: 0 });
                    }
                }
            }
            dim_blanket.push(out.into_iter().collect());
        }

        let mut graph = ModelGraph {
            names: nodes
                .iter()
                .enumerate()
                .map(|(i, s)| (s.name.clone(), i))
                .collect(),
            nodes,
            parents,
            children,
            dims,
            offsets,
            dim_blanket,
            obs_const: vec![0.0; n],
        };
        graph.obs_const = graph.compute_obs_constants();
        Ok(graph)
    }

    fn compute_obs_constants(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|node| match &node.kind {
                NodeKind::Stochastic {
                    dist: Distribution::Binomial { n, .. },
                    observed: Some(y),
                    ..
                } => n
                    .as_constant()
                    .map_or(f64::NAN, |n| ln_choose(n, y[0])),
                NodeKind::Stochastic {
                    dist: Distribution::Poisson { .. },
                    observed: Some(y),
                    ..
                } => -y.iter().map(|&v| ln_gamma(v + 1.0)).sum::<f64>(),
                _ => f64::NAN,
            })
            .collect()
    }

    /// Number of sampled scalar dimensions.
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[DimInfo] {
        &self.dims
    }

    pub fn dim_names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    pub fn dim_by_name(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn parents(&self, node: NodeId) -> &[NodeId] {
        &self.parents[node]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    pub fn support(&self, k: usize) -> Support {
        self.dims[k].support
    }

    /// Owner node and stochastic dependents of the given dimensions.
    pub fn blanket(&self, dims: &[usize]) -> Vec<NodeId> {
        if let [k] = dims {
            return self.dim_blanket[*k].clone();
        }
        let set: BTreeSet<NodeId> = dims
            .iter()
            .flat_map(|&k| self.dim_blanket[k].iter().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Dimensions owned by stochastic nodes with more than one element.
    pub fn vector_groups(&self) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(id, node)| node.len > 1 && self.offsets[*id].is_some())
            .map(|(id, node)| {
                let off = self.offsets[id].unwrap();
                (off..off + node.len).collect()
            })
            .collect()
    }

    #[inline]
    fn lookup(&self, values: &[f64], r: &ValueRef) -> f64 {
        if let Some(off) = self.offsets[r.node] {
            return values[off + r.elem];
        }
        match &self.nodes[r.node].kind {
            NodeKind::Stochastic {
                observed: Some(v), ..
            } => v[r.elem],
            NodeKind::Deterministic { expr } => self.eval_expr(expr, values),
            NodeKind::Stochastic { observed: None, .. } => unreachable!("sampled node has offset"),
        }
    }

    #[inline]
    pub fn eval_expr(&self, e: &Expr, values: &[f64]) -> f64 {
        e.eval(|r| self.lookup(values, r))
    }

    /// Current value of a node element, including observed and deterministic nodes.
    pub fn node_value(&self, values: &[f64], node: NodeId, elem: usize) -> f64 {
        self.lookup(values, &ValueRef { node, elem })
    }

    /// Initial state from declared inits, falling back to a central point
    /// of each support.
    pub fn initial_state(&self) -> StateVector {
        let mut values = Vec::with_capacity(self.dim());
        for d in &self.dims {
            let node = &self.nodes[d.node];
            let init = match &node.kind {
                NodeKind::Stochastic { init: Some(v), .. } => Some(v[d.elem]),
                _ => None,
            };
            values.push(init.unwrap_or(match d.support {
                Support::Real => 0.0,
                Support::PositiveReal => 1.0,
                Support::Interval { lo, hi } => 0.5 * (lo + hi),
                Support::Count => 0.0,
            }));
        }
        self.state_from_values(values)
            .expect("initial values have the right length")
    }

    pub fn state_from_values(&self, values: Vec<f64>) -> Result<StateVector, ModelError> {
        if values.len() != self.dim() {
            return Err(ModelError::DimOutOfRange(values.len()));
        }
        let mut state = StateVector {
            values,
            terms: vec![0.0; self.nodes.len()],
            factors: vec![FactorCache::default(); self.nodes.len()],
        };
        self.refresh_cache(&mut state);
        Ok(state)
    }

    /// Recompute every cached term.
    pub fn refresh_cache(&self, state: &mut StateVector) {
        let mut cost = 0;
        for id in 0..self.nodes.len() {
            let t = self.node_term(id, &state.values, &mut state.factors, &mut cost);
            state.terms[id] = t;
        }
    }

    /// Write one dimension and update the affected cached terms.
    pub fn set_value(&self, state: &mut StateVector, k: usize, v: f64) {
        state.values[k] = v;
        let mut cost = 0;
        for &n in &self.dim_blanket[k] {
            let t = self.node_term(n, &state.values, &mut state.factors, &mut cost);
            state.terms[n] = t;
        }
    }

    /// Unnormalised log posterior, evaluated from scratch.
    pub fn log_density_full(&self, x: &StateVector) -> f64 {
        let mut factors = x.factors.clone();
        let mut cost = 0;
        (0..self.nodes.len())
            .map(|id| self.node_term(id, &x.values, &mut factors, &mut cost))
            .sum()
    }

    /// Sum of terms of the nodes owning `dims` and all their stochastic
    /// dependents, evaluated from scratch.
    pub fn log_density_conditional(&self, x: &StateVector, dims: &[usize]) -> Result<f64, ModelError> {
        if dims.is_empty() {
            return Err(ModelError::EmptyDims);
        }
        if let Some(&bad) = dims.iter().find(|&&k| k >= self.dim()) {
            return Err(ModelError::DimOutOfRange(bad));
        }
        let mut factors = x.factors.clone();
        let mut cost = 0;
        Ok(self
            .blanket(dims)
            .into_iter()
            .map(|id| self.node_term(id, &x.values, &mut factors, &mut cost))
            .sum())
    }

    /// Evaluate fresh terms for `nodes` into `out`, charging `cost`.
    pub(crate) fn eval_nodes(
        &self,
        state: &mut StateVector,
        nodes: &[NodeId],
        out: &mut Vec<f64>,
        cost: &mut u64,
    ) -> f64 {
        out.clear();
        let mut sum = 0.0;
        for &n in nodes {
            let t = self.node_term(n, &state.values, &mut state.factors, cost);
            out.push(t);
            sum += t;
        }
        sum
    }

    fn node_term(
        &self,
        id: NodeId,
        values: &[f64],
        factors: &mut [FactorCache],
        cost: &mut u64,
    ) -> f64 {
        let node = &self.nodes[id];
        let NodeKind::Stochastic { dist, .. } = &node.kind else {
            return 0.0;
        };
        let ev = |e: &Expr| self.eval_expr(e, values);
        if let Distribution::MvnExpCov {
            mean,
            sd,
            range,
            distances,
        } = dist
        {
            let (mu, sd, range) = (ev(mean), ev(sd), ev(range));
            return self.mvn_term(id, node.len, values, mu, sd, range, distances, &mut factors[id], cost);
        }
        *cost += 1;
        let x = self.lookup(values, &ValueRef { node: id, elem: 0 });
        match dist {
            Distribution::Binomial { n, p } => {
                let n = ev(n);
                let c = self.obs_const[id];
                let c = if c.is_nan() { ln_choose(n, x) } else { c };
                ln_binomial_kernel(x, n, ev(p)) + c
            }
            Distribution::Beta { a, b } => ln_beta_density(x, ev(a), ev(b)),
            Distribution::Gamma { shape, rate } => ln_gamma_density(x, ev(shape), ev(rate)),
            Distribution::Uniform { lo, hi } => ln_uniform(x, ev(lo), ev(hi)),
            Distribution::Normal { mean, scale } => {
                let mu = ev(mean);
                let (lp, sd) = match scale {
                    NormalScale::Precision(t) => {
                        let t = ev(t);
                        (ln_normal_prec(x, mu, t), 1.0 / t.sqrt())
                    }
                    NormalScale::StdDev(s) => {
                        let s = ev(s);
                        (ln_normal(x, mu, s), s)
                    }
                };
                if node.support == Support::PositiveReal {
                    if !(x > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    lp - dist::ln_normal_mass_above_zero(mu, sd)
                } else {
                    lp
                }
            }
            Distribution::Poisson { rate } => {
                let c = self.obs_const[id];
                let c = if c.is_nan() { -ln_gamma(x + 1.0) } else { c };
                ln_poisson_kernel(x, ev(rate)) + c
            }
            Distribution::MvnExpCov { .. } => unreachable!(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn mvn_term(
        &self,
        id: NodeId,
        n: usize,
        values: &[f64],
        mu: f64,
        sd: f64,
        range: f64,
        distances: &DistanceMatrix,
        cache: &mut FactorCache,
        cost: &mut u64,
    ) -> f64 {
        *cost += cost::mvn_solve(n);
        if !(sd > 0.0) || !(range > 0.0) || !sd.is_finite() || !range.is_finite() {
            return f64::NEG_INFINITY;
        }
        let key = range.to_bits();
        let factor = match cache.lookup(key) {
            Some(f) => f,
            None => {
                *cost += cost::mvn_factor(n);
                let Some(f) = factor_exp_correlation(distances, range) else {
                    return f64::NEG_INFINITY;
                };
                let f = Arc::new(f);
                cache.insert(key, f.clone());
                f
            }
        };
        // forward substitution L z = x - mu
        let l = &factor.l;
        let mut z = vec![0.0; n];
        let mut quad = 0.0;
        for i in 0..n {
            let mut s = self.lookup(values, &ValueRef { node: id, elem: i }) - mu;
            for j in 0..i {
                s -= l[(i, j)] * z[j];
            }
            z[i] = s / l[(i, i)];
            quad += z[i] * z[i];
        }
        dist::ln_2pi_half_n(n) - n as f64 * sd.ln() - 0.5 * factor.logdet - 0.5 * quad / (sd * sd)
    }

    /// Closed-form full conditional of dimension `k`, when one is supported.
    pub fn detect_conjugacy(&self, k: usize) -> Option<ConjugacyRelation> {
        let info = self.dims.get(k)?;
        let owner = &self.nodes[info.node];
        let Some(Distribution::Beta { a, b }) = owner.distribution() else {
            return None;
        };
        if owner.len != 1 {
            return None;
        }
        let me = ValueRef {
            node: info.node,
            elem: 0,
        };
        let dependents: Vec<NodeId> = self.dim_blanket[k]
            .iter()
            .copied()
            .filter(|&n| n != info.node)
            .collect();
        if dependents.is_empty() {
            return None;
        }
        for &d in &dependents {
            match &self.nodes[d].kind {
                NodeKind::Stochastic {
                    dist: Distribution::Binomial { n, p },
                    observed: Some(_),
                    ..
                } if p.as_plain_ref() == Some(&me) && n.refs().all(|r| r.node != info.node) => {}
                _ => return None,
            }
        }
        Some(ConjugacyRelation {
            dim: k,
            family: ConjugateFamily::BetaBinomial,
            prior_a: a.clone(),
            prior_b: b.clone(),
            dependents,
        })
    }
}

fn validate_node(node: &NodeSpec) -> Result<(), ModelError> {
    let invalid = |msg: String| ModelError::Invalid {
        node: node.name.clone(),
        msg,
    };
    let NodeKind::Stochastic { dist, observed, init } = &node.kind else {
        return Ok(());
    };
    let natural = dist.default_support();
    match (dist, node.support) {
        (Distribution::Normal { .. }, Support::PositiveReal) => {}
        (_, s) if s == natural => {}
        (_, s) => {
            return Err(invalid(format!(
                "support {s:?} is inconsistent with {}",
                dist.kind().name()
            )))
        }
    }
    if let Distribution::MvnExpCov { distances, .. } = dist {
        if distances.n != node.len || distances.data.len() != node.len * node.len {
            return Err(invalid("distance matrix size does not match node length".into()));
        }
    }
    if let Some(v) = observed {
        if v.len() != node.len {
            return Err(invalid(format!(
                "expected {} observed values, got {}",
                node.len,
                v.len()
            )));
        }
        if let Some(bad) = v.iter().find(|&&x| !node.support.contains(x) && !natural.contains(x)) {
            return Err(invalid(format!("observed value {bad} outside support")));
        }
    } else if node.support.is_discrete() {
        return Err(invalid("discrete latent nodes are not supported".into()));
    }
    if let Some(v) = init {
        if v.len() != node.len {
            return Err(invalid(format!(
                "expected {} initial values, got {}",
                node.len,
                v.len()
            )));
        }
    }
    Ok(())
}

/// Lower Cholesky factor of `exp(-d / range)`.
fn factor_exp_correlation(d: &DistanceMatrix, range: f64) -> Option<Factor> {
    let n = d.n;
    let r = DMatrix::from_fn(n, n, |i, j| (-d.get(i, j) / range).exp());
    let chol = nalgebra::Cholesky::new(r)?;
    let l = chol.l();
    let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    Some(Factor { l, logdet })
}

/// Covariance `sd^2 * exp(-d_ij / range)`.
pub fn exp_covariance(d: &DistanceMatrix, sd: f64, range: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d.n, d.n, |i, j| sd * sd * (-d.get(i, j) / range).exp())
}
