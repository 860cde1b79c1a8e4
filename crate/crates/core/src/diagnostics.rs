//! Mixing diagnostics: integrated autocorrelation time, effective sample
//! size and efficiency per unit of computation.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DiagnosticsError, Error, Result};

/// Shortest chain accepted by [`iact`].
pub const MIN_CHAIN: usize = 50;

/// Stored states of one run segment, one column per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub dim_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Computation time of the segment (cost units or seconds).
    pub time: f64,
    /// Human-readable kernel snapshot, one entry per sampler.
    pub kernel: Vec<String>,
}

impl ChainTrace {
    pub fn new(dim_names: Vec<String>) -> Self {
        let m = dim_names.len();
        Self {
            dim_names,
            columns: vec![Vec::new(); m],
            time: 0.0,
            kernel: Vec::new(),
        }
    }

    pub fn with_capacity(dim_names: Vec<String>, n: usize) -> Self {
        let mut t = Self::new(dim_names);
        t.columns.iter_mut().for_each(|c| c.reserve(n));
        t
    }

    pub fn push(&mut self, state: &[f64]) {
        debug_assert_eq!(state.len(), self.columns.len());
        for (c, &v) in self.columns.iter_mut().zip(state) {
            c.push(v);
        }
    }

    /// Number of stored states.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Write states as CSV with a header of dimension names.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.dim_names)?;
        let mut rec = Vec::with_capacity(self.dim());
        for i in 0..self.len() {
            rec.clear();
            rec.extend(self.columns.iter().map(|c| format_f64(c[i])));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a trace written by [`ChainTrace::write_csv`]. Time and kernel
    /// are not part of the CSV and come back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let names: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut t = Self::new(names);
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("bad trace value `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != t.dim() {
                return Err(Error::Config("ragged trace row".into()));
            }
            t.push(&row);
        }
        Ok(t)
    }
}

/// Shortest decimal text that parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Per-dimension mixing summary of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub dim_names: Vec<String>,
    pub n: usize,
    pub time: f64,
    pub iact: Vec<f64>,
    pub ess: Vec<f64>,
    pub efficiency: Vec<f64>,
    /// Dimensions with zero variance, reported with τ = N.
    pub degenerate: Vec<bool>,
    pub k_min: usize,
    pub overall: f64,
}

#[derive(Serialize)]
struct ReportRow<'a> {
    dim: usize,
    name: &'a str,
    iact: f64,
    ess: f64,
    efficiency: f64,
    degenerate: bool,
}

impl EfficiencyReport {
    /// Build from per-dimension τ, N and time.
    pub fn from_iact(dim_names: Vec<String>, iact: Vec<f64>, degenerate: Vec<bool>, n: usize, time: f64) -> Self {
        let ess: Vec<f64> = iact.iter().map(|t| n as f64 / t).collect();
        let efficiency: Vec<f64> = ess.iter().map(|e| e / time).collect();
        let k_min = worst_dimension(&iact);
        let overall = efficiency[k_min];
        Self {
            dim_names,
            n,
            time,
            iact,
            ess,
            efficiency,
            degenerate,
            k_min,
            overall,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per dimension.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for k in 0..self.iact.len() {
            out.serialize(ReportRow {
                dim: k,
                name: &self.dim_names[k],
                iact: self.iact[k],
                ess: self.ess[k],
                efficiency: self.efficiency[k],
                degenerate: self.degenerate[k],
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Index of the largest τ, lowest index on ties.
pub fn worst_dimension(iact: &[f64]) -> usize {
    let mut best = 0;
    for (k, &t) in iact.iter().enumerate() {
        if t > iact[best] {
            best = k;
        }
    }
    best
}

/// Biased sample autocovariances of the demeaned chain at lags `0..=max_lag`.
fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|lag| d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Integrated autocorrelation time from the spectral density at zero of
/// an AR model fitted by Yule-Walker, with order chosen by AIC.
pub fn iact(chain: &[f64]) -> std::result::Result<f64, DiagnosticsError> {
    let n = chain.len();
    if n < MIN_CHAIN {
        return Err(DiagnosticsError::InsufficientData {
            needed: MIN_CHAIN,
            got: n,
        });
    }
    let p_max = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let r = autocovariance(chain, p_max);
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(DiagnosticsError::DegenerateChain);
    }
    let nf = n as f64;

    // Levinson-Durbin recursion, tracking the AIC-best order.
    let mut phi: Vec<f64> = Vec::with_capacity(p_max);
    let mut v = r[0];
    let mut best_aic = nf * v.ln();
    let mut best_phi: Vec<f64> = Vec::new();
    let mut best_v = v;
    for k in 1..=p_max {
        let mut acc = r[k];
        for (j, p) in phi.iter().enumerate() {
            acc -= p * r[k - 1 - j];
        }
        let kappa = acc / v;
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) {
            break;
        }
        let aic = nf * v.ln() + 2.0 * k as f64;
        if aic < best_aic {
            best_aic = aic;
            best_phi.clone_from(&phi);
            best_v = v;
        }
    }
    let order = best_phi.len();
    let var_pred = best_v * nf / (nf - (order as f64 + 1.0));
    let denom = 1.0 - best_phi.iter().sum::<f64>();
    let spec0 = var_pred / (denom * denom);
    let sample_var = r[0] * nf / (nf - 1.0);
    let tau = spec0 / sample_var;
    Ok(if tau.is_finite() { tau.clamp(1.0, nf) } else { nf })
}

/// `N / iact(chain)`.
pub fn ess(chain: &[f64]) -> std::result::Result<f64, DiagnosticsError> {
    Ok(chain.len() as f64 / iact(chain)?)
}

/// Per-dimension τ, ESS and efficiency; zero-variance dimensions get
/// τ = N and are flagged.
pub fn efficiency_report(trace: &ChainTrace) -> Result<EfficiencyReport> {
    let n = trace.len();
    if n < MIN_CHAIN {
        return Err(DiagnosticsError::InsufficientData {
            needed: MIN_CHAIN,
            got: n,
        }
        .into());
    }
    if !(trace.time > 0.0) {
        return Err(Error::Config(format!("trace time must be positive, got {}", trace.time)));
    }
    let mut taus = Vec::with_capacity(trace.dim());
    let mut degenerate = Vec::with_capacity(trace.dim());
    for col in &trace.columns {
        match iact(col) {
            Ok(t) => {
                taus.push(t);
                degenerate.push(false);
            }
            Err(DiagnosticsError::DegenerateChain) => {
                taus.push(n as f64);
                degenerate.push(true);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(EfficiencyReport::from_iact(
        trace.dim_names.clone(),
        taus,
        degenerate,
        n,
        trace.time,
    ))
}

/// Pearson correlations between dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: DMatrix<f64>,
    /// Dimensions with zero variance; their off-diagonal entries are 0.
    pub zero_variance: Vec<bool>,
}

pub fn correlation_matrix(trace: &ChainTrace) -> CorrelationMatrix {
    let mut pooled = PooledMoments::new(trace.dim());
    pooled.add_trace(trace);
    pooled.correlation()
}

/// Mean and scatter matrix over every sample added so far, merged
/// segment by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMoments {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl PooledMoments {
    pub fn new(m: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(m),
            scatter: DMatrix::zeros(m, m),
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn add_trace(&mut self, trace: &ChainTrace) {
        let nb = trace.len();
        if nb == 0 {
            return;
        }
        let m = trace.dim();
        let mean_b = DVector::from_iterator(m, trace.columns.iter().map(|c| c.iter().sum::<f64>() / nb as f64));
        let centred = DMatrix::from_fn(nb, m, |t, k| trace.columns[k][t] - mean_b[k]);
        let scatter_b = centred.tr_mul(&centred);
        let na = self.n as f64;
        let total = na + nb as f64;
        let delta = &mean_b - &self.mean;
        self.scatter += scatter_b + &delta * delta.transpose() * (na * nb as f64 / total);
        self.mean += delta * (nb as f64 / total);
        self.n += nb;
    }

    pub fn correlation(&self) -> CorrelationMatrix {
        let m = self.mean.len();
        let ss: Vec<f64> = (0..m).map(|k| self.scatter[(k, k)]).collect();
        // constant columns leave only rounding noise in the scatter
        let zero_variance: Vec<bool> = (0..m)
            .map(|k| {
                let floor = self.n as f64 * (4.0 * f64::EPSILON * self.mean[k].abs()).powi(2);
                !(ss[k] > floor)
            })
            .collect();
        let mut values = DMatrix::identity(m, m);
        for i in 0..m {
            for j in 0..i {
                let r = if zero_variance[i] || zero_variance[j] {
                    0.0
                } else {
                    (self.scatter[(i, j)] / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0)
                };
                values[(i, j)] = r;
                values[(j, i)] = r;
            }
        }
        CorrelationMatrix {
            values,
            zero_variance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = StandardNormal.sample(&mut rng);
        x /= (1.0f64 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + e;
                x
            })
            .collect()
    }

    /// Sum of autocorrelations up to the first non-positive pair sum.
    fn brute_force_tau(x: &[f64]) -> f64 {
        let r = autocovariance(x, 2000.min(x.len() - 1));
        let rho: Vec<f64> = r.iter().map(|v| v / r[0]).collect();
        let mut tau = -1.0;
        let mut k = 0;
        while k + 1 < rho.len() {
            let pair = rho[k] + rho[k + 1];
            if pair <= 0.0 {
                break;
            }
            tau += 2.0 * pair;
            k += 2;
        }
        tau
    }

    #[test]
    fn pooled_halves_match_whole_trace() {
        let names: Vec<String> = (0..3).map(|k| format!("x{k}")).collect();
        let a = ar1(0.5, 400, 8);
        let b = ar1(0.2, 400, 9);
        let mut whole = ChainTrace::new(names.clone());
        let mut first = ChainTrace::new(names.clone());
        let mut second = ChainTrace::new(names);
        for t in 0..400 {
            let row = [a[t], a[t] + b[t], 5.0];
            whole.push(&row);
            if t < 150 { first.push(&row) } else { second.push(&row) }
        }
        let mut pooled = PooledMoments::new(3);
        pooled.add_trace(&first);
        pooled.add_trace(&second);
        assert_eq!(pooled.count(), 400);
        let (p, w) = (pooled.correlation(), correlation_matrix(&whole));
        assert_eq!(p.zero_variance, vec![false, false, true]);
        assert_eq!(w.zero_variance, p.zero_variance);
        assert!((p.values - w.values).abs().max() < 1e-12);
    }

    #[test]
    fn iid_is_near_one() {
        let x = ar1(0.0, 10_000, 1);
        let t = iact(&x).unwrap();
        assert!((1.0..=1.25).contains(&t), "tau {t}");
        let e = ess(&x).unwrap();
        assert!((7_500.0..=12_500.0).contains(&e));
        assert_eq!(e, 10_000.0 / t);
    }

    #[test]
    fn ar1_matches_analytic_and_brute_force() {
        for (phi, tol, seed) in [(0.5, 0.15, 2), (0.9, 0.25, 3)] {
            let x = ar1(phi, 100_000, seed);
            let t = iact(&x).unwrap();
            let exact = (1.0 + phi) / (1.0 - phi);
            assert!((t / exact - 1.0).abs() < tol, "phi {phi}: {t} vs {exact}");
            let bf = brute_force_tau(&x);
            assert!((t / bf - 1.0).abs() < tol, "phi {phi}: {t} vs brute force {bf}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(iact(&[1.0; 100]), Err(DiagnosticsError::DegenerateChain)));
        assert!(matches!(
            iact(&[1.0, 2.0, 3.0]),
            Err(DiagnosticsError::InsufficientData { needed: 50, got: 3 })
        ));
    }

    #[test]
    fn affine_invariance() {
        let x = ar1(0.7, 5_000, 4);
        let y: Vec<f64> = x.iter().map(|v| -3.5 * v + 12.0).collect();
        assert!((iact(&x).unwrap() - iact(&y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn thinning_divides_tau() {
        let x = ar1(0.95, 200_000, 5);
        let t1 = iact(&x).unwrap();
        for j in [2usize, 4, 8] {
            let thin: Vec<f64> = x.iter().step_by(j).copied().collect();
            let tj = iact(&thin).unwrap();
            let expect = (t1 / j as f64).max(1.0);
            assert!((tj / expect - 1.0).abs() < 0.2, "thin {j}: {tj} vs {expect}");
        }
    }

    #[test]
    fn report_arithmetic() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let r = EfficiencyReport::from_iact(names, vec![2.0, 10.0, 5.0], vec![false; 3], 1000, 4.0);
        assert_eq!(r.efficiency, vec![125.0, 25.0, 50.0]);
        assert_eq!(r.k_min, 1);
        assert_eq!(r.overall, 25.0);
        let min = r.efficiency.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.overall, min);
        assert_eq!(worst_dimension(&[1.0, 1.0, 1.0]), 0);
    }

    #[test]
    fn report_flags_degenerate_and_serializes() {
        let mut t = ChainTrace::new(vec!["x".into(), "stuck".into()]);
        let x = ar1(0.3, 500, 6);
        for v in &x {
            t.push(&[*v, 2.0]);
        }
        t.time = 10.0;
        let r = efficiency_report(&t).unwrap();
        assert!(r.degenerate[1] && !r.degenerate[0]);
        assert_eq!(r.iact[1], 500.0);
        assert_eq!(r.k_min, 1);
        let back: EfficiencyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("dim,name,iact,ess,efficiency,degenerate"));
    }

    #[test]
    fn trace_csv_round_trip() {
        let mut t = ChainTrace::new(vec!["a".into(), "b[1]".into()]);
        t.push(&[0.1, -1e-300]);
        t.push(&[1.0 / 3.0, 2.5e10]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ChainTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.dim_names, t.dim_names);
    }

    #[test]
    fn correlation_examples() {
        let x = ar1(0.0, 10_000, 7);
        let y = ar1(0.0, 10_000, 8);
        let mut t = ChainTrace::new(vec!["x".into(), "x2".into(), "neg".into(), "y".into(), "c".into()]);
        for i in 0..x.len() {
            t.push(&[x[i], x[i], -x[i], y[i], 1.0]);
        }
        let c = correlation_matrix(&t);
        let v = &c.values;
        assert!((v[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((v[(0, 2)] + 1.0).abs() < 1e-12);
        assert!(v[(0, 3)].abs() < 0.05);
        assert_eq!(c.zero_variance, vec![false, false, false, false, true]);
        assert_eq!(v[(4, 0)], 0.0);
        assert_eq!(v[(4, 4)], 1.0);
        assert_eq!(v, &v.transpose());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn ess_in_range(seed in 0u64..1000, phi in -0.9f64..0.99) {
                let x = ar1(phi, 500, seed);
                let t = iact(&x).unwrap();
                let e = ess(&x).unwrap();
                prop_assert!((1.0..=500.0).contains(&t));
                prop_assert_eq!(e, 500.0 / t);
                prop_assert!((1.0..=500.0).contains(&e));
            }

            #[test]
            fn report_permutes_with_dimensions(seed in 0u64..1000, perm in Just(vec![2usize, 0, 1]).prop_shuffle()) {
                let cols: Vec<Vec<f64>> = (0..3).map(|k| ar1(0.3 * k as f64, 300, seed + k as u64)).collect();
                let mut t = ChainTrace::new(vec!["a".into(), "b".into(), "c".into()]);
                let mut tp = ChainTrace::new(perm.iter().map(|&k| t.dim_names[k].clone()).collect());
                for i in 0..300 {
                    t.push(&[cols[0][i], cols[1][i], cols[2][i]]);
                    tp.push(&perm.iter().map(|&k| cols[k][i]).collect::<Vec<_>>());
                }
                t.time = 3.0;
                tp.time = 3.0;
                let r = efficiency_report(&t).unwrap();
                let rp = efficiency_report(&tp).unwrap();
                for (pos, &k) in perm.iter().enumerate() {
                    prop_assert_eq!(rp.iact[pos], r.iact[k]);
                }
                prop_assert_eq!(rp.overall, r.overall);
                prop_assert_eq!(rp.iact[rp.k_min], r.iact[r.k_min]);
            }
        }
    }
}
