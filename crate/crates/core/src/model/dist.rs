use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::expr::{Expr, NameRef, ValueRef};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Support of a scalar dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    PositiveReal,
    Interval { lo: f64, hi: f64 },
    Count,
}

impl Support {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::PositiveReal => x > 0.0 && x.is_finite(),
            Support::Interval { lo, hi } => x > lo && x < hi,
            Support::Count => x >= 0.0 && x.fract() == 0.0 && x.is_finite(),
        }
    }

    /// Strictly positive and unbounded above, where a log-scale walk applies.
    pub fn is_positive(&self) -> bool {
        matches!(self, Support::PositiveReal)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Support::Count)
    }
}

/// How the second argument of a normal distribution is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalScale<R = ValueRef> {
    /// BUGS convention: the second parameter is a precision.
    Precision(Expr<R>),
    StdDev(Expr<R>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Binomial,
    Beta,
    Gamma,
    Uniform,
    Normal,
    NormalSd,
    Poisson,
    MvnExpCov,
}

impl DistKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistKind::Binomial => "binomial",
            DistKind::Beta => "beta",
            DistKind::Gamma => "gamma",
            DistKind::Uniform => "uniform",
            DistKind::Normal => "normal",
            DistKind::NormalSd => "normal_sd",
            DistKind::Poisson => "poisson",
            DistKind::MvnExpCov => "mvn_expcov",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "binomial" | "dbin" => DistKind::Binomial,
            "beta" | "dbeta" => DistKind::Beta,
            "gamma" | "dgamma" => DistKind::Gamma,
            "uniform" | "dunif" => DistKind::Uniform,
            "normal" | "dnorm" => DistKind::Normal,
            "normal_sd" => DistKind::NormalSd,
            "poisson" | "dpois" => DistKind::Poisson,
            "mvn_expcov" => DistKind::MvnExpCov,
            _ => return None,
        })
    }

    /// Number of expression parameters (the distance matrix of
    /// `mvn_expcov` is passed separately).
    pub fn arity(&self) -> usize {
        match self {
            DistKind::Poisson => 1,
            DistKind::MvnExpCov => 3,
            _ => 2,
        }
    }
}

/// Row-major square matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    pub data: Arc<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn from_coords(coords: &[(f64, f64)]) -> Self {
        let n = coords.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
                data[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        Self {
            n,
            data: Arc::new(data),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Distribution<R = ValueRef> {
    Binomial { n: Expr<R>, p: Expr<R> },
    Beta { a: Expr<R>, b: Expr<R> },
    Gamma { shape: Expr<R>, rate: Expr<R> },
    Uniform { lo: Expr<R>, hi: Expr<R> },
    Normal { mean: Expr<R>, scale: NormalScale<R> },
    Poisson { rate: Expr<R> },
    /// Multivariate normal with constant mean `mean`, covariance
    /// `sd^2 * exp(-d_ij / range)`.
    MvnExpCov {
        mean: Expr<R>,
        sd: Expr<R>,
        range: Expr<R>,
        distances: DistanceMatrix,
    },
}

impl Distribution<NameRef> {
    /// Build from a kind and positional parameters, checking arity.
    pub fn from_args(
        node: &str,
        kind: DistKind,
        mut args: Vec<Expr<NameRef>>,
        distances: Option<DistanceMatrix>,
    ) -> Result<Self, crate::error::ModelError> {
        if args.len() != kind.arity() {
            return Err(crate::error::ModelError::Arity {
                node: node.to_string(),
                dist: kind.name().to_string(),
                expected: kind.arity(),
                got: args.len(),
            });
        }
        let mut next = || args.remove(0);
        Ok(match kind {
            DistKind::Binomial => Distribution::Binomial {
                n: next(),
                p: next(),
            },
            DistKind::Beta => Distribution::Beta {
                a: next(),
                b: next(),
            },
            DistKind::Gamma => Distribution::Gamma {
                shape: next(),
                rate: next(),
            },
            DistKind::Uniform => Distribution::Uniform {
                lo: next(),
                hi: next(),
            },
            DistKind::Normal => Distribution::Normal {
                mean: next(),
                scale: NormalScale::Precision(next()),
            },
            DistKind::NormalSd => Distribution::Normal {
                mean: next(),
                scale: NormalScale::StdDev(next()),
            },
            DistKind::Poisson => Distribution::Poisson { rate: next() },
            DistKind::MvnExpCov => {
                let distances = distances.ok_or_else(|| crate::error::ModelError::Invalid {
                    node: node.to_string(),
                    msg: "mvn_expcov requires a distance matrix".into(),
                })?;
                Distribution::MvnExpCov {
                    mean: next(),
                    sd: next(),
                    range: next(),
                    distances,
                }
            }
        })
    }
}

impl<R> Distribution<R> {
    pub fn kind(&self) -> DistKind {
        match self {
            Distribution::Binomial { .. } => DistKind::Binomial,
            Distribution::Beta { .. } => DistKind::Beta,
            Distribution::Gamma { .. } => DistKind::Gamma,
            Distribution::Uniform { .. } => DistKind::Uniform,
            Distribution::Normal {
                scale: NormalScale::Precision(_),
                ..
            } => DistKind::Normal,
            Distribution::Normal { .. } => DistKind::NormalSd,
            Distribution::Poisson { .. } => DistKind::Poisson,
            Distribution::MvnExpCov { .. } => DistKind::MvnExpCov,
        }
    }

    pub fn params(&self) -> Vec<&Expr<R>> {
        match self {
            Distribution::Binomial { n, p } => vec![n, p],
            Distribution::Beta { a, b } => vec![a, b],
            Distribution::Gamma { shape, rate } => vec![shape, rate],
            Distribution::Uniform { lo, hi } => vec![lo, hi],
            Distribution::Normal { mean, scale } => match scale {
                NormalScale::Precision(e) | NormalScale::StdDev(e) => vec![mean, e],
            },
            Distribution::Poisson { rate } => vec![rate],
            Distribution::MvnExpCov {
                mean, sd, range, ..
            } => vec![mean, sd, range],
        }
    }

    pub fn try_map<S, E>(
        &self,
        mut f: impl FnMut(&R) -> Result<S, E>,
    ) -> Result<Distribution<S>, E> {
        Ok(match self {
            Distribution::Binomial { n, p } => Distribution::Binomial {
                n: n.try_map(&mut f)?,
                p: p.try_map(&mut f)?,
            },
            Distribution::Beta { a, b } => Distribution::Beta {
                a: a.try_map(&mut f)?,
                b: b.try_map(&mut f)?,
            },
            Distribution::Gamma { shape, rate } => Distribution::Gamma {
                shape: shape.try_map(&mut f)?,
                rate: rate.try_map(&mut f)?,
            },
            Distribution::Uniform { lo, hi } => Distribution::Uniform {
                lo: lo.try_map(&mut f)?,
                hi: hi.try_map(&mut f)?,
            },
            Distribution::Normal { mean, scale } => Distribution::Normal {
                mean: mean.try_map(&mut f)?,
                scale: match scale {
                    NormalScale::Precision(e) => NormalScale::Precision(e.try_map(&mut f)?),
                    NormalScale::StdDev(e) => NormalScale::StdDev(e.try_map(&mut f)?),
                },
            },
            Distribution::Poisson { rate } => Distribution::Poisson {
                rate: rate.try_map(&mut f)?,
            },
            Distribution::MvnExpCov {
                mean,
                sd,
                range,
                distances,
            } => Distribution::MvnExpCov {
                mean: mean.try_map(&mut f)?,
                sd: sd.try_map(&mut f)?,
                range: range.try_map(&mut f)?,
                distances: distances.clone(),
            },
        })
    }

    /// Natural support of a draw from this distribution.
    pub fn default_support(&self) -> Support {
        match self {
            Distribution::Binomial { .. } | Distribution::Poisson { .. } => Support::Count,
            Distribution::Beta { .. } => Support::Interval { lo: 0.0, hi: 1.0 },
            Distribution::Gamma { .. } => Support::PositiveReal,
            Distribution::Uniform { lo, hi } => match (lo.as_constant(), hi.as_constant()) {
                (Some(lo), Some(hi)) => Support::Interval { lo, hi },
                _ => Support::Real,
            },
            Distribution::Normal { .. } | Distribution::MvnExpCov { .. } => Support::Real,
        }
    }
}

// Scalar log densities. Invalid parameters or values outside the support
// give -inf so that proposals there are rejected.

#[inline]
pub fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

#[inline]
pub fn ln_normal_prec(x: f64, mean: f64, prec: f64) -> f64 {
    if !(prec > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = x - mean;
    -HALF_LN_2PI + 0.5 * prec.ln() - 0.5 * prec * d * d
}

/// Log of the normalising mass above zero, `P(X > 0)` for `X ~ N(mean, sd)`.
pub fn ln_normal_mass_above_zero(mean: f64, sd: f64) -> f64 {
    if mean == 0.0 {
        return -LN_2;
    }
    // P(X > 0) = 0.5 * erfc(-mean / (sd * sqrt 2))
    (0.5 * erfc(-mean / (sd * std::f64::consts::SQRT_2))).ln()
}

#[inline]
pub fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) || !(shape > 0.0) || !(rate > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

#[inline]
pub fn ln_beta_density(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) || !(a > 0.0) || !(b > 0.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

#[inline]
pub fn ln_uniform(x: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) || !(x > lo && x < hi) {
        return f64::NEG_INFINITY;
    }
    -(hi - lo).ln()
}

pub fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Binomial kernel without the combinatorial constant.
#[inline]
pub fn ln_binomial_kernel(y: f64, n: f64, p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || y < 0.0 || y > n {
        return f64::NEG_INFINITY;
    }
    let mut out = 0.0;
    if y > 0.0 {
        out += y * p.ln();
    }
    if n - y > 0.0 {
        out += (n - y) * (1.0 - p).ln();
    }
    out
}

/// Poisson kernel without the `-ln y!` constant.
#[inline]
pub fn ln_poisson_kernel(y: f64, rate: f64) -> f64 {
    if !(rate >= 0.0) || y < 0.0 {
        return f64::NEG_INFINITY;
    }
    if y == 0.0 {
        -rate
    } else {
        y * rate.ln() - rate
    }
}

pub fn ln_2pi_half_n(n: usize) -> f64 {
    -0.5 * n as f64 * (2.0 * PI).ln()
}
