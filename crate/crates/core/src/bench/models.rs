//! Benchmark models with simulated data.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution as _, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{exp_covariance, DistanceMatrix, Distribution, Expr, ModelBuilder, ModelGraph, NameRef, NormalScale};

/// Generating values used to simulate the litters data.
pub const LITTERS_TRUTH: [(f64, f64); 2] = [(9.0, 0.5), (1.5, 1.0)];

/// Vague normal prior on fixed effects, as a precision.
const FIXED_PRECISION: f64 = 0.001;
/// Half-normal prior on standard deviations: precision of the parent normal.
const SD_PRIOR_PRECISION: f64 = 0.1;

fn normal_prec(mean: impl Into<Expr<NameRef>>, prec: impl Into<Expr<NameRef>>) -> Distribution<NameRef> {
    Distribution::Normal {
        mean: mean.into(),
        scale: NormalScale::Precision(prec.into()),
    }
}

fn normal_sd(mean: impl Into<Expr<NameRef>>, sd: impl Into<Expr<NameRef>>) -> Distribution<NameRef> {
    Distribution::Normal {
        mean: mean.into(),
        scale: NormalScale::StdDev(sd.into()),
    }
}

fn uniform(lo: f64, hi: f64) -> Distribution<NameRef> {
    Distribution::Uniform {
        lo: lo.into(),
        hi: hi.into(),
    }
}

fn poisson_log(offset: f64, terms: Vec<(f64, NameRef)>) -> Distribution<NameRef> {
    Distribution::Poisson {
        rate: Expr::exp_linear(offset, terms),
    }
}

/// Two groups of litters: `y ~ Bin(n, p)`, `p ~ Beta(alpha_i, beta_i)`,
/// Gamma(1, 0.001) priors on group 1 and Uniform(0, 100) / (0, 50) on
/// group 2. Litter sizes are drawn from 8..=13.
pub fn build_litters<R: Rng + ?Sized>(n_per_group: usize, rng: &mut R) -> Result<ModelGraph> {
    build_litters_with(n_per_group, LITTERS_TRUTH, rng)
}

/// [`build_litters`] with the per-group generating `(alpha, beta)` given.
pub fn build_litters_with<R: Rng + ?Sized>(n_per_group: usize, truth: [(f64, f64); 2], rng: &mut R) -> Result<ModelGraph> {
    if n_per_group < 2 {
        return Err(Error::Config(format!("litters needs at least 2 litters per group, got {n_per_group}")));
    }
    let mut b = ModelBuilder::new();
    let gamma = || Distribution::Gamma {
        shape: 1.0.into(),
        rate: 0.001.into(),
    };
    b.stochastic("alpha1", gamma()).init(vec![2.0]);
    b.stochastic("beta1", gamma()).init(vec![2.0]);
    b.stochastic("alpha2", uniform(0.0, 100.0)).init(vec![2.0]);
    b.stochastic("beta2", uniform(0.0, 50.0)).init(vec![2.0]);
    for (g, &(a, bb)) in truth.iter().enumerate() {
        let gi = g + 1;
        let beta = Beta::new(a, bb).expect("valid generating values");
        for j in 1..=n_per_group {
            let n = rng.random_range(8..=13u64);
            let p = beta.sample(rng);
            let y = Binomial::new(n, p).expect("p in [0, 1]").sample(rng);
            let pname = format!("p{gi}_{j:02}");
            b.stochastic(
                pname.clone(),
                Distribution::Beta {
                    a: format!("alpha{gi}").as_str().into(),
                    b: format!("beta{gi}").as_str().into(),
                },
            )
            .init(vec![(y as f64 + 0.5) / (n as f64 + 1.0)]);
            b.observed(
                format!("y{gi}_{j:02}"),
                Distribution::Binomial {
                    n: (n as f64).into(),
                    p: pname.as_str().into(),
                },
                vec![y as f64],
            );
        }
    }
    Ok(b.build()?)
}

/// Generating values for the GLMM simulation.
struct GlmmTruth {
    a0: f64,
    a1: f64,
    b: [f64; 3],
    c: [f64; 3],
    sd_gamma: f64,
    sd_v: f64,
    sd_w: f64,
}

const GLMM_TRUTH: GlmmTruth = GlmmTruth {
    a0: 1.0,
    a1: 0.3,
    b: [0.2, -0.1, 0.4],
    c: [0.1, -0.2, 0.15],
    sd_gamma: 0.5,
    sd_v: 0.3,
    sd_w: 0.4,
};

/// Poisson GLMM with subject, subject-by-k and subject-by-l random effects:
/// `log mu_ikl = a0 + a_k + b_l + c_kl + gamma_i + v_ik + w_il` for
/// k in 1..=2, l in 1..=4, with `a_2 = b_4 = c_14 = c_2l = 0`.
pub fn build_glmm<R: Rng + ?Sized>(n_subjects: usize, rng: &mut R) -> Result<ModelGraph> {
    if n_subjects < 2 {
        return Err(Error::Config(format!("glmm needs at least 2 subjects, got {n_subjects}")));
    }
    let t = &GLMM_TRUTH;
    let mut b = ModelBuilder::new();
    let fixed = ["a0", "a1", "b1", "b2", "b3", "c11", "c12", "c13"];
    for name in fixed {
        b.stochastic(name, normal_prec(0.0, FIXED_PRECISION));
    }
    for (name, init) in [("sd_gamma", 1.0), ("sd_v", 1.0), ("sd_w", 1.0)] {
        b.stochastic(name, normal_prec(0.0, SD_PRIOR_PRECISION))
            .truncate_positive()
            .init(vec![init]);
    }
    let effect = |k: usize, l: usize| -> (f64, Vec<NameRef>) {
        let mut value = t.a0;
        let mut refs = vec![NameRef::new("a0")];
        if k == 1 {
            value += t.a1;
            refs.push(NameRef::new("a1"));
        }
        if l < 4 {
            value += t.b[l - 1];
            refs.push(NameRef::new(format!("b{l}")));
            if k == 1 {
                value += t.c[l - 1];
                refs.push(NameRef::new(format!("c1{l}")));
            }
        }
        (value, refs)
    };
    for i in 1..=n_subjects {
        let draw = |rng: &mut R, sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
        let gamma = draw(rng, t.sd_gamma);
        let v: Vec<f64> = (0..2).map(|_| draw(rng, t.sd_v)).collect();
        let w: Vec<f64> = (0..4).map(|_| draw(rng, t.sd_w)).collect();
        // Random effects start from a unit-scale draw: with every effect at
        // exactly zero the variance conditionals have no floor and scalar
        // updates drive the standard deviations to zero.
        b.stochastic(format!("gamma{i:03}"), normal_sd(0.0, "sd_gamma"))
            .init(vec![draw(rng, 1.0)]);
        for k in 1..=2 {
            b.stochastic(format!("v{i:03}_{k}"), normal_sd(0.0, "sd_v"))
                .init(vec![draw(rng, 1.0)]);
        }
        for l in 1..=4 {
            b.stochastic(format!("w{i:03}_{l}"), normal_sd(0.0, "sd_w"))
                .init(vec![draw(rng, 1.0)]);
        }
        for k in 1..=2 {
            for l in 1..=4 {
                let (fixed_part, mut refs) = effect(k, l);
                refs.push(NameRef::new(format!("gamma{i:03}")));
                refs.push(NameRef::new(format!("v{i:03}_{k}")));
                refs.push(NameRef::new(format!("w{i:03}_{l}")));
                let eta = fixed_part + gamma + v[k - 1] + w[l - 1];
                let y = Poisson::new(eta.exp()).expect("positive rate").sample(rng);
                let terms = refs.into_iter().map(|r| (1.0, r)).collect();
                b.observed(format!("y{i:03}_{k}{l}"), poisson_log(0.0, terms), vec![y]);
            }
        }
    }
    Ok(b.build()?)
}

/// Generating values (mean, sd, range) for the spatial simulation.
pub const SPATIAL_TRUTH: (f64, f64, f64) = (1.0, 1.0, 0.3);

/// Poisson counts over a latent Gaussian field with exponential
/// covariance on sites uniform in the unit square:
/// `g ~ MVN(mu, sigma^2 exp(-d / rho))`, `y_i ~ Poisson(exp(g_i))`,
/// `sigma ~ U(0, 10)`, `rho ~ U(0.01, 5)`.
pub fn build_spatial<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<ModelGraph> {
    if n_sites < 4 {
        return Err(Error::Config(format!("spatial needs at least 4 sites, got {n_sites}")));
    }
    let coords: Vec<(f64, f64)> = (0..n_sites).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let d = DistanceMatrix::from_coords(&coords);
    let (mu, sigma, range) = SPATIAL_TRUTH;
    let cov = exp_covariance(&d, sigma, range);
    let l = cov.cholesky().expect("exponential covariance is positive definite").l();
    let z = DMatrix::from_fn(n_sites, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = l * z;

    let mut b = ModelBuilder::new();
    b.stochastic("mu", normal_prec(0.0, FIXED_PRECISION));
    b.stochastic("sigma", uniform(0.0, 10.0)).init(vec![1.0]);
    b.stochastic("rho", uniform(0.01, 5.0)).init(vec![0.5]);
    b.stochastic(
        "g",
        Distribution::MvnExpCov {
            mean: "mu".into(),
            sd: "sigma".into(),
            range: "rho".into(),
            distances: d,
        },
    );
    for i in 0..n_sites {
        let y = Poisson::new((mu + g[i]).exp()).expect("positive rate").sample(rng);
        b.observed(format!("y{i:03}"), poisson_log(0.0, vec![(1.0, NameRef::at("g", i))]), vec![y]);
    }
    Ok(b.build()?)
}
