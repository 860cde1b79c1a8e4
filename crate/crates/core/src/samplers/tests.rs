use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::step::log_accept_ratio;
use super::*;
use crate::model::parse_model;

const BETA_BINOMIAL: &str = "p ~ beta(1, 1)\ny ~ binomial(6, p) data 2\n";
const GAMMA: &str = "s ~ gamma(3, 2)\n";
const STD_NORMAL: &str = "z ~ normal_sd(0, 1)\n";

fn bivariate(rho: f64) -> ModelGraph {
    let d = -rho.ln();
    parse_model(&format!("g ~ mvn_expcov(0, 1, 1) coords 0:0 {d}:0\n")).unwrap()
}

/// Run `iters` steps, optionally adapting, and collect the block values.
fn run(graph: &ModelGraph, a: &mut SamplerAssignment, iters: usize, adapt: bool, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = graph.initial_state();
    let mut ws = Workspace::new(graph, a);
    let mut out = vec![Vec::with_capacity(iters); a.block.len()];
    for _ in 0..iters {
        let before = x.values().to_vec();
        sampler_step(a, graph, &mut x, &mut ws, &mut rng).unwrap();
        for k in 0..graph.dim() {
            if !a.block.contains(&k) {
                assert_eq!(before[k], x.get(k));
            }
        }
        if adapt {
            adapt_if_due(a);
        }
        for (i, &k) in a.block.iter().enumerate() {
            out[i].push(x.get(k));
        }
    }
    out
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// Monte Carlo standard error of the mean from 50 batch means.
fn batch_se(v: &[f64]) -> f64 {
    let nb = 50;
    let len = v.len() / nb;
    let means: Vec<f64> = (0..nb)
        .map(|i| v[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    (mean_var(&means).1 / nb as f64).sqrt()
}

fn check_moments(v: &[f64], mean: f64, var: f64) {
    let (m, s2) = mean_var(v);
    let se = batch_se(v);
    assert!((m - mean).abs() < 3.0 * se, "mean {m} vs {mean}, se {se}");
    assert!((s2 / var - 1.0).abs() < 0.15, "variance {s2} vs {var}");
}

#[test]
fn kind_names_round_trip() {
    for k in SamplerKind::ALL {
        assert_eq!(k.name().parse::<SamplerKind>().unwrap(), k);
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, format!("\"{}\"", k.name()));
    }
    assert!("hmc".parse::<SamplerKind>().is_err());
}

#[test]
fn default_scales() {
    let g = parse_model(STD_NORMAL).unwrap();
    let s = default_state(SamplerKind::Arw, &[0], &g).unwrap();
    assert!((s.scale() - 2.38).abs() < 1e-12);
    assert_eq!(s.clock, 0);
    assert!(s.accepts.iter().all(|&a| a == 0) && s.tries.iter().all(|&t| t == 0));

    let g4 = parse_model("g ~ mvn_expcov(0, 1, 1) coords 0:0 1:0 0:1 1:1\n").unwrap();
    let s = default_state(SamplerKind::BlockArw, &[0, 1, 2, 3], &g4).unwrap();
    assert!((s.scale() - 1.19).abs() < 1e-12);
    assert_eq!(s.covariance().unwrap(), DMatrix::identity(4, 4));
    let s = default_state(SamplerKind::Afss, &[0, 1, 2, 3], &g4).unwrap();
    assert_eq!(s.widths, vec![1.0; 4]);
    assert_eq!(s.clock, 0);
}

#[test]
fn compatibility_rules() {
    let g = parse_model(BETA_BINOMIAL).unwrap();
    assert!(SamplerAssignment::new(SamplerKind::Gibbs, vec![0], &g).is_ok());
    assert!(SamplerAssignment::new(SamplerKind::Arwls, vec![0], &g).is_err());
    assert!(SamplerAssignment::new(SamplerKind::BlockArw, vec![0], &g).is_err());
    let g = parse_model(STD_NORMAL).unwrap();
    assert!(SamplerAssignment::new(SamplerKind::Gibbs, vec![0], &g).is_err());
    assert!(SamplerAssignment::new(SamplerKind::Arw, vec![1], &g).is_err());
    let g = bivariate(0.5);
    assert!(SamplerAssignment::new(SamplerKind::Arw, vec![0, 1], &g).is_err());
    assert!(SamplerAssignment::new(SamplerKind::Afrw, vec![1, 1], &g).is_err());
    assert!(SamplerAssignment::new(SamplerKind::Afrw, vec![1, 0], &g).is_ok());
}

#[test]
fn adapt_scale_step() {
    let g = parse_model(STD_NORMAL).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arw, vec![0], &g).unwrap();
    a.state.log_scales[0] = 0.0;
    a.state.accepts[0] = 10;
    a.state.tries[0] = 10;
    sampler_adapt(&mut a, 0.1);
    assert!((a.state.log_scales[0] - 0.056).abs() < 1e-15);
    assert_eq!(a.state.clock, 1);
    assert_eq!(a.state.tries[0], 0);
}

#[test]
fn adapt_fixed_point_is_exact() {
    let g = parse_model(STD_NORMAL).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arw, vec![0], &g).unwrap();
    let start = a.state.log_scales[0];
    for i in 0..100 {
        a.state.accepts[0] = 44;
        a.state.tries[0] = 100;
        sampler_adapt(&mut a, step_size(i + 1));
        assert_eq!(a.state.log_scales[0].to_bits(), start.to_bits());
    }
    assert_eq!(a.state.clock, 100);
}

#[test]
fn rotation_examples() {
    let r = eigen_rotation(&DMatrix::identity(3, 3));
    assert_eq!(r, DMatrix::identity(3, 3));
    let r = eigen_rotation(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
    assert_eq!(r, DMatrix::identity(2, 2));
    let r = eigen_rotation(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
    assert_eq!(r, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    let r = eigen_rotation(&DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((r[(0, 0)] - h).abs() < 1e-12 && (r[(1, 0)] - h).abs() < 1e-12);
    assert!((r[(0, 1)] - h).abs() < 1e-12 && (r[(1, 1)] + h).abs() < 1e-12);
}

#[test]
fn rotation_needs_two_rounds() {
    let g = bivariate(0.5);
    let mut s = default_state(SamplerKind::Afss, &[0, 1], &g).unwrap();
    s.cov = vec![1.0, 0.9, 0.9, 1.0];
    s.clock = 1;
    let r = factor_rotation(&s);
    assert!(!r.estimated);
    assert_eq!(r.matrix, DMatrix::identity(2, 2));
    s.clock = 2;
    let r = factor_rotation(&s);
    assert!(r.estimated);
    assert!((r.matrix[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn arwls_ratio_includes_jacobian() {
    // Gamma(3, 2): ln f(x) = 3 ln 2 - ln 2 + 2 ln x - 2 x
    let lp = |x: f64| 3.0 * 2f64.ln() - 2f64.ln() + 2.0 * x.ln() - 2.0 * x;
    let (x, y) = (1.0f64, 2.0f64);
    let r = log_accept_ratio(lp(y), lp(x), (y / x).ln());
    assert!((r - (3.0 * 2f64.ln() - 2.0)).abs() < 1e-14);
    let (x, y) = (0.5f64, 0.125f64);
    let r = log_accept_ratio(lp(y), lp(x), (y / x).ln());
    let hand = 2.0 * (0.25f64).ln() - 2.0 * (0.125 - 0.5) + (0.25f64).ln();
    assert!((r - hand).abs() < 1e-14);

    let g = parse_model(GAMMA).unwrap();
    let dims = [0usize];
    let st = g.initial_state();
    assert!((g.log_density_conditional(&st, &dims).unwrap() - lp(1.0)).abs() < 1e-12);
}

#[test]
fn arwls_stays_positive() {
    let g = parse_model("s ~ gamma(0.5, 1)\n").unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arwls, vec![0], &g).unwrap();
    a.state.log_scales[0] = 3f64.ln();
    let draws = run(&g, &mut a, 20_000, false, 3);
    assert!(draws[0].iter().all(|&v| v > 0.0));
}

#[test]
fn tiny_scale_always_accepts() {
    let g = parse_model(STD_NORMAL).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arw, vec![0], &g).unwrap();
    a.state.log_scales[0] = -30.0;
    run(&g, &mut a, 200, false, 1);
    assert_eq!(a.state.accepts[0], 200);
}

#[test]
fn arw_standard_normal() {
    let g = parse_model(STD_NORMAL).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arw, vec![0], &g).unwrap();
    a.state.log_scales[0] = 2.4f64.ln();
    let d = run(&g, &mut a, 50_000, false, 11);
    let (m, v) = mean_var(&d[0]);
    assert!(m.abs() < 3.0 * batch_se(&d[0]));
    assert!((v - 1.0).abs() < 0.1);
}

#[test]
fn scalar_kinds_fixed_theta() {
    let g = parse_model(BETA_BINOMIAL).unwrap();
    // Beta(3, 5): mean 3/8, variance 15 / (64 * 9)
    let (mean, var) = (0.375, 15.0 / 576.0);
    for (kind, seed) in [(SamplerKind::Arw, 1), (SamplerKind::Slice, 2), (SamplerKind::Gibbs, 3)] {
        let mut a = SamplerAssignment::new(kind, vec![0], &g).unwrap();
        if kind == SamplerKind::Arw {
            a.state.log_scales[0] = 0.4f64.ln();
        }
        if kind == SamplerKind::Slice {
            a.state.widths[0] = 0.3;
        }
        let d = run(&g, &mut a, 50_000, false, seed);
        check_moments(&d[0], mean, var);
    }
    let g = parse_model(GAMMA).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Arwls, vec![0], &g).unwrap();
    a.state.log_scales[0] = 1.2f64.ln();
    let d = run(&g, &mut a, 50_000, false, 4);
    check_moments(&d[0], 1.5, 0.75);
}

#[test]
fn block_kinds_fixed_theta() {
    let g = bivariate(0.8);
    for (kind, seed) in [(SamplerKind::BlockArw, 5), (SamplerKind::Afss, 6), (SamplerKind::Afrw, 7)] {
        let mut a = SamplerAssignment::new(kind, vec![0, 1], &g).unwrap();
        if kind == SamplerKind::BlockArw {
            a.state.cov = vec![1.0, 0.8, 0.8, 1.0];
            a.state.cov_factor = vec![1.0, 0.0, 0.8, 0.6];
            a.state.log_scales[0] = 1.7f64.ln();
        } else {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            a.state.rotation = vec![h, h, h, -h];
            if kind == SamplerKind::Afrw {
                a.state.log_scales = vec![(2.4 * 1.8f64.sqrt()).ln(), (2.4 * 0.2f64.sqrt()).ln()];
            } else {
                a.state.widths = vec![2.0, 0.7];
            }
        }
        let d = run(&g, &mut a, 50_000, false, seed);
        for dim in &d {
            check_moments(dim, 0.0, 1.0);
        }
    }
}

#[test]
fn slice_ks_standard_normal() {
    let g = parse_model(STD_NORMAL).unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Slice, vec![0], &g).unwrap();
    let d = run(&g, &mut a, 100_000, true, 21);
    let mut thinned: Vec<f64> = d[0].iter().step_by(10).copied().collect();
    thinned.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = thinned.len() as f64;
    let norm = Normal::new(0.0, 1.0).unwrap();
    let ks = thinned
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = norm.cdf(v);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.949 / n.sqrt(), "KS statistic {ks}");
}

#[test]
fn slice_width_adapts_toward_target() {
    let g = parse_model("z ~ normal_sd(0, 10)\n").unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Slice, vec![0], &g).unwrap();
    run(&g, &mut a, 20_000, true, 8);
    assert!(a.state.widths[0] > 5.0, "width {}", a.state.widths[0]);
    assert_eq!(a.state.clock, 100);
}

#[test]
fn block_arw_learns_correlation() {
    let g = bivariate(0.9);
    let mut a = SamplerAssignment::new(SamplerKind::BlockArw, vec![0, 1], &g).unwrap();
    run(&g, &mut a, 10_000, true, 9);
    let c = &a.state.cov;
    let corr = c[1] / (c[0] * c[3]).sqrt();
    assert!((corr - 0.9).abs() < 0.1, "correlation {corr}");
    let cov = a.state.covariance().unwrap();
    assert_eq!(cov, cov.transpose());
}

#[test]
fn afss_rotation_orthonormal_after_adaptation() {
    let g = bivariate(0.9);
    let mut a = SamplerAssignment::new(SamplerKind::Afss, vec![0, 1], &g).unwrap();
    run(&g, &mut a, 2_000, true, 10);
    assert!(a.state.rotation_estimated);
    let r = DMatrix::from_row_slice(2, 2, &a.state.rotation);
    let e = (r.transpose() * &r - DMatrix::identity(2, 2)).abs().max();
    assert!(e < 1e-8);
    // leading axis along (1, 1)
    assert!((r[(0, 0)] - r[(1, 0)]).abs() < 0.2);
}

#[test]
fn gibbs_draws_match_posterior() {
    let g = parse_model("p ~ beta(2, 3)\ny1 ~ binomial(10, p) data 4\ny2 ~ binomial(5, p) data 1\n").unwrap();
    let mut a = SamplerAssignment::new(SamplerKind::Gibbs, vec![0], &g).unwrap();
    let d = run(&g, &mut a, 10_000, false, 12);
    // Beta(7, 13)
    let (a_, b_) = (7.0f64, 13.0f64);
    let mean = a_ / (a_ + b_);
    let var = a_ * b_ / ((a_ + b_).powi(2) * (a_ + b_ + 1.0));
    let (m, v) = mean_var(&d[0]);
    assert!((m - mean).abs() < 3.0 * (var / 10_000.0).sqrt());
    assert!((v / var - 1.0).abs() < 0.1);
}

#[test]
fn clock_counts_rounds_and_state_serializes() {
    let g = bivariate(0.5);
    let mut a = SamplerAssignment::new(SamplerKind::Afrw, vec![0, 1], &g).unwrap();
    run(&g, &mut a, 1_000, true, 13);
    assert_eq!(a.state.clock, 5);
    let json = serde_json::to_string(&a).unwrap();
    let mut back: SamplerAssignment = serde_json::from_str(&json).unwrap();
    back.rebind(&g).unwrap();
    assert_eq!(back, a);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rotation_is_orthonormal(v in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let m = DMatrix::from_row_slice(4, 4, &v);
            let cov = &m * m.transpose() + DMatrix::identity(4, 4) * 0.01;
            let r = eigen_rotation(&cov);
            let e = (r.transpose() * &r - DMatrix::identity(4, 4)).abs().max();
            prop_assert!(e < 1e-8);
            for c in 0..4 {
                let first = r.column(c).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
                prop_assert!(first > 0.0);
            }
            let d = r.transpose() * &cov * &r;
            for c in 1..4 {
                prop_assert!(d[(c - 1, c - 1)] >= d[(c, c)] - 1e-9);
            }
        }

        #[test]
        fn adapt_keeps_clock_monotone(rates in proptest::collection::vec(0u64..=50, 1..20)) {
            let g = parse_model(STD_NORMAL).unwrap();
            let mut a = SamplerAssignment::new(SamplerKind::Arw, vec![0], &g).unwrap();
            let mut last = a.state.clock;
            for r in rates {
                a.state.accepts[0] = r;
                a.state.tries[0] = 50;
                let before = a.state.log_scales[0];
                let gamma = step_size(a.state.clock + 1);
                sampler_adapt(&mut a, gamma);
                prop_assert!(a.state.clock == last + 1);
                prop_assert!((a.state.log_scales[0] - before).abs() <= 1.0);
                last = a.state.clock;
            }
        }
    }
}
