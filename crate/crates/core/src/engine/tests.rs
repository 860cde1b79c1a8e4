use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diagnostics::CorrelationMatrix;
use crate::model::parse_model;
use crate::samplers::{step_size, SamplerState};
use nalgebra::DMatrix;

const SMALL: &str = "\
a ~ gamma(2, 1)
b ~ gamma(2, 1)
p1 ~ beta(a, b)
p2 ~ beta(a, b)
y1 ~ binomial(10, p1) data 7
y2 ~ binomial(10, p2) data 8
m ~ normal(0, 0.01)
";

fn small() -> ModelGraph {
    parse_model(SMALL).unwrap()
}

fn scalar_kernel(graph: &ModelGraph, blocks: &[&[usize]]) -> KernelComposition {
    let samplers = blocks
        .iter()
        .map(|b| {
            let kind = if b.len() == 1 { SamplerKind::Arw } else { SamplerKind::BlockArw };
            SamplerAssignment::new(kind, b.to_vec(), graph).unwrap()
        })
        .collect();
    KernelComposition::new(samplers, 0)
}

fn config(outer: usize, inner: usize) -> AutoAdaptConfig {
    AutoAdaptConfig {
        outer,
        inner,
        ..AutoAdaptConfig::default()
    }
}

#[test]
fn validity_examples() {
    let g = parse_model("x ~ normal_sd(0, 1)\ny ~ normal_sd(0, 1)\nz ~ normal_sd(0, 1)\n").unwrap();
    assert!(validate_kernel(&scalar_kernel(&g, &[&[0], &[1], &[2]]), 3).is_ok());
    let v = validate_kernel(&scalar_kernel(&g, &[&[0, 1]]), 3);
    assert_eq!(v.uncovered, vec![2]);
    assert!(validate_kernel(&scalar_kernel(&g, &[&[0, 1], &[1, 2]]), 3).is_ok());
    let mut dup = scalar_kernel(&g, &[&[0], &[1], &[2]]);
    dup.samplers.push(dup.samplers[0].clone());
    assert_eq!(validate_kernel(&dup, 3).duplicates, vec![3]);
}

#[test]
fn clock_transitions() {
    let mut c = ClockState::default();
    c.advance(false);
    assert_eq!((c.kappa, c.tau_since, c.c()), (0, 1, 1));
    c.advance(false);
    assert_eq!((c.kappa, c.tau_since), (0, 2));
    c.advance(true);
    assert_eq!((c.kappa, c.tau_since, c.c()), (1, 0, 1));
}

#[test]
fn schedules_decrease_to_zero() {
    let t = Trigger::Decay;
    assert_eq!(t.probability(1), 1.0);
    assert_eq!(t.probability(4), 0.5);
    assert!((t.probability(25) - 0.2).abs() < 1e-15);
    for k in 1..1000 {
        assert!(t.probability(k + 1) < t.probability(k));
        assert!(step_size(k as u64 + 1) < step_size(k as u64));
    }
    assert!(t.probability(1_000_000) < 1e-2);
    assert!(step_size(1_000_000) < 1e-4);
    assert!(step_size(0) == 1.0);
}

#[test]
fn kernel_id_tracks_structure() {
    let g = small();
    let a = all_scalar_kernel(&g).unwrap();
    let mut b = a.clone();
    b.samplers[0].state.log_scales[0] = 5.0;
    assert_eq!(a.id(), b.id());
    let c = scalar_kernel(&g, &[&[0, 1], &[2], &[3], &[4]]);
    assert_ne!(a.id(), c.id());
}

#[test]
fn all_scalar_uses_log_scale_on_positive_dims() {
    let g = small();
    let k = all_scalar_kernel(&g).unwrap();
    let kinds: Vec<SamplerKind> = k.samplers.iter().map(|s| s.kind).collect();
    use SamplerKind::*;
    assert_eq!(kinds, vec![Arwls, Arwls, Arw, Arw, Arw]);
}

#[test]
fn zero_length_segment() {
    let g = small();
    let mut k = all_scalar_kernel(&g).unwrap();
    let before = k.clone();
    let mut x = g.initial_state();
    let mut archive = SamplerArchive::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seg = run_segment(&mut k, &g, &mut x, 0, TimeSource::Cost, &mut archive, true, &mut rng).unwrap();
    assert!(seg.trace.is_empty());
    assert_eq!(k, before);
}

#[test]
fn segments_are_reproducible() {
    let g = small();
    let go = || {
        let mut k = all_scalar_kernel(&g).unwrap();
        let mut x = g.initial_state();
        let mut archive = SamplerArchive::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seg = run_segment(&mut k, &g, &mut x, 1000, TimeSource::Cost, &mut archive, true, &mut rng).unwrap();
        (seg.trace, k, x.values().to_vec(), archive)
    };
    let (t1, k1, x1, a1) = go();
    let (t2, k2, x2, a2) = go();
    assert_eq!(t1, t2);
    assert_eq!(k1, k2);
    assert_eq!(x1, x2);
    assert_eq!(a1, a2);
    assert_eq!(a1.len(), 5);
    assert!(t1.time > 0.0);
}

#[test]
fn zero_outer_iterations() {
    let g = small();
    let r = run_auto_adapt(&g, &config(0, 1000), ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(r.traces.is_empty());
    assert!(r.best.same_structure(&all_scalar_kernel(&g).unwrap()));
}

#[test]
fn no_trigger_keeps_structure() {
    let g = small();
    let cfg = AutoAdaptConfig {
        trigger: Trigger::Constant(0.0),
        ..config(5, 500)
    };
    let r = run_auto_adapt(&g, &cfg, ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(r.history.len(), 5);
    assert_eq!(r.clocks, ClockState { kappa: 0, tau_since: 5 });
    assert!(r.best.same_structure(&all_scalar_kernel(&g).unwrap()));
    assert!(r.history.iter().all(|h| !h.triggered && h.kernel_id == r.history[0].kernel_id));
    for s in &r.best.samplers {
        assert!(s.state.clock >= 10);
    }
}

#[test]
fn outer_loop_invariants() {
    let g = small();
    let cfg = AutoAdaptConfig {
        trigger: Trigger::Constant(1.0),
        ..config(12, 400)
    };
    let mut aa = AutoAdapt::new(&g, cfg, ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut best = f64::NEG_INFINITY;
    let mut seen: std::collections::BTreeMap<(SamplerKind, Vec<usize>), u64> = Default::default();
    while !aa.is_done() {
        let before = aa.clocks();
        let rec = aa.step().unwrap().clone();
        assert!(rec.valid);
        assert!(validate_kernel(aa.kernel(), g.dim()).is_ok());
        assert!(rec.best_efficiency >= best);
        best = rec.best_efficiency;
        let after = aa.clocks();
        assert_eq!(after, ClockState { kappa: before.kappa + 1, tau_since: 0 });
        for s in &aa.kernel().samplers {
            let c = aa.archive().get(s.kind, &s.block).map_or(s.state.clock, |st| st.clock);
            let prev = seen.insert((s.kind, s.block.clone()), c).unwrap_or(0);
            assert!(c >= prev);
            assert_eq!(s.state.clock, c);
        }
    }
    let r = aa.finish().unwrap();
    assert_eq!(r.history.len(), 12);
    assert!(r.history.iter().any(|h| h.proposal.is_some()));
}

#[test]
fn runs_are_deterministic() {
    let g = small();
    let cfg = config(6, 300);
    let a = run_auto_adapt(&g, &cfg, ChaCha8Rng::seed_from_u64(11)).unwrap();
    let b = run_auto_adapt(&g, &cfg, ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.traces, b.traces);
    assert_eq!(a.best, b.best);
}

fn identity_corr(m: usize) -> CorrelationMatrix {
    CorrelationMatrix {
        values: DMatrix::identity(m, m),
        zero_variance: vec![false; m],
    }
}

fn settings(candidates: Vec<SamplerKind>) -> ProposalSettings {
    ProposalSettings {
        candidates,
        cut_heights: vec![0.2, 0.4, 0.6, 0.8],
        keep_probability: 0.5,
    }
}

#[test]
fn single_candidate_is_flagged() {
    let g = small();
    let k = scalar_kernel(&g, &[&[0], &[1], &[2], &[3], &[4]]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = propose_kernel(&k, &g, 4, &identity_corr(5), &settings(vec![SamplerKind::Arw]), &SamplerArchive::new(), 1, &mut rng).unwrap();
    assert!(!p.changed);
    assert_eq!(p.kernel, k);
}

#[test]
fn forced_scalar_choice() {
    let g = small();
    let k = scalar_kernel(&g, &[&[0], &[1], &[2], &[3], &[4]]);
    let s = settings(vec![SamplerKind::Arw, SamplerKind::Slice, SamplerKind::Gibbs]);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = propose_kernel(&k, &g, 4, &identity_corr(5), &s, &SamplerArchive::new(), 1, &mut rng).unwrap();
        assert!(p.changed);
        assert_eq!(p.kernel.samplers[4].kind, SamplerKind::Slice);
        assert_eq!(p.kernel.samplers[4].block, vec![4]);
        for i in 0..4 {
            assert_eq!(p.kernel.samplers[i], k.samplers[i]);
        }
    }
}

#[test]
fn block_proposals_keep_coverage() {
    let g = small();
    let k = all_scalar_kernel(&g).unwrap();
    let mut corr = identity_corr(5);
    corr.values[(0, 1)] = 0.95;
    corr.values[(1, 0)] = 0.95;
    let s = settings(vec![SamplerKind::BlockArw]);
    let mut kept = 0;
    let mut removed = 0;
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = propose_kernel(&k, &g, 0, &corr, &s, &SamplerArchive::new(), 1, &mut rng).unwrap();
        assert!(p.changed);
        assert!(validate_kernel(&p.kernel, 5).is_ok());
        assert_eq!(p.kernel.samplers[0].kind, SamplerKind::BlockArw);
        assert_eq!(p.kernel.samplers[0].block, vec![0, 1]);
        if p.kernel.samplers.iter().any(|s| s.block == vec![1]) {
            kept += 1;
        } else {
            removed += 1;
        }
        assert!(p.kernel.samplers.iter().all(|s| s.block != vec![0]));
    }
    assert!(kept > 5 && removed > 5);
}

#[test]
fn replacing_a_block_repairs_coverage() {
    let g = small();
    let k = scalar_kernel(&g, &[&[0, 1], &[2], &[3], &[4]]);
    let s = settings(vec![SamplerKind::Slice]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = propose_kernel(&k, &g, 0, &identity_corr(5), &s, &SamplerArchive::new(), 1, &mut rng).unwrap();
    assert!(validate_kernel(&p.kernel, 5).is_ok());
    assert_eq!(p.kernel.samplers[0].kind, SamplerKind::Slice);
    assert_eq!(p.kernel.samplers[1].kind, SamplerKind::Arwls);
    assert_eq!(p.kernel.samplers[1].block, vec![1]);
}

#[test]
fn reactivation_restores_archived_state() {
    let g = small();
    let mut archive = SamplerArchive::new();
    let mut a = SamplerAssignment::new(SamplerKind::Slice, vec![4], &g).unwrap();
    a.state.widths[0] = 3.25;
    a.state.clock = 9;
    archive.store(&a);
    let k = scalar_kernel(&g, &[&[0], &[1], &[2], &[3], &[4]]);
    let s = settings(vec![SamplerKind::Arw, SamplerKind::Slice]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = propose_kernel(&k, &g, 4, &identity_corr(5), &s, &archive, 1, &mut rng).unwrap();
    let restored: &SamplerState = &p.kernel.samplers[4].state;
    assert_eq!(restored, &a.state);
    let json = serde_json::to_string(&archive).unwrap();
    let back: SamplerArchive = serde_json::from_str(&json).unwrap();
    assert_eq!(back, archive);
}

#[test]
fn config_validation() {
    assert!(config(3, 10).validate().is_err());
    assert!(config(0, 10).validate().is_ok());
    let mut c = config(3, 100);
    c.candidates.clear();
    assert!(c.validate().is_err());
    let json = serde_json::to_string(&AutoAdaptConfig::default()).unwrap();
    let back: AutoAdaptConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, AutoAdaptConfig::default());
    let partial: AutoAdaptConfig = serde_json::from_str(r#"{"outer": 3, "candidates": ["arw", "afss"]}"#).unwrap();
    assert_eq!(partial.outer, 3);
    assert_eq!(partial.candidates, vec![SamplerKind::Arw, SamplerKind::Afss]);
    assert!(serde_json::from_str::<AutoAdaptConfig>(r#"{"bogus": 1}"#).is_err());
}
