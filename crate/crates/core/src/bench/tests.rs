use super::*;
use crate::engine::validate_kernel;

fn small(model: BenchModel) -> ExperimentConfig {
    ExperimentConfig {
        model,
        size: Some(4),
        reps: 2,
        outer: 3,
        inner: Some(300),
        final_iters: 1000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn time_to_target_arithmetic() {
    let r = ComparisonRow::new("x", 1, 0.0, 0.5855, 10_000.0);
    assert_eq!(r.time_to_target.round(), 17079.0);
    let r = ComparisonRow::new("x", 1, 6.03, 14.3932, 10_000.0);
    assert_eq!(r.time_to_target.round(), 701.0);
    assert!(ComparisonRow::new("x", 1, 0.0, 0.0, 1.0).time_to_target.is_infinite());
}

#[test]
fn names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
    }
    assert!("bogus".parse::<Algorithm>().is_err());
    assert_eq!("glmm".parse::<BenchModel>().unwrap(), BenchModel::Glmm);
    assert!("x".parse::<BenchModel>().is_err());
}

#[test]
fn baseline_kernels_are_valid() {
    for model in [BenchModel::Litters, BenchModel::Glmm, BenchModel::Spatial] {
        let g = model.build(5, 3).unwrap();
        for name in ["all_scalar", "all_blocked", "default"] {
            let k = build_baseline_kernel(name, &g).unwrap();
            assert!(validate_kernel(&k, g.dim()).is_ok(), "{} {name}", model.name());
        }
        assert!(build_baseline_kernel("auto_adapt", &g).is_err());
    }
}

#[test]
fn default_kernel_uses_gibbs_and_vector_blocks() {
    let g = BenchModel::Litters.build(3, 1).unwrap();
    let k = build_baseline_kernel("default", &g).unwrap();
    let p = g.dim_names().iter().position(|n| n == "p1_01").unwrap();
    assert_eq!(k.samplers[k.covering(p)[0]].kind, SamplerKind::Gibbs);

    let g = BenchModel::Spatial.build(6, 1).unwrap();
    let k = build_baseline_kernel("default", &g).unwrap();
    assert!(k.samplers.iter().any(|s| s.kind == SamplerKind::BlockArw && s.block.len() == 6));
}

#[test]
fn comparison_is_deterministic_and_thread_independent() {
    let mut cfg = small(BenchModel::Litters);
    cfg.threads = Some(1);
    let a = run_comparison(&cfg).unwrap();
    cfg.threads = Some(4);
    let b = run_comparison(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a.arms).unwrap(), serde_json::to_string(&b.arms).unwrap());
    assert_eq!(a.table, b.table);
    assert_eq!(a.arms.len(), 10);
    for arm in &a.arms {
        assert!(arm.final_efficiency > 0.0);
        assert_eq!(arm.series.last().unwrap().stage, None);
        assert_eq!(arm.adapt_time > 0.0, arm.algorithm.is_adaptive());
    }
    let aa = a.arms_of(Algorithm::AutoAdapt).next().unwrap();
    assert_eq!(aa.history.len(), 3);
    assert_eq!(aa.series.len(), 4);
}

#[test]
fn table_and_boxplot_csv_round_trip() {
    let res = run_comparison(&small(BenchModel::Glmm)).unwrap();
    let mut buf = Vec::new();
    res.table.write_csv(&mut buf).unwrap();
    assert_eq!(ComparisonTable::read_csv(&buf[..], res.table.target).unwrap(), res.table);
    let rows = res.boxplot_rows();
    let mut buf = Vec::new();
    BoxplotRow::write_csv(&rows, &mut buf).unwrap();
    assert_eq!(BoxplotRow::read_csv(&buf[..]).unwrap(), rows);
    assert!(rows.iter().any(|r| r.stage == "final"));
}

#[test]
fn cut_kernel_blocks_correlated_pair() {
    let g = BenchModel::Spatial.build(4, 2).unwrap();
    let mut t = ChainTrace::new(g.dim_names());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    use rand::Rng;
    for _ in 0..500 {
        let z: f64 = rng.random();
        let row: Vec<f64> = (0..g.dim()).map(|k| if k < 2 { z + 0.01 * rng.random::<f64>() } else { rng.random() }).collect();
        t.push(&row);
    }
    let k = cut_kernel(&g, &t, 0.2).unwrap();
    assert!(validate_kernel(&k, g.dim()).is_ok());
    assert!(k.samplers.iter().any(|s| s.block == vec![0, 1]));
    let k = cut_kernel(&g, &t, 1.0).unwrap();
    assert_eq!(k.samplers.len(), 1);
}

#[test]
fn config_validation() {
    let mut cfg = small(BenchModel::Litters);
    assert!(cfg.validate().is_ok());
    cfg.reps = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = small(BenchModel::Litters);
    cfg.final_iters = 10;
    assert!(cfg.validate().is_err());
    let cfg: std::result::Result<ExperimentConfig, _> = serde_json::from_str(r#"{"bogus": 1}"#);
    assert!(cfg.is_err());
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"model": "glmm", "reps": 3}"#).unwrap();
    assert_eq!(cfg.inner(), 5000);
    assert_eq!(cfg.size(), 20);
}
