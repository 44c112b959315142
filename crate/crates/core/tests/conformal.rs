use std::collections::BTreeSet;

use nwfr_core::conformal::{
    build_band, conformal_quantile, evaluate, modulation_function, nonconformity, run_split_conformal,
    stratified_split, stratified_split_among, ConformalConfig, ModulationFn, ScoreKind, SplitMode,
};
use nwfr_core::graph::Partition;
use nwfr_core::model::{DistanceProvider, Ridge};
use nwfr_core::quadrature::uniform_grid;
use nwfr_core::simgen::{generate_instance, make_scenario, ScaleOverrides, Scenario};
use proptest::prelude::*;

fn modulation(n: usize) -> ModulationFn {
    let grid = uniform_grid(0.0, 1.0, n);
    let values = grid.iter().map(|t| 0.2 + t * t).collect();
    ModulationFn { grid, values, floor: 1e-6 }
}

fn labels_strategy() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..5, 4..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn local_coverage_dominates_global_and_score_dominates_width(
        radius in 0.0f64..3.0,
        alpha in 0.01f64..0.5,
        shifts in proptest::collection::vec((-2.0f64..2.0, 0.0f64..6.0), 1..20),
    ) {
        let s = modulation(41);
        let mut bands = Vec::new();
        let mut obs = Vec::new();
        for (v, (amp, freq)) in shifts.iter().enumerate() {
            let center: Vec<f64> = s.grid.iter().map(|t| (freq * t).cos()).collect();
            obs.push(center.iter().zip(&s.grid).map(|(c, t)| c + amp * (freq * t + 1.0).sin()).collect::<Vec<f64>>());
            bands.push(build_band(v, center, radius, &s).unwrap());
        }
        let r = evaluate(&bands, &obs, alpha, ScoreKind::HInf, 10).unwrap();
        prop_assert!(r.cov_l >= r.cov_g);
        prop_assert!((0.0..=1.0).contains(&r.cov_g) && (0.0..=1.0).contains(&r.cov_l));
        prop_assert!(r.interval_score >= r.abw);
        if r.cov_g == 1.0 {
            prop_assert_eq!(r.interval_score, r.abw);
        }
    }

    #[test]
    fn quantile_is_monotone_in_alpha(
        scores in proptest::collection::vec(0.0f64..100.0, 1..80),
        a1 in 0.001f64..0.999,
        a2 in 0.001f64..0.999,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        prop_assert!(conformal_quantile(&scores, lo).unwrap() >= conformal_quantile(&scores, hi).unwrap());
    }

    #[test]
    fn bands_are_symmetric_about_the_center(radius in 0.0f64..5.0, phase in 0.0f64..6.0) {
        let s = modulation(33);
        let center: Vec<f64> = s.grid.iter().map(|t| (t + phase).sin()).collect();
        let b = build_band(0, center.clone(), radius, &s).unwrap();
        for ((l, u), c) in b.lower().iter().zip(b.upper()).zip(&center) {
            prop_assert!(((u - c) - (c - l)).abs() < 1e-12);
            prop_assert!(u >= *l);
        }
    }

    #[test]
    fn stratified_split_partitions_every_community(labels in labels_strategy(), frac in 0.1f64..0.9, seed in 0u64..100) {
        let p = Partition::from_labels(&labels);
        let Ok(plan) = stratified_split(&p, frac, seed, SplitMode::Proportional) else {
            return Ok(());
        };
        let train: BTreeSet<usize> = plan.training.iter().copied().collect();
        let cal: BTreeSet<usize> = plan.calibration.iter().copied().collect();
        prop_assert!(train.is_disjoint(&cal));
        prop_assert_eq!(train.len() + cal.len(), labels.len());
        for c in 0..p.n_communities() {
            let m = p.members(c);
            if m.len() >= 2 {
                prop_assert!(m.iter().any(|v| train.contains(v)), "community {} has no training vertex", c);
            }
        }
        prop_assert_eq!(stratified_split(&p, frac, seed, SplitMode::Proportional).unwrap(), plan);
    }

    #[test]
    fn one_per_community_takes_exactly_one(labels in labels_strategy(), seed in 0u64..100) {
        let p = Partition::from_labels(&labels);
        let Ok(plan) = stratified_split(&p, 0.5, seed, SplitMode::OnePerCommunity) else {
            return Ok(());
        };
        for c in 0..p.n_communities() {
            let m = p.members(c);
            let n_cal = m.iter().filter(|v| plan.calibration.contains(v)).count();
            prop_assert_eq!(n_cal, usize::from(m.len() >= 2));
        }
    }
}

#[test]
fn quantile_uses_the_finite_sample_rank() {
    let scores: Vec<f64> = (1..=19).map(f64::from).collect();
    assert_eq!(conformal_quantile(&scores, 0.05).unwrap(), 19.0);
    assert_eq!(conformal_quantile(&scores, 0.1).unwrap(), 18.0);
    assert_eq!(conformal_quantile(&scores[..10], 0.05).unwrap(), f64::INFINITY);
    assert!(conformal_quantile(&scores, 0.0).is_err());
    assert!(conformal_quantile(&scores, 1.5).is_err());
    assert!(conformal_quantile(&[], 0.1).is_err());
}

#[test]
fn proportional_split_hits_the_rounded_target() {
    let labels: Vec<usize> = (0..60).map(|v| v % 4).collect();
    let plan = stratified_split(&Partition::from_labels(&labels), 0.5, 3, SplitMode::Proportional).unwrap();
    assert_eq!(plan.calibration.len(), 30);
    let pool: Vec<usize> = (0..60).filter(|v| v % 5 != 0).collect();
    let plan = stratified_split_among(&Partition::from_labels(&labels), &pool, 0.25, 3, SplitMode::Proportional).unwrap();
    assert_eq!(plan.calibration.len(), 12);
    assert!(plan.training.iter().chain(&plan.calibration).all(|v| v % 5 != 0));
}

#[test]
fn scores_follow_their_definitions() {
    let s = modulation(101);
    let pred = vec![0.0; 101];
    let obs: Vec<f64> = s.values.iter().map(|v| 0.5 * v).collect();
    assert!((nonconformity(&pred, &obs, &s, ScoreKind::HInf).unwrap() - 0.5).abs() < 1e-15);
    assert!((nonconformity(&pred, &obs, &s, ScoreKind::H2).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!("dinf".parse::<ScoreKind>().unwrap(), ScoreKind::HInf);
    assert_eq!(ScoreKind::H2.label(), "d2");
}

#[test]
fn modulation_is_floored() {
    let grid = uniform_grid(0.0, 1.0, 5);
    let resid = vec![vec![0.0, 0.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, -2.0, 0.0, 0.0]];
    let m = modulation_function(&resid, &grid).unwrap();
    assert_eq!(m.floor, 2e-3);
    assert_eq!(m.values, vec![2e-3, 2e-3, 2.0, 2e-3, 2e-3]);
    let zero = modulation_function(&[vec![0.0; 5]], &grid).unwrap();
    assert_eq!(zero.values, vec![1e-6; 5]);
}

#[test]
fn split_conformal_pipeline_on_a_simulated_network() {
    let spec = make_scenario("One/Equal/Low".parse::<Scenario>().unwrap(), ScaleOverrides::desk()).unwrap();
    let inst = generate_instance(&spec, 5).unwrap();
    let provider = DistanceProvider::NetworkGeodesic(inst.network.geodesic_matrix());
    let partition = Partition::from_labels(&inst.labels);
    let cfg = ConformalConfig { seed: 9, ..ConformalConfig::default() };
    let out = run_split_conformal(&inst.dataset, &provider, &partition, 1.0, Ridge::default(), &cfg).unwrap();
    let test: BTreeSet<usize> = out.test.iter().copied().collect();
    assert_eq!(test.len(), 12);
    assert!(out.plan.training.iter().chain(&out.plan.calibration).all(|v| !test.contains(v)));
    assert_eq!(out.report.n_test, 12);
    assert_eq!(out.report.n_calibration, out.plan.calibration.len());
    assert!(out.report.radius.is_finite());
    let again = run_split_conformal(&inst.dataset, &provider, &partition, 1.0, Ridge::default(), &cfg).unwrap();
    assert_eq!(out, again);
}
