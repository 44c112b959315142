use nwfr_core::graph::DistanceMatrix;
use nwfr_core::model::{all_vertices, fit_all, stack_design, DistanceProvider, Ridge};
use nwfr_core::simgen::{
    apportion_sizes, community_block, generate_instance, make_scenario, run_study, ModelKind, ScaleOverrides, Scenario,
    StudyConfig, ThetaPolicy,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn apportioned_sizes_sum_to_total(total in 1usize..500, shares in proptest::collection::vec(1usize..50, 1..8)) {
        let sizes = apportion_sizes(total, &shares);
        prop_assert_eq!(sizes.iter().sum::<usize>(), total);
        let sum: usize = shares.iter().sum();
        for (s, &w) in sizes.iter().zip(&shares) {
            let quota = total as f64 * w as f64 / sum as f64;
            prop_assert!((*s as f64 - quota).abs() < 1.0);
        }
    }
}

#[test]
fn scenario_labels_round_trip() {
    let all = Scenario::all();
    assert_eq!(all.len(), 12);
    for s in all {
        assert_eq!(s.label().parse::<Scenario>().unwrap(), s);
    }
    assert!("One/Equal/Medium".parse::<Scenario>().is_err());
}

#[test]
fn noise_free_instances_follow_their_generating_blocks() {
    let scale = ScaleOverrides { noise_var: 0.0, ..ScaleOverrides::desk() };
    let spec = make_scenario("Random/Different/High".parse().unwrap(), scale).unwrap();
    assert_eq!(spec.block_sizes, vec![9, 12, 18, 21]);
    let inst = generate_instance(&spec, 4).unwrap();
    assert_eq!(inst, generate_instance(&spec, 4).unwrap());
    assert!(inst.network.is_connected());
    let x = stack_design(&inst.dataset);
    for i in all_vertices(60) {
        assert_eq!(inst.true_blocks[i], community_block(&inst.base_block, inst.labels[i]));
        let y = x.row(i) * &inst.true_blocks[i];
        assert!((y - inst.dataset.response_coeffs().row(i)).amax() < 1e-12);
    }
}

#[test]
fn isolated_communities_recover_their_blocks() {
    let scale = ScaleOverrides { noise_var: 0.0, ..ScaleOverrides::desk() };
    let spec = make_scenario("One/Equal/Low".parse().unwrap(), scale).unwrap();
    let inst = generate_instance(&spec, 8).unwrap();
    let n = inst.labels.len();
    let data = (0..n * n)
        .map(|ij| if inst.labels[ij / n] == inst.labels[ij % n] { 0.0 } else { f64::INFINITY })
        .collect();
    let provider = DistanceProvider::NetworkGeodesic(DistanceMatrix::from_rows(n, data).unwrap());
    let fit = fit_all(&inst.dataset, &provider, 1.0, Ridge::none(), &all_vertices(n)).unwrap();
    for i in all_vertices(n) {
        let b = fit.covariate_block(i, 0).unwrap();
        let truth = &inst.true_blocks[i];
        assert!((&b - truth).norm() / truth.norm() < 1e-8, "vertex {i}");
    }
}

fn small_study(scenarios: Vec<Scenario>) -> StudyConfig {
    StudyConfig {
        reps: 3,
        theta: ThetaPolicy::Fixed(1.0),
        conformal: None,
        ..StudyConfig::desk(scenarios, 21)
    }
}

#[test]
fn study_records_depend_only_on_scenario_and_replicate() {
    let a: Scenario = "One/Equal/Low".parse().unwrap();
    let b: Scenario = "InOut/Different/High".parse().unwrap();
    let both = run_study(&small_study(vec![a, b])).unwrap();
    let only_b = run_study(&small_study(vec![b])).unwrap();
    let from_both: Vec<_> = both.records.iter().filter(|r| r.scenario == b).cloned().collect();
    assert_eq!(from_both, only_b.records);
    assert_eq!(both.records.len(), 2 * 3 * 2);
    assert!(both.failures.is_empty());
}

#[test]
fn study_summary_rows_and_exports() {
    let s: Scenario = "One/Equal/High".parse().unwrap();
    let report = run_study(&small_study(vec![s])).unwrap();
    let row = report.row(s, ModelKind::Nwfr, "rimse").unwrap();
    assert_eq!(row.reps, 3);
    let values: Vec<f64> = report.records.iter().filter(|r| r.model == ModelKind::Nwfr).map(|r| r.rimse).collect();
    assert!((row.mean - values.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    let csv = report.to_csv();
    assert!(csv.lines().count() > 1);
    assert!(csv.lines().next().unwrap().contains("metric"));
    assert!(report.to_markdown().contains("| One | Equal | High |"));
    assert_eq!(run_study(&small_study(vec![s])).unwrap().to_csv(), csv);
}
