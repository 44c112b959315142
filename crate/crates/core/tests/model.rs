use nalgebra::{DMatrix, DVector};
use nwfr_core::basis::BasisSystem;
use nwfr_core::formats::{from_json_str, to_json_string, ModelFile};
use nwfr_core::graph::DistanceMatrix;
use nwfr_core::model::{
    all_vertices, coef_variance_vk, fit_all, fit_vertex, gof, kernel_weights, permutation_test, predict_new_vertex,
    select_bandwidth, stack_design, Covariate, CvOptions, DistanceProvider, FunctionalDataset, ModelError, NwfrFit,
    Ridge, VertexBlock,
};
use nwfr_core::quadrature::uniform_grid;
use nwfr_core::seed::rng_for;
use nwfr_core::simgen::{generate_instance, make_scenario, ScaleOverrides, Scenario};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn dataset(seed: u64, n: usize, k: usize, cov: &[(usize, usize)], intercept: bool) -> FunctionalDataset {
    let mut rng = rng_for(seed, &[]);
    let rb = BasisSystem::new((0.0, 1.0), k, 4.min(k)).unwrap();
    let covs = cov
        .iter()
        .map(|&(kp, m)| Covariate { basis: BasisSystem::new((0.0, 1.0), kp, m).unwrap(), coeffs: normal(&mut rng, n, kp) })
        .collect();
    FunctionalDataset::new(rb, normal(&mut rng, n, k), covs, intercept).unwrap()
}

fn line_distances(n: usize, step: f64) -> DistanceProvider {
    let data = (0..n * n).map(|ij| ((ij / n) as f64 - (ij % n) as f64).abs() * step).collect();
    DistanceProvider::NetworkGeodesic(DistanceMatrix::from_rows(n, data).unwrap())
}

/// Composite Simpson on `[0, 1]` with `n` (odd) nodes.
fn simpson(values: &[f64]) -> f64 {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_monotone(d1 in 0.0f64..10.0, gap in 0.0f64..10.0, t1 in 0.01f64..5.0, tgap in 0.0f64..5.0) {
        let d2 = d1 + gap;
        let w = kernel_weights(&[0.0, d1, d2], t1).unwrap();
        prop_assert_eq!(w[0], 1.0);
        prop_assert!(w[1] >= w[2] && w[1] <= 1.0 && w[2] >= 0.0);
        let wide = kernel_weights(&[d1], t1 + tgap).unwrap();
        prop_assert!(wide[0] >= w[1]);
    }

    #[test]
    fn weighted_normal_equations_hold(seed in 0u64..10_000, theta in 1.0f64..5.0) {
        let d = dataset(seed, 25, 6, &[(4, 3), (5, 4)], true);
        let x = stack_design(&d);
        let y = d.response_coeffs();
        let mut rng = rng_for(seed, &[1]);
        let dist: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..2.0)).collect();
        let w = kernel_weights(&dist, theta).unwrap();
        let b = fit_vertex(&x, y, &w, Ridge::none()).unwrap().block;
        let wm = DMatrix::from_diagonal(&DVector::from_vec(w));
        let jpsi = d.response_basis().gram();
        let resid = y - &x * &b;
        let lhs = x.transpose() * &wm * &resid * jpsi.matrix();
        let scale = (x.transpose() * &wm * y * jpsi.matrix()).norm();
        prop_assert!(lhs.norm() <= 1e-9 * scale);
    }

    #[test]
    fn uniform_weights_collapse_to_one_block(seed in 0u64..10_000, theta in 0.1f64..10.0) {
        let d = dataset(seed, 18, 5, &[(4, 4)], seed % 2 == 0);
        let all = all_vertices(18);
        let fit = fit_all(&d, &DistanceProvider::Uniform, theta, Ridge::none(), &all).unwrap();
        let b0 = &fit.block(0).unwrap().block;
        for i in all {
            prop_assert!((&fit.block(i).unwrap().block - b0).norm() <= 1e-10 * b0.norm().max(1.0));
        }
        let flat = fit_all(&d, &line_distances(18, 1e-9), theta, Ridge::none(), &all_vertices(18)).unwrap();
        prop_assert!((&flat.block(7).unwrap().block - b0).norm() <= 1e-8 * b0.norm().max(1.0));
    }

    #[test]
    fn vk_ignores_a_common_shift(seed in 0u64..10_000) {
        let mut rng = rng_for(seed, &[2]);
        let d = dataset(seed, 5, 6, &[(5, 4)], false);
        let blocks: Vec<DMatrix<f64>> = (0..5).map(|_| normal(&mut rng, 5, 6)).collect();
        let shift = normal(&mut rng, 5, 6) * 100.0;
        let make = |extra: &DMatrix<f64>| {
            let parts = blocks
                .iter()
                .map(|b| Some(VertexBlock { block: b + extra, lambda: 0.0, condition: 1.0 }))
                .collect();
            NwfrFit::from_parts(&d, 1.0, Ridge::none(), "nwfr", parts).unwrap()
        };
        let v0 = coef_variance_vk(&make(&DMatrix::zeros(5, 6)), 0).unwrap();
        let v1 = coef_variance_vk(&make(&shift), 0).unwrap();
        prop_assert!(v0 > 0.0);
        prop_assert!((v0 - v1).abs() <= 1e-9 * v0);
    }
}

#[test]
fn beta_surface_matches_double_sum() {
    let d = dataset(5, 20, 6, &[(5, 3), (4, 4)], true);
    let provider = line_distances(20, 0.5);
    let fit = fit_all(&d, &provider, 1.5, Ridge::default(), &all_vertices(20)).unwrap();
    let s_grid = uniform_grid(0.0, 1.0, 13);
    let t_grid = uniform_grid(0.0, 1.0, 9);
    for p in 0..2 {
        let b = fit.covariate_block(3, p).unwrap();
        let phi = &d.covariates()[p].basis;
        let surf = fit.beta_surface(3, p, &s_grid, &t_grid).unwrap();
        for (ti, &t) in t_grid.iter().enumerate() {
            let psi_t = d.response_basis().eval_point(t).unwrap();
            for (si, &s) in s_grid.iter().enumerate() {
                let phi_s = phi.eval_point(s).unwrap();
                let mut v = 0.0;
                for j in 0..phi.n_basis() {
                    for l in 0..d.response_basis().n_basis() {
                        v += b[(j, l)] * phi_s[j] * psi_t[l];
                    }
                }
                assert!((surf[(ti, si)] - v).abs() < 1e-12 * v.abs().max(1.0));
            }
        }
    }
}

#[test]
fn prediction_is_the_integral_of_covariate_times_surface() {
    // piecewise-linear covariate bases keep the s-integrand quadratic per knot span, so Simpson is exact
    let d = dataset(9, 15, 5, &[(5, 2), (3, 2)], true);
    let fit = fit_all(&d, &line_distances(15, 1.0), 2.0, Ridge::default(), &all_vertices(15)).unwrap();
    let s_grid = uniform_grid(0.0, 1.0, 201);
    let t_grid = uniform_grid(0.0, 1.0, 11);
    for i in [0, 6, 14] {
        let mut expect = fit.intercept_curve(i).unwrap().unwrap().eval(&t_grid).unwrap();
        for p in 0..2 {
            let c = &d.covariates()[p];
            let x = c.basis.eval_matrix(&s_grid).unwrap() * c.coeffs.row(i).transpose();
            let surf = fit.beta_surface(i, p, &s_grid, &t_grid).unwrap();
            for (ti, e) in expect.iter_mut().enumerate() {
                let integrand: Vec<f64> = (0..s_grid.len()).map(|si| x[si] * surf[(ti, si)]).collect();
                *e += simpson(&integrand);
            }
        }
        let got = fit.predict_vertex(i).unwrap().eval(&t_grid).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-10, "{g} vs {e}");
        }
    }
}

#[test]
fn design_columns_are_inner_products_with_basis_functions() {
    let d = dataset(11, 7, 4, &[(5, 2)], true);
    let x = stack_design(&d);
    let grid = uniform_grid(0.0, 1.0, 201);
    let c = &d.covariates()[0];
    let e = c.basis.eval_matrix(&grid).unwrap();
    for i in 0..7 {
        let xi = &e * c.coeffs.row(i).transpose();
        for j in 0..5 {
            let integrand: Vec<f64> = (0..grid.len()).map(|g| xi[g] * e[(g, j)]).collect();
            assert!((x[(i, j)] - simpson(&integrand)).abs() < 1e-12);
        }
        assert_eq!(x[(i, 5)], 1.0);
    }
}

#[test]
fn gram_rimse_matches_fine_trapezoid() {
    let d = dataset(13, 30, 8, &[(6, 4)], false);
    let fit = fit_all(&d, &line_distances(30, 0.3), 1.0, Ridge::default(), &all_vertices(30)).unwrap();
    let pred = fit.predict_matrix(&all_vertices(30)).unwrap();
    let rep = gof(d.response_basis(), d.response_coeffs(), &pred, &uniform_grid(0.0, 1.0, 101)).unwrap();
    let grid = uniform_grid(0.0, 1.0, 20_001);
    let e = d.response_basis().eval_matrix(&grid).unwrap();
    let resid = &e * (d.response_coeffs() - &pred).transpose();
    let h = grid[1] - grid[0];
    let mut total = 0.0;
    for col in resid.column_iter() {
        let sq: Vec<f64> = col.iter().map(|v| v * v).collect();
        total += h * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[sq.len() - 1]));
    }
    let rimse = (total / 30.0).sqrt();
    assert!((rep.rimse - rimse).abs() / rimse < 1e-6, "{} vs {rimse}", rep.rimse);
}

#[test]
fn perfect_predictions_score_one() {
    let d = dataset(17, 12, 6, &[(4, 3)], false);
    let rep = gof(d.response_basis(), d.response_coeffs(), d.response_coeffs(), &uniform_grid(0.0, 1.0, 51)).unwrap();
    assert_eq!(rep.rimse, 0.0);
    assert!((rep.r2_integrated - 1.0).abs() < 1e-15);
    assert!((rep.r2_average - 1.0).abs() < 1e-15);
}

#[test]
fn intercept_recovers_a_constant_response() {
    let mut d = dataset(19, 40, 6, &[(5, 4)], true);
    let rb = d.response_basis().clone();
    let y = DMatrix::from_fn(40, 6, |_, c| 3.0 * rb.constant_coeffs()[c]);
    d = FunctionalDataset::new(rb.clone(), y, d.covariates().to_vec(), true).unwrap();
    let fit = fit_all(&d, &DistanceProvider::Uniform, 1.0, Ridge::none(), &all_vertices(40)).unwrap();
    for v in fit.intercept_curve(0).unwrap().unwrap().eval(&uniform_grid(0.0, 1.0, 21)).unwrap() {
        assert!((v - 3.0).abs() < 1e-9);
    }
    assert!(fit.covariate_block(0, 0).unwrap().amax() < 1e-9);
}

#[test]
fn out_of_sample_prediction_matches_direct_fit() {
    let d = dataset(23, 16, 5, &[(4, 4)], true);
    let provider = line_distances(16, 0.7);
    let train: Vec<usize> = (0..16).filter(|&v| v != 5).collect();
    let td = d.select_rows(&train).unwrap();
    let dist = provider.distances_to(5, &train).unwrap();
    let got = predict_new_vertex(&td, 1.3, Ridge::default(), &d.covariate_row(5).unwrap(), &dist).unwrap();
    let w = kernel_weights(&dist, 1.3).unwrap();
    let b = fit_vertex(&stack_design(&td), td.response_coeffs(), &w, Ridge::default()).unwrap().block;
    let row = stack_design(&d).row(5).clone_owned();
    let expect = (row * b).transpose();
    assert!((got.coeffs() - expect).amax() < 1e-12);
}

#[test]
fn collinear_design_without_ridge_is_singular() {
    let d = dataset(29, 10, 4, &[(4, 4)], false);
    let mut cov = d.covariates()[0].clone();
    let c0 = cov.coeffs.column(0).clone_owned();
    cov.coeffs.set_column(1, &(c0 * 2.0));
    let d = FunctionalDataset::new(d.response_basis().clone(), d.response_coeffs().clone(), vec![cov.clone(), cov], false)
        .unwrap();
    let err = fit_all(&d, &DistanceProvider::Uniform, 1.0, Ridge::none(), &all_vertices(10)).unwrap_err();
    assert!(matches!(err, ModelError::SingularSystem { .. }), "{err:?}");
    assert!(fit_all(&d, &DistanceProvider::Uniform, 1.0, Ridge::default(), &all_vertices(10)).is_ok());
}

#[test]
fn invalid_arguments_are_rejected() {
    let d = dataset(31, 8, 4, &[(4, 4)], false);
    let p = line_distances(8, 1.0);
    assert!(matches!(fit_all(&d, &p, 0.0, Ridge::default(), &[0]), Err(ModelError::NonpositiveBandwidth(_))));
    assert!(matches!(fit_all(&d, &line_distances(4, 1.0), 1.0, Ridge::default(), &[6]), Err(ModelError::UncoveredVertex(_))));
    assert!(permutation_test(&d, &p, 1.0, Ridge::default(), 0, 0, 1).is_err());
}

#[test]
fn bandwidth_selection_returns_the_best_scored_candidate() {
    let spec = make_scenario("One/Equal/Low".parse::<Scenario>().unwrap(), ScaleOverrides::desk()).unwrap();
    let inst = generate_instance(&spec, 3).unwrap();
    let p = DistanceProvider::NetworkGeodesic(inst.network.geodesic_matrix());
    let grid = p.default_theta_grid(inst.dataset.n_vertices());
    let sel = select_bandwidth(&inst.dataset, &p, &grid, Ridge::default(), CvOptions::default()).unwrap();
    let best = sel.scores.iter().filter_map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    let at = sel.scores.iter().find(|(t, _)| *t == sel.theta).unwrap().1.unwrap();
    assert_eq!(at, best);
    let again = select_bandwidth(&inst.dataset, &p, &grid, Ridge::default(), CvOptions::default()).unwrap();
    assert_eq!(sel, again);
}

#[test]
fn permutation_p_values_are_stable_across_seeds() {
    let spec = make_scenario("One/Equal/Low".parse::<Scenario>().unwrap(), ScaleOverrides::desk()).unwrap();
    let inst = generate_instance(&spec, 77).unwrap();
    let p = DistanceProvider::NetworkGeodesic(inst.network.geodesic_matrix());
    let a = permutation_test(&inst.dataset, &p, 1.0, Ridge::default(), 0, 1000, 1).unwrap();
    let b = permutation_test(&inst.dataset, &p, 1.0, Ridge::default(), 0, 1000, 2).unwrap();
    assert_eq!(a.v_obs, b.v_obs);
    assert!((a.p_value - b.p_value).abs() <= 0.06, "{} vs {}", a.p_value, b.p_value);
    let again = permutation_test(&inst.dataset, &p, 1.0, Ridge::default(), 0, 1000, 1).unwrap();
    assert_eq!(a, again);
}

#[test]
fn model_file_round_trip_preserves_predictions() {
    let d = dataset(37, 14, 6, &[(5, 4), (4, 2)], true);
    let fit = fit_all(&d, &line_distances(14, 0.4), 0.9, Ridge::Absolute(1e-6), &all_vertices(14)).unwrap();
    let text = to_json_string(&ModelFile::from_fit(&fit)).unwrap();
    let back = from_json_str::<ModelFile>(&text).unwrap().to_fit(&d).unwrap();
    assert_eq!(back.theta(), fit.theta());
    assert_eq!(back.ridge(), fit.ridge());
    for i in all_vertices(14) {
        assert_eq!(back.predict_coeffs(i).unwrap(), fit.predict_coeffs(i).unwrap());
    }
}
