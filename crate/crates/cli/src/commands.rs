use std::fs::File;
use std::io::BufReader;

use nwfr_core::conformal::{run_split_conformal, ConformalConfig, ScoreKind, SplitMode};
use nwfr_core::formats::{
    read_json, write_bands_csv, write_curves_csv, write_surface_csv, DatasetFile, ModelFile, FORMAT_VERSION,
};
use nwfr_core::graph::{louvain_communities, write_edge_csv, Partition};
use nwfr_core::ingest::{
    build_lab_dataset, clean_and_window, connectivity_to_weights, knn_impute, parse_connectivity, parse_coordinates,
    parse_readings, parse_timestamp, LabConfig, WindowConfig,
};
use nwfr_core::model::{
    all_vertices, fit_all, gof, permutation_test, select_bandwidth, BandwidthSelection, CvOptions, DistanceProvider,
    Ridge,
};
use nwfr_core::quadrature::uniform_grid;
use nwfr_core::seed::derive_seed;
use nwfr_core::simgen::{
    generate_instance, make_scenario, run_study, ScaleOverrides, Scenario, StudyConfig, ThetaPolicy,
};
use nwfr_core::FunctionalDataset;
use serde_json::json;

use crate::cli::{
    BenchArgs, ConformalArgs, EstimationArgs, FitArgs, IngestArgs, ModelArg, PermtestArgs, PlotdataArgs, ScaleArg,
    SimulateArgs,
};
use crate::error::{CliError, CliResult};
use crate::io::{build_provider, load_dataset, OutputDir};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_open_unit(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn ridge(est: &EstimationArgs) -> CliResult<Ridge> {
    let r = match est.ridge_abs {
        Some(a) => Ridge::Absolute(a),
        None => Ridge::Relative(est.ridge_rel),
    };
    let v = match r {
        Ridge::Absolute(v) | Ridge::Relative(v) => v,
    };
    if v >= 0.0 && v.is_finite() {
        Ok(r)
    } else {
        Err(usage(format!("ridge must be finite and >= 0, got {v}")))
    }
}

fn parse_theta(s: &str) -> CliResult<Option<f64>> {
    if s.eq_ignore_ascii_case("cv") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(t) if t > 0.0 && t.is_finite() => Ok(Some(t)),
        _ => Err(usage(format!("--theta must be a positive number or 'cv', got '{s}'"))),
    }
}

/// Fixed bandwidth, or leave-one-out selection over the provider's default grid.
fn resolve_theta(
    est: &EstimationArgs,
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    ridge: Ridge,
    seed: u64,
) -> CliResult<(f64, Option<BandwidthSelection>)> {
    if let Some(t) = parse_theta(&est.theta)? {
        return Ok((t, None));
    }
    if matches!(provider, DistanceProvider::Uniform) {
        return Ok((1.0, None));
    }
    let grid = provider.default_theta_grid(d.n_vertices());
    let sel = select_bandwidth(d, provider, &grid, ridge, CvOptions { max_holdout: est.cv_holdout, seed })?;
    Ok((sel.theta, Some(sel)))
}

fn model_label(m: ModelArg) -> &'static str {
    match m {
        ModelArg::Nwfr => "nwfr",
        ModelArg::Gwfr => "gwfr",
        ModelArg::Classic => "classic",
    }
}

fn estimation_config(est: &EstimationArgs, ridge: Ridge, theta: f64) -> serde_json::Value {
    json!({
        "theta_arg": est.theta,
        "theta": theta,
        "ridge": ridge,
        "cv_holdout": est.cv_holdout,
    })
}

fn scale_overrides(scale: ScaleArg) -> ScaleOverrides {
    match scale {
        ScaleArg::Desk => ScaleOverrides::desk(),
        ScaleArg::Full => ScaleOverrides::full(),
    }
}

fn parse_scenario(s: &str) -> CliResult<Scenario> {
    s.parse::<Scenario>().map_err(|e| usage(format!("--scenario: {e}")))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let scenario = parse_scenario(&a.scenario)?;
    let base = scale_overrides(a.scale);
    let scale = ScaleOverrides {
        n_total: a.n_total.unwrap_or(base.n_total),
        n_basis: a.n_basis.unwrap_or(base.n_basis),
        noise_var: a.noise_var.unwrap_or(base.noise_var),
        ..base
    };
    let spec = make_scenario(scenario, scale)?;
    let inst = generate_instance(&spec, a.seed)?;
    let mut file = DatasetFile::from_dataset(&inst.dataset, "y", &["x"]);
    file.vertex_ids = Some((0..inst.labels.len() as u64).collect());

    let mut out = OutputDir::create(&a.out)?;
    out.json("dataset.json", &file)?;
    out.with_writer("network.csv", |w| write_edge_csv(&inst.network, w))?;
    out.json("labels.json", &inst.labels)?;
    out.finish(
        "simulate",
        json!({ "scenario": scenario.label(), "scale": scale, "block_sizes": spec.block_sizes, "seed": a.seed }),
    )?;
    println!(
        "simulate: {} with {} vertices and {} edges written to {}",
        scenario.label(),
        inst.labels.len(),
        inst.network.n_edges(),
        a.out.display()
    );
    Ok(())
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let data = load_dataset(&a.provider.data)?;
    let setup = build_provider(&a.provider, &data)?;
    let d = &data.dataset;
    let ridge = ridge(&a.est)?;
    let (theta, selection) = resolve_theta(&a.est, d, &setup.provider, ridge, a.seed)?;
    let all = all_vertices(d.n_vertices());
    let fit = fit_all(d, &setup.provider, theta, ridge, &all)?;
    let pred = fit.predict_matrix(&all)?;
    let (lo, hi) = d.response_basis().domain();
    let report = gof(d.response_basis(), d.response_coeffs(), &pred, &uniform_grid(lo, hi, a.grid_points.max(2)))?;

    let mut out = OutputDir::create(&a.out)?;
    out.json("model.json", &ModelFile::from_fit(&fit))?;
    out.json(
        "gof.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "model": model_label(a.provider.model),
            "theta": theta,
            "rimse": report.rimse,
            "r2": report.r2_average,
            "r2_tilde": report.r2_integrated,
            "grid": report.grid,
            "r2_pointwise": report.r2_pointwise,
        }),
    )?;
    if let Some(sel) = &selection {
        out.json("bandwidth.json", &json!({ "format_version": FORMAT_VERSION, "selection": sel }))?;
    }
    out.finish(
        "fit",
        json!({
            "data": a.provider.data,
            "model": model_label(a.provider.model),
            "network": a.provider.network,
            "coords": a.provider.coords,
            "estimation": estimation_config(&a.est, ridge, theta),
            "seed": a.seed,
            "grid_points": a.grid_points,
        }),
    )?;
    println!(
        "fit: model {} theta {theta:.6} RIMSE {:.6} R2 {:.4} R2~ {:.4}",
        model_label(a.provider.model),
        report.rimse,
        report.r2_average,
        report.r2_integrated
    );
    Ok(())
}

pub fn permtest(a: &PermtestArgs) -> CliResult<()> {
    if a.nperm == 0 {
        return Err(usage("--nperm must be at least 1"));
    }
    let data = load_dataset(&a.provider.data)?;
    let d = &data.dataset;
    if a.covariate >= d.n_covariates() {
        return Err(usage(format!("--covariate {} out of range ({} covariates)", a.covariate, d.n_covariates())));
    }
    let setup = build_provider(&a.provider, &data)?;
    let ridge = ridge(&a.est)?;
    let (theta, _) = resolve_theta(&a.est, d, &setup.provider, ridge, a.seed)?;
    let res = permutation_test(d, &setup.provider, theta, ridge, a.covariate, a.nperm, a.seed)?;

    let mut out = OutputDir::create(&a.out)?;
    out.json("permtest.json", &json!({ "format_version": FORMAT_VERSION, "theta": theta, "result": res }))?;
    out.finish(
        "permtest",
        json!({
            "data": a.provider.data,
            "model": model_label(a.provider.model),
            "network": a.provider.network,
            "coords": a.provider.coords,
            "estimation": estimation_config(&a.est, ridge, theta),
            "covariate": a.covariate,
            "nperm": a.nperm,
            "seed": a.seed,
        }),
    )?;
    println!(
        "permtest: v_obs {:.6e} p-value {:.4} ({} replicates, {} failed)",
        res.v_obs,
        res.p_value,
        res.null.len(),
        res.failures.len()
    );
    Ok(())
}

pub fn conformal(a: &ConformalArgs) -> CliResult<()> {
    check_open_unit("--alpha", a.alpha)?;
    check_open_unit("--cal-frac", a.cal_frac)?;
    check_open_unit("--test-frac", a.test_frac)?;
    let kind: ScoreKind = a.score.parse().map_err(|e: String| usage(format!("--score: {e}")))?;
    let data = load_dataset(&a.provider.data)?;
    let d = &data.dataset;
    let setup = build_provider(&a.provider, &data)?;
    let n = d.n_vertices();
    let (partition, partition_source) = match (&a.labels, &setup.network) {
        (Some(p), _) => {
            let labels: Vec<usize> = read_json_plain(p)?;
            if labels.len() != n {
                return Err(CliError::Data(format!("{} labels for {n} vertices", labels.len())));
            }
            (Partition::from_labels(&labels), "labels")
        }
        (None, Some(g)) => (louvain_communities(g, derive_seed(a.seed, &[0x11]), true), "louvain"),
        (None, None) => (Partition::from_labels(&vec![0; n]), "single"),
    };
    let ridge = ridge(&a.est)?;
    let (theta, _) = resolve_theta(&a.est, d, &setup.provider, ridge, a.seed)?;
    let cfg = ConformalConfig {
        alpha: a.alpha,
        kind,
        cal_frac: a.cal_frac,
        test_frac: a.test_frac,
        mode: if a.one_per_community { SplitMode::OnePerCommunity } else { SplitMode::Proportional },
        seed: a.seed,
        grid_points: a.grid_points.max(2),
    };
    let res = run_split_conformal(d, &setup.provider, &partition, theta, ridge, &cfg)?;

    let mut out = OutputDir::create(&a.out)?;
    out.json(
        "conformal.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "theta": theta,
            "report": res.report,
            "radius": res.calibration.radius,
            "calibration_scores": res.calibration.scores,
            "training": res.plan.training,
            "calibration": res.plan.calibration,
            "test": res.test,
            "communities": partition.labels(),
        }),
    )?;
    let ids = data.file.vertex_ids.clone();
    out.with_writer("bands.csv", |w| write_bands_csv(&res.bands, ids.as_deref(), w))?;
    out.finish(
        "conformal",
        json!({
            "data": a.provider.data,
            "model": model_label(a.provider.model),
            "network": a.provider.network,
            "coords": a.provider.coords,
            "estimation": estimation_config(&a.est, ridge, theta),
            "conformal": cfg,
            "partition": partition_source,
        }),
    )?;
    let r = &res.report;
    println!(
        "conformal: {} alpha {} Cov_G {:.3} Cov_L {:.3} ABW {:.4} S_int {:.4} ({} calibration, {} test)",
        kind.label(),
        a.alpha,
        r.cov_g,
        r.cov_l,
        r.abw,
        r.interval_score,
        r.n_calibration,
        r.n_test
    );
    Ok(())
}

fn read_json_plain<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    check_open_unit("--alpha", a.alpha)?;
    let scenarios = if a.scenario.iter().any(|s| s.eq_ignore_ascii_case("all")) {
        Scenario::all()
    } else {
        a.scenario.iter().map(|s| parse_scenario(s)).collect::<CliResult<Vec<_>>>()?
    };
    let mut cfg = match a.scale {
        ScaleArg::Desk => StudyConfig::desk(scenarios, a.seed),
        ScaleArg::Full => StudyConfig::full(scenarios, a.seed),
    };
    if let Some(r) = a.reps {
        if r == 0 {
            return Err(usage("--reps must be at least 1"));
        }
        cfg.reps = r;
    }
    cfg.theta = match parse_theta(&a.theta)? {
        Some(t) => ThetaPolicy::Fixed(t),
        None => ThetaPolicy::LooCv,
    };
    if a.no_conformal {
        cfg.conformal = None;
    } else if let Some(c) = cfg.conformal.as_mut() {
        c.alpha = a.alpha;
    }
    let report = run_study(&cfg)?;

    let mut out = OutputDir::create(&a.out)?;
    out.text("study.csv", &report.to_csv())?;
    let md = report.to_markdown();
    out.text("study.md", &md)?;
    out.json("study.json", &json!({ "format_version": FORMAT_VERSION, "report": report }))?;
    out.finish("bench", json!({ "study": cfg }))?;
    print!("{md}");
    if !report.failures.is_empty() {
        println!("{} replicate(s) failed; see study.json", report.failures.len());
    }
    Ok(())
}

fn open(path: &std::path::Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn ingest(a: &IngestArgs) -> CliResult<()> {
    if a.window == 0 {
        return Err(usage("--window must be at least 1 minute"));
    }
    if a.k_impute == 0 {
        return Err(usage("--k-impute must be at least 1"));
    }
    let mut wcfg = WindowConfig { window_minutes: a.window, light_log1p: a.light_log1p, ..WindowConfig::default() };
    for (arg, slot, name) in [(&a.start, &mut wcfg.start, "--start"), (&a.end, &mut wcfg.end, "--end")] {
        if let Some(s) = arg {
            *slot = parse_timestamp(s).ok_or_else(|| usage(format!("{name}: cannot parse timestamp '{s}'")))?;
        }
    }
    let parsed = parse_readings(open(&a.readings)?)?;
    let series = clean_and_window(&parsed.readings, &wcfg)?;
    let missing_before = series.n_missing();
    let complete = knn_impute(&series, a.k_impute)?;
    let links = parse_connectivity(open(&a.connectivity)?)?;
    let weights = connectivity_to_weights(&links, a.drop_zero)?;
    let coords = match a.locations.as_deref() {
        Some(p) => Some(parse_coordinates(open(p)?)?),
        None => None,
    };
    let lab_cfg = LabConfig { n_basis: a.n_basis, penalty: a.penalty, ..LabConfig::default() };
    let lab = build_lab_dataset(&complete, &weights, &lab_cfg, coords.as_ref())?;

    let mut file = DatasetFile::from_dataset(&lab.dataset, "humidity", &["temperature", "light"]);
    file.vertex_ids = Some(lab.sensors.iter().map(|&s| u64::from(s)).collect());
    file.coordinates = lab.coordinates.clone();

    let mut out = OutputDir::create(&a.out)?;
    out.json("dataset.json", &file)?;
    out.with_writer("network.csv", |w| write_edge_csv(&lab.network, w))?;
    out.json(
        "ingest_report.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "n_readings": parsed.readings.len(),
            "rejects": parsed.rejects,
            "sensors": lab.sensors,
            "n_windows": complete.n_windows,
            "missing_windows_imputed": missing_before,
            "voltage_flags": series.voltage_flag.iter().flatten().filter(|&&f| f).count(),
            "n_edges": lab.network.n_edges(),
            "network_connected": lab.network.is_connected(),
        }),
    )?;
    out.finish(
        "ingest",
        json!({
            "readings": a.readings,
            "connectivity": a.connectivity,
            "locations": a.locations,
            "window": a.window,
            "k_impute": a.k_impute,
            "start": wcfg.start.to_string(),
            "end": wcfg.end.to_string(),
            "drop_zero": a.drop_zero,
            "light_log1p": a.light_log1p,
            "lab": lab_cfg,
        }),
    )?;
    println!(
        "ingest: {} sensors, {} windows, {} readings ({} rejected), {} values imputed",
        lab.sensors.len(),
        complete.n_windows,
        parsed.readings.len(),
        parsed.rejects.len(),
        missing_before
    );
    Ok(())
}

pub fn plotdata(a: &PlotdataArgs) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let d = &data.dataset;
    let model: ModelFile = read_json(&a.model_file)?;
    let fit = model.to_fit(d)?;
    if a.vertex >= d.n_vertices() {
        return Err(usage(format!("--vertex {} out of range ({} vertices)", a.vertex, d.n_vertices())));
    }
    if a.covariate >= d.n_covariates() {
        return Err(usage(format!("--covariate {} out of range ({} covariates)", a.covariate, d.n_covariates())));
    }
    let n_grid = a.grid_points.max(2);
    let (t0, t1) = d.response_basis().domain();
    let (s0, s1) = d.covariates()[a.covariate].basis.domain();
    let t_grid = uniform_grid(t0, t1, n_grid);
    let s_grid = uniform_grid(s0, s1, n_grid);
    let surface = fit.beta_surface(a.vertex, a.covariate, &s_grid, &t_grid)?;

    let fitted = fit.fitted_vertices();
    let id = |v: usize| data.file.vertex_ids.as_ref().and_then(|ids| ids.get(v).copied()).unwrap_or(v as u64);
    let mut observed = Vec::new();
    let mut predicted = Vec::new();
    for &v in &fitted {
        observed.push((id(v), d.response_curve(v)?.eval(&t_grid).map_err(nwfr_core::ModelError::from)?));
        predicted.push((id(v), fit.predict_vertex(v)?.eval(&t_grid).map_err(nwfr_core::ModelError::from)?));
    }

    let mut out = OutputDir::create(&a.out)?;
    out.with_writer("surface.csv", |w| write_surface_csv(&surface, &t_grid, &s_grid, w))?;
    out.with_writer("observed.csv", |w| write_curves_csv(&observed, &t_grid, w))?;
    out.with_writer("predicted.csv", |w| write_curves_csv(&predicted, &t_grid, w))?;
    if let Some(c) = fit.intercept_curve(a.vertex)? {
        let vals = c.eval(&t_grid).map_err(nwfr_core::ModelError::from)?;
        out.with_writer("intercept.csv", |w| write_curves_csv(&[(id(a.vertex), vals)], &t_grid, w))?;
    }
    out.finish(
        "plotdata",
        json!({
            "data": a.data,
            "model_file": a.model_file,
            "vertex": a.vertex,
            "covariate": a.covariate,
            "grid_points": n_grid,
        }),
    )?;
    println!("plotdata: surface for vertex {} covariate {} written to {}", id(a.vertex), a.covariate, a.out.display());
    Ok(())
}
