//! Synthetic benchmark: twelve weighted-SBM scenarios and the study harness.
//!
//! Every vertex carries one functional covariate and one functional response
//! expanded on the same cubic B-spline basis on `[0, 1]`. Community `c` uses
//! the coefficient surface `a_c·B + c_c` built from a shared standard-normal
//! base block `B`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisSystem;
use crate::conformal::{
    bands_and_report, calibrate, holdout_and_split, predict_split, ConformalConfig, ConformalError, CpReport,
    ScoreKind, SplitMode,
};
use crate::graph::{generate_wsbm, louvain_communities, GraphError, Network, SbmSpec, WeightRule};
use crate::model::{
    all_vertices, fit_all, gof, select_bandwidth, Covariate, CvOptions, DistanceProvider, FunctionalDataset,
    ModelError, Ridge,
};
use crate::quadrature::uniform_grid;
use crate::seed::{derive_seed, rng_for};

/// `(a, c)` of the community surfaces `a·β + c`, cycled for more than four communities.
pub const COMMUNITY_TRANSFORMS: [(f64, f64); 4] = [(1.0, 2.0), (-1.0, -2.0), (2.0, -1.0), (-2.0, 1.0)];

/// Composition of the unequal-size case, scaled to the requested total.
pub const DIFFERENT_SHARES: [usize; 4] = [15, 20, 30, 35];

pub const SPLINE_ORDER: usize = 4;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidCombination(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeWeights {
    One,
    Random,
    InOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommunityOrder {
    Equal,
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub ew: EdgeWeights,
    pub oc: CommunityOrder,
    pub cbc: Connectivity,
}

impl EdgeWeights {
    pub fn label(self) -> &'static str {
        match self {
            EdgeWeights::One => "One",
            EdgeWeights::Random => "Random",
            EdgeWeights::InOut => "InOut",
        }
    }
}

impl CommunityOrder {
    pub fn label(self) -> &'static str {
        match self {
            CommunityOrder::Equal => "Equal",
            CommunityOrder::Different => "Different",
        }
    }
}

impl Connectivity {
    pub fn label(self) -> &'static str {
        match self {
            Connectivity::Low => "Low",
            Connectivity::High => "High",
        }
    }

    pub fn inter_p(self) -> f64 {
        match self {
            Connectivity::Low => 0.2,
            Connectivity::High => 0.5,
        }
    }
}

impl Scenario {
    pub const fn new(ew: EdgeWeights, oc: CommunityOrder, cbc: Connectivity) -> Self {
        Self { ew, oc, cbc }
    }

    /// All twelve combinations, edge weights varying slowest.
    pub fn all() -> Vec<Scenario> {
        let mut out = Vec::with_capacity(12);
        for ew in [EdgeWeights::One, EdgeWeights::Random, EdgeWeights::InOut] {
            for oc in [CommunityOrder::Equal, CommunityOrder::Different] {
                for cbc in [Connectivity::Low, Connectivity::High] {
                    out.push(Scenario { ew, oc, cbc });
                }
            }
        }
        out
    }

    /// Stable index in [`Scenario::all`], used for seed derivation.
    pub fn index(&self) -> u64 {
        let ew = match self.ew {
            EdgeWeights::One => 0,
            EdgeWeights::Random => 1,
            EdgeWeights::InOut => 2,
        };
        let oc = u64::from(self.oc == CommunityOrder::Different);
        let cbc = u64::from(self.cbc == Connectivity::High);
        ew * 4 + oc * 2 + cbc
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.ew.label(), self.oc.label(), self.cbc.label())
    }

    pub fn weight_rule(&self) -> WeightRule {
        match self.ew {
            EdgeWeights::One => WeightRule::One,
            EdgeWeights::Random => WeightRule::random_default(),
            EdgeWeights::InOut => WeightRule::in_out_default(),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    /// Parses `One/Equal/Low` style labels (case-insensitive, `/` `,` or `-` separated).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<String> = s.split(['/', ',', '-']).map(|p| p.trim().to_ascii_lowercase()).collect();
        let [ew, oc, cbc] = parts.as_slice() else {
            return Err(format!("scenario '{s}' must look like One/Equal/Low"));
        };
        let ew = match ew.as_str() {
            "one" => EdgeWeights::One,
            "random" => EdgeWeights::Random,
            "inout" => EdgeWeights::InOut,
            _ => return Err(format!("unknown edge-weight case '{ew}'")),
        };
        let oc = match oc.as_str() {
            "equal" => CommunityOrder::Equal,
            "different" => CommunityOrder::Different,
            _ => return Err(format!("unknown community-order case '{oc}'")),
        };
        let cbc = match cbc.as_str() {
            "low" => Connectivity::Low,
            "high" => Connectivity::High,
            _ => return Err(format!("unknown connectivity case '{cbc}'")),
        };
        Ok(Scenario { ew, oc, cbc })
    }
}

/// Size and noise settings that may be overridden per study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOverrides {
    pub n_total: usize,
    pub n_communities: usize,
    pub n_basis: usize,
    pub noise_var: f64,
}

impl ScaleOverrides {
    pub fn full() -> Self {
        Self { n_total: 100, n_communities: 4, n_basis: 21, noise_var: 1e-4 }
    }

    pub fn desk() -> Self {
        Self { n_total: 60, n_communities: 4, n_basis: 11, noise_var: 1e-4 }
    }
}

impl Default for ScaleOverrides {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_total: usize,
    pub n_communities: usize,
    pub n_basis: usize,
    pub noise_var: f64,
    pub block_sizes: Vec<usize>,
}

/// Integer apportionment of `total` proportional to `shares` (largest remainder).
pub fn apportion_sizes(total: usize, shares: &[usize]) -> Vec<usize> {
    let sum: usize = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|&s| total as f64 * s as f64 / sum as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = total - sizes.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        sizes[i] += 1;
    }
    sizes
}

pub fn make_scenario(scenario: Scenario, scale: ScaleOverrides) -> Result<ScenarioSpec, SimError> {
    let ScaleOverrides { n_total, n_communities, n_basis, noise_var } = scale;
    if n_communities == 0 || n_total < n_communities {
        return Err(SimError::InvalidCombination(format!("{n_total} vertices cannot form {n_communities} communities")));
    }
    if n_basis < SPLINE_ORDER {
        return Err(SimError::InvalidCombination(format!("basis size {n_basis} below spline order {SPLINE_ORDER}")));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(SimError::InvalidCombination(format!("noise variance {noise_var} must be finite and >= 0")));
    }
    let block_sizes = match scenario.oc {
        CommunityOrder::Equal => apportion_sizes(n_total, &vec![1; n_communities]),
        CommunityOrder::Different => {
            if n_communities != DIFFERENT_SHARES.len() {
                return Err(SimError::InvalidCombination(format!(
                    "unequal community sizes are defined for {} communities",
                    DIFFERENT_SHARES.len()
                )));
            }
            apportion_sizes(n_total, &DIFFERENT_SHARES)
        }
    };
    if block_sizes.contains(&0) {
        return Err(SimError::InvalidCombination(format!("{n_total} vertices leave an empty community")));
    }
    Ok(ScenarioSpec { scenario, n_total, n_communities, n_basis, noise_var, block_sizes })
}

/// One sampled network with its functional data and generating blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub spec: ScenarioSpec,
    pub network: Network,
    pub dataset: FunctionalDataset,
    pub base_block: DMatrix<f64>,
    /// Generating `K x K` block per vertex (covariate basis rows, response basis columns).
    pub true_blocks: Vec<DMatrix<f64>>,
    pub labels: Vec<usize>,
}

/// `a·B + c·(1 1ᵀ)`: the all-ones vectors are the coefficients of the constant 1.
pub fn community_block(base: &DMatrix<f64>, community: usize) -> DMatrix<f64> {
    let (a, c) = COMMUNITY_TRANSFORMS[community % COMMUNITY_TRANSFORMS.len()];
    base.map(|b| a * b + c)
}

pub fn simulation_basis(n_basis: usize) -> Result<BasisSystem, SimError> {
    Ok(BasisSystem::new((0.0, 1.0), n_basis, SPLINE_ORDER).map_err(ModelError::from)?)
}

pub fn generate_instance(spec: &ScenarioSpec, seed: u64) -> Result<GeneratedInstance, SimError> {
    let mut prob_rng = rng_for(seed, &[1]);
    let sbm = SbmSpec {
        block_sizes: spec.block_sizes.clone(),
        intra_p: spec.block_sizes.iter().map(|_| prob_rng.random_range(0.6..=0.8)).collect(),
        inter_p: spec.scenario.cbc.inter_p(),
        weight_rule: spec.scenario.weight_rule(),
    };
    let network = generate_wsbm(&sbm, derive_seed(seed, &[2]))?;
    let labels = sbm.block_labels();

    let k = spec.n_basis;
    let n = spec.n_total;
    let basis = simulation_basis(k)?;
    let mut rng = rng_for(seed, &[3]);
    let x = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let base_block: DMatrix<f64> = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let community_blocks: Vec<DMatrix<f64>> = (0..spec.n_communities).map(|c| community_block(&base_block, c)).collect();
    let true_blocks: Vec<DMatrix<f64>> = labels.iter().map(|&c| community_blocks[c].clone()).collect();

    let xj = &x * basis.gram().matrix();
    let mut y = DMatrix::zeros(n, k);
    for (i, block) in true_blocks.iter().enumerate() {
        y.row_mut(i).copy_from(&(xj.row(i) * block));
    }
    if spec.noise_var > 0.0 {
        let noise = Normal::new(0.0, spec.noise_var.sqrt()).map_err(|e| SimError::InvalidCombination(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let dataset = FunctionalDataset::new(basis.clone(), y, vec![Covariate { basis, coeffs: x }], false)?;
    Ok(GeneratedInstance { spec: spec.clone(), network, dataset, base_block, true_blocks, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Classic,
    Nwfr,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Classic => "classic",
            ModelKind::Nwfr => "nwfr",
        }
    }
}

/// How the NWFR bandwidth is chosen in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaPolicy {
    /// Leave-one-out CV over the default grid of the replicate's network.
    LooCv,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConformal {
    pub alpha: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
    pub kinds: Vec<ScoreKind>,
}

impl Default for StudyConformal {
    fn default() -> Self {
        Self { alpha: 0.05, cal_frac: 0.5, test_frac: 0.2, kinds: vec![ScoreKind::H2, ScoreKind::HInf] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub reps: usize,
    pub seed: u64,
    pub scale: ScaleOverrides,
    pub models: Vec<ModelKind>,
    pub theta: ThetaPolicy,
    pub ridge: Ridge,
    pub conformal: Option<StudyConformal>,
    pub grid_points: usize,
}

impl StudyConfig {
    pub fn desk(scenarios: Vec<Scenario>, seed: u64) -> Self {
        Self {
            scenarios,
            reps: 20,
            seed,
            scale: ScaleOverrides::desk(),
            models: vec![ModelKind::Classic, ModelKind::Nwfr],
            theta: ThetaPolicy::LooCv,
            ridge: Ridge::default(),
            conformal: Some(StudyConformal::default()),
            grid_points: crate::conformal::DEFAULT_GRID_POINTS,
        }
    }

    pub fn full(scenarios: Vec<Scenario>, seed: u64) -> Self {
        Self { reps: 100, scale: ScaleOverrides::full(), ..Self::desk(scenarios, seed) }
    }
}

/// Metrics of one model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: Scenario,
    pub rep: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub theta: f64,
    pub rimse: f64,
    pub r2: f64,
    pub r2_tilde: f64,
    pub conformal: Vec<CpReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub scenario: Scenario,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<StudyFailure>,
    pub rows: Vec<SummaryRow>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn provider_for(model: ModelKind, inst: &GeneratedInstance) -> DistanceProvider {
    match model {
        ModelKind::Classic => DistanceProvider::Uniform,
        ModelKind::Nwfr => DistanceProvider::NetworkGeodesic(inst.network.geodesic_matrix()),
    }
}

/// Fits, in-sample GOF and conformal evaluation of one model on one instance.
pub fn evaluate_model(
    inst: &GeneratedInstance,
    model: ModelKind,
    cfg: &StudyConfig,
    rep_seed: u64,
) -> Result<(f64, f64, f64, f64, Vec<CpReport>), SimError> {
    let d = &inst.dataset;
    let provider = provider_for(model, inst);
    let theta = match (model, cfg.theta) {
        (ModelKind::Classic, _) => 1.0,
        (ModelKind::Nwfr, ThetaPolicy::Fixed(t)) => t,
        (ModelKind::Nwfr, ThetaPolicy::LooCv) => {
            let grid = provider.default_theta_grid(d.n_vertices());
            select_bandwidth(d, &provider, &grid, cfg.ridge, CvOptions { max_holdout: None, seed: rep_seed })?.theta
        }
    };
    let all = all_vertices(d.n_vertices());
    let fit = fit_all(d, &provider, theta, cfg.ridge, &all)?;
    let pred = fit.predict_matrix(&all)?;
    let grid = uniform_grid(0.0, 1.0, cfg.grid_points.max(2));
    let g = gof(d.response_basis(), d.response_coeffs(), &pred, &grid)?;

    let mut reports = Vec::new();
    if let Some(cp) = &cfg.conformal {
        let partition = louvain_communities(&inst.network, derive_seed(rep_seed, &[0x10]), false);
        let ccfg = ConformalConfig {
            alpha: cp.alpha,
            kind: ScoreKind::HInf,
            cal_frac: cp.cal_frac,
            test_frac: cp.test_frac,
            mode: SplitMode::Proportional,
            seed: derive_seed(rep_seed, &[0x11]),
            grid_points: cfg.grid_points,
        };
        let (test, plan) = holdout_and_split(&partition, &ccfg)?;
        let preds = predict_split(d, &provider, theta, cfg.ridge, &plan, &test, &grid)?;
        for &kind in &cp.kinds {
            let cal = calibrate(&preds, cp.alpha, kind)?;
            reports.push(bands_and_report(&preds, &cal)?.1);
        }
    }
    Ok((theta, g.rimse, g.r2_average, g.r2_integrated, reports))
}

fn run_replicate(cfg: &StudyConfig, scenario: Scenario, rep: usize) -> Result<Vec<ReplicateRecord>, SimError> {
    let seed = derive_seed(cfg.seed, &[scenario.index(), rep as u64]);
    let spec = make_scenario(scenario, cfg.scale)?;
    let inst = generate_instance(&spec, seed)?;
    cfg.models
        .iter()
        .map(|&model| {
            let (theta, rimse, r2, r2_tilde, conformal) = evaluate_model(&inst, model, cfg, seed)?;
            Ok(ReplicateRecord { scenario, rep, seed, model, theta, rimse, r2, r2_tilde, conformal })
        })
        .collect()
}

/// Runs every scenario × replicate and aggregates per scenario and model.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport, SimError> {
    if cfg.reps == 0 {
        return Err(SimError::InvalidCombination("reps must be at least 1".into()));
    }
    for &s in &cfg.scenarios {
        make_scenario(s, cfg.scale)?;
    }
    let jobs: Vec<(Scenario, usize)> =
        cfg.scenarios.iter().flat_map(|&s| (0..cfg.reps).map(move |r| (s, r))).collect();
    let results: Vec<Result<Vec<ReplicateRecord>, SimError>> =
        jobs.par_iter().map(|&(s, r)| run_replicate(cfg, s, r)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(scenario, rep), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => records.extend(r),
            Err(e) => failures.push(StudyFailure { scenario, rep, error: e.to_string() }),
        }
    }
    let rows = summarize(cfg, &records);
    Ok(StudyReport { config: cfg.clone(), records, failures, rows })
}

fn summarize(cfg: &StudyConfig, records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &scenario in &cfg.scenarios {
        for &model in &cfg.models {
            let recs: Vec<&ReplicateRecord> =
                records.iter().filter(|r| r.scenario == scenario && r.model == model).collect();
            if recs.is_empty() {
                continue;
            }
            let mut push = |metric: String, vals: Vec<f64>| {
                let (mean, sd) = mean_sd(&vals);
                rows.push(SummaryRow { scenario, model, metric, mean, sd, reps: vals.len(), seed: cfg.seed });
            };
            push("rimse".into(), recs.iter().map(|r| r.rimse).collect());
            push("r2".into(), recs.iter().map(|r| r.r2).collect());
            push("r2_tilde".into(), recs.iter().map(|r| r.r2_tilde).collect());
            if model == ModelKind::Nwfr {
                push("theta".into(), recs.iter().map(|r| r.theta).collect());
            }
            if let Some(cp) = &cfg.conformal {
                for (j, kind) in cp.kinds.iter().enumerate() {
                    let pick = |f: fn(&CpReport) -> f64| recs.iter().filter_map(|r| r.conformal.get(j).map(f)).collect();
                    let tag = kind.label();
                    push(format!("cov_g_{tag}"), pick(|c| c.cov_g));
                    push(format!("cov_l_{tag}"), pick(|c| c.cov_l));
                    push(format!("abw_{tag}"), pick(|c| c.abw));
                    push(format!("interval_score_{tag}"), pick(|c| c.interval_score));
                }
            }
        }
    }
    rows
}

impl StudyReport {
    pub fn row(&self, scenario: Scenario, model: ModelKind, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.model == model && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ew,oc,cbc,model,metric,mean,sd,reps,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario.ew.label(),
                r.scenario.oc.label(),
                r.scenario.cbc.label(),
                r.model.label(),
                r.metric,
                r.mean,
                r.sd,
                r.reps,
                r.seed
            );
        }
        out
    }

    /// GOF tables per model and conformal tables per model and score.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let get = |s, m, metric: &str| self.row(s, m, metric).map(|r| (r.mean, r.sd));
        for &model in &self.config.models {
            let _ = writeln!(out, "### Goodness of fit: {}\n", model.label());
            out.push_str("| EW | OC | CBC | av. RIMSE | sd RIMSE | av. R2 % | sd R2 | av. R2~ % | sd R2~ |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|\n");
            for &s in &self.config.scenarios {
                let (Some(a), Some(b), Some(c)) = (get(s, model, "rimse"), get(s, model, "r2"), get(s, model, "r2_tilde"))
                else {
                    continue;
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.3} | {:.3} | {:.2} | {:.2} | {:.2} | {:.2} |",
                    s.ew.label(),
                    s.oc.label(),
                    s.cbc.label(),
                    a.0,
                    a.1,
                    100.0 * b.0,
                    100.0 * b.1,
                    100.0 * c.0,
                    100.0 * c.1
                );
            }
            out.push('\n');
        }
        if let Some(cp) = &self.config.conformal {
            for &model in &self.config.models {
                let _ = writeln!(out, "### Conformal bands: {} (alpha = {})\n", model.label(), cp.alpha);
                out.push_str("| EW | OC | CBC | D_h | Cov_G % | Cov_L % | ABW | S_int |\n");
                out.push_str("|---|---|---|---|---|---|---|---|\n");
                for &s in &self.config.scenarios {
                    for kind in &cp.kinds {
                        let t = kind.label();
                        let vals: Option<Vec<f64>> = ["cov_g", "cov_l", "abw", "interval_score"]
                            .iter()
                            .map(|m| get(s, model, &format!("{m}_{t}")).map(|v| v.0))
                            .collect();
                        let Some(v) = vals else { continue };
                        let _ = writeln!(
                            out,
                            "| {} | {} | {} | {} | {:.1} | {:.1} | {:.3} | {:.3} |",
                            s.ew.label(),
                            s.oc.label(),
                            s.cbc.label(),
                            t,
                            100.0 * v[0],
                            100.0 * v[1],
                            v[2],
                            v[3]
                        );
                    }
                }
                out.push('\n');
            }
        }
        if !self.failures.is_empty() {
            out.push_str("### Failed replicates\n\n");
            for f in &self.failures {
                let _ = writeln!(out, "- {} rep {}: {}", f.scenario.label(), f.rep, f.error);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_EQUAL_LOW: Scenario = Scenario::new(EdgeWeights::One, CommunityOrder::Equal, Connectivity::Low);

    #[test]
    fn scenario_examples() {
        let s = make_scenario(ONE_EQUAL_LOW, ScaleOverrides::full()).unwrap();
        assert_eq!(s.block_sizes, vec![25; 4]);
        assert_eq!(s.scenario.cbc.inter_p(), 0.2);
        let d = make_scenario(
            Scenario::new(EdgeWeights::Random, CommunityOrder::Different, Connectivity::High),
            ScaleOverrides::full(),
        )
        .unwrap();
        assert_eq!(d.block_sizes, vec![15, 20, 30, 35]);
        assert_eq!(d.scenario.cbc.inter_p(), 0.5);
        let desk = make_scenario(d.scenario, ScaleOverrides::desk()).unwrap();
        assert_eq!(desk.block_sizes, vec![9, 12, 18, 21]);
        assert_eq!(Scenario::all().len(), 12);
        let idx: std::collections::BTreeSet<u64> = Scenario::all().iter().map(Scenario::index).collect();
        assert_eq!(idx.len(), 12);
        assert_eq!("inout/different/high".parse::<Scenario>().unwrap().index(), 11);
    }

    #[test]
    fn invalid_scales() {
        let mut s = ScaleOverrides::desk();
        s.n_total = 3;
        assert!(matches!(make_scenario(ONE_EQUAL_LOW, s), Err(SimError::InvalidCombination(_))));
        let mut s = ScaleOverrides::desk();
        s.n_communities = 3;
        let diff = Scenario::new(EdgeWeights::One, CommunityOrder::Different, Connectivity::Low);
        assert!(make_scenario(diff, s).is_err());
        assert!(make_scenario(ONE_EQUAL_LOW, s).is_ok());
    }

    #[test]
    fn paired_communities_cancel() {
        let base = DMatrix::from_fn(3, 3, |r, c| (r as f64) - 0.3 * c as f64);
        let sum = community_block(&base, 0) + community_block(&base, 1);
        assert!(sum.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_generation_is_consistent() {
        let mut scale = ScaleOverrides::desk();
        scale.noise_var = 0.0;
        let spec = make_scenario(ONE_EQUAL_LOW, scale).unwrap();
        let inst = generate_instance(&spec, 9).unwrap();
        let d = &inst.dataset;
        let xj = d.covariates()[0].coeffs.clone() * d.covariates()[0].basis.gram().matrix();
        for i in 0..d.n_vertices() {
            let y = xj.row(i) * &inst.true_blocks[i];
            let diff = (y - d.response_coeffs().row(i)).abs().max();
            assert!(diff <= 1e-10);
        }
        assert!(inst.network.is_connected());
        assert_eq!(generate_instance(&spec, 9).unwrap(), inst);
    }

    #[test]
    fn mean_sd_basic() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }
}
