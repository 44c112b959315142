//! Split-conformal prediction bands for graph-indexed functional responses.
//!
//! Procedure: split vertices within communities into training and
//! calibration, fit on training, predict calibration vertices out of sample,
//! build the modulation `S(t)` from calibration residuals, score each
//! calibration curve, take the conformal order statistic `k` and report
//! `Ŷ(t) ± k·S(t)` for new vertices.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::Curve;
use crate::graph::Partition;
use crate::model::{DistanceProvider, FunctionalDataset, ModelError, Ridge, TrainingContext};
use crate::quadrature::{trapezoid, uniform_grid};
use crate::seed::rng_for;

/// Per-vertex evaluations on the grid.
type Curves = Vec<Vec<f64>>;

/// Evaluation grid size used by default.
pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ConformalError {
    #[error("split leaves the {0} side empty")]
    EmptySide(&'static str),
    #[error("no calibration scores")]
    EmptyScores,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// `round(frac·N)` calibration vertices apportioned across communities.
    #[default]
    Proportional,
    /// Exactly one calibration vertex from every community with at least two members.
    OnePerCommunity,
}

/// Disjoint training / calibration vertex sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub training: Vec<usize>,
    pub calibration: Vec<usize>,
    pub frac: f64,
    pub mode: SplitMode,
    pub partition: Partition,
    pub seed: u64,
}

/// Calibration counts per community by largest remainder, ties to the lower id.
fn apportion(sizes: &[usize], frac: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (frac * total as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&s| frac * s as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = target.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(sizes.len() * 2) {
        if left == 0 {
            break;
        }
        if counts[c] < sizes[c] {
            counts[c] += 1;
            left -= 1;
        }
    }
    for (c, &s) in counts.iter_mut().zip(sizes) {
        if s >= 2 {
            *c = (*c).min(s - 1);
        }
    }
    counts
}

/// Stratified split of `pool` into training and calibration within communities.
pub fn stratified_split_among(
    partition: &Partition,
    pool: &[usize],
    frac: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitPlan, ConformalError> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(ConformalError::InvalidFraction(frac));
    }
    let labels = partition.labels();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.n_communities()];
    for &v in pool {
        if v >= labels.len() {
            return Err(ModelError::IndexOutOfRange { index: v, len: labels.len() }.into());
        }
        members[labels[v]].push(v);
    }
    for m in &mut members {
        m.sort_unstable();
        m.dedup();
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = match mode {
        SplitMode::Proportional => apportion(&sizes, frac),
        SplitMode::OnePerCommunity => sizes.iter().map(|&s| usize::from(s >= 2)).collect(),
    };
    let mut training = Vec::new();
    let mut calibration = Vec::new();
    for (c, mut m) in members.into_iter().enumerate() {
        m.shuffle(&mut rng_for(seed, &[c as u64]));
        calibration.extend_from_slice(&m[..counts[c]]);
        training.extend_from_slice(&m[counts[c]..]);
    }
    training.sort_unstable();
    calibration.sort_unstable();
    if training.is_empty() {
        return Err(ConformalError::EmptySide("training"));
    }
    if calibration.is_empty() {
        return Err(ConformalError::EmptySide("calibration"));
    }
    Ok(SplitPlan { training, calibration, frac, mode, partition: partition.clone(), seed })
}

/// [`stratified_split_among`] over every vertex of the partition.
pub fn stratified_split(
    partition: &Partition,
    frac: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitPlan, ConformalError> {
    let all: Vec<usize> = (0..partition.n_vertices()).collect();
    stratified_split_among(partition, &all, frac, seed, mode)
}

/// Pointwise scale `S(t)` of calibration residuals on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationFn {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub floor: f64,
}

/// Pointwise RMS of residual curves (given on `grid`), floored at
/// `max(1e-6, 1e-3·max S)`.
pub fn modulation_function(residuals: &[Vec<f64>], grid: &[f64]) -> Result<ModulationFn, ConformalError> {
    if residuals.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    let mut ms = vec![0.0; grid.len()];
    for r in residuals {
        if r.len() != grid.len() {
            return Err(ConformalError::GridMismatch(format!("residual has {} points, grid {}", r.len(), grid.len())));
        }
        for (m, v) in ms.iter_mut().zip(r) {
            *m += v * v;
        }
    }
    let n = residuals.len() as f64;
    let raw: Vec<f64> = ms.iter().map(|m| (m / n).sqrt()).collect();
    let floor = f64::max(1e-6, 1e-3 * raw.iter().copied().fold(0.0, f64::max));
    let values = raw.into_iter().map(|s| s.max(floor)).collect();
    Ok(ModulationFn { grid: grid.to_vec(), values, floor })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `sqrt(∫ ((Ŷ−Y)/S)² dt)`.
    H2,
    /// `max_t |Ŷ−Y|/S`.
    HInf,
}

impl ScoreKind {
    pub fn label(self) -> &'static str {
        match self {
            ScoreKind::H2 => "d2",
            ScoreKind::HInf => "dinf",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d2" | "h2" | "2" => Ok(ScoreKind::H2),
            "dinf" | "hinf" | "inf" => Ok(ScoreKind::HInf),
            other => Err(format!("unknown score kind '{other}' (expected d2 or dinf)")),
        }
    }
}

/// Nonconformity of one predicted/observed pair given on `s.grid`.
pub fn nonconformity(pred: &[f64], obs: &[f64], s: &ModulationFn, kind: ScoreKind) -> Result<f64, ConformalError> {
    if pred.len() != s.grid.len() || obs.len() != s.grid.len() {
        return Err(ConformalError::GridMismatch(format!(
            "curves have {} and {} points, grid {}",
            pred.len(),
            obs.len(),
            s.grid.len()
        )));
    }
    let scaled = pred.iter().zip(obs).zip(&s.values).map(|((p, o), sv)| (p - o).abs() / sv);
    Ok(match kind {
        ScoreKind::HInf => scaled.fold(0.0, f64::max),
        ScoreKind::H2 => {
            let sq: Vec<f64> = scaled.map(|z| z * z).collect();
            trapezoid(&s.grid, &sq).max(0.0).sqrt()
        }
    })
}

/// [`nonconformity`] for curves, evaluated on the modulation grid.
pub fn nonconformity_curves(pred: &Curve, obs: &Curve, s: &ModulationFn, kind: ScoreKind) -> Result<f64, ConformalError> {
    let p = pred.eval(&s.grid).map_err(ModelError::from)?;
    let o = obs.eval(&s.grid).map_err(ModelError::from)?;
    nonconformity(&p, &o, s, kind)
}

/// The `⌈(1−α)(n+1)⌉`-th smallest score, `+∞` when that index exceeds `n`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    let n = scores.len();
    let idx = (((1.0 - alpha) * (n + 1) as f64) - 1e-10).ceil().max(1.0) as usize;
    if idx > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[idx - 1])
}

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConformalError::InvalidAlpha(alpha))
    }
}

/// `center(t) ± radius·S(t)` on the modulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    pub vertex: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub modulation: ModulationFn,
}

impl PredictionBand {
    pub fn grid(&self) -> &[f64] {
        &self.modulation.grid
    }

    fn offset(&self, g: usize) -> f64 {
        if self.radius == 0.0 {
            0.0
        } else {
            self.radius * self.modulation.values[g]
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        (0..self.center.len()).map(|g| self.center[g] - self.offset(g)).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.center.len()).map(|g| self.center[g] + self.offset(g)).collect()
    }
}

pub fn build_band(vertex: usize, center: Vec<f64>, radius: f64, s: &ModulationFn) -> Result<PredictionBand, ConformalError> {
    if center.len() != s.grid.len() {
        return Err(ConformalError::GridMismatch(format!("center has {} points, grid {}", center.len(), s.grid.len())));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(ConformalError::LengthMismatch(format!("band radius must be >= 0, got {radius}")));
    }
    Ok(PredictionBand { vertex, center, radius, modulation: s.clone() })
}

/// Coverage and efficiency of a set of bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpReport {
    pub cov_g: f64,
    pub cov_l: f64,
    pub abw: f64,
    pub interval_score: f64,
    pub alpha: f64,
    pub kind: ScoreKind,
    pub radius: f64,
    pub n_calibration: usize,
    pub n_test: usize,
}

/// Global and local coverage, average band width and interval score.
pub fn evaluate(
    bands: &[PredictionBand],
    observed: &[Vec<f64>],
    alpha: f64,
    kind: ScoreKind,
    n_calibration: usize,
) -> Result<CpReport, ConformalError> {
    check_alpha(alpha)?;
    if bands.len() != observed.len() || bands.is_empty() {
        return Err(ConformalError::LengthMismatch(format!("{} bands for {} curves", bands.len(), observed.len())));
    }
    let n = bands.len() as f64;
    let (mut cov_g, mut cov_l, mut abw, mut score) = (0.0, 0.0, 0.0, 0.0);
    for (b, y) in bands.iter().zip(observed) {
        let grid = b.grid();
        if y.len() != grid.len() {
            return Err(ConformalError::GridMismatch(format!("curve has {} points, grid {}", y.len(), grid.len())));
        }
        let len = grid[grid.len() - 1] - grid[0];
        let (lo, up) = (b.lower(), b.upper());
        let inside: Vec<f64> = (0..y.len()).map(|g| f64::from(u8::from(lo[g] <= y[g] && y[g] <= up[g]))).collect();
        let n_in = inside.iter().filter(|&&v| v == 1.0).count();
        let local = if n_in == inside.len() {
            1.0
        } else if n_in == 0 {
            0.0
        } else {
            (trapezoid(grid, &inside) / len).clamp(0.0, 1.0)
        };
        let width: Vec<f64> = up.iter().zip(&lo).map(|(u, l)| u - l).collect();
        let w_int = trapezoid(grid, &width);
        let excess: Vec<f64> = (0..y.len()).map(|g| (lo[g] - y[g]).max(0.0) + (y[g] - up[g]).max(0.0)).collect();
        let pen = trapezoid(grid, &excess);
        cov_g += f64::from(u8::from(n_in == inside.len()));
        cov_l += local;
        abw += w_int;
        score += w_int + if pen > 0.0 { (2.0 / alpha) * pen } else { 0.0 };
    }
    Ok(CpReport {
        cov_g: cov_g / n,
        cov_l: cov_l / n,
        abw: abw / n,
        interval_score: score / n,
        alpha,
        kind,
        radius: bands[0].radius,
        n_calibration,
        n_test: bands.len(),
    })
}

/// Out-of-sample predictions for calibration and test vertices, on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalPredictions {
    pub grid: Vec<f64>,
    pub calibration: Vec<usize>,
    pub cal_pred: Vec<Vec<f64>>,
    pub cal_obs: Vec<Vec<f64>>,
    pub test: Vec<usize>,
    pub test_pred: Vec<Vec<f64>>,
    pub test_obs: Vec<Vec<f64>>,
}

/// Fits on `plan.training` and predicts calibration and `test` vertices.
pub fn predict_split(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    theta: f64,
    ridge: Ridge,
    plan: &SplitPlan,
    test: &[usize],
    grid: &[f64],
) -> Result<ConformalPredictions, ConformalError> {
    let train = d.select_rows(&plan.training)?;
    let ctx = TrainingContext::new(&train);
    let basis = d.response_basis();
    let predict = |vs: &[usize]| -> Result<(Curves, Curves), ConformalError> {
        let out: Vec<Result<_, ConformalError>> = vs
            .par_iter()
            .map(|&v| {
                let covs = d.covariate_row(v)?;
                let dist = provider.distances_to(v, &plan.training)?;
                let coeffs: DVector<f64> = ctx.predict(theta, ridge, &covs, &dist)?;
                let pred = Curve::new(basis.clone(), coeffs).map_err(ModelError::from)?;
                let obs = d.response_curve(v)?;
                Ok((pred.eval(grid).map_err(ModelError::from)?, obs.eval(grid).map_err(ModelError::from)?))
            })
            .collect();
        let mut p = Vec::with_capacity(vs.len());
        let mut o = Vec::with_capacity(vs.len());
        for r in out {
            let (a, b) = r?;
            p.push(a);
            o.push(b);
        }
        Ok((p, o))
    };
    let (cal_pred, cal_obs) = predict(&plan.calibration)?;
    let (test_pred, test_obs) = predict(test)?;
    Ok(ConformalPredictions {
        grid: grid.to_vec(),
        calibration: plan.calibration.clone(),
        cal_pred,
        cal_obs,
        test: test.to_vec(),
        test_pred,
        test_obs,
    })
}

/// Modulation, calibration scores and band radius for one score kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kind: ScoreKind,
    pub alpha: f64,
    pub modulation: ModulationFn,
    pub scores: Vec<f64>,
    pub radius: f64,
}

pub fn calibrate(p: &ConformalPredictions, alpha: f64, kind: ScoreKind) -> Result<Calibration, ConformalError> {
    let resid: Vec<Vec<f64>> =
        p.cal_pred.iter().zip(&p.cal_obs).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let modulation = modulation_function(&resid, &p.grid)?;
    let scores = p
        .cal_pred
        .iter()
        .zip(&p.cal_obs)
        .map(|(a, b)| nonconformity(a, b, &modulation, kind))
        .collect::<Result<Vec<_>, _>>()?;
    let radius = conformal_quantile(&scores, alpha)?;
    Ok(Calibration { kind, alpha, modulation, scores, radius })
}

/// Bands for the test vertices and their report.
pub fn bands_and_report(
    p: &ConformalPredictions,
    cal: &Calibration,
) -> Result<(Vec<PredictionBand>, CpReport), ConformalError> {
    let bands = p
        .test
        .iter()
        .zip(&p.test_pred)
        .map(|(&v, c)| build_band(v, c.clone(), cal.radius, &cal.modulation))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&bands, &p.test_obs, cal.alpha, cal.kind, p.calibration.len())?;
    Ok((bands, report))
}

/// Settings of one split-conformal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub kind: ScoreKind,
    /// Calibration share of the non-test vertices.
    pub cal_frac: f64,
    /// Share of all vertices held out as test vertices.
    pub test_frac: f64,
    pub mode: SplitMode,
    pub seed: u64,
    pub grid_points: usize,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            kind: ScoreKind::HInf,
            cal_frac: 0.5,
            test_frac: 0.2,
            mode: SplitMode::Proportional,
            seed: 0,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalOutcome {
    pub plan: SplitPlan,
    pub test: Vec<usize>,
    pub calibration: Calibration,
    pub bands: Vec<PredictionBand>,
    pub report: CpReport,
}

/// Test vertices drawn within communities, then the remaining vertices split.
pub fn holdout_and_split(
    partition: &Partition,
    cfg: &ConformalConfig,
) -> Result<(Vec<usize>, SplitPlan), ConformalError> {
    let outer = stratified_split(partition, cfg.test_frac, cfg.seed ^ 0x7E57, SplitMode::Proportional)?;
    let plan = stratified_split_among(partition, &outer.training, cfg.cal_frac, cfg.seed, cfg.mode)?;
    Ok((outer.calibration, plan))
}

/// Full pipeline with test vertices held out by [`holdout_and_split`].
pub fn run_split_conformal(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    partition: &Partition,
    theta: f64,
    ridge: Ridge,
    cfg: &ConformalConfig,
) -> Result<ConformalOutcome, ConformalError> {
    check_alpha(cfg.alpha)?;
    let (test, plan) = holdout_and_split(partition, cfg)?;
    run_with_plan(d, provider, theta, ridge, cfg, plan, &test)
}

/// Pipeline for a caller-supplied split and test set.
pub fn run_with_plan(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    theta: f64,
    ridge: Ridge,
    cfg: &ConformalConfig,
    plan: SplitPlan,
    test: &[usize],
) -> Result<ConformalOutcome, ConformalError> {
    check_alpha(cfg.alpha)?;
    if test.is_empty() {
        return Err(ConformalError::EmptySide("test"));
    }
    let (a, b) = d.response_basis().domain();
    let grid = uniform_grid(a, b, cfg.grid_points.max(2));
    let preds = predict_split(d, provider, theta, ridge, &plan, test, &grid)?;
    let calibration = calibrate(&preds, cfg.alpha, cfg.kind)?;
    let (bands, report) = bands_and_report(&preds, &calibration)?;
    Ok(ConformalOutcome { plan, test: test.to_vec(), calibration, bands, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        uniform_grid(0.0, 1.0, 101)
    }

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(&[25, 25, 25, 25], 0.5), vec![13, 13, 12, 12]);
        assert_eq!(apportion(&[2], 0.5), vec![1]);
        assert_eq!(apportion(&[3], 0.9), vec![2]);
    }

    #[test]
    fn split_examples() {
        let p = Partition::from_labels(&(0..100).map(|i| i / 25).collect::<Vec<_>>());
        let plan = stratified_split(&p, 0.5, 3, SplitMode::Proportional).unwrap();
        assert_eq!(plan.calibration.len(), 50);
        let two = Partition::from_labels(&[0, 0]);
        let plan = stratified_split(&two, 0.5, 1, SplitMode::Proportional).unwrap();
        assert_eq!((plan.training.len(), plan.calibration.len()), (1, 1));
        assert_eq!(
            stratified_split(&Partition::from_labels(&[0, 0, 0, 0]), 0.01, 1, SplitMode::Proportional),
            Err(ConformalError::EmptySide("calibration"))
        );
        let one = stratified_split(&p, 0.5, 3, SplitMode::OnePerCommunity).unwrap();
        assert_eq!(one.calibration.len(), 4);
    }

    #[test]
    fn modulation_examples() {
        let g = grid();
        let zero = modulation_function(&[vec![0.0; 101]], &g).unwrap();
        assert!(zero.values.iter().all(|&v| v == 1e-6));
        let two = modulation_function(&[vec![2.0; 101]], &g).unwrap();
        assert!(two.values.iter().all(|&v| v == 2.0));
        let mix = modulation_function(&[vec![1.0; 101], vec![3.0; 101]], &g).unwrap();
        assert!(mix.values.iter().all(|&v| (v - 5f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn score_examples() {
        let g = grid();
        let s = ModulationFn { grid: g.clone(), values: vec![1.0; 101], floor: 1e-6 };
        let y = vec![0.5; 101];
        assert_eq!(nonconformity(&y, &y, &s, ScoreKind::H2).unwrap(), 0.0);
        assert_eq!(nonconformity(&y, &y, &s, ScoreKind::HInf).unwrap(), 0.0);
        let shifted: Vec<f64> = y.iter().map(|v| v - 1.5).collect();
        assert!((nonconformity(&y, &shifted, &s, ScoreKind::H2).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(nonconformity(&y, &shifted, &s, ScoreKind::HInf).unwrap(), 1.5);
        assert!(matches!(nonconformity(&y[..3], &y[..3], &s, ScoreKind::H2), Err(ConformalError::GridMismatch(_))));
    }

    #[test]
    fn quantile_examples() {
        let s: Vec<f64> = (1..=19).map(f64::from).collect();
        assert_eq!(conformal_quantile(&s, 0.05).unwrap(), 19.0);
        assert_eq!(conformal_quantile(&[1.0, 2.0, 3.0], 0.05).unwrap(), f64::INFINITY);
        let s99: Vec<f64> = (1..=99).map(f64::from).collect();
        assert_eq!(conformal_quantile(&s99, 0.05).unwrap(), 95.0);
        assert_eq!(conformal_quantile(&[], 0.1), Err(ConformalError::EmptyScores));
        assert_eq!(conformal_quantile(&[1.0], 1.5), Err(ConformalError::InvalidAlpha(1.5)));
    }

    #[test]
    fn band_examples() {
        let g = grid();
        let s = ModulationFn { grid: g.clone(), values: vec![1.0; 101], floor: 1e-6 };
        let c = vec![0.25; 101];
        let b0 = build_band(0, c.clone(), 0.0, &s).unwrap();
        assert_eq!(b0.lower(), c);
        assert_eq!(b0.upper(), c);
        let b1 = build_band(0, c.clone(), 1.0, &s).unwrap();
        assert!(b1.upper().iter().zip(b1.lower()).all(|(u, l)| u - l == 2.0));
        let binf = build_band(0, c.clone(), f64::INFINITY, &s).unwrap();
        let r = evaluate(&[binf], &[vec![1e9; 101]], 0.05, ScoreKind::HInf, 1).unwrap();
        assert_eq!(r.cov_g, 1.0);
    }

    #[test]
    fn evaluate_examples() {
        let g = grid();
        let s = ModulationFn { grid: g.clone(), values: vec![1.0; 101], floor: 1e-6 };
        let b = build_band(0, vec![0.0; 101], 1.0, &s).unwrap();
        let inside = evaluate(&[b.clone(), b.clone()], &[vec![0.5; 101], vec![-0.2; 101]], 0.1, ScoreKind::H2, 5).unwrap();
        assert_eq!((inside.cov_g, inside.cov_l), (1.0, 1.0));
        assert_eq!(inside.interval_score, inside.abw);
        let mixed = evaluate(&[b.clone(), b.clone()], &[vec![5.0; 101], vec![0.0; 101]], 0.1, ScoreKind::H2, 5).unwrap();
        assert_eq!(mixed.cov_g, 0.5);
        // outside on [0, 0.5), inside on [0.5, 1]
        let half: Vec<f64> = g.iter().map(|&t| if t < 0.5 { 3.0 } else { 0.0 }).collect();
        let r = evaluate(&[b], &[half], 0.1, ScoreKind::H2, 5).unwrap();
        assert_eq!(r.cov_g, 0.0);
        assert!((r.cov_l - 0.5).abs() < 0.011);
        assert!(r.interval_score > r.abw);
    }
}
