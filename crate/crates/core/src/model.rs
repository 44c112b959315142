//! Per-vertex weighted functional regression.
//!
//! Every vertex `i` gets its own concurrent functional regression whose
//! training rows are weighted by a Gaussian kernel of the distance from `i`.
//! With basis expansions `Y = 𝐘 Ψ`, `X_p = 𝐗_p Φ_p` the block estimate is
//!
//! ```text
//! 𝔹_i = (𝕏ᵀ W_i 𝕏 + λ I)⁻¹ 𝕏ᵀ W_i 𝐘,   𝕏 = [𝐗_1 J_Φ1 … 𝐗_P J_ΦP]
//! ```
//!
//! The distance comes from a [`DistanceProvider`]: network geodesics (NWFR),
//! Euclidean coordinates (GWFR) or nothing at all (classical FR, every weight 1).

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisSystem, Curve, GramMatrix};
use crate::graph::DistanceMatrix;
use crate::quadrature::trapezoid;
use crate::seed::rng_for;

/// Condition number above which an unregularized system is rejected.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("bandwidth must be positive and finite, got {0}")]
    NonpositiveBandwidth(f64),
    #[error("vertex {0} is not covered by the distance provider")]
    UncoveredVertex(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular system (condition number {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("no fitted block for vertex {0}")]
    MissingBlock(usize),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("observed curves have zero total variance")]
    DegenerateVariance,
    #[error("every bandwidth candidate failed to fit")]
    AllFitsFailed,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Basis and coefficient rows of one functional covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub basis: BasisSystem,
    pub coeffs: DMatrix<f64>,
}

/// Functional responses and covariates on `N` vertices, one coefficient row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    response_basis: BasisSystem,
    response_coeffs: DMatrix<f64>,
    covariates: Vec<Covariate>,
    include_intercept: bool,
}

impl FunctionalDataset {
    pub fn new(
        response_basis: BasisSystem,
        response_coeffs: DMatrix<f64>,
        covariates: Vec<Covariate>,
        include_intercept: bool,
    ) -> Result<Self, ModelError> {
        let n = response_coeffs.nrows();
        if n == 0 {
            return Err(ModelError::DimensionMismatch("dataset has no vertices".into()));
        }
        if response_coeffs.ncols() != response_basis.n_basis() {
            return Err(ModelError::DimensionMismatch(format!(
                "response has {} coefficient columns, basis has {}",
                response_coeffs.ncols(),
                response_basis.n_basis()
            )));
        }
        if covariates.is_empty() && !include_intercept {
            return Err(ModelError::DimensionMismatch("need at least one covariate or an intercept".into()));
        }
        for (p, c) in covariates.iter().enumerate() {
            if c.coeffs.nrows() != n || c.coeffs.ncols() != c.basis.n_basis() {
                return Err(ModelError::DimensionMismatch(format!(
                    "covariate {p} has shape {}x{}, expected {n}x{}",
                    c.coeffs.nrows(),
                    c.coeffs.ncols(),
                    c.basis.n_basis()
                )));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::DimensionMismatch(format!("covariate {p} has non-finite coefficients")));
            }
        }
        if response_coeffs.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::DimensionMismatch("response has non-finite coefficients".into()));
        }
        Ok(Self { response_basis, response_coeffs, covariates, include_intercept })
    }

    pub fn n_vertices(&self) -> usize {
        self.response_coeffs.nrows()
    }

    pub fn response_basis(&self) -> &BasisSystem {
        &self.response_basis
    }

    pub fn response_coeffs(&self) -> &DMatrix<f64> {
        &self.response_coeffs
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn include_intercept(&self) -> bool {
        self.include_intercept
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    /// Design column count `M = ΣK_p (+1)`.
    pub fn n_design_cols(&self) -> usize {
        self.covariates.iter().map(|c| c.basis.n_basis()).sum::<usize>() + usize::from(self.include_intercept)
    }

    pub fn response_curve(&self, i: usize) -> Result<Curve, ModelError> {
        self.check_vertex(i)?;
        Ok(Curve::new(self.response_basis.clone(), self.response_coeffs.row(i).transpose())?)
    }

    /// Covariate coefficient vectors of vertex `i`, one per covariate.
    pub fn covariate_row(&self, i: usize) -> Result<Vec<DVector<f64>>, ModelError> {
        self.check_vertex(i)?;
        Ok(self.covariates.iter().map(|c| c.coeffs.row(i).transpose()).collect())
    }

    fn check_vertex(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.n_vertices() {
            return Err(ModelError::IndexOutOfRange { index: i, len: self.n_vertices() });
        }
        Ok(())
    }

    /// Dataset whose row `r` is row `rows[r]` of `self`.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, ModelError> {
        for &r in rows {
            self.check_vertex(r)?;
        }
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)]);
        Self::new(
            self.response_basis.clone(),
            pick(&self.response_coeffs),
            self.covariates.iter().map(|c| Covariate { basis: c.basis.clone(), coeffs: pick(&c.coeffs) }).collect(),
            self.include_intercept,
        )
    }

    fn intercept_value(&self) -> f64 {
        self.response_basis.domain_length()
    }

    /// Stacked design row for arbitrary covariate coefficients.
    pub fn design_row(&self, covariates: &[DVector<f64>]) -> Result<RowDVector<f64>, ModelError> {
        if covariates.len() != self.covariates.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {} covariates, got {}",
                self.covariates.len(),
                covariates.len()
            )));
        }
        let mut row = RowDVector::zeros(self.n_design_cols());
        let mut off = 0;
        for (c, x) in self.covariates.iter().zip(covariates) {
            let k = c.basis.n_basis();
            if x.len() != k {
                return Err(ModelError::DimensionMismatch(format!("covariate row has {} entries, basis has {k}", x.len())));
            }
            let block = x.transpose() * c.basis.gram().matrix();
            row.columns_mut(off, k).copy_from(&block);
            off += k;
        }
        if self.include_intercept {
            row[off] = self.intercept_value();
        }
        Ok(row)
    }
}

/// `𝕏 = [𝐗_1 J_Φ1 … 𝐗_P J_ΦP (| |T|·1)]`.
pub fn stack_design(d: &FunctionalDataset) -> DMatrix<f64> {
    let n = d.n_vertices();
    let mut x = DMatrix::zeros(n, d.n_design_cols());
    let mut off = 0;
    for c in &d.covariates {
        let k = c.basis.n_basis();
        let block = &c.coeffs * c.basis.gram().matrix();
        x.columns_mut(off, k).copy_from(&block);
        off += k;
    }
    if d.include_intercept {
        x.column_mut(off).fill(d.intercept_value());
    }
    x
}

/// Source of pairwise vertex distances.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceProvider {
    NetworkGeodesic(DistanceMatrix),
    SpatialEuclidean(Vec<Vec<f64>>),
    Uniform,
}

impl DistanceProvider {
    /// Euclidean provider; all coordinate rows must share a dimension and be finite.
    pub fn spatial(coords: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let dim = coords.first().map_or(0, Vec::len);
        if dim == 0 || coords.iter().any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::InvalidArgument("coordinates must be finite rows of equal nonzero length".into()));
        }
        Ok(Self::SpatialEuclidean(coords))
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::NetworkGeodesic(_) => "nwfr",
            Self::SpatialEuclidean(_) => "gwfr",
            Self::Uniform => "classic",
        }
    }

    /// Number of covered vertices; `None` means every vertex.
    pub fn n_covered(&self) -> Option<usize> {
        match self {
            Self::NetworkGeodesic(m) => Some(m.n()),
            Self::SpatialEuclidean(c) => Some(c.len()),
            Self::Uniform => None,
        }
    }

    fn covers(&self, i: usize) -> bool {
        self.n_covered().is_none_or(|n| i < n)
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64, ModelError> {
        for v in [i, j] {
            if !self.covers(v) {
                return Err(ModelError::UncoveredVertex(v));
            }
        }
        Ok(match self {
            Self::NetworkGeodesic(m) => m.get(i, j),
            Self::SpatialEuclidean(c) => c[i].iter().zip(&c[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Self::Uniform => 0.0,
        })
    }

    pub fn distances_to(&self, i: usize, targets: &[usize]) -> Result<Vec<f64>, ModelError> {
        targets.iter().map(|&j| self.distance(i, j)).collect()
    }

    /// Default bandwidth grid: 20 log-spaced values from half the smallest
    /// positive distance to twice the largest finite distance.
    pub fn default_theta_grid(&self, n_vertices: usize) -> Vec<f64> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        match self {
            Self::Uniform => return vec![1.0],
            Self::NetworkGeodesic(m) => {
                lo = m.min_positive().unwrap_or(f64::INFINITY);
                hi = m.diameter();
            }
            Self::SpatialEuclidean(c) => {
                let n = c.len().min(n_vertices);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = self.distance(i, j).unwrap_or(0.0);
                        if d > 0.0 {
                            lo = lo.min(d);
                            hi = hi.max(d);
                        }
                    }
                }
            }
        }
        if !lo.is_finite() || hi <= 0.0 {
            return vec![1.0];
        }
        log_grid(lo / 2.0, 2.0 * hi, 20)
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Gaussian kernel `exp(-½ (d/θ)²)` applied to each distance.
pub fn kernel_weights(dist_row: &[f64], theta: f64) -> Result<Vec<f64>, ModelError> {
    check_theta(theta)?;
    dist_row
        .iter()
        .map(|&d| {
            if d.is_nan() || d < 0.0 {
                return Err(ModelError::InvalidArgument(format!("distance must be >= 0, got {d}")));
            }
            let z = d / theta;
            Ok((-0.5 * z * z).exp())
        })
        .collect()
}

fn check_theta(theta: f64) -> Result<(), ModelError> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonpositiveBandwidth(theta))
    }
}

/// Diagonal of `W_i` over the `active` vertices.
pub fn weight_matrix(
    i: usize,
    provider: &DistanceProvider,
    theta: f64,
    active: &[usize],
) -> Result<Vec<f64>, ModelError> {
    check_theta(theta)?;
    if matches!(provider, DistanceProvider::Uniform) {
        return Ok(vec![1.0; active.len()]);
    }
    kernel_weights(&provider.distances_to(i, active)?, theta)
}

/// Ridge stabilization of the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Ridge {
    /// `λ = factor · trace(𝕏ᵀW𝕏) / M`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    pub fn none() -> Self {
        Ridge::Absolute(0.0)
    }

    fn validate(self) -> Result<(), ModelError> {
        let v = match self {
            Ridge::Relative(v) | Ridge::Absolute(v) => v,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ModelError::InvalidArgument(format!("ridge must be finite and >= 0, got {v}")))
        }
    }

    fn lambda(self, gram: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(f) => {
                let m = gram.nrows().max(1) as f64;
                f * gram.trace() / m
            }
        }
    }
}

/// One solved vertex system.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexBlock {
    /// `M x K` coefficient block.
    pub block: DMatrix<f64>,
    pub lambda: f64,
    /// Condition number of `𝕏ᵀW𝕏 + λI`.
    pub condition: f64,
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min <= 0.0 || max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `(𝕏ᵀW𝕏 + λI) 𝔹 = 𝕏ᵀW𝐘` for one vertex.
pub fn fit_vertex(
    design: &DMatrix<f64>,
    y: &DMatrix<f64>,
    weights: &[f64],
    ridge: Ridge,
) -> Result<VertexBlock, ModelError> {
    ridge.validate()?;
    if design.nrows() != y.nrows() || design.nrows() != weights.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "design has {} rows, response {}, weights {}",
            design.nrows(),
            y.nrows(),
            weights.len()
        )));
    }
    let mut wx = design.clone();
    for (r, &w) in weights.iter().enumerate() {
        wx.row_mut(r).scale_mut(w);
    }
    let xtwx = {
        let g = wx.transpose() * design;
        (&g + g.transpose()) * 0.5
    };
    let xtwy = wx.transpose() * y;
    let lambda = ridge.lambda(&xtwx);
    let mut lhs = xtwx;
    for k in 0..lhs.nrows() {
        lhs[(k, k)] += lambda;
    }
    let condition = condition_number(&lhs);
    if lambda == 0.0 && (condition.is_nan() || condition > SINGULAR_CONDITION) {
        return Err(ModelError::SingularSystem { condition });
    }
    let chol = lhs.cholesky().ok_or(ModelError::SingularSystem { condition })?;
    let block = chol.solve(&xtwy);
    if block.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SingularSystem { condition });
    }
    Ok(VertexBlock { block, lambda, condition })
}

/// Fitted per-vertex blocks plus everything needed to predict and report.
#[derive(Debug, Clone, PartialEq)]
pub struct NwfrFit {
    pub(crate) theta: f64,
    pub(crate) ridge: Ridge,
    pub(crate) provider_id: String,
    pub(crate) response_basis: BasisSystem,
    pub(crate) covariate_bases: Vec<BasisSystem>,
    pub(crate) include_intercept: bool,
    pub(crate) design: DMatrix<f64>,
    pub(crate) blocks: Vec<Option<VertexBlock>>,
}

/// Fits one block per vertex of `training`, each weighted over `training`.
///
/// The Uniform provider solves a single pooled system and shares it.
pub fn fit_all(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    theta: f64,
    ridge: Ridge,
    training: &[usize],
) -> Result<NwfrFit, ModelError> {
    check_theta(theta)?;
    ridge.validate()?;
    if training.is_empty() {
        return Err(ModelError::InvalidArgument("training set is empty".into()));
    }
    let n = d.n_vertices();
    for &i in training {
        if i >= n {
            return Err(ModelError::IndexOutOfRange { index: i, len: n });
        }
        if !provider.covers(i) {
            return Err(ModelError::UncoveredVertex(i));
        }
    }
    let design = stack_design(d);
    let train_x = DMatrix::from_fn(training.len(), design.ncols(), |r, c| design[(training[r], c)]);
    let train_y =
        DMatrix::from_fn(training.len(), d.response_coeffs.ncols(), |r, c| d.response_coeffs[(training[r], c)]);

    let mut blocks: Vec<Option<VertexBlock>> = vec![None; n];
    if matches!(provider, DistanceProvider::Uniform) {
        let shared = fit_vertex(&train_x, &train_y, &vec![1.0; training.len()], ridge)?;
        for &i in training {
            blocks[i] = Some(shared.clone());
        }
    } else {
        let solved: Vec<Result<VertexBlock, ModelError>> = training
            .par_iter()
            .map(|&i| {
                let w = weight_matrix(i, provider, theta, training)?;
                fit_vertex(&train_x, &train_y, &w, ridge)
            })
            .collect();
        for (&i, r) in training.iter().zip(solved) {
            blocks[i] = Some(r?);
        }
    }
    Ok(NwfrFit {
        theta,
        ridge,
        provider_id: provider.id().to_string(),
        response_basis: d.response_basis.clone(),
        covariate_bases: d.covariates.iter().map(|c| c.basis.clone()).collect(),
        include_intercept: d.include_intercept,
        design,
        blocks,
    })
}

/// `0..n`.
pub fn all_vertices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

impl NwfrFit {
    /// Rebuilds a fit from stored blocks and the dataset they belong to.
    pub fn from_parts(
        d: &FunctionalDataset,
        theta: f64,
        ridge: Ridge,
        provider_id: &str,
        blocks: Vec<Option<VertexBlock>>,
    ) -> Result<Self, ModelError> {
        check_theta(theta)?;
        let m = d.n_design_cols();
        let k = d.response_basis.n_basis();
        if blocks.len() != d.n_vertices() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} blocks for {} vertices",
                blocks.len(),
                d.n_vertices()
            )));
        }
        for b in blocks.iter().flatten() {
            if b.block.nrows() != m || b.block.ncols() != k || b.block.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::DimensionMismatch(format!("blocks must be finite {m}x{k} matrices")));
            }
        }
        Ok(Self {
            theta,
            ridge,
            provider_id: provider_id.to_string(),
            response_basis: d.response_basis.clone(),
            covariate_bases: d.covariates.iter().map(|c| c.basis.clone()).collect(),
            include_intercept: d.include_intercept,
            design: stack_design(d),
            blocks,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn ridge(&self) -> Ridge {
        self.ridge
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn response_basis(&self) -> &BasisSystem {
        &self.response_basis
    }

    pub fn covariate_bases(&self) -> &[BasisSystem] {
        &self.covariate_bases
    }

    pub fn include_intercept(&self) -> bool {
        self.include_intercept
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn blocks(&self) -> &[Option<VertexBlock>] {
        &self.blocks
    }

    /// Vertices that carry a fitted block, ascending.
    pub fn fitted_vertices(&self) -> Vec<usize> {
        self.blocks.iter().enumerate().filter(|(_, b)| b.is_some()).map(|(i, _)| i).collect()
    }

    pub fn block(&self, i: usize) -> Result<&VertexBlock, ModelError> {
        self.blocks.get(i).and_then(Option::as_ref).ok_or(ModelError::MissingBlock(i))
    }

    fn covariate_offset(&self, p: usize) -> Result<usize, ModelError> {
        if p >= self.covariate_bases.len() {
            return Err(ModelError::IndexOutOfRange { index: p, len: self.covariate_bases.len() });
        }
        Ok(self.covariate_bases[..p].iter().map(BasisSystem::n_basis).sum())
    }

    /// Rows of `𝔹_i` belonging to covariate `p` (`K_p x K`).
    pub fn covariate_block(&self, i: usize, p: usize) -> Result<DMatrix<f64>, ModelError> {
        let off = self.covariate_offset(p)?;
        let kp = self.covariate_bases[p].n_basis();
        Ok(self.block(i)?.block.rows(off, kp).into_owned())
    }

    /// Predicted response coefficients `𝕏_i 𝔹_i`.
    pub fn predict_coeffs(&self, i: usize) -> Result<DVector<f64>, ModelError> {
        let b = self.block(i)?;
        Ok((self.design.row(i) * &b.block).transpose())
    }

    pub fn predict_vertex(&self, i: usize) -> Result<Curve, ModelError> {
        Ok(Curve::new(self.response_basis.clone(), self.predict_coeffs(i)?)?)
    }

    /// Predicted coefficient rows for `vertices`.
    pub fn predict_matrix(&self, vertices: &[usize]) -> Result<DMatrix<f64>, ModelError> {
        let k = self.response_basis.n_basis();
        let mut out = DMatrix::zeros(vertices.len(), k);
        for (r, &i) in vertices.iter().enumerate() {
            out.row_mut(r).copy_from(&self.predict_coeffs(i)?.transpose());
        }
        Ok(out)
    }

    /// `β̂_{i,p}(t, s)` on a grid, `t` along rows and `s` along columns.
    pub fn beta_surface(&self, i: usize, p: usize, s_grid: &[f64], t_grid: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let b = self.covariate_block(i, p)?;
        let phi = self.covariate_bases[p].eval_matrix(s_grid)?;
        let psi = self.response_basis.eval_matrix(t_grid)?;
        Ok(psi * b.transpose() * phi.transpose())
    }

    /// Intercept function `β̂_{i,0}(t)` when the fit has one.
    pub fn intercept_curve(&self, i: usize) -> Result<Option<Curve>, ModelError> {
        if !self.include_intercept {
            return Ok(None);
        }
        let b = self.block(i)?;
        let row = b.block.row(b.block.nrows() - 1).transpose() * self.response_basis.domain_length();
        Ok(Some(Curve::new(self.response_basis.clone(), row)?))
    }
}

/// Training rows prepared once for repeated out-of-sample fits.
#[derive(Debug, Clone)]
pub struct TrainingContext<'a> {
    dataset: &'a FunctionalDataset,
    design: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl<'a> TrainingContext<'a> {
    pub fn new(train: &'a FunctionalDataset) -> Self {
        Self { dataset: train, design: stack_design(train), y: train.response_coeffs.clone() }
    }

    /// Fits a block for a vertex at `distances` from the training rows and
    /// applies it to that vertex's covariates.
    pub fn predict(
        &self,
        theta: f64,
        ridge: Ridge,
        new_covariates: &[DVector<f64>],
        distances: &[f64],
    ) -> Result<DVector<f64>, ModelError> {
        if distances.len() != self.design.nrows() {
            return Err(ModelError::UncoveredVertex(distances.len()));
        }
        let row = self.dataset.design_row(new_covariates)?;
        let w = kernel_weights(distances, theta)?;
        let b = fit_vertex(&self.design, &self.y, &w, ridge)?;
        Ok((row * b.block).transpose())
    }
}

/// Out-of-sample prediction for a vertex outside `train`.
pub fn predict_new_vertex(
    train: &FunctionalDataset,
    theta: f64,
    ridge: Ridge,
    new_covariates: &[DVector<f64>],
    distances: &[f64],
) -> Result<Curve, ModelError> {
    let coeffs = TrainingContext::new(train).predict(theta, ridge, new_covariates, distances)?;
    Ok(Curve::new(train.response_basis.clone(), coeffs)?)
}

/// Goodness-of-fit indices of predicted against observed curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub rimse: f64,
    pub grid: Vec<f64>,
    /// `R²(t)` on `grid`; NaN where every observed curve takes the same value.
    pub r2_pointwise: Vec<f64>,
    /// Mean of the defined `R²(t)` values over the grid.
    pub r2_average: f64,
    pub r2_integrated: f64,
}

/// RIMSE, `R²(t)` and integrated `R̃²` from coefficient rows on a shared basis.
pub fn gof(
    basis: &BasisSystem,
    observed: &DMatrix<f64>,
    predicted: &DMatrix<f64>,
    grid: &[f64],
) -> Result<GofReport, ModelError> {
    if observed.shape() != predicted.shape() || observed.ncols() != basis.n_basis() || observed.nrows() == 0 {
        return Err(ModelError::DimensionMismatch(format!(
            "observed {:?} vs predicted {:?} on a basis of {}",
            observed.shape(),
            predicted.shape(),
            basis.n_basis()
        )));
    }
    let n = observed.nrows() as f64;
    let j = basis.gram();
    let resid = observed - predicted;
    let mean = observed.row_mean();
    let centered = DMatrix::from_fn(observed.nrows(), observed.ncols(), |r, c| observed[(r, c)] - mean[c]);
    let quad = |m: &DMatrix<f64>| (m * j.matrix()).component_mul(m).sum();
    let sse = quad(&resid).max(0.0);
    let sst = quad(&centered).max(0.0);
    if sst == 0.0 {
        return Err(ModelError::DegenerateVariance);
    }
    let rimse = (sse / n).sqrt();
    let r2_integrated = 1.0 - sse / sst;

    let psi = basis.eval_matrix(grid)?;
    let obs_t = &psi * observed.transpose();
    let res_t = &psi * resid.transpose();
    let mut r2_pointwise = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let row = obs_t.row(g);
        let m = row.mean();
        let den: f64 = row.iter().map(|v| (v - m) * (v - m)).sum();
        let num: f64 = res_t.row(g).iter().map(|v| v * v).sum();
        r2_pointwise.push(if den > 0.0 { 1.0 - num / den } else { f64::NAN });
    }
    let defined: Vec<f64> = r2_pointwise.iter().copied().filter(|v| v.is_finite()).collect();
    let r2_average = if defined.is_empty() { f64::NAN } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    Ok(GofReport { rimse, grid: grid.to_vec(), r2_pointwise, r2_average, r2_integrated })
}

/// [`gof`] for curve lists.
pub fn gof_curves(observed: &[Curve], predicted: &[Curve], grid: &[f64]) -> Result<GofReport, ModelError> {
    let basis = observed.first().ok_or_else(|| ModelError::DimensionMismatch("no curves".into()))?.basis();
    if observed.len() != predicted.len() || observed.iter().chain(predicted).any(|c| c.basis() != basis) {
        return Err(ModelError::Basis(BasisError::BasisMismatch));
    }
    let stack = |cs: &[Curve]| DMatrix::from_fn(cs.len(), basis.n_basis(), |r, c| cs[r].coeffs()[c]);
    gof(basis, &stack(observed), &stack(predicted), grid)
}

/// `(1/N) Σ_i ∫ r_i(t)² dt` via the Gram matrix, for residual coefficient rows.
pub fn mean_integrated_sq(basis_gram: &GramMatrix, resid: &DMatrix<f64>) -> f64 {
    if resid.nrows() == 0 {
        return 0.0;
    }
    (resid * basis_gram.matrix()).component_mul(resid).sum() / resid.nrows() as f64
}

/// Integrated variance of covariate `k`'s coefficient surfaces across fitted vertices.
///
/// `v_k = (1/N) Σ_i trace(J_Φk D_i J_Ψ D_iᵀ)` with `D_i = 𝐁_{i,k} − 𝐁̄_k`.
pub fn coef_variance_vk(fit: &NwfrFit, k: usize) -> Result<f64, ModelError> {
    fit.covariate_offset(k)?;
    let vertices = fit.fitted_vertices();
    if vertices.len() < 2 {
        return Err(ModelError::InvalidArgument("v_k needs at least two fitted vertices".into()));
    }
    let blocks: Vec<DMatrix<f64>> = vertices.iter().map(|&i| fit.covariate_block(i, k)).collect::<Result<_, _>>()?;
    let base = &blocks[0];
    let mut shift = DMatrix::zeros(base.nrows(), base.ncols());
    for b in &blocks {
        shift += b - base;
    }
    let mean = base + shift / blocks.len() as f64;
    let jphi = fit.covariate_bases[k].gram();
    let jpsi = fit.response_basis.gram();
    let total: f64 = blocks
        .iter()
        .map(|b| {
            let dlt = b - &mean;
            (jphi.matrix() * &dlt * jpsi.matrix() * dlt.transpose()).trace()
        })
        .sum();
    Ok(total / blocks.len() as f64)
}

/// Leave-one-out bandwidth selection settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CvOptions {
    /// Evaluate LOO error on at most this many vertices (drawn with `seed`).
    pub max_holdout: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub theta: f64,
    /// `(θ, LOO RIMSE)`; failed candidates carry `None`.
    pub scores: Vec<(f64, Option<f64>)>,
}

/// Leave-one-out predicted RIMSE of each candidate; the minimum wins, ties
/// going to the larger bandwidth.
pub fn select_bandwidth(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    theta_grid: &[f64],
    ridge: Ridge,
    opts: CvOptions,
) -> Result<BandwidthSelection, ModelError> {
    if theta_grid.is_empty() {
        return Err(ModelError::InvalidArgument("bandwidth grid is empty".into()));
    }
    for &t in theta_grid {
        check_theta(t)?;
    }
    let n = d.n_vertices();
    if n < 2 {
        return Err(ModelError::InvalidArgument("leave-one-out needs at least two vertices".into()));
    }
    let mut holdout = all_vertices(n);
    if let Some(h) = opts.max_holdout.filter(|&h| h < n) {
        holdout.shuffle(&mut rng_for(opts.seed, &[]));
        holdout.truncate(h.max(1));
        holdout.sort_unstable();
    }
    let gram = d.response_basis.gram();

    // per held-out vertex: training context, own covariates, distances
    struct Fold {
        train: FunctionalDataset,
        covs: Vec<DVector<f64>>,
        dist: Vec<f64>,
        truth: DVector<f64>,
    }
    let folds: Vec<Fold> = holdout
        .iter()
        .map(|&i| {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            Ok(Fold {
                train: d.select_rows(&rest)?,
                covs: d.covariate_row(i)?,
                dist: provider.distances_to(i, &rest)?,
                truth: d.response_coeffs.row(i).transpose(),
            })
        })
        .collect::<Result<_, ModelError>>()?;

    let mut order: Vec<usize> = (0..theta_grid.len()).collect();
    order.sort_by(|&a, &b| theta_grid[a].total_cmp(&theta_grid[b]));

    let scores: Vec<Option<f64>> = theta_grid
        .par_iter()
        .map(|&theta| {
            let mut total = 0.0;
            for f in &folds {
                let ctx = TrainingContext::new(&f.train);
                let pred = ctx.predict(theta, ridge, &f.covs, &f.dist).ok()?;
                let r = &f.truth - pred;
                total += gram.inner(&r, &r);
            }
            let s = (total.max(0.0) / folds.len() as f64).sqrt();
            s.is_finite().then_some(s)
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &idx in &order {
        if let Some(s) = scores[idx] {
            if best.is_none_or(|(_, b)| s <= b) {
                best = Some((theta_grid[idx], s));
            }
        }
    }
    let (theta, _) = best.ok_or(ModelError::AllFitsFailed)?;
    Ok(BandwidthSelection { theta, scores: theta_grid.iter().copied().zip(scores).collect() })
}

/// Outcome of the refit permutation test on `v_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub v_obs: f64,
    /// `v_k` of each successful replicate, in replicate order.
    pub null: Vec<f64>,
    pub p_value: f64,
    pub n_perm: usize,
    /// `(replicate, error)` for replicates whose refit failed.
    pub failures: Vec<(usize, String)>,
}

/// Monte-Carlo permutation test of coefficient stability across vertices.
///
/// Each replicate reassigns data rows to vertices with a random permutation,
/// refits every vertex at the fixed bandwidth and recomputes `v_k`.
pub fn permutation_test(
    d: &FunctionalDataset,
    provider: &DistanceProvider,
    theta: f64,
    ridge: Ridge,
    k: usize,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult, ModelError> {
    if n_perm == 0 {
        return Err(ModelError::InvalidArgument("n_perm must be at least 1".into()));
    }
    let n = d.n_vertices();
    let vertices = all_vertices(n);
    let observed = fit_all(d, provider, theta, ridge, &vertices)?;
    let v_obs = coef_variance_vk(&observed, k)?;

    let reps: Vec<Result<f64, ModelError>> = (0..n_perm)
        .into_par_iter()
        .map(|rep| {
            let mut perm = vertices.clone();
            perm.shuffle(&mut rng_for(seed, &[rep as u64]));
            let shuffled = d.select_rows(&perm)?;
            let fit = fit_all(&shuffled, provider, theta, ridge, &vertices)?;
            coef_variance_vk(&fit, k)
        })
        .collect();

    let mut null = Vec::with_capacity(n_perm);
    let mut failures = Vec::new();
    for (rep, r) in reps.into_iter().enumerate() {
        match r {
            Ok(v) => null.push(v),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    let exceed = null.iter().filter(|&&v| v >= v_obs).count();
    let p_value = (1 + exceed) as f64 / (1 + null.len()) as f64;
    Ok(PermutationResult { v_obs, null, p_value, n_perm, failures })
}

/// `∫ r(t)² dt` for residual values on a grid (trapezoid rule).
pub fn integrated_sq_on_grid(grid: &[f64], resid: &[f64]) -> f64 {
    let sq: Vec<f64> = resid.iter().map(|r| r * r).collect();
    trapezoid(grid, &sq)
}
