//! Clamped B-spline bases on a closed interval.
//!
//! A [`BasisSystem`] with `K` functions of order `m` (degree `m - 1`) uses
//! `K - m` uniform interior knots and full multiplicity at both endpoints, so
//! the basis is a partition of unity and the constant function 1 has the
//! all-ones coefficient vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BasisError {
    #[error("invalid basis dimension: {0}")]
    InvalidDimension(String),
    #[error("point {t} lies outside the basis domain [{a}, {b}]")]
    OutOfDomain { t: f64, a: f64, b: f64 },
    #[error("smoothing system is rank deficient ({samples} samples for {n_basis} basis functions)")]
    RankDeficient { samples: usize, n_basis: usize },
    #[error("curves are expanded on different bases")]
    BasisMismatch,
    #[error("coefficient vector has length {found}, basis has {expected} functions")]
    CoefficientLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub domain: [f64; 2],
    pub n_basis: usize,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisDescriptor", into = "BasisDescriptor")]
pub struct BasisSystem {
    a: f64,
    b: f64,
    n_basis: usize,
    order: usize,
    knots: Vec<f64>,
}

impl TryFrom<BasisDescriptor> for BasisSystem {
    type Error = BasisError;

    fn try_from(d: BasisDescriptor) -> Result<Self, Self::Error> {
        BasisSystem::new((d.domain[0], d.domain[1]), d.n_basis, d.order)
    }
}

impl From<BasisSystem> for BasisDescriptor {
    fn from(b: BasisSystem) -> Self {
        b.descriptor()
    }
}

impl BasisSystem {
    pub fn new(domain: (f64, f64), n_basis: usize, order: usize) -> Result<Self, BasisError> {
        let (a, b) = domain;
        if order < 1 || n_basis < order {
            return Err(BasisError::InvalidDimension(format!(
                "need n_basis >= order >= 1, got n_basis={n_basis}, order={order}"
            )));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(BasisError::InvalidDimension(format!("domain [{a}, {b}] is not a proper interval")));
        }
        let interior = n_basis - order;
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(a, order));
        let h = (b - a) / (interior + 1) as f64;
        knots.extend((1..=interior).map(|i| a + h * i as f64));
        knots.extend(std::iter::repeat_n(b, order));
        Ok(Self { a, b, n_basis, order, knots })
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor { domain: [self.a, self.b], n_basis: self.n_basis, order: self.order }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn domain_length(&self) -> f64 {
        self.b - self.a
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Coefficients of the constant function 1.
    pub fn constant_coeffs(&self) -> DVector<f64> {
        DVector::from_element(self.n_basis, 1.0)
    }

    fn clamp_to_domain(&self, t: f64) -> Result<f64, BasisError> {
        let tol = 1e-10 * (self.b - self.a);
        if t.is_nan() || t < self.a - tol || t > self.b + tol {
            return Err(BasisError::OutOfDomain { t, a: self.a, b: self.b });
        }
        Ok(t.clamp(self.a, self.b))
    }

    /// Knot span `mu` with `knots[mu] <= t < knots[mu + 1]`, closed at `b`.
    fn span(&self, t: f64) -> usize {
        let lo = self.order - 1;
        let hi = self.n_basis - 1;
        if t >= self.knots[hi + 1] {
            return hi;
        }
        // upper_bound over the active knot range
        let idx = self.knots[lo..=hi + 1].partition_point(|&k| k <= t) + lo;
        idx.saturating_sub(1).clamp(lo, hi)
    }

    /// Values of the `order` nonzero basis functions at `t` (Cox-de Boor),
    /// together with the index of the first one.
    fn nonzero(&self, t: f64) -> (usize, Vec<f64>) {
        let p = self.order - 1;
        let mu = self.span(t);
        let mut n = vec![0.0; self.order];
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knots[mu + 1 - j];
            right[j] = self.knots[mu + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (mu - p, n)
    }

    /// Row of all `K` basis values at `t`.
    pub fn eval_point(&self, t: f64) -> Result<Vec<f64>, BasisError> {
        let t = self.clamp_to_domain(t)?;
        let (first, vals) = self.nonzero(t);
        let mut row = vec![0.0; self.n_basis];
        row[first..first + self.order].copy_from_slice(&vals);
        Ok(row)
    }

    /// `|grid| x K` matrix of basis values.
    pub fn eval_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        let mut m = DMatrix::zeros(grid.len(), self.n_basis);
        for (r, &t) in grid.iter().enumerate() {
            let t = self.clamp_to_domain(t)?;
            let (first, vals) = self.nonzero(t);
            for (k, v) in vals.into_iter().enumerate() {
                m[(r, first + k)] = v;
            }
        }
        Ok(m)
    }

    /// Exact Gram matrix: Gauss-Legendre with `order` nodes per knot span.
    pub fn gram(&self) -> GramMatrix {
        let (nodes, weights) = gauss_legendre(self.order);
        let mut g = DMatrix::zeros(self.n_basis, self.n_basis);
        for mu in (self.order - 1)..self.n_basis {
            let (lo, hi) = (self.knots[mu], self.knots[mu + 1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let (first, vals) = self.nonzero(t);
                for r in 0..self.order {
                    for s in 0..self.order {
                        g[(first + r, first + s)] += w * half * vals[r] * vals[s];
                    }
                }
            }
        }
        // exact symmetry
        let g = (&g + g.transpose()) * 0.5;
        GramMatrix(g)
    }
}

/// Symmetric PSD matrix of pairwise L2 inner products of basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn identity(k: usize) -> Self {
        GramMatrix(DMatrix::identity(k, k))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        GramMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `a^T J c`.
    pub fn inner(&self, a: &DVector<f64>, c: &DVector<f64>) -> f64 {
        (a.transpose() * &self.0 * c)[(0, 0)]
    }
}

/// One functional observation as coefficients against a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    basis: BasisSystem,
    coeffs: DVector<f64>,
}

impl Curve {
    pub fn new(basis: BasisSystem, coeffs: DVector<f64>) -> Result<Self, BasisError> {
        if coeffs.len() != basis.n_basis() {
            return Err(BasisError::CoefficientLength { expected: basis.n_basis(), found: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(BasisError::InvalidDimension("non-finite curve coefficient".into()));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zero(basis: BasisSystem) -> Self {
        let k = basis.n_basis();
        Self { basis, coeffs: DVector::zeros(k) }
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Values on `grid`: `eval_matrix(grid) * coeffs`.
    pub fn eval(&self, grid: &[f64]) -> Result<Vec<f64>, BasisError> {
        let m = self.basis.eval_matrix(grid)?;
        Ok((m * &self.coeffs).iter().copied().collect())
    }
}

/// `a^T J c`, checking that both curves share the basis that `J` belongs to.
pub fn l2_inner(a: &Curve, c: &Curve, gram: &GramMatrix) -> Result<f64, BasisError> {
    if a.basis != c.basis || gram.dim() != a.basis.n_basis() {
        return Err(BasisError::BasisMismatch);
    }
    Ok(gram.inner(&a.coeffs, &c.coeffs))
}

/// Second-difference operator on `k` coefficients, `(k - 2) x k`.
fn second_difference(k: usize) -> DMatrix<f64> {
    let rows = k.saturating_sub(2);
    let mut d = DMatrix::zeros(rows, k);
    for r in 0..rows {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d
}

struct PenalizedSystem {
    lhs: DMatrix<f64>,
    design: DMatrix<f64>,
    values: DVector<f64>,
}

fn penalized_system(
    samples: &[(f64, f64)],
    basis: &BasisSystem,
    penalty: f64,
) -> Result<PenalizedSystem, BasisError> {
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(BasisError::InvalidDimension(format!("penalty must be finite and >= 0, got {penalty}")));
    }
    let grid: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let design = basis.eval_matrix(&grid)?;
    let values = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let d = second_difference(basis.n_basis());
    let lhs = design.transpose() * &design + d.transpose() * d * penalty;
    Ok(PenalizedSystem { lhs, design, values })
}

/// Penalized least-squares fit of `(t, value)` samples onto `basis`.
///
/// Minimizes `|y - B c|^2 + penalty * |D2 c|^2` with `D2` the
/// second-difference operator on neighbouring coefficients.
pub fn smooth_curve(samples: &[(f64, f64)], basis: &BasisSystem, penalty: f64) -> Result<Curve, BasisError> {
    let k = basis.n_basis();
    let rank_err = BasisError::RankDeficient { samples: samples.len(), n_basis: k };
    if samples.is_empty() {
        return Err(rank_err);
    }
    let sys = penalized_system(samples, basis, penalty)?;
    let d = second_difference(k);
    let mut stacked = DMatrix::zeros(samples.len() + d.nrows(), k);
    stacked.rows_mut(0, samples.len()).copy_from(&sys.design);
    stacked.rows_mut(samples.len(), d.nrows()).copy_from(&(d * penalty.sqrt()));
    let mut rhs = DVector::zeros(stacked.nrows());
    rhs.rows_mut(0, samples.len()).copy_from(&sys.values);

    let svd = stacked.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if svd.singular_values.len() < k || smax == 0.0 || smin <= 1e-10 * smax {
        return Err(rank_err);
    }
    let coeffs = svd.solve(&rhs, 0.0).map_err(|_| rank_err)?;
    Curve::new(basis.clone(), coeffs)
}

/// Generalized cross-validation score `n * RSS / (n - tr H)^2` of a smoothing fit.
pub fn gcv_score(samples: &[(f64, f64)], basis: &BasisSystem, penalty: f64) -> Result<f64, BasisError> {
    let curve = smooth_curve(samples, basis, penalty)?;
    let sys = penalized_system(samples, basis, penalty)?;
    let n = samples.len() as f64;
    let resid = &sys.values - &sys.design * curve.coeffs();
    let rss = resid.norm_squared();
    let btb = sys.design.transpose() * &sys.design;
    let chol = sys
        .lhs
        .cholesky()
        .ok_or(BasisError::RankDeficient { samples: samples.len(), n_basis: basis.n_basis() })?;
    let edf = chol.solve(&btb).trace();
    let denom = n - edf;
    if denom <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(n * rss / (denom * denom))
}

/// Picks the basis size with the smallest GCV score among `candidates`.
///
/// Candidates whose fit is rank deficient are skipped; ties go to the
/// smaller basis.
pub fn select_n_basis(
    samples: &[(f64, f64)],
    domain: (f64, f64),
    order: usize,
    candidates: &[usize],
    penalty: f64,
) -> Result<(usize, f64), BasisError> {
    let mut best: Option<(usize, f64)> = None;
    for &k in candidates {
        let basis = BasisSystem::new(domain, k, order)?;
        let Ok(score) = gcv_score(samples, &basis, penalty) else { continue };
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((k, score));
        }
    }
    best.ok_or(BasisError::RankDeficient { samples: samples.len(), n_basis: candidates.iter().copied().min().unwrap_or(0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::uniform_grid;

    #[test]
    fn constructor_validates() {
        assert!(BasisSystem::new((0.0, 1.0), 1, 1).is_ok());
        assert!(matches!(BasisSystem::new((0.0, 1.0), 2, 4), Err(BasisError::InvalidDimension(_))));
        assert!(matches!(BasisSystem::new((0.0, 1.0), 3, 0), Err(BasisError::InvalidDimension(_))));
        assert!(matches!(BasisSystem::new((1.0, 1.0), 3, 2), Err(BasisError::InvalidDimension(_))));
        let b = BasisSystem::new((0.0, 1.0), 21, 4).unwrap();
        assert_eq!(b.knots().len(), 25);
        // 17 interior knots -> 18 spans
        let spans = b.knots().windows(2).filter(|w| w[1] > w[0]).count();
        assert_eq!(spans, 18);
    }

    #[test]
    fn constant_basis() {
        let b = BasisSystem::new((0.0, 1.0), 1, 1).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(b.eval_point(t).unwrap(), vec![1.0]);
        }
        assert_eq!(b.gram().matrix()[(0, 0)], 1.0);
        let b2 = BasisSystem::new((0.0, 2.0), 1, 1).unwrap();
        assert_eq!(b2.gram().matrix()[(0, 0)], 2.0);
    }

    #[test]
    fn hat_functions_at_knots() {
        // order 2, K = 4 on [0, 3]: hats peaking at 0, 1, 2, 3.
        let b = BasisSystem::new((0.0, 3.0), 4, 2).unwrap();
        for (i, t) in [0.0, 1.0, 2.0, 3.0].into_iter().enumerate() {
            let row = b.eval_point(t).unwrap();
            for (k, v) in row.iter().enumerate() {
                assert_eq!(*v, if k == i { 1.0 } else { 0.0 }, "t={t} k={k}");
            }
        }
        let row = b.eval_point(1.25).unwrap();
        assert!((row[1] - 0.75).abs() < 1e-15 && (row[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain() {
        let b = BasisSystem::new((0.0, 1.0), 5, 3).unwrap();
        assert!(matches!(b.eval_point(1.5), Err(BasisError::OutOfDomain { .. })));
        assert!(matches!(b.eval_matrix(&[-0.1]), Err(BasisError::OutOfDomain { .. })));
    }

    #[test]
    fn smoothing_recovers_basis_function() {
        let b = BasisSystem::new((0.0, 1.0), 7, 4).unwrap();
        let grid = uniform_grid(0.0, 1.0, 40);
        let samples: Vec<(f64, f64)> = grid.iter().map(|&t| (t, b.eval_point(t).unwrap()[3])).collect();
        let c = smooth_curve(&samples, &b, 0.0).unwrap();
        for (k, v) in c.coeffs().iter().enumerate() {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10);
        }
        let zeros: Vec<(f64, f64)> = grid.iter().map(|&t| (t, 0.0)).collect();
        assert!(smooth_curve(&zeros, &b, 0.0).unwrap().coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn smoothing_rank_deficiency() {
        let b = BasisSystem::new((0.0, 1.0), 7, 4).unwrap();
        let few = [(0.1, 1.0), (0.5, 2.0), (0.9, 0.0)];
        assert!(matches!(smooth_curve(&few, &b, 0.0), Err(BasisError::RankDeficient { .. })));
        let dup: Vec<(f64, f64)> = (0..20).map(|_| (0.5, 1.0)).collect();
        assert!(matches!(smooth_curve(&dup, &b, 0.0), Err(BasisError::RankDeficient { .. })));
        // the penalty alone cannot pin down the linear part from one location
        assert!(matches!(smooth_curve(&dup, &b, 1.0), Err(BasisError::RankDeficient { .. })));
    }

    #[test]
    fn l2_inner_checks_bases() {
        let b = BasisSystem::new((0.0, 1.0), 1, 1).unwrap();
        let one = Curve::new(b.clone(), DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(l2_inner(&one, &one, &b.gram()).unwrap(), 1.0);
        let other = Curve::zero(BasisSystem::new((0.0, 1.0), 3, 2).unwrap());
        assert_eq!(l2_inner(&one, &other, &b.gram()), Err(BasisError::BasisMismatch));
        let k3 = BasisSystem::new((0.0, 1.0), 3, 2).unwrap();
        let a = Curve::new(k3.clone(), DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let c = Curve::new(k3, DVector::from_vec(vec![0.5, -1.0, 2.0])).unwrap();
        assert_eq!(l2_inner(&a, &c, &GramMatrix::identity(3)).unwrap(), 0.5 - 2.0 + 6.0);
    }

    #[test]
    fn curve_eval_trivial() {
        let b = BasisSystem::new((0.0, 1.0), 6, 3).unwrap();
        assert!(Curve::zero(b).eval(&[0.0, 0.5, 1.0]).unwrap().iter().all(|&v| v == 0.0));
        let c = BasisSystem::new((0.0, 1.0), 1, 1).unwrap();
        let curve = Curve::new(c, DVector::from_element(1, 2.5)).unwrap();
        assert_eq!(curve.eval(&[0.0, 0.7]).unwrap(), vec![2.5, 2.5]);
        assert!(Curve::new(BasisSystem::new((0.0, 1.0), 3, 2).unwrap(), DVector::zeros(2)).is_err());
    }

    #[test]
    fn descriptor_serde_round_trip() {
        let b = BasisSystem::new((0.0, 2.0), 9, 4).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"domain":[0.0,2.0],"n_basis":9,"order":4}"#);
        let back: BasisSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<BasisSystem>(r#"{"domain":[0.0,1.0],"n_basis":2,"order":4}"#).is_err());
    }

    #[test]
    fn gcv_prefers_adequate_basis() {
        // cubic signal: any cubic basis reproduces it, GCV should not pick the largest
        let grid = uniform_grid(0.0, 1.0, 60);
        let samples: Vec<(f64, f64)> = grid.iter().map(|&t| (t, t * t * t - t)).collect();
        let (k, score) = select_n_basis(&samples, (0.0, 1.0), 4, &[4, 8, 16], 0.0).unwrap();
        assert_eq!(k, 4);
        assert!(score < 1e-20);
    }
}
