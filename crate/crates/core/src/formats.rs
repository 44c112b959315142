//! Versioned JSON artifacts and CSV exports.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisDescriptor, BasisSystem};
use crate::conformal::PredictionBand;
use crate::model::{Covariate, FunctionalDataset, ModelError, NwfrFit, Ridge, VertexBlock};

pub const FORMAT_VERSION: &str = "1.0";

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FormatError {
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported format_version '{0}' (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion(String),
    #[error("invalid artifact: {0}")]
    Invalid(String),
}

impl From<ModelError> for FormatError {
    fn from(e: ModelError) -> Self {
        FormatError::Invalid(e.to_string())
    }
}

/// Accepts any `1.x` version string.
pub fn check_version(v: &str) -> Result<(), FormatError> {
    let major = v.split('.').next().unwrap_or("");
    if major == FORMAT_VERSION.split('.').next().unwrap_or("") {
        Ok(())
    } else {
        Err(FormatError::UnsupportedVersion(v.to_string()))
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<String>,
}

/// Parses a JSON artifact after checking its `format_version`.
pub fn from_json_str<T: DeserializeOwned>(s: &str) -> Result<T, FormatError> {
    let probe: VersionProbe = serde_json::from_str(s).map_err(|e| FormatError::Json(e.to_string()))?;
    match probe.format_version {
        Some(v) => check_version(&v)?,
        None => return Err(FormatError::Invalid("missing format_version".into())),
    }
    serde_json::from_str(s).map_err(|e| FormatError::Json(e.to_string()))
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, FormatError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn io_err(path: &Path, e: std::io::Error) -> FormatError {
    FormatError::Io { path: path.display().to_string(), reason: e.to_string() }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let s = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if s.trim().is_empty() {
        return Err(FormatError::Invalid(format!("{} is empty", path.display())));
    }
    from_json_str(&s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_text(path, &to_json_string(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>, FormatError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(FormatError::Invalid(format!("{what}: every row needs {ncols} coefficients")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFile {
    pub name: String,
    pub basis: BasisDescriptor,
    pub coeffs: Vec<Vec<f64>>,
}

/// Functional dataset with optional vertex ids and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format_version: String,
    pub response_name: String,
    pub response_basis: BasisDescriptor,
    pub response: Vec<Vec<f64>>,
    pub covariates: Vec<CovariateFile>,
    pub include_intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_ids: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<Vec<f64>>>,
}

impl DatasetFile {
    pub fn from_dataset(d: &FunctionalDataset, response_name: &str, covariate_names: &[&str]) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            response_name: response_name.into(),
            response_basis: d.response_basis().descriptor(),
            response: matrix_rows(d.response_coeffs()),
            covariates: d
                .covariates()
                .iter()
                .enumerate()
                .map(|(p, c)| CovariateFile {
                    name: covariate_names.get(p).map_or_else(|| format!("x{p}"), |s| s.to_string()),
                    basis: c.basis.descriptor(),
                    coeffs: matrix_rows(&c.coeffs),
                })
                .collect(),
            include_intercept: d.include_intercept(),
            vertex_ids: None,
            coordinates: None,
        }
    }

    pub fn to_dataset(&self) -> Result<FunctionalDataset, FormatError> {
        let basis = |b: BasisDescriptor| BasisSystem::try_from(b).map_err(|e| FormatError::Invalid(e.to_string()));
        let rb = basis(self.response_basis)?;
        let y = rows_matrix(&self.response, rb.n_basis(), "response")?;
        let covs = self
            .covariates
            .iter()
            .map(|c| {
                let b = basis(c.basis)?;
                let coeffs = rows_matrix(&c.coeffs, b.n_basis(), &c.name)?;
                Ok(Covariate { basis: b, coeffs })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(FunctionalDataset::new(rb, y, covs, self.include_intercept)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFile {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
    pub lambda: f64,
    /// `None` for an infinite condition number.
    pub condition: Option<f64>,
}

/// Fitted model: bandwidth, ridge, provider and per-vertex blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: String,
    pub provider: String,
    pub theta: f64,
    pub ridge: Ridge,
    pub response_basis: BasisDescriptor,
    pub covariate_bases: Vec<BasisDescriptor>,
    pub include_intercept: bool,
    pub blocks: Vec<Option<BlockFile>>,
}

impl ModelFile {
    pub fn from_fit(fit: &NwfrFit) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            provider: fit.provider_id().into(),
            theta: fit.theta(),
            ridge: fit.ridge(),
            response_basis: fit.response_basis().descriptor(),
            covariate_bases: fit.covariate_bases().iter().map(BasisSystem::descriptor).collect(),
            include_intercept: fit.include_intercept(),
            blocks: fit
                .blocks()
                .iter()
                .map(|b| {
                    b.as_ref().map(|b| BlockFile {
                        rows: b.block.nrows(),
                        cols: b.block.ncols(),
                        data: b.block.transpose().iter().copied().collect(),
                        lambda: b.lambda,
                        condition: b.condition.is_finite().then_some(b.condition),
                    })
                })
                .collect(),
        }
    }

    /// Rebuilds the fit against the dataset it was estimated on.
    pub fn to_fit(&self, d: &FunctionalDataset) -> Result<NwfrFit, FormatError> {
        if self.response_basis != d.response_basis().descriptor()
            || self.include_intercept != d.include_intercept()
            || self.covariate_bases.len() != d.n_covariates()
            || self.covariate_bases.iter().zip(d.covariates()).any(|(a, c)| *a != c.basis.descriptor())
        {
            return Err(FormatError::Invalid("model bases do not match the dataset".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                b.as_ref()
                    .map(|b| {
                        if b.data.len() != b.rows * b.cols {
                            return Err(FormatError::Invalid("block data length does not match its shape".into()));
                        }
                        Ok(VertexBlock {
                            block: DMatrix::from_row_slice(b.rows, b.cols, &b.data),
                            lambda: b.lambda,
                            condition: b.condition.unwrap_or(f64::INFINITY),
                        })
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NwfrFit::from_parts(d, self.theta, self.ridge, &self.provider, blocks)?)
    }
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, outputs: Vec<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            tool: "nwfr".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            outputs,
        }
    }
}

/// `vertex,t,lower,center,upper` rows on each band's grid; `labels` maps vertex
/// indices to external ids.
pub fn write_bands_csv<W: Write>(bands: &[PredictionBand], labels: Option<&[u64]>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "vertex,t,lower,center,upper")?;
    for b in bands {
        let id = match labels {
            None => b.vertex as u64,
            Some(l) => *l.get(b.vertex).ok_or_else(|| {
                std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("no label for vertex {}", b.vertex))
            })?,
        };
        let (lo, up) = (b.lower(), b.upper());
        for (g, t) in b.grid().iter().enumerate() {
            writeln!(out, "{id},{t},{},{},{}", lo[g], b.center[g], up[g])?;
        }
    }
    Ok(())
}

/// `t,s,value` rows of a surface with `t` along rows and `s` along columns.
pub fn write_surface_csv<W: Write>(surface: &DMatrix<f64>, t_grid: &[f64], s_grid: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,s,value")?;
    for (r, t) in t_grid.iter().enumerate() {
        for (c, s) in s_grid.iter().enumerate() {
            writeln!(out, "{t},{s},{}", surface[(r, c)])?;
        }
    }
    Ok(())
}

/// `vertex,t,value` rows of curves evaluated on a grid.
pub fn write_curves_csv<W: Write>(rows: &[(u64, Vec<f64>)], grid: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "vertex,t,value")?;
    for (id, vals) in rows {
        for (t, v) in grid.iter().zip(vals) {
            writeln!(out, "{id},{t},{v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_gate() {
        assert!(check_version("1.0").is_ok());
        assert!(check_version("1.3").is_ok());
        assert_eq!(check_version("2.0"), Err(FormatError::UnsupportedVersion("2.0".into())));
        let r: Result<ModelFile, _> = from_json_str(r#"{"format_version":"9.1"}"#);
        assert!(matches!(r, Err(FormatError::UnsupportedVersion(_))));
        let r: Result<ModelFile, _> = from_json_str("{}");
        assert!(matches!(r, Err(FormatError::Invalid(_))));
    }

    #[test]
    fn dataset_round_trip() {
        let b = BasisSystem::new((0.0, 1.0), 4, 3).unwrap();
        let y = DMatrix::from_fn(3, 4, |r, c| 0.1 * (r * 4 + c) as f64 + 1.0 / 3.0);
        let x = DMatrix::from_fn(3, 4, |r, c| (r as f64 - c as f64).exp());
        let d = FunctionalDataset::new(b.clone(), y, vec![Covariate { basis: b, coeffs: x }], true).unwrap();
        let file = DatasetFile::from_dataset(&d, "y", &["x"]);
        let text = to_json_string(&file).unwrap();
        let back: DatasetFile = from_json_str(&text).unwrap();
        assert_eq!(back.to_dataset().unwrap(), d);
    }
}
