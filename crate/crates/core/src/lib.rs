//! Network-weighted functional regression (NWFR).
//!
//! Per-vertex weighted functional regression on graph-indexed functional data,
//! with split-conformal functional prediction bands, a permutation test for
//! coefficient stability, a weighted stochastic-block-model benchmark
//! generator and an ingestion pipeline for Intel-lab style sensor logs.
//!
//! Module map:
//!
//! * [`graph`]: weighted undirected networks, geodesics, Louvain, weighted SBM.
//! * [`basis`]: clamped B-spline bases, Gram matrices, curves and smoothing.
//! * [`model`]: kernel weights, the per-vertex estimator, GOF, bandwidth CV and
//!   the permutation test.
//! * [`conformal`]: stratified splits, modulation, scores, bands and metrics.
//! * [`simgen`]: the twelve benchmark scenarios and the study harness.
//! * [`ingest`]: sensor log parsing, windowing, KNN imputation, dataset build.
//! * [`formats`]: versioned JSON/CSV artifacts shared with the CLI.

pub mod basis;
pub mod conformal;
pub mod formats;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod quadrature;
pub mod seed;
pub mod simgen;

pub use basis::{BasisError, BasisSystem, Curve, GramMatrix};
pub use conformal::{ConformalError, CpReport, ModulationFn, PredictionBand, ScoreKind, SplitPlan};
pub use graph::{DistanceMatrix, GraphError, Network, Partition, SbmSpec, WeightRule};
pub use model::{DistanceProvider, FunctionalDataset, GofReport, ModelError, NwfrFit, Ridge};
