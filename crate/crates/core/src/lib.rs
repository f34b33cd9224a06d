//! Downwind externality toolkit.
//!
//! This crate implements the quantitative machinery for tracing how a local
//! activity shock in one place (for example trade-driven deforestation in a
//! sender region) propagates through the atmosphere to downwind receiver
//! regions, and for putting a number on the damage that arrives there.
//!
//! The pipeline has four stages, each its own module:
//!
//! * [`ingest`] — typed loaders and writers for the canonical CSV inputs
//!   (city registry, wind samples, regression panels, trade flows) plus a
//!   seeded synthetic-data generator used by the demos and the test suite.
//! * [`windfield`] — rasterizes scattered per-city wind samples onto a
//!   regular lon/lat grid by barycentric interpolation over a Delaunay
//!   triangulation, with nearest-sample fallback outside the convex hull.
//! * [`aoe`] — the area-of-effect engine: advects a streamline from each
//!   sender city across daily wind grids, scores every receiver inside a
//!   growing search radius with an exponential decay in radius, off-axis
//!   offset, and distance, and aggregates raw scores to daily and monthly
//!   sender × receiver matrices with decile bin assignment.
//! * [`shiftshare`] — shift-share instrument construction from trade shares
//!   and world import growth, placebo randomization, balancing tests, and
//!   Benjamini–Hochberg false-discovery-rate adjustment.
//! * [`econometrics`] — weighted high-dimensional fixed-effects regression
//!   by alternating projections, OLS and two-stage least squares with one-
//!   and two-way cluster-robust covariance, and the exposure × wind-bin
//!   interaction fit used for downwind damage estimation.
//! * [`accounting`] — converts estimated coefficients into physical and
//!   monetary damages: standardized forest-loss units, trade-induced
//!   hectares, excess deaths, value-of-statistical-life monetization, and a
//!   conservation-checked sender/receiver damage ledger.
//!
//! Everything is deterministic: random draws go through seeded ChaCha
//! streams, parallel reductions are order-stabilized before aggregation, and
//! numeric output is written with a fixed significant-digit format, so a run
//! configuration reproduces its outputs byte for byte.

pub mod accounting;
pub mod aoe;
pub mod dates;
pub mod econometrics;
pub mod geo;
pub mod ingest;
pub mod numeric;
pub mod shiftshare;
pub mod windfield;

/// Library version, embedded in every report manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
