//! Vote-distribution asymmetry analytics for district-based elections.
//!
//! The crate is organized around a single value type, [`Election`]: a sorted
//! vector of two-party vote shares for a designated party P, one entry per
//! district. On top of it sit
//!
//! - [`metrics`]: the declination and its seat/size-normalized variants,
//!   the efficiency gap and its `Gap_tau` generalization, and the
//!   mean-median difference;
//! - [`transforms`]: packing and cracking as election-to-election
//!   transforms, plus seeded generators that turn their monotonicity
//!   guarantees into executable property checks;
//! - [`ingest`]: a CSV schema for per-district race results and grouping
//!   into elections keyed by state, chamber, year, and districting cycle;
//! - [`impute`]: a ridge-penalized multilevel regression that estimates
//!   two-party shares for uncontested races, with winner-consistency clamps
//!   and a never-contested fallback;
//! - [`report`]: batch metric tables, extreme-value rankings, per-cycle
//!   sign-persistence summaries, and SVG declination diagrams.
//!
//! All computations are pure functions over immutable values; seeded
//! generators are deterministic. Nothing in the crate touches global state.

pub mod impute;
pub mod ingest;
pub mod metrics;
pub mod report;
#[doc(hidden)]
pub mod testutil;
pub mod transforms;

pub use metrics::{Election, MetricSet, MetricsError, SplitIndices, TauGap};
