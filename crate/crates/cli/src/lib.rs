//! Command-line harness around the `bft-minmax` library.
//!
//! Scenarios are declarative TOML files naming honest cost functions and the
//! adversary constructions to plant next to them. The [`pipeline`] module
//! expands a scenario into an ensemble, runs the requested solver stages, and
//! verifies the results, writing a JSON report plus CSV diagnostics.

pub mod generate;
pub mod pipeline;
pub mod report;
pub mod scenario;
