//! Simulation library for the Poisson Boolean model of continuum
//! percolation on Euclidean space, the hyperbolic plane, and the product
//! of the hyperbolic plane with a line.
//!
//! The model: grain centers form a Poisson point process of intensity
//! `lambda`; each center carries a closed metric ball of fixed radius; the
//! occupied region is the union of the balls. The library samples the
//! process under a monotone coupling (uniform marks, so one sample gives
//! every intensity below a ceiling at once), explores connectivity of the
//! resulting ball clusters, and estimates percolation and uniqueness
//! thresholds with reproducible Monte Carlo sweeps.
//!
//! Module map:
//! * [`geometry`]: spaces, points, windows, exact metric queries;
//! * [`pointprocess`]: coupled sampling, restriction, dumps;
//! * [`clusters`]: intersection graphs, labeling, growth, chemical
//!   distance, boundary connections;
//! * [`estimators`]: crossing / connection probability sweeps and
//!   threshold estimates with Wilson intervals;
//! * [`config`] and [`runner`]: the file-driven experiment front end
//!   used by the `percolate` binary.
//!
//! Everything is deterministic given a seed: per-task streams are derived
//! with a documented splitmix64 chain and all parallel reductions are
//! order-independent counts.

pub mod clusters;
pub mod config;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod pointprocess;
pub mod runner;
pub mod tolerances;
mod union_find;

pub use error::{Error, Result};
