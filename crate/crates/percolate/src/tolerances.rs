//! Numeric tolerances and resource limits used across the crate.
//!
//! Every comparison against an absolute or relative tolerance anywhere in
//! the library must go through one of these constants, so that the numeric
//! policy can be read (and changed) in one place.

/// Absolute tolerance for model-level geometric identities: hyperboloid
/// sheet membership, distance-to-self, and point-in-window checks.
///
/// For hyperboloid coordinates the residual `x^2 + y^2 - t^2 + 1` is
/// checked relative to the squared coordinate magnitude: in `f64` the
/// absolute residual necessarily grows like `eps * cosh^2(r)`, which
/// crosses 1e-9 near radius 8 no matter how points are normalized.
pub const MODEL_TOL: f64 = 1e-9;

/// Relative tolerance for symmetry of the metric, `|d(p,q) - d(q,p)|`.
/// The distance kernels evaluate symmetrically term by term, so this is
/// expected to hold exactly; the tolerance guards against refactoring.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Additive slack applied to vantage-point-tree pruning bounds.
///
/// Pruning with slack only ever visits more nodes, never fewer, so query
/// results stay exactly equal to a linear scan even if floating-point
/// rounding nudges a boundary comparison.
pub const VP_PRUNE_SLACK: f64 = 1e-9;

/// Hard cap on the expected number of points of a sampled configuration.
/// `lambda_max * window_volume` above this is rejected before sampling.
pub const MAX_EXPECTED_POINTS: f64 = 1e8;

/// Upper 97.5% quantile of the standard normal, used by the Wilson score
/// interval for 95% coverage.
pub const WILSON_Z95: f64 = 1.959963984540054;
