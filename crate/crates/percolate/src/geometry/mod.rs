//! Homogeneous spaces the Boolean model runs on.
//!
//! Three geometries are supported:
//!
//! * `Euclidean(n)`: flat space, points are `n` Cartesian coordinates.
//! * `Hyperbolic2`: the hyperbolic plane in hyperboloid coordinates
//!   `(x, y, t)` with `x^2 + y^2 - t^2 = -1`, `t > 0`, and distance
//!   `acosh(-<p, q>)` for the Minkowski product `<.,.>`.
//! * `H2xR`: the product of the hyperbolic plane and a real line, points
//!   `(x, y, t, h)`, with the l2 product metric
//!   `sqrt(d_H2^2 + (h_p - h_q)^2)`.
//!
//! Every space carries the grain radius of the Boolean model
//! (`ball_radius`), so downstream code never hard-codes the scale at which
//! two grains overlap.
//!
//! Numerical conventions: hyperboloid distances are computed from
//! coordinate *differences* (`dx^2 + dy^2 - dt^2 = 2 cosh d - 2`), which
//! avoids the catastrophic cancellation of the raw Minkowski product for
//! nearby points, and `acosh(1 + u)` is evaluated in `log1p` form. Points
//! emitted by constructors, sampling, geodesic interpolation, and
//! isometries are renormalized back onto the hyperboloid sheet.

mod vptree;

pub use vptree::MetricIndex;

use crate::error::{Error, Result};
use crate::tolerances::MODEL_TOL;
use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;
use std::f64::consts::{PI, TAU};

/// Which homogeneous space the model lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Flat n-dimensional space, n >= 2.
    Euclidean(usize),
    /// Hyperbolic plane (curvature -1), hyperboloid coordinates.
    Hyperbolic2,
    /// Product of the hyperbolic plane and the real line.
    H2xR,
}

/// A homogeneous space together with the grain radius of the Boolean model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Space {
    kind: SpaceKind,
    ball_radius: f64,
}

impl Space {
    pub fn new(kind: SpaceKind, ball_radius: f64) -> Result<Self> {
        if let SpaceKind::Euclidean(dim) = kind {
            if dim < 2 {
                return Err(Error::invalid(format!(
                    "euclidean dimension must be at least 2, got {dim}"
                )));
            }
        }
        if !(ball_radius > 0.0) || !ball_radius.is_finite() {
            return Err(Error::invalid(format!(
                "ball_radius must be positive and finite, got {ball_radius}"
            )));
        }
        Ok(Space { kind, ball_radius })
    }

    /// Flat n-space with the default unit grain radius.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Space::new(SpaceKind::Euclidean(dim), 1.0)
    }

    /// Hyperbolic plane with the default unit grain radius.
    pub fn hyperbolic2() -> Self {
        Space {
            kind: SpaceKind::Hyperbolic2,
            ball_radius: 1.0,
        }
    }

    /// Product space with the default unit grain radius.
    pub fn h2xr() -> Self {
        Space {
            kind: SpaceKind::H2xR,
            ball_radius: 1.0,
        }
    }

    pub fn with_ball_radius(self, ball_radius: f64) -> Result<Self> {
        Space::new(self.kind, ball_radius)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    /// Number of stored coordinates per point.
    pub fn coord_len(&self) -> usize {
        match self.kind {
            SpaceKind::Euclidean(dim) => dim,
            SpaceKind::Hyperbolic2 => 3,
            SpaceKind::H2xR => 4,
        }
    }

    /// The basepoint: the all-zeros point, `(0,0,1)`, or `(0,0,1,0)`.
    pub fn origin(&self) -> Point {
        match self.kind {
            SpaceKind::Euclidean(dim) => Point {
                coords: SmallVec::from_elem(0.0, dim),
            },
            SpaceKind::Hyperbolic2 => Point {
                coords: SmallVec::from_slice(&[0.0, 0.0, 1.0]),
            },
            SpaceKind::H2xR => Point {
                coords: SmallVec::from_slice(&[0.0, 0.0, 1.0, 0.0]),
            },
        }
    }

    /// Validate that `p` is a representable point of this space: correct
    /// coordinate count, finite entries, and (where applicable) hyperboloid
    /// sheet membership within `MODEL_TOL` relative to coordinate size.
    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.coords.len() != self.coord_len() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, space expects {}",
                p.coords.len(),
                self.coord_len()
            )));
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point has non-finite coordinates"));
        }
        match self.kind {
            SpaceKind::Euclidean(_) => Ok(()),
            SpaceKind::Hyperbolic2 | SpaceKind::H2xR => {
                let (x, y, t) = (p.coords[0], p.coords[1], p.coords[2]);
                if t <= 0.0 {
                    return Err(Error::invalid("hyperboloid t coordinate must be positive"));
                }
                let residual = (x * x + y * y - t * t + 1.0).abs();
                let scale = 1.0 + x * x + y * y + t * t;
                if residual > MODEL_TOL * scale {
                    return Err(Error::invalid(format!(
                        "point is off the hyperboloid sheet (residual {residual:.3e})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Geodesic distance. Validates both points.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.distance_unchecked(p, q))
    }

    /// Geodesic distance without argument validation (hot path).
    #[inline]
    pub fn distance_unchecked(&self, p: &Point, q: &Point) -> f64 {
        let a = &p.coords;
        let b = &q.coords;
        debug_assert_eq!(a.len(), self.coord_len());
        debug_assert_eq!(b.len(), self.coord_len());
        match self.kind {
            SpaceKind::Euclidean(_) => {
                let mut s = 0.0;
                for (u, v) in a.iter().zip(b.iter()) {
                    let d = u - v;
                    s += d * d;
                }
                s.sqrt()
            }
            SpaceKind::Hyperbolic2 => hyperboloid_distance(a, b),
            SpaceKind::H2xR => {
                let dh = hyperboloid_distance(&a[..3], &b[..3]);
                let dz = a[3] - b[3];
                (dh * dh + dz * dz).sqrt()
            }
        }
    }

    /// Volume (area in 2d) of a metric ball of radius `r`.
    ///
    /// Undefined on the product space: balls there have no closed form and
    /// all product-space budgeting goes through cylinder windows.
    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!(
                "ball radius must be nonnegative and finite, got {r}"
            )));
        }
        match self.kind {
            SpaceKind::Euclidean(dim) => Ok(euclidean_ball_volume(dim, r)),
            SpaceKind::Hyperbolic2 => Ok(hyperbolic_disk_area(r)),
            SpaceKind::H2xR => Err(Error::Unsupported(
                "ball volume has no closed form on the product space; \
                 use a cylinder window and window_volume"
                    .into(),
            )),
        }
    }

    /// The point at distance `d` from the origin along the canonical axis
    /// (first Euclidean axis, or the `theta = 0` hyperbolic geodesic at
    /// height 0). `d` may be negative.
    pub fn axis_point(&self, d: f64) -> Point {
        match self.kind {
            SpaceKind::Euclidean(dim) => {
                let mut coords = SmallVec::from_elem(0.0, dim);
                coords[0] = d;
                Point { coords }
            }
            SpaceKind::Hyperbolic2 => Point {
                coords: SmallVec::from_slice(&[d.sinh(), 0.0, d.cosh()]),
            },
            SpaceKind::H2xR => Point {
                coords: SmallVec::from_slice(&[d.sinh(), 0.0, d.cosh(), 0.0]),
            },
        }
    }

    /// The point a fraction `frac` of the way along the geodesic from `p`
    /// to `q` (0 gives `p`, 1 gives `q`).
    pub fn geodesic_point(&self, p: &Point, q: &Point, frac: f64) -> Result<Point> {
        self.check_point(p)?;
        self.check_point(q)?;
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::invalid(format!(
                "geodesic fraction must lie in [0, 1], got {frac}"
            )));
        }
        let a = &p.coords;
        let b = &q.coords;
        let out = match self.kind {
            SpaceKind::Euclidean(_) => {
                let coords = a
                    .iter()
                    .zip(b.iter())
                    .map(|(u, v)| u + frac * (v - u))
                    .collect();
                Point { coords }
            }
            SpaceKind::Hyperbolic2 => Point {
                coords: SmallVec::from_slice(&hyperboloid_geodesic(
                    [a[0], a[1], a[2]],
                    [b[0], b[1], b[2]],
                    frac,
                )),
            },
            SpaceKind::H2xR => {
                let h2 = hyperboloid_geodesic([a[0], a[1], a[2]], [b[0], b[1], b[2]], frac);
                let h = a[3] + frac * (b[3] - a[3]);
                Point {
                    coords: SmallVec::from_slice(&[h2[0], h2[1], h2[2], h]),
                }
            }
        };
        Ok(out)
    }

    /// Geodesic midpoint of `p` and `q`.
    pub fn midpoint(&self, p: &Point, q: &Point) -> Result<Point> {
        self.geodesic_point(p, q, 0.5)
    }

    /// Apply the canonical translation isometry taking the origin to
    /// `target` (a Lorentz boost on hyperbolic factors, a shift on flat
    /// ones). Distances are preserved exactly up to rounding.
    pub fn translate_from_origin(&self, target: &Point, p: &Point) -> Result<Point> {
        self.check_point(target)?;
        self.check_point(p)?;
        let t = &target.coords;
        let a = &p.coords;
        let out = match self.kind {
            SpaceKind::Euclidean(_) => Point {
                coords: a.iter().zip(t.iter()).map(|(u, v)| u + v).collect(),
            },
            SpaceKind::Hyperbolic2 => Point {
                coords: SmallVec::from_slice(&boost_toward(
                    [t[0], t[1], t[2]],
                    [a[0], a[1], a[2]],
                )),
            },
            SpaceKind::H2xR => {
                let h2 = boost_toward([t[0], t[1], t[2]], [a[0], a[1], a[2]]);
                Point {
                    coords: SmallVec::from_slice(&[h2[0], h2[1], h2[2], a[3] + t[3]]),
                }
            }
        };
        Ok(out)
    }
}

/// A location in one of the supported spaces. Storage is a flat coordinate
/// vector whose meaning depends on the space; see the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: SmallVec<[f64; 4]>,
}

impl Point {
    /// Build a point from raw coordinates, validated against `space`.
    pub fn from_coords(space: &Space, coords: &[f64]) -> Result<Self> {
        let p = Point {
            coords: SmallVec::from_slice(coords),
        };
        space.check_point(&p)?;
        Ok(p)
    }

    /// Euclidean point (no validation needed beyond finiteness at use).
    pub fn euclidean(coords: &[f64]) -> Self {
        Point {
            coords: SmallVec::from_slice(coords),
        }
    }

    /// Hyperbolic-plane point from the two free coordinates; the sheet
    /// coordinate is recomputed as `sqrt(1 + x^2 + y^2)`.
    pub fn hyperbolic(x: f64, y: f64) -> Self {
        Point {
            coords: SmallVec::from_slice(&[x, y, (1.0 + x * x + y * y).sqrt()]),
        }
    }

    /// Product-space point from hyperbolic free coordinates and a height.
    pub fn h2xr(x: f64, y: f64, height: f64) -> Self {
        Point {
            coords: SmallVec::from_slice(&[x, y, (1.0 + x * x + y * y).sqrt(), height]),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Height coordinate of a product-space point.
    pub fn height(&self) -> f64 {
        debug_assert_eq!(self.coords.len(), 4);
        self.coords[3]
    }
}

/// Sampling / observation window.
///
/// `Ball` windows are valid on Euclidean and hyperbolic-plane spaces and
/// usable as *query regions* everywhere; as sampling windows on the product
/// space they are rejected (no closed-form volume, no exact sampler) in
/// favor of `Cylinder`. `Cylinder` is the product of a hyperbolic disk and
/// a symmetric height interval, centered on the origin axis, and is only
/// meaningful on the product space.
#[derive(Clone, Debug, PartialEq)]
pub enum Window {
    Ball { center: Point, radius: f64 },
    Cylinder { h2_radius: f64, height_half: f64 },
}

impl Window {
    pub fn ball(center: Point, radius: f64) -> Self {
        Window::Ball { center, radius }
    }

    pub fn cylinder(h2_radius: f64, height_half: f64) -> Self {
        Window::Cylinder {
            h2_radius,
            height_half,
        }
    }

    /// Shape validity for use as a query region (center on the right space,
    /// positive extents).
    pub fn validate_region(&self, space: &Space) -> Result<()> {
        match self {
            Window::Ball { center, radius } => {
                space.check_point(center)?;
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::invalid(format!(
                        "window radius must be positive and finite, got {radius}"
                    )));
                }
                Ok(())
            }
            Window::Cylinder {
                h2_radius,
                height_half,
            } => {
                if space.kind() != SpaceKind::H2xR {
                    return Err(Error::invalid(
                        "cylinder windows are only defined on the product space",
                    ));
                }
                if !(*h2_radius > 0.0) || !h2_radius.is_finite() {
                    return Err(Error::invalid(format!(
                        "cylinder h2_radius must be positive and finite, got {h2_radius}"
                    )));
                }
                if !(*height_half > 0.0) || !height_half.is_finite() {
                    return Err(Error::invalid(format!(
                        "cylinder height_half must be positive and finite, got {height_half}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Validity as a *sampling* window: additionally rejects metric balls
    /// on the product space, where cylinders are required.
    pub fn validate_sampling(&self, space: &Space) -> Result<()> {
        self.validate_region(space)?;
        if matches!(self, Window::Ball { .. }) && space.kind() == SpaceKind::H2xR {
            return Err(Error::Unsupported(
                "ball sampling windows are not supported on the product space; \
                 use a cylinder window"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Center of the window (cylinders are centered on the axis origin).
    pub fn center(&self, space: &Space) -> Point {
        match self {
            Window::Ball { center, .. } => center.clone(),
            Window::Cylinder { .. } => space.origin(),
        }
    }

    /// Distance from `p` to the window set (0 for points inside).
    ///
    /// For cylinders this uses the product structure: the distance to a
    /// product of sets is the l2 combination of the factor distances.
    pub fn distance_to(&self, space: &Space, p: &Point) -> f64 {
        match self {
            Window::Ball { center, radius } => {
                (space.distance_unchecked(center, p) - radius).max(0.0)
            }
            Window::Cylinder {
                h2_radius,
                height_half,
            } => {
                let origin = space.origin();
                let dh2 = (hyperboloid_distance(&p.coords()[..3], &origin.coords()[..3])
                    - h2_radius)
                    .max(0.0);
                let dz = (p.height().abs() - height_half).max(0.0);
                (dh2 * dh2 + dz * dz).sqrt()
            }
        }
    }

    pub fn contains(&self, space: &Space, p: &Point) -> bool {
        self.distance_to(space, p) <= 0.0
    }

    /// Volume of the window. Errors on ball windows over the product space.
    pub fn volume(&self, space: &Space) -> Result<f64> {
        self.validate_sampling(space)?;
        match self {
            Window::Ball { radius, .. } => space.ball_volume(*radius),
            Window::Cylinder {
                h2_radius,
                height_half,
            } => Ok(hyperbolic_disk_area(*h2_radius) * 2.0 * height_half),
        }
    }

    /// Grow the window outward by `margin` (used to inflate sampling
    /// windows beyond a region of interest).
    pub fn inflate(&self, margin: f64) -> Window {
        match self {
            Window::Ball { center, radius } => Window::Ball {
                center: center.clone(),
                radius: radius + margin,
            },
            Window::Cylinder {
                h2_radius,
                height_half,
            } => Window::Cylinder {
                h2_radius: h2_radius + margin,
                height_half: height_half + margin,
            },
        }
    }

    /// Draw a point uniformly from the window.
    ///
    /// Draw order is fixed and documented for reproducibility:
    /// * Euclidean ball: `dim` standard normals (direction), then one
    ///   uniform (radius via the `U^(1/dim)` power law);
    /// * hyperbolic disk: one uniform (radius via the `cosh` inverse CDF),
    ///   then one uniform (angle);
    /// * cylinder: the disk draws, then one uniform (height).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, space: &Space, rng: &mut R) -> Result<Point> {
        self.validate_sampling(space)?;
        match self {
            Window::Ball { center, radius } => match space.kind() {
                SpaceKind::Euclidean(dim) => {
                    let mut dir: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, dim);
                    loop {
                        let mut norm2 = 0.0;
                        for d in dir.iter_mut() {
                            *d = rng.sample(StandardNormal);
                            norm2 += *d * *d;
                        }
                        if norm2 > 0.0 {
                            let u: f64 = rng.gen();
                            let r = radius * u.powf(1.0 / dim as f64);
                            let scale = r / norm2.sqrt();
                            let coords = dir
                                .iter()
                                .zip(center.coords().iter())
                                .map(|(d, c)| c + d * scale)
                                .collect();
                            return Ok(Point { coords });
                        }
                        // Degenerate all-zero normal vector: resample.
                    }
                }
                SpaceKind::Hyperbolic2 => {
                    let local = sample_hyperbolic_disk(*radius, rng);
                    space.translate_from_origin(center, &local)
                }
                SpaceKind::H2xR => unreachable!("rejected by validate_sampling"),
            },
            Window::Cylinder {
                h2_radius,
                height_half,
            } => {
                let disk = sample_hyperbolic_disk(*h2_radius, rng);
                let u: f64 = rng.gen();
                let h = (2.0 * u - 1.0) * height_half;
                let c = disk.coords();
                Ok(Point {
                    coords: SmallVec::from_slice(&[c[0], c[1], c[2], h]),
                })
            }
        }
    }
}

/// `acosh(1 + u)` for `u >= 0`, stable near zero:
/// `acosh(1+u) = log1p(u + sqrt(u * (2 + u)))`.
#[inline]
fn acosh1p(u: f64) -> f64 {
    debug_assert!(u >= 0.0);
    (u + (u * (2.0 + u)).sqrt()).ln_1p()
}

/// Hyperbolic-plane distance from hyperboloid coordinate slices.
///
/// Uses `dx^2 + dy^2 - dt^2 = 2(cosh d - 1) >= 0`, which is exact in the
/// reals and avoids cancellation for nearby points.
#[inline]
fn hyperboloid_distance(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dt = a[2] - b[2];
    let s = (dx * dx + dy * dy - dt * dt).max(0.0);
    acosh1p(0.5 * s)
}

/// Area of a hyperbolic disk: `2 pi (cosh r - 1) = 4 pi sinh^2(r/2)`.
#[inline]
fn hyperbolic_disk_area(r: f64) -> f64 {
    let s = (0.5 * r).sinh();
    4.0 * PI * s * s
}

/// Volume of the Euclidean n-ball via the two-step recurrence
/// `V_n = V_{n-2} * 2 pi r^2 / n` with `V_0 = 1`, `V_1 = 2r`.
fn euclidean_ball_volume(dim: usize, r: f64) -> f64 {
    let mut v = if dim % 2 == 0 { 1.0 } else { 2.0 * r };
    let mut n = if dim % 2 == 0 { 2 } else { 3 };
    while n <= dim {
        v *= TAU * r * r / n as f64;
        n += 2;
    }
    v
}

/// Renormalize hyperboloid coordinates onto the sheet by recomputing `t`.
#[inline]
fn renorm_hyperboloid(x: f64, y: f64) -> [f64; 3] {
    [x, y, (1.0 + x * x + y * y).sqrt()]
}

/// The Lorentz boost taking the hyperboloid origin `(0,0,1)` to `c`,
/// applied to `p`. Acts in the plane spanned by the spatial direction of
/// `c` and the time axis; the orthogonal spatial component is untouched.
fn boost_toward(c: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let sinh_s = c[0].hypot(c[1]);
    if sinh_s < 1e-300 {
        return p;
    }
    let cosh_s = c[2];
    let nx = c[0] / sinh_s;
    let ny = c[1] / sinh_s;
    let xi = p[0] * nx + p[1] * ny;
    let perp_x = p[0] - xi * nx;
    let perp_y = p[1] - xi * ny;
    let xi_out = xi * cosh_s + p[2] * sinh_s;
    renorm_hyperboloid(perp_x + xi_out * nx, perp_y + xi_out * ny)
}

/// Point at parameter `frac` on the hyperboloid geodesic from `a` to `b`:
/// `gamma(t) = (sinh((1-t) d) a + sinh(t d) b) / sinh(d)`.
fn hyperboloid_geodesic(a: [f64; 3], b: [f64; 3], frac: f64) -> [f64; 3] {
    let d = hyperboloid_distance(&a, &b);
    if d < 1e-15 {
        return a;
    }
    let denom = d.sinh();
    let wa = ((1.0 - frac) * d).sinh() / denom;
    let wb = (frac * d).sinh() / denom;
    renorm_hyperboloid(wa * a[0] + wb * b[0], wa * a[1] + wb * b[1])
}

/// Uniform draw from the origin-centered hyperbolic disk of radius `r`:
/// radius from the inverse CDF `cosh rho = 1 + U (cosh r - 1)`, then a
/// uniform angle.
fn sample_hyperbolic_disk<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Point {
    let u: f64 = rng.gen();
    let span = 2.0 * (0.5 * r).sinh().powi(2); // cosh r - 1, stable
    let rho = acosh1p(u * span);
    let theta = rng.gen::<f64>() * TAU;
    let sh = rho.sinh();
    Point {
        coords: SmallVec::from_slice(&[sh * theta.cos(), sh * theta.sin(), rho.cosh()]),
    }
}

/// Deterministic covering net of the ball `S(center, radius)` with mesh
/// `mesh`: every point of the ball lies within `mesh` of some net point,
/// and every net point lies in the ball.
///
/// Construction: concentric rings (radial and arc spacing `<= mesh`,
/// splitting the budget in half) on the plane spaces; axis-aligned grid
/// nodes projected onto the ball for Euclidean dimension >= 3; height
/// slices of shrinking hyperbolic disks, each factor at half mesh, on the
/// product space. Net points are ordered outermost-first so coverage scans
/// fail fast on the hardest points.
pub fn covering_net(space: &Space, center: &Point, radius: f64, mesh: f64) -> Result<Vec<Point>> {
    space.check_point(center)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!(
            "net radius must be positive and finite, got {radius}"
        )));
    }
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(Error::invalid(format!(
            "net mesh must be positive and finite, got {mesh}"
        )));
    }
    match space.kind() {
        SpaceKind::Euclidean(2) => {
            let rings = planar_rings(radius, mesh, |rho| TAU * rho);
            Ok(rings
                .into_iter()
                .map(|(rho, theta)| {
                    Point::euclidean(&[
                        center.coords()[0] + rho * theta.cos(),
                        center.coords()[1] + rho * theta.sin(),
                    ])
                })
                .collect())
        }
        SpaceKind::Euclidean(dim) => {
            // Grid with node-to-anywhere distance <= mesh, nodes projected
            // onto the ball (projection onto a convex set is 1-Lipschitz,
            // so the mesh bound survives).
            let spacing = 2.0 * mesh / (dim as f64).sqrt();
            let m = ((radius + mesh) / spacing).ceil() as i64;
            let mut pts = Vec::new();
            let mut idx = vec![-m; dim];
            'outer: loop {
                let mut norm2 = 0.0;
                let local: Vec<f64> = idx.iter().map(|k| *k as f64 * spacing).collect();
                for v in &local {
                    norm2 += v * v;
                }
                let norm = norm2.sqrt();
                if norm <= radius + mesh {
                    let scale = if norm > radius { radius / norm } else { 1.0 };
                    let coords: SmallVec<[f64; 4]> = local
                        .iter()
                        .zip(center.coords().iter())
                        .map(|(v, c)| c + v * scale)
                        .collect();
                    pts.push((norm.min(radius), Point { coords }));
                }
                for d in 0..dim {
                    idx[d] += 1;
                    if idx[d] <= m {
                        continue 'outer;
                    }
                    idx[d] = -m;
                }
                break;
            }
            pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            Ok(pts.into_iter().map(|(_, p)| p).collect())
        }
        SpaceKind::Hyperbolic2 => {
            let rings = planar_rings(radius, mesh, |rho| TAU * rho.sinh());
            rings
                .into_iter()
                .map(|(rho, theta)| {
                    let sh = rho.sinh();
                    let local = Point {
                        coords: SmallVec::from_slice(&[
                            sh * theta.cos(),
                            sh * theta.sin(),
                            rho.cosh(),
                        ]),
                    };
                    space.translate_from_origin(center, &local)
                })
                .collect()
        }
        SpaceKind::H2xR => {
            // Height slices toward-zero spaced at mesh/2; each slice is a
            // hyperbolic disk of the remaining radius, netted at mesh/2.
            // l2 combination of the two factor errors stays <= mesh.
            let half = 0.5 * mesh;
            let slices = (radius / half).ceil().max(1.0) as i64;
            let dz = radius / slices as f64;
            let h2_space = Space::hyperbolic2();
            let h2_center = Point {
                coords: SmallVec::from_slice(&center.coords()[..3]),
            };
            let mut pts = Vec::new();
            for j in -slices..=slices {
                let delta = j as f64 * dz;
                let h = center.height() + delta;
                let sub_r = (radius * radius - delta * delta).max(0.0).sqrt();
                if sub_r <= 0.0 {
                    pts.push(Point {
                        coords: SmallVec::from_slice(&[
                            h2_center.coords()[0],
                            h2_center.coords()[1],
                            h2_center.coords()[2],
                            h,
                        ]),
                    });
                    continue;
                }
                let rings = planar_rings(sub_r, half, |rho| TAU * rho.sinh());
                for (rho, theta) in rings {
                    let sh = rho.sinh();
                    let local = Point {
                        coords: SmallVec::from_slice(&[
                            sh * theta.cos(),
                            sh * theta.sin(),
                            rho.cosh(),
                        ]),
                    };
                    let moved = h2_space.translate_from_origin(&h2_center, &local)?;
                    let c = moved.coords();
                    pts.push(Point {
                        coords: SmallVec::from_slice(&[c[0], c[1], c[2], h]),
                    });
                }
            }
            Ok(pts)
        }
    }
}

/// Ring schedule shared by the planar nets: radii `k * (R/K)` with
/// `K = ceil(R / mesh)` (so both endpoint rings exist and radial spacing is
/// at most `mesh`), and per ring enough angles that arc spacing is at most
/// `mesh`. Rings are emitted outermost-first. `circumference(rho)` supplies
/// the space-dependent ring length.
fn planar_rings(radius: f64, mesh: f64, circumference: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let k = (radius / mesh).ceil().max(1.0) as usize;
    let dr = radius / k as f64;
    let mut out = Vec::new();
    for ring in (0..=k).rev() {
        let rho = ring as f64 * dr;
        if ring == 0 {
            out.push((0.0, 0.0));
            continue;
        }
        let count = (circumference(rho) / mesh).ceil().max(1.0) as usize;
        for j in 0..count {
            out.push((rho, j as f64 * TAU / count as f64));
        }
    }
    out
}
