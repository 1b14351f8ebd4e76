//! Monte Carlo experiments over the coupled Boolean model: crossing
//! probabilities, percolation and big-ball-connection thresholds,
//! spanning-cluster multiplicity, cluster stability across intensities,
//! and local connectivity set membership.
//!
//! All estimators are deterministic functions of their plan (including
//! the base seed): trials derive per-trial seeds, run independently in
//! parallel, and are reduced by counting, so thread scheduling cannot
//! change any output.
//!
//! "Unbounded cluster" is everywhere proxied by the spanning predicate
//! of [`SpanningBands`] inside a finite window; reports carry the window
//! parameters so finite-size effects stay inspectable.

mod incremental;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::clusters::{
    build_intersection_graph, chemical_distance, label_clusters, refinement_map,
    spanning_clusters, Cluster, SpanningBands,
};
use crate::error::{Error, Result};
use crate::geometry::{covering_net, MetricIndex, Point, Space, SpaceKind, Window};
use crate::pointprocess::{
    derive_seed, fmt_f64, restrict, sample_configuration, MarkedConfiguration,
};
use crate::tolerances::WILSON_Z95;

use incremental::ActivationSweep;

/// Experiment identifiers fed to seed derivation so distinct experiments
/// on one base seed draw independent streams.
pub mod experiment {
    pub const SAMPLE: u64 = 1;
    pub const CLUSTERS: u64 = 2;
    pub const CROSSING: u64 = 3;
    pub const BB: u64 = 4;
    pub const UNIQUENESS: u64 = 5;
    pub const STABILITY: u64 = 6;
    pub const A_SETS: u64 = 7;
    pub const MULTIPLICITY: u64 = 8;
    pub const REFINEMENT: u64 = 9;
    pub const CHEMICAL: u64 = 10;
}

/// Canonical space tag used in report rows.
pub fn space_label(space: &Space) -> String {
    match space.kind() {
        SpaceKind::Euclidean(dim) => format!("euclidean{dim}"),
        SpaceKind::Hyperbolic2 => "hyperbolic2".to_string(),
        SpaceKind::H2xR => "h2xr".to_string(),
    }
}

/// A Bernoulli frequency with its sample size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Estimate {
    pub successes: usize,
    pub trials: usize,
}

impl Estimate {
    pub fn value(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    /// Wilson 95% interval half-width around the score-interval center.
    pub fn half_width(&self) -> f64 {
        wilson_half_width(self.successes, self.trials)
    }
}

pub fn wilson_half_width(successes: usize, trials: usize) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = WILSON_Z95;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// One line of the flat report CSV.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub experiment: String,
    pub space: String,
    pub lambda: f64,
    pub param1: String,
    pub param2: String,
    pub estimate: f64,
    pub half_width: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Render report rows; floats use 17 significant digits so identical
/// runs produce identical bytes.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out =
        String::from("experiment,space,lambda,param1,param2,estimate,half_width,trials,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.experiment,
            r.space,
            fmt_f64(r.lambda),
            r.param1,
            r.param2,
            fmt_f64(r.estimate),
            fmt_f64(r.half_width),
            r.trials,
            r.seed
        ));
    }
    out
}

/// Description of one intensity sweep: shared geometry, an ascending
/// intensity grid under a coupling ceiling, and the trial budget.
///
/// With `common_random_numbers` set, each trial samples one configuration
/// at the ceiling and replays it across the grid, making monotone events
/// monotone per sample; otherwise every grid cell draws fresh
/// configurations.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub space: Space,
    pub window: Window,
    pub lambda_grid: Vec<f64>,
    pub lambda_max: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub common_random_numbers: bool,
}

impl SweepPlan {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        space: Space,
        window: Window,
        lambda_grid: Vec<f64>,
        lambda_max: f64,
        trials: usize,
        base_seed: u64,
        common_random_numbers: bool,
    ) -> Result<Self> {
        window.validate_sampling(&space)?;
        if lambda_grid.is_empty() {
            return Err(Error::invalid("lambda grid must not be empty"));
        }
        for &g in &lambda_grid {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!(
                    "lambda grid entries must be nonnegative and finite, got {g}"
                )));
            }
        }
        if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lambda grid must be strictly ascending"));
        }
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return Err(Error::invalid(format!(
                "lambda_max must be positive and finite, got {lambda_max}"
            )));
        }
        if *lambda_grid.last().unwrap() > lambda_max {
            return Err(Error::invalid(format!(
                "lambda grid exceeds lambda_max = {lambda_max}"
            )));
        }
        if trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        Ok(SweepPlan {
            space,
            window,
            lambda_grid,
            lambda_max,
            trials,
            base_seed,
            common_random_numbers,
        })
    }

    /// Smallest spacing between adjacent grid points.
    pub fn grid_resolution(&self) -> f64 {
        self.lambda_grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// One grid cell of a sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepCell {
    pub lambda: f64,
    pub estimate: Estimate,
}

/// Per-grid-cell results of one event sweep.
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    fn from_counts(grid: &[f64], successes: Vec<usize>, trials: usize) -> Self {
        SweepTable {
            cells: grid
                .iter()
                .zip(successes)
                .map(|(&lambda, s)| SweepCell {
                    lambda,
                    estimate: Estimate {
                        successes: s,
                        trials,
                    },
                })
                .collect(),
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            out.push_str(&format!(
                "lambda={} p_hat={} trials={}\n",
                fmt_f64(c.lambda),
                fmt_f64(c.estimate.value()),
                c.estimate.trials
            ));
        }
        out
    }
}

pub fn validate_bands(bands: SpanningBands) -> Result<()> {
    if !(bands.r_inner > 0.0 && bands.r_inner.is_finite()) {
        return Err(Error::invalid(format!(
            "inner band radius must be positive and finite, got {}",
            bands.r_inner
        )));
    }
    if !(bands.r_outer > bands.r_inner) || !bands.r_outer.is_finite() {
        return Err(Error::invalid(format!(
            "outer band radius must exceed the inner radius, got {} vs {}",
            bands.r_outer, bands.r_inner
        )));
    }
    Ok(())
}

/// The sampling window must extend one grain diameter beyond the
/// outermost geometry an experiment interrogates, so connectivity near
/// the region of interest is not truncated.
pub fn validate_window_reach(
    space: &Space,
    window: &Window,
    planar_reach: f64,
    vertical_reach: f64,
) -> Result<()> {
    let pad = 2.0 * space.ball_radius();
    match window {
        Window::Ball { radius, .. } => {
            if *radius + 1e-12 < planar_reach + pad {
                return Err(Error::invalid(format!(
                    "window radius {radius} is too small: the experiment reaches \
                     distance {planar_reach} and needs one grain diameter beyond"
                )));
            }
        }
        Window::Cylinder {
            h2_radius,
            height_half,
        } => {
            if *h2_radius + 1e-12 < planar_reach + pad {
                return Err(Error::invalid(format!(
                    "cylinder h2_radius {h2_radius} is too small: the experiment \
                     reaches planar distance {planar_reach} and needs one grain \
                     diameter beyond"
                )));
            }
            if *height_half + 1e-12 < vertical_reach + pad {
                return Err(Error::invalid(format!(
                    "cylinder height_half {height_half} is too small: the experiment \
                     reaches height {vertical_reach} and needs one grain diameter \
                     beyond"
                )));
            }
        }
    }
    Ok(())
}

/// Bands that never classify a component as spanning; used when a sweep
/// only watches region-pair events.
fn inert_bands() -> SpanningBands {
    SpanningBands {
        r_inner: 1.0,
        r_outer: f64::INFINITY,
    }
}

/// One-arm estimate: the probability that some cluster both enters the
/// inner band and escapes the outer band. Samples fresh configurations
/// in a ball window inflated one grain diameter past the outer band.
///
/// On the product space use [`crossing_sweep`] with an explicit cylinder
/// window; a ball gives no canonical planar extent there.
pub fn crossing_probability(
    space: &Space,
    lambda: f64,
    r_inner: f64,
    r_outer: f64,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    let bands = SpanningBands { r_inner, r_outer };
    validate_bands(bands)?;
    check_lambda(lambda)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if space.kind() == SpaceKind::H2xR {
        return Err(Error::Unsupported(
            "crossing_probability needs a cylinder window on the product space; \
             use crossing_sweep with an explicit window"
                .into(),
        ));
    }
    let window = Window::ball(space.origin(), r_outer + 2.0 * space.ball_radius());
    let successes = count_successes(trials, |t| {
        let trial_seed = derive_seed(seed, experiment::CROSSING, t as u64);
        crossing_trial(space, &window, bands, lambda, trial_seed)
    })?;
    Ok(Estimate { successes, trials })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "intensity must be nonnegative and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Run `trials` Bernoulli trials in parallel and count successes.
fn count_successes(
    trials: usize,
    trial: impl Fn(usize) -> Result<bool> + Sync + Send,
) -> Result<usize> {
    let outcomes: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(trial)
        .collect::<Result<_>>()?;
    Ok(outcomes.into_iter().filter(|&b| b).count())
}

/// Fresh-configuration crossing trial at a single intensity.
fn crossing_trial(
    space: &Space,
    window: &Window,
    bands: SpanningBands,
    lambda: f64,
    seed: u64,
) -> Result<bool> {
    if lambda == 0.0 {
        return Ok(false);
    }
    let config = sample_configuration(space, window, lambda, seed)?;
    let mut sweep = ActivationSweep::new(space, &config, bands, &[])?;
    while sweep.crossing_at().is_none() {
        if sweep.activate_next().is_none() {
            break;
        }
    }
    Ok(sweep.crossing_at().is_some())
}

/// Crossing probability at every grid intensity of the plan.
pub fn crossing_sweep(plan: &SweepPlan, bands: SpanningBands) -> Result<SweepTable> {
    let data = crossing_sweep_data(plan, bands)?;
    Ok(data.table(plan))
}

/// Internal sweep result keeping per-trial critical marks when common
/// random numbers are on, so threshold refinement can re-evaluate the
/// frequency at arbitrary intensities for free.
enum CrossingData {
    Coupled { criticals: Vec<Option<f64>> },
    Fresh { successes: Vec<usize> },
}

impl CrossingData {
    fn table(&self, plan: &SweepPlan) -> SweepTable {
        match self {
            CrossingData::Coupled { criticals } => {
                let successes = plan
                    .lambda_grid
                    .iter()
                    .map(|&g| criticals.iter().filter(|c| matches!(c, Some(m) if *m <= g)).count())
                    .collect();
                SweepTable::from_counts(&plan.lambda_grid, successes, plan.trials)
            }
            CrossingData::Fresh { successes } => {
                SweepTable::from_counts(&plan.lambda_grid, successes.clone(), plan.trials)
            }
        }
    }
}

fn crossing_sweep_data(plan: &SweepPlan, bands: SpanningBands) -> Result<CrossingData> {
    validate_bands(bands)?;
    validate_window_reach(&plan.space, &plan.window, bands.r_outer, bands.r_outer)?;
    if plan.common_random_numbers {
        let criticals: Vec<Option<f64>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| -> Result<Option<f64>> {
                let seed = derive_seed(plan.base_seed, experiment::CROSSING, t as u64);
                let config =
                    sample_configuration(&plan.space, &plan.window, plan.lambda_max, seed)?;
                let mut sweep = ActivationSweep::new(&plan.space, &config, bands, &[])?;
                while sweep.crossing_at().is_none() {
                    if sweep.activate_next().is_none() {
                        break;
                    }
                }
                Ok(sweep.crossing_at())
            })
            .collect::<Result<_>>()?;
        Ok(CrossingData::Coupled { criticals })
    } else {
        let per_cell: Vec<usize> = plan
            .lambda_grid
            .iter()
            .enumerate()
            .map(|(gi, &g)| {
                count_successes(plan.trials, |t| {
                    let index = (gi * plan.trials + t) as u64;
                    let seed = derive_seed(plan.base_seed, experiment::CROSSING, index);
                    crossing_trial(&plan.space, &plan.window, bands, g, seed)
                })
            })
            .collect::<Result<_>>()?;
        Ok(CrossingData::Fresh {
            successes: per_cell,
        })
    }
}

/// Percolation-threshold bracket from a crossing sweep.
#[derive(Clone, Debug)]
pub struct LambdaCEstimate {
    pub lo: f64,
    pub hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub threshold: f64,
    pub table: SweepTable,
}

/// Bracket the intensity where the crossing probability passes
/// `threshold`: the interval satisfies `p(lo) < threshold < p(hi)` and is
/// refined by bisection until no wider than the grid resolution. With
/// common random numbers the refinement reuses the per-trial critical
/// marks; otherwise each probe runs a fresh trial batch.
pub fn lambda_c_estimate(
    plan: &SweepPlan,
    bands: SpanningBands,
    threshold: f64,
) -> Result<LambdaCEstimate> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie strictly between 0 and 1, got {threshold}"
        )));
    }
    if plan.lambda_grid.len() < 2 {
        return Err(Error::invalid(
            "threshold bracketing needs a grid of at least two intensities",
        ));
    }
    let data = crossing_sweep_data(plan, bands)?;
    let table = data.table(plan);
    let phat: Vec<f64> = table.cells.iter().map(|c| c.estimate.value()).collect();

    let Some(i_hi) = phat.iter().position(|&p| p > threshold) else {
        return Err(Error::BracketingFailure {
            message: format!(
                "crossing probability never exceeds the threshold {threshold} on the grid"
            ),
            table: table.render(),
        });
    };
    let Some(i_lo) = (0..i_hi).rev().find(|&i| phat[i] < threshold) else {
        return Err(Error::BracketingFailure {
            message: format!(
                "crossing probability is never below the threshold {threshold} \
                 before it is first exceeded"
            ),
            table: table.render(),
        });
    };

    let resolution = plan.grid_resolution();
    let (mut lo, mut hi) = (plan.lambda_grid[i_lo], plan.lambda_grid[i_hi]);
    let (mut p_lo, mut p_hi) = (phat[i_lo], phat[i_hi]);
    let mut refine_round = 0u64;
    while hi - lo > resolution * (1.0 + 1e-9) && refine_round < 60 {
        let mid = 0.5 * (lo + hi);
        let p_mid = match &data {
            CrossingData::Coupled { criticals } => {
                criticals
                    .iter()
                    .filter(|c| matches!(c, Some(m) if *m <= mid))
                    .count() as f64
                    / plan.trials as f64
            }
            CrossingData::Fresh { .. } => {
                let successes = count_successes(plan.trials, |t| {
                    let index = refine_round * plan.trials as u64 + t as u64;
                    let seed = derive_seed(plan.base_seed, experiment::REFINEMENT, index);
                    crossing_trial(&plan.space, &plan.window, bands, mid, seed)
                })?;
                successes as f64 / plan.trials as f64
            }
        };
        refine_round += 1;
        if p_mid < threshold {
            lo = mid;
            p_lo = p_mid;
        } else if p_mid > threshold {
            hi = mid;
            p_hi = p_mid;
        } else {
            // An exact tie cannot tighten either strict inequality; the
            // current bracket is the honest answer.
            break;
        }
    }
    Ok(LambdaCEstimate {
        lo,
        hi,
        p_lo,
        p_hi,
        threshold,
        table,
    })
}

/// The two target regions for a region-pair connection experiment,
/// placed symmetrically on the canonical axis.
fn separation_pair(space: &Space, region_radius: f64, separation: f64) -> (Window, Window) {
    let a = space.axis_point(-0.5 * separation);
    let b = space.axis_point(0.5 * separation);
    (
        Window::ball(a, region_radius),
        Window::ball(b, region_radius),
    )
}

/// Probability that two balls of radius `region_radius`, centered
/// `separation` apart, are joined by one cluster. Fresh configurations
/// per trial; the window is sized to fit both regions plus one grain
/// diameter.
pub fn bb_connection_probability(
    space: &Space,
    lambda: f64,
    region_radius: f64,
    separation: f64,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    check_lambda(lambda)?;
    validate_region_geometry(region_radius, separation)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let window = bb_window(space, region_radius, separation);
    let pair = separation_pair(space, region_radius, separation);
    let successes = count_successes(trials, |t| {
        let trial_seed = derive_seed(seed, experiment::BB, t as u64);
        bb_trial(space, &window, &pair, lambda, trial_seed)
    })?;
    Ok(Estimate { successes, trials })
}

pub fn validate_region_geometry(region_radius: f64, separation: f64) -> Result<()> {
    if !(region_radius > 0.0 && region_radius.is_finite()) {
        return Err(Error::invalid(format!(
            "region radius must be positive and finite, got {region_radius}"
        )));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid(format!(
            "separation must be nonnegative and finite, got {separation}"
        )));
    }
    Ok(())
}

fn bb_window(space: &Space, region_radius: f64, separation: f64) -> Window {
    let pad = 2.0 * space.ball_radius();
    let planar = 0.5 * separation + region_radius + pad;
    match space.kind() {
        SpaceKind::Euclidean(_) | SpaceKind::Hyperbolic2 => Window::ball(space.origin(), planar),
        SpaceKind::H2xR => Window::cylinder(planar, region_radius + pad),
    }
}

fn bb_trial(
    space: &Space,
    window: &Window,
    pair: &(Window, Window),
    lambda: f64,
    seed: u64,
) -> Result<bool> {
    if lambda == 0.0 {
        return Ok(false);
    }
    let config = sample_configuration(space, window, lambda, seed)?;
    let mut sweep = ActivationSweep::new(space, &config, inert_bands(), &[pair.clone()])?;
    while sweep.pair_at(0).is_none() {
        if sweep.activate_next().is_none() {
            break;
        }
    }
    Ok(sweep.pair_at(0).is_some())
}

/// Region-pair connection sweep over the plan's grid, one table per
/// separation (all separations share each trial's configuration).
#[derive(Clone, Debug)]
pub struct BbSweep {
    pub region_radius: f64,
    pub separations: Vec<f64>,
    pub tables: Vec<SweepTable>,
}

pub fn bb_sweep(plan: &SweepPlan, region_radius: f64, separations: &[f64]) -> Result<BbSweep> {
    if separations.is_empty() {
        return Err(Error::invalid("at least one separation is required"));
    }
    let mut max_sep = 0.0f64;
    for &s in separations {
        validate_region_geometry(region_radius, s)?;
        max_sep = max_sep.max(s);
    }
    validate_window_reach(
        &plan.space,
        &plan.window,
        0.5 * max_sep + region_radius,
        region_radius,
    )?;
    let pairs: Vec<(Window, Window)> = separations
        .iter()
        .map(|&s| separation_pair(&plan.space, region_radius, s))
        .collect();

    let per_sep_successes: Vec<Vec<usize>> = if plan.common_random_numbers {
        // criticals[t][p]: first mark joining pair p in trial t.
        let criticals: Vec<Vec<Option<f64>>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<Option<f64>>> {
                let seed = derive_seed(plan.base_seed, experiment::BB, t as u64);
                let config =
                    sample_configuration(&plan.space, &plan.window, plan.lambda_max, seed)?;
                let mut sweep =
                    ActivationSweep::new(&plan.space, &config, inert_bands(), &pairs)?;
                while !sweep.all_events_fired() {
                    if sweep.activate_next().is_none() {
                        break;
                    }
                }
                Ok((0..pairs.len()).map(|p| sweep.pair_at(p)).collect())
            })
            .collect::<Result<_>>()?;
        (0..pairs.len())
            .map(|p| {
                plan.lambda_grid
                    .iter()
                    .map(|&g| {
                        criticals
                            .iter()
                            .filter(|c| matches!(c[p], Some(m) if m <= g))
                            .count()
                    })
                    .collect()
            })
            .collect()
    } else {
        // outcome[gi][t][p]
        let flat: Vec<Vec<bool>> = (0..plan.lambda_grid.len() * plan.trials)
            .into_par_iter()
            .map(|i| -> Result<Vec<bool>> {
                let (gi, t) = (i / plan.trials, i % plan.trials);
                let g = plan.lambda_grid[gi];
                let seed = derive_seed(plan.base_seed, experiment::BB, (gi * plan.trials + t) as u64);
                if g == 0.0 {
                    return Ok(vec![false; pairs.len()]);
                }
                let config = sample_configuration(&plan.space, &plan.window, g, seed)?;
                let mut sweep =
                    ActivationSweep::new(&plan.space, &config, inert_bands(), &pairs)?;
                while !sweep.all_events_fired() {
                    if sweep.activate_next().is_none() {
                        break;
                    }
                }
                Ok((0..pairs.len()).map(|p| sweep.pair_at(p).is_some()).collect())
            })
            .collect::<Result<_>>()?;
        (0..pairs.len())
            .map(|p| {
                (0..plan.lambda_grid.len())
                    .map(|gi| {
                        (0..plan.trials)
                            .filter(|&t| flat[gi * plan.trials + t][p])
                            .count()
                    })
                    .collect()
            })
            .collect()
    };

    Ok(BbSweep {
        region_radius,
        separations: separations.to_vec(),
        tables: per_sep_successes
            .into_iter()
            .map(|s| SweepTable::from_counts(&plan.lambda_grid, s, plan.trials))
            .collect(),
    })
}

/// Outcome of scanning a grid for the first intensity meeting a target
/// frequency. Failing to reach the target is a reportable result, not an
/// error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdOutcome {
    Reached {
        /// First grid intensity meeting the target.
        lambda: f64,
        /// The grid point before it (equal to `lambda` when the very
        /// first grid point already qualifies).
        bracket_lo: f64,
    },
    NotReached {
        /// Grid intensity with the highest observed frequency.
        best_lambda: f64,
        best_value: f64,
    },
}

fn threshold_scan(grid: &[f64], values: &[f64], target: f64) -> ThresholdOutcome {
    debug_assert_eq!(grid.len(), values.len());
    if let Some(i) = values.iter().position(|&v| v >= target) {
        ThresholdOutcome::Reached {
            lambda: grid[i],
            bracket_lo: if i == 0 { grid[0] } else { grid[i - 1] },
        }
    } else {
        let mut best = 0usize;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        ThresholdOutcome::NotReached {
            best_lambda: grid[best],
            best_value: values[best],
        }
    }
}

/// Big-ball connection threshold proxy: the first grid intensity whose
/// worst-separation connection frequency reaches `target`.
#[derive(Clone, Debug)]
pub struct LambdaBbEstimate {
    pub outcome: ThresholdOutcome,
    pub target: f64,
    pub sweep: BbSweep,
}

pub fn lambda_bb_estimate(
    plan: &SweepPlan,
    region_radius: f64,
    separations: &[f64],
    target: f64,
) -> Result<LambdaBbEstimate> {
    check_target(target)?;
    let sweep = bb_sweep(plan, region_radius, separations)?;
    let worst: Vec<f64> = (0..plan.lambda_grid.len())
        .map(|gi| {
            sweep
                .tables
                .iter()
                .map(|t| t.cells[gi].estimate.value())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(LambdaBbEstimate {
        outcome: threshold_scan(&plan.lambda_grid, &worst, target),
        target,
        sweep,
    })
}

fn check_target(target: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::invalid(format!(
            "target frequency must lie in [0, 1], got {target}"
        )));
    }
    Ok(())
}

/// Number of spanning clusters (the bands' proxy for unbounded ones) at
/// each grid intensity, per trial. `matrix[gi]` holds one count per
/// trial.
fn spanning_count_matrix(
    plan: &SweepPlan,
    bands: SpanningBands,
    experiment_id: u64,
) -> Result<Vec<Vec<usize>>> {
    validate_bands(bands)?;
    validate_window_reach(&plan.space, &plan.window, bands.r_outer, bands.r_outer)?;
    if plan.common_random_numbers {
        let per_trial: Vec<Vec<usize>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<usize>> {
                let seed = derive_seed(plan.base_seed, experiment_id, t as u64);
                let config =
                    sample_configuration(&plan.space, &plan.window, plan.lambda_max, seed)?;
                let mut sweep = ActivationSweep::new(&plan.space, &config, bands, &[])?;
                Ok(plan
                    .lambda_grid
                    .iter()
                    .map(|&g| {
                        sweep.advance_to(g);
                        sweep.spanning_count()
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok((0..plan.lambda_grid.len())
            .map(|gi| per_trial.iter().map(|row| row[gi]).collect())
            .collect())
    } else {
        let flat: Vec<usize> = (0..plan.lambda_grid.len() * plan.trials)
            .into_par_iter()
            .map(|i| -> Result<usize> {
                let (gi, t) = (i / plan.trials, i % plan.trials);
                let g = plan.lambda_grid[gi];
                if g == 0.0 {
                    return Ok(0);
                }
                let seed =
                    derive_seed(plan.base_seed, experiment_id, (gi * plan.trials + t) as u64);
                let config = sample_configuration(&plan.space, &plan.window, g, seed)?;
                let mut sweep = ActivationSweep::new(&plan.space, &config, bands, &[])?;
                sweep.run_to_end();
                Ok(sweep.spanning_count())
            })
            .collect::<Result<_>>()?;
        Ok((0..plan.lambda_grid.len())
            .map(|gi| flat[gi * plan.trials..(gi + 1) * plan.trials].to_vec())
            .collect())
    }
}

/// Uniqueness-threshold proxy: the first grid intensity at which the
/// frequency of exactly one spanning cluster reaches `target`. The
/// event is not monotone, so every grid cell is evaluated directly.
#[derive(Clone, Debug)]
pub struct LambdaUniqueEstimate {
    pub outcome: ThresholdOutcome,
    pub target: f64,
    pub table: SweepTable,
}

pub fn lambda_unique_estimate(
    plan: &SweepPlan,
    bands: SpanningBands,
    target: f64,
) -> Result<LambdaUniqueEstimate> {
    check_target(target)?;
    let matrix = spanning_count_matrix(plan, bands, experiment::UNIQUENESS)?;
    let successes: Vec<usize> = matrix
        .iter()
        .map(|row| row.iter().filter(|&&c| c == 1).count())
        .collect();
    let table = SweepTable::from_counts(&plan.lambda_grid, successes, plan.trials);
    let freqs: Vec<f64> = table.cells.iter().map(|c| c.estimate.value()).collect();
    Ok(LambdaUniqueEstimate {
        outcome: threshold_scan(&plan.lambda_grid, &freqs, target),
        target,
        table,
    })
}

/// Histogram of spanning-cluster multiplicity per grid intensity.
#[derive(Clone, Debug)]
pub struct MultiplicityHistogram {
    pub trials: usize,
    pub cells: Vec<MultiplicityCell>,
}

#[derive(Clone, Debug)]
pub struct MultiplicityCell {
    pub lambda: f64,
    pub counts: BTreeMap<usize, usize>,
}

pub fn spanning_multiplicity_histogram(
    plan: &SweepPlan,
    bands: SpanningBands,
) -> Result<MultiplicityHistogram> {
    let matrix = spanning_count_matrix(plan, bands, experiment::MULTIPLICITY)?;
    let cells = plan
        .lambda_grid
        .iter()
        .zip(&matrix)
        .map(|(&lambda, row)| {
            let mut counts = BTreeMap::new();
            for &c in row {
                *counts.entry(c).or_insert(0) += 1;
            }
            MultiplicityCell { lambda, counts }
        })
        .collect();
    Ok(MultiplicityHistogram {
        trials: plan.trials,
        cells,
    })
}

/// Deterministic spanning-cluster count for one configuration at one
/// intensity.
pub fn spanning_cluster_count(
    space: &Space,
    config: &MarkedConfiguration,
    lambda: f64,
    bands: SpanningBands,
) -> Result<usize> {
    validate_bands(bands)?;
    let active = restrict(config, lambda)?;
    let graph = build_intersection_graph(space, config, &active);
    let labeling = label_clusters(space, config, &graph);
    Ok(spanning_clusters(space, &labeling, bands).len())
}

/// Stability of spanning clusters under thinning: which spanning
/// clusters at the higher intensity contain a spanning cluster of the
/// lower intensity of the same coupled configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityReport {
    pub n_spanning2: usize,
    pub n_stable: usize,
    /// `None` when no cluster spans at the higher intensity.
    pub fraction: Option<f64>,
}

pub fn stability_check(
    space: &Space,
    config: &MarkedConfiguration,
    lambda1: f64,
    lambda2: f64,
    bands: SpanningBands,
) -> Result<StabilityReport> {
    validate_bands(bands)?;
    if !(lambda1 >= 0.0 && lambda1 <= lambda2) {
        return Err(Error::invalid(format!(
            "stability needs 0 <= lambda1 <= lambda2, got {lambda1} and {lambda2}"
        )));
    }
    let lower_active = restrict(config, lambda1)?;
    let upper_active = restrict(config, lambda2)?;
    let lower = label_clusters(
        space,
        config,
        &build_intersection_graph(space, config, &lower_active),
    );
    let upper = label_clusters(
        space,
        config,
        &build_intersection_graph(space, config, &upper_active),
    );
    // Coupling refinement is a structural invariant; a violation is a
    // bug, and refinement_map reports it as such.
    let map = refinement_map(&lower, &upper)?;

    let upper_spanning: Vec<&Cluster> = spanning_clusters(space, &upper, bands);
    let mut stable_upper: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    for c1 in spanning_clusters(space, &lower, bands) {
        stable_upper.insert(map[&c1.id]);
    }
    let n_spanning2 = upper_spanning.len();
    let n_stable = upper_spanning
        .iter()
        .filter(|c| stable_upper.contains(&c.id))
        .count();
    Ok(StabilityReport {
        n_spanning2,
        n_stable,
        fraction: if n_spanning2 == 0 {
            None
        } else {
            Some(n_stable as f64 / n_spanning2 as f64)
        },
    })
}

/// Stability pooled over many coupled configurations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityPooled {
    pub trials: usize,
    pub n_spanning2: usize,
    pub n_stable: usize,
    pub fraction: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    space: &Space,
    window: &Window,
    lambda_max: f64,
    lambda1: f64,
    lambda2: f64,
    bands: SpanningBands,
    trials: usize,
    base_seed: u64,
) -> Result<StabilityPooled> {
    validate_bands(bands)?;
    validate_window_reach(space, window, bands.r_outer, bands.r_outer)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if !(lambda2 <= lambda_max) {
        return Err(Error::invalid(format!(
            "lambda2 = {lambda2} exceeds the coupling ceiling {lambda_max}"
        )));
    }
    let reports: Vec<StabilityReport> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<StabilityReport> {
            let seed = derive_seed(base_seed, experiment::STABILITY, t as u64);
            let config = sample_configuration(space, window, lambda_max, seed)?;
            stability_check(space, &config, lambda1, lambda2, bands)
        })
        .collect::<Result<_>>()?;
    let n_spanning2 = reports.iter().map(|r| r.n_spanning2).sum();
    let n_stable = reports.iter().map(|r| r.n_stable).sum();
    Ok(StabilityPooled {
        trials,
        n_spanning2,
        n_stable,
        fraction: if n_spanning2 == 0 {
            None
        } else {
            Some(n_stable as f64 / n_spanning2 as f64)
        },
    })
}

/// Membership of a base point in the three local connectivity sets at
/// scale `r` and chain budget `n`, relative to the giant (largest
/// spanning) cluster at `lambda_star` and the thinner level `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ASetMembership {
    /// The ball of radius `r` around the base point meets the giant
    /// cluster's occupied region.
    pub in_a1: bool,
    /// All giant-covered probes of the slightly larger ball are within
    /// chemical distance `n` of one another.
    pub in_a2: bool,
    /// No point with mark in `(lambda, lambda_star]` lies within
    /// `r + 2 n ball_radius` of the base point.
    pub in_a3: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn a_set_membership(
    space: &Space,
    config: &MarkedConfiguration,
    bands: SpanningBands,
    z: &Point,
    r: f64,
    n: usize,
    lambda: f64,
    lambda_star: f64,
) -> Result<ASetMembership> {
    validate_bands(bands)?;
    space.check_point(z)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!(
            "scale r must be positive and finite, got {r}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("chain budget n must be at least 1"));
    }
    if !(lambda >= 0.0 && lambda <= lambda_star) {
        return Err(Error::invalid(format!(
            "need 0 <= lambda <= lambda_star, got {lambda} and {lambda_star}"
        )));
    }
    let rb = space.ball_radius();
    let active = restrict(config, lambda_star)?;
    let graph = build_intersection_graph(space, config, &active);
    let labeling = label_clusters(space, config, &graph);
    let spanning = spanning_clusters(space, &labeling, bands);
    let giant = spanning
        .iter()
        .copied()
        .max_by(|a, b| a.size().cmp(&b.size()).then(b.id.cmp(&a.id)))
        .ok_or_else(|| {
            Error::UndefinedGiant(format!(
                "no spanning cluster at lambda_star = {lambda_star} with bands \
                 r_inner = {}, r_outer = {}",
                bands.r_inner, bands.r_outer
            ))
        })?;

    let giant_locations: Vec<Point> = giant
        .members
        .iter()
        .map(|&id| config.points[id].location.clone())
        .collect();
    let giant_index = MetricIndex::build(space, &giant_locations);

    let in_a1 = giant_index.any_within(z, r + rb, |_| true);

    // Probe the slightly larger ball on a quarter-grain mesh; the
    // chemical distance changes by at most one inside half a grain.
    let probes = covering_net(space, z, r + 0.5 * rb, 0.25 * rb)?;
    let covered: Vec<&Point> = probes
        .iter()
        .filter(|p| giant_index.any_within(p, rb, |_| true))
        .collect();
    let mut in_a2 = true;
    'pairs: for (i, s) in covered.iter().enumerate() {
        for t in covered.iter().skip(i) {
            let d = chemical_distance(space, config, &graph, s, t)?;
            match d {
                Some(steps) if (steps as usize) < n => {}
                _ => {
                    in_a2 = false;
                    break 'pairs;
                }
            }
        }
    }

    let reach3 = r + 2.0 * n as f64 * rb;
    let all_locations: Vec<Point> = config.points.iter().map(|p| p.location.clone()).collect();
    let all_index = MetricIndex::build(space, &all_locations);
    let nearby = all_index.query(z, reach3);
    let in_a3 = !nearby.iter().any(|&i| {
        let mark = config.points[i as usize].mark;
        mark > lambda && mark <= lambda_star
    });

    Ok(ASetMembership { in_a1, in_a2, in_a3 })
}
