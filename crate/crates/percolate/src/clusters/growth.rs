//! Incremental exploration of a single cluster.
//!
//! Growth starts from a query point: every active grain covering it is a
//! BFS source (any two such grains overlap, so the sources share one
//! cluster). Discovery order is breadth-first and deterministic. A stop
//! rule can cut exploration short; the trace records how far the search
//! got and why it halted.

use crate::error::{Error, Result};
use crate::geometry::{covering_net, MetricIndex, Point, Space};
use crate::pointprocess::{restrict, MarkedConfiguration};

use super::{build_intersection_graph, IntersectionGraph};

/// When to halt cluster growth.
#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Explore the entire component.
    Exhaust,
    /// Stop once a discovered center lies at this distance or more from
    /// the seed point.
    RadiusReached(f64),
    /// Stop once the grains discovered so far cover a ball of the given
    /// radius around some discovered center. Coverage is certified on a
    /// net of mesh `resolution`: every net point must be within
    /// `ball_radius - resolution` of a discovered center, which makes a
    /// positive answer rigorous and a negative answer conservative.
    CoveredBall { radius: f64, resolution: f64 },
}

/// Why growth halted.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Exhausted,
    RadiusReached(f64),
    CoveredBallFound { center: Point, radius: f64 },
}

/// Record of one growth run: global point ids in discovery order and,
/// for each, the already-discovered neighbor it was reached through
/// (`None` for the seed grains).
pub struct GrowthTrace {
    pub seed: Point,
    pub discovered: Vec<usize>,
    pub parents: Vec<Option<usize>>,
    pub stop_reason: StopReason,
}

impl GrowthTrace {
    /// Discovered global ids, ascending.
    pub fn members_sorted(&self) -> Vec<usize> {
        let mut out = self.discovered.clone();
        out.sort_unstable();
        out
    }
}

/// One center whose surrounding ball is not yet certified covered: the
/// scan resumes at `probe_index` (earlier probes stay covered because the
/// discovered set only grows), and `probe` is that first uncovered net
/// point. A rescan is worthwhile only when a new grain reaches `probe`.
struct PendingCoverage {
    local: usize,
    probe_index: usize,
    probe: Point,
}

/// Grow the cluster of the grains covering `seed_point`, stopping per
/// `rule`. An uncovered seed point yields an empty exhausted trace.
pub fn grow_component(
    space: &Space,
    config: &MarkedConfiguration,
    lambda: f64,
    seed_point: &Point,
    rule: StopRule,
) -> Result<GrowthTrace> {
    space.check_point(seed_point)?;
    if !config.window.contains(space, seed_point) {
        return Err(Error::invalid(
            "growth seed point lies outside the sampling window",
        ));
    }
    match rule {
        StopRule::RadiusReached(r) if !(r > 0.0 && r.is_finite()) => {
            return Err(Error::invalid(format!(
                "growth radius must be positive and finite, got {r}"
            )));
        }
        StopRule::CoveredBall { radius, resolution } => {
            check_coverage_params(space, radius, resolution)?;
        }
        _ => {}
    }

    let active = restrict(config, lambda)?;
    let graph = build_intersection_graph(space, config, &active);
    grow_on_graph(space, config, &graph, seed_point, rule)
}

/// Growth over a prebuilt intersection graph (the active set the graph
/// was built from determines what is discoverable).
pub(crate) fn grow_on_graph(
    space: &Space,
    config: &MarkedConfiguration,
    graph: &IntersectionGraph,
    seed_point: &Point,
    rule: StopRule,
) -> Result<GrowthTrace> {
    let rb = space.ball_radius();
    let n = graph.node_count();
    let locations: Vec<Point> = graph
        .active_ids
        .iter()
        .map(|&id| config.points[id].location.clone())
        .collect();

    let mut seen = vec![false; n];
    let mut popped = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    for (local, loc) in locations.iter().enumerate() {
        if space.distance_unchecked(loc, seed_point) <= rb {
            seen[local] = true;
            queue.push_back((local, None::<usize>));
        }
    }

    // The coverage rule probes net points against discovered grains; an
    // index over all active centers keeps each probe logarithmic.
    let coverage_index = match rule {
        StopRule::CoveredBall { .. } if !queue.is_empty() => {
            Some(MetricIndex::build(space, &locations))
        }
        _ => None,
    };
    let mut pending: Vec<PendingCoverage> = Vec::new();

    let mut discovered = Vec::new();
    let mut parents = Vec::new();
    while let Some((local, parent)) = queue.pop_front() {
        popped[local] = true;
        discovered.push(graph.active_ids[local]);
        parents.push(parent);

        match rule {
            StopRule::Exhaust => {}
            StopRule::RadiusReached(r) => {
                if space.distance_unchecked(seed_point, &locations[local]) >= r {
                    return Ok(GrowthTrace {
                        seed: seed_point.clone(),
                        discovered,
                        parents,
                        stop_reason: StopReason::RadiusReached(r),
                    });
                }
            }
            StopRule::CoveredBall { radius, resolution } => {
                if let Some(center) = advance_coverage(
                    space,
                    coverage_index.as_ref().unwrap(),
                    &locations,
                    &popped,
                    &mut pending,
                    local,
                    radius,
                    resolution,
                )? {
                    return Ok(GrowthTrace {
                        seed: seed_point.clone(),
                        discovered,
                        parents,
                        stop_reason: StopReason::CoveredBallFound { center, radius },
                    });
                }
            }
        }

        let here = graph.active_ids[local];
        for &next in graph.neighbors(local) {
            if !seen[next as usize] {
                seen[next as usize] = true;
                queue.push_back((next as usize, Some(here)));
            }
        }
    }

    Ok(GrowthTrace {
        seed: seed_point.clone(),
        discovered,
        parents,
        stop_reason: StopReason::Exhausted,
    })
}

/// Update coverage state after grain `new_local` joins the discovered
/// set: rescan any pending center whose blocking probe the new grain
/// reaches, then start a scan for the new center itself. Returns the
/// first center whose ball is fully certified.
#[allow(clippy::too_many_arguments)]
fn advance_coverage(
    space: &Space,
    index: &MetricIndex,
    locations: &[Point],
    popped: &[bool],
    pending: &mut Vec<PendingCoverage>,
    new_local: usize,
    radius: f64,
    resolution: f64,
) -> Result<Option<Point>> {
    let reach = space.ball_radius() - resolution;
    let new_loc = &locations[new_local];
    for entry in pending.iter_mut() {
        if space.distance_unchecked(new_loc, &entry.probe) > reach {
            continue;
        }
        match scan_net(
            space,
            index,
            popped,
            &locations[entry.local],
            radius,
            resolution,
            entry.probe_index,
        )? {
            ScanOutcome::Covered => return Ok(Some(locations[entry.local].clone())),
            ScanOutcome::Blocked { probe_index, probe } => {
                entry.probe_index = probe_index;
                entry.probe = probe;
            }
        }
    }
    match scan_net(space, index, popped, new_loc, radius, resolution, 0)? {
        ScanOutcome::Covered => Ok(Some(new_loc.clone())),
        ScanOutcome::Blocked { probe_index, probe } => {
            pending.push(PendingCoverage {
                local: new_local,
                probe_index,
                probe,
            });
            Ok(None)
        }
    }
}

enum ScanOutcome {
    Covered,
    Blocked { probe_index: usize, probe: Point },
}

/// Walk the covering net of `S(center, radius)` from `start` looking for
/// a probe no discovered grain reaches. Probes before `start` are known
/// covered; the discovered set only grows, so they stay covered.
fn scan_net(
    space: &Space,
    index: &MetricIndex,
    popped: &[bool],
    center: &Point,
    radius: f64,
    resolution: f64,
    start: usize,
) -> Result<ScanOutcome> {
    let reach = space.ball_radius() - resolution;
    let net = covering_net(space, center, radius, resolution)?;
    for (i, probe) in net.iter().enumerate().skip(start) {
        if !index.any_within(probe, reach, |local| popped[local as usize]) {
            return Ok(ScanOutcome::Blocked {
                probe_index: i,
                probe: probe.clone(),
            });
        }
    }
    Ok(ScanOutcome::Covered)
}

fn check_coverage_params(space: &Space, radius: f64, resolution: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "coverage ball radius must be positive and finite, got {radius}"
        )));
    }
    if !(resolution > 0.0 && resolution < space.ball_radius()) {
        return Err(Error::invalid(format!(
            "coverage resolution must lie in (0, ball_radius), got {resolution}"
        )));
    }
    Ok(())
}

/// Whether the grains centered at `members` cover the ball of the given
/// radius around `center`. Certification is net-based as described on
/// [`StopRule::CoveredBall`]: `true` is rigorous, `false` means the net
/// with this resolution could not certify coverage.
pub fn ball_covered_by_cluster(
    space: &Space,
    members: &[Point],
    center: &Point,
    radius: f64,
    resolution: f64,
) -> Result<bool> {
    check_coverage_params(space, radius, resolution)?;
    space.check_point(center)?;
    if members.is_empty() {
        return Ok(false);
    }
    let index = MetricIndex::build(space, members);
    let all = vec![true; members.len()];
    Ok(matches!(
        scan_net(space, &index, &all, center, radius, resolution, 0)?,
        ScanOutcome::Covered
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::tests::planar_config;

    #[test]
    fn exhaustive_growth_visits_component_in_bfs_order() {
        // Chain 0-1-2 with a branch 1-3; id 4 isolated. The seed point is
        // covered only by grain 0.
        let (space, config, _) = planar_config(&[
            [0.0, 0.0],
            [1.5, 0.0],
            [3.0, 0.0],
            [1.5, 1.5],
            [50.0, 0.0],
        ]);
        let seed = Point::euclidean(&[-0.5, 0.0]);
        let trace = grow_component(&space, &config, 1.0, &seed, StopRule::Exhaust).unwrap();
        assert_eq!(trace.stop_reason, StopReason::Exhausted);
        assert_eq!(trace.discovered, vec![0, 1, 2, 3]);
        assert_eq!(trace.parents, vec![None, Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn uncovered_seed_point_gives_empty_trace() {
        let (space, config, _) = planar_config(&[[0.0, 0.0]]);
        let seed = Point::euclidean(&[10.0, 0.0]);
        let trace = grow_component(&space, &config, 1.0, &seed, StopRule::Exhaust).unwrap();
        assert!(trace.discovered.is_empty());
        assert_eq!(trace.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn multiple_covering_grains_all_seed_the_search() {
        // Both grains cover the origin; they are mutual sources.
        let (space, config, _) = planar_config(&[[0.6, 0.0], [-0.6, 0.0]]);
        let seed = Point::euclidean(&[0.0, 0.0]);
        let trace = grow_component(&space, &config, 1.0, &seed, StopRule::Exhaust).unwrap();
        assert_eq!(trace.discovered, vec![0, 1]);
        assert_eq!(trace.parents, vec![None, None]);
    }

    #[test]
    fn radius_rule_stops_at_first_far_center() {
        let (space, config, _) = planar_config(&[
            [0.0, 0.0],
            [1.9, 0.0],
            [3.8, 0.0],
            [5.7, 0.0],
            [7.6, 0.0],
        ]);
        let seed = Point::euclidean(&[0.0, 0.0]);
        let trace =
            grow_component(&space, &config, 1.0, &seed, StopRule::RadiusReached(3.0)).unwrap();
        assert_eq!(trace.stop_reason, StopReason::RadiusReached(3.0));
        assert_eq!(trace.discovered, vec![0, 1, 2]);
        // Frontier bound: nothing beyond the stop radius plus one grain
        // diameter can enter the trace.
        for &id in &trace.discovered {
            let d = space.distance_unchecked(&seed, &config.points[id].location);
            assert!(d <= 3.0 + 2.0 * space.ball_radius());
        }
        let trace =
            grow_component(&space, &config, 1.0, &seed, StopRule::RadiusReached(100.0)).unwrap();
        assert_eq!(trace.stop_reason, StopReason::Exhausted);
        assert_eq!(trace.discovered.len(), 5);
    }

    #[test]
    fn growth_rejects_bad_arguments() {
        let (space, config, _) = planar_config(&[[0.0, 0.0]]);
        let outside = Point::euclidean(&[200.0, 0.0]);
        assert!(grow_component(&space, &config, 1.0, &outside, StopRule::Exhaust).is_err());
        let seed = Point::euclidean(&[0.0, 0.0]);
        assert!(
            grow_component(&space, &config, 1.0, &seed, StopRule::RadiusReached(0.0)).is_err()
        );
        let bad = StopRule::CoveredBall {
            radius: 2.0,
            resolution: 1.5,
        };
        assert!(grow_component(&space, &config, 1.0, &seed, bad).is_err());
        // Restriction level above the coupling ceiling.
        assert!(grow_component(&space, &config, 2.0, &seed, StopRule::Exhaust).is_err());
    }

    /// Square grid of grain centers with the given spacing covering
    /// [-extent, extent]^2, optionally with a hole punched around `gap`.
    fn grid_locs(extent: f64, spacing: f64, gap: Option<[f64; 2]>) -> Vec<[f64; 2]> {
        let k = (extent / spacing).round() as i64;
        let mut out = Vec::new();
        for i in -k..=k {
            for j in -k..=k {
                let p = [i as f64 * spacing, j as f64 * spacing];
                if let Some(g) = gap {
                    let d2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
                    if d2 < 1.0 {
                        continue;
                    }
                }
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn dense_grid_yields_a_covered_ball() {
        let (space, config, _) = planar_config(&grid_locs(6.0, 0.5, None));
        let seed = Point::euclidean(&[0.0, 0.0]);
        let rule = StopRule::CoveredBall {
            radius: 2.0,
            resolution: 0.1,
        };
        let trace = grow_component(&space, &config, 1.0, &seed, rule).unwrap();
        let witness = match &trace.stop_reason {
            StopReason::CoveredBallFound { center, radius } => {
                assert_eq!(*radius, 2.0);
                center.clone()
            }
            other => panic!("expected a covered ball, got {other:?}"),
        };
        // The direct check agrees on the reported member set and witness.
        let members: Vec<Point> = trace
            .discovered
            .iter()
            .map(|&id| config.points[id].location.clone())
            .collect();
        assert!(ball_covered_by_cluster(&space, &members, &witness, 2.0, 0.1).unwrap());
    }

    #[test]
    fn hole_in_the_grid_defeats_coverage() {
        let locs = grid_locs(4.0, 0.5, Some([1.5, 0.0]));
        let (space, config, _) = planar_config(&locs);
        let members: Vec<Point> = config.points.iter().map(|p| p.location.clone()).collect();
        // The ball centered on the hole has probes there that sit farther
        // than the certification reach from every remaining grain.
        let on_hole = Point::euclidean(&[1.5, 0.0]);
        assert!(!ball_covered_by_cluster(&space, &members, &on_hole, 1.5, 0.02).unwrap());
        // Away from the hole the same parameters certify.
        let safe = Point::euclidean(&[-2.0, 0.0]);
        assert!(ball_covered_by_cluster(&space, &members, &safe, 1.5, 0.02).unwrap());
    }

    #[test]
    fn single_grain_covers_a_concentric_half_ball() {
        let (space, config, _) = planar_config(&[[0.0, 0.0]]);
        let members = vec![config.points[0].location.clone()];
        let center = Point::euclidean(&[0.0, 0.0]);
        assert!(ball_covered_by_cluster(&space, &members, &center, 0.5, 0.1).unwrap());
        assert!(!ball_covered_by_cluster(&space, &members, &center, 0.95, 0.1).unwrap());
    }

    #[test]
    fn coverage_check_handles_empty_members() {
        let space = crate::geometry::Space::euclidean(2).unwrap();
        let center = Point::euclidean(&[0.0, 0.0]);
        assert!(!ball_covered_by_cluster(&space, &[], &center, 1.0, 0.1).unwrap());
    }
}
