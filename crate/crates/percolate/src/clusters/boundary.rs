//! Boundary connections between two clusters.
//!
//! A pair (x1, x2) with x1 in cluster A and x2 in cluster B is a
//! boundary connection when either d(x1, x2) < 2*ball_radius + 2
//! (strictly), or some chain of active points outside both clusters has
//! successively overlapping grains, starts within that threshold of x1,
//! and ends within it of x2. Every such chain stays inside a single
//! outside cluster, so chain detection reduces to: some third cluster has
//! a member near x1 and a member near x2.
//!
//! A detected connection can always be repaired into a single component
//! by at most two extra grains placed on geodesics across the gaps;
//! [`merge_via_boundary_connection`] performs the construction and
//! re-labels to verify it.

use crate::error::{Error, Result};
use crate::geometry::{MetricIndex, Point, Space};
use crate::pointprocess::{restrict, MarkedConfiguration, MarkedPoint};

use super::{build_intersection_graph, label_clusters, ClusterLabeling};

/// One boundary-connection pair. `chain_ends`, when present, holds the
/// outside-cluster points nearest to `x1` and to `x2` through which the
/// pair is linked; `None` means the direct distance condition holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryConnection {
    pub x1: usize,
    pub x2: usize,
    pub chain_ends: Option<(usize, usize)>,
}

/// Gap threshold below which (strictly) two centers count as close for
/// the boundary-connection definition.
fn gap_threshold(space: &Space) -> f64 {
    2.0 * space.ball_radius() + 2.0
}

/// Per-endpoint view of what lies within the gap threshold: members of
/// the opposite cluster, and for each reachable outside cluster its
/// nearest member.
struct EndInfo {
    direct: Vec<usize>,
    via: Vec<(usize, usize)>,
}

fn end_info(
    space: &Space,
    config: &MarkedConfiguration,
    labeling: &ClusterLabeling,
    index: &MetricIndex,
    x: usize,
    own_label: usize,
    other_label: usize,
) -> EndInfo {
    let threshold = gap_threshold(space);
    let loc = &config.points[x].location;
    let mut direct = Vec::new();
    let mut nearest: std::collections::BTreeMap<usize, (f64, usize)> =
        std::collections::BTreeMap::new();
    for local in index.query(loc, threshold) {
        let id = labeling.active_ids[local as usize];
        let d = space.distance_unchecked(loc, &config.points[id].location);
        if d >= threshold {
            continue; // the definition is strict; the index query is closed
        }
        let label = labeling
            .label_of_id(id)
            .expect("active point must be labeled");
        if label == own_label {
            continue;
        }
        if label == other_label {
            direct.push(id);
        } else {
            let entry = nearest.entry(label).or_insert((f64::INFINITY, id));
            if d < entry.0 {
                *entry = (d, id);
            }
        }
    }
    direct.sort_unstable();
    EndInfo {
        direct,
        via: nearest.into_iter().map(|(label, (_, id))| (label, id)).collect(),
    }
}

/// All boundary connections between the clusters labeled `label_a` and
/// `label_b` in an existing labeling. Pairs are ordered (member of A,
/// member of B) and listed ascending.
pub fn find_boundary_connections_in_labeling(
    space: &Space,
    config: &MarkedConfiguration,
    labeling: &ClusterLabeling,
    label_a: usize,
    label_b: usize,
) -> Result<Vec<BoundaryConnection>> {
    if label_a == label_b {
        return Err(Error::invalid(format!(
            "boundary connections need two distinct clusters, got {label_a} twice"
        )));
    }
    let cluster_a = labeling
        .cluster(label_a)
        .ok_or_else(|| Error::invalid(format!("no cluster labeled {label_a}")))?;
    let cluster_b = labeling
        .cluster(label_b)
        .ok_or_else(|| Error::invalid(format!("no cluster labeled {label_b}")))?;

    let locations: Vec<Point> = labeling
        .active_ids
        .iter()
        .map(|&id| config.points[id].location.clone())
        .collect();
    let index = MetricIndex::build(space, &locations);

    let info_a: Vec<(usize, EndInfo)> = cluster_a
        .members
        .iter()
        .map(|&x| (x, end_info(space, config, labeling, &index, x, label_a, label_b)))
        .collect();
    let info_b: Vec<(usize, EndInfo)> = cluster_b
        .members
        .iter()
        .map(|&x| (x, end_info(space, config, labeling, &index, x, label_b, label_a)))
        .collect();

    let mut out = Vec::new();
    for (x1, i1) in &info_a {
        for (x2, i2) in &info_b {
            if i1.direct.binary_search(x2).is_ok() {
                out.push(BoundaryConnection {
                    x1: *x1,
                    x2: *x2,
                    chain_ends: None,
                });
            } else if let Some(ends) = shared_via(&i1.via, &i2.via) {
                out.push(BoundaryConnection {
                    x1: *x1,
                    x2: *x2,
                    chain_ends: Some(ends),
                });
            }
        }
    }
    Ok(out)
}

/// First outside cluster reachable from both ends (both lists are sorted
/// by label); returns the nearest chain endpoints on each side.
fn shared_via(a: &[(usize, usize)], b: &[(usize, usize)]) -> Option<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return Some((a[i].1, b[j].1)),
        }
    }
    None
}

/// Boundary connections between two clusters of the configuration
/// restricted to `lambda`. Labels refer to the labeling at that level.
pub fn find_boundary_connections(
    space: &Space,
    config: &MarkedConfiguration,
    lambda: f64,
    label_a: usize,
    label_b: usize,
) -> Result<Vec<BoundaryConnection>> {
    let active = restrict(config, lambda)?;
    let graph = build_intersection_graph(space, config, &active);
    let labeling = label_clusters(space, config, &graph);
    find_boundary_connections_in_labeling(space, config, &labeling, label_a, label_b)
}

/// Number of unordered boundary-connection pairs between two clusters.
pub fn count_boundary_connections(
    space: &Space,
    config: &MarkedConfiguration,
    lambda: f64,
    label_a: usize,
    label_b: usize,
) -> Result<usize> {
    Ok(find_boundary_connections(space, config, lambda, label_a, label_b)?.len())
}

/// Outcome of repairing a boundary connection: the grains added and the
/// labeling of the augmented configuration, in which both original
/// clusters share `merged_label`.
pub struct MergeVerification {
    pub bridges: Vec<Point>,
    pub labeling: ClusterLabeling,
    pub merged_label: usize,
}

/// Bridge grains for one gap between centers `p` and `q`: none if the
/// grains already overlap, a geodesic midpoint if one extra grain closes
/// the gap, two geodesic third-points if two do.
fn bridges_for_gap(space: &Space, p: &Point, q: &Point) -> Result<Vec<Point>> {
    let rb = space.ball_radius();
    let d = space.distance_unchecked(p, q);
    if d <= 2.0 * rb {
        Ok(Vec::new())
    } else if d <= 4.0 * rb {
        Ok(vec![space.midpoint(p, q)?])
    } else if d <= 6.0 * rb {
        Ok(vec![
            space.geodesic_point(p, q, 1.0 / 3.0)?,
            space.geodesic_point(p, q, 2.0 / 3.0)?,
        ])
    } else {
        Err(Error::InternalInvariant(format!(
            "gap of length {d} cannot be bridged by two grains of radius {rb}"
        )))
    }
}

/// Add at most two bridge grains across the gap(s) of a detected
/// boundary connection and verify, by re-labeling the augmented
/// configuration, that the two clusters become one component.
pub fn merge_via_boundary_connection(
    space: &Space,
    config: &MarkedConfiguration,
    lambda: f64,
    connection: &BoundaryConnection,
) -> Result<MergeVerification> {
    let active = restrict(config, lambda)?;
    let graph = build_intersection_graph(space, config, &active);
    let labeling = label_clusters(space, config, &graph);
    let label_of = |id: usize| -> Result<usize> {
        labeling
            .label_of_id(id)
            .ok_or_else(|| Error::invalid(format!("point {id} is not active at lambda {lambda}")))
    };
    let label1 = label_of(connection.x1)?;
    let label2 = label_of(connection.x2)?;
    if label1 == label2 {
        return Err(Error::invalid(format!(
            "points {} and {} already share cluster {label1}",
            connection.x1, connection.x2
        )));
    }

    let loc = |id: usize| &config.points[id].location;
    let mut bridges = Vec::new();
    match connection.chain_ends {
        None => {
            bridges.extend(bridges_for_gap(space, loc(connection.x1), loc(connection.x2))?);
        }
        Some((y1, y2)) => {
            let ly1 = label_of(y1)?;
            let ly2 = label_of(y2)?;
            if ly1 != ly2 || ly1 == label1 || ly1 == label2 {
                return Err(Error::invalid(format!(
                    "chain ends {y1} and {y2} must share an outside cluster"
                )));
            }
            bridges.extend(bridges_for_gap(space, loc(connection.x1), loc(y1))?);
            bridges.extend(bridges_for_gap(space, loc(connection.x2), loc(y2))?);
        }
    }
    if bridges.len() > 2 {
        return Err(Error::InternalInvariant(format!(
            "merge construction produced {} bridge grains, expected at most two",
            bridges.len()
        )));
    }

    let mut augmented = config.clone();
    for bridge in &bridges {
        augmented.points.push(MarkedPoint {
            location: bridge.clone(),
            mark: lambda,
        });
    }
    let aug_active = restrict(&augmented, lambda)?;
    let aug_graph = build_intersection_graph(space, &augmented, &aug_active);
    let aug_labeling = label_clusters(space, &augmented, &aug_graph);
    let m1 = aug_labeling.label_of_id(connection.x1);
    let m2 = aug_labeling.label_of_id(connection.x2);
    match (m1, m2) {
        (Some(a), Some(b)) if a == b => Ok(MergeVerification {
            bridges,
            labeling: aug_labeling,
            merged_label: a,
        }),
        _ => Err(Error::InternalInvariant(format!(
            "bridged clusters {label1} and {label2} still separate after augmentation"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::tests::planar_config;
    use crate::geometry::SpaceKind;

    #[test]
    fn direct_pair_under_threshold_counts_once() {
        let (space, config, _) = planar_config(&[[0.0, 0.0], [3.9, 0.0]]);
        let found = find_boundary_connections(&space, &config, 1.0, 0, 1).unwrap();
        assert_eq!(
            found,
            vec![BoundaryConnection {
                x1: 0,
                x2: 1,
                chain_ends: None
            }]
        );
        assert_eq!(count_boundary_connections(&space, &config, 1.0, 0, 1).unwrap(), 1);
    }

    #[test]
    fn threshold_is_strict() {
        let (space, config, _) = planar_config(&[[0.0, 0.0], [4.0, 0.0]]);
        assert_eq!(count_boundary_connections(&space, &config, 1.0, 0, 1).unwrap(), 0);
    }

    #[test]
    fn chain_through_outside_cluster_connects() {
        // A = {0}, outside cluster {1, 2} (overlapping grains), B = {3}.
        let (space, config, _) =
            planar_config(&[[0.0, 0.0], [3.5, 0.0], [5.0, 0.0], [8.5, 0.0]]);
        let found = find_boundary_connections(&space, &config, 1.0, 0, 3).unwrap();
        assert_eq!(
            found,
            vec![BoundaryConnection {
                x1: 0,
                x2: 3,
                chain_ends: Some((1, 2))
            }]
        );
    }

    #[test]
    fn chain_may_not_pass_through_either_cluster() {
        // A = {0, 1} is one cluster; its far member is 5.5 away from B,
        // and there is no outside point, so no connection exists even
        // though hopping through A's own member would reach B.
        let (space, config, _) = planar_config(&[[0.0, 0.0], [2.0, 0.0], [7.5, 0.0]]);
        assert_eq!(count_boundary_connections(&space, &config, 1.0, 0, 2).unwrap(), 0);
        // An outside singleton in the gap restores exactly one pair:
        // x1 = 1 reaches it, x1 = 0 is too far (4.5 >= 4).
        let (space, config, _) =
            planar_config(&[[0.0, 0.0], [2.0, 0.0], [7.5, 0.0], [4.5, 0.0]]);
        let found = find_boundary_connections(&space, &config, 1.0, 0, 2).unwrap();
        assert_eq!(
            found,
            vec![BoundaryConnection {
                x1: 1,
                x2: 2,
                chain_ends: Some((3, 3))
            }]
        );
    }

    #[test]
    fn each_qualifying_pair_counts() {
        // Two members of A both within the threshold of B's single point.
        let (space, config, _) = planar_config(&[[0.0, 0.0], [1.0, 0.0], [3.8, 0.0]]);
        assert_eq!(count_boundary_connections(&space, &config, 1.0, 0, 2).unwrap(), 2);
    }

    #[test]
    fn same_cluster_twice_is_rejected() {
        let (space, config, _) = planar_config(&[[0.0, 0.0], [10.0, 0.0]]);
        assert!(count_boundary_connections(&space, &config, 1.0, 0, 0).is_err());
        assert!(count_boundary_connections(&space, &config, 1.0, 0, 5).is_err());
    }

    #[test]
    fn direct_merge_uses_one_midpoint_grain() {
        let (space, config, _) = planar_config(&[[0.0, 0.0], [3.9, 0.0]]);
        let connection = BoundaryConnection {
            x1: 0,
            x2: 1,
            chain_ends: None,
        };
        let merged = merge_via_boundary_connection(&space, &config, 1.0, &connection).unwrap();
        assert_eq!(merged.bridges.len(), 1);
        assert_eq!(merged.bridges[0].coords(), [1.95, 0.0]);
        assert_eq!(merged.labeling.label_of_id(0), Some(merged.merged_label));
        assert_eq!(merged.labeling.label_of_id(1), Some(merged.merged_label));
    }

    #[test]
    fn chain_merge_uses_one_grain_per_gap() {
        let (space, config, _) =
            planar_config(&[[0.0, 0.0], [3.5, 0.0], [5.0, 0.0], [8.5, 0.0]]);
        let connection = BoundaryConnection {
            x1: 0,
            x2: 3,
            chain_ends: Some((1, 2)),
        };
        let merged = merge_via_boundary_connection(&space, &config, 1.0, &connection).unwrap();
        assert_eq!(merged.bridges.len(), 2);
        let label = merged.merged_label;
        for id in 0..4 {
            assert_eq!(merged.labeling.label_of_id(id), Some(label));
        }
    }

    #[test]
    fn merge_works_on_the_hyperboloid() {
        use crate::geometry::{Space, Window};
        use crate::pointprocess::{MarkedConfiguration, MarkedPoint};
        let space = Space::hyperbolic2();
        let window = Window::ball(space.origin(), 20.0);
        let p = space.axis_point(-1.95);
        let q = space.axis_point(1.95);
        let config = MarkedConfiguration {
            space,
            window,
            lambda_max: 1.0,
            seed: 0,
            points: vec![
                MarkedPoint { location: p, mark: 0.5 },
                MarkedPoint { location: q, mark: 0.5 },
            ],
        };
        assert_eq!(count_boundary_connections(&space, &config, 1.0, 0, 1).unwrap(), 1);
        let connection = BoundaryConnection {
            x1: 0,
            x2: 1,
            chain_ends: None,
        };
        let merged = merge_via_boundary_connection(&space, &config, 1.0, &connection).unwrap();
        assert_eq!(merged.bridges.len(), 1);
        assert_eq!(space.kind(), SpaceKind::Hyperbolic2);
        // The bridging grain sits at the geodesic midpoint: the origin.
        let d = space.distance(&merged.bridges[0], &space.origin()).unwrap();
        assert!(d < 1e-9, "midpoint off origin by {d}");
    }

    #[test]
    fn merging_points_in_one_cluster_is_rejected() {
        let (space, config, _) = planar_config(&[[0.0, 0.0], [1.5, 0.0]]);
        let connection = BoundaryConnection {
            x1: 0,
            x2: 1,
            chain_ends: None,
        };
        assert!(merge_via_boundary_connection(&space, &config, 1.0, &connection).is_err());
    }
}
