//! Connectivity structure of the occupied region.
//!
//! Two grains overlap exactly when their centers are within twice the
//! grain radius (closed balls, so tangency counts). The intersection graph
//! over active centers is built with a metric index, components are
//! labeled by union-find, and everything downstream (spanning checks,
//! chemical distance, growth, boundary connections) works off those two
//! structures.
//!
//! Identifiers: graph nodes are *local* indices into the active-id list;
//! every public surface that reports clusters uses *global* point ids
//! (indices into the configuration), with each cluster labeled by its
//! smallest member id.

mod boundary;
mod growth;

pub use boundary::{
    count_boundary_connections, find_boundary_connections, merge_via_boundary_connection,
    BoundaryConnection, MergeVerification,
};
pub use growth::{ball_covered_by_cluster, grow_component, GrowthTrace, StopReason, StopRule};

use crate::error::{Error, Result};
use crate::geometry::{MetricIndex, Point, Space, SpaceKind, Window};
use crate::pointprocess::{ActiveSet, MarkedConfiguration};
use crate::union_find::DisjointSet;

/// Grain-overlap graph over the active points. Nodes are local indices
/// into `active_ids`; adjacency lists are sorted and symmetric.
pub struct IntersectionGraph {
    pub active_ids: Vec<usize>,
    adjacency: Vec<Vec<u32>>,
}

impl IntersectionGraph {
    pub fn node_count(&self) -> usize {
        self.active_ids.len()
    }

    pub fn neighbors(&self, local: usize) -> &[u32] {
        &self.adjacency[local]
    }

    pub fn local_of_id(&self, id: usize) -> Option<usize> {
        self.active_ids.binary_search(&id).ok()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }
}

/// Build the grain-overlap graph for the active points of `config`.
pub fn build_intersection_graph(
    space: &Space,
    config: &MarkedConfiguration,
    active: &ActiveSet,
) -> IntersectionGraph {
    let locations: Vec<Point> = active
        .ids
        .iter()
        .map(|&id| config.points[id].location.clone())
        .collect();
    let index = MetricIndex::build(space, &locations);
    let touch = 2.0 * space.ball_radius();
    let adjacency = locations
        .iter()
        .enumerate()
        .map(|(i, loc)| {
            index
                .query(loc, touch)
                .into_iter()
                .filter(|&j| j as usize != i)
                .collect()
        })
        .collect();
    IntersectionGraph {
        active_ids: active.ids.clone(),
        adjacency,
    }
}

/// One connected component of the intersection graph.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Smallest member id; the canonical cluster label.
    pub id: usize,
    /// Global point ids, ascending.
    pub members: Vec<usize>,
    /// Min/max member distance from the window center.
    pub min_center_distance: f64,
    pub max_center_distance: f64,
    /// Min/max member height (product space only).
    pub height_range: Option<(f64, f64)>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Component labeling of an intersection graph: a canonical label per
/// active point plus per-cluster summaries. Clusters are sorted by label.
pub struct ClusterLabeling {
    pub active_ids: Vec<usize>,
    labels: Vec<usize>,
    pub clusters: Vec<Cluster>,
}

impl ClusterLabeling {
    /// Canonical label of the cluster containing the given global id.
    pub fn label_of_id(&self, id: usize) -> Option<usize> {
        self.active_ids
            .binary_search(&id)
            .ok()
            .map(|local| self.labels[local])
    }

    pub fn cluster(&self, label: usize) -> Option<&Cluster> {
        self.clusters
            .binary_search_by_key(&label, |c| c.id)
            .ok()
            .map(|i| &self.clusters[i])
    }
}

/// Label the connected components of `graph`.
pub fn label_clusters(
    space: &Space,
    config: &MarkedConfiguration,
    graph: &IntersectionGraph,
) -> ClusterLabeling {
    let n = graph.node_count();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for &j in graph.neighbors(i) {
            ds.union(i as u32, j);
        }
    }
    // Canonical label per root: the smallest global id in the component.
    let mut canonical = vec![usize::MAX; n];
    for i in 0..n {
        let root = ds.find(i as u32) as usize;
        canonical[root] = canonical[root].min(graph.active_ids[i]);
    }
    let labels: Vec<usize> = (0..n)
        .map(|i| canonical[ds.find(i as u32) as usize])
        .collect();

    let center = config.window.center(space);
    let is_product = space.kind() == SpaceKind::H2xR;
    let mut by_label: std::collections::BTreeMap<usize, Cluster> = std::collections::BTreeMap::new();
    for (local, &label) in labels.iter().enumerate() {
        let id = graph.active_ids[local];
        let loc = &config.points[id].location;
        let d = space.distance_unchecked(&center, loc);
        let entry = by_label.entry(label).or_insert_with(|| Cluster {
            id: label,
            members: Vec::new(),
            min_center_distance: f64::INFINITY,
            max_center_distance: f64::NEG_INFINITY,
            height_range: if is_product {
                Some((f64::INFINITY, f64::NEG_INFINITY))
            } else {
                None
            },
        });
        entry.members.push(id);
        entry.min_center_distance = entry.min_center_distance.min(d);
        entry.max_center_distance = entry.max_center_distance.max(d);
        if let Some((lo, hi)) = &mut entry.height_range {
            let h = loc.height();
            *lo = lo.min(h);
            *hi = hi.max(h);
        }
    }
    let clusters: Vec<Cluster> = by_label.into_values().collect();
    // Members arrive in ascending active order already; keep the invariant
    // explicit anyway.
    debug_assert!(clusters
        .iter()
        .all(|c| c.members.windows(2).all(|w| w[0] < w[1])));
    ClusterLabeling {
        active_ids: graph.active_ids.clone(),
        labels,
        clusters,
    }
}

/// Inner/outer bands for the finite-window "unbounded cluster" proxy.
///
/// In a ball window a cluster is *spanning* when it intersects the inner
/// ball `S(center, r_inner)` and reaches the complement of
/// `S(center, r_outer)`. In a cylinder window the proxy is vertical: the
/// cluster must touch both height extremes `|h| >= r_outer`.
#[derive(Clone, Copy, Debug)]
pub struct SpanningBands {
    pub r_inner: f64,
    pub r_outer: f64,
}

/// Whether a cluster spans the window bands; see [`SpanningBands`].
/// A ball of radius `ball_radius` intersects a region when its center is
/// within `ball_radius` of it, hence the additive slack on each side.
pub fn cluster_is_spanning(space: &Space, cluster: &Cluster, bands: SpanningBands) -> bool {
    let rb = space.ball_radius();
    match cluster.height_range {
        Some((min_h, max_h)) => min_h <= -(bands.r_outer - rb) && max_h >= bands.r_outer - rb,
        None => {
            cluster.min_center_distance <= bands.r_inner + rb
                && cluster.max_center_distance >= bands.r_outer - rb
        }
    }
}

/// Clusters satisfying the spanning proxy, in label order.
pub fn spanning_clusters<'a>(
    space: &Space,
    labeling: &'a ClusterLabeling,
    bands: SpanningBands,
) -> Vec<&'a Cluster> {
    let space = *space;
    labeling
        .clusters
        .iter()
        .filter(move |c| cluster_is_spanning(&space, c, bands))
        .collect()
}

/// Whether some single cluster has a grain intersecting `region_a` and a
/// grain intersecting `region_b`, using a precomputed labeling.
pub fn connects_in_labeling(
    space: &Space,
    config: &MarkedConfiguration,
    labeling: &ClusterLabeling,
    region_a: &Window,
    region_b: &Window,
) -> bool {
    let rb = space.ball_radius();
    for cluster in &labeling.clusters {
        let mut touches_a = false;
        let mut touches_b = false;
        for &id in &cluster.members {
            let loc = &config.points[id].location;
            if !touches_a && region_a.distance_to(space, loc) <= rb {
                touches_a = true;
            }
            if !touches_b && region_b.distance_to(space, loc) <= rb {
                touches_b = true;
            }
            if touches_a && touches_b {
                return true;
            }
        }
    }
    false
}

/// Whether the occupied region at `active` connects the two query regions.
/// Builds the graph and labeling internally; for sweeps, prefer building
/// the labeling once and calling [`connects_in_labeling`].
pub fn connects(
    space: &Space,
    config: &MarkedConfiguration,
    active: &ActiveSet,
    region_a: &Window,
    region_b: &Window,
) -> Result<bool> {
    region_a.validate_region(space)?;
    region_b.validate_region(space)?;
    let graph = build_intersection_graph(space, config, active);
    let labeling = label_clusters(space, config, &graph);
    Ok(connects_in_labeling(space, config, &labeling, region_a, region_b))
}

/// Chemical distance between two locations through the occupied region:
/// the minimum number of grains in a chain of successively overlapping
/// grains whose first grain covers `p` and whose last covers `q`.
/// `None` when either point is uncovered or they lie in different
/// clusters. A single grain covering both gives 1.
pub fn chemical_distance(
    space: &Space,
    config: &MarkedConfiguration,
    graph: &IntersectionGraph,
    p: &Point,
    q: &Point,
) -> Result<Option<u32>> {
    space.check_point(p)?;
    space.check_point(q)?;
    let rb = space.ball_radius();
    let n = graph.node_count();
    let covering = |target: &Point| -> Vec<u32> {
        (0..n)
            .filter(|&i| {
                let loc = &config.points[graph.active_ids[i]].location;
                space.distance_unchecked(loc, target) <= rb
            })
            .map(|i| i as u32)
            .collect()
    };
    let sources = covering(p);
    if sources.is_empty() {
        return Ok(None);
    }
    let targets = covering(q);
    if targets.is_empty() {
        return Ok(None);
    }
    let mut is_target = vec![false; n];
    for &t in &targets {
        is_target[t as usize] = true;
    }
    // Multi-source BFS counting grains (sources are at chain length 1).
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for &s in &sources {
        if dist[s as usize] == u32::MAX {
            dist[s as usize] = 1;
            if is_target[s as usize] {
                return Ok(Some(1));
            }
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        let next = dist[i as usize] + 1;
        for &j in graph.neighbors(i as usize) {
            if dist[j as usize] == u32::MAX {
                dist[j as usize] = next;
                if is_target[j as usize] {
                    return Ok(Some(next));
                }
                queue.push_back(j);
            }
        }
    }
    Ok(None)
}

/// Cluster dump: one `point_id,cluster_id` row per active point.
pub fn labeling_csv(labeling: &ClusterLabeling) -> String {
    let mut out = String::from("point_id,cluster_id\n");
    for (local, &id) in labeling.active_ids.iter().enumerate() {
        out.push_str(&format!("{id},{}\n", labeling.labels[local]));
    }
    out
}

/// Growth trace dump: one `step,point_id,discovered_from` row per
/// discovery, in discovery order; seed grains have no origin.
pub fn growth_trace_csv(trace: &GrowthTrace) -> String {
    let mut out = String::from("step,point_id,discovered_from\n");
    for (step, (&id, parent)) in trace.discovered.iter().zip(&trace.parents).enumerate() {
        match parent {
            Some(from) => out.push_str(&format!("{step},{id},{from}\n")),
            None => out.push_str(&format!("{step},{id},\n")),
        }
    }
    out
}

/// Map each cluster at the lower intensity to the unique cluster at the
/// higher intensity containing it. Errors if any lower cluster straddles
/// two higher clusters, which would break the coupling refinement
/// invariant (that is a bug, not a data-dependent outcome).
pub fn refinement_map(
    lower: &ClusterLabeling,
    higher: &ClusterLabeling,
) -> Result<std::collections::BTreeMap<usize, usize>> {
    let mut map = std::collections::BTreeMap::new();
    for cluster in &lower.clusters {
        let mut target: Option<usize> = None;
        for &id in &cluster.members {
            let label = higher.label_of_id(id).ok_or_else(|| {
                Error::InternalInvariant(format!(
                    "point {id} active at the lower intensity but not the higher"
                ))
            })?;
            match target {
                None => target = Some(label),
                Some(t) if t == label => {}
                Some(t) => {
                    return Err(Error::InternalInvariant(format!(
                        "cluster {} splits across higher-intensity clusters {t} and {label}",
                        cluster.id
                    )))
                }
            }
        }
        if let Some(t) = target {
            map.insert(cluster.id, t);
        }
    }
    Ok(map)
}
