//! Vantage-point tree over an arbitrary exact metric.
//!
//! Works unchanged on every space the crate supports because it only ever
//! calls the metric. Radius queries return exactly the same id set as a
//! linear scan: pruning bounds carry a small additive slack
//! (`VP_PRUNE_SLACK`), which can only make the search visit more nodes,
//! and membership is always decided by a direct distance test.

use super::{Point, Space};
use crate::tolerances::VP_PRUNE_SLACK;

/// Below this subtree size a linear scan beats further recursion.
const LEAF_SIZE: usize = 8;

struct Node {
    /// Index into `items` of the vantage point for this subtree.
    vantage: u32,
    /// Median distance from the vantage point to the rest of the subtree.
    /// Near half: `d <= threshold`; far half: `d >= threshold`.
    threshold: f64,
    /// items[range] of the near and far halves.
    near: (u32, u32),
    far: (u32, u32),
    /// Child node indices (u32::MAX for leaf ranges).
    near_child: u32,
    far_child: u32,
}

/// Metric index over a fixed point set. Query results are ids into the
/// point slice the index was built from, sorted ascending.
pub struct MetricIndex {
    space: Space,
    items: Vec<(Point, u32)>,
    nodes: Vec<Node>,
    root: u32,
}

const NO_NODE: u32 = u32::MAX;

impl MetricIndex {
    /// Build an index over `points`; ids are positions in the slice.
    pub fn build(space: &Space, points: &[Point]) -> MetricIndex {
        let mut items: Vec<(Point, u32)> = points
            .iter()
            .cloned()
            .zip(0..points.len() as u32)
            .collect();
        let mut nodes = Vec::new();
        let n = items.len();
        let root = build_range(space, &mut items, &mut nodes, 0, n);
        MetricIndex {
            space: *space,
            items,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Ids of all indexed points within the closed ball `d(center, .) <= radius`.
    pub fn query(&self, center: &Point, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        if !self.items.is_empty() {
            self.search(self.root, (0, self.items.len() as u32), center, radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Whether any indexed point accepted by `filter` lies within the
    /// closed ball. Early-exits on the first hit.
    pub fn any_within(
        &self,
        center: &Point,
        radius: f64,
        filter: impl Fn(u32) -> bool + Copy,
    ) -> bool {
        if self.items.is_empty() {
            return false;
        }
        self.search_any(self.root, (0, self.items.len() as u32), center, radius, filter)
    }

    fn search(&self, node: u32, range: (u32, u32), center: &Point, radius: f64, out: &mut Vec<u32>) {
        if node == NO_NODE {
            for (p, id) in &self.items[range.0 as usize..range.1 as usize] {
                if self.space.distance_unchecked(center, p) <= radius {
                    out.push(*id);
                }
            }
            return;
        }
        let nd = &self.nodes[node as usize];
        let (vp, vid) = &self.items[nd.vantage as usize];
        let d = self.space.distance_unchecked(center, vp);
        if d <= radius {
            out.push(*vid);
        }
        if d - radius <= nd.threshold + VP_PRUNE_SLACK {
            self.search(nd.near_child, nd.near, center, radius, out);
        }
        if d + radius >= nd.threshold - VP_PRUNE_SLACK {
            self.search(nd.far_child, nd.far, center, radius, out);
        }
    }

    fn search_any(
        &self,
        node: u32,
        range: (u32, u32),
        center: &Point,
        radius: f64,
        filter: impl Fn(u32) -> bool + Copy,
    ) -> bool {
        if node == NO_NODE {
            return self.items[range.0 as usize..range.1 as usize]
                .iter()
                .any(|(p, id)| {
                    filter(*id) && self.space.distance_unchecked(center, p) <= radius
                });
        }
        let nd = &self.nodes[node as usize];
        let (vp, vid) = &self.items[nd.vantage as usize];
        let d = self.space.distance_unchecked(center, vp);
        if d <= radius && filter(*vid) {
            return true;
        }
        if d - radius <= nd.threshold + VP_PRUNE_SLACK
            && self.search_any(nd.near_child, nd.near, center, radius, filter)
        {
            return true;
        }
        if d + radius >= nd.threshold - VP_PRUNE_SLACK
            && self.search_any(nd.far_child, nd.far, center, radius, filter)
        {
            return true;
        }
        false
    }
}

/// Recursively lay out `items[lo..hi)`. The vantage point is the first
/// element of the range; the remainder is partitioned around the median
/// distance to it. Returns the node index, or `NO_NODE` for leaf ranges
/// (which the caller scans linearly over the original range).
fn build_range(
    space: &Space,
    items: &mut [(Point, u32)],
    nodes: &mut Vec<Node>,
    lo: usize,
    hi: usize,
) -> u32 {
    if hi - lo <= LEAF_SIZE {
        return NO_NODE;
    }
    let vantage = lo;
    let rest_lo = lo + 1;
    let mid = rest_lo + (hi - rest_lo) / 2;
    let vp = items[vantage].0.clone();
    items[rest_lo..hi].select_nth_unstable_by(mid - rest_lo, |a, b| {
        let da = space.distance_unchecked(&vp, &a.0);
        let db = space.distance_unchecked(&vp, &b.0);
        da.partial_cmp(&db).expect("distances are finite")
    });
    let threshold = space.distance_unchecked(&vp, &items[mid].0);
    let idx = nodes.len() as u32;
    nodes.push(Node {
        vantage: vantage as u32,
        threshold,
        near: (rest_lo as u32, mid as u32),
        far: (mid as u32, hi as u32),
        near_child: NO_NODE,
        far_child: NO_NODE,
    });
    let near_child = build_range(space, items, nodes, rest_lo, mid);
    let far_child = build_range(space, items, nodes, mid, hi);
    nodes[idx as usize].near_child = near_child;
    nodes[idx as usize].far_child = far_child;
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SpaceKind, Window};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(space: &Space, points: &[Point], center: &Point, radius: f64) -> Vec<u32> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| space.distance_unchecked(center, p) <= radius)
            .map(|(i, _)| i as u32)
            .collect()
    }

    #[test]
    fn radius_queries_match_linear_scan_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for space in [
            Space::euclidean(2).unwrap(),
            Space::euclidean(3).unwrap(),
            Space::hyperbolic2(),
            Space::h2xr(),
        ] {
            let window: Window = match space.kind() {
                SpaceKind::H2xR => Window::cylinder(3.0, 3.0),
                SpaceKind::Euclidean(n) => {
                    Window::ball(Point::euclidean(&vec![0.0; n]), 4.0)
                }
                _ => Window::ball(space.origin(), 4.0),
            };
            for trial in 0..20 {
                let n = 1 + (trial * 37) % 400;
                let points: Vec<Point> = (0..n)
                    .map(|_| window.sample_uniform(&space, &mut rng).unwrap())
                    .collect();
                let index = MetricIndex::build(&space, &points);
                for _ in 0..25 {
                    let center = window.sample_uniform(&space, &mut rng).unwrap();
                    let radius = rng.gen_range(0.0..3.0);
                    let got = index.query(&center, radius);
                    let want = brute_force(&space, &points, &center, radius);
                    assert_eq!(got, want);
                    let hit = index.any_within(&center, radius, |_| true);
                    assert_eq!(hit, !want.is_empty());
                }
            }
        }
    }

    #[test]
    fn zero_radius_query_finds_the_point_itself() {
        let space = Space::euclidean(2).unwrap();
        let points = vec![
            Point::euclidean(&[0.0, 0.0]),
            Point::euclidean(&[1.0, 0.0]),
            Point::euclidean(&[0.0, 1.0]),
        ];
        let index = MetricIndex::build(&space, &points);
        assert_eq!(index.query(&points[1], 0.0), vec![1]);
    }

    #[test]
    fn empty_index_returns_nothing() {
        let space = Space::euclidean(2).unwrap();
        let index = MetricIndex::build(&space, &[]);
        assert!(index.query(&Point::euclidean(&[0.0, 0.0]), 10.0).is_empty());
        assert!(!index.any_within(&Point::euclidean(&[0.0, 0.0]), 10.0, |_| true));
    }

    #[test]
    fn duplicate_points_are_all_reported() {
        let space = Space::euclidean(2).unwrap();
        let p = Point::euclidean(&[0.5, 0.5]);
        let points = vec![p.clone(); 20];
        let index = MetricIndex::build(&space, &points);
        assert_eq!(index.query(&p, 0.0).len(), 20);
    }

    #[test]
    fn filtered_existence_respects_the_filter() {
        let space = Space::euclidean(2).unwrap();
        let points: Vec<Point> = (0..50)
            .map(|i| Point::euclidean(&[i as f64, 0.0]))
            .collect();
        let index = MetricIndex::build(&space, &points);
        let center = Point::euclidean(&[0.0, 0.0]);
        assert!(index.any_within(&center, 3.0, |_| true));
        assert!(!index.any_within(&center, 3.0, |id| id > 10));
    }
}
