//! Mark-ordered activation over one coupled configuration.
//!
//! A configuration sampled at the coupling ceiling contains every lower
//! intensity as the subset of points with small enough marks. Activating
//! points in mark order and maintaining union-find components therefore
//! replays the whole intensity sweep in a single pass: each monotone
//! event (a spanning cluster appears, two regions join one cluster) has
//! a critical mark, and the number of spanning clusters can be read off
//! at any intensity on the way up.
//!
//! Per-component summaries live at union-find roots and only ever grow
//! under merges, so event flags are sticky and the per-sample
//! monotonicity that common-random-number sweeps rely on is exact.

use smallvec::SmallVec;

use crate::clusters::SpanningBands;
use crate::error::{Error, Result};
use crate::geometry::{MetricIndex, Point, Space, SpaceKind, Window};
use crate::pointprocess::MarkedConfiguration;
use crate::union_find::DisjointSet;

/// Per-component aggregate, valid at union-find roots.
#[derive(Clone, Copy)]
struct RootStats {
    min_center: f64,
    max_center: f64,
    min_height: f64,
    max_height: f64,
    /// Bitset over the flattened region list: bit r set when some member
    /// grain intersects region r.
    regions: u64,
}

impl RootStats {
    fn merge(a: RootStats, b: RootStats) -> RootStats {
        RootStats {
            min_center: a.min_center.min(b.min_center),
            max_center: a.max_center.max(b.max_center),
            min_height: a.min_height.min(b.min_height),
            max_height: a.max_height.max(b.max_height),
            regions: a.regions | b.regions,
        }
    }
}

/// Replay of one configuration from intensity 0 up to its ceiling.
pub(crate) struct ActivationSweep<'a> {
    space: Space,
    config: &'a MarkedConfiguration,
    center: Point,
    bands: SpanningBands,
    vertical: bool,
    regions: Vec<Window>,
    pair_count: usize,
    order: Vec<u32>,
    next: usize,
    index: MetricIndex,
    ds: DisjointSet,
    active: Vec<bool>,
    stats: Vec<RootStats>,
    spanning_count: usize,
    crossing_at: Option<f64>,
    pair_at: Vec<Option<f64>>,
}

impl<'a> ActivationSweep<'a> {
    /// Set up a replay. `pairs` lists region pairs whose joint-connection
    /// marks should be recorded. Spanning uses `bands` against the window
    /// center (vertically, against the height extremes, on the product
    /// space).
    pub(crate) fn new(
        space: &Space,
        config: &'a MarkedConfiguration,
        bands: SpanningBands,
        pairs: &[(Window, Window)],
    ) -> Result<Self> {
        if pairs.len() > 32 {
            return Err(Error::invalid(format!(
                "at most 32 region pairs per sweep, got {}",
                pairs.len()
            )));
        }
        let mut regions = Vec::with_capacity(pairs.len() * 2);
        for (a, b) in pairs {
            a.validate_region(space)?;
            b.validate_region(space)?;
            regions.push(a.clone());
            regions.push(b.clone());
        }
        let locations: Vec<Point> = config.points.iter().map(|p| p.location.clone()).collect();
        let index = MetricIndex::build(space, &locations);
        let mut order: Vec<u32> = (0..config.points.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            let (ma, mb) = (config.points[a as usize].mark, config.points[b as usize].mark);
            ma.partial_cmp(&mb).unwrap().then(a.cmp(&b))
        });
        let n = config.points.len();
        let blank = RootStats {
            min_center: f64::INFINITY,
            max_center: f64::NEG_INFINITY,
            min_height: f64::INFINITY,
            max_height: f64::NEG_INFINITY,
            regions: 0,
        };
        Ok(ActivationSweep {
            space: *space,
            config,
            center: config.window.center(space),
            bands,
            vertical: space.kind() == SpaceKind::H2xR,
            regions,
            pair_count: pairs.len(),
            order,
            next: 0,
            index,
            ds: DisjointSet::new(n),
            active: vec![false; n],
            stats: vec![blank; n],
            spanning_count: 0,
            crossing_at: None,
            pair_at: vec![None; pairs.len()],
        })
    }

    fn is_spanning(&self, s: &RootStats) -> bool {
        let rb = self.space.ball_radius();
        if self.vertical {
            s.min_height <= -(self.bands.r_outer - rb) && s.max_height >= self.bands.r_outer - rb
        } else {
            s.min_center <= self.bands.r_inner + rb && s.max_center >= self.bands.r_outer - rb
        }
    }

    /// Activate the next point by mark order; returns its mark, or `None`
    /// when the ceiling has been reached.
    pub(crate) fn activate_next(&mut self) -> Option<f64> {
        if self.next >= self.order.len() {
            return None;
        }
        let i = self.order[self.next] as usize;
        self.next += 1;
        let point = &self.config.points[i];
        let mark = point.mark;
        self.active[i] = true;

        let rb = self.space.ball_radius();
        let d_center = self.space.distance_unchecked(&self.center, &point.location);
        let mut acc = RootStats {
            min_center: d_center,
            max_center: d_center,
            min_height: if self.vertical {
                point.location.height()
            } else {
                0.0
            },
            max_height: if self.vertical {
                point.location.height()
            } else {
                0.0
            },
            regions: 0,
        };
        for (r, region) in self.regions.iter().enumerate() {
            if region.distance_to(&self.space, &point.location) <= rb {
                acc.regions |= 1 << r;
            }
        }

        let neighbors: SmallVec<[u32; 16]> =
            SmallVec::from_vec(self.index.query(&point.location, 2.0 * rb));
        let mut root = self.ds.find(i as u32);
        let mut removed = 0usize;
        for &j in &neighbors {
            if j as usize == i || !self.active[j as usize] {
                continue;
            }
            let other = self.ds.find(j);
            if other == root {
                continue;
            }
            if self.is_spanning(&self.stats[other as usize]) {
                removed += 1;
            }
            acc = RootStats::merge(acc, self.stats[other as usize]);
            root = self
                .ds
                .union(root, other)
                .expect("roots were distinct before union");
        }
        self.stats[root as usize] = acc;
        let now_spanning = self.is_spanning(&acc);
        self.spanning_count = self.spanning_count - removed + usize::from(now_spanning);
        if self.crossing_at.is_none() && self.spanning_count > 0 {
            self.crossing_at = Some(mark);
        }
        for p in 0..self.pair_count {
            if self.pair_at[p].is_none() {
                let both = 0b11u64 << (2 * p);
                if acc.regions & both == both {
                    self.pair_at[p] = Some(mark);
                }
            }
        }
        Some(mark)
    }

    /// Activate every point with mark at most `lambda`.
    pub(crate) fn advance_to(&mut self, lambda: f64) {
        while self.next < self.order.len()
            && self.config.points[self.order[self.next] as usize].mark <= lambda
        {
            self.activate_next();
        }
    }

    /// Activate everything up to the coupling ceiling.
    pub(crate) fn run_to_end(&mut self) {
        while self.activate_next().is_some() {}
    }

    /// Number of spanning components among currently active points.
    pub(crate) fn spanning_count(&self) -> usize {
        self.spanning_count
    }

    /// First mark at which a spanning component existed.
    pub(crate) fn crossing_at(&self) -> Option<f64> {
        self.crossing_at
    }

    /// First mark at which pair `p`'s regions were joined by one component.
    pub(crate) fn pair_at(&self, p: usize) -> Option<f64> {
        self.pair_at[p]
    }

    /// Whether every watched event has already fired (useful for early
    /// exit when snapshots are not needed).
    pub(crate) fn all_events_fired(&self) -> bool {
        self.crossing_at.is_some() && self.pair_at.iter().all(|p| p.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::{build_intersection_graph, label_clusters, spanning_clusters};
    use crate::pointprocess::{restrict, sample_configuration};

    #[test]
    fn snapshot_spanning_counts_match_full_relabeling() {
        let space = Space::euclidean(2).unwrap();
        let window = Window::ball(space.origin(), 14.0);
        let bands = SpanningBands {
            r_inner: 2.0,
            r_outer: 12.0,
        };
        for seed in 0..25 {
            let config = sample_configuration(&space, &window, 1.0, seed).unwrap();
            let mut sweep = ActivationSweep::new(&space, &config, bands, &[]).unwrap();
            for lambda in [0.2, 0.4, 0.6, 0.8, 1.0] {
                sweep.advance_to(lambda);
                let active = restrict(&config, lambda).unwrap();
                let graph = build_intersection_graph(&space, &config, &active);
                let labeling = label_clusters(&space, &config, &graph);
                let expected = spanning_clusters(&space, &labeling, bands).len();
                assert_eq!(
                    sweep.spanning_count(),
                    expected,
                    "seed {seed} lambda {lambda}"
                );
            }
        }
    }

    #[test]
    fn crossing_mark_is_the_exact_onset() {
        let space = Space::euclidean(2).unwrap();
        let window = Window::ball(space.origin(), 12.0);
        let bands = SpanningBands {
            r_inner: 2.0,
            r_outer: 10.0,
        };
        let mut fired = 0;
        for seed in 100..130 {
            let config = sample_configuration(&space, &window, 1.2, seed).unwrap();
            let mut sweep = ActivationSweep::new(&space, &config, bands, &[]).unwrap();
            sweep.run_to_end();
            let Some(crit) = sweep.crossing_at() else {
                continue;
            };
            fired += 1;
            let spanning_at = |lambda: f64| {
                let active = restrict(&config, lambda).unwrap();
                let graph = build_intersection_graph(&space, &config, &active);
                let labeling = label_clusters(&space, &config, &graph);
                spanning_clusters(&space, &labeling, bands).len()
            };
            assert!(spanning_at(crit) >= 1);
            // Just below the critical mark no cluster spans: marks are
            // distinct, so back off to the largest smaller mark.
            let below = config
                .points
                .iter()
                .map(|p| p.mark)
                .filter(|&m| m < crit)
                .fold(0.0f64, f64::max);
            assert_eq!(spanning_at(below), 0);
        }
        assert!(fired >= 20, "only {fired} of 30 dense trials spanned");
    }

    #[test]
    fn pair_connection_fires_at_a_hand_checkable_mark() {
        use crate::pointprocess::{MarkedConfiguration, MarkedPoint};
        let space = Space::euclidean(2).unwrap();
        let window = Window::ball(space.origin(), 20.0);
        // Chain bridging the two regions; the last-activated link (mark
        // 0.7) completes it. An always-on decoy sits far away.
        let locs_marks = [
            ([-6.0, 0.0], 0.1),
            ([-4.2, 0.0], 0.3),
            ([-2.4, 0.0], 0.7),
            ([-0.6, 0.0], 0.2),
            ([1.2, 0.0], 0.4),
            ([3.0, 0.0], 0.1),
            ([5.0, 8.0], 0.05),
        ];
        let config = MarkedConfiguration {
            space,
            window: window.clone(),
            lambda_max: 1.0,
            seed: 0,
            points: locs_marks
                .iter()
                .map(|(c, m)| MarkedPoint {
                    location: Point::euclidean(c),
                    mark: *m,
                })
                .collect(),
        };
        let region_a = Window::ball(Point::euclidean(&[-7.0, 0.0]), 0.5);
        let region_b = Window::ball(Point::euclidean(&[4.0, 0.0]), 0.5);
        let bands = SpanningBands {
            r_inner: 1.0,
            r_outer: 100.0,
        };
        let mut sweep =
            ActivationSweep::new(&space, &config, bands, &[(region_a, region_b)]).unwrap();
        sweep.run_to_end();
        assert_eq!(sweep.pair_at(0), Some(0.7));
    }

    #[test]
    fn vertical_spanning_uses_height_extremes() {
        use crate::pointprocess::{MarkedConfiguration, MarkedPoint};
        let space = Space::h2xr();
        let window = Window::cylinder(4.0, 6.0);
        // A vertical stack pierces both height extremes once its middle
        // link (mark 0.9) activates.
        let heights_marks = [
            (-5.5, 0.2),
            (-3.7, 0.3),
            (-1.9, 0.4),
            (-0.1, 0.9),
            (1.7, 0.5),
            (3.5, 0.6),
            (5.3, 0.7),
        ];
        let config = MarkedConfiguration {
            space,
            window,
            lambda_max: 1.0,
            seed: 0,
            points: heights_marks
                .iter()
                .map(|(h, m)| MarkedPoint {
                    location: Point::h2xr(0.0, 0.0, *h),
                    mark: *m,
                })
                .collect(),
        };
        let bands = SpanningBands {
            r_inner: 1.0,
            r_outer: 6.0,
        };
        let mut sweep = ActivationSweep::new(&space, &config, bands, &[]).unwrap();
        sweep.advance_to(0.8);
        assert_eq!(sweep.spanning_count(), 0);
        sweep.advance_to(1.0);
        assert_eq!(sweep.spanning_count(), 1);
        assert_eq!(sweep.crossing_at(), Some(0.9));
    }
}
