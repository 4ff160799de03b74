//! Alternating point/path state chain for one trajectory.

use serde::{Deserialize, Serialize};

use crate::crf::{Chain, Mask};
use crate::error::{Error, LatticeSite, Result};
use crate::network::{enumerate_paths, Path, Projection, RoadNetwork, SegmentId};
use crate::trajectory::{GroundTruth, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Initial candidate search radius in meters.
    pub radius: f64,
    /// Escalation ceiling for the radius.
    pub max_radius: f64,
    pub max_point_states: usize,
    /// Cap on paths per (start, end) candidate pair.
    pub max_paths: usize,
    /// Multiplier on `Δt · v_max` for the path length budget.
    pub slack: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            radius: 50.0,
            max_radius: 200.0,
            max_point_states: 8,
            max_paths: 10,
            slack: 1.5,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.max_radius >= self.radius) {
            return Err(Error::Argument(format!(
                "lattice radius must be positive and at most max_radius, got {} and {}",
                self.radius, self.max_radius
            )));
        }
        if !(self.slack >= 1.0) {
            return Err(Error::Argument(format!(
                "lattice slack must be >= 1, got {}",
                self.slack
            )));
        }
        if self.max_point_states == 0 || self.max_paths == 0 {
            return Err(Error::Argument(
                "lattice state caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub segment: SegmentId,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointStateSet {
    pub t: usize,
    pub states: Vec<PointState>,
    /// Radius at which the candidates were found.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStateSet {
    /// Gap between observations `t` and `t + 1`.
    pub t: usize,
    pub states: Vec<Path>,
}

/// Node `2t` holds the candidates of observation `t`; node `2t + 1` the paths of gap `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    trajectory_id: String,
    points: Vec<PointStateSet>,
    paths: Vec<PathStateSet>,
    chain: Chain,
}

impl Lattice {
    pub fn trajectory_id(&self) -> &str {
        &self.trajectory_id
    }

    pub fn points(&self) -> &[PointStateSet] {
        &self.points
    }

    pub fn paths(&self) -> &[PathStateSet] {
        &self.paths
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn num_nodes(&self) -> usize {
        self.chain.len()
    }

    /// Observations whose candidates needed a radius beyond the initial one.
    pub fn escalated(&self, cfg: &LatticeConfig) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| p.radius > cfg.radius)
            .map(|p| p.t)
            .collect()
    }
}

fn candidates(
    net: &RoadNetwork,
    traj: &Trajectory,
    t: usize,
    cfg: &LatticeConfig,
) -> Result<PointStateSet> {
    let p = traj.observations()[t].position;
    let mut radius = cfg.radius;
    loop {
        let found = net.nearby_segments(&p, radius);
        if !found.is_empty() {
            let states = found
                .into_iter()
                .take(cfg.max_point_states)
                .map(|(seg, projection)| PointState {
                    segment: seg.id,
                    projection,
                })
                .collect();
            return Ok(PointStateSet { t, states, radius });
        }
        if radius >= cfg.max_radius {
            return Err(Error::LatticeConstruction {
                trajectory: traj.id().to_string(),
                site: LatticeSite::Observation(t),
            });
        }
        radius = (radius * 2.0).min(cfg.max_radius);
    }
}

/// Builds the pruned lattice for `traj`.
///
/// The path length budget of gap `t` is `Δt · v_max · slack` plus the lengths
/// of the two end segments, since path lengths count those in full.
pub fn build_lattice(net: &RoadNetwork, traj: &Trajectory, cfg: &LatticeConfig) -> Result<Lattice> {
    cfg.validate()?;
    let n = traj.len();
    let obs = traj.observations();
    let mut points = (0..n)
        .map(|t| candidates(net, traj, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let v_max = net.max_speed_limit();
    let mut paths = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        let dt = obs[t + 1].timestamp - obs[t].timestamp;
        let reach = dt * v_max * cfg.slack;
        let mut states = Vec::new();
        for a in &points[t].states {
            let la = net.segments()[a.segment.index()].length;
            for b in &points[t + 1].states {
                let lb = net.segments()[b.segment.index()].length;
                let max_length = if a.segment == b.segment {
                    reach + la
                } else {
                    reach + la + lb
                };
                states.extend(enumerate_paths(
                    net,
                    a.segment,
                    b.segment,
                    max_length,
                    cfg.max_paths,
                )?);
            }
        }
        if states.is_empty() {
            return Err(Error::LatticeConstruction {
                trajectory: traj.id().to_string(),
                site: LatticeSite::Gap(t),
            });
        }
        paths.push(PathStateSet { t, states });
    }
    prune(&mut points, &mut paths);
    for t in 0..n {
        let site = if points[t].states.is_empty() {
            Some(LatticeSite::Observation(t))
        } else if t + 1 < n && paths[t].states.is_empty() {
            Some(LatticeSite::Gap(t))
        } else {
            None
        };
        if let Some(site) = site {
            return Err(Error::LatticeConstruction {
                trajectory: traj.id().to_string(),
                site,
            });
        }
    }
    let mut counts = Vec::with_capacity(2 * n - 1);
    let mut masks = Vec::with_capacity(2 * n - 2);
    for t in 0..n {
        counts.push(points[t].states.len());
        if t + 1 < n {
            let (here, gap, next) = (&points[t].states, &paths[t].states, &points[t + 1].states);
            counts.push(gap.len());
            masks.push(Mask::from_fn(here.len(), gap.len(), |i, j| {
                gap[j].start_segment() == here[i].segment
            }));
            masks.push(Mask::from_fn(gap.len(), next.len(), |j, k| {
                gap[j].end_segment() == next[k].segment
            }));
        }
    }
    Ok(Lattice {
        trajectory_id: traj.id().to_string(),
        points,
        paths,
        chain: Chain::new(counts, masks)?,
    })
}

/// Keeps only states lying on some complete compatible sequence.
fn prune(points: &mut [PointStateSet], paths: &mut [PathStateSet]) {
    let n = points.len();
    // forward reachability
    let mut fwd_pt: Vec<Vec<bool>> = points.iter().map(|p| vec![false; p.states.len()]).collect();
    let mut fwd_path: Vec<Vec<bool>> = paths.iter().map(|p| vec![false; p.states.len()]).collect();
    fwd_pt[0].fill(true);
    for t in 0..n - 1 {
        for (j, path) in paths[t].states.iter().enumerate() {
            fwd_path[t][j] = points[t]
                .states
                .iter()
                .zip(&fwd_pt[t])
                .any(|(s, &ok)| ok && s.segment == path.start_segment());
        }
        for (k, s) in points[t + 1].states.iter().enumerate() {
            fwd_pt[t + 1][k] = paths[t]
                .states
                .iter()
                .zip(&fwd_path[t])
                .any(|(p, &ok)| ok && p.end_segment() == s.segment);
        }
    }
    // backward reachability
    let mut bwd_pt: Vec<Vec<bool>> = points.iter().map(|p| vec![false; p.states.len()]).collect();
    let mut bwd_path: Vec<Vec<bool>> = paths.iter().map(|p| vec![false; p.states.len()]).collect();
    bwd_pt[n - 1].fill(true);
    for t in (0..n - 1).rev() {
        for (j, path) in paths[t].states.iter().enumerate() {
            bwd_path[t][j] = points[t + 1]
                .states
                .iter()
                .zip(&bwd_pt[t + 1])
                .any(|(s, &ok)| ok && s.segment == path.end_segment());
        }
        for (i, s) in points[t].states.iter().enumerate() {
            bwd_pt[t][i] = paths[t]
                .states
                .iter()
                .zip(&bwd_path[t])
                .any(|(p, &ok)| ok && p.start_segment() == s.segment);
        }
    }
    for t in 0..n {
        let keep: Vec<bool> = fwd_pt[t]
            .iter()
            .zip(&bwd_pt[t])
            .map(|(a, b)| *a && *b)
            .collect();
        let mut it = keep.iter();
        points[t]
            .states
            .retain(|_| *it.next().expect("same length"));
    }
    for t in 0..n - 1 {
        let keep: Vec<bool> = fwd_path[t]
            .iter()
            .zip(&bwd_path[t])
            .map(|(a, b)| *a && *b)
            .collect();
        let mut it = keep.iter();
        paths[t].states.retain(|_| *it.next().expect("same length"));
    }
}

/// Index of the true state at every node, or the first node whose truth is missing.
pub fn label_lattice(lattice: &Lattice, truth: &GroundTruth) -> Result<Vec<usize>> {
    let n = lattice.points.len();
    if truth.point_labels.len() != n || truth.path_labels.len() + 1 != n {
        return Err(Error::Argument(format!(
            "truth for trajectory {} does not cover its {n} observations",
            lattice.trajectory_id
        )));
    }
    let unlabelable = |site| Error::Unlabelable {
        trajectory: lattice.trajectory_id.clone(),
        site,
    };
    let mut labels = Vec::with_capacity(2 * n - 1);
    for t in 0..n {
        let i = lattice.points[t]
            .states
            .iter()
            .position(|s| s.segment == truth.point_labels[t])
            .ok_or_else(|| unlabelable(LatticeSite::Observation(t)))?;
        labels.push(i);
        if t + 1 < n {
            let j = lattice.paths[t]
                .states
                .iter()
                .position(|p| p.segment_ids == truth.path_labels[t])
                .ok_or_else(|| unlabelable(LatticeSite::Gap(t)))?;
            labels.push(j);
        }
    }
    debug_assert!(lattice.chain.is_consistent(&labels));
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LocalProjection, Point2};
    use crate::network::RoadSpec;
    use crate::trajectory::GpsObservation;

    fn road(a: (f64, f64), b: (f64, f64)) -> RoadSpec {
        RoadSpec {
            class: "primary".into(),
            speed_limit: 10.0,
            oneway: true,
            polyline: vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)],
        }
    }

    fn traj(points: &[(f64, f64)], dt: f64, truth: Option<GroundTruth>) -> Trajectory {
        let obs = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GpsObservation {
                position: Point2::new(x, y),
                lonlat: [0.0, 0.0],
                timestamp: i as f64 * dt,
                speed: None,
                heading: None,
                in_service: None,
            })
            .collect();
        Trajectory::new("tr", obs, truth).unwrap()
    }

    /// Two eastbound lines 30 m apart with one bottom-to-top connector at x = 100.
    fn ladder(extra: Vec<RoadSpec>) -> RoadNetwork {
        let mut roads = vec![
            road((0.0, 0.0), (100.0, 0.0)),
            road((100.0, 0.0), (200.0, 0.0)),
            road((200.0, 0.0), (300.0, 0.0)),
            road((0.0, 30.0), (100.0, 30.0)),
            road((100.0, 30.0), (200.0, 30.0)),
            road((200.0, 30.0), (300.0, 30.0)),
            road((100.0, 0.0), (100.0, 30.0)),
        ];
        roads.extend(extra);
        RoadNetwork::from_roads(LocalProjection::new(0.0, 0.0), roads).unwrap()
    }

    fn cfg() -> LatticeConfig {
        LatticeConfig {
            radius: 20.0,
            max_radius: 20.0,
            ..LatticeConfig::default()
        }
    }

    #[test]
    fn five_node_alternating_chain() {
        let net = ladder(vec![]);
        let tr = traj(&[(50.0, 15.0), (150.0, 15.0), (250.0, 15.0)], 10.0, None);
        let lat = build_lattice(&net, &tr, &cfg()).unwrap();
        assert_eq!(lat.num_nodes(), 5);
        assert_eq!(lat.chain().state_counts(), &[2, 3, 2, 2, 2]);
        for (t, gap) in lat.paths().iter().enumerate() {
            for p in &gap.states {
                assert!(lat.points()[t]
                    .states
                    .iter()
                    .any(|s| s.segment == p.start_segment()));
                assert!(lat.points()[t + 1]
                    .states
                    .iter()
                    .any(|s| s.segment == p.end_segment()));
            }
        }
    }

    #[test]
    fn single_segment_keeps_stay_path() {
        let net = RoadNetwork::from_roads(
            LocalProjection::new(0.0, 0.0),
            vec![road((0.0, 0.0), (1000.0, 0.0))],
        )
        .unwrap();
        let tr = traj(&[(100.0, 3.0), (300.0, -2.0)], 30.0, None);
        let lat = build_lattice(&net, &tr, &LatticeConfig::default()).unwrap();
        assert_eq!(lat.num_nodes(), 3);
        assert_eq!(lat.paths()[0].states[0].segment_ids, vec![SegmentId(0)]);
    }

    /// Brute-force check that a label sequence exists through each state.
    fn on_some_sequence(chain: &Chain, node: usize, state: usize) -> bool {
        fn rec(chain: &Chain, prefix: &mut Vec<usize>, node: usize, state: usize) -> bool {
            let i = prefix.len();
            if i == chain.len() {
                return prefix[node] == state;
            }
            for s in 0..chain.states(i) {
                if i > 0 && !chain.mask(i - 1).allowed(prefix[i - 1], s) {
                    continue;
                }
                if i == node && s != state {
                    continue;
                }
                prefix.push(s);
                if rec(chain, prefix, node, state) {
                    return true;
                }
                prefix.pop();
            }
            false
        }
        rec(chain, &mut Vec::new(), node, state)
    }

    #[test]
    fn pruning_removes_dead_candidates() {
        // isolated stub near the middle fix
        let net = ladder(vec![road((140.0, 10.0), (160.0, 10.0))]);
        let stub = SegmentId(net.segments().len() as u32 - 1);
        let tr = traj(&[(50.0, 15.0), (150.0, 15.0), (250.0, 15.0)], 10.0, None);
        let lat = build_lattice(&net, &tr, &cfg()).unwrap();
        assert!(lat.points()[1].states.iter().all(|s| s.segment != stub));
        for node in 0..lat.num_nodes() {
            for s in 0..lat.chain().states(node) {
                assert!(
                    on_some_sequence(lat.chain(), node, s),
                    "node {node} state {s}"
                );
            }
        }
        assert_eq!(lat.chain().count_sequences(), 3.0);
    }

    #[test]
    fn construction_errors_name_the_site() {
        let net = ladder(vec![]);
        let far = traj(&[(50.0, 15.0), (150.0, 500.0)], 10.0, None);
        match build_lattice(&net, &far, &cfg()) {
            Err(Error::LatticeConstruction { site, .. }) => {
                assert_eq!(site, LatticeSite::Observation(1))
            }
            other => panic!("unexpected {other:?}"),
        }
        // westward travel on one-way roads has no path
        let back = traj(&[(250.0, 15.0), (50.0, 15.0)], 10.0, None);
        match build_lattice(&net, &back, &cfg()) {
            Err(Error::LatticeConstruction { site, .. }) => assert_eq!(site, LatticeSite::Gap(0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn radius_escalates_up_to_the_ceiling() {
        let net = ladder(vec![]);
        let tr = traj(&[(50.0, 15.0), (150.0, 75.0)], 10.0, None);
        let cfg = LatticeConfig {
            radius: 20.0,
            max_radius: 80.0,
            ..LatticeConfig::default()
        };
        let lat = build_lattice(&net, &tr, &cfg).unwrap();
        assert_eq!(lat.points()[1].radius, 80.0);
        assert_eq!(lat.escalated(&cfg), vec![1]);
    }

    #[test]
    fn labels_and_unlabelable_gap() {
        let net = ladder(vec![]);
        let s = |i: u32| SegmentId(i);
        let truth = GroundTruth {
            point_labels: vec![s(0), s(4), s(5)],
            path_labels: vec![vec![s(0), s(6), s(4)], vec![s(4), s(5)]],
        };
        let pts = [(50.0, 15.0), (150.0, 15.0), (250.0, 15.0)];
        let tr = traj(&pts, 10.0, Some(truth.clone()));
        let lat = build_lattice(&net, &tr, &cfg()).unwrap();
        let labels = label_lattice(&lat, &truth).unwrap();
        assert!(lat.chain().is_consistent(&labels));
        let mut wrong = truth.clone();
        wrong.path_labels[0] = vec![s(0), s(1), s(4)];
        match label_lattice(&lat, &wrong) {
            Err(Error::Unlabelable { site, .. }) => assert_eq!(site, LatticeSite::Gap(0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let net = ladder(vec![]);
        let tr = traj(&[(50.0, 15.0), (150.0, 15.0), (250.0, 15.0)], 10.0, None);
        assert_eq!(
            build_lattice(&net, &tr, &cfg()).unwrap(),
            build_lattice(&net, &tr, &cfg()).unwrap()
        );
    }
}
