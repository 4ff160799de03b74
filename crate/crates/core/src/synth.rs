//! Synthetic grid cities, preference-driven trips and noisy GPS sampling.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_degrees, LocalProjection, Point2};
use crate::network::{segment_bearing, NodeId, RoadNetwork, RoadSpec, SegmentId};
use crate::trajectory::{GpsObservation, GroundTruth, Trajectory};

/// Midnight UTC, 2024-01-01.
pub const DEFAULT_EPOCH: f64 = 1_704_067_200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block spacing in meters.
    pub spacing: f64,
    /// Every `primary_every`-th row and column is `primary`, the rest `residential`.
    pub primary_every: usize,
    /// Speed limit per class in m/s.
    pub speed_limits: BTreeMap<String, f64>,
    /// Maximum per-axis displacement of interior intersections, in meters.
    pub jitter: f64,
    /// Longitude/latitude of the grid center.
    pub origin: [f64; 2],
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            spacing: 300.0,
            primary_every: 3,
            speed_limits: BTreeMap::from([
                ("primary".to_string(), 50.0 / 3.6),
                ("residential".to_string(), 30.0 / 3.6),
            ]),
            jitter: 0.0,
            origin: [121.47, 31.23],
            seed: 1,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Argument(format!(
                "grid needs at least 2x2 intersections, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > 0.0) || !(self.jitter >= 0.0) || self.jitter * 2.0 >= self.spacing {
            return Err(Error::Argument(format!(
                "need spacing > 0 and 0 <= jitter < spacing / 2, got {} and {}",
                self.spacing, self.jitter
            )));
        }
        if self.primary_every == 0 {
            return Err(Error::Argument("primary_every must be at least 1".into()));
        }
        for class in ["primary", "residential"] {
            match self.speed_limits.get(class) {
                Some(v) if *v > 0.0 && v.is_finite() => {}
                _ => {
                    return Err(Error::Argument(format!(
                        "missing or invalid speed limit for class {class}"
                    )))
                }
            }
        }
        Ok(())
    }

    fn class_of(&self, line: usize) -> &'static str {
        if line.is_multiple_of(self.primary_every) {
            "primary"
        } else {
            "residential"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-axis standard deviation of position noise in meters.
    pub gps_sigma: f64,
    pub heading_sigma: f64,
    /// Meters per second.
    pub speed_sigma: f64,
    /// Sampling interval in seconds.
    pub interval: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gps_sigma: 15.0,
            heading_sigma: 10.0,
            speed_sigma: 1.0,
            interval: 10.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.gps_sigma, self.heading_sigma, self.speed_sigma];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Argument(format!(
                "noise sigmas must be >= 0, got {sigmas:?}"
            )));
        }
        if !(self.interval > 0.0) {
            return Err(Error::Argument(format!(
                "sampling interval must be positive, got {}",
                self.interval
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorSpec {
    /// Multiplicative edge-cost factor per class; classes not listed use 1.
    pub class_preference: BTreeMap<String, f64>,
    /// Probability that a trip is driven with a passenger on board.
    pub in_service_probability: f64,
    /// Cruise speed as a fraction of the speed limit.
    pub cruise_fraction: f64,
}

impl Default for BehaviorSpec {
    fn default() -> Self {
        Self {
            class_preference: BTreeMap::from([
                ("primary".to_string(), 0.7),
                ("residential".to_string(), 1.0),
            ]),
            in_service_probability: 0.5,
            cruise_fraction: 0.8,
        }
    }
}

impl BehaviorSpec {
    pub fn validate(&self) -> Result<()> {
        if self
            .class_preference
            .values()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::Argument(
                "class preference weights must be positive".into(),
            ));
        }
        if !(self.cruise_fraction > 0.0 && self.cruise_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "cruise fraction must lie in (0, 1], got {}",
                self.cruise_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.in_service_probability) {
            return Err(Error::Argument(format!(
                "in-service probability must lie in [0, 1], got {}",
                self.in_service_probability
            )));
        }
        Ok(())
    }

    fn factor(&self, class: &str) -> f64 {
        self.class_preference.get(class).copied().unwrap_or(1.0)
    }
}

/// Grid city with two-way roads between neighboring intersections.
pub fn generate_network(spec: &WorldSpec) -> Result<RoadNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pts = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let interior = r > 0 && c > 0 && r + 1 < spec.rows && c + 1 < spec.cols;
            let (dx, dy) = if interior && spec.jitter > 0.0 {
                (
                    rng.random_range(-spec.jitter..=spec.jitter),
                    rng.random_range(-spec.jitter..=spec.jitter),
                )
            } else {
                (0.0, 0.0)
            };
            pts.push(Point2::new(
                c as f64 * spec.spacing + dx,
                r as f64 * spec.spacing + dy,
            ));
        }
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.x).sum::<f64>() / n,
        pts.iter().map(|p| p.y).sum::<f64>() / n,
    );
    for p in &mut pts {
        p.x -= mx;
        p.y -= my;
    }
    let at = |r: usize, c: usize| pts[r * spec.cols + c];
    let road = |class: &str, a: Point2, b: Point2| RoadSpec {
        class: class.to_string(),
        speed_limit: spec.speed_limits[class],
        oneway: false,
        polyline: vec![a, b],
    };
    let mut roads = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols - 1 {
            roads.push(road(spec.class_of(r), at(r, c), at(r, c + 1)));
        }
    }
    for c in 0..spec.cols {
        for r in 0..spec.rows - 1 {
            roads.push(road(spec.class_of(c), at(r, c), at(r + 1, c)));
        }
    }
    RoadNetwork::from_roads(LocalProjection::new(spec.origin[0], spec.origin[1]), roads)
}

/// Vehicle state at one dense time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSample {
    pub time: f64,
    pub position: Point2,
    /// Index into the trip route.
    pub route_index: usize,
    pub offset: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrip {
    pub route: Vec<SegmentId>,
    pub samples: Vec<DenseSample>,
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Least-cost route under `length × class factor`.
pub fn preferred_route(
    net: &RoadNetwork,
    behavior: &BehaviorSpec,
    origin: NodeId,
    dest: NodeId,
) -> Result<Vec<SegmentId>> {
    let factors: Vec<f64> = net
        .class_vocabulary()
        .iter()
        .map(|c| behavior.factor(c))
        .collect();
    let mut dist = vec![f64::INFINITY; net.nodes().len()];
    let mut via: Vec<Option<SegmentId>> = vec![None; net.nodes().len()];
    let mut heap = BinaryHeap::new();
    dist[origin.index()] = 0.0;
    heap.push(Reverse((Cost(0.0), origin)));
    while let Some(Reverse((Cost(d), v))) = heap.pop() {
        if d > dist[v.index()] {
            continue;
        }
        if v == dest {
            break;
        }
        for sid in net.outgoing(v) {
            let s = &net.segments()[sid.index()];
            let nd = d + s.length * factors[s.class.0 as usize];
            if nd < dist[s.to_node.index()] {
                dist[s.to_node.index()] = nd;
                via[s.to_node.index()] = Some(*sid);
                heap.push(Reverse((Cost(nd), s.to_node)));
            }
        }
    }
    if !dist[dest.index()].is_finite() {
        return Err(Error::Generation(format!(
            "node {dest} is unreachable from {origin}"
        )));
    }
    let mut route = Vec::new();
    let mut v = dest;
    while v != origin {
        let sid = via[v.index()].expect("reached nodes have a predecessor");
        route.push(sid);
        v = net.segments()[sid.index()].from_node;
    }
    route.reverse();
    Ok(route)
}

/// Drives the preferred route from `origin` to `dest` at cruise speed,
/// recording the vehicle every second.
pub fn simulate_trip(
    net: &RoadNetwork,
    behavior: &BehaviorSpec,
    origin: NodeId,
    dest: NodeId,
    start_time: f64,
    seed: u64,
) -> Result<SimulatedTrip> {
    behavior.validate()?;
    if origin == dest {
        return Err(Error::Generation(format!(
            "trip origin and destination are both {origin}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_service = rng.random_bool(behavior.in_service_probability);
    let route = preferred_route(net, behavior, origin, dest)?;
    let speeds: Vec<f64> = route
        .iter()
        .map(|s| net.segments()[s.index()].speed_limit * behavior.cruise_fraction)
        .collect();
    let mut ends = Vec::with_capacity(route.len());
    let mut acc = 0.0;
    for (sid, v) in route.iter().zip(&speeds) {
        acc += net.segments()[sid.index()].length / v;
        ends.push(acc);
    }
    let total = acc;
    let mut samples = Vec::new();
    let mut i = 0;
    let mut k = 0u64;
    while (k as f64) <= total {
        let t = k as f64;
        // the later segment owns a shared node
        while i + 1 < route.len() && t >= ends[i] {
            i += 1;
        }
        let seg = &net.segments()[route[i].index()];
        let begin = if i == 0 { 0.0 } else { ends[i - 1] };
        let offset = ((t - begin) * speeds[i]).clamp(0.0, seg.length);
        samples.push(DenseSample {
            time: start_time + t,
            position: seg.point_at(offset),
            route_index: i,
            offset,
            speed: speeds[i],
        });
        k += 1;
    }
    Ok(SimulatedTrip {
        route,
        samples,
        in_service,
    })
}

/// Samples the trip every `noise.interval` seconds and perturbs the fixes.
pub fn synthesize_observations(
    net: &RoadNetwork,
    id: &str,
    trip: &SimulatedTrip,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Trajectory> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sigma: f64| Normal::new(0.0, sigma).expect("validated sigma");
    let (pos_n, head_n, speed_n) = (
        normal(noise.gps_sigma),
        normal(noise.heading_sigma),
        normal(noise.speed_sigma),
    );
    let t0 = trip.samples.first().map(|s| s.time).unwrap_or(0.0);
    let mut picked = Vec::new();
    let mut next = t0;
    for s in &trip.samples {
        if s.time >= next - 1e-9 {
            picked.push(*s);
            next = s.time + noise.interval;
        }
    }
    if picked.len() < 2 {
        return Err(Error::DegenerateTrajectory {
            id: id.to_string(),
            reason: format!(
                "trip yields {} sample(s) at interval {} s",
                picked.len(),
                noise.interval
            ),
        });
    }
    let mut obs = Vec::with_capacity(picked.len());
    for s in &picked {
        let seg = &net.segments()[trip.route[s.route_index].index()];
        let position = Point2::new(
            s.position.x + pos_n.sample(&mut rng),
            s.position.y + pos_n.sample(&mut rng),
        );
        let heading = normalize_degrees(segment_bearing(seg, s.offset)? + head_n.sample(&mut rng));
        let speed = (s.speed + speed_n.sample(&mut rng)).max(0.0);
        obs.push(GpsObservation {
            position,
            lonlat: net.projection().to_lonlat(&position),
            timestamp: s.time,
            speed: Some(speed),
            heading: Some(heading),
            in_service: Some(trip.in_service),
        });
    }
    let truth = GroundTruth {
        point_labels: picked.iter().map(|s| trip.route[s.route_index]).collect(),
        path_labels: picked
            .windows(2)
            .map(|w| trip.route[w[0].route_index..=w[1].route_index].to_vec())
            .collect(),
    };
    Trajectory::new(id, obs, Some(truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripSpec {
    pub count: usize,
    /// Minimum Manhattan distance between origin and destination, in meters.
    pub min_distance: f64,
    /// Trip start times are drawn uniformly from the day beginning here.
    pub epoch: f64,
    pub seed: u64,
}

impl Default for TripSpec {
    fn default() -> Self {
        Self {
            count: 100,
            min_distance: 2_000.0,
            epoch: DEFAULT_EPOCH,
            seed: 42,
        }
    }
}

fn trip_seed(seed: u64, i: usize, stream: u64) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// `trips.count` noisy trajectories with ids `trip-0000`, `trip-0001`, …
pub fn generate_dataset(
    net: &RoadNetwork,
    behavior: &BehaviorSpec,
    noise: &NoiseSpec,
    trips: &TripSpec,
) -> Result<Vec<Trajectory>> {
    behavior.validate()?;
    noise.validate()?;
    let nodes = net.nodes();
    if nodes.len() < 2 {
        return Err(Error::Generation("network has fewer than two nodes".into()));
    }
    let mut out = Vec::with_capacity(trips.count);
    for i in 0..trips.count {
        let mut rng = ChaCha8Rng::seed_from_u64(trip_seed(trips.seed, i, 0));
        let mut pair = None;
        for _ in 0..10_000 {
            let a = rng.random_range(0..nodes.len());
            let b = rng.random_range(0..nodes.len());
            let manhattan = (nodes[a].x - nodes[b].x).abs() + (nodes[a].y - nodes[b].y).abs();
            if a != b && manhattan >= trips.min_distance {
                pair = Some((NodeId(a as u32), NodeId(b as u32)));
                break;
            }
        }
        let (origin, dest) = pair.ok_or_else(|| {
            Error::Generation(format!(
                "no node pair is at least {} m apart",
                trips.min_distance
            ))
        })?;
        let start = trips.epoch + rng.random_range(0..86_400u32) as f64;
        let trip = simulate_trip(
            net,
            behavior,
            origin,
            dest,
            start,
            trip_seed(trips.seed, i, 1),
        )?;
        out.push(synthesize_observations(
            net,
            &format!("trip-{i:04}"),
            &trip,
            noise,
            trip_seed(trips.seed, i, 2),
        )?);
    }
    Ok(out)
}
