//! Directed road graph with segment geometry and a spatial index.

mod geojson;
mod paths;

use std::collections::HashMap;
use std::fmt;

use rstar::{RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bearing, closest_on_segment, LocalProjection, Point2};

pub use self::geojson::{load_network, read_network, save_network, write_network};
pub use self::paths::{enumerate_paths, Path};

/// Road classes accepted by the loader, in canonical order.
pub const ROAD_CLASSES: [&str; 8] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "service",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

impl SegmentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`RoadNetwork::class_vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u16);

/// An undirected or one-way road before it is split into directed segments.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSpec {
    pub class: String,
    /// Meters per second.
    pub speed_limit: f64,
    pub oneway: bool,
    pub polyline: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: SegmentId,
    pub class: ClassId,
    /// Meters per second.
    pub speed_limit: f64,
    pub polyline: Vec<Point2>,
    pub length: f64,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub oneway: bool,
    /// The opposite direction of the same two-way road.
    pub twin: Option<SegmentId>,
    /// Cumulative arc length at each polyline vertex.
    cumulative: Vec<f64>,
}

impl RoadSegment {
    /// Arc length at vertex `i`.
    pub fn vertex_offset(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    /// Point at arc-length `offset`, clamped to the polyline.
    pub fn point_at(&self, offset: f64) -> Point2 {
        let offset = offset.clamp(0.0, self.length);
        let i = self.sub_segment_at(offset);
        let (a, b) = (self.polyline[i], self.polyline[i + 1]);
        let span = self.cumulative[i + 1] - self.cumulative[i];
        if span == 0.0 {
            return a;
        }
        a.lerp(&b, (offset - self.cumulative[i]) / span)
    }

    /// Index of the non-degenerate sub-segment containing `offset`; at an
    /// interior vertex the following sub-segment wins.
    fn sub_segment_at(&self, offset: f64) -> usize {
        let last = self.polyline.len() - 2;
        let mut chosen = None;
        for i in 0..=last {
            if self.cumulative[i + 1] == self.cumulative[i] {
                continue;
            }
            if offset >= self.cumulative[i] {
                chosen = Some(i);
            } else {
                break;
            }
        }
        chosen.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub projected_point: Point2,
    pub distance: f64,
    /// Meters along the segment, in `[0, length]`.
    pub offset: f64,
}

/// Closest point on the segment polyline to `p`.
pub fn project_to_segment(p: &Point2, segment: &RoadSegment) -> Projection {
    let mut best = Projection {
        projected_point: segment.polyline[0],
        distance: f64::INFINITY,
        offset: 0.0,
    };
    for (i, w) in segment.polyline.windows(2).enumerate() {
        let (q, t) = closest_on_segment(p, &w[0], &w[1]);
        let d = p.distance(&q);
        if d < best.distance {
            let span = segment.cumulative[i + 1] - segment.cumulative[i];
            best = Projection {
                projected_point: q,
                distance: d,
                offset: (segment.cumulative[i] + t * span).min(segment.length),
            };
        }
    }
    best
}

/// Bearing of the sub-segment containing `offset`, clockwise from north.
pub fn segment_bearing(segment: &RoadSegment, offset: f64) -> Result<f64> {
    let slack = 1e-9 * segment.length.max(1.0);
    if !(offset >= -slack && offset <= segment.length + slack) {
        return Err(Error::Argument(format!(
            "offset {offset} outside segment {} of length {}",
            segment.id, segment.length
        )));
    }
    let i = segment.sub_segment_at(offset.clamp(0.0, segment.length));
    Ok(bearing(&segment.polyline[i], &segment.polyline[i + 1]))
}

#[derive(Debug, Clone)]
struct SegmentEnvelope {
    id: SegmentId,
    envelope: AABB<[f64; 2]>,
}

impl RTreeObject for SegmentEnvelope {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        self.envelope
    }
}

/// Immutable directed road network.
#[derive(Debug)]
pub struct RoadNetwork {
    segments: Vec<RoadSegment>,
    nodes: Vec<Point2>,
    outgoing: Vec<Vec<SegmentId>>,
    incoming: Vec<Vec<SegmentId>>,
    index: RTree<SegmentEnvelope>,
    class_vocabulary: Vec<String>,
    projection: LocalProjection,
    max_speed_limit: f64,
}

impl RoadNetwork {
    /// Builds a network from roads given in planar meters. Two-way roads become
    /// two directed segments, the reverse one directly after the forward one.
    /// Endpoints closer than a micrometer are merged into one node.
    pub fn from_roads(projection: LocalProjection, roads: Vec<RoadSpec>) -> Result<Self> {
        let mut present = vec![false; ROAD_CLASSES.len()];
        for (i, road) in roads.iter().enumerate() {
            let Some(c) = ROAD_CLASSES.iter().position(|c| *c == road.class) else {
                return Err(Error::Validation(format!(
                    "road {i}: unknown class label {:?}",
                    road.class
                )));
            };
            present[c] = true;
            if !(road.speed_limit.is_finite() && road.speed_limit > 0.0) {
                return Err(Error::Validation(format!(
                    "road {i}: speed limit must be positive, got {}",
                    road.speed_limit
                )));
            }
            if road.polyline.len() < 2 {
                return Err(Error::Validation(format!(
                    "road {i}: polyline needs at least 2 vertices"
                )));
            }
        }
        let class_vocabulary: Vec<String> = ROAD_CLASSES
            .iter()
            .zip(&present)
            .filter(|(_, p)| **p)
            .map(|(c, _)| c.to_string())
            .collect();

        let mut node_keys: HashMap<(i64, i64), NodeId> = HashMap::new();
        let mut nodes = Vec::new();
        let mut node_of = |p: &Point2| -> NodeId {
            let key = ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64);
            *node_keys.entry(key).or_insert_with(|| {
                nodes.push(*p);
                NodeId((nodes.len() - 1) as u32)
            })
        };

        let mut segments = Vec::new();
        for (i, road) in roads.into_iter().enumerate() {
            let class = ClassId(
                class_vocabulary
                    .iter()
                    .position(|c| *c == road.class)
                    .expect("class validated above") as u16,
            );
            let a = node_of(&road.polyline[0]);
            let b = node_of(road.polyline.last().expect("validated"));
            let fwd = make_segment(
                SegmentId(segments.len() as u32),
                class,
                &road,
                road.polyline.clone(),
                a,
                b,
            );
            if fwd.length <= 0.0 {
                return Err(Error::Validation(format!("road {i}: zero length")));
            }
            if road.oneway {
                segments.push(fwd);
            } else {
                let mut rev_line = road.polyline.clone();
                rev_line.reverse();
                let mut fwd = fwd;
                let mut rev = make_segment(SegmentId(fwd.id.0 + 1), class, &road, rev_line, b, a);
                fwd.twin = Some(rev.id);
                rev.twin = Some(fwd.id);
                segments.push(fwd);
                segments.push(rev);
            }
        }

        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for s in &segments {
            outgoing[s.from_node.index()].push(s.id);
            incoming[s.to_node.index()].push(s.id);
        }
        let index = RTree::bulk_load(
            segments
                .iter()
                .map(|s| SegmentEnvelope {
                    id: s.id,
                    envelope: AABB::from_points(
                        s.polyline
                            .iter()
                            .map(|p| [p.x, p.y])
                            .collect::<Vec<_>>()
                            .iter(),
                    ),
                })
                .collect(),
        );
        let max_speed_limit = segments.iter().map(|s| s.speed_limit).fold(0.0, f64::max);
        Ok(Self {
            segments,
            nodes,
            outgoing,
            incoming,
            index,
            class_vocabulary,
            projection,
            max_speed_limit,
        })
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        self.segments.get(id.index())
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Point2 {
        self.nodes[id.index()]
    }

    pub fn outgoing(&self, node: NodeId) -> &[SegmentId] {
        &self.outgoing[node.index()]
    }

    pub fn incoming(&self, node: NodeId) -> &[SegmentId] {
        &self.incoming[node.index()]
    }

    pub fn class_vocabulary(&self) -> &[String] {
        &self.class_vocabulary
    }

    pub fn class_name(&self, class: ClassId) -> &str {
        &self.class_vocabulary[class.0 as usize]
    }

    pub fn projection(&self) -> &LocalProjection {
        &self.projection
    }

    /// Largest speed limit over all segments (0 for an empty network).
    pub fn max_speed_limit(&self) -> f64 {
        self.max_speed_limit
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments within `radius` of `p`, ordered by distance then id.
    pub fn nearby_segments(&self, p: &Point2, radius: f64) -> Vec<(&RoadSegment, Projection)> {
        let query = AABB::from_corners([p.x - radius, p.y - radius], [p.x + radius, p.y + radius]);
        let mut found: Vec<(&RoadSegment, Projection)> = self
            .index
            .locate_in_envelope_intersecting(&query)
            .map(|e| &self.segments[e.id.index()])
            .map(|s| (s, project_to_segment(p, s)))
            .filter(|(_, proj)| proj.distance <= radius)
            .collect();
        found.sort_by(|a, b| {
            a.1.distance
                .total_cmp(&b.1.distance)
                .then(a.0.id.cmp(&b.0.id))
        });
        found
    }
}

fn make_segment(
    id: SegmentId,
    class: ClassId,
    road: &RoadSpec,
    polyline: Vec<Point2>,
    from_node: NodeId,
    to_node: NodeId,
) -> RoadSegment {
    let mut cumulative = Vec::with_capacity(polyline.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in polyline.windows(2) {
        acc += w[0].distance(&w[1]);
        cumulative.push(acc);
    }
    RoadSegment {
        id,
        class,
        speed_limit: road.speed_limit,
        polyline,
        length: acc,
        from_node,
        to_node,
        oneway: road.oneway,
        twin: None,
        cumulative,
    }
}
