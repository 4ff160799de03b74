use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

use super::{ClassId, NodeId, RoadNetwork, SegmentId};

/// A directed sequence of graph-adjacent segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub segment_ids: Vec<SegmentId>,
    /// Sum of the full lengths of every segment, first and last included.
    pub length: f64,
    pub segment_lengths: Vec<f64>,
    pub speed_limits: Vec<f64>,
    pub class_sequence: Vec<ClassId>,
}

impl Path {
    /// Builds a path from segment ids, checking that consecutive segments connect.
    pub fn from_segments(net: &RoadNetwork, ids: &[SegmentId]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Argument("a path needs at least one segment".into()));
        }
        let mut segs = Vec::with_capacity(ids.len());
        for id in ids {
            segs.push(
                net.segment(*id)
                    .ok_or_else(|| Error::Argument(format!("unknown segment id {id}")))?,
            );
        }
        for w in segs.windows(2) {
            if w[0].to_node != w[1].from_node {
                return Err(Error::Argument(format!(
                    "segments {} and {} are not adjacent",
                    w[0].id, w[1].id
                )));
            }
        }
        Ok(Path {
            segment_ids: ids.to_vec(),
            length: segs.iter().map(|s| s.length).sum(),
            segment_lengths: segs.iter().map(|s| s.length).collect(),
            speed_limits: segs.iter().map(|s| s.speed_limit).collect(),
            class_sequence: segs.iter().map(|s| s.class).collect(),
        })
    }

    pub fn start_segment(&self) -> SegmentId {
        self.segment_ids[0]
    }

    pub fn end_segment(&self) -> SegmentId {
        *self.segment_ids.last().expect("paths are non-empty")
    }
}

struct Partial {
    bound: f64,
    traveled: f64,
    seq: Vec<SegmentId>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

/// Shortest distance from every node to `target`, ignoring nodes farther than `budget`.
fn distances_to(net: &RoadNetwork, target: NodeId, budget: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.nodes().len()];
    let mut heap = BinaryHeap::new();
    dist[target.index()] = 0.0;
    heap.push(Reverse((OrdF64(0.0), target)));
    while let Some(Reverse((OrdF64(d), v))) = heap.pop() {
        if d > dist[v.index()] || d > budget {
            continue;
        }
        for sid in net.incoming(v) {
            let s = &net.segments()[sid.index()];
            let nd = d + s.length;
            if nd < dist[s.from_node.index()] && nd <= budget {
                dist[s.from_node.index()] = nd;
                heap.push(Reverse((OrdF64(nd), s.from_node)));
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The `max_paths` shortest simple paths from `from` to `to` no longer than
/// `max_length`, sorted by length and then by segment-id sequence.
///
/// A path never repeats a segment and never reverses onto the twin of the
/// segment it just used. Search is best-first on `traveled + remaining`, where
/// `remaining` is the exact unconstrained distance to the target; with that
/// bound paths complete in the requested order.
pub fn enumerate_paths(
    net: &RoadNetwork,
    from: SegmentId,
    to: SegmentId,
    max_length: f64,
    max_paths: usize,
) -> Result<Vec<Path>> {
    let (Some(src), Some(dst)) = (net.segment(from), net.segment(to)) else {
        return Err(Error::Argument(format!(
            "unknown segment id in path query {from} -> {to}"
        )));
    };
    if !(max_length > 0.0) || max_paths == 0 {
        return Err(Error::Argument(format!(
            "path query needs max_length > 0 and max_paths >= 1, got {max_length} and {max_paths}"
        )));
    }
    let limit = max_length * (1.0 + 1e-12);
    if from == to {
        return Ok(if src.length <= limit {
            vec![Path::from_segments(net, &[from])?]
        } else {
            Vec::new()
        });
    }
    let budget = max_length - src.length - dst.length;
    if budget < 0.0 {
        return Ok(Vec::new());
    }
    let dist = distances_to(net, dst.from_node, budget * (1.0 + 1e-12));
    let remaining = |sid: SegmentId| -> f64 {
        if sid == to {
            0.0
        } else {
            dist[net.segments()[sid.index()].to_node.index()] + dst.length
        }
    };

    let mut heap = BinaryHeap::new();
    let start_bound = src.length + remaining(from);
    if start_bound <= limit {
        heap.push(Reverse(Partial {
            bound: start_bound,
            traveled: src.length,
            seq: vec![from],
        }));
    }
    let mut found = Vec::new();
    while let Some(Reverse(partial)) = heap.pop() {
        let last = *partial.seq.last().expect("non-empty");
        if last == to {
            found.push(partial.seq);
            if found.len() == max_paths {
                break;
            }
            continue;
        }
        let last_seg = &net.segments()[last.index()];
        for next in net.outgoing(last_seg.to_node) {
            if Some(*next) == last_seg.twin || partial.seq.contains(next) {
                continue;
            }
            let traveled = partial.traveled + net.segments()[next.index()].length;
            let bound = traveled + remaining(*next);
            if bound <= limit {
                let mut seq = Vec::with_capacity(partial.seq.len() + 1);
                seq.extend_from_slice(&partial.seq);
                seq.push(*next);
                heap.push(Reverse(Partial {
                    bound,
                    traveled,
                    seq,
                }));
            }
        }
    }
    let mut paths = found
        .iter()
        .map(|seq| Path::from_segments(net, seq))
        .collect::<Result<Vec<_>>>()?;
    paths.sort_by(|a, b| {
        a.length
            .total_cmp(&b.length)
            .then_with(|| a.segment_ids.cmp(&b.segment_ids))
    });
    Ok(paths)
}
