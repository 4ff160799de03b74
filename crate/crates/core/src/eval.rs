//! Error rates against ground truth and feature-selection reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::features::{FeatureRegistry, NodeKind};
use crate::network::{RoadNetwork, SegmentId};
use crate::scalar::Scalar;
use crate::trajectory::{join_paths, GroundTruth};

/// Decoded labels of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedTrajectory {
    pub trajectory_id: String,
    pub point_segments: Vec<SegmentId>,
    pub path_segments: Vec<Vec<SegmentId>>,
    pub log_probability: Option<f64>,
    /// Truth was supplied and lies outside the lattice.
    #[serde(default)]
    pub unlabelable: bool,
    /// Lattice construction or decoding failed; no labels were produced.
    #[serde(default)]
    pub failure: Option<String>,
}

impl MatchedTrajectory {
    pub fn failed(trajectory_id: &str, reason: String) -> Self {
        Self {
            trajectory_id: trajectory_id.to_string(),
            point_segments: Vec::new(),
            path_segments: Vec::new(),
            log_probability: None,
            unlabelable: false,
            failure: Some(reason),
        }
    }

    /// The full decoded route as one segment sequence.
    pub fn route(&self) -> Vec<SegmentId> {
        if self.path_segments.is_empty() {
            self.point_segments.first().copied().into_iter().collect()
        } else {
            join_paths(&self.path_segments)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEval {
    pub trajectory_id: String,
    pub point_nodes: usize,
    pub point_errors: usize,
    pub path_nodes: usize,
    pub path_errors: usize,
    pub unlabelable: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub point_error_rate: f64,
    pub path_error_rate: f64,
    pub point_nodes: usize,
    pub point_errors: usize,
    pub path_nodes: usize,
    pub path_errors: usize,
    pub trajectories: usize,
    pub unlabelable: usize,
    pub failed: usize,
    /// Path correctness rule: the decoded segment sequence must equal the truth.
    pub path_metric: String,
    pub per_trajectory: Vec<TrajectoryEval>,
}

/// Point and path error rates; unlabelable or failed trajectories count every node as wrong.
pub fn evaluate_matching(
    matches: &[MatchedTrajectory],
    truths: &[(&str, &GroundTruth)],
) -> Result<EvalReport> {
    if matches.len() != truths.len() {
        return Err(Error::Argument(format!(
            "{} matches for {} ground truths",
            matches.len(),
            truths.len()
        )));
    }
    let mut per = Vec::with_capacity(matches.len());
    for (m, (id, truth)) in matches.iter().zip(truths) {
        if m.trajectory_id != *id {
            return Err(Error::Argument(format!(
                "match for trajectory {} aligned with truth for {id}",
                m.trajectory_id
            )));
        }
        let n = truth.point_labels.len();
        let failed = m.failure.is_some();
        let (point_errors, path_errors) = if failed || m.unlabelable {
            (n, n - 1)
        } else {
            if m.point_segments.len() != n || m.path_segments.len() + 1 != n {
                return Err(Error::Argument(format!(
                    "match for trajectory {id} has {} point labels, truth has {n}",
                    m.point_segments.len()
                )));
            }
            (
                m.point_segments
                    .iter()
                    .zip(&truth.point_labels)
                    .filter(|(a, b)| a != b)
                    .count(),
                m.path_segments
                    .iter()
                    .zip(&truth.path_labels)
                    .filter(|(a, b)| a != b)
                    .count(),
            )
        };
        per.push(TrajectoryEval {
            trajectory_id: id.to_string(),
            point_nodes: n,
            point_errors,
            path_nodes: n - 1,
            path_errors,
            unlabelable: m.unlabelable,
            failed,
        });
    }
    let sum = |f: fn(&TrajectoryEval) -> usize| per.iter().map(f).sum::<usize>();
    let (pn, pe, qn, qe) = (
        sum(|e| e.point_nodes),
        sum(|e| e.point_errors),
        sum(|e| e.path_nodes),
        sum(|e| e.path_errors),
    );
    let rate = |e: usize, n: usize| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    Ok(EvalReport {
        point_error_rate: rate(pe, pn),
        path_error_rate: rate(qe, qn),
        point_nodes: pn,
        point_errors: pe,
        path_nodes: qn,
        path_errors: qe,
        trajectories: per.len(),
        unlabelable: per.iter().filter(|e| e.unlabelable).count(),
        failed: per.iter().filter(|e| e.failed).count(),
        path_metric: "exact_sequence".into(),
        per_trajectory: per,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>8} {:>10}",
            "node", "total", "errors", "error_rate"
        );
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>8} {:>10.4}",
            "point", self.point_nodes, self.point_errors, self.point_error_rate
        );
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>8} {:>10.4}",
            "path", self.path_nodes, self.path_errors, self.path_error_rate
        );
        let _ = writeln!(
            s,
            "trajectories {}  unlabelable {}  failed {}  path metric {}",
            self.trajectories, self.unlabelable, self.failed, self.path_metric
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub name: String,
    pub kind: NodeKind,
    pub weight: f64,
    /// `+` when the feature raises a state's score, `-` when it lowers it.
    pub sign: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub entries: Vec<FeatureWeight>,
    pub nonzero: usize,
    pub total: usize,
    pub cosine_mode: crate::features::CosineMode,
}

/// Nonzero weights sorted by magnitude, ties in registry order.
pub fn feature_report<T: Scalar>(registry: &FeatureRegistry, theta: &[T]) -> Result<FeatureReport> {
    if theta.len() != registry.len() {
        return Err(Error::Model(format!(
            "{} weights for {} features",
            theta.len(),
            registry.len()
        )));
    }
    let mut entries: Vec<FeatureWeight> = registry
        .entries()
        .iter()
        .zip(theta)
        .filter(|(_, w)| !w.is_zero())
        .map(|(def, w)| FeatureWeight {
            name: def.name.clone(),
            kind: def.kind,
            weight: w.as_f64(),
            sign: if w.as_f64() > 0.0 { '+' } else { '-' },
        })
        .collect();
    entries.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
    Ok(FeatureReport {
        nonzero: entries.len(),
        total: registry.len(),
        cosine_mode: registry.cosine_mode(),
        entries,
    })
}

impl FeatureReport {
    pub fn to_table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>4} {:>12}",
            "feature", "kind", "sign", "weight"
        );
        for e in &self.entries {
            let kind = match e.kind {
                NodeKind::Point => "point",
                NodeKind::Path => "path",
            };
            let _ = writeln!(
                s,
                "{:<width$} {:>5} {:>4} {:>12.6}",
                e.name, kind, e.sign, e.weight
            );
        }
        let _ = writeln!(s, "nonzero {} of {}", self.nonzero, self.total);
        s
    }
}

/// Matched routes as a GeoJSON FeatureCollection of LineStrings in lon/lat.
pub fn matches_to_geojson(net: &RoadNetwork, matches: &[MatchedTrajectory]) -> Result<Value> {
    let mut features = Vec::new();
    for m in matches.iter().filter(|m| m.failure.is_none()) {
        let mut coords: Vec<[f64; 2]> = Vec::new();
        for sid in m.route() {
            let seg = net.segment(sid).ok_or_else(|| {
                Error::Argument(format!("match references unknown segment {sid}"))
            })?;
            for p in &seg.polyline {
                let c = net.projection().to_lonlat(p);
                if coords.last() != Some(&c) {
                    coords.push(c);
                }
            }
        }
        if coords.len() < 2 {
            continue;
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": {
                "trajectory_id": m.trajectory_id,
                "log_probability": m.log_probability,
                "unlabelable": m.unlabelable,
            }
        }));
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}
