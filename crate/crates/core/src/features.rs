//! Tied feature registry: scalar point/path features plus templates expanded
//! over road classes, time-of-day periods and taxi service state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::angular_difference;
use crate::network::{segment_bearing, Path, Projection, RoadNetwork, RoadSegment};
use crate::trajectory::GpsObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Point,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFeature {
    /// Distance from the fix to the candidate segment.
    GpsDistance,
    /// Heading vs. road bearing, folded to `[0, 180]`.
    AngularDifference,
    /// `(v_obs − v_limit) / v_limit`.
    SpeedRatio,
    /// Constant 1, used with class/service/boundary filters.
    ClassIndicator,
    Length,
    /// `Σ length / speed_limit` over the path.
    MinTravelTime,
    /// Mean speed limit over the path segments.
    MeanSpeedLimit,
    /// Straight-line fix distance over path length.
    LengthRatio,
    /// Cosine between the speed-limit vector and its mean vector.
    SpeedCosine,
    /// Path length minus straight-line fix distance.
    LengthDifference,
    /// Minimum travel time minus elapsed time between fixes.
    TimeDifference,
    /// Number of class changes between consecutive path segments.
    ClassChanges,
}

impl BaseFeature {
    pub fn kind(self) -> NodeKind {
        use BaseFeature::*;
        match self {
            GpsDistance | AngularDifference | SpeedRatio | ClassIndicator => NodeKind::Point,
            _ => NodeKind::Path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: NodeKind,
    pub base: BaseFeature,
    pub class_filter: Option<String>,
    pub period_filter: Option<u32>,
    pub service_filter: Option<bool>,
    /// Active only at the first and last observation.
    pub boundary_filter: bool,
}

impl FeatureDef {
    fn plain(name: &str, base: BaseFeature) -> Self {
        Self {
            name: name.to_string(),
            kind: base.kind(),
            base,
            class_filter: None,
            period_filter: None,
            service_filter: None,
            boundary_filter: false,
        }
    }
}

/// How the speed-limit cosine feature is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineMode {
    /// The cosine itself (1 for uniform speed limits).
    #[default]
    Similarity,
    /// `1 − cosine`.
    Distance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistryRepr {
    class_vocabulary: Vec<String>,
    period_width_hours: u32,
    cosine_mode: CosineMode,
    entries: Vec<FeatureDef>,
}

/// Ordered feature definitions; point features first, then path features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryRepr", into = "RegistryRepr")]
pub struct FeatureRegistry {
    class_vocabulary: Vec<String>,
    period_width_hours: u32,
    cosine_mode: CosineMode,
    entries: Vec<FeatureDef>,
    num_point: usize,
}

impl From<FeatureRegistry> for RegistryRepr {
    fn from(r: FeatureRegistry) -> Self {
        Self {
            class_vocabulary: r.class_vocabulary,
            period_width_hours: r.period_width_hours,
            cosine_mode: r.cosine_mode,
            entries: r.entries,
        }
    }
}

impl TryFrom<RegistryRepr> for FeatureRegistry {
    type Error = Error;

    fn try_from(r: RegistryRepr) -> Result<Self> {
        let rebuilt = build_registry(&r.class_vocabulary, r.period_width_hours, r.cosine_mode)?;
        if rebuilt.entries != r.entries {
            return Err(Error::Model(
                "stored feature entries do not match their templates".into(),
            ));
        }
        Ok(rebuilt)
    }
}

fn period_label(v: u32, width: u32) -> String {
    format!("{:02}-{:02}h", v * width, (v + 1) * width)
}

fn service_label(in_service: bool) -> &'static str {
    if in_service {
        "ru-1"
    } else {
        "ru-0"
    }
}

/// Expands the feature templates over `class_vocabulary` and `24 / period_width_hours` periods.
pub fn build_registry(
    class_vocabulary: &[String],
    period_width_hours: u32,
    cosine_mode: CosineMode,
) -> Result<FeatureRegistry> {
    use BaseFeature::*;
    if class_vocabulary.is_empty() {
        return Err(Error::Argument(
            "feature registry needs at least one road class".into(),
        ));
    }
    if period_width_hours == 0 || 24 % period_width_hours != 0 {
        return Err(Error::Argument(format!(
            "period width must divide 24 hours, got {period_width_hours}"
        )));
    }
    let periods = 24 / period_width_hours;
    let mut e = vec![
        FeatureDef::plain("gps_distance_error", GpsDistance),
        FeatureDef::plain("angular_difference", AngularDifference),
        FeatureDef::plain("speed_difference_ratio", SpeedRatio),
    ];
    for v in 0..periods {
        e.push(FeatureDef {
            name: format!(
                "temporal_speed_difference_ratio[{}]",
                period_label(v, period_width_hours)
            ),
            period_filter: Some(v),
            ..FeatureDef::plain("", SpeedRatio)
        });
    }
    for class in class_vocabulary {
        for s in [false, true] {
            e.push(FeatureDef {
                name: format!("road_usage[{class},{}]", service_label(s)),
                class_filter: Some(class.clone()),
                service_filter: Some(s),
                ..FeatureDef::plain("", ClassIndicator)
            });
        }
    }
    for class in class_vocabulary {
        e.push(FeatureDef {
            name: format!("io[{class}]"),
            class_filter: Some(class.clone()),
            boundary_filter: true,
            ..FeatureDef::plain("", ClassIndicator)
        });
    }
    let num_point = e.len();
    e.extend([
        FeatureDef::plain("length", Length),
        FeatureDef::plain("minimum_travel_time", MinTravelTime),
        FeatureDef::plain("maximum_average_speed", MeanSpeedLimit),
        FeatureDef::plain("length_ratio", LengthRatio),
        FeatureDef::plain("cosine_distance", SpeedCosine),
        FeatureDef::plain("length_difference", LengthDifference),
        FeatureDef::plain("time_difference", TimeDifference),
        FeatureDef::plain("road_class_changes", ClassChanges),
    ]);
    for v in 0..periods {
        e.push(FeatureDef {
            name: format!(
                "temporal_length_difference[{}]",
                period_label(v, period_width_hours)
            ),
            period_filter: Some(v),
            ..FeatureDef::plain("", LengthDifference)
        });
    }
    for s in [false, true] {
        e.push(FeatureDef {
            name: format!("temporal_road_class_changes[{}]", service_label(s)),
            service_filter: Some(s),
            ..FeatureDef::plain("", ClassChanges)
        });
    }
    Ok(FeatureRegistry {
        class_vocabulary: class_vocabulary.to_vec(),
        period_width_hours,
        cosine_mode,
        entries: e,
        num_point,
    })
}

impl FeatureRegistry {
    pub fn entries(&self) -> &[FeatureDef] {
        &self.entries
    }

    /// Total parameter count `M = K + S`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of point features `K`.
    pub fn num_point(&self) -> usize {
        self.num_point
    }

    /// Number of path features `S`.
    pub fn num_path(&self) -> usize {
        self.entries.len() - self.num_point
    }

    pub fn class_vocabulary(&self) -> &[String] {
        &self.class_vocabulary
    }

    pub fn period_width_hours(&self) -> u32 {
        self.period_width_hours
    }

    pub fn periods(&self) -> u32 {
        24 / self.period_width_hours
    }

    pub fn cosine_mode(&self) -> CosineMode {
        self.cosine_mode
    }

    /// Time-of-day period (UTC) of an epoch timestamp.
    pub fn period_of(&self, timestamp: f64) -> u32 {
        let hour = timestamp.rem_euclid(86_400.0) / 3_600.0;
        ((hour / self.period_width_hours as f64).floor() as u32).min(self.periods() - 1)
    }
}

/// Raw point feature vector (length `K`) for candidate `segment` of observation `t` of `n`.
pub fn point_feature_vector(
    reg: &FeatureRegistry,
    net: &RoadNetwork,
    segment: &RoadSegment,
    projection: &Projection,
    obs: &GpsObservation,
    t: usize,
    n: usize,
) -> Vec<f64> {
    let angle = obs
        .heading
        .map(|h| {
            let b = segment_bearing(segment, projection.offset)
                .expect("projection offsets lie on the segment");
            angular_difference(h, b)
        })
        .unwrap_or(0.0);
    let speed_ratio = obs
        .speed
        .map(|v| (v - segment.speed_limit) / segment.speed_limit)
        .unwrap_or(0.0);
    let class = net.class_name(segment.class);
    let period = reg.period_of(obs.timestamp);
    let in_service = obs.in_service.unwrap_or(false);
    let boundary = t == 0 || t + 1 == n;
    reg.entries[..reg.num_point]
        .iter()
        .map(|def| {
            let base = match def.base {
                BaseFeature::GpsDistance => projection.distance,
                BaseFeature::AngularDifference => angle,
                BaseFeature::SpeedRatio => speed_ratio,
                BaseFeature::ClassIndicator => 1.0,
                _ => unreachable!("path feature in the point block"),
            };
            let active = def.class_filter.as_deref().is_none_or(|c| c == class)
                && def.period_filter.is_none_or(|v| v == period)
                && def.service_filter.is_none_or(|s| s == in_service)
                && (!def.boundary_filter || boundary);
            if active {
                base
            } else {
                0.0
            }
        })
        .collect()
}

/// Cosine between `limits` and the constant vector of their mean.
pub fn speed_limit_cosine(limits: &[f64]) -> f64 {
    let n = limits.len() as f64;
    let mean = limits.iter().sum::<f64>() / n;
    let dot: f64 = limits.iter().map(|v| v * mean).sum();
    let norm = limits.iter().map(|v| v * v).sum::<f64>().sqrt() * (n * mean * mean).sqrt();
    if norm == 0.0 {
        0.0
    } else {
        dot / norm
    }
}

/// Raw path feature vector (length `S`) for `path` between observations `a` and `b`.
pub fn path_feature_vector(
    reg: &FeatureRegistry,
    path: &Path,
    a: &GpsObservation,
    b: &GpsObservation,
) -> Vec<f64> {
    let fix_distance = a.position.distance(&b.position);
    let min_time: f64 = path
        .segment_lengths
        .iter()
        .zip(&path.speed_limits)
        .map(|(l, v)| l / v)
        .sum();
    let mean_speed = path.speed_limits.iter().sum::<f64>() / path.speed_limits.len() as f64;
    let cosine = speed_limit_cosine(&path.speed_limits);
    let class_changes = path
        .class_sequence
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count() as f64;
    let period = reg.period_of(a.timestamp);
    let in_service = a.in_service.unwrap_or(false);
    reg.entries[reg.num_point..]
        .iter()
        .map(|def| {
            let base = match def.base {
                BaseFeature::Length => path.length,
                BaseFeature::MinTravelTime => min_time,
                BaseFeature::MeanSpeedLimit => mean_speed,
                BaseFeature::LengthRatio => fix_distance / path.length,
                BaseFeature::SpeedCosine => match reg.cosine_mode {
                    CosineMode::Similarity => cosine,
                    CosineMode::Distance => 1.0 - cosine,
                },
                BaseFeature::LengthDifference => path.length - fix_distance,
                BaseFeature::TimeDifference => min_time - (b.timestamp - a.timestamp),
                BaseFeature::ClassChanges => class_changes,
                _ => unreachable!("point feature in the path block"),
            };
            let active = def.period_filter.is_none_or(|v| v == period)
                && def.service_filter.is_none_or(|s| s == in_service);
            if active {
                base
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-dimension min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut seen = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::Argument(format!(
                    "feature row of length {}, expected {dim}",
                    row.len()
                )));
            }
            seen = true;
            for (k, &v) in row.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !seen {
            return Err(Error::Argument("cannot fit a scaler without rows".into()));
        }
        Ok(Self { min, max })
    }

    /// Joins a point-block scaler and a path-block scaler into one of length `K + S`.
    pub fn concat(point: Scaler, path: Scaler) -> Self {
        let mut s = point;
        s.min.extend(path.min);
        s.max.extend(path.max);
        s
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// Scales `raw`, whose first entry is dimension `offset`. Constant
    /// dimensions map to 0; values outside the fitted range are clamped.
    pub fn apply(&self, offset: usize, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(k, &x)| {
                let (lo, hi) = (self.min[offset + k], self.max[offset + k]);
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}
