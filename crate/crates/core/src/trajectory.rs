//! GPS trajectories: CSV ingestion, sampling-rate degradation and dataset splits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LocalProjection, Point2};
use crate::network::SegmentId;

#[derive(Debug, Clone, PartialEq)]
pub struct GpsObservation {
    /// Planar position in meters.
    pub position: Point2,
    /// `[lon, lat]` in degrees.
    pub lonlat: [f64; 2],
    /// Seconds since the epoch.
    pub timestamp: f64,
    /// Meters per second.
    pub speed: Option<f64>,
    /// Degrees clockwise from north.
    pub heading: Option<f64>,
    pub in_service: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub point_labels: Vec<SegmentId>,
    /// `path_labels[t]` is the true segment sequence between observations `t` and `t + 1`.
    pub path_labels: Vec<Vec<SegmentId>>,
}

impl GroundTruth {
    fn validate(&self, id: &str, n: usize) -> Result<()> {
        if self.point_labels.len() != n || self.path_labels.len() + 1 != n {
            return Err(Error::Validation(format!(
                "trajectory {id}: truth has {} point and {} path labels for {n} observations",
                self.point_labels.len(),
                self.path_labels.len()
            )));
        }
        for (t, path) in self.path_labels.iter().enumerate() {
            if path.first() != Some(&self.point_labels[t])
                || path.last() != Some(&self.point_labels[t + 1])
            {
                return Err(Error::Validation(format!(
                    "trajectory {id}: truth path {t} does not connect point labels {} and {}",
                    self.point_labels[t],
                    self.point_labels[t + 1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    observations: Vec<GpsObservation>,
    truth: Option<GroundTruth>,
}

impl Trajectory {
    /// Validates timestamps (strictly increasing), attribute ranges and truth consistency.
    pub fn new(
        id: impl Into<String>,
        observations: Vec<GpsObservation>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let id = id.into();
        if observations.len() < 2 {
            return Err(Error::DegenerateTrajectory {
                id,
                reason: format!("{} observations, need at least 2", observations.len()),
            });
        }
        for (i, w) in observations.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                let what = if w[1].timestamp == w[0].timestamp {
                    "duplicate"
                } else {
                    "out-of-order"
                };
                return Err(Error::Validation(format!(
                    "trajectory {id}: {what} timestamp {} at row {}",
                    w[1].timestamp,
                    i + 1
                )));
            }
        }
        for (i, o) in observations.iter().enumerate() {
            if o.speed.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::Validation(format!(
                    "trajectory {id}: negative speed at row {i}"
                )));
            }
            if o.heading.is_some_and(|h| !(0.0..360.0).contains(&h)) {
                return Err(Error::Validation(format!(
                    "trajectory {id}: heading out of [0, 360) at row {i}"
                )));
            }
        }
        if let Some(truth) = &truth {
            truth.validate(&id, observations.len())?;
        }
        Ok(Self {
            id,
            observations,
            truth,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn observations(&self) -> &[GpsObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    traj_id: String,
    lon: f64,
    lat: f64,
    timestamp: f64,
    speed_kmh: Option<f64>,
    heading_deg: Option<f64>,
    in_service: Option<String>,
    truth_segment: Option<u32>,
    truth_path: Option<String>,
}

fn parse_bool(s: &str, traj: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Validation(format!(
            "trajectory {traj}: in_service must be a boolean, got {other:?}"
        ))),
    }
}

fn parse_path(s: &str, traj: &str) -> Result<Vec<SegmentId>> {
    s.split('|')
        .map(|p| {
            p.trim().parse::<u32>().map(SegmentId).map_err(|_| {
                Error::Validation(format!("trajectory {traj}: bad truth_path entry {p:?}"))
            })
        })
        .collect()
}

pub fn load_trajectories(
    path: impl AsRef<FsPath>,
    projection: &LocalProjection,
) -> Result<Vec<Trajectory>> {
    read_trajectories(
        File::open(path.as_ref()).map_err(Error::file(&path))?,
        projection,
    )
}

/// Reads trajectories from CSV. Rows are grouped by `traj_id` in order of first
/// appearance and must already be in strictly increasing time order.
pub fn read_trajectories(
    reader: impl Read,
    projection: &LocalProjection,
) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut groups: Vec<(String, Vec<Row>)> = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            location: format!("row {}", i + 1),
            message: e.to_string(),
        })?;
        match groups.iter_mut().find(|(id, _)| *id == row.traj_id) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.traj_id.clone(), vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(id, rows)| trajectory_from_rows(id, rows, projection))
        .collect()
}

fn trajectory_from_rows(
    id: String,
    rows: Vec<Row>,
    projection: &LocalProjection,
) -> Result<Trajectory> {
    let n = rows.len();
    let has_truth = rows.iter().any(|r| r.truth_segment.is_some());
    let mut observations = Vec::with_capacity(n);
    let mut points = Vec::new();
    let mut paths = Vec::new();
    for (t, row) in rows.into_iter().enumerate() {
        observations.push(GpsObservation {
            position: projection.to_planar(row.lon, row.lat),
            lonlat: [row.lon, row.lat],
            timestamp: row.timestamp,
            speed: row.speed_kmh.map(|v| v / 3.6),
            heading: row.heading_deg,
            in_service: match row.in_service.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(parse_bool(s, &id)?),
            },
        });
        if has_truth {
            let seg = row.truth_segment.ok_or_else(|| {
                Error::Validation(format!("trajectory {id}: row {t} is missing truth_segment"))
            })?;
            points.push(SegmentId(seg));
            let path = row.truth_path.as_deref().map(str::trim).unwrap_or("");
            match (t + 1 < n, path.is_empty()) {
                (true, false) => paths.push(parse_path(path, &id)?),
                (true, true) => {
                    return Err(Error::Validation(format!(
                        "trajectory {id}: row {t} is missing truth_path"
                    )))
                }
                (false, false) => {
                    return Err(Error::Validation(format!(
                        "trajectory {id}: last row must not carry a truth_path"
                    )))
                }
                (false, true) => {}
            }
        }
    }
    let truth = has_truth.then_some(GroundTruth {
        point_labels: points,
        path_labels: paths,
    });
    Trajectory::new(id, observations, truth)
}

pub fn save_trajectories(trajectories: &[Trajectory], path: impl AsRef<FsPath>) -> Result<()> {
    let mut f = File::create(path.as_ref()).map_err(Error::file(&path))?;
    write_trajectories(&mut f, trajectories)?;
    f.flush()?;
    Ok(())
}

pub fn write_trajectories(writer: impl Write, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for traj in trajectories {
        let n = traj.len();
        for (t, o) in traj.observations.iter().enumerate() {
            let truth = traj.truth.as_ref();
            w.serialize(Row {
                traj_id: traj.id.clone(),
                lon: o.lonlat[0],
                lat: o.lonlat[1],
                timestamp: o.timestamp,
                speed_kmh: o.speed.map(|v| v * 3.6),
                heading_deg: o.heading,
                in_service: o.in_service.map(|b| b.to_string()),
                truth_segment: truth.map(|g| g.point_labels[t].0),
                truth_path: truth.filter(|_| t + 1 < n).map(|g| {
                    g.path_labels[t]
                        .iter()
                        .map(|s| s.to_string())
                        .collect::<Vec<_>>()
                        .join("|")
                }),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Keeps the first observation, then each next one at least `interval` seconds
/// after the last kept one. Truth paths across dropped observations are joined.
pub fn degrade_sampling(traj: &Trajectory, interval: f64) -> Result<Trajectory> {
    if !(interval > 0.0) {
        return Err(Error::Argument(format!(
            "sampling interval must be positive, got {interval}"
        )));
    }
    let obs = &traj.observations;
    let mut kept = vec![0usize];
    for (i, o) in obs.iter().enumerate().skip(1) {
        let last = obs[*kept.last().expect("non-empty")].timestamp;
        if o.timestamp >= last + interval - 1e-9 {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(Error::DegenerateTrajectory {
            id: traj.id.clone(),
            reason: format!(
                "only {} observation(s) left at interval {interval} s",
                kept.len()
            ),
        });
    }
    let truth = traj.truth.as_ref().map(|g| GroundTruth {
        point_labels: kept.iter().map(|&i| g.point_labels[i]).collect(),
        path_labels: kept
            .windows(2)
            .map(|w| join_paths(&g.path_labels[w[0]..w[1]]))
            .collect(),
    });
    Trajectory::new(
        traj.id.clone(),
        kept.iter().map(|&i| obs[i].clone()).collect(),
        truth,
    )
}

/// Concatenates consecutive paths, dropping the repeated boundary segment.
pub fn join_paths(paths: &[Vec<SegmentId>]) -> Vec<SegmentId> {
    let mut out: Vec<SegmentId> = Vec::new();
    for p in paths {
        let skip = usize::from(!out.is_empty() && out.last() == p.first());
        out.extend_from_slice(&p[skip..]);
    }
    out
}

/// Deterministic shuffle by `seed`; the first `⌈fraction·n⌉` items (kept within
/// `1..n`) go to the first part.
pub fn split_dataset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = items.len();
    if n < 2 {
        return Err(Error::Argument(format!("cannot split {n} item(s)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let first = order[..cut].iter().map(|&i| items[i].clone()).collect();
    let second = order[cut..].iter().map(|&i| items[i].clone()).collect();
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: f64) -> GpsObservation {
        GpsObservation {
            position: Point2::new(t, 0.0),
            lonlat: [0.0, 0.0],
            timestamp: t,
            speed: None,
            heading: None,
            in_service: None,
        }
    }

    /// Thirteen observations 10 s apart; the vehicle moves one segment per gap
    /// on even gaps and stays put on odd ones.
    fn labeled() -> Trajectory {
        let mut seg = 0u32;
        let mut points = vec![SegmentId(0)];
        let mut paths = Vec::new();
        for gap in 0..12 {
            if gap % 2 == 0 {
                paths.push(vec![SegmentId(seg), SegmentId(seg + 1)]);
                seg += 1;
            } else {
                paths.push(vec![SegmentId(seg)]);
            }
            points.push(SegmentId(seg));
        }
        Trajectory::new(
            "a",
            (0..13).map(|i| obs(i as f64 * 10.0)).collect(),
            Some(GroundTruth {
                point_labels: points,
                path_labels: paths,
            }),
        )
        .unwrap()
    }

    fn stamps(t: &Trajectory) -> Vec<f64> {
        t.observations().iter().map(|o| o.timestamp).collect()
    }

    #[test]
    fn degrade_keeps_even_samples() {
        let t = labeled();
        assert_eq!(
            stamps(&degrade_sampling(&t, 60.0).unwrap()),
            vec![0.0, 60.0, 120.0]
        );
        assert_eq!(
            stamps(&degrade_sampling(&t, 90.0).unwrap()),
            vec![0.0, 90.0]
        );
    }

    #[test]
    fn degrade_joins_truth_paths() {
        let t = labeled();
        let d = degrade_sampling(&t, 60.0).unwrap();
        let truth = d.truth().unwrap();
        let g = t.truth().unwrap();
        // brute force: walk every dropped gap and append new segments only
        let mut expected = vec![g.path_labels[0][0]];
        for p in &g.path_labels[0..6] {
            for s in p {
                if expected.last() != Some(s) {
                    expected.push(*s);
                }
            }
        }
        assert_eq!(truth.path_labels[0], expected);
        assert_eq!(
            truth.point_labels,
            vec![g.point_labels[0], g.point_labels[6], g.point_labels[12]]
        );
    }

    #[test]
    fn degrade_is_identity_below_native_spacing() {
        let t = labeled();
        assert_eq!(degrade_sampling(&t, 10.0).unwrap(), t);
        assert_eq!(degrade_sampling(&t, 5.0).unwrap(), t);
    }

    #[test]
    fn degrade_to_a_single_point_fails() {
        let t = labeled();
        assert!(matches!(
            degrade_sampling(&t, 500.0),
            Err(Error::DegenerateTrajectory { .. })
        ));
        assert!(matches!(degrade_sampling(&t, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn split_seventy_thirty() {
        let items: Vec<u32> = (0..10).collect();
        let (train, test) = split_dataset(&items, 0.7, 42).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        assert_eq!(split_dataset(&items, 0.7, 42).unwrap(), (train, test));
        assert!(split_dataset(&items[..1], 0.7, 1).is_err());
        assert!(split_dataset(&items, 1.0, 1).is_err());
    }

    #[test]
    fn duplicate_timestamps_are_rejected() {
        let err = Trajectory::new("dup", vec![obs(0.0), obs(0.0)], None).unwrap_err();
        assert!(err.to_string().contains("dup"));
        assert!(Trajectory::new("x", vec![obs(1.0), obs(0.0)], None).is_err());
    }

    #[test]
    fn csv_with_truth_is_loaded_and_checked() {
        let proj = LocalProjection::new(0.0, 0.0);
        let csv =
            "traj_id,lon,lat,timestamp,speed_kmh,heading_deg,in_service,truth_segment,truth_path\n\
                   t1,0.0,0.0,0,36,90,true,3,3|4\n\
                   t1,0.001,0.0,10,,,,4,4\n\
                   t1,0.002,0.0,20,,,,4,\n";
        let trajs = read_trajectories(csv.as_bytes(), &proj).unwrap();
        assert_eq!(trajs.len(), 1);
        let t = &trajs[0];
        assert_eq!(t.len(), 3);
        assert_eq!(t.observations()[0].speed, Some(10.0));
        assert_eq!(t.observations()[0].in_service, Some(true));
        assert_eq!(t.observations()[1].heading, None);
        let g = t.truth().unwrap();
        assert_eq!(
            g.path_labels,
            vec![vec![SegmentId(3), SegmentId(4)], vec![SegmentId(4)]]
        );

        let bad = csv.replace("3,3|4", "3,5|4");
        assert!(matches!(
            read_trajectories(bad.as_bytes(), &proj),
            Err(Error::Validation(_))
        ));
        let dup = csv.replace(",10,", ",0,");
        let err = read_trajectories(dup.as_bytes(), &proj).unwrap_err();
        assert!(err.to_string().contains("t1"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let proj = LocalProjection::new(121.0, 31.0);
        let t = labeled();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, std::slice::from_ref(&t)).unwrap();
        let back = read_trajectories(buf.as_slice(), &proj).unwrap();
        assert_eq!(back[0].truth(), t.truth());
        assert_eq!(stamps(&back[0]), stamps(&t));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_a_partition(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
                let items: Vec<usize> = (0..n).collect();
                let (a, b) = split_dataset(&items, frac, seed).unwrap();
                let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, items);
                prop_assert!(!a.is_empty() && !b.is_empty());
            }
        }
    }
}
