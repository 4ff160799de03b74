//! Glue between lattices, features, the CRF and the trainers.

use crate::crf::{
    compute_potentials, viterbi_decode, FeaturizedChain, NodeFeatures, ParamBlock, TrainingExample,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_matching, EvalReport, MatchedTrajectory};
use crate::features::{path_feature_vector, point_feature_vector, FeatureRegistry, Scaler};
use crate::lattice::{build_lattice, label_lattice, Lattice, LatticeConfig};
use crate::network::RoadNetwork;
use crate::scalar::Scalar;
use crate::training::{Holdout, Model};
use crate::trajectory::{GroundTruth, Trajectory};

/// A lattice with raw (unscaled) feature rows for every state.
#[derive(Debug, Clone)]
pub struct FeaturizedLattice {
    pub lattice: Lattice,
    /// `point_rows[t][i]`: raw point features of candidate `i` of observation `t`.
    pub point_rows: Vec<Vec<Vec<f64>>>,
    /// `path_rows[t][j]`: raw path features of path `j` of gap `t`.
    pub path_rows: Vec<Vec<Vec<f64>>>,
}

pub fn featurize(
    net: &RoadNetwork,
    registry: &FeatureRegistry,
    traj: &Trajectory,
    cfg: &LatticeConfig,
) -> Result<FeaturizedLattice> {
    let lattice = build_lattice(net, traj, cfg)?;
    let obs = traj.observations();
    let n = obs.len();
    let point_rows = lattice
        .points()
        .iter()
        .map(|set| {
            set.states
                .iter()
                .map(|s| {
                    let seg = &net.segments()[s.segment.index()];
                    point_feature_vector(registry, net, seg, &s.projection, &obs[set.t], set.t, n)
                })
                .collect()
        })
        .collect();
    let path_rows = lattice
        .paths()
        .iter()
        .map(|set| {
            set.states
                .iter()
                .map(|p| path_feature_vector(registry, p, &obs[set.t], &obs[set.t + 1]))
                .collect()
        })
        .collect();
    Ok(FeaturizedLattice {
        lattice,
        point_rows,
        path_rows,
    })
}

/// Min-max scaler over every state of the given lattices.
pub fn fit_scaler(registry: &FeatureRegistry, data: &[FeaturizedLattice]) -> Result<Scaler> {
    let point = Scaler::fit(
        registry.num_point(),
        data.iter()
            .flat_map(|d| d.point_rows.iter().flatten().map(Vec::as_slice)),
    )?;
    let path = Scaler::fit(
        registry.num_path(),
        data.iter()
            .flat_map(|d| d.path_rows.iter().flatten().map(Vec::as_slice)),
    )?;
    Ok(Scaler::concat(point, path))
}

/// Scaled CRF inputs for one lattice.
pub fn scaled_chain<T: Scalar>(
    registry: &FeatureRegistry,
    scaler: &Scaler,
    data: &FeaturizedLattice,
) -> Result<FeaturizedChain<T>> {
    let k = registry.num_point();
    let point = ParamBlock { offset: 0, dim: k };
    let path = ParamBlock {
        offset: k,
        dim: registry.num_path(),
    };
    let scale = |offset: usize, rows: &[Vec<f64>]| -> Vec<Vec<T>> {
        rows.iter()
            .map(|r| scaler.apply(offset, r).into_iter().map(T::of).collect())
            .collect()
    };
    let n = data.point_rows.len();
    let mut nodes = Vec::with_capacity(2 * n - 1);
    for t in 0..n {
        nodes.push(NodeFeatures::new(point, scale(0, &data.point_rows[t]))?);
        if t + 1 < n {
            nodes.push(NodeFeatures::new(path, scale(k, &data.path_rows[t]))?);
        }
    }
    FeaturizedChain::new(data.lattice.chain().clone(), nodes, registry.len())
}

/// Outcome counts of turning trajectories into training examples.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PreparationStats {
    pub trajectories: usize,
    pub examples: usize,
    pub unlabelable: usize,
    pub construction_failures: usize,
    pub missing_truth: usize,
}

/// Training examples plus the scaler fitted on their lattices.
pub struct TrainingSet<T> {
    pub examples: Vec<TrainingExample<T>>,
    pub scaler: Scaler,
    pub stats: PreparationStats,
}

/// Builds lattices for `trajectories`, fits the scaler on all of their states
/// and keeps the labelable ones as examples.
pub fn prepare_training<T: Scalar>(
    net: &RoadNetwork,
    registry: &FeatureRegistry,
    trajectories: &[Trajectory],
    cfg: &LatticeConfig,
) -> Result<TrainingSet<T>> {
    let mut stats = PreparationStats {
        trajectories: trajectories.len(),
        ..PreparationStats::default()
    };
    let mut built = Vec::new();
    for traj in trajectories {
        let Some(truth) = traj.truth() else {
            stats.missing_truth += 1;
            continue;
        };
        match featurize(net, registry, traj, cfg) {
            Ok(f) => built.push((f, truth)),
            Err(Error::LatticeConstruction { .. }) => stats.construction_failures += 1,
            Err(e) => return Err(e),
        }
    }
    let raw: Vec<FeaturizedLattice> = built.iter().map(|(f, _)| f.clone()).collect();
    if raw.is_empty() {
        return Err(Error::Argument(
            "no training trajectory produced a lattice".into(),
        ));
    }
    let scaler = fit_scaler(registry, &raw)?;
    let mut examples = Vec::new();
    for (f, truth) in &built {
        match label_lattice(&f.lattice, truth) {
            Ok(labels) => examples.push(TrainingExample::new(
                scaled_chain(registry, &scaler, f)?,
                labels,
            )?),
            Err(Error::Unlabelable { .. }) => stats.unlabelable += 1,
            Err(e) => return Err(e),
        }
    }
    stats.examples = examples.len();
    if examples.is_empty() {
        return Err(Error::Argument(
            "no training trajectory is labelable".into(),
        ));
    }
    Ok(TrainingSet {
        examples,
        scaler,
        stats,
    })
}

/// A trajectory readied for repeated decoding under different weights.
pub struct PreparedMatch<T> {
    pub trajectory_id: String,
    prepared: std::result::Result<(Lattice, FeaturizedChain<T>), String>,
    unlabelable: bool,
}

pub fn prepare_match<T: Scalar>(
    net: &RoadNetwork,
    registry: &FeatureRegistry,
    scaler: &Scaler,
    cfg: &LatticeConfig,
    traj: &Trajectory,
) -> Result<PreparedMatch<T>> {
    let prepared = match featurize(net, registry, traj, cfg) {
        Ok(f) => {
            let chain = scaled_chain(registry, scaler, &f)?;
            Ok((f.lattice, chain))
        }
        Err(e @ Error::LatticeConstruction { .. }) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    let unlabelable = match (&prepared, traj.truth()) {
        (Ok((lattice, _)), Some(truth)) => label_lattice(lattice, truth).is_err(),
        _ => false,
    };
    Ok(PreparedMatch {
        trajectory_id: traj.id().to_string(),
        prepared,
        unlabelable,
    })
}

impl<T: Scalar> PreparedMatch<T> {
    pub fn decode(&self, theta: &[T]) -> Result<MatchedTrajectory> {
        let (lattice, chain) = match &self.prepared {
            Ok(p) => p,
            Err(reason) => {
                return Ok(MatchedTrajectory::failed(
                    &self.trajectory_id,
                    reason.clone(),
                ))
            }
        };
        let pot = compute_potentials(chain, theta)?;
        let result = viterbi_decode(chain.chain(), &pot)?;
        let point_segments = lattice
            .points()
            .iter()
            .enumerate()
            .map(|(t, set)| set.states[result.states[2 * t]].segment)
            .collect();
        let path_segments = lattice
            .paths()
            .iter()
            .enumerate()
            .map(|(t, set)| set.states[result.states[2 * t + 1]].segment_ids.clone())
            .collect();
        Ok(MatchedTrajectory {
            trajectory_id: self.trajectory_id.clone(),
            point_segments,
            path_segments,
            log_probability: Some(result.log_probability.as_f64()),
            unlabelable: self.unlabelable,
            failure: None,
        })
    }

    pub fn is_unlabelable(&self) -> bool {
        self.unlabelable
    }
}

/// Labeled trajectories decoded repeatedly while sweeping penalties.
pub struct EvalSet<T> {
    items: Vec<PreparedMatch<T>>,
    truths: Vec<(String, GroundTruth)>,
}

impl<T: Scalar> EvalSet<T> {
    pub fn new(
        net: &RoadNetwork,
        registry: &FeatureRegistry,
        scaler: &Scaler,
        cfg: &LatticeConfig,
        trajectories: &[Trajectory],
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(trajectories.len());
        let mut truths = Vec::with_capacity(trajectories.len());
        for traj in trajectories {
            let truth = traj.truth().ok_or_else(|| {
                Error::Argument(format!("trajectory {} has no ground truth", traj.id()))
            })?;
            items.push(prepare_match(net, registry, scaler, cfg, traj)?);
            truths.push((traj.id().to_string(), truth.clone()));
        }
        Ok(Self { items, truths })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn decode_all(&self, theta: &[T]) -> Result<Vec<MatchedTrajectory>> {
        self.items.iter().map(|p| p.decode(theta)).collect()
    }

    pub fn evaluate(&self, theta: &[T]) -> Result<EvalReport> {
        let matches = self.decode_all(theta)?;
        let truths: Vec<(&str, &GroundTruth)> =
            self.truths.iter().map(|(id, g)| (id.as_str(), g)).collect();
        evaluate_matching(&matches, &truths)
    }
}

impl<T: Scalar> Holdout<T> for EvalSet<T> {
    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn error_rates(&mut self, theta: &[T]) -> Result<(f64, f64)> {
        let r = self.evaluate(theta)?;
        Ok((r.point_error_rate, r.path_error_rate))
    }
}

impl<T: Scalar> Model<T> {
    /// Decodes one trajectory; construction failures are reported in the result.
    pub fn match_trajectory(
        &self,
        net: &RoadNetwork,
        traj: &Trajectory,
    ) -> Result<MatchedTrajectory> {
        prepare_match(
            net,
            &self.registry,
            &self.scaler,
            &self.lattice_config,
            traj,
        )?
        .decode(&self.theta)
    }

    pub fn match_all(
        &self,
        net: &RoadNetwork,
        trajectories: &[Trajectory],
    ) -> Result<Vec<MatchedTrajectory>> {
        trajectories
            .iter()
            .map(|t| self.match_trajectory(net, t))
            .collect()
    }

    /// Checks that every road class of `net` is known to the model.
    pub fn check_network(&self, net: &RoadNetwork) -> Result<()> {
        let known = self.registry.class_vocabulary();
        if let Some(c) = net.class_vocabulary().iter().find(|c| !known.contains(c)) {
            return Err(Error::Model(format!(
                "network road class {c:?} is not in the model's vocabulary {known:?}"
            )));
        }
        Ok(())
    }
}
