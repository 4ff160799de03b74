//! Train/holdout/test protocol comparing ℓ1 and ℓ2 regularization.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::features::{build_registry, CosineMode, FeatureRegistry};
use crate::lattice::LatticeConfig;
use crate::network::RoadNetwork;
use crate::optim::OptimOptions;
use crate::pipeline::{prepare_training, EvalSet, PreparationStats, TrainingSet};
use crate::scalar::Scalar;
use crate::training::{l2_sweep, lambda_grid, regularization_sweep, Fit, Model, SweepResult};
use crate::trajectory::{split_dataset, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub period_width_hours: u32,
    pub cosine_mode: CosineMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            period_width_hours: 4,
            cosine_mode: CosineMode::Similarity,
        }
    }
}

impl FeatureConfig {
    pub fn registry(&self, net: &RoadNetwork) -> Result<FeatureRegistry> {
        build_registry(
            net.class_vocabulary(),
            self.period_width_hours,
            self.cosine_mode,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of trajectories used for training (the rest is the test set).
    pub train_fraction: f64,
    /// Share of the training part held out for choosing λ.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            holdout_fraction: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub points: usize,
    pub decay: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            points: 20,
            decay: 0.6,
        }
    }
}

/// Trajectory partitions of the protocol.
pub struct Partition {
    pub fit: Vec<Trajectory>,
    pub holdout: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

pub fn partition(trajectories: &[Trajectory], split: &SplitConfig) -> Result<Partition> {
    if trajectories.len() < 3 {
        return Err(Error::Argument(format!(
            "the protocol needs at least 3 trajectories, got {}",
            trajectories.len()
        )));
    }
    let (train, test) = split_dataset(trajectories, split.train_fraction, split.seed)?;
    let (fit, holdout) = split_dataset(
        &train,
        1.0 - split.holdout_fraction,
        split.seed.wrapping_add(1),
    )?;
    Ok(Partition { fit, holdout, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub lambda: f64,
    pub nonzero: usize,
    pub holdout_point_error: f64,
    pub holdout_path_error: f64,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub fit_trajectories: usize,
    pub holdout_trajectories: usize,
    pub test_trajectories: usize,
    pub preparation: PreparationStats,
    pub l1: SelectedModel,
    pub l2: SelectedModel,
    pub l1_sweep: SweepResult,
    pub l2_sweep: SweepResult,
}

pub struct ProtocolRun<T> {
    pub outcome: ProtocolOutcome,
    /// Examples and scaler of the fit part.
    pub training: TrainingSet<T>,
    pub test_set: EvalSet<T>,
    /// Wall time of the ℓ1 sweep alone.
    pub l1_sweep_time: Duration,
    pub l1_model: Model<T>,
    pub l2_model: Model<T>,
}

/// Fits on the fit part, picks λ for both regularizers on the holdout part
/// (ℓ1 along the warm-started geometric sweep, ℓ2 on the same grid) and
/// evaluates the selected models on the test part.
pub fn run_protocol<T: Scalar>(
    net: &RoadNetwork,
    trajectories: &[Trajectory],
    lattice: &LatticeConfig,
    features: &FeatureConfig,
    split: &SplitConfig,
    sweep: &SweepConfig,
    opts: &OptimOptions,
) -> Result<ProtocolRun<T>> {
    let part = partition(trajectories, split)?;
    let registry = features.registry(net)?;
    let train = prepare_training::<T>(net, &registry, &part.fit, lattice)?;
    let mut holdout = EvalSet::<T>::new(net, &registry, &train.scaler, lattice, &part.holdout)?;
    let started = Instant::now();
    let (l1_sweep, l1_fits) = regularization_sweep(
        &train.examples,
        &mut holdout,
        sweep.points,
        sweep.decay,
        opts,
    )?;
    let l1_sweep_time = started.elapsed();
    let grid = lambda_grid(l1_sweep.lambda_max, sweep.points, sweep.decay)?;
    let (l2_sweep, l2_fits) = l2_sweep(&train.examples, &mut holdout, &grid, opts)?;
    let test = EvalSet::<T>::new(net, &registry, &train.scaler, lattice, &part.test)?;
    let select = |sweep: &SweepResult, fits: &[Fit<T>]| -> Result<(SelectedModel, Fit<T>)> {
        let rec = sweep.selected_record();
        let fit = fits[sweep.selected].clone();
        Ok((
            SelectedModel {
                lambda: rec.lambda,
                nonzero: rec.nonzero,
                holdout_point_error: rec.holdout_point_error,
                holdout_path_error: rec.holdout_path_error,
                test: test.evaluate(&fit.theta)?,
            },
            fit,
        ))
    };
    let (l1, l1_fit) = select(&l1_sweep, &l1_fits)?;
    let (l2, l2_fit) = select(&l2_sweep, &l2_fits)?;
    let model = |fit| Model::new(fit, registry.clone(), train.scaler.clone(), *lattice);
    let (l1_model, l2_model) = (model(l1_fit)?, model(l2_fit)?);
    Ok(ProtocolRun {
        outcome: ProtocolOutcome {
            fit_trajectories: part.fit.len(),
            holdout_trajectories: part.holdout.len(),
            test_trajectories: part.test.len(),
            preparation: train.stats.clone(),
            l1,
            l2,
            l1_sweep,
            l2_sweep,
        },
        training: train,
        test_set: test,
        l1_sweep_time,
        l1_model,
        l2_model,
    })
}
