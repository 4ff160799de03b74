//! Regularized maximum-likelihood fitting of the tied weight vector.

use std::fs;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::crf::{log_likelihood_and_gradient, TrainingExample};
use crate::error::{Error, Result};
use crate::features::{FeatureRegistry, Scaler};
use crate::lattice::LatticeConfig;
use crate::optim::{minimize_l1, minimize_smooth, pseudo_gradient, OptimOptions};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    L1,
    L2,
}

impl std::fmt::Display for Regularizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regularizer::L1 => "l1",
            Regularizer::L2 => "l2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub iterations: usize,
    /// Regularized log-likelihood at the returned weights.
    pub objective: f64,
    /// ∞-norm of the regularized (pseudo-)gradient at the returned weights.
    pub grad_norm: f64,
    pub converged: bool,
    pub num_examples: usize,
    /// Regularized log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

/// Weights plus their training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub theta: Vec<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> Fit<T> {
    pub fn nonzero(&self) -> usize {
        count_nonzero(&self.theta)
    }
}

pub fn count_nonzero<T: Scalar>(theta: &[T]) -> usize {
    theta.iter().filter(|w| !w.is_zero()).count()
}

fn dimension<T: Scalar>(examples: &[TrainingExample<T>]) -> Result<usize> {
    let first = examples
        .first()
        .ok_or_else(|| Error::Argument("training needs at least one example".into()))?;
    let m = first.features.num_params();
    if let Some(bad) = examples.iter().find(|e| e.features.num_params() != m) {
        return Err(Error::Model(format!(
            "examples disagree on parameter count: {m} vs {}",
            bad.features.num_params()
        )));
    }
    Ok(m)
}

fn negate_trace(trace: Vec<f64>) -> Vec<f64> {
    trace.into_iter().map(|v| -v).collect()
}

fn negate_error(e: Error) -> Error {
    match e {
        Error::Training { message, trace } => Error::Training {
            message,
            trace: negate_trace(trace),
        },
        other => other,
    }
}

/// Maximizes `ℓ(θ) − λ2·Σθ²` from `θ = 0`.
pub fn train_l2<T: Scalar>(
    examples: &[TrainingExample<T>],
    lambda2: T,
    opts: &OptimOptions,
) -> Result<Fit<T>> {
    let m = dimension(examples)?;
    if !(lambda2 >= T::zero()) {
        return Err(Error::Argument(format!(
            "l2 penalty must be >= 0, got {lambda2}"
        )));
    }
    let two = T::of(2.0);
    let mut objective = |x: &[T]| -> Result<(T, Vec<T>)> {
        let (ll, g) = log_likelihood_and_gradient(examples, x)?;
        let sq: T = x.iter().map(|&w| w * w).sum();
        let grad = g
            .iter()
            .zip(x)
            .map(|(&gi, &xi)| two * lambda2 * xi - gi)
            .collect();
        Ok((lambda2 * sq - ll, grad))
    };
    let report = minimize_smooth(&mut objective, vec![T::zero(); m], opts).map_err(negate_error)?;
    Ok(Fit {
        meta: TrainingMeta {
            regularizer: Regularizer::L2,
            lambda: lambda2.as_f64(),
            iterations: report.iterations,
            objective: -report.value.as_f64(),
            grad_norm: report.grad_norm.as_f64(),
            converged: report.converged,
            num_examples: examples.len(),
            trace: negate_trace(report.trace),
        },
        theta: report.x,
    })
}

/// Maximizes `ℓ(θ) − λ1·Σ|θ|`, starting from `warm_start` or `θ = 0`.
pub fn train_l1<T: Scalar>(
    examples: &[TrainingExample<T>],
    lambda1: T,
    opts: &OptimOptions,
    warm_start: Option<&[T]>,
) -> Result<Fit<T>> {
    let m = dimension(examples)?;
    let x0 = match warm_start {
        Some(w) if w.len() != m => {
            return Err(Error::Model(format!(
                "warm start has {} weights, expected {m}",
                w.len()
            )))
        }
        Some(w) => w.to_vec(),
        None => vec![T::zero(); m],
    };
    let mut objective = |x: &[T]| -> Result<(T, Vec<T>)> {
        let (ll, g) = log_likelihood_and_gradient(examples, x)?;
        Ok((-ll, g.into_iter().map(|v| -v).collect()))
    };
    let report = minimize_l1(&mut objective, x0, lambda1, opts).map_err(negate_error)?;
    Ok(Fit {
        meta: TrainingMeta {
            regularizer: Regularizer::L1,
            lambda: lambda1.as_f64(),
            iterations: report.iterations,
            objective: -report.value.as_f64(),
            grad_norm: report.grad_norm.as_f64(),
            converged: report.converged,
            num_examples: examples.len(),
            trace: negate_trace(report.trace),
        },
        theta: report.x,
    })
}

/// `‖∇ℓ(0)‖∞`: the smallest ℓ1 penalty at which `θ = 0` is optimal.
pub fn compute_lambda_max<T: Scalar>(examples: &[TrainingExample<T>]) -> Result<T> {
    let m = dimension(examples)?;
    let (_, g) = log_likelihood_and_gradient(examples, &vec![T::zero(); m])?;
    Ok(g.iter().fold(T::zero(), |a, v| a.max(v.abs())))
}

/// Largest violation of the ℓ1 optimality conditions at `theta`, i.e. the
/// ∞-norm of the pseudo-gradient of the negated objective.
pub fn l1_optimality_gap<T: Scalar>(
    examples: &[TrainingExample<T>],
    theta: &[T],
    lambda1: T,
) -> Result<T> {
    let (_, g) = log_likelihood_and_gradient(examples, theta)?;
    let neg: Vec<T> = g.into_iter().map(|v| -v).collect();
    Ok(pseudo_gradient(theta, &neg, lambda1)
        .into_iter()
        .fold(T::zero(), |a, v| a.max(v.abs())))
}

/// Holdout scoring used to pick a penalty along the sweep.
pub trait Holdout<T> {
    fn is_empty(&self) -> bool;
    /// `(point error rate, path error rate)` of the weights on the holdout set.
    fn error_rates(&mut self, theta: &[T]) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub nonzero: usize,
    pub holdout_point_error: f64,
    pub holdout_path_error: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub regularizer: Regularizer,
    pub lambda_max: f64,
    pub decay: f64,
    pub records: Vec<SweepRecord>,
    pub selected: usize,
}

impl SweepResult {
    pub fn selected_record(&self) -> &SweepRecord {
        &self.records[self.selected]
    }

    pub fn selected_lambda(&self) -> f64 {
        self.records[self.selected].lambda
    }
}

/// The geometric grid `λ_max · decay^k`, `k = 0..num_points`.
pub fn lambda_grid(lambda_max: f64, num_points: usize, decay: f64) -> Result<Vec<f64>> {
    if num_points < 2 {
        return Err(Error::Argument(format!(
            "a sweep needs at least 2 points, got {num_points}"
        )));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::Argument(format!(
            "sweep decay must lie in (0, 1), got {decay}"
        )));
    }
    if !(lambda_max > 0.0) {
        return Err(Error::Argument(format!(
            "the data give lambda_max = {lambda_max}; nothing to sweep"
        )));
    }
    Ok((0..num_points)
        .map(|k| lambda_max * decay.powi(k as i32))
        .collect())
}

fn select(records: &[SweepRecord]) -> usize {
    // first minimum over decreasing λ keeps the larger λ on ties
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.holdout_point_error < records[best].holdout_point_error {
            best = i;
        }
    }
    best
}

/// Warm-started ℓ1 fits along the geometric λ grid, scored on `holdout`.
/// Returns the sweep summary and the weights of every grid point.
pub fn regularization_sweep<T: Scalar>(
    train: &[TrainingExample<T>],
    holdout: &mut impl Holdout<T>,
    num_points: usize,
    decay: f64,
    opts: &OptimOptions,
) -> Result<(SweepResult, Vec<Fit<T>>)> {
    if holdout.is_empty() {
        return Err(Error::Argument(
            "the sweep needs a non-empty holdout set".into(),
        ));
    }
    let lambda_max = compute_lambda_max(train)?.as_f64();
    let grid = lambda_grid(lambda_max, num_points, decay)?;
    let mut records = Vec::with_capacity(grid.len());
    let mut fits: Vec<Fit<T>> = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let warm = fits.last().map(|f| f.theta.as_slice());
        let fit = train_l1(train, T::of(lambda), opts, warm)?;
        let (pe, qe) = holdout.error_rates(&fit.theta)?;
        records.push(SweepRecord {
            lambda,
            nonzero: fit.nonzero(),
            holdout_point_error: pe,
            holdout_path_error: qe,
            objective: fit.meta.objective,
            iterations: fit.meta.iterations,
            converged: fit.meta.converged,
        });
        fits.push(fit);
    }
    let selected = select(&records);
    Ok((
        SweepResult {
            regularizer: Regularizer::L1,
            lambda_max,
            decay,
            records,
            selected,
        },
        fits,
    ))
}

/// Cold-started ℓ2 fits over an explicit λ grid, scored on `holdout`.
pub fn l2_sweep<T: Scalar>(
    train: &[TrainingExample<T>],
    holdout: &mut impl Holdout<T>,
    grid: &[f64],
    opts: &OptimOptions,
) -> Result<(SweepResult, Vec<Fit<T>>)> {
    if holdout.is_empty() {
        return Err(Error::Argument(
            "the sweep needs a non-empty holdout set".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::Argument("the l2 sweep grid is empty".into()));
    }
    let mut records = Vec::with_capacity(grid.len());
    let mut fits = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fit = train_l2(train, T::of(lambda), opts)?;
        let (pe, qe) = holdout.error_rates(&fit.theta)?;
        records.push(SweepRecord {
            lambda,
            nonzero: fit.nonzero(),
            holdout_point_error: pe,
            holdout_path_error: qe,
            objective: fit.meta.objective,
            iterations: fit.meta.iterations,
            converged: fit.meta.converged,
        });
        fits.push(fit);
    }
    let selected = select(&records);
    Ok((
        SweepResult {
            regularizer: Regularizer::L2,
            lambda_max: grid[0],
            decay: if grid.len() > 1 {
                grid[1] / grid[0]
            } else {
                1.0
            },
            records,
            selected,
        },
        fits,
    ))
}

pub const MODEL_FORMAT: &str = "crfmatch-model";
pub const MODEL_VERSION: u32 = 1;

/// A trained matcher: weights, feature definitions, scaling and lattice settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub theta: Vec<T>,
    pub registry: FeatureRegistry,
    pub scaler: Scaler,
    pub lattice_config: LatticeConfig,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelFile<T> {
    format: String,
    version: u32,
    scalar: String,
    registry: FeatureRegistry,
    scaler: Scaler,
    lattice_config: LatticeConfig,
    meta: TrainingMeta,
    theta: Vec<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(
        fit: Fit<T>,
        registry: FeatureRegistry,
        scaler: Scaler,
        lattice_config: LatticeConfig,
    ) -> Result<Self> {
        let model = Self {
            theta: fit.theta,
            registry,
            scaler,
            lattice_config,
            meta: fit.meta,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let m = self.registry.len();
        if self.theta.len() != m || self.scaler.len() != m {
            return Err(Error::Model(format!(
                "model has {} weights and {} scaler dimensions for {m} features",
                self.theta.len(),
                self.scaler.len()
            )));
        }
        if self.theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::Model("model weights must be finite".into()));
        }
        if self
            .scaler
            .min
            .iter()
            .zip(&self.scaler.max)
            .any(|(a, b)| !(a <= b))
        {
            return Err(Error::Model("scaler has min > max".into()));
        }
        self.lattice_config.validate()
    }

    pub fn nonzero(&self) -> usize {
        count_nonzero(&self.theta)
    }

    pub fn write_json(&self, writer: impl Write) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            scalar: T::NAME.to_string(),
            registry: self.registry.clone(),
            scaler: self.scaler.clone(),
            lattice_config: self.lattice_config,
            meta: self.meta.clone(),
            theta: self.theta.clone(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn read_json(reader: impl Read) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_reader(reader)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "not a model file: format {:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        if file.scalar != T::NAME {
            return Err(Error::Model(format!(
                "model stores {} weights, requested {}",
                file.scalar,
                T::NAME
            )));
        }
        let model = Self {
            theta: file.theta,
            registry: file.registry,
            scaler: file.scaler,
            lattice_config: file.lattice_config,
            meta: file.meta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_json(&mut buf)?;
        buf.push(b'\n');
        fs::write(path.as_ref(), buf).map_err(Error::file(&path))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::read_json(fs::File::open(path.as_ref()).map_err(Error::file(&path))?)
    }
}
