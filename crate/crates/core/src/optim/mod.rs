//! Quasi-Newton minimizers generic over the scalar type.
//!
//! [`minimize_smooth`] is limited-memory BFGS with a backtracking Armijo line
//! search. [`minimize_l1`] minimizes `f(x) + λ‖x‖₁` with an orthant-projected
//! scaled sub-gradient scheme: steps follow the limited-memory scaling of the
//! pseudo-gradient, and every trial point is projected onto the orthant chosen
//! at the start of the step, so coordinates land on zero exactly instead of
//! crossing it.

mod history;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use self::history::History;

/// Objective to minimize: returns the value and gradient at `x`.
pub trait Objective<T> {
    fn evaluate(&mut self, x: &[T]) -> Result<(T, Vec<T>)>;
}

impl<T, F> Objective<T> for F
where
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    fn evaluate(&mut self, x: &[T]) -> Result<(T, Vec<T>)> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Stop when the (pseudo-)gradient ∞-norm falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of correction pairs kept by the quasi-Newton approximation.
    pub memory: usize,
    pub max_backtracks: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 500,
            memory: 10,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimReport<T> {
    pub x: Vec<T>,
    /// Objective at `x`, including the ℓ1 term for [`minimize_l1`].
    pub value: T,
    /// ∞-norm of the (pseudo-)gradient at `x`.
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn checked<T: Scalar>(value: T, trace: &[f64]) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Training {
            message: format!("objective became {value} during the line search"),
            trace: trace.to_vec(),
        })
    }
}

/// Limited-memory BFGS on a smooth objective.
pub fn minimize_smooth<T: Scalar>(
    objective: &mut impl Objective<T>,
    x0: Vec<T>,
    opts: &OptimOptions,
) -> Result<OptimReport<T>> {
    let tol = T::of(opts.tol);
    let mut x = x0;
    let (mut f, mut g) = objective.evaluate(&x)?;
    let mut trace = vec![checked(f, &[])?.as_f64()];
    let mut hist = History::new(opts.memory);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= tol;
    while !converged && iterations < opts.max_iter {
        let mut step = None;
        // quasi-Newton direction first, plain steepest descent as a fallback
        for attempt in 0..2 {
            if attempt == 1 {
                if hist.is_empty() {
                    break;
                }
                hist.clear();
            }
            let mut d: Vec<T> = hist.apply(&g).into_iter().map(|v| -v).collect();
            let mut slope = dot(&g, &d);
            if !(slope < T::zero()) {
                hist.clear();
                d = g.iter().map(|&v| -v).collect();
                slope = dot(&g, &d);
            }
            let mut alpha = if hist.is_empty() {
                T::one().min(T::one() / dot(&d, &d).sqrt())
            } else {
                T::one()
            };
            for _ in 0..opts.max_backtracks {
                let xn: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + alpha * di).collect();
                let (fnew, gnew) = objective.evaluate(&xn)?;
                let fnew = checked(fnew, &trace)?;
                if fnew <= f + T::of(ARMIJO) * alpha * slope {
                    step = Some((xn, fnew, gnew));
                    break;
                }
                alpha = alpha * T::of(0.5);
            }
            if step.is_some() {
                break;
            }
        }
        let Some((xn, fnew, gnew)) = step else {
            break;
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        hist.push(s, y);
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(f.as_f64());
        iterations += 1;
        converged = inf_norm(&g) <= tol;
    }
    Ok(OptimReport {
        grad_norm: inf_norm(&g),
        x,
        value: f,
        iterations,
        converged,
        trace,
    })
}

/// Pseudo-gradient of `f(x) + λ‖x‖₁`: the minimum-norm element of the
/// subdifferential, with sign conventions for a minimization.
pub fn pseudo_gradient<T: Scalar>(x: &[T], grad: &[T], lambda: T) -> Vec<T> {
    x.iter()
        .zip(grad)
        .map(|(&xi, &gi)| {
            if xi > T::zero() {
                gi + lambda
            } else if xi < T::zero() {
                gi - lambda
            } else if gi + lambda < T::zero() {
                gi + lambda
            } else if gi - lambda > T::zero() {
                gi - lambda
            } else {
                T::zero()
            }
        })
        .collect()
}

fn l1_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|v| v.abs()).sum()
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Minimizes `f(x) + λ‖x‖₁` with orthant projection.
pub fn minimize_l1<T: Scalar>(
    objective: &mut impl Objective<T>,
    x0: Vec<T>,
    lambda: T,
    opts: &OptimOptions,
) -> Result<OptimReport<T>> {
    if lambda < T::zero() {
        return Err(Error::Argument(format!(
            "l1 penalty must be >= 0, got {lambda}"
        )));
    }
    let tol = T::of(opts.tol);
    let mut x = x0;
    let (fs, mut g) = objective.evaluate(&x)?;
    let mut f = checked(fs + lambda * l1_norm(&x), &[])?;
    let mut trace = vec![f.as_f64()];
    let mut hist = History::new(opts.memory);
    let mut pg = pseudo_gradient(&x, &g, lambda);
    let mut iterations = 0;
    let mut converged = inf_norm(&pg) <= tol;
    while !converged && iterations < opts.max_iter {
        let mut step = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if hist.is_empty() {
                    break;
                }
                hist.clear();
            }
            let mut d: Vec<T> = hist.apply(&pg).into_iter().map(|v| -v).collect();
            // keep only components that descend along the pseudo-gradient
            for (di, &pi) in d.iter_mut().zip(&pg) {
                if *di * pi >= T::zero() {
                    *di = T::zero();
                }
            }
            if d.iter().all(|v| *v == T::zero()) {
                d = pg.iter().map(|&v| -v).collect();
            }
            let orthant: Vec<T> = x
                .iter()
                .zip(&pg)
                .map(|(&xi, &pi)| if xi != T::zero() { sign(xi) } else { sign(-pi) })
                .collect();
            let mut alpha = if hist.is_empty() {
                T::one().min(T::one() / dot(&d, &d).sqrt())
            } else {
                T::one()
            };
            for _ in 0..opts.max_backtracks {
                let xn: Vec<T> = x
                    .iter()
                    .zip(&d)
                    .zip(&orthant)
                    .map(|((&xi, &di), &oi)| {
                        let v = xi + alpha * di;
                        if sign(v) == oi {
                            v
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let (fs_new, gnew) = objective.evaluate(&xn)?;
                let fnew = checked(fs_new + lambda * l1_norm(&xn), &trace)?;
                let moved: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
                let decrease = dot(&pg, &moved);
                if decrease < T::zero() && fnew <= f + T::of(ARMIJO) * decrease {
                    step = Some((xn, fnew, gnew, moved));
                    break;
                }
                alpha = alpha * T::of(0.5);
            }
            if step.is_some() {
                break;
            }
        }
        let Some((xn, fnew, gnew, s)) = step else {
            break;
        };
        let y: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        hist.push(s, y);
        x = xn;
        f = fnew;
        g = gnew;
        pg = pseudo_gradient(&x, &g, lambda);
        trace.push(f.as_f64());
        iterations += 1;
        converged = inf_norm(&pg) <= tol;
    }
    Ok(OptimReport {
        grad_norm: inf_norm(&pg),
        x,
        value: f,
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `½ Σ a_i (x_i − c_i)²`, an ill-conditioned separable quadratic.
    fn quadratic(a: Vec<f64>, c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let f = x
                .iter()
                .zip(&a)
                .zip(&c)
                .map(|((xi, ai), ci)| 0.5 * ai * (xi - ci).powi(2))
                .sum();
            let g = x
                .iter()
                .zip(&a)
                .zip(&c)
                .map(|((xi, ai), ci)| ai * (xi - ci))
                .collect();
            Ok((f, g))
        }
    }

    #[test]
    fn smooth_finds_quadratic_minimum() {
        let mut obj = quadratic(vec![1.0, 10.0, 100.0], vec![1.0, -2.0, 0.5]);
        let r = minimize_smooth(&mut obj, vec![0.0; 3], &OptimOptions::default()).unwrap();
        assert!(r.converged);
        for (xi, ci) in r.x.iter().zip([1.0, -2.0, 0.5]) {
            assert!((xi - ci).abs() < 1e-6);
        }
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn smooth_handles_rosenbrock() {
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            Ok((
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ],
            ))
        };
        let opts = OptimOptions {
            max_iter: 2000,
            ..Default::default()
        };
        let r = minimize_smooth(&mut obj, vec![-1.2, 1.0], &opts).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn l1_soft_thresholds_separable_quadratic() {
        // argmin ½a(x−c)² + λ|x| = sign(c)·max(|c| − λ/a, 0)
        let a = vec![1.0, 4.0, 2.0, 1.0];
        let c = vec![3.0, 0.1, -2.0, 0.5];
        let lambda = 0.6;
        let mut obj = quadratic(a.clone(), c.clone());
        let r = minimize_l1(&mut obj, vec![0.0; 4], lambda, &OptimOptions::default()).unwrap();
        assert!(r.converged);
        for i in 0..4 {
            let expected = c[i].signum() * (c[i].abs() - lambda / a[i]).max(0.0);
            // a pseudo-gradient of at most tol bounds the error by tol / a
            assert!(
                (r.x[i] - expected).abs() <= 1e-5 / a[i],
                "{i}: {} vs {expected}",
                r.x[i]
            );
        }
        assert_eq!(r.x[1], 0.0);
    }

    #[test]
    fn l1_large_penalty_gives_exact_zero() {
        let mut obj = quadratic(vec![1.0, 2.0], vec![1.0, -1.0]);
        let r = minimize_l1(&mut obj, vec![0.0; 2], 5.0, &OptimOptions::default()).unwrap();
        assert_eq!(r.x, vec![0.0, 0.0]);
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn l1_zero_penalty_matches_smooth() {
        let mut a = quadratic(vec![1.0, 3.0], vec![2.0, -1.0]);
        let mut b = quadratic(vec![1.0, 3.0], vec![2.0, -1.0]);
        let r1 = minimize_l1(&mut a, vec![0.0; 2], 0.0, &OptimOptions::default()).unwrap();
        let r2 = minimize_smooth(&mut b, vec![0.0; 2], &OptimOptions::default()).unwrap();
        assert!((r1.value - r2.value).abs() < 1e-9);
    }

    #[test]
    fn pseudo_gradient_rules() {
        let pg = pseudo_gradient(
            &[0.0, 0.0, 0.0, 1.0, -1.0],
            &[0.5, -2.0, 2.0, 0.1, 0.1],
            1.0,
        );
        assert_eq!(pg, vec![0.0, -1.0, 1.0, 1.1, -0.9]);
    }

    #[test]
    fn non_finite_objective_is_a_training_error() {
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 0.5 {
                Ok((f64::NAN, vec![0.0]))
            } else {
                Ok((-x[0], vec![-1.0]))
            }
        };
        assert!(matches!(
            minimize_smooth(&mut obj, vec![0.0], &OptimOptions::default()),
            Err(Error::Training { .. })
        ));
    }

    #[test]
    fn single_precision_quadratic() {
        let mut obj = |x: &[f32]| -> Result<(f32, Vec<f32>)> {
            Ok((
                0.5 * (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![x[0] - 2.0, 2.0 * (x[1] + 1.0)],
            ))
        };
        let opts = OptimOptions {
            tol: 1e-4,
            ..Default::default()
        };
        let r = minimize_smooth(&mut obj, vec![0.0f32; 2], &opts).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3);
    }
}
