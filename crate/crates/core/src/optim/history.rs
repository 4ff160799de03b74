use std::collections::VecDeque;

use crate::scalar::Scalar;

/// Correction pairs for the limited-memory inverse-Hessian approximation.
pub(super) struct History<T> {
    memory: usize,
    pairs: VecDeque<(Vec<T>, Vec<T>, T)>,
}

impl<T: Scalar> History<T> {
    pub(super) fn new(memory: usize) -> Self {
        Self {
            memory: memory.max(1),
            pairs: VecDeque::new(),
        }
    }

    pub(super) fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub(super) fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless the curvature `sᵀy` is not safely positive.
    pub(super) fn push(&mut self, s: Vec<T>, y: Vec<T>) {
        let sy: T = s.iter().zip(&y).map(|(&a, &b)| a * b).sum();
        let yy: T = y.iter().map(|&b| b * b).sum();
        if !(sy > T::epsilon() * yy) || !(sy > T::zero()) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, T::one() / sy));
    }

    /// Two-loop recursion: returns `H·v`.
    pub(super) fn apply(&self, v: &[T]) -> Vec<T> {
        let mut q = v.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = *rho * s.iter().zip(&q).map(|(&a, &b)| a * b).sum::<T>();
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi = *qi - a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let sy: T = s.iter().zip(y).map(|(&a, &b)| a * b).sum();
            let yy: T = y.iter().map(|&b| b * b).sum();
            let gamma = sy / yy;
            for qi in q.iter_mut() {
                *qi = *qi * gamma;
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * y.iter().zip(&q).map(|(&a, &b)| a * b).sum::<T>();
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi = *qi + (a - b) * si;
            }
        }
        q
    }
}
