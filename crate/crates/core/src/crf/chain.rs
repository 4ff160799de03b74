use crate::error::{Error, Result};

/// Allowed state pairs between two adjacent nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
    /// For each column, the allowed rows in ascending order.
    preds: Vec<Vec<usize>>,
    /// For each row, the allowed columns in ascending order.
    succs: Vec<Vec<usize>>,
}

impl Mask {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut allowed: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut cells = vec![false; rows * cols];
        let mut preds = vec![Vec::new(); cols];
        let mut succs = vec![Vec::new(); rows];
        for r in 0..rows {
            for c in 0..cols {
                if allowed(r, c) {
                    cells[r * cols + c] = true;
                    preds[c].push(r);
                    succs[r].push(c);
                }
            }
        }
        Self {
            rows,
            cols,
            allowed: cells,
            preds,
            succs,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| true)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.cols + col]
    }

    #[inline]
    pub fn predecessors(&self, col: usize) -> &[usize] {
        &self.preds[col]
    }

    #[inline]
    pub fn successors(&self, row: usize) -> &[usize] {
        &self.succs[row]
    }
}

/// Node state counts plus the masks between consecutive nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    state_counts: Vec<usize>,
    masks: Vec<Mask>,
}

impl Chain {
    pub fn new(state_counts: Vec<usize>, masks: Vec<Mask>) -> Result<Self> {
        if state_counts.is_empty() {
            return Err(Error::Argument("a chain needs at least one node".into()));
        }
        if masks.len() + 1 != state_counts.len() {
            return Err(Error::Argument(format!(
                "{} nodes need {} masks, got {}",
                state_counts.len(),
                state_counts.len() - 1,
                masks.len()
            )));
        }
        if let Some(i) = state_counts.iter().position(|&n| n == 0) {
            return Err(Error::Argument(format!("node {i} has no states")));
        }
        for (i, m) in masks.iter().enumerate() {
            if m.rows != state_counts[i] || m.cols != state_counts[i + 1] {
                return Err(Error::Argument(format!(
                    "mask {i} is {}x{} but nodes have {} and {} states",
                    m.rows,
                    m.cols,
                    state_counts[i],
                    state_counts[i + 1]
                )));
            }
        }
        Ok(Self {
            state_counts,
            masks,
        })
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.state_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_counts.is_empty()
    }

    pub fn states(&self, node: usize) -> usize {
        self.state_counts[node]
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.state_counts
    }

    /// Mask between `node` and `node + 1`.
    pub fn mask(&self, node: usize) -> &Mask {
        &self.masks[node]
    }

    /// Whether `labels` names one valid state per node and respects every mask.
    pub fn is_consistent(&self, labels: &[usize]) -> bool {
        labels.len() == self.len()
            && labels.iter().zip(&self.state_counts).all(|(&l, &n)| l < n)
            && self
                .masks
                .iter()
                .enumerate()
                .all(|(i, m)| m.allowed(labels[i], labels[i + 1]))
    }

    /// Number of mask-compatible full state sequences.
    pub fn count_sequences(&self) -> f64 {
        let mut counts = vec![1.0; self.state_counts[0]];
        for m in &self.masks {
            counts = (0..m.cols)
                .map(|c| m.predecessors(c).iter().map(|&r| counts[r]).sum())
                .collect();
        }
        counts.iter().sum()
    }
}
