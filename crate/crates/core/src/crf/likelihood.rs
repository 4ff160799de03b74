use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{forward_backward, Chain, Potentials};

/// Slice `offset..offset + dim` of the tied parameter vector used by a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub offset: usize,
    pub dim: usize,
}

/// Feature vectors of every state at one node, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures<T> {
    pub block: ParamBlock,
    values: Vec<T>,
}

impl<T: Scalar> NodeFeatures<T> {
    pub fn new(block: ParamBlock, rows: Vec<Vec<T>>) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * block.dim);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != block.dim {
                return Err(Error::Model(format!(
                    "state {s}: feature vector of length {}, expected {}",
                    row.len(),
                    block.dim
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { block, values })
    }

    pub fn states(&self) -> usize {
        self.values.len().checked_div(self.block.dim).unwrap_or(0)
    }

    pub fn row(&self, state: usize) -> &[T] {
        &self.values[state * self.block.dim..(state + 1) * self.block.dim]
    }
}

/// A chain together with the feature vectors of every state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedChain<T> {
    chain: Chain,
    nodes: Vec<NodeFeatures<T>>,
    num_params: usize,
}

impl<T: Scalar> FeaturizedChain<T> {
    pub fn new(chain: Chain, nodes: Vec<NodeFeatures<T>>, num_params: usize) -> Result<Self> {
        if nodes.len() != chain.len() {
            return Err(Error::Model(format!(
                "{} feature blocks for {} nodes",
                nodes.len(),
                chain.len()
            )));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.block.offset + n.block.dim > num_params {
                return Err(Error::Model(format!(
                    "node {i}: parameter block exceeds {num_params} parameters"
                )));
            }
            if n.block.dim > 0 && n.states() != chain.states(i) {
                return Err(Error::Model(format!(
                    "node {i}: {} feature rows for {} states",
                    n.states(),
                    chain.states(i)
                )));
            }
        }
        Ok(Self {
            chain,
            nodes,
            num_params,
        })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn nodes(&self) -> &[NodeFeatures<T>] {
        &self.nodes
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }
}

/// Log-potential of each state: the dot product of its feature vector with
/// the node's parameter block.
pub fn compute_potentials<T: Scalar>(
    fc: &FeaturizedChain<T>,
    theta: &[T],
) -> Result<Potentials<T>> {
    if theta.len() != fc.num_params {
        return Err(Error::Model(format!(
            "weight vector has {} entries, features expect {}",
            theta.len(),
            fc.num_params
        )));
    }
    let node = fc
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let w = &theta[n.block.offset..n.block.offset + n.block.dim];
            (0..fc.chain.states(i))
                .map(|s| {
                    if n.block.dim == 0 {
                        T::zero()
                    } else {
                        n.row(s).iter().zip(w).map(|(&x, &t)| x * t).sum()
                    }
                })
                .collect()
        })
        .collect();
    Ok(Potentials::new(node))
}

/// A featurized chain with the index of the true state at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<T> {
    pub features: FeaturizedChain<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> TrainingExample<T> {
    pub fn new(features: FeaturizedChain<T>, labels: Vec<usize>) -> Result<Self> {
        if !features.chain.is_consistent(&labels) {
            return Err(Error::Argument(
                "training labels violate the compatibility masks".into(),
            ));
        }
        Ok(Self { features, labels })
    }
}

/// Summed log-likelihood of the labeled sequences and its gradient
/// (empirical minus expected feature counts).
pub fn log_likelihood_and_gradient<T: Scalar>(
    examples: &[TrainingExample<T>],
    theta: &[T],
) -> Result<(T, Vec<T>)> {
    let mut value = T::zero();
    let mut grad = vec![T::zero(); theta.len()];
    for ex in examples {
        let fc = &ex.features;
        let pot = compute_potentials(fc, theta)?;
        let inf = forward_backward(&fc.chain, &pot)?;
        let score: T = ex
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| pot.node(i)[l])
            .sum();
        value = value + score - inf.log_z;
        for (i, node) in fc.nodes.iter().enumerate() {
            if node.block.dim == 0 {
                continue;
            }
            let g = &mut grad[node.block.offset..node.block.offset + node.block.dim];
            for (gk, &x) in g.iter_mut().zip(node.row(ex.labels[i])) {
                *gk = *gk + x;
            }
            for (s, &p) in inf.marginals[i].iter().enumerate() {
                if p == T::zero() {
                    continue;
                }
                for (gk, &x) in g.iter_mut().zip(node.row(s)) {
                    *gk = *gk - p * x;
                }
            }
        }
    }
    Ok((value, grad))
}
