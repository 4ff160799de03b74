#![allow(dead_code)]

use crfmatch::crf::{
    Chain, FeaturizedChain, Mask, NodeFeatures, ParamBlock, Potentials, TrainingExample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A lattice-shaped chain: `obs` point sets interleaved with path sets.
/// Every path state has one start state in the point set before it and one
/// end state in the point set after it.
pub fn random_lattice_chain(rng: &mut impl Rng, max_obs: usize, max_states: usize) -> Chain {
    loop {
        let obs = rng.random_range(1..=max_obs);
        let points: Vec<usize> = (0..obs).map(|_| rng.random_range(1..=max_states)).collect();
        let mut counts = Vec::new();
        let mut masks = Vec::new();
        for t in 0..obs {
            counts.push(points[t]);
            if t + 1 < obs {
                let n = rng.random_range(1..=max_states);
                let starts: Vec<usize> = (0..n).map(|_| rng.random_range(0..points[t])).collect();
                let ends: Vec<usize> = (0..n).map(|_| rng.random_range(0..points[t + 1])).collect();
                masks.push(Mask::from_fn(points[t], n, |r, c| starts[c] == r));
                masks.push(Mask::from_fn(n, points[t + 1], |r, c| ends[r] == c));
                counts.push(n);
            }
        }
        let chain = Chain::new(counts, masks).unwrap();
        if chain.count_sequences() >= 1.0 {
            return chain;
        }
    }
}

/// A chain with arbitrary random masks that still admits a full sequence.
pub fn random_masked_chain(rng: &mut impl Rng, max_nodes: usize, max_states: usize) -> Chain {
    loop {
        let n = rng.random_range(1..=max_nodes);
        let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_states)).collect();
        let masks = counts
            .windows(2)
            .map(|w| Mask::from_fn(w[0], w[1], |_, _| rng.random_bool(0.6)))
            .collect();
        let chain = Chain::new(counts, masks).unwrap();
        if chain.count_sequences() >= 1.0 {
            return chain;
        }
    }
}

pub fn random_potentials(rng: &mut impl Rng, chain: &Chain, scale: f64) -> Potentials<f64> {
    Potentials::new(
        chain
            .state_counts()
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-scale..scale)).collect())
            .collect(),
    )
}

/// Small integer potentials, so that equal scores are exactly equal.
pub fn integer_potentials(rng: &mut impl Rng, chain: &Chain) -> Potentials<f64> {
    Potentials::new(
        chain
            .state_counts()
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-2..=2) as f64).collect())
            .collect(),
    )
}

/// Every mask-compatible full label sequence, in lexicographic order.
pub fn all_sequences(chain: &Chain) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; chain.len()];
    loop {
        if chain.is_consistent(&cur) {
            out.push(cur.clone());
        }
        let mut i = chain.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < chain.states(i) {
                break;
            }
            cur[i] = 0;
        }
    }
}

pub fn score(pot: &Potentials<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| pot.node(i)[l])
        .sum()
}

/// Exhaustive enumeration results.
pub struct Enumerated {
    pub sequences: Vec<Vec<usize>>,
    pub scores: Vec<f64>,
    pub log_z: f64,
    pub marginals: Vec<Vec<f64>>,
    /// Highest-scoring sequence; ties go to the sequence whose last label is
    /// smallest, then the one before, and so on.
    pub best: Vec<usize>,
    pub best_score: f64,
}

pub fn enumerate(chain: &Chain, pot: &Potentials<f64>) -> Enumerated {
    let sequences = all_sequences(chain);
    let scores: Vec<f64> = sequences.iter().map(|s| score(pot, s)).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z_scaled: f64 = scores.iter().map(|s| (s - top).exp()).sum();
    let log_z = top + z_scaled.ln();
    let mut marginals: Vec<Vec<f64>> = chain.state_counts().iter().map(|&n| vec![0.0; n]).collect();
    for (seq, s) in sequences.iter().zip(&scores) {
        let p = (s - log_z).exp();
        for (i, &l) in seq.iter().enumerate() {
            marginals[i][l] += p;
        }
    }
    let best = sequences
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == top)
        .map(|(seq, _)| seq.clone())
        .min_by(|a, b| a.iter().rev().cmp(b.iter().rev()))
        .unwrap();
    Enumerated {
        sequences,
        scores,
        log_z,
        marginals,
        best,
        best_score: top,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Random feature rows on a lattice chain: point nodes share one block and
/// path nodes another, as in the real model.
pub fn random_featurized(
    rng: &mut impl Rng,
    chain: Chain,
    point_dim: usize,
    path_dim: usize,
) -> FeaturizedChain<f64> {
    let point = ParamBlock {
        offset: 0,
        dim: point_dim,
    };
    let path = ParamBlock {
        offset: point_dim,
        dim: path_dim,
    };
    let nodes = (0..chain.len())
        .map(|i| {
            let block = if i % 2 == 0 { point } else { path };
            let rows = (0..chain.states(i))
                .map(|_| (0..block.dim).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            NodeFeatures::new(block, rows).unwrap()
        })
        .collect();
    FeaturizedChain::new(chain, nodes, point_dim + path_dim).unwrap()
}

pub fn random_example(
    rng: &mut impl Rng,
    point_dim: usize,
    path_dim: usize,
) -> TrainingExample<f64> {
    let chain = random_lattice_chain(rng, 4, 3);
    let seqs = all_sequences(&chain);
    let labels = seqs[rng.random_range(0..seqs.len())].clone();
    TrainingExample::new(random_featurized(rng, chain, point_dim, path_dim), labels).unwrap()
}

/// Like [`random_example`], but with at least two observations and two states
/// per node, so that no weight has an identically zero gradient.
pub fn random_informative_example(
    rng: &mut impl Rng,
    point_dim: usize,
    path_dim: usize,
) -> TrainingExample<f64> {
    loop {
        let ex = random_example(rng, point_dim, path_dim);
        let counts = ex.features.chain().state_counts();
        if counts.len() >= 3 && counts.iter().all(|&n| n >= 2) {
            return ex;
        }
    }
}

pub fn random_theta(rng: &mut impl Rng, m: usize, scale: f64) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Log-likelihood and gradient by enumeration.
pub fn enumerated_likelihood(examples: &[TrainingExample<f64>], theta: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for ex in examples {
        let fc = &ex.features;
        let pot = crfmatch::crf::compute_potentials(fc, theta).unwrap();
        let e = enumerate(fc.chain(), &pot);
        value += score(&pot, &ex.labels) - e.log_z;
        for (i, node) in fc.nodes().iter().enumerate() {
            let b = node.block;
            for (k, &x) in node.row(ex.labels[i]).iter().enumerate() {
                grad[b.offset + k] += x;
            }
            for (s, &p) in e.marginals[i].iter().enumerate() {
                for (k, &x) in node.row(s).iter().enumerate() {
                    grad[b.offset + k] -= p * x;
                }
            }
        }
    }
    (value, grad)
}
