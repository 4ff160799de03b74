use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

use super::Chain;

/// Unary log-potentials, one vector per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials<T> {
    node: Vec<Vec<T>>,
}

impl<T: Scalar> Potentials<T> {
    pub fn new(node: Vec<Vec<T>>) -> Self {
        Self { node }
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.node[i]
    }

    pub fn nodes(&self) -> &[Vec<T>] {
        &self.node
    }

    fn check(&self, chain: &Chain) -> Result<()> {
        if self.node.len() != chain.len() {
            return Err(Error::Inference(format!(
                "potentials cover {} nodes, chain has {}",
                self.node.len(),
                chain.len()
            )));
        }
        for (i, p) in self.node.iter().enumerate() {
            if p.len() != chain.states(i) {
                return Err(Error::Inference(format!(
                    "node {i}: {} potentials for {} states",
                    p.len(),
                    chain.states(i)
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Inference(format!("node {i}: non-finite potential")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult<T> {
    /// Log partition function from the forward pass.
    pub log_z: T,
    /// The same quantity from the backward pass.
    pub log_z_backward: T,
    /// Per node, per state posterior probability.
    pub marginals: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    /// Chosen state index per node.
    pub states: Vec<usize>,
    /// Sum of the chosen log-potentials.
    pub score: T,
    pub log_probability: T,
}

fn forward<T: Scalar>(chain: &Chain, pot: &Potentials<T>) -> Result<Vec<Vec<T>>> {
    let mut alpha: Vec<Vec<T>> = Vec::with_capacity(chain.len());
    alpha.push(pot.node(0).to_vec());
    for i in 1..chain.len() {
        let prev = &alpha[i - 1];
        let mask = chain.mask(i - 1);
        let cur: Vec<T> = pot
            .node(i)
            .iter()
            .enumerate()
            .map(|(c, &p)| p + log_sum_exp(mask.predecessors(c).iter().map(|&r| prev[r])))
            .collect();
        if cur.iter().all(|v| *v == T::neg_infinity()) {
            return Err(Error::Inference(format!(
                "node {i}: every state is cut off by the compatibility mask"
            )));
        }
        alpha.push(cur);
    }
    Ok(alpha)
}

fn backward<T: Scalar>(chain: &Chain, pot: &Potentials<T>) -> Vec<Vec<T>> {
    let n = chain.len();
    let mut beta = vec![Vec::new(); n];
    beta[n - 1] = vec![T::zero(); chain.states(n - 1)];
    for i in (0..n - 1).rev() {
        let mask = chain.mask(i);
        let next_pot = pot.node(i + 1);
        let next = &beta[i + 1];
        beta[i] = (0..chain.states(i))
            .map(|r| log_sum_exp(mask.successors(r).iter().map(|&c| next_pot[c] + next[c])))
            .collect();
    }
    beta
}

/// Log partition function and node marginals, computed in log space.
pub fn forward_backward<T: Scalar>(
    chain: &Chain,
    pot: &Potentials<T>,
) -> Result<InferenceResult<T>> {
    pot.check(chain)?;
    let alpha = forward(chain, pot)?;
    let beta = backward(chain, pot);
    let log_z = log_sum_exp(alpha[chain.len() - 1].iter().copied());
    let log_z_backward = log_sum_exp(pot.node(0).iter().zip(&beta[0]).map(|(&p, &b)| p + b));
    let marginals = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| (x + y - log_z).exp())
                .collect()
        })
        .collect();
    Ok(InferenceResult {
        log_z,
        log_z_backward,
        marginals,
    })
}

/// Highest-scoring compatible state sequence. Ties go to the lowest state
/// index, both for the final state and at each backtracking step.
pub fn viterbi_decode<T: Scalar>(chain: &Chain, pot: &Potentials<T>) -> Result<MatchResult<T>> {
    pot.check(chain)?;
    let n = chain.len();
    let mut delta: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    delta.push(pot.node(0).to_vec());
    back.push(Vec::new());
    for i in 1..n {
        let mask = chain.mask(i - 1);
        let prev = &delta[i - 1];
        let mut cur = Vec::with_capacity(chain.states(i));
        let mut ptr = Vec::with_capacity(chain.states(i));
        for (c, &p) in pot.node(i).iter().enumerate() {
            let mut best = T::neg_infinity();
            let mut arg = usize::MAX;
            for &r in mask.predecessors(c) {
                if prev[r] > best {
                    best = prev[r];
                    arg = r;
                }
            }
            cur.push(if arg == usize::MAX { best } else { best + p });
            ptr.push(arg);
        }
        if cur.iter().all(|v| *v == T::neg_infinity()) {
            return Err(Error::Inference(format!(
                "node {i}: every state is cut off by the compatibility mask"
            )));
        }
        delta.push(cur);
        back.push(ptr);
    }
    let (mut state, mut score) = (0, T::neg_infinity());
    for (s, &v) in delta[n - 1].iter().enumerate() {
        if v > score {
            score = v;
            state = s;
        }
    }
    let mut states = vec![0; n];
    states[n - 1] = state;
    for i in (1..n).rev() {
        state = back[i][state];
        states[i - 1] = state;
    }
    let alpha = forward(chain, pot)?;
    let log_z = log_sum_exp(alpha[n - 1].iter().copied());
    Ok(MatchResult {
        states,
        score,
        log_probability: score - log_z,
    })
}

/// `log P(labels)`: the summed chosen log-potentials minus `log Z`.
pub fn sequence_log_probability<T: Scalar>(
    chain: &Chain,
    pot: &Potentials<T>,
    labels: &[usize],
) -> Result<T> {
    pot.check(chain)?;
    if !chain.is_consistent(labels) {
        return Err(Error::Argument(
            "labels are out of range or violate a compatibility mask".into(),
        ));
    }
    let score: T = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| pot.node(i)[l])
        .sum();
    let alpha = forward(chain, pot)?;
    Ok(score - log_sum_exp(alpha[chain.len() - 1].iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::Mask;

    fn single(pots: Vec<f64>) -> (Chain, Potentials<f64>) {
        (
            Chain::new(vec![pots.len()], vec![]).unwrap(),
            Potentials::new(vec![pots]),
        )
    }

    #[test]
    fn single_node_partition_and_marginals() {
        let (c, p) = single(vec![1.0, 2.0]);
        let r = forward_backward(&c, &p).unwrap();
        let z = 1f64.exp() + 2f64.exp();
        assert!((r.log_z - z.ln()).abs() < 1e-15);
        assert!((r.marginals[0][0] - 1f64.exp() / z).abs() < 1e-15);
        assert!((r.marginals[0][1] - 2f64.exp() / z).abs() < 1e-15);
    }

    #[test]
    fn single_node_decode_and_probability() {
        let (c, p) = single(vec![0.3, 0.9, 0.1]);
        assert_eq!(viterbi_decode(&c, &p).unwrap().states, vec![1]);
        let (c, p) = single(vec![0.5, 0.5]);
        assert!((sequence_log_probability(&c, &p, &[1]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        // tie goes to the lowest index
        assert_eq!(viterbi_decode(&c, &p).unwrap().states, vec![0]);
    }

    #[test]
    fn shift_at_one_node_keeps_decode() {
        let chain = Chain::new(
            vec![2, 3, 2],
            vec![Mask::from_fn(2, 3, |r, c| c != r), Mask::full(3, 2)],
        )
        .unwrap();
        let p = Potentials::new(vec![vec![0.1, 0.7], vec![0.2, -0.4, 0.9], vec![0.0, 0.3]]);
        let mut shifted = p.clone();
        for v in &mut shifted.node[1] {
            *v += 17.5;
        }
        assert_eq!(
            viterbi_decode(&chain, &p).unwrap().states,
            viterbi_decode(&chain, &shifted).unwrap().states
        );
    }

    #[test]
    fn mask_violation_is_rejected() {
        let chain = Chain::new(vec![2, 2], vec![Mask::from_fn(2, 2, |r, c| r == c)]).unwrap();
        let p = Potentials::new(vec![vec![0.0; 2], vec![0.0; 2]]);
        assert!(matches!(
            sequence_log_probability(&chain, &p, &[0, 1]),
            Err(Error::Argument(_))
        ));
        assert!(
            (sequence_log_probability(&chain, &p, &[1, 1]).unwrap() - 0.5f64.ln()).abs() < 1e-15
        );
    }

    #[test]
    fn isolated_node_is_an_inference_error() {
        let chain = Chain::new(vec![2, 2], vec![Mask::from_fn(2, 2, |_, _| false)]).unwrap();
        let p = Potentials::new(vec![vec![0.0; 2], vec![0.0; 2]]);
        assert!(matches!(
            forward_backward(&chain, &p),
            Err(Error::Inference(_))
        ));
        assert!(matches!(
            viterbi_decode(&chain, &p),
            Err(Error::Inference(_))
        ));
    }

    #[test]
    fn non_finite_potentials_are_rejected() {
        let (c, _) = single(vec![0.0, 0.0]);
        let p = Potentials::new(vec![vec![0.0, f64::NAN]]);
        assert!(forward_backward(&c, &p).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let chain = Chain::new(
            vec![2, 3, 2],
            vec![Mask::from_fn(2, 3, |r, c| c != r), Mask::full(3, 2)],
        )
        .unwrap();
        let p32 = Potentials::new(vec![
            vec![0.1f32, 0.7],
            vec![0.2, -0.4, 0.9],
            vec![0.0, 0.3],
        ]);
        let p64 = Potentials::new(
            p32.nodes()
                .iter()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .collect(),
        );
        let r32 = forward_backward(&chain, &p32).unwrap();
        let r64 = forward_backward(&chain, &p64).unwrap();
        assert!((r32.log_z as f64 - r64.log_z).abs() < 1e-5);
        assert_eq!(
            viterbi_decode(&chain, &p32).unwrap().states,
            viterbi_decode(&chain, &p64).unwrap().states
        );
    }
}
