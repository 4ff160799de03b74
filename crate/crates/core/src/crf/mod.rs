//! Exact inference on chain-structured CRFs whose pairwise factors are hard
//! compatibility masks.
//!
//! Every node carries a set of states with unary log-potentials; adjacent
//! nodes are linked by a boolean mask of allowed state pairs. Forbidden pairs
//! contribute a zero factor, allowed pairs a unit factor.

mod chain;
mod inference;
mod likelihood;

pub use chain::{Chain, Mask};
pub use inference::{
    forward_backward, sequence_log_probability, viterbi_decode, InferenceResult, MatchResult,
    Potentials,
};
pub use likelihood::{
    compute_potentials, log_likelihood_and_gradient, FeaturizedChain, NodeFeatures, ParamBlock,
    TrainingExample,
};
