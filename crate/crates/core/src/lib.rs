//! Relational MDP toolkit: RDDL front-end, grounding, instance graphs and a
//! size-invariant graph-attention policy trained with actor-critic.

pub mod autodiff;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod model;
pub mod ground;
pub mod rddl;
pub mod sim;
pub mod train;

use thiserror::Error;

/// Top-level error for operations that span several stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] rddl::ParseError),
    #[error("validation error: {0}")]
    Validation(#[from] rddl::ValidationError),
    #[error("grounding error: {0}")]
    Ground(#[from] ground::GroundError),
    #[error("evaluation error: {0}")]
    Eval(#[from] ground::EvalError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
