use thiserror::Error;

/// Errors surfaced by the estimation library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no path from node {origin} to node {dest}")]
    Unreachable { origin: usize, dest: usize },

    #[error("linear system is singular (pivot {pivot:.3e} at step {step})")]
    Singular { step: usize, pivot: f64 },

    #[error("walk exceeded {max_steps} steps {attempts} times in a row")]
    TrappedWalk { max_steps: usize, attempts: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("objective diverged at iteration {iter} (value {value})")]
    Diverged { iter: usize, value: f64 },

    #[error("proposal distribution misses path {0}")]
    ProposalSupport(String),

    #[error("observation {index}: {msg}")]
    Observation { index: usize, msg: String },

    #[error("partition integral did not converge: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
