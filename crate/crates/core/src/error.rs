use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("input-domain error: {0}")]
    InputDomain(String),

    /// A Hamiltonian spec file could not be parsed or violates its contract.
    #[error("invalid Hamiltonian spec: {0}")]
    InvalidSpec(String),

    /// The requested parameters need more simulated qubits than allowed.
    #[error(
        "capacity exceeded: {qubits} simulated qubits > cap {cap}; relax {parameter} ({detail})"
    )]
    Capacity {
        qubits: usize,
        cap: usize,
        parameter: String,
        detail: String,
    },

    /// An iterative numerical routine did not converge.
    #[error("numerical convergence failure: {0}")]
    Convergence(String),

    /// A state did not satisfy the precondition of a circuit primitive.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A planned or forced parameter set violates a required invariant.
    #[error("planner invariant violated: {0}")]
    PlannerInvariant(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InputDomain(msg.into()))
}
