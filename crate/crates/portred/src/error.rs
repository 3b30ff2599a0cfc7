//! Crate error type.

use thiserror::Error;

/// Errors surfaced by mesh construction, assembly, condensation, spectral
/// space construction, the greedy, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Component or defect parameters that cannot produce a valid mesh.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Two meshes whose shared edges do not coincide node for node.
    #[error("port mismatch: {0}")]
    PortMismatch(String),

    /// Operator or material parameters outside their admissible range.
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// An element mapping degenerated during assembly.
    #[error("degenerate element {element}: non-positive Jacobian determinant {det:.3e}")]
    DegenerateElement { element: usize, det: f64 },

    /// A matrix expected to be symmetric positive definite failed to factor.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A solve context is missing the Dirichlet closure it needs.
    #[error("missing Dirichlet closure: {0}")]
    MissingDirichlet(String),

    /// A reduced basis or frame with linearly dependent columns.
    #[error("linearly dependent basis: {0}")]
    DependentBasis(String),

    /// Problem size exceeding the dense-solver budget.
    #[error("problem too large for dense solves: {0}")]
    TooLarge(String),

    /// A tolerance that cannot be met with the available eigenpairs.
    #[error("tolerance unreachable: {0}")]
    ToleranceUnreachable(String),

    /// Greedy iteration cap exceeded.
    #[error("greedy failed to terminate: {0}")]
    GreedyStalled(String),

    /// Malformed input files or configs.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
