use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),
    #[error("degenerate tetrahedron {tet}: volume {volume:e}")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("unsupported quadrature order {0} (supported: 1, 2, 4)")]
    UnsupportedQuadrature(usize),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("field violates the tangential boundary condition: {0}")]
    Boundary(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{solver} did not converge: relative residual {residual:e} after {iterations} iterations")]
    LinearSolve {
        solver: String,
        iterations: usize,
        residual: f64,
    },
    #[error("line search failed in stage p={p}, eps={eps:e} at Newton step {step}: {reason}")]
    LineSearch {
        p: f64,
        eps: f64,
        step: usize,
        reason: String,
    },
    #[error("Newton stage p={p}, eps={eps:e} did not converge: relative KKT residual {residual:e}")]
    NewtonStall { p: f64, eps: f64, residual: f64 },
    #[error("field is not curl-free: {0}")]
    NotCurlFree(String),
    #[error("eigen-iteration stagnated: {0}")]
    Stagnation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
