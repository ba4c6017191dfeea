//! Error type shared by every module of the laboratory.

use thiserror::Error;

/// Errors produced by the geometric and numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A 2-form that was required to be J-anti-invariant is not.
    #[error("input 2-form is not J-anti-invariant (residual {residual:.3e} > tol {tol:.3e})")]
    InputNotAntiInvariant { residual: f64, tol: f64 },

    /// A metric failed the positivity check.
    #[error("metric is not positive definite ({0})")]
    DegenerateMetric(String),

    /// A metric/almost-complex-structure pair is not compatible.
    #[error("(g, J) pair is not compatible (residual {residual:.3e} > tol {tol:.3e})")]
    IncompatiblePair { residual: f64, tol: f64 },

    /// A 2-form does not satisfy the self-duality + norm conditions that
    /// characterise fundamental forms of g-compatible structures.
    #[error("2-form is not on the twistor fiber ({0})")]
    NotOnTwistorFiber(String),

    /// Exterior derivative applied to a top-degree form.
    #[error("exterior derivative of a degree-{0} form on a 4-manifold")]
    DegreeOverflow(usize),

    /// An inner iterative solve failed to reach its tolerance.
    #[error("iterative solver failed to converge: {0}")]
    SolverDivergence(String),

    /// A detected kernel/basis dimension disagrees with the topological value.
    #[error("dimension mismatch: expected {expected}, detected {detected} ({context})")]
    DimensionMismatch {
        expected: usize,
        detected: usize,
        context: String,
    },

    /// The eigenvalue cluster near zero cannot be separated unambiguously.
    #[error("kernel gap undetected: gap ratio {gap_ratio:.3e} below {required:.3e}")]
    GapUndetected { gap_ratio: f64, required: f64 },

    /// A family constructor received data violating its pointwise norm constraint.
    #[error("pointwise norm constraint violated: {0}")]
    NormViolation(String),

    /// Two almost complex structures expected to differ agree up to sign.
    #[error("almost complex structures are identical up to sign")]
    IdenticalStructures,

    /// Nilmanifold structure constants fail the Jacobi identity.
    #[error("structure constants violate the Jacobi identity (d^2 != 0, residual {0:.3e})")]
    JacobiViolation(f64),

    /// Structure constants do not define a nilpotent Lie algebra.
    #[error("Lie algebra is not nilpotent: lower central series stabilises at dimension {0}")]
    NotNilpotent(usize),

    /// Requested invariant-model preset does not exist.
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    /// Operation needs invariant (constant-coefficient) data.
    #[error("operation supports invariant data only: {0}")]
    UnsupportedNonInvariant(String),

    /// The global frame of the anti-invariant bundle degenerates.
    #[error("anti-invariant frame degenerates: {0}")]
    FrameDegenerate(String),

    /// Right-hand side of the gauge-fixed linear solve has a component in the
    /// excluded harmonic space.
    #[error("right-hand side not in the operator range (harmonic defect {0:.3e})")]
    RhsNotInRange(f64),

    /// Candidate symplectic form degenerated during a solve.
    #[error("candidate 2-form degenerates: square {min_square:.3e} at grid point {point}")]
    DegenerateCandidate { min_square: f64, point: usize },

    /// Outer Newton iteration failed.
    #[error("Newton iteration diverged after {iterations} steps (residual {residual:.3e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// Taming of the candidate form was lost and step damping could not recover it.
    #[error("taming lost at iteration {0} and not recovered by damping")]
    TamingLost(usize),

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed model or field file.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
