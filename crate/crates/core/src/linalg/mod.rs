//! Dense linear-algebra kernel: matrix exponential, neutral-stability
//! decomposition, consensus gain synthesis, stabilizing feedback, and the
//! regulator-equation solver.

mod decomp;
mod expm;
mod feedback;
mod regulator;
mod schur;

pub use decomp::{consensus_gain, neutral_stable_decompose, spectral_norm, NeutralDecomposition};
pub use expm::{expm, matrix_exponential};
pub use feedback::{closed_loop_abscissa, stabilizing_feedback, validate_feedback};
pub use regulator::{compute_k2, solve_regulator, RegulatorAgent, RegulatorSolution};
pub use schur::{ordered_real_schur, solve_sylvester, OrderedSchur};

/// Errors from the linear-algebra kernel.
#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: &'static str },
    #[error("input contains non-finite entries")]
    NonFiniteInput,
    #[error("matrix is not neutrally stable: eigenvalue {re}+{im}i has positive real part")]
    NotNeutrallyStable { re: f64, im: f64 },
    #[error("matrix is not neutrally stable: imaginary-axis eigenvalue {re}+{im}i is defective")]
    DefectiveEigenvalue { re: f64, im: f64 },
    #[error("real Schur iteration did not converge")]
    SchurFailed,
    #[error("pair is not stabilizable")]
    Unstabilizable,
    #[error("feedback synthesis failed: spectral abscissa {abscissa} exceeds -{margin}")]
    SynthesisFailed { abscissa: f64, margin: f64 },
    #[error("regulator equations inconsistent: residual {residual} above tolerance {tol}")]
    RegulatorInconsistent { residual: f64, tol: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
}
