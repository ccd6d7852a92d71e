use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parity flags inconsistent: {0}")]
    ParityMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resonance-like degeneracy: |b1| = {b1:.3e} below threshold {threshold:.1e}")]
    ResonanceDegeneracy { b1: f64, threshold: f64 },

    #[error("asymptotic fit failed: {0}")]
    FitFailure(String),

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NewtonMaxIters { iters: usize, residual: f64 },

    #[error("Newton basin failure: residual increased twice (last {residual:.3e})")]
    NewtonBasinFailure { residual: f64 },

    #[error("Newton Jacobian singular (condition estimate {cond:.3e})")]
    NewtonSingularJacobian { cond: f64 },

    #[error("grid coverage failure: {0}")]
    CoverageFailure(String),

    #[error("spectral tail fraction {fraction:.3e} exceeds {limit:.1e} at t = {t:.6}; resolution exhausted")]
    UnderResolved { fraction: f64, limit: f64, t: f64 },

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("snapshot gap too large for differencing: {0}")]
    SnapshotGap(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
