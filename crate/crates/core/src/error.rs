use thiserror::Error;

/// Top-level error type for scenario validation and simulation runs.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("model state is not finite: {0}")]
    NonFinite(String),

    #[error(
        "network solver diverged at t={t_s:.6} s after {iterations} iterations \
         (max current mismatch {mismatch:.3e} pu)"
    )]
    SolverDiverged {
        t_s: f64,
        iterations: usize,
        mismatch: f64,
    },

    #[error("motor solver failed at t={t_s:.6} s: {source}")]
    Motor {
        t_s: f64,
        source: crate::dcload::motor::MotorError,
    },

    #[error(
        "generator instability at t={t_s:.6} s: |speed deviation| = {omega_pu:.4} pu exceeds 0.1"
    )]
    Instability { t_s: f64, omega_pu: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),
}

pub type SimResult<T> = Result<T, SimError>;
