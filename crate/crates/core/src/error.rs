use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlockError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("velocity domain too small: Maxwellian tail mass {tail:.3e} in cell {cell} exceeds tolerance {tol:.3e}")]
    VelocityTail { cell: usize, tail: f64, tol: f64 },

    #[error("kernel matrix is not symmetric: |K[{i}][{l}] - K[{l}][{i}]| = {diff:.3e}")]
    AsymmetricKernel { i: usize, l: usize, diff: f64 },

    #[error("vacuum at cell {cell}: density {rho:.3e} is not above floor {floor:.3e}")]
    Vacuum { cell: usize, rho: f64, floor: f64 },

    #[error("mollified density {value:.3e} at cell {cell} underflows the vacuum floor")]
    MollifiedVacuum { cell: usize, value: f64 },

    #[error("CFL violation in {stage}: Courant number {courant:.4} exceeds {limit:.4}")]
    Cfl {
        stage: &'static str,
        courant: f64,
        limit: f64,
    },

    #[error("non-finite value produced by {stage} at t = {t:.6}")]
    NonFinite { stage: &'static str, t: f64 },

    #[error("negative density {value:.3e} produced by {stage} at t = {t:.6}")]
    Negative {
        stage: &'static str,
        t: f64,
        value: f64,
    },

    #[error("relative mass drift {drift:.3e} exceeds {limit:.1e} at t = {t:.6}")]
    MassDrift { t: f64, drift: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("gradient monitor tripped: |du/dx| = {value:.3e} exceeds {limit:.3e} at t = {t:.4}")]
    BlowUp { t: f64, value: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlockError>;
