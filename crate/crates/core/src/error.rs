use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported spatial dimension {0} (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("at least 2 subdivisions per axis are required, got {0}")]
    TooFewSubdivisions(usize),

    #[error("coefficient sample {value} at {point:?} is not positive")]
    NonPositiveCoefficient { value: f64, point: Vec<f64> },

    #[error("coefficient sample {value} at {point:?} lies outside the declared bounds [{min}, {max}]")]
    CoefficientOutOfBounds { value: f64, point: Vec<f64>, min: f64, max: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in field at index {0}")]
    NonFinite(usize),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { what: &'static str, iterations: usize, residual: f64 },

    #[error("Krylov seed vector is zero")]
    ZeroSeed,

    #[error("Krylov rank {k} out of range 1..={n_dof}")]
    RankOutOfRange { k: usize, n_dof: usize },

    #[error("rank {k} below sqrt(rho) = {sqrt_rho:.3}: error bound not applicable, increase k")]
    BoundNotApplicable { k: usize, sqrt_rho: f64 },

    #[error("(1 - exp(-z))^-1 is singular near z = 0: T * mu_min = {0:e}")]
    SingularFunction(f64),

    #[error("dense oracle limited to {cap} unknowns, problem has {n_dof}")]
    OracleTooLarge { n_dof: usize, cap: usize },

    #[error("fixed-point map is not contracting (observed ratio {ratio:.4}); increase k")]
    NonContraction { ratio: f64 },

    #[error("singular block in elimination sweep at spatial index {0}")]
    SingularBlock(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
