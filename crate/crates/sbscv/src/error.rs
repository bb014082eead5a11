use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension {dim} exceeds the cap of {cap}")]
    Resource { dim: usize, cap: usize },

    #[error("wavepacket mass near the grid edge is {mass:.3e} (limit 1e-12)")]
    Boundary { mass: f64 },

    #[error("interval [{a}, {b}) contains no grid point")]
    EmptyInterval { a: f64, b: f64 },

    #[error("branch has zero weight")]
    EmptyBranch,

    #[error("candidate normalisation {norm:.3e} is below 1e-12")]
    DegenerateCandidate { norm: f64 },

    #[error("environment of dimension {dim} cannot host {cells} orthogonal projectors")]
    RankStarvation { dim: usize, cells: usize },

    #[error("oscillator truncation at dim {dim} changes the characteristic function by {change:.3e}")]
    Truncation { dim: usize, change: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("config field `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
