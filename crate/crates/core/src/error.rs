use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square with dimension at least 1")]
    EmptyOrNonSquare,
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not Hermitian (max-norm defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("operator is not unitary (max-norm defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Hermitian eigendecomposition failed to converge")]
    EigenDecomposition,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid slot partition: {0}")]
    InvalidPartition(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("time {t} outside the protocol window [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },
    #[error("brute-force oracle limited to dimension {max}, got {dim}")]
    OracleTooLarge { dim: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
