use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("rank-deficient input: column {0} is linearly dependent on the previous ones")]
    RankDeficient(usize),
    #[error("singular linear system")]
    Singular,
    #[error("degree {value:e} at row {index} is too small to invert")]
    DegenerateDegree { index: usize, value: f64 },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("differentiation graph is not acyclic at node {0}")]
    GraphCycle(usize),
    #[error("labelings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        source: alloc::boxed::Box<Error>,
    },
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::Error::Shape(alloc::format!($($arg)*))
    };
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

pub(crate) use {invalid, shape_err};
