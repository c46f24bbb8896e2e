//! Sparse storage, LIBSVM ingestion and the matrix kernels the solvers consume.
//!
//! The data matrix `X` is stored feature-major: rows are features (`d`),
//! columns are data points (`n`). Every kernel here is pure; flop charges are
//! reported through [`FlopCount`] so callers can credit their own counters.

mod csr;
mod dense;
mod gram;
mod libsvm;
mod selector;

pub use csr::CsrMatrix;
pub use dense::{condition_number, Cholesky, DenseMatrix};
pub use gram::{gram_cols, gram_cols_counted, gram_rows, gram_rows_counted};
pub use libsvm::{parse_libsvm, read_libsvm_file, write_libsvm};
pub use selector::BlockSelector;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("matrix is not symmetric (max |A - A^T| = {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("invalid block selector: {0}")]
    InvalidSelector(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SparseError {
    fn from(e: std::io::Error) -> Self {
        SparseError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// Floating-point work of one kernel invocation.
///
/// `charged` follows the dense-output accounting used for the cost bounds
/// (e.g. `2 * rows * nnz` for a Gram product); `actual` counts the
/// multiply-adds that really happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCount {
    pub charged: u64,
    pub actual: u64,
}

impl FlopCount {
    pub fn exact(flops: u64) -> Self {
        FlopCount {
            charged: flops,
            actual: flops,
        }
    }
}

impl std::ops::Add for FlopCount {
    type Output = FlopCount;
    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount {
            charged: self.charged + rhs.charged,
            actual: self.actual + rhs.actual,
        }
    }
}

impl std::ops::AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: FlopCount) {
        *self = *self + rhs;
    }
}
