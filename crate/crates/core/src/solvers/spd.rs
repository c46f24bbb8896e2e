use super::SolverError;
use crate::sparse::{Cholesky, DenseMatrix, SparseError};

/// Solves `A x = rhs` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let chol = Cholesky::factor(a).map_err(pivot_error)?;
    Ok(chol.solve(rhs)?)
}

/// [`solve_spd`], retrying once with a `1e-12 * trace / dim` diagonal shift.
/// Returns whether the shift was needed.
pub(crate) fn solve_spd_regularized(
    a: &DenseMatrix,
    rhs: &[f64],
) -> Result<(Vec<f64>, bool), SolverError> {
    match solve_spd(a, rhs) {
        Ok(x) => Ok((x, false)),
        Err(SolverError::Factorization { pivot, value }) => {
            let dim = a.n_rows().max(1) as f64;
            let shift = 1e-12 * a.trace().abs() / dim;
            log::warn!(
                "Cholesky pivot {pivot} = {value:e}; retrying with diagonal shift {shift:e}"
            );
            let mut shifted = a.clone();
            shifted.add_to_diagonal(shift);
            Ok((solve_spd(&shifted, rhs)?, true))
        }
        Err(e) => Err(e),
    }
}

fn pivot_error(e: SparseError) -> SolverError {
    match e {
        SparseError::NotPositiveDefinite { pivot, value } => {
            SolverError::Factorization { pivot, value }
        }
        other => other.into(),
    }
}
