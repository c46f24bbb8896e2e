//! Objectives, error measures and per-iteration records.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::comm::{Comm, CommError};
use crate::partition::{LayoutKind, Shard};
use crate::solvers::{Algorithm, SolveOutput};
use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference objective must be positive, got {0:e}")]
    NonPositiveOptimum(f64),
    #[error("reference solution has zero norm")]
    ZeroReference,
    #[error("empty condition-number trace")]
    EmptyTrace,
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error("csv output: {0}")]
    Csv(String),
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn check_len(expected: usize, actual: usize) -> Result<(), MetricsError> {
    if expected != actual {
        return Err(SparseError::DimensionMismatch { expected, actual }.into());
    }
    Ok(())
}

/// `|X^T w - y|^2 / (2n) + lambda |w|^2 / 2`.
pub fn primal_objective(x: &CsrMatrix, w: &[f64], y: &[f64], lambda: f64) -> Result<f64, MetricsError> {
    check_len(x.n_cols(), y.len())?;
    let z = x.spmv_t(w)?;
    let fit: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(fit / (2.0 * y.len() as f64) + 0.5 * lambda * norm_sq(w))
}

/// `lambda/2 |X alpha / (lambda n)|^2 + |alpha + y|^2 / (2n)`.
pub fn dual_objective(x: &CsrMatrix, alpha: &[f64], y: &[f64], lambda: f64) -> Result<f64, MetricsError> {
    check_len(x.n_cols(), y.len())?;
    let n = y.len() as f64;
    let xa = x.spmv(alpha)?;
    let scaled = norm_sq(&xa) / (lambda * n * lambda * n);
    let shifted: f64 = alpha.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum();
    Ok(0.5 * lambda * scaled + shifted / (2.0 * n))
}

/// Distributed [`primal_objective`] for replicated `w`: one local `X^T w`
/// and one scalar (column layout) or length-`n` (row layout) allreduce.
pub fn primal_objective_sharded(
    comm: &mut Comm,
    shard: &Shard,
    w: &[f64],
    y: &[f64],
    lambda: f64,
) -> Result<f64, MetricsError> {
    let (d, n) = shard.global_shape();
    check_len(d, w.len())?;
    check_len(n, y.len())?;
    let owned = shard.owned();
    let fit = match shard.kind() {
        LayoutKind::OneDColumn => {
            let z = shard.local().spmv_t(w)?;
            let mut part = [z
                .iter()
                .zip(&y[owned])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()];
            comm.allreduce_sum(&mut part)?;
            part[0]
        }
        LayoutKind::OneDRow => {
            let mut z = shard.local().spmv_t(&w[owned])?;
            comm.allreduce_sum(&mut z)?;
            z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
        }
    };
    Ok(fit / (2.0 * n as f64) + 0.5 * lambda * norm_sq(w))
}

/// Distributed [`dual_objective`] for replicated `alpha`.
pub fn dual_objective_sharded(
    comm: &mut Comm,
    shard: &Shard,
    alpha: &[f64],
    y: &[f64],
    lambda: f64,
) -> Result<f64, MetricsError> {
    let (d, n) = shard.global_shape();
    check_len(n, alpha.len())?;
    check_len(n, y.len())?;
    let owned = shard.owned();
    let xa_sq = match shard.kind() {
        LayoutKind::OneDRow => {
            let mut part = [norm_sq(&shard.local().spmv(alpha)?)];
            comm.allreduce_sum(&mut part)?;
            part[0]
        }
        LayoutKind::OneDColumn => {
            let mut xa = shard.local().spmv(&alpha[owned])?;
            debug_assert_eq!(xa.len(), d);
            comm.allreduce_sum(&mut xa)?;
            norm_sq(&xa)
        }
    };
    let nf = n as f64;
    let shifted: f64 = alpha.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum();
    Ok(0.5 * lambda * xa_sq / (lambda * nf * lambda * nf) + shifted / (2.0 * nf))
}

/// `|-lambda w - X (X^T w) / n + X y / n|`.
pub fn primal_residual_norm(x: &CsrMatrix, w: &[f64], y: &[f64], lambda: f64) -> Result<f64, MetricsError> {
    check_len(x.n_cols(), y.len())?;
    let n = y.len() as f64;
    let z = x.spmv_t(w)?;
    let diff: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
    let g = x.spmv(&diff)?;
    Ok(w.iter()
        .zip(&g)
        .map(|(wi, gi)| {
            let r = -lambda * wi + gi / n;
            r * r
        })
        .sum::<f64>()
        .sqrt())
}

/// `|-X^T w + alpha + y|`.
pub fn dual_residual_norm(x: &CsrMatrix, w: &[f64], alpha: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_len(x.n_cols(), y.len())?;
    check_len(y.len(), alpha.len())?;
    let z = x.spmv_t(w)?;
    Ok(z.iter()
        .zip(alpha)
        .zip(y)
        .map(|((zi, a), b)| {
            let r = -zi + a + b;
            r * r
        })
        .sum::<f64>()
        .sqrt())
}

/// `|f_alg - f_opt| / f_opt`.
pub fn relative_objective_error(f_alg: f64, f_opt: f64) -> Result<f64, MetricsError> {
    if !(f_opt > 0.0) {
        return Err(MetricsError::NonPositiveOptimum(f_opt));
    }
    Ok((f_alg - f_opt).abs() / f_opt)
}

/// `|w_opt - w| / |w_opt|`.
pub fn relative_solution_error(w: &[f64], w_opt: &[f64]) -> Result<f64, MetricsError> {
    check_len(w_opt.len(), w.len())?;
    let den = norm_sq(w_opt).sqrt();
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let num: f64 = w.iter().zip(w_opt).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num.sqrt() / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CondStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Nearest-rank order statistics: the `p`-quantile is the `ceil(p N)`-th
/// smallest value.
pub fn cond_stats(trace: &[f64]) -> Result<CondStats, MetricsError> {
    if trace.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let mut v = trace.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let rank = (p * v.len() as f64).ceil() as usize;
        v[rank.clamp(1, v.len()) - 1]
    };
    Ok(CondStats {
        min: v[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: v[v.len() - 1],
    })
}

/// One CSV line of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iter: usize,
    /// Iterations times block size over the sampled dimension; CG counts one
    /// epoch per iteration.
    pub epoch: f64,
    pub objective: f64,
    pub rel_obj_err: Option<f64>,
    pub rel_sol_err: Option<f64>,
    pub residual: f64,
    pub flops: u64,
    pub words: u64,
    pub messages: u64,
    pub gram_cond: Option<f64>,
    pub wall_s: f64,
    #[serde(skip)]
    pub passes: f64,
}

pub const CSV_HEADER: &str =
    "iter,epoch,objective,rel_obj_err,rel_sol_err,residual,flops,words,messages,gram_cond,wall_s";

/// Reference optimum used for error columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub w_opt: Vec<f64>,
    pub f_opt: f64,
}

impl Reference {
    pub fn new(x: &CsrMatrix, y: &[f64], lambda: f64, w_opt: Vec<f64>) -> Result<Self, MetricsError> {
        let f_opt = primal_objective(x, &w_opt, y, lambda)?;
        Ok(Reference { w_opt, f_opt })
    }
}

/// Evaluates every recorded snapshot on the full (serial) data. None of this
/// is charged to the solver counters.
pub fn rows_from_output(
    x: &CsrMatrix,
    y: &[f64],
    lambda: f64,
    block_size: usize,
    s: usize,
    out: &SolveOutput,
    reference: Option<&Reference>,
) -> Result<Vec<MetricsRow>, MetricsError> {
    let (d, n) = (x.n_rows(), x.n_cols());
    let nnz = x.nnz().max(1) as f64;
    let epoch_len = match out.algorithm {
        Algorithm::Cg => 1.0,
        a if a.is_dual() => n as f64 / block_size as f64,
        _ => d as f64 / block_size as f64,
    };
    let per_outer = if out.algorithm.is_ca() { s.max(1) } else { 1 };
    out.snapshots
        .iter()
        .map(|snap| {
            let objective = primal_objective(x, &snap.w, y, lambda)?;
            let residual = match &snap.alpha {
                Some(alpha) => dual_residual_norm(x, &snap.w, alpha, y)?,
                None => primal_residual_norm(x, &snap.w, y, lambda)?,
            };
            let (rel_obj_err, rel_sol_err) = match reference {
                Some(r) => (
                    Some(relative_objective_error(objective, r.f_opt)?),
                    Some(relative_solution_error(&snap.w, &r.w_opt)?),
                ),
                None => (None, None),
            };
            let gram_cond = match snap.iteration {
                0 => None,
                h => out.gram_conds.get(h.div_ceil(per_outer) - 1).copied(),
            };
            Ok(MetricsRow {
                iter: snap.iteration,
                epoch: snap.iteration as f64 / epoch_len,
                objective,
                rel_obj_err,
                rel_sol_err,
                residual,
                flops: snap.counters.flops,
                words: snap.counters.words,
                messages: snap.counters.messages,
                gram_cond,
                wall_s: snap.wall_seconds,
                passes: snap.sampled_nnz as f64 / nnz,
            })
        })
        .collect()
}

/// Writes rows under [`CSV_HEADER`].
pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), MetricsError> {
    let csv_err = |e: csv::Error| MetricsError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    }
    w.flush().map_err(|e| MetricsError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::{run_spmd, CommConfig};
    use crate::partition::partition;

    fn toy() -> (CsrMatrix, Vec<f64>) {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]], 2).unwrap();
        (x, vec![1.0, 1.0])
    }

    #[test]
    fn objective_examples() {
        let (x, y) = toy();
        // w = 0: |y|^2 / 2n = 2 / 4
        assert_eq!(primal_objective(&x, &[0.0, 0.0], &y, 0.3).unwrap(), 0.5);
        assert_eq!(primal_objective(&x, &[1.0, 0.5], &y, 0.0).unwrap(), 0.0);
        assert_eq!(dual_objective(&x, &[0.0, 0.0], &y, 0.3).unwrap(), 0.5);
        let zero = CsrMatrix::zeros(2, 2);
        assert_eq!(dual_objective(&zero, &[-1.0, -1.0], &y, 0.3).unwrap(), 0.0);
        assert!(primal_objective(&x, &[0.0], &y, 0.1).is_err());
    }

    #[test]
    fn sharded_objectives_match_serial() {
        let x = CsrMatrix::from_dense_rows(
            &[vec![1.0, 0.0, 2.0], vec![0.5, -1.0, 0.0], vec![0.0, 3.0, 1.0], vec![1.0, 1.0, 1.0]],
            3,
        )
        .unwrap();
        let y = vec![0.5, -2.0, 1.0];
        let w = vec![0.1, -0.2, 0.3, 0.4];
        let alpha = vec![1.0, 0.5, -0.25];
        let f = primal_objective(&x, &w, &y, 0.2).unwrap();
        let g = dual_objective(&x, &alpha, &y, 0.2).unwrap();
        for kind in [LayoutKind::OneDRow, LayoutKind::OneDColumn] {
            for p in 1..=3 {
                let shards = partition(&x, p, kind).unwrap();
                let got = run_spmd(&CommConfig::serial(p), |comm| {
                    let s = &shards[comm.rank()];
                    (
                        primal_objective_sharded(comm, s, &w, &y, 0.2).unwrap(),
                        dual_objective_sharded(comm, s, &alpha, &y, 0.2).unwrap(),
                    )
                })
                .unwrap();
                for (fp, gp) in got {
                    assert!((fp - f).abs() <= 1e-14 * f.abs());
                    assert!((gp - g).abs() <= 1e-14 * g.abs());
                }
            }
        }
    }

    #[test]
    fn error_measures() {
        assert_eq!(relative_objective_error(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(relative_objective_error(4.0, 2.0).unwrap(), 1.0);
        assert_eq!(relative_objective_error(1.0, 2.0).unwrap(), 0.5);
        assert!(relative_objective_error(1.0, 0.0).is_err());
        let w = [1.0, -2.0];
        assert_eq!(relative_solution_error(&w, &w).unwrap(), 0.0);
        assert_eq!(relative_solution_error(&[0.0, 0.0], &w).unwrap(), 1.0);
        assert_eq!(relative_solution_error(&[2.0, -4.0], &w).unwrap(), 1.0);
        assert!(relative_solution_error(&w, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn nearest_rank_stats() {
        let s = cond_stats(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let c = cond_stats(&[7.0; 4]).unwrap();
        assert_eq!((c.min, c.median, c.max), (7.0, 7.0, 7.0));
        assert!(cond_stats(&[]).is_err());
    }

    #[test]
    fn residuals_vanish_at_optimum() {
        let (x, y) = toy();
        let w = [0.5 / 0.6, 1.0 / 2.1];
        assert!(primal_residual_norm(&x, &w, &y, 0.1).unwrap() < 1e-15);
        assert!((primal_residual_norm(&x, &[0.0, 0.0], &y, 0.1).unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let row = MetricsRow {
            iter: 3,
            epoch: 1.5,
            objective: 0.25,
            rel_obj_err: None,
            rel_sol_err: Some(0.5),
            residual: 1e-3,
            flops: 10,
            words: 4,
            messages: 2,
            gram_cond: None,
            wall_s: 0.0,
            passes: 1.0,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "3,1.5,0.25,,0.5,0.001,10,4,2,,0.0");
        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), CSV_HEADER);
    }
}
