use super::context::{PrimalCtx, Recorder};
use super::{Algorithm, RankTrace, SolverConfig, SolverError};
use crate::comm::{Comm, CommConfig};
use crate::partition::{partition, LayoutKind, PartitionError, Shard};
use crate::sparse::CsrMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients on `(X X^T / n + lambda I) w = X y / n`, one rank's
/// share of a column-partitioned `X`.
///
/// Each iteration costs one `X^T p` and one `X q` (two passes over the data)
/// and one allreduce of length `d`. Stops once `|r| <= tol |X y / n|` or
/// after `min(max_iters, 10 d)` iterations; an unconverged run returns the
/// iterate with the smallest residual seen. `residual_norm` is relative.
pub fn cg_solve(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<RankTrace, SolverError> {
    if shard.kind() != LayoutKind::OneDColumn {
        return Err(PartitionError::LayoutMismatch("CG runs on a column layout".into()).into());
    }
    let (d, n) = shard.global_shape();
    cfg.validate(d, n)?;
    let ctx = PrimalCtx::new(comm, shard, y, cfg.lambda)?;
    let x = shard.local();
    let (lambda, inv_n) = (cfg.lambda, 1.0 / n as f64);
    let cap = cfg.max_iters.min(10 * d);

    // A v = X (X^T v) / n + lambda v, replicated
    let apply = |comm: &mut Comm, v: &[f64], passes: &mut u64| -> Result<Vec<f64>, SolverError> {
        let q = x.spmv_t(v)?;
        let mut av = x.spmv(&q)?;
        comm.charge(x.spmv_flops());
        comm.charge(x.spmv_flops());
        *passes += 2 * x.nnz() as u64;
        comm.allreduce_sum(&mut av)?;
        for (a, &vi) in av.iter_mut().zip(v) {
            *a = *a * inv_n + lambda * vi;
        }
        comm.charge_flops(3 * d as u64);
        Ok(av)
    };

    let rhs = ctx.scaled_xy(comm, y)?;
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let mut rec = Recorder::new(cfg, cap);
    let mut w = cfg.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut r = if w.iter().all(|&v| v == 0.0) {
        rhs.clone()
    } else {
        let aw = apply(comm, &w, &mut rec.sampled_nnz)?;
        rhs.iter().zip(&aw).map(|(b, a)| b - a).collect()
    };
    let mut rs = dot(&r, &r);
    comm.charge_flops(2 * d as u64);
    let rel = |rs: f64| {
        if rhs_norm > 0.0 {
            rs.sqrt() / rhs_norm
        } else {
            rs.sqrt()
        }
    };
    let mut best = (rel(rs), w.clone());
    let mut converged = best.0 <= cfg.tol;
    let mut p = r.clone();
    rec.record(comm, 0, &w, None, None)?;

    let mut k = 0;
    while k < cap && !converged {
        let prev = k;
        k += 1;
        let ap = apply(comm, &p, &mut rec.sampled_nnz)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            log::warn!("CG breakdown at iteration {k}: p^T A p = {pap:e}");
            k -= 1;
            break;
        }
        let step = rs / pap;
        for i in 0..d {
            w[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rs_new = dot(&r, &r);
        comm.charge_flops(8 * d as u64);
        let res = rel(rs_new);
        if res < best.0 {
            best = (res, w.clone());
        }
        converged = res <= cfg.tol;
        let beta = rs_new / rs;
        for i in 0..d {
            p[i] = r[i] + beta * p[i];
        }
        comm.charge_flops(2 * d as u64);
        rs = rs_new;
        if rec.due(prev, k) || converged {
            rec.record(comm, k, &w, None, None)?;
        }
    }
    rec.record(comm, k, &w, None, None)?;
    if !converged {
        log::warn!(
            "CG stopped after {k} iterations at relative residual {:e} (tol {:e})",
            best.0,
            cfg.tol
        );
        w = best.1;
    }

    comm.sync_counters()?;
    Ok(RankTrace {
        rank: comm.rank(),
        w_replicated: true,
        w_offset: 0,
        z_offset: 0,
        w_part: w,
        alpha: None,
        iterations: k,
        converged,
        residual_norm: Some(if converged { rel(rs) } else { best.0 }),
        snapshots: rec.snapshots,
        gram_conds: Vec::new(),
        updates: Vec::new(),
        counters: comm.counters(),
        critical: comm.critical_path(),
        cholesky_retries: 0,
    })
}

/// Result of a serial reference solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgReference {
    pub w: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Single-rank CG used to obtain `w_opt`.
pub fn cg_reference(
    x: &CsrMatrix,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<CgReference, SolverError> {
    let mut cfg = SolverConfig::new(Algorithm::Cg, 1, lambda, max_iters);
    cfg.tol = tol;
    let shards = partition(x, 1, LayoutKind::OneDColumn)?;
    let out = super::run_sharded(&shards, y, &cfg, &CommConfig::serial(1))?;
    Ok(CgReference {
        w: out.w,
        converged: out.converged,
        iterations: out.iterations,
        relative_residual: out.residual_norm.unwrap_or(f64::NAN),
    })
}
