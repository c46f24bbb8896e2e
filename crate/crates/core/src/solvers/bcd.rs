use super::context::{Checker, PrimalCtx, Recorder};
use super::spd::solve_spd_regularized;
use super::{sample_block, BlockUpdate, RankTrace, SolverConfig, SolverError};
use crate::comm::Comm;
use crate::partition::Shard;
use crate::sparse::{condition_number, gram_rows_counted, Cholesky};

/// Primal block coordinate descent, one rank's share.
///
/// Each iteration samples `b` features, forms
/// `Gamma = Y Y^T / n + lambda I` and the block residual with two allreduces,
/// solves for the exact block minimizer and updates `w` and `z = X^T w`.
/// Row-partitioned shards route the sampled rows through an all-to-all first.
pub fn bcd_solve(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<RankTrace, SolverError> {
    let (d, n) = shard.global_shape();
    cfg.validate(d, n)?;
    let ctx = PrimalCtx::new(comm, shard, y, cfg.lambda)?;
    let (b, lambda, nf) = (cfg.block_size, cfg.lambda, n as f64);

    let xy = ctx.scaled_xy(comm, y)?;
    let mut w = cfg.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut z = ctx.initial_z(comm, &w)?;

    let mut rec = Recorder::new(cfg, cfg.max_iters);
    let mut check = Checker::new(cfg, d);
    let mut gram_conds = Vec::new();
    let mut updates = Vec::new();
    let mut retries = 0;
    rec.record(comm, 0, &w, None, Some(&z))?;

    let mut h = 0;
    while h < cfg.max_iters {
        let prev = h;
        h += 1;
        let sel = sample_block(cfg.seed, h as u64, d, b)?;
        let idx = sel.indices();
        let yb = ctx.sampled_rows(comm, idx)?;
        rec.sampled_nnz += yb.nnz() as u64;

        let (mut gamma, work) = gram_rows_counted(&yb, 1.0);
        comm.charge(work);
        comm.allreduce_sum(gamma.data_mut())?;
        let mut r = yb.spmv(&z)?;
        comm.charge(yb.spmv_flops());
        comm.allreduce_sum(&mut r)?;

        gamma.scale(1.0 / nf);
        gamma.add_to_diagonal(lambda);
        comm.charge_flops((b * b + b) as u64);
        if cfg.record_gram_cond && comm.rank() == 0 {
            gram_conds.push(condition_number(&gamma)?);
        }

        let rhs: Vec<f64> = idx
            .iter()
            .zip(&r)
            .map(|(&g, &ri)| -lambda * w[g] - ri / nf + xy[g])
            .collect();
        comm.charge_flops(4 * b as u64);
        let (dw, shifted) = solve_spd_regularized(&gamma, &rhs)?;
        retries += usize::from(shifted);
        comm.charge_flops(Cholesky::flops(b) * (1 + u64::from(shifted)));

        for (&g, &v) in idx.iter().zip(&dw) {
            w[g] += v;
        }
        yb.spmv_t_acc(&dw, 1.0, &mut z);
        comm.charge_flops(b as u64);
        comm.charge(yb.spmv_flops());

        if cfg.record_updates && comm.rank() == 0 {
            updates.push(BlockUpdate {
                iteration: h,
                indices: idx.to_vec(),
                delta: dw,
            });
        }
        if check.due(prev, h) {
            check.update(ctx.residual_norm(comm, &w, &z, &xy)?);
        }
        if rec.due(prev, h) || check.converged {
            rec.record(comm, h, &w, None, Some(&z))?;
        }
        if check.converged {
            break;
        }
    }

    comm.sync_counters()?;
    Ok(RankTrace {
        rank: comm.rank(),
        w_replicated: true,
        w_offset: 0,
        z_offset: ctx.cols.start,
        w_part: w,
        alpha: None,
        iterations: h,
        converged: check.converged,
        residual_norm: check.residual,
        snapshots: rec.snapshots,
        gram_conds,
        updates,
        counters: comm.counters(),
        critical: comm.critical_path(),
        cholesky_retries: retries,
    })
}
