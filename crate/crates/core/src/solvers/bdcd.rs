use super::context::{Checker, DualCtx, Recorder};
use super::spd::solve_spd_regularized;
use super::{sample_block, BlockUpdate, RankTrace, SolverConfig, SolverError};
use crate::comm::Comm;
use crate::partition::Shard;
use crate::sparse::{condition_number, gram_rows_counted, Cholesky};

/// Block dual coordinate descent, one rank's share.
///
/// Each iteration samples `b'` data points, reduces
/// `Theta = Y^T Y / (lambda n^2) + I / n` and `Y^T w`, takes the exact block
/// step on the dual objective and keeps `w = -X alpha / (lambda n)` current.
/// `alpha` is replicated; `w` is split by features.
pub fn bdcd_solve(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<RankTrace, SolverError> {
    let (d, n) = shard.global_shape();
    cfg.validate(d, n)?;
    let ctx = DualCtx::new(comm, shard, y, cfg.lambda)?;
    let (b, lambda, nf) = (cfg.block_size, cfg.lambda, n as f64);
    let inv_lambda_n = 1.0 / (lambda * nf);

    let mut alpha = cfg.initial.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut w = ctx.initial_w(comm, &alpha)?;

    let mut rec = Recorder::new(cfg, cfg.max_iters);
    let mut check = Checker::new(cfg, n);
    let mut gram_conds = Vec::new();
    let mut updates = Vec::new();
    let mut retries = 0;
    rec.record(comm, 0, &w, Some(&alpha), None)?;

    let mut h = 0;
    while h < cfg.max_iters {
        let prev = h;
        h += 1;
        let sel = sample_block(cfg.seed, h as u64, n, b)?;
        let idx = sel.indices();
        let yt = ctx.sampled_points(comm, idx)?;
        rec.sampled_nnz += yt.nnz() as u64;

        let (mut theta, work) = gram_rows_counted(&yt, 1.0);
        comm.charge(work);
        comm.allreduce_sum(theta.data_mut())?;
        let mut r = yt.spmv(&w)?;
        comm.charge(yt.spmv_flops());
        comm.allreduce_sum(&mut r)?;

        theta.scale(inv_lambda_n / nf);
        theta.add_to_diagonal(1.0 / nf);
        comm.charge_flops((b * b + b) as u64);
        if cfg.record_gram_cond && comm.rank() == 0 {
            gram_conds.push(condition_number(&theta)?);
        }

        let rhs: Vec<f64> = idx
            .iter()
            .zip(&r)
            .map(|(&j, &rj)| -rj + alpha[j] + y[j])
            .collect();
        comm.charge_flops(2 * b as u64);
        let (x, shifted) = solve_spd_regularized(&theta, &rhs)?;
        retries += usize::from(shifted);
        comm.charge_flops(Cholesky::flops(b) * (1 + u64::from(shifted)));
        let da: Vec<f64> = x.iter().map(|v| -v / nf).collect();

        for (&j, &v) in idx.iter().zip(&da) {
            alpha[j] += v;
        }
        yt.spmv_t_acc(&da, -inv_lambda_n, &mut w);
        comm.charge_flops(2 * b as u64);
        comm.charge(yt.spmv_flops());

        if cfg.record_updates && comm.rank() == 0 {
            updates.push(BlockUpdate {
                iteration: h,
                indices: idx.to_vec(),
                delta: da,
            });
        }
        if check.due(prev, h) {
            check.update(ctx.residual_norm(comm, &alpha, &w, y)?);
        }
        if rec.due(prev, h) || check.converged {
            rec.record(comm, h, &w, Some(&alpha), None)?;
        }
        if check.converged {
            break;
        }
    }

    comm.sync_counters()?;
    Ok(RankTrace {
        rank: comm.rank(),
        w_replicated: false,
        w_offset: ctx.rows.start,
        z_offset: 0,
        w_part: w,
        alpha: Some(alpha),
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
