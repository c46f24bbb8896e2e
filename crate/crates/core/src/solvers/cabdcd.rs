use super::context::{for_each_overlap, overlap_flops, Checker, DualCtx, Recorder};
use super::spd::solve_spd_regularized;
use super::{sample_block, BlockUpdate, RankTrace, SolverConfig, SolverError};
use crate::comm::Comm;
use crate::partition::Shard;
use crate::sparse::{condition_number, gram_rows_counted, BlockSelector, Cholesky};

/// Communication-avoiding BDCD: `s` dual block steps per communication round.
///
/// One reduction delivers the raw Gram matrix `Y^T Y` of the `s b'` stacked
/// sampled points and `Y^T w`. Step `j` scales its diagonal block into
/// `Theta_j`, adds `Y_j^T Y_t dalpha_t / (lambda n)` and the index overlaps of
/// the earlier steps to its right-hand side, and solves. `alpha` and `w` are
/// updated once per outer iteration.
pub fn cabdcd_solve(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<RankTrace, SolverError> {
    let (d, n) = shard.global_shape();
    cfg.validate(d, n)?;
    let ctx = DualCtx::new(comm, shard, y, cfg.lambda)?;
    let (b, s, lambda, nf) = (cfg.block_size, cfg.s, cfg.lambda, n as f64);
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
        let steps = s.min(cfg.max_iters - h);
        let sels = (1..=steps)
            .map(|j| sample_block(cfg.seed, (h + j) as u64, n, b))
            .collect::<Result<Vec<BlockSelector>, _>>()?;
        let pts: Vec<usize> = sels.iter().flat_map(|t| t.indices().iter().copied()).collect();
        let yt = ctx.sampled_points(comm, &pts)?;
        rec.sampled_nnz += yt.nnz() as u64;
        let m = pts.len();

        let (mut raw, work) = gram_rows_counted(&yt, 1.0);
        comm.charge(work);
        comm.allreduce_sum(raw.data_mut())?;
        let mut r = yt.spmv(&w)?;
        comm.charge(yt.spmv_flops());
        comm.allreduce_sum(&mut r)?;

        if cfg.record_gram_cond && comm.rank() == 0 {
            let mut full = raw.clone();
            full.scale(inv_lambda_n / nf);
            full.add_to_diagonal(1.0 / nf);
            gram_conds.push(condition_number(&full)?);
        }

        let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(steps);
        for (j, sel) in sels.iter().enumerate() {
            let idx = sel.indices();
            let mut theta = raw.block(j * b, j * b, b, b);
            theta.scale(inv_lambda_n / nf);
            theta.add_to_diagonal(1.0 / nf);
            let mut rhs: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(i, &p)| -r[j * b + i] + alpha[p] + y[p])
                .collect();
            comm.charge_flops((b * b + 3 * b) as u64);
            for (t, dt) in deltas.iter().enumerate() {
                for (i, v) in rhs.iter_mut().enumerate() {
                    let row = &raw.row(j * b + i)[t * b..(t + 1) * b];
                    let cross: f64 = row.iter().zip(dt).map(|(a, x)| a * x).sum();
                    *v += cross * inv_lambda_n;
                }
                for_each_overlap(idx, sels[t].indices(), |i, q| rhs[i] += dt[q]);
                comm.charge_flops((2 * b * b + b) as u64);
                comm.charge(overlap_flops(b));
            }
            let (x, shifted) = solve_spd_regularized(&theta, &rhs)?;
            retries += usize::from(shifted);
            comm.charge_flops(Cholesky::flops(b) * (1 + u64::from(shifted)) + b as u64);
            deltas.push(x.iter().map(|v| -v / nf).collect());
        }

        for (sel, da) in sels.iter().zip(&deltas) {
            for (&p, &v) in sel.indices().iter().zip(da) {
                alpha[p] += v;
            }
        }
        let stacked = deltas.concat();
        yt.spmv_t_acc(&stacked, -inv_lambda_n, &mut w);
        comm.charge_flops(m as u64);
        comm.charge(yt.spmv_flops());

        if cfg.record_updates && comm.rank() == 0 {
            for (j, (sel, da)) in sels.iter().zip(deltas).enumerate() {
                updates.push(BlockUpdate {
                    iteration: h + j + 1,
                    indices: sel.indices().to_vec(),
                    delta: da,
                });
            }
        }
        h += steps;
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
