use super::context::{for_each_overlap, overlap_flops, Checker, PrimalCtx, Recorder};
use super::spd::solve_spd_regularized;
use super::{sample_block, BlockUpdate, RankTrace, SolverConfig, SolverError};
use crate::comm::Comm;
use crate::partition::Shard;
use crate::sparse::{condition_number, gram_rows_counted, BlockSelector, Cholesky};

/// Communication-avoiding BCD: `s` iterations per communication round.
///
/// The `s` selectors of an outer iteration are derived from the shared seed,
/// their rows stacked into `Y` (`sb x n_local`) and a single Gram matrix
/// `G = Y Y^T / n + lambda I` reduced alongside `Y z`. The inner steps then
/// run redundantly on every rank: step `j` corrects its right-hand side with
/// the off-diagonal Gram blocks and the index overlaps of the earlier steps,
/// which reproduces the standard iteration in exact arithmetic. `w` and `z`
/// are updated once at the end of the outer iteration.
pub fn cabcd_solve(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<RankTrace, SolverError> {
    let (d, n) = shard.global_shape();
    cfg.validate(d, n)?;
    let ctx = PrimalCtx::new(comm, shard, y, cfg.lambda)?;
    let (b, s, lambda, nf) = (cfg.block_size, cfg.s, cfg.lambda, n as f64);

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
        let steps = s.min(cfg.max_iters - h);
        let sels = (1..=steps)
            .map(|j| sample_block(cfg.seed, (h + j) as u64, d, b))
            .collect::<Result<Vec<BlockSelector>, _>>()?;
        let rows: Vec<usize> = sels.iter().flat_map(|t| t.indices().iter().copied()).collect();
        let ys = ctx.sampled_rows(comm, &rows)?;
        rec.sampled_nnz += ys.nnz() as u64;
        let m = rows.len();

        let (mut g, work) = gram_rows_counted(&ys, 1.0);
        comm.charge(work);
        comm.allreduce_sum(g.data_mut())?;
        let mut r = ys.spmv(&z)?;
        comm.charge(ys.spmv_flops());
        comm.allreduce_sum(&mut r)?;

        // G without its lambda shift; the shift lives on the diagonal blocks only
        g.scale(1.0 / nf);
        comm.charge_flops((m * m) as u64);
        if cfg.record_gram_cond && comm.rank() == 0 {
            let mut full = g.clone();
            full.add_to_diagonal(lambda);
            gram_conds.push(condition_number(&full)?);
        }

        let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(steps);
        for (j, sel) in sels.iter().enumerate() {
            let idx = sel.indices();
            let mut gamma = g.block(j * b, j * b, b, b);
            gamma.add_to_diagonal(lambda);
            let mut rhs: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(i, &gi)| -lambda * w[gi] - r[j * b + i] / nf + xy[gi])
                .collect();
            comm.charge_flops(5 * b as u64);
            for (t, dt) in deltas.iter().enumerate() {
                for (i, v) in rhs.iter_mut().enumerate() {
                    let row = &g.row(j * b + i)[t * b..(t + 1) * b];
                    let cross: f64 = row.iter().zip(dt).map(|(a, x)| a * x).sum();
                    *v -= cross;
                }
                for_each_overlap(idx, sels[t].indices(), |i, q| rhs[i] -= lambda * dt[q]);
                comm.charge_flops(2 * (b * b) as u64);
                comm.charge(overlap_flops(b));
            }
            let (dw, shifted) = solve_spd_regularized(&gamma, &rhs)?;
            retries += usize::from(shifted);
            comm.charge_flops(Cholesky::flops(b) * (1 + u64::from(shifted)));
            deltas.push(dw);
        }

        for (sel, dw) in sels.iter().zip(&deltas) {
            for (&gi, &v) in sel.indices().iter().zip(dw) {
                w[gi] += v;
            }
        }
        let stacked = deltas.concat();
        ys.spmv_t_acc(&stacked, 1.0, &mut z);
        comm.charge_flops(m as u64);
        comm.charge(ys.spmv_flops());

        if cfg.record_updates && comm.rank() == 0 {
            for (j, (sel, dw)) in sels.iter().zip(deltas).enumerate() {
                updates.push(BlockUpdate {
                    iteration: h + j + 1,
                    indices: sel.indices().to_vec(),
                    delta: dw,
                });
            }
        }
        h += steps;
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
