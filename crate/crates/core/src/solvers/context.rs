use std::ops::Range;
use std::time::Instant;

use super::{LocalSnapshot, SolverConfig, SolverError};
use crate::comm::Comm;
use crate::partition::{exchange_sampled, Layout, LayoutKind, Shard};
use crate::sparse::{CsrMatrix, FlopCount, SparseError};

/// Outcome of a full-residual check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopStatus {
    Continue(f64),
    Converged(f64),
}

impl StopStatus {
    fn classify(norm: f64, tol: f64) -> Self {
        if norm <= tol {
            StopStatus::Converged(norm)
        } else {
            StopStatus::Continue(norm)
        }
    }

    pub fn norm(&self) -> f64 {
        match *self {
            StopStatus::Continue(r) | StopStatus::Converged(r) => r,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, StopStatus::Converged(_))
    }
}

/// Rank-local solver state handed to [`check_stopping`].
#[derive(Debug, Clone, Copy)]
pub enum IterateView<'a> {
    /// Replicated `w` and this rank's block of `z = X^T w`.
    Primal { w: &'a [f64], z_local: &'a [f64] },
    /// Replicated `alpha` and this rank's block of `w`.
    Dual { alpha: &'a [f64], w_local: &'a [f64] },
}

/// Computes the full primal residual `-lambda w - X z / n + X y / n` or dual
/// residual `-X^T w + alpha + y` and compares its norm to `cfg.tol`.
/// Collective.
pub fn check_stopping(
    comm: &mut Comm,
    shard: &Shard,
    y: &[f64],
    view: IterateView<'_>,
    cfg: &SolverConfig,
) -> Result<StopStatus, SolverError> {
    let norm = match view {
        IterateView::Primal { w, z_local } => {
            let ctx = PrimalCtx::new(comm, shard, y, cfg.lambda)?;
            let xy = ctx.scaled_xy(comm, y)?;
            ctx.residual_norm(comm, w, z_local, &xy)?
        }
        IterateView::Dual { alpha, w_local } => {
            let ctx = DualCtx::new(comm, shard, y, cfg.lambda)?;
            ctx.residual_norm(comm, alpha, w_local, y)?
        }
    };
    Ok(StopStatus::classify(norm, cfg.tol))
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<(), SolverError> {
    if expected != actual {
        return Err(SparseError::DimensionMismatch { expected, actual }.into());
    }
    Ok(())
}

/// Whether `(prev, cur]` contains a multiple of `interval`.
pub(crate) fn crosses(prev: usize, cur: usize, interval: usize) -> bool {
    interval > 0 && cur / interval > prev / interval
}

/// Primal solvers: `w` replicated, `z = X^T w` split by data points.
pub(crate) struct PrimalCtx<'a> {
    pub shard: &'a Shard,
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    /// Data points whose `z` entries this rank owns.
    pub cols: Range<usize>,
    /// Column layout that sampled rows are redistributed into, when the
    /// shard is row-partitioned.
    target: Option<Layout>,
    pub y_local: Vec<f64>,
}

impl<'a> PrimalCtx<'a> {
    pub fn new(comm: &Comm, shard: &'a Shard, y: &[f64], lambda: f64) -> Result<Self, SolverError> {
        let (d, n) = shard.global_shape();
        check_len(n, y.len())?;
        let (cols, target) = match shard.kind() {
            LayoutKind::OneDColumn => (shard.owned(), None),
            LayoutKind::OneDRow => {
                let t = Layout::new(LayoutKind::OneDColumn, n, comm.size())?;
                (t.range(comm.rank()), Some(t))
            }
        };
        Ok(PrimalCtx {
            shard,
            d,
            n,
            lambda,
            y_local: y[cols.clone()].to_vec(),
            cols,
            target,
        })
    }

    /// The sampled feature rows of `X`, restricted to this rank's data points.
    pub fn sampled_rows(&self, comm: &mut Comm, rows: &[usize]) -> Result<CsrMatrix, SolverError> {
        Ok(match &self.target {
            None => self.shard.local().gather_rows(rows)?,
            Some(t) => exchange_sampled(comm, self.shard.local(), self.shard.owned(), rows, t)?,
        })
    }

    /// `X y / n`, replicated on every rank.
    pub fn scaled_xy(&self, comm: &mut Comm, y: &[f64]) -> Result<Vec<f64>, SolverError> {
        let x = self.shard.local();
        let mut out = match self.shard.kind() {
            LayoutKind::OneDColumn => x.spmv(&self.y_local)?,
            LayoutKind::OneDRow => {
                let mut full = vec![0.0; self.d];
                full[self.shard.owned()].copy_from_slice(&x.spmv(y)?);
                full
            }
        };
        comm.charge(x.spmv_flops());
        comm.allreduce_sum(&mut out)?;
        let inv_n = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= inv_n);
        comm.charge_flops(self.d as u64);
        Ok(out)
    }

    /// This rank's block of `X^T w`.
    pub fn initial_z(&self, comm: &mut Comm, w: &[f64]) -> Result<Vec<f64>, SolverError> {
        if w.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.cols.len()]);
        }
        let x = self.shard.local();
        comm.charge(x.spmv_flops());
        Ok(match self.shard.kind() {
            LayoutKind::OneDColumn => x.spmv_t(w)?,
            LayoutKind::OneDRow => {
                let mut z = x.spmv_t(&w[self.shard.owned()])?;
                comm.allreduce_sum(&mut z)?;
                z[self.cols.clone()].to_vec()
            }
        })
    }

    /// `|-lambda w - X z / n + xy|`, charged. Collective.
    pub fn residual_norm(
        &self,
        comm: &mut Comm,
        w: &[f64],
        z_local: &[f64],
        xy: &[f64],
    ) -> Result<f64, SolverError> {
        check_len(self.d, w.len())?;
        check_len(self.cols.len(), z_local.len())?;
        let x = self.shard.local();
        let inv_n = 1.0 / self.n as f64;
        let residual = |rows: Range<usize>, xz: &[f64]| -> f64 {
            rows.zip(xz)
                .map(|(i, &p)| {
                    let r = -self.lambda * w[i] - p * inv_n + xy[i];
                    r * r
                })
                .sum()
        };
        comm.charge(x.spmv_flops());
        match self.shard.kind() {
            LayoutKind::OneDColumn => {
                let mut xz = x.spmv(z_local)?;
                comm.allreduce_sum(&mut xz)?;
                comm.charge_flops(6 * self.d as u64);
                Ok(residual(0..self.d, &xz).sqrt())
            }
            LayoutKind::OneDRow => {
                let mut z = vec![0.0; self.n];
                z[self.cols.clone()].copy_from_slice(z_local);
                comm.allreduce_sum(&mut z)?;
                let owned = self.shard.owned();
                let xz = x.spmv(&z)?;
                comm.charge_flops(6 * owned.len() as u64);
                let mut sq = [residual(owned, &xz)];
                comm.allreduce_sum(&mut sq)?;
                Ok(sq[0].sqrt())
            }
        }
    }
}

/// Dual solvers: `alpha` replicated, `w` split by features.
pub(crate) struct DualCtx<'a> {
    pub shard: &'a Shard,
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    /// Features whose `w` entries this rank owns.
    pub rows: Range<usize>,
    /// Row layout that sampled columns are redistributed into, when the shard
    /// is column-partitioned.
    target: Option<Layout>,
}

impl<'a> DualCtx<'a> {
    pub fn new(comm: &Comm, shard: &'a Shard, y: &[f64], lambda: f64) -> Result<Self, SolverError> {
        let (d, n) = shard.global_shape();
        check_len(n, y.len())?;
        let (rows, target) = match shard.kind() {
            LayoutKind::OneDRow => (shard.owned(), None),
            LayoutKind::OneDColumn => {
                let t = Layout::new(LayoutKind::OneDRow, d, comm.size())?;
                (t.range(comm.rank()), Some(t))
            }
        };
        Ok(DualCtx {
            shard,
            d,
            n,
            lambda,
            rows,
            target,
        })
    }

    /// Sampled data points as rows (`b' x d_local`): columns of `X`
    /// transposed and restricted to this rank's features.
    pub fn sampled_points(&self, comm: &mut Comm, pts: &[usize]) -> Result<CsrMatrix, SolverError> {
        Ok(match &self.target {
            None => self.shard.local_t().gather_rows(pts)?,
            Some(t) => exchange_sampled(comm, self.shard.local_t(), self.shard.owned(), pts, t)?,
        })
    }

    /// This rank's block of `-X alpha / (lambda n)`.
    pub fn initial_w(&self, comm: &mut Comm, alpha: &[f64]) -> Result<Vec<f64>, SolverError> {
        if alpha.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.rows.len()]);
        }
        let x = self.shard.local();
        comm.charge(x.spmv_flops());
        let mut w = match self.shard.kind() {
            LayoutKind::OneDRow => x.spmv(alpha)?,
            LayoutKind::OneDColumn => {
                let mut full = x.spmv(&alpha[self.shard.owned()])?;
                comm.allreduce_sum(&mut full)?;
                full[self.rows.clone()].to_vec()
            }
        };
        let scale = -1.0 / (self.lambda * self.n as f64);
        w.iter_mut().for_each(|v| *v *= scale);
        comm.charge_flops(w.len() as u64);
        Ok(w)
    }

    /// `|-X^T w + alpha + y|`, charged. Collective.
    pub fn residual_norm(
        &self,
        comm: &mut Comm,
        alpha: &[f64],
        w_local: &[f64],
        y: &[f64],
    ) -> Result<f64, SolverError> {
        check_len(self.n, alpha.len())?;
        check_len(self.rows.len(), w_local.len())?;
        let x = self.shard.local();
        let residual = |pts: Range<usize>, xtw: &[f64]| -> f64 {
            pts.zip(xtw)
                .map(|(j, &p)| {
                    let r = -p + alpha[j] + y[j];
                    r * r
                })
                .sum()
        };
        comm.charge(x.spmv_flops());
        match self.shard.kind() {
            LayoutKind::OneDRow => {
                let mut xtw = x.spmv_t(w_local)?;
                comm.allreduce_sum(&mut xtw)?;
                comm.charge_flops(4 * self.n as u64);
                Ok(residual(0..self.n, &xtw).sqrt())
            }
            LayoutKind::OneDColumn => {
                let mut w = vec![0.0; self.d];
                w[self.rows.clone()].copy_from_slice(w_local);
                comm.allreduce_sum(&mut w)?;
                let owned = self.shard.owned();
                let xtw = x.spmv_t(&w)?;
                comm.charge_flops(4 * owned.len() as u64);
                let mut sq = [residual(owned, &xtw)];
                comm.allreduce_sum(&mut sq)?;
                Ok(sq[0].sqrt())
            }
        }
    }
}

/// Snapshot schedule and bookkeeping shared by all solvers.
pub(crate) struct Recorder {
    start: Instant,
    interval: usize,
    last_iteration: usize,
    keep_aux: bool,
    pub snapshots: Vec<LocalSnapshot>,
    pub sampled_nnz: u64,
}

impl Recorder {
    pub fn new(cfg: &SolverConfig, last_iteration: usize) -> Self {
        Recorder {
            start: Instant::now(),
            interval: cfg.record_interval,
            last_iteration,
            keep_aux: cfg.record_updates,
            snapshots: Vec::new(),
            sampled_nnz: 0,
        }
    }

    pub fn due(&self, prev: usize, cur: usize) -> bool {
        cur >= self.last_iteration || crosses(prev, cur, self.interval)
    }

    /// Collective: folds pending flops into the critical path first. `aux`
    /// (the maintained `z` of primal methods) is kept only when updates are
    /// being traced.
    pub fn record(
        &mut self,
        comm: &mut Comm,
        iteration: usize,
        w_part: &[f64],
        alpha: Option<&[f64]>,
        aux: Option<&[f64]>,
    ) -> Result<(), SolverError> {
        if self.snapshots.last().is_some_and(|s| s.iteration == iteration) {
            return Ok(());
        }
        comm.sync_counters()?;
        self.snapshots.push(LocalSnapshot {
            iteration,
            w_part: w_part.to_vec(),
            alpha: alpha.map(<[f64]>::to_vec),
            z_part: aux.filter(|_| self.keep_aux).map(<[f64]>::to_vec),
            counters: comm.critical_path(),
            sampled_nnz: self.sampled_nnz,
            wall_seconds: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Full-residual checks at the configured cadence.
pub(crate) struct Checker {
    interval: Option<usize>,
    tol: f64,
    pub residual: Option<f64>,
    pub converged: bool,
}

impl Checker {
    pub fn new(cfg: &SolverConfig, universe: usize) -> Self {
        Checker {
            interval: cfg.check_interval.resolve(universe, cfg.block_size),
            tol: cfg.tol,
            residual: None,
            converged: false,
        }
    }

    pub fn due(&self, prev: usize, cur: usize) -> bool {
        self.interval.is_some_and(|k| crosses(prev, cur, k))
    }

    pub fn update(&mut self, norm: f64) {
        self.residual = Some(norm);
        self.converged = StopStatus::classify(norm, self.tol).is_converged();
    }
}

/// Charged cost of merging two sorted index lists of length `b` and applying
/// the matches.
pub(crate) fn overlap_flops(b: usize) -> FlopCount {
    FlopCount::exact(2 * b as u64)
}

/// Calls `f(i, q)` for every position pair with `a[i] == b[q]` (both sorted).
pub(crate) fn for_each_overlap(a: &[usize], b: &[usize], mut f: impl FnMut(usize, usize)) {
    let (mut i, mut q) = (0, 0);
    while i < a.len() && q < b.len() {
        match a[i].cmp(&b[q]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                f(i, q);
                i += 1;
                q += 1;
            }
        }
    }
}
