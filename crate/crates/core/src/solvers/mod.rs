//! Ridge regression solvers written once per rank over [`crate::comm`].
//!
//! The primal objective is `f(w) = 1/(2n) |X^T w - y|^2 + lambda/2 |w|^2` with
//! `X` stored feature-major (`d x n`). Primal methods sample features, dual
//! methods sample data points and keep `w = -X alpha / (lambda n)` in sync.

mod bcd;
mod bdcd;
mod cabcd;
mod cabdcd;
mod cg;
mod context;
mod sampling;
mod spd;
#[cfg(test)]
mod tests_oracle;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use bcd::bcd_solve;
pub use bdcd::bdcd_solve;
pub use cabcd::cabcd_solve;
pub use cabdcd::cabdcd_solve;
pub use cg::{cg_reference, cg_solve, CgReference};
pub use context::{check_stopping, IterateView, StopStatus};
pub use sampling::sample_block;
pub use spd::solve_spd;

use crate::comm::{run_spmd, AllToAllModel, Backend, CommConfig, CommError, CostCounters};
use crate::partition::{partition, LayoutKind, PartitionError, Shard};
use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration ({field}): {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("subproblem factorization failed at pivot {pivot} ({value:e}) even after regularization")]
    Factorization { pivot: usize, value: f64 },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Cg,
    Bcd,
    CaBcd,
    Bdcd,
    CaBdcd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Cg,
        Algorithm::Bcd,
        Algorithm::CaBcd,
        Algorithm::Bdcd,
        Algorithm::CaBdcd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Cg => "cg",
            Algorithm::Bcd => "bcd",
            Algorithm::CaBcd => "cabcd",
            Algorithm::Bdcd => "bdcd",
            Algorithm::CaBdcd => "cabdcd",
        }
    }

    pub fn is_dual(&self) -> bool {
        matches!(self, Algorithm::Bdcd | Algorithm::CaBdcd)
    }

    pub fn is_ca(&self) -> bool {
        matches!(self, Algorithm::CaBcd | Algorithm::CaBdcd)
    }

    /// Layout in which the algorithm runs without redistributing samples.
    pub fn natural_layout(&self) -> LayoutKind {
        if self.is_dual() {
            LayoutKind::OneDRow
        } else {
            LayoutKind::OneDColumn
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cg" => Ok(Algorithm::Cg),
            "bcd" => Ok(Algorithm::Bcd),
            "cabcd" => Ok(Algorithm::CaBcd),
            "bdcd" => Ok(Algorithm::Bdcd),
            "cabdcd" => Ok(Algorithm::CaBdcd),
            other => Err(format!(
                "unknown algorithm '{other}' (expected cg, bcd, cabcd, bdcd or cabdcd)"
            )),
        }
    }
}

/// How often the full residual is computed, in (inner) iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckInterval {
    /// Once per epoch: `ceil(d / b)` primal or `ceil(n / b')` dual iterations.
    #[default]
    Epoch,
    Every(usize),
    Never,
}

impl CheckInterval {
    pub(crate) fn resolve(&self, universe: usize, block: usize) -> Option<usize> {
        match *self {
            CheckInterval::Epoch => Some(universe.div_ceil(block.max(1)).max(1)),
            CheckInterval::Every(0) | CheckInterval::Never => None,
            CheckInterval::Every(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// `b` for primal methods, `b'` for dual ones. Ignored by CG.
    pub block_size: usize,
    /// Unrolling depth of the CA variants; standard methods ignore it.
    pub s: usize,
    pub lambda: f64,
    /// `H` (primal) or `H'` (dual) iterations; the CG iteration cap.
    pub max_iters: usize,
    /// Absolute residual tolerance (relative for CG).
    pub tol: f64,
    pub seed: u64,
    pub check_interval: CheckInterval,
    /// Iterations between recorded snapshots; `0` keeps only the first and last.
    pub record_interval: usize,
    /// Record the condition number of every (outer) Gram matrix. Not charged.
    pub record_gram_cond: bool,
    /// Keep every block update so the iterate sequence can be replayed.
    pub record_updates: bool,
    /// Starting `w` (primal, CG) or `alpha` (dual); zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, block_size: usize, lambda: f64, max_iters: usize) -> Self {
        SolverConfig {
            algorithm,
            block_size,
            s: 1,
            lambda,
            max_iters,
            tol: 0.0,
            seed: 0,
            check_interval: CheckInterval::Epoch,
            record_interval: 0,
            record_gram_cond: false,
            record_updates: false,
            initial: None,
        }
    }

    /// Size of the sampled universe: `d` for primal methods, `n` for dual ones.
    pub fn universe(&self, d: usize, n: usize) -> usize {
        if self.algorithm.is_dual() {
            n
        } else {
            d
        }
    }

    pub fn validate(&self, d: usize, n: usize) -> Result<(), SolverError> {
        let bad = |field, reason: String| Err(SolverError::InvalidConfig { field, reason });
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda", format!("must be finite and non-negative, got {}", self.lambda));
        }
        if self.algorithm != Algorithm::Cg {
            if self.lambda == 0.0 {
                return bad("lambda", "must be positive for coordinate descent".into());
            }
            let universe = self.universe(d, n);
            if self.block_size == 0 || self.block_size > universe {
                return bad(
                    "block_size",
                    format!("need 1 <= b <= {universe}, got {}", self.block_size),
                );
            }
        }
        if n == 0 {
            return bad("dataset", "no data points".into());
        }
        if self.s == 0 {
            return bad("s", "must be at least 1".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tol", format!("must be non-negative, got {}", self.tol));
        }
        if let Some(init) = &self.initial {
            let want = if self.algorithm.is_dual() { n } else { d };
            if init.len() != want {
                return bad(
                    "initial",
                    format!("expected length {want}, got {}", init.len()),
                );
            }
        }
        Ok(())
    }
}

/// One block step: `delta` was added to the iterate at `indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    pub iteration: usize,
    pub indices: Vec<usize>,
    pub delta: Vec<f64>,
}

/// Per-rank view of a recorded iteration.
#[derive(Debug, Clone)]
pub struct LocalSnapshot {
    pub iteration: usize,
    /// The rank's slice of `w` starting at [`RankTrace::w_offset`].
    pub w_part: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// This rank's block of the maintained `z = X^T w` (primal methods,
    /// traced runs only), starting at [`RankTrace::z_offset`].
    pub z_part: Option<Vec<f64>>,
    /// Critical-path counters at the snapshot.
    pub counters: CostCounters,
    /// Cumulative nonzeros of sampled rows or columns held by this rank.
    pub sampled_nnz: u64,
    pub wall_seconds: f64,
}

/// What one rank returns from a solver.
#[derive(Debug, Clone)]
pub struct RankTrace {
    pub rank: usize,
    /// `true` when every rank holds all of `w`.
    pub w_replicated: bool,
    pub w_offset: usize,
    pub z_offset: usize,
    pub w_part: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: Option<f64>,
    pub snapshots: Vec<LocalSnapshot>,
    pub gram_conds: Vec<f64>,
    pub updates: Vec<BlockUpdate>,
    pub counters: CostCounters,
    pub critical: CostCounters,
    pub cholesky_retries: usize,
}

/// A recorded iteration with global vectors.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iteration: usize,
    pub w: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// The solver's running `z = X^T w`, when updates were traced.
    pub z: Option<Vec<f64>>,
    pub counters: CostCounters,
    pub sampled_nnz: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub algorithm: Algorithm,
    pub layout: LayoutKind,
    pub ranks: usize,
    pub w: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Last full residual computed by a stopping check.
    pub residual_norm: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub gram_conds: Vec<f64>,
    pub updates: Vec<BlockUpdate>,
    /// Critical-path counters of the whole run.
    pub counters: CostCounters,
    pub rank_counters: Vec<CostCounters>,
    pub cholesky_retries: usize,
}

impl SolveOutput {
    /// Replays the recorded block updates from `initial` (`w_0` for primal
    /// methods, `alpha_0` for dual ones): entry `h` is the iterate after `h`
    /// updates.
    pub fn iterates(&self, initial: &[f64]) -> Vec<Vec<f64>> {
        let mut cur = initial.to_vec();
        let mut out = Vec::with_capacity(self.updates.len() + 1);
        out.push(cur.clone());
        for u in &self.updates {
            for (&i, &v) in u.indices.iter().zip(&u.delta) {
                cur[i] += v;
            }
            out.push(cur.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub ranks: usize,
    pub backend: Backend,
    /// `None` picks the algorithm's natural layout. CG always runs by columns.
    pub layout: Option<LayoutKind>,
    pub all_to_all: AllToAllModel,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            ranks: 1,
            backend: Backend::LockstepSerial,
            layout: None,
            all_to_all: AllToAllModel::SmallMessage,
        }
    }
}

impl RunOptions {
    pub fn new(ranks: usize, backend: Backend) -> Self {
        RunOptions {
            ranks,
            backend,
            ..Default::default()
        }
    }

    pub fn resolved_layout(&self, algorithm: Algorithm) -> LayoutKind {
        if algorithm == Algorithm::Cg {
            return LayoutKind::OneDColumn;
        }
        self.layout.unwrap_or(algorithm.natural_layout())
    }
}

/// Partitions `x` and runs the configured algorithm.
pub fn solve(
    x: &CsrMatrix,
    y: &[f64],
    cfg: &SolverConfig,
    opts: &RunOptions,
) -> Result<SolveOutput, SolverError> {
    cfg.validate(x.n_rows(), x.n_cols())?;
    let shards = partition(x, opts.ranks, opts.resolved_layout(cfg.algorithm))?;
    let comm = CommConfig {
        ranks: opts.ranks,
        backend: opts.backend,
        all_to_all: opts.all_to_all,
    };
    run_sharded(&shards, y, cfg, &comm)
}

/// Runs the configured algorithm on already partitioned data, one rank per shard.
pub fn run_sharded(
    shards: &[Shard],
    y: &[f64],
    cfg: &SolverConfig,
    comm_cfg: &CommConfig,
) -> Result<SolveOutput, SolverError> {
    if shards.len() != comm_cfg.ranks {
        return Err(SolverError::InvalidConfig {
            field: "ranks",
            reason: format!("{} shards for {} ranks", shards.len(), comm_cfg.ranks),
        });
    }
    let results = run_spmd(comm_cfg, |comm| {
        let shard = &shards[comm.rank()];
        match cfg.algorithm {
            Algorithm::Cg => cg_solve(comm, shard, y, cfg),
            Algorithm::Bcd => bcd_solve(comm, shard, y, cfg),
            Algorithm::CaBcd => cabcd_solve(comm, shard, y, cfg),
            Algorithm::Bdcd => bdcd_solve(comm, shard, y, cfg),
            Algorithm::CaBdcd => cabdcd_solve(comm, shard, y, cfg),
        }
    })?;
    // a failing rank makes its peers see RankExited; report the root cause
    let mut traces = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(t) => traces.push(t),
            Err(SolverError::Comm(CommError::RankExited)) => {
                first_err.get_or_insert(SolverError::Comm(CommError::RankExited));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(merge(cfg.algorithm, shards[0].kind(), traces))
}

fn gather_w(parts: &[(bool, usize, &[f64])]) -> Vec<f64> {
    if parts[0].0 {
        return parts[0].2.to_vec();
    }
    let len = parts.iter().map(|p| p.1 + p.2.len()).max().unwrap_or(0);
    let mut w = vec![0.0; len];
    for &(_, off, part) in parts {
        w[off..off + part.len()].copy_from_slice(part);
    }
    w
}

fn merge(algorithm: Algorithm, layout: LayoutKind, mut traces: Vec<RankTrace>) -> SolveOutput {
    let ranks = traces.len();
    let w = gather_w(
        &traces
            .iter()
            .map(|t| (t.w_replicated, t.w_offset, t.w_part.as_slice()))
            .collect::<Vec<_>>(),
    );
    let n_snap = traces[0].snapshots.len();
    let snapshots = (0..n_snap)
        .map(|k| {
            let parts: Vec<_> = traces
                .iter()
                .map(|t| (t.w_replicated, t.w_offset, t.snapshots[k].w_part.as_slice()))
                .collect();
            let head = &traces[0].snapshots[k];
            let z = head.z_part.as_ref().map(|_| {
                let parts: Vec<_> = traces
                    .iter()
                    .map(|t| (false, t.z_offset, t.snapshots[k].z_part.as_deref().unwrap_or(&[])))
                    .collect();
                gather_w(&parts)
            });
            Snapshot {
                iteration: head.iteration,
                w: gather_w(&parts),
                alpha: head.alpha.clone(),
                z,
                counters: head.counters,
                sampled_nnz: traces.iter().map(|t| t.snapshots[k].sampled_nnz).sum(),
                wall_seconds: traces
                    .iter()
                    .map(|t| t.snapshots[k].wall_seconds)
                    .fold(0.0, f64::max),
            }
        })
        .collect();
    let rank_counters = traces.iter().map(|t| t.counters).collect();
    let head = &mut traces[0];
    SolveOutput {
        algorithm,
        layout,
        ranks,
        w,
        alpha: head.alpha.take(),
        iterations: head.iterations,
        converged: head.converged,
        residual_norm: head.residual_norm,
        snapshots,
        gram_conds: std::mem::take(&mut head.gram_conds),
        updates: std::mem::take(&mut head.updates),
        counters: head.critical,
        rank_counters,
        cholesky_retries: head.cholesky_retries,
    }
}
