//! 1D-block row / column partitioning of `X` across logical ranks.
//!
//! Blocks are contiguous and as equal as possible: the first `dim % P` ranks
//! own `ceil(dim / P)` items, the rest `floor(dim / P)`.

use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::comm::{Comm, CommError, Payload};
use crate::sparse::{BlockSelector, CsrMatrix, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("rank count must be at least 1")]
    ZeroRanks,
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Comm(#[from] CommError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    /// Each rank owns a contiguous block of features (rows of `X`).
    OneDRow,
    /// Each rank owns a contiguous block of data points (columns of `X`).
    OneDColumn,
}

impl LayoutKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayoutKind::OneDRow => "row",
            LayoutKind::OneDColumn => "col",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    kind: LayoutKind,
    boundaries: Vec<usize>,
}

impl Layout {
    /// Splits `dim` items over `ranks` contiguous blocks.
    pub fn new(kind: LayoutKind, dim: usize, ranks: usize) -> Result<Self, PartitionError> {
        if ranks == 0 {
            return Err(PartitionError::ZeroRanks);
        }
        let (base, extra) = (dim / ranks, dim % ranks);
        let mut boundaries = Vec::with_capacity(ranks + 1);
        boundaries.push(0);
        for r in 0..ranks {
            let size = base + usize::from(r < extra);
            boundaries.push(boundaries[r] + size);
        }
        Ok(Layout { kind, boundaries })
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn ranks(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Total number of items split by this layout (`d` for rows, `n` for columns).
    pub fn dim(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn range(&self, rank: usize) -> Range<usize> {
        self.boundaries[rank]..self.boundaries[rank + 1]
    }

    /// Rank owning global item `index`.
    pub fn owner(&self, index: usize) -> usize {
        debug_assert!(index < self.dim());
        self.boundaries.partition_point(|&b| b <= index) - 1
    }
}

/// One rank's piece of `X`.
///
/// `local` keeps global numbering along the unsplit dimension and local
/// numbering (starting at zero) along the split one. `local_t` is its transpose.
#[derive(Debug, Clone)]
pub struct Shard {
    rank: usize,
    layout: Arc<Layout>,
    local: CsrMatrix,
    local_t: CsrMatrix,
    n_rows: usize,
    n_cols: usize,
}

impl Shard {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn kind(&self) -> LayoutKind {
        self.layout.kind
    }

    pub fn local(&self) -> &CsrMatrix {
        &self.local
    }

    pub fn local_t(&self) -> &CsrMatrix {
        &self.local_t
    }

    /// Global `(d, n)` of the full matrix.
    pub fn global_shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    /// Global range this rank owns along the split dimension.
    pub fn owned(&self) -> Range<usize> {
        self.layout.range(self.rank)
    }
}

/// Splits `x` into `ranks` contiguous shards. Empty shards are allowed when
/// the split dimension is smaller than `ranks`.
pub fn partition(
    x: &CsrMatrix,
    ranks: usize,
    kind: LayoutKind,
) -> Result<Vec<Shard>, PartitionError> {
    let dim = match kind {
        LayoutKind::OneDRow => x.n_rows(),
        LayoutKind::OneDColumn => x.n_cols(),
    };
    let layout = Arc::new(Layout::new(kind, dim, ranks)?);
    Ok((0..ranks)
        .map(|rank| {
            let range = layout.range(rank);
            let local = match kind {
                LayoutKind::OneDRow => x.row_block(range),
                LayoutKind::OneDColumn => x.col_block(range),
            };
            let local_t = local.transpose();
            Shard {
                rank,
                layout: Arc::clone(&layout),
                local,
                local_t,
                n_rows: x.n_rows(),
                n_cols: x.n_cols(),
            }
        })
        .collect())
}

/// Reassembles the full matrix from shards given in rank order.
pub fn reconstruct(shards: &[Shard]) -> Result<CsrMatrix, PartitionError> {
    let Some(first) = shards.first() else {
        return Ok(CsrMatrix::zeros(0, 0));
    };
    let blocks: Vec<CsrMatrix> = shards.iter().map(|s| s.local.clone()).collect();
    Ok(match first.kind() {
        LayoutKind::OneDRow => CsrMatrix::vstack(&blocks)?,
        LayoutKind::OneDColumn => CsrMatrix::hstack(&blocks)?,
    })
}

/// Sampled sparse rows travelling through an all-to-all. Only values count
/// toward the word charge; the index structure rides along.
#[derive(Debug, Clone, Default)]
pub struct SampledRows {
    /// `(position in the sample list, column indices, values)`.
    pub rows: Vec<(usize, Vec<usize>, Vec<f64>)>,
}

impl Payload for SampledRows {
    fn words(&self) -> u64 {
        self.rows.iter().map(|(_, _, v)| v.len() as u64).sum()
    }
}

/// Converts sampled entities of a sharded matrix into the opposite layout.
///
/// `owned` is this rank's matrix whose rows are the entities being sampled
/// (features for a row layout, data points via `local_t` for a column
/// layout), numbered locally from `owned_offset`; its columns span the full
/// other dimension. Output row `k` is entity `sample[k]` restricted to this
/// rank's block of `target`, renumbered from zero.
pub(crate) fn exchange_sampled(
    comm: &mut Comm,
    owned: &CsrMatrix,
    owned_range: Range<usize>,
    sample: &[usize],
    target: &Layout,
) -> Result<CsrMatrix, PartitionError> {
    let p = comm.size();
    if target.ranks() != p {
        return Err(PartitionError::LayoutMismatch(format!(
            "target layout has {} ranks, world has {p}",
            target.ranks()
        )));
    }
    let mut send: Vec<SampledRows> = (0..p).map(|_| SampledRows::default()).collect();
    for (pos, &global) in sample.iter().enumerate() {
        if !owned_range.contains(&global) {
            continue;
        }
        let (cols, vals) = owned.row(global - owned_range.start);
        for (dst, out) in send.iter_mut().enumerate() {
            let range = target.range(dst);
            let lo = cols.partition_point(|&c| c < range.start);
            let hi = cols.partition_point(|&c| c < range.end);
            if lo < hi {
                out.rows.push((
                    pos,
                    cols[lo..hi].iter().map(|&c| c - range.start).collect(),
                    vals[lo..hi].to_vec(),
                ));
            }
        }
    }
    let received = comm.all_to_all(send)?;
    let mut rows: Vec<Option<(Vec<usize>, Vec<f64>)>> = vec![None; sample.len()];
    for part in received {
        for (pos, cols, vals) in part.rows {
            rows[pos] = Some((cols, vals));
        }
    }
    let width = target.range(comm.rank()).len();
    let mut row_offsets = Vec::with_capacity(sample.len() + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        if let Some((c, v)) = row {
            col_indices.extend(c);
            values.extend(v);
        }
        row_offsets.push(values.len());
    }
    Ok(CsrMatrix::new(sample.len(), width, row_offsets, col_indices, values)?)
}

/// All-to-all conversion of the sampled rows of a 1D-block row layout into the
/// 1D-block column layout: each rank receives the `b` sampled rows restricted
/// to its column block.
pub fn repartition_sampled(
    comm: &mut Comm,
    shard: &Shard,
    sel: &BlockSelector,
) -> Result<CsrMatrix, PartitionError> {
    if shard.kind() != LayoutKind::OneDRow {
        return Err(PartitionError::LayoutMismatch(
            "repartition_sampled expects a row-layout shard".into(),
        ));
    }
    let (d, n) = shard.global_shape();
    if sel.universe_size() != d {
        return Err(SparseError::DimensionMismatch {
            expected: d,
            actual: sel.universe_size(),
        }
        .into());
    }
    let target = Layout::new(LayoutKind::OneDColumn, n, comm.size())?;
    exchange_sampled(comm, shard.local(), shard.owned(), sel.indices(), &target)
}

/// Largest number of sampled indices owned by a single rank.
pub fn max_load(sel: &BlockSelector, layout: &Layout) -> Result<usize, PartitionError> {
    if sel.universe_size() != layout.dim() {
        return Err(PartitionError::LayoutMismatch(format!(
            "selector universe {} vs layout dimension {}",
            sel.universe_size(),
            layout.dim()
        )));
    }
    let mut counts = vec![0usize; layout.ranks()];
    for &i in sel.indices() {
        counts[layout.owner(i)] += 1;
    }
    Ok(counts.into_iter().max().unwrap_or(0))
}

/// `max / mean` of per-shard non-zero counts (1.0 means perfectly balanced).
pub fn nnz_skew(shards: &[Shard]) -> f64 {
    let counts: Vec<f64> = shards.iter().map(|s| s.local.nnz() as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    if mean == 0.0 {
        return 1.0;
    }
    counts.iter().fold(0.0f64, |m, &c| m.max(c)) / mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::{run_spmd, CommConfig};

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            4,
            5,
            &[(0, 0, 1.0), (0, 4, 2.0), (1, 2, 3.0), (2, 1, 4.0), (3, 3, 5.0), (3, 4, 6.0)],
        )
        .unwrap()
    }

    #[test]
    fn layout_splits() {
        let l = Layout::new(LayoutKind::OneDRow, 4, 2).unwrap();
        assert_eq!(l.boundaries(), &[0, 2, 4]);
        let l = Layout::new(LayoutKind::OneDColumn, 7, 3).unwrap();
        assert_eq!(l.boundaries(), &[0, 3, 5, 7]);
        assert_eq!(l.owner(2), 0);
        assert_eq!(l.owner(3), 1);
        assert_eq!(l.owner(6), 2);
        let l = Layout::new(LayoutKind::OneDColumn, 2, 4).unwrap();
        assert_eq!(l.boundaries(), &[0, 1, 2, 2, 2]);
        assert_eq!(l.owner(1), 1);
        assert!(Layout::new(LayoutKind::OneDRow, 3, 0).is_err());
    }

    #[test]
    fn single_rank_shard_is_whole_matrix() {
        let x = sample();
        for kind in [LayoutKind::OneDRow, LayoutKind::OneDColumn] {
            let shards = partition(&x, 1, kind).unwrap();
            assert_eq!(shards.len(), 1);
            assert_eq!(shards[0].local(), &x);
        }
    }

    #[test]
    fn reconstruction() {
        let x = sample();
        for p in 1..=6 {
            for kind in [LayoutKind::OneDRow, LayoutKind::OneDColumn] {
                let shards = partition(&x, p, kind).unwrap();
                assert_eq!(reconstruct(&shards).unwrap(), x, "p={p} {kind:?}");
            }
        }
        assert_eq!(partition(&x, 0, LayoutKind::OneDRow).unwrap_err(), PartitionError::ZeroRanks);
    }

    #[test]
    fn max_load_cases() {
        let l1 = Layout::new(LayoutKind::OneDRow, 4, 1).unwrap();
        let sel = BlockSelector::new(vec![0, 2, 3], 4).unwrap();
        assert_eq!(max_load(&sel, &l1).unwrap(), 3);
        let l2 = Layout::new(LayoutKind::OneDRow, 4, 2).unwrap();
        let sel = BlockSelector::new(vec![0, 1], 4).unwrap();
        assert_eq!(max_load(&sel, &l2).unwrap(), 2);
        let bad = BlockSelector::new(vec![0], 5).unwrap();
        assert!(max_load(&bad, &l2).is_err());
    }

    #[test]
    fn repartition_single_rank_equals_extract() {
        let x = sample();
        let shards = partition(&x, 1, LayoutKind::OneDRow).unwrap();
        let sel = BlockSelector::new(vec![1, 3], 4).unwrap();
        let out = run_spmd(&CommConfig::serial(1), |c| {
            (repartition_sampled(c, &shards[0], &sel).unwrap(), c.counters())
        })
        .unwrap();
        assert_eq!(out[0].0, x.extract_rows(&sel).unwrap());
        assert_eq!(out[0].1.words, 0);
    }

    #[test]
    fn repartition_identity_two_ranks() {
        let x = CsrMatrix::from_dense_rows(
            &(0..4)
                .map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect())
                .collect::<Vec<_>>(),
            4,
        )
        .unwrap();
        let shards = partition(&x, 2, LayoutKind::OneDRow).unwrap();
        let sel = BlockSelector::new(vec![0, 3], 4).unwrap();
        let out = run_spmd(&CommConfig::serial(2), |c| {
            repartition_sampled(c, &shards[c.rank()], &sel).unwrap()
        })
        .unwrap();
        // dense oracle: rows {0,3} of I4, columns split [0,2) and [2,4)
        let oracle = x.extract_rows(&sel).unwrap().to_dense();
        for (rank, block) in out.iter().enumerate() {
            assert_eq!((block.n_rows(), block.n_cols()), (2, 2));
            let dense = block.to_dense();
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(dense.get(i, j), oracle.get(i, 2 * rank + j));
                }
            }
        }
    }

    #[test]
    fn repartition_rejects_column_shards() {
        let x = sample();
        let shards = partition(&x, 1, LayoutKind::OneDColumn).unwrap();
        let sel = BlockSelector::new(vec![0], 4).unwrap();
        let out =
            run_spmd(&CommConfig::serial(1), |c| repartition_sampled(c, &shards[0], &sel)).unwrap();
        assert!(matches!(out[0], Err(PartitionError::LayoutMismatch(_))));
    }
}
