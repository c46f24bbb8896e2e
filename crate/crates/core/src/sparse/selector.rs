use super::{Result, SparseError};

/// A sorted set of `b` distinct coordinates drawn from `0..universe_size`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockSelector {
    indices: Vec<usize>,
    universe_size: usize,
}

impl BlockSelector {
    pub fn new(indices: Vec<usize>, universe_size: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(SparseError::InvalidSelector("selector is empty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SparseError::InvalidSelector(
                "indices must be strictly increasing".into(),
            ));
        }
        if let Some(&i) = indices.last().filter(|&&i| i >= universe_size) {
            return Err(SparseError::IndexOutOfRange {
                index: i,
                bound: universe_size,
            });
        }
        Ok(BlockSelector {
            indices,
            universe_size,
        })
    }

    /// Sorts and deduplicates `indices` before validating.
    pub fn from_unsorted(mut indices: Vec<usize>, universe_size: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, universe_size)
    }

    pub fn full(universe_size: usize) -> Result<Self> {
        Self::new((0..universe_size).collect(), universe_size)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Position of `index` within the block, if selected.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.indices.binary_search(&index).ok()
    }
}
