use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SolverError;
use crate::sparse::BlockSelector;

/// Draws `b` distinct coordinates of `0..universe` uniformly without replacement.
///
/// The result depends only on `(seed, iteration)`: the ChaCha stream is keyed
/// by the seed and positioned by the iteration, so every rank derives the same
/// block without communicating and the rank count never perturbs it. The draw
/// is a partial Fisher-Yates shuffle over a virtual identity permutation,
/// touching `O(b)` memory.
pub fn sample_block(
    seed: u64,
    iteration: u64,
    universe: usize,
    b: usize,
) -> Result<BlockSelector, SolverError> {
    if b == 0 || b > universe {
        return Err(SolverError::InvalidConfig {
            field: "block_size",
            reason: format!("need 1 <= b <= {universe}, got {b}"),
        });
    }
    if b == universe {
        return Ok(BlockSelector::full(universe)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    // displaced entries of the virtual permutation
    let mut moved: Vec<(usize, usize)> = Vec::with_capacity(2 * b);
    let lookup = |moved: &[(usize, usize)], i: usize| {
        moved
            .iter()
            .rev()
            .find(|&&(k, _)| k == i)
            .map_or(i, |&(_, v)| v)
    };
    let mut picked = Vec::with_capacity(b);
    for i in 0..b {
        let j = rng.gen_range(i..universe);
        let at_i = lookup(&moved, i);
        let at_j = lookup(&moved, j);
        moved.push((j, at_i));
        moved.push((i, at_j));
        picked.push(at_j);
    }
    Ok(BlockSelector::from_unsorted(picked, universe)?)
}
