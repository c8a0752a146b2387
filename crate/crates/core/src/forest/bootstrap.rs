use rand::Rng;

use crate::error::{Error, Result};

/// Draws a bootstrap sample of size `n` from `{0..n}` and returns the
/// multiplicity of every index (how many times it was drawn). The
/// multiplicities sum to `n`; indices with multiplicity zero are the
/// out-of-bag observations for this draw.
pub fn bootstrap_multiplicities(n: usize, rng: &mut impl Rng) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::invalid_argument("bootstrap sample size must be >= 1"));
    }
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    Ok(counts)
}
