//! Seeded generators for the two synthetic benchmark processes.
//!
//! Both generators draw one row at a time from a single ChaCha stream seeded
//! by the caller. Normal variates come from the inverse-CDF transform of one
//! uniform draw each ([`crate::special::normal_quantile`]), so the exact
//! output is a fixed, documented function of `(n, seed)` and test vectors
//! stay stable.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::special::normal_quantile;

/// Median of the chi-squared distribution with 10 degrees of freedom.
///
/// Solved to full precision by bisection on the regularized lower incomplete
/// gamma function `P(5, x/2) = 1/2` (see the tests in this module).
const CHI2_MEDIAN_10: f64 = 9.341817765591962;

/// Threshold constant of the Gaussian spheres process.
pub fn chi2_median_10() -> f64 {
    CHI2_MEDIAN_10
}

/// Which synthetic process to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Process {
    /// 10 uniform predictors, smooth regression surface plus unit noise.
    Friedman,
    /// 20 standard normal predictors, binary label from the radius of the
    /// first 10, with 5% label noise.
    Spheres,
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::Friedman => write!(f, "friedman"),
            Process::Spheres => write!(f, "spheres"),
        }
    }
}

impl FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "friedman" => Ok(Process::Friedman),
            "spheres" => Ok(Process::Spheres),
            other => Err(Error::invalid_argument(format!(
                "unknown process `{other}` (expected `friedman` or `spheres`)"
            ))),
        }
    }
}

/// Noiseless Friedman response surface at a feature row (uses the first five
/// coordinates; the rest are noise predictors).
pub fn friedman_mean(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5) * (x[2] - 0.5)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// Draws `n` rows of the Friedman regression process: ten independent
/// `U[0,1]` predictors and `Y = friedman_mean(X) + eps` with standard normal
/// `eps`. Predictors 6-10 are unrelated to the response.
pub fn friedman(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let p = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = (0..p).map(|_| Vec::with_capacity(n)).collect();
    let mut y = Vec::with_capacity(n);
    let mut row = [0.0f64; 10];
    for _ in 0..n {
        for (j, value) in row.iter_mut().enumerate() {
            *value = rng.random::<f64>();
            columns[j].push(*value);
        }
        y.push(friedman_mean(&row) + standard_normal(&mut rng));
    }
    Dataset::regression(
        (1..=p).map(|j| format!("x{j}")).collect(),
        columns.into_iter().map(Column::Numeric).collect(),
        "y",
        y,
    )
}

/// Draws `n` rows of the Gaussian spheres classification process: twenty
/// independent standard normal predictors; the latent class is +1 when the
/// squared radius of the first ten exceeds the chi-squared(10) median, and a
/// Bernoulli(0.05) flip is applied. Labels are stored as 1 (the -1 class)
/// and 2 (the +1 class).
///
/// A very small `n` can produce a draw containing a single class, which is
/// rejected as an invalid dataset; at the sample sizes the process is meant
/// for this has vanishing probability.
pub fn spheres(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let p = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = (0..p).map(|_| Vec::with_capacity(n)).collect();
    let mut codes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut radius_sq = 0.0;
        for (j, column) in columns.iter_mut().enumerate() {
            let v = standard_normal(&mut rng);
            column.push(v);
            if j < 10 {
                radius_sq += v * v;
            }
        }
        let z_positive = radius_sq > CHI2_MEDIAN_10;
        let flip = rng.random::<f64>() < 0.05;
        let positive = z_positive != flip;
        codes.push(if positive { 2 } else { 1 });
    }
    Dataset::classification(
        (1..=p).map(|j| format!("x{j}")).collect(),
        columns.into_iter().map(Column::Numeric).collect(),
        "y",
        codes,
        vec!["1".into(), "2".into()],
    )
}

/// Draws from the named process.
pub fn generate(process: Process, n: usize, seed: u64) -> Result<Dataset> {
    match process {
        Process::Friedman => friedman(n, seed),
        Process::Spheres => spheres(n, seed),
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::invalid_argument(format!(
            "sample size must be >= 2, got {n}"
        )))
    } else {
        Ok(())
    }
}

/// One standard normal variate: inverse CDF applied to one uniform draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // random::<f64>() is in [0, 1); clamp away from 0 for the quantile.
    let u = rng.random::<f64>().max(f64::MIN_POSITIVE);
    normal_quantile(u)
}
