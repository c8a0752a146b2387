//! Out-of-bag estimation and percentile-bootstrap confidence intervals for a
//! forest's generalization error.
//!
//! The augmented sample pairs every training observation with the trees that
//! never saw it and those trees' predictions for it. Because the out-of-bag
//! estimate depends on that sample only through the per-observation errors,
//! bootstrap replicates are produced by resampling the error vector directly;
//! a level `1 - alpha` interval takes the empirical `alpha/2` and
//! `1 - alpha/2` quantiles of the replicated estimates. The whole
//! construction costs one forest training run plus `M` resampled means.

use rand::Rng as _;
use rayon::prelude::*;

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::forest::{Forest, Prediction};
use crate::rng::{domain, stream};

/// Out-of-bag bookkeeping for every training observation: which trees left
/// it out, and what those trees predict for it.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    oob_sets: Vec<Vec<u32>>,
    predictions: OobPredictions,
}

#[derive(Clone, Debug, PartialEq)]
enum OobPredictions {
    Real(Vec<Vec<f64>>),
    Label(Vec<Vec<u32>>),
}

impl AugmentedSample {
    pub fn n_rows(&self) -> usize {
        self.oob_sets.len()
    }

    pub fn task(&self) -> Task {
        match self.predictions {
            OobPredictions::Real(_) => Task::Regression,
            OobPredictions::Label(_) => Task::Classification,
        }
    }

    /// Tree indices for which observation `i` stayed out-of-bag.
    pub fn oob_set(&self, i: usize) -> &[u32] {
        &self.oob_sets[i]
    }

    /// Out-of-bag predictions for observation `i`, parallel to
    /// [`Self::oob_set`].
    pub fn oob_predictions(&self, i: usize) -> Vec<Prediction> {
        match &self.predictions {
            OobPredictions::Real(p) => p[i].iter().map(|&v| Prediction::Real(v)).collect(),
            OobPredictions::Label(p) => p[i].iter().map(|&l| Prediction::Label(l)).collect(),
        }
    }
}

/// Builds the augmented sample from a trained forest and the dataset it was
/// trained on: `O_i = { j : inbag[j][i] = 0 }` plus the prediction of every
/// such tree for row `i`.
pub fn build_augmented(forest: &Forest, data: &Dataset) -> Result<AugmentedSample> {
    forest.schema().check_labeled(data)?;
    if data.n_rows() != forest.n_train() {
        return Err(Error::schema_mismatch(format!(
            "forest was trained on {} rows, data has {}",
            forest.n_train(),
            data.n_rows()
        )));
    }
    let n = data.n_rows();
    let inbag = forest.inbag();
    let rows: Vec<usize> = (0..n).collect();
    let per_row: Vec<(Vec<u32>, Vec<Prediction>)> = rows
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let mut set = Vec::new();
                    let mut preds = Vec::new();
                    for (j, bag) in inbag.iter().enumerate() {
                        if bag[i] == 0 {
                            set.push(j as u32);
                            preds.push(forest.trees()[j].predict_trusted(data, i));
                        }
                    }
                    (set, preds)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut oob_sets = Vec::with_capacity(n);
    let predictions = match forest.task() {
        Task::Regression => {
            let mut all = Vec::with_capacity(n);
            for (set, preds) in per_row {
                oob_sets.push(set);
                all.push(preds.into_iter().map(|p| p.as_real().unwrap()).collect());
            }
            OobPredictions::Real(all)
        }
        Task::Classification => {
            let mut all = Vec::with_capacity(n);
            for (set, preds) in per_row {
                oob_sets.push(set);
                all.push(preds.into_iter().map(|p| p.as_label().unwrap()).collect());
            }
            OobPredictions::Label(all)
        }
    };
    Ok(AugmentedSample {
        oob_sets,
        predictions,
    })
}

/// The full B x n prediction matrix (`[tree][observation]`), including
/// in-bag predictions.
///
/// The interval construction never needs this — it depends on the augmented
/// sample only through the per-observation errors, so [`build_augmented`]
/// stores out-of-bag predictions alone. This is the opt-in debugging view.
pub fn full_predictions(forest: &Forest, data: &Dataset) -> Result<Vec<Vec<Prediction>>> {
    forest.schema().check_labeled(data)?;
    if data.n_rows() != forest.n_train() {
        return Err(Error::schema_mismatch(format!(
            "forest was trained on {} rows, data has {}",
            forest.n_train(),
            data.n_rows()
        )));
    }
    Ok(forest
        .trees()
        .par_iter()
        .map(|tree| {
            (0..data.n_rows())
                .map(|i| tree.predict_trusted(data, i))
                .collect()
        })
        .collect())
}

/// Per-observation out-of-bag errors.
///
/// `values[k]` is the squared residual (regression) or 0/1 mismatch
/// (classification) of the out-of-bag subforest prediction for the k-th
/// retained observation. Observations whose `O_i` is empty are listed in
/// `excluded` and take no part in estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorVector {
    values: Vec<f64>,
    excluded: Vec<u32>,
}

impl ErrorVector {
    pub fn from_parts(values: Vec<f64>, excluded: Vec<u32>) -> Self {
        ErrorVector { values, excluded }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Indices of observations with no out-of-bag trees.
    pub fn excluded(&self) -> &[u32] {
        &self.excluded
    }

    pub fn n_effective(&self) -> usize {
        self.values.len()
    }
}

/// Reduces the augmented sample to per-observation errors.
///
/// Regression: `(y_i - mean of OOB predictions)^2`. Classification: indicator
/// that `y_i` differs from the modal OOB vote (ties toward the smallest
/// label).
pub fn per_observation_errors(aug: &AugmentedSample, data: &Dataset) -> Result<ErrorVector> {
    if aug.n_rows() != data.n_rows() {
        return Err(Error::schema_mismatch(format!(
            "augmented sample covers {} rows, data has {}",
            aug.n_rows(),
            data.n_rows()
        )));
    }
    if aug.task() != data.task() {
        return Err(Error::schema_mismatch(
            "augmented sample task differs from data",
        ));
    }
    let mut values = Vec::with_capacity(data.n_rows());
    let mut excluded = Vec::new();
    match &aug.predictions {
        OobPredictions::Real(preds) => {
            for (i, p) in preds.iter().enumerate() {
                if p.is_empty() {
                    excluded.push(i as u32);
                    continue;
                }
                let mean = p.iter().sum::<f64>() / p.len() as f64;
                let r = data.y_real(i) - mean;
                values.push(r * r);
            }
        }
        OobPredictions::Label(preds) => {
            let n_classes = data.n_classes();
            let mut votes = vec![0u32; n_classes];
            for (i, p) in preds.iter().enumerate() {
                if p.is_empty() {
                    excluded.push(i as u32);
                    continue;
                }
                votes.iter_mut().for_each(|v| *v = 0);
                for &label in p {
                    votes[(label - 1) as usize] += 1;
                }
                let mode = modal_label(&votes);
                values.push(f64::from(mode != data.y_label(i)));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::NoOobInformation);
    }
    Ok(ErrorVector { values, excluded })
}

fn modal_label(votes: &[u32]) -> u32 {
    let mut best = 0usize;
    for k in 1..votes.len() {
        if votes[k] > votes[best] {
            best = k;
        }
    }
    best as u32 + 1
}

/// The out-of-bag point estimate of the generalization error: the mean of the
/// per-observation errors (divisor `n_effective`).
pub fn oob_estimate(errors: &ErrorVector) -> Result<f64> {
    if errors.values.is_empty() {
        return Err(Error::NoOobInformation);
    }
    Ok(errors.values.iter().sum::<f64>() / errors.values.len() as f64)
}

/// Bootstrap replicates of the out-of-bag estimate, produced by resampling
/// the error vector directly: replicate `m` is the mean of `n_effective`
/// draws with replacement from `values`.
///
/// Replicate `m`'s draws come from a stream derived from `(seed, m)`, so the
/// vector is identical however the loop is scheduled.
pub fn bootstrap_replicates(errors: &ErrorVector, m: usize, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid_argument(
            "number of bootstrap replicates must be >= 1",
        ));
    }
    let n = errors.n_effective();
    if n < 2 {
        return Err(Error::invalid_argument(format!(
            "need at least 2 effective observations to resample, got {n}"
        )));
    }
    let values = &errors.values;
    Ok((0..m)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream(seed, domain::CI_REPLICATE, idx as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += values[rng.random_range(0..n)];
            }
            sum / n as f64
        })
        .collect())
}

/// Empirical quantile: the `ceil(q * len)`-th order statistic (1-indexed) of
/// the samples. Monotone in `q` and equivariant under strictly increasing
/// elementwise transforms.
pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid_argument("quantile of an empty sample"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid_argument(format!(
            "quantile level must be in (0, 1), got {q}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = ceil_rank(q, samples.len());
    Ok(sorted[k - 1])
}

/// `ceil(q * m)` with a snap to the nearest integer when floating-point
/// noise puts `q * m` a hair above it (e.g. 0.05 * 1000 must give rank 50).
fn ceil_rank(q: f64, m: usize) -> usize {
    let x = q * m as f64;
    let nearest = x.round();
    let x = if (x - nearest).abs() < 1e-9 * (1.0 + nearest.abs()) {
        nearest
    } else {
        x
    };
    (x.ceil() as usize).clamp(1, m)
}

/// A percentile-bootstrap confidence interval for the generalization error.
#[derive(Clone, Debug, PartialEq)]
pub struct CiResult {
    /// Confidence level `1 - alpha`.
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    /// The out-of-bag point estimate the interval is built around.
    pub point_estimate: f64,
    /// Number of bootstrap replicates.
    pub m: usize,
    /// Seed of the replicate stream, recorded for audit.
    pub seed: u64,
    /// The replicate vector, when retained.
    pub replicates: Option<Vec<f64>>,
}

impl CiResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Line-oriented record: `level lower upper point_estimate M seed`, full
    /// decimal precision.
    pub fn record_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.level, self.lower, self.upper, self.point_estimate, self.m, self.seed
        )
    }
}

/// Intervals at several levels from one shared replicate vector. Sharing the
/// vector guarantees the intervals are nested across levels.
pub fn cis_from_replicates(
    replicates: &[f64],
    point_estimate: f64,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<CiResult>> {
    if replicates.len() < 2 {
        return Err(Error::invalid_argument(
            "need at least 2 replicates for an interval",
        ));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len();
    levels
        .iter()
        .map(|&level| {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::invalid_argument(format!(
                    "confidence level must be in (0, 1), got {level}"
                )));
            }
            let alpha = 1.0 - level;
            let lower = sorted[ceil_rank(alpha / 2.0, m) - 1];
            let upper = sorted[ceil_rank(1.0 - alpha / 2.0, m) - 1];
            Ok(CiResult {
                level,
                lower,
                upper,
                point_estimate,
                m,
                seed,
                replicates: None,
            })
        })
        .collect()
}

/// The full pipeline for one level: resample the error vector `m` times and
/// take the empirical `alpha/2` and `1 - alpha/2` percentiles. The replicate
/// vector is retained in the result.
pub fn bootstrap_ci(errors: &ErrorVector, level: f64, m: usize, seed: u64) -> Result<CiResult> {
    if m < 2 {
        return Err(Error::invalid_argument(
            "need at least 2 bootstrap replicates",
        ));
    }
    let replicates = bootstrap_replicates(errors, m, seed)?;
    let point = oob_estimate(errors)?;
    let mut results = cis_from_replicates(&replicates, point, &[level], seed)?;
    let mut ci = results.pop().expect("one level in, one interval out");
    ci.replicates = Some(replicates);
    Ok(ci)
}
