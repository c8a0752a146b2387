//! Monte Carlo coverage study for the bootstrap confidence intervals.
//!
//! One replication: simulate a training sample, grow a forest, build the
//! augmented sample, form intervals at every requested level from one shared
//! replicate vector, then approximate the true generalization error with a
//! large fresh test sample and record whether each interval covered it.
//! Replications are independent jobs keyed by `(master seed, id)`; reports
//! are identical for any degree of parallelism.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::datagen::{self, Process};
use crate::error::{Error, Result};
use crate::forest::{TreeParams, train_forest};
use crate::oobci;
use crate::rng::{derive_seed, domain};

/// Configuration of one coverage study.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub process: Process,
    /// Training sample size.
    pub n: usize,
    /// Test sample size used to approximate the true generalization error.
    pub n_test: usize,
    /// Trees per forest.
    pub trees: usize,
    /// Bootstrap replicates per interval.
    pub replicates: usize,
    /// Monte Carlo replications.
    pub replications: usize,
    /// Nominal confidence levels, strictly increasing in (0, 1).
    pub levels: Vec<f64>,
    pub seed: u64,
}

impl SimConfig {
    /// Desk-scale defaults: small enough to run in minutes on a laptop while
    /// keeping the study's shape.
    pub fn desk_scale(process: Process) -> Self {
        SimConfig {
            process,
            n: 200,
            n_test: 20_000,
            trees: 300,
            replicates: 500,
            replications: 200,
            levels: default_levels(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid_argument("training size must be >= 2"));
        }
        if self.n_test < 1 {
            return Err(Error::invalid_argument("test size must be >= 1"));
        }
        if self.trees < 1 {
            return Err(Error::invalid_argument("number of trees must be >= 1"));
        }
        if self.replicates < 2 {
            return Err(Error::invalid_argument(
                "number of bootstrap replicates must be >= 2",
            ));
        }
        if self.replications < 1 {
            return Err(Error::invalid_argument(
                "number of Monte Carlo replications must be >= 1",
            ));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid_argument("need at least one nominal level"));
        }
        for pair in self.levels.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invalid_argument(
                    "levels must be strictly increasing",
                ));
            }
        }
        if self
            .levels
            .iter()
            .any(|&level| !(level > 0.0 && level < 1.0))
        {
            return Err(Error::invalid_argument("levels must lie in (0, 1)"));
        }
        Ok(())
    }

    /// One-line echo of the configuration, used as a provenance header.
    pub fn echo(&self) -> String {
        format!(
            "process={} n={} n_test={} trees={} replicates={} replications={} seed={}",
            self.process,
            self.n,
            self.n_test,
            self.trees,
            self.replicates,
            self.replications,
            self.seed
        )
    }
}

/// The default level grid: 0.05 to 0.95 in steps of 0.05.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// One interval of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutcome {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub covered: bool,
}

/// Everything recorded about one Monte Carlo replication.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationRecord {
    pub id: usize,
    /// Test-sample approximation of the true generalization error.
    pub true_gamma: f64,
    /// Out-of-bag point estimate.
    pub point_estimate: f64,
    pub outcomes: Vec<LevelOutcome>,
}

/// Runs one replication of the study procedure.
pub fn run_replication(config: &SimConfig, id: usize) -> Result<ReplicationRecord> {
    config.validate()?;
    let train_seed = derive_seed(config.seed, domain::SIM_TRAIN, id as u64);
    let forest_seed = derive_seed(config.seed, domain::SIM_FOREST, id as u64);
    let ci_seed = derive_seed(config.seed, domain::SIM_CI, id as u64);
    let test_seed = derive_seed(config.seed, domain::SIM_TEST, id as u64);

    let train = datagen::generate(config.process, config.n, train_seed)?;
    let task = train.task();
    let params = TreeParams::defaults(task, train.n_features());
    let forest = train_forest(&train, config.trees, &params, forest_seed)?;

    let aug = oobci::build_augmented(&forest, &train)?;
    let errors = oobci::per_observation_errors(&aug, &train)?;
    let point_estimate = oobci::oob_estimate(&errors)?;
    let replicates = oobci::bootstrap_replicates(&errors, config.replicates, ci_seed)?;
    let intervals = oobci::cis_from_replicates(&replicates, point_estimate, &config.levels, ci_seed)?;

    let test = datagen::generate(config.process, config.n_test, test_seed)?;
    let true_gamma = forest.empirical_error(&test)?;

    let outcomes = intervals
        .into_iter()
        .map(|ci| LevelOutcome {
            level: ci.level,
            lower: ci.lower,
            upper: ci.upper,
            width: ci.width(),
            covered: ci.lower <= true_gamma && true_gamma <= ci.upper,
        })
        .collect();
    Ok(ReplicationRecord {
        id,
        true_gamma,
        point_estimate,
        outcomes,
    })
}

/// One row of a coverage report.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageRow {
    pub process: Process,
    pub n: usize,
    pub level: f64,
    /// Fraction of replications whose interval contained the approximated
    /// true error.
    pub coverage: f64,
    pub avg_width: f64,
}

/// Coverage and average width per nominal level (and per training size when
/// sweeping), with the generating configuration echoed for provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub config_echo: String,
}

impl CoverageReport {
    /// Rows for one training size, from that study's replication records.
    pub fn from_records(config: &SimConfig, records: &[ReplicationRecord]) -> Result<Self> {
        let rows = summarize(config, records)?;
        Ok(CoverageReport {
            rows,
            config_echo: config.echo(),
        })
    }

    /// CSV rendering with the configuration as a `#` comment header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.config_echo);
        let _ = writeln!(out, "process,n,level,coverage,avg_width");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.process, row.n, row.level, row.coverage, row.avg_width
            );
        }
        out
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.config_echo);
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>8} {:>10} {:>12}",
            "process", "n", "level", "coverage", "avg width"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>8.2} {:>10.3} {:>12.5}",
                row.process.to_string(),
                row.n,
                row.level,
                row.coverage,
                row.avg_width
            );
        }
        out
    }

    fn merge(reports: Vec<CoverageReport>) -> CoverageReport {
        let config_echo = reports
            .iter()
            .map(|r| r.config_echo.clone())
            .collect::<Vec<_>>()
            .join("; ");
        CoverageReport {
            rows: reports.into_iter().flat_map(|r| r.rows).collect(),
            config_echo,
        }
    }
}

/// Aggregates replication records into per-level coverage and width rows.
///
/// Width sums run over the records in sorted order, which makes the report
/// exactly invariant under permutations of the records.
pub fn coverage_report(config: &SimConfig, records: &[ReplicationRecord]) -> Result<CoverageReport> {
    CoverageReport::from_records(config, records)
}

fn summarize(config: &SimConfig, records: &[ReplicationRecord]) -> Result<Vec<CoverageRow>> {
    if records.is_empty() {
        return Err(Error::invalid_argument("no replication records"));
    }
    let n_levels = config.levels.len();
    if records.iter().any(|r| r.outcomes.len() != n_levels) {
        return Err(Error::invalid_argument(
            "records disagree on the level grid",
        ));
    }
    let mut rows = Vec::with_capacity(n_levels);
    for (k, &level) in config.levels.iter().enumerate() {
        let covered = records.iter().filter(|r| r.outcomes[k].covered).count();
        let mut widths: Vec<f64> = records.iter().map(|r| r.outcomes[k].width).collect();
        widths.sort_unstable_by(f64::total_cmp);
        let avg_width = widths.iter().sum::<f64>() / widths.len() as f64;
        rows.push(CoverageRow {
            process: config.process,
            n: config.n,
            level,
            coverage: covered as f64 / records.len() as f64,
            avg_width,
        });
    }
    Ok(rows)
}

/// Runs all replications of one study and aggregates them.
pub fn run_study(config: &SimConfig) -> Result<CoverageReport> {
    let records = run_study_records(config)?;
    CoverageReport::from_records(config, &records)
}

/// Runs all replications of one study, returning the raw records.
pub fn run_study_records(config: &SimConfig) -> Result<Vec<ReplicationRecord>> {
    config.validate()?;
    (0..config.replications)
        .into_par_iter()
        .map(|id| run_replication(config, id))
        .collect()
}

/// Runs the study at several training sizes (each with a seed derived from
/// the master seed and `n`) and stacks the reports.
pub fn run_sweep(base: &SimConfig, sizes: &[usize]) -> Result<CoverageReport> {
    if sizes.is_empty() {
        return Err(Error::invalid_argument("no training sizes to sweep"));
    }
    let mut reports = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let config = SimConfig {
            n,
            seed: derive_seed(base.seed, domain::SIM_STUDY, n as u64),
            ..base.clone()
        };
        let mut report = run_study(&config)?;
        report.config_echo = format!("{} master_seed={}", config.echo(), base.seed);
        reports.push(report);
    }
    Ok(CoverageReport::merge(reports))
}

/// Least-squares estimate of the width shrink exponent `c` in
/// `width ~ n^(-c)`: the negated slope of `log(width)` on `log(n)`. For two
/// points this reduces to `log(w1/w2) / log(n2/n1)`.
pub fn estimate_shrink_rate(width_by_n: &[(f64, f64)]) -> Result<f64> {
    if width_by_n.len() < 2 {
        return Err(Error::invalid_argument(
            "need at least two (n, width) pairs",
        ));
    }
    if width_by_n.iter().any(|&(n, w)| n <= 0.0 || w <= 0.0) {
        return Err(Error::invalid_argument(
            "sizes and widths must be positive",
        ));
    }
    let distinct = {
        let mut ns: Vec<f64> = width_by_n.iter().map(|&(n, _)| n).collect();
        ns.sort_unstable_by(f64::total_cmp);
        ns.dedup();
        ns.len()
    };
    if distinct < 2 {
        return Err(Error::invalid_argument(
            "need at least two distinct sizes",
        ));
    }
    let k = width_by_n.len() as f64;
    let xs: Vec<f64> = width_by_n.iter().map(|&(n, _)| n.ln()).collect();
    let ys: Vec<f64> = width_by_n.iter().map(|&(_, w)| w.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / k;
    let y_mean = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    Ok(-(sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SimConfig {
        SimConfig {
            process: Process::Friedman,
            n: 40,
            n_test: 400,
            trees: 25,
            replicates: 60,
            replications: 6,
            levels: vec![0.5, 0.9],
            seed: 5,
        }
    }

    #[test]
    fn replication_produces_nested_outcomes() {
        let rec = run_replication(&tiny_config(), 0).unwrap();
        assert!(rec.true_gamma > 0.0);
        assert!(rec.point_estimate > 0.0);
        assert_eq!(rec.outcomes.len(), 2);
        let (narrow, wide) = (&rec.outcomes[0], &rec.outcomes[1]);
        assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        // Coverage flag is consistent with the interval.
        for o in &rec.outcomes {
            assert_eq!(o.covered, o.lower <= rec.true_gamma && rec.true_gamma <= o.upper);
            assert!((o.width - (o.upper - o.lower)).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_interval_edge_cases() {
        // An interval spanning everything always covers; a point interval
        // at the estimate essentially never covers a continuous truth.
        let rec = run_replication(&tiny_config(), 1).unwrap();
        let everything = LevelOutcome {
            level: 0.99,
            lower: 0.0,
            upper: f64::INFINITY,
            width: f64::INFINITY,
            covered: 0.0 <= rec.true_gamma,
        };
        assert!(everything.covered);
        let point = rec.point_estimate;
        assert!(!(point <= rec.true_gamma && rec.true_gamma <= point));
    }

    #[test]
    fn report_is_permutation_invariant() {
        let config = tiny_config();
        let mut records = run_study_records(&config).unwrap();
        let report = coverage_report(&config, &records).unwrap();
        records.reverse();
        records.swap(0, 3);
        let permuted = coverage_report(&config, &records).unwrap();
        assert_eq!(report, permuted);
    }

    #[test]
    fn coverage_and_width_are_monotone_in_level() {
        let config = SimConfig {
            levels: vec![0.2, 0.5, 0.8, 0.95],
            ..tiny_config()
        };
        let report = run_study(&config).unwrap();
        for pair in report.rows.windows(2) {
            assert!(pair[1].coverage >= pair[0].coverage);
            assert!(pair[1].avg_width >= pair[0].avg_width);
        }
    }

    #[test]
    fn full_coverage_when_everything_covers() {
        let config = tiny_config();
        let mut records = run_study_records(&config).unwrap();
        for r in &mut records {
            for o in &mut r.outcomes {
                o.lower = 0.0;
                o.upper = f64::MAX;
                o.covered = true;
            }
        }
        let report = coverage_report(&config, &records).unwrap();
        assert!(report.rows.iter().all(|row| row.coverage == 1.0));
    }

    #[test]
    fn study_is_deterministic() {
        let config = tiny_config();
        assert_eq!(run_study(&config).unwrap(), run_study(&config).unwrap());
    }

    #[test]
    fn csv_has_header_comment_and_rows() {
        let config = tiny_config();
        let report = run_study(&config).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# process=friedman"));
        assert_eq!(lines.next().unwrap(), "process,n,level,coverage,avg_width");
        assert_eq!(csv.lines().count(), 2 + config.levels.len());
    }

    #[test]
    fn shrink_rate_from_full_scale_reference_widths() {
        // Level-0.95 widths measured at full scale, recomputed into exponents.
        let friedman = estimate_shrink_rate(&[(500.0, 1.27538), (1000.0, 0.75016)]).unwrap();
        assert!((friedman - 0.7656569198813631).abs() < 1e-12);
        assert!((friedman - 0.764).abs() < 0.05);
        let spheres = estimate_shrink_rate(&[(500.0, 0.03769), (1000.0, 0.02675)]).unwrap();
        assert!((spheres - 0.49464290348848505).abs() < 1e-12);
        assert!((spheres - 0.498).abs() < 0.05);
    }

    #[test]
    fn shrink_rate_edge_cases() {
        assert_eq!(
            estimate_shrink_rate(&[(500.0, 0.4), (1000.0, 0.4)]).unwrap(),
            0.0
        );
        assert!(estimate_shrink_rate(&[(500.0, 0.4)]).is_err());
        assert!(estimate_shrink_rate(&[(500.0, 0.4), (500.0, 0.5)]).is_err());
        assert!(estimate_shrink_rate(&[(500.0, 0.0), (1000.0, 0.1)]).is_err());
        // Three points on an exact power law recover the exponent.
        let exact = estimate_shrink_rate(&[
            (250.0, 250.0f64.powf(-0.7)),
            (500.0, 500.0f64.powf(-0.7)),
            (1000.0, 1000.0f64.powf(-0.7)),
        ])
        .unwrap();
        assert!((exact - 0.7).abs() < 1e-12);
    }

    #[test]
    fn default_levels_print_cleanly() {
        let levels = default_levels();
        assert_eq!(levels.len(), 19);
        assert_eq!(format!("{}", levels[2]), "0.15");
        assert_eq!(format!("{}", levels[18]), "0.95");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny_config();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.levels = vec![0.9, 0.5];
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.levels = vec![0.0];
        assert!(c.validate().is_err());
    }
}
