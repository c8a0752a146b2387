//! Random forests: CART trees trained on bootstrap samples with random
//! feature subsetting, plus the in-bag bookkeeping that makes out-of-bag
//! error estimation possible.
//!
//! Training keeps, for every tree `j`, the multiplicity with which each
//! observation `i` entered tree `j`'s bootstrap sample. The derived sets
//! `O_i = { j : inbag[j][i] = 0 }` are the out-of-bag subforests consumed by
//! [`crate::oobci`].

mod bootstrap;
mod serialize;
mod split;
mod tree;

pub use bootstrap::bootstrap_multiplicities;
pub use split::{BestSplit, EXHAUSTIVE_LEVEL_LIMIT, LevelMask, SplitRule, best_split};
pub use tree::{Prediction, Tree, train_tree};

use rayon::prelude::*;

use crate::data::{Column, Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};

/// Per-tree training parameters.
///
/// `mtry` candidate features are drawn without replacement at every split.
/// A node becomes a leaf once its in-bag weight no longer exceeds
/// `min_node_size` (so `min_node_size = n` forces a single-leaf tree), when it
/// is pure, when `max_depth` is reached, or when no candidate split decreases
/// impurity.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
}

impl TreeParams {
    /// Conventional defaults: `mtry = floor(p/3)` for regression and
    /// `floor(sqrt(p))` for classification (at least 1 either way);
    /// `min_node_size` 5 for regression, 1 for classification; no depth cap.
    pub fn defaults(task: Task, n_features: usize) -> Self {
        let mtry = match task {
            Task::Regression => (n_features / 3).max(1),
            Task::Classification => (n_features as f64).sqrt().floor() as usize,
        }
        .max(1);
        TreeParams {
            mtry,
            min_node_size: match task {
                Task::Regression => 5,
                Task::Classification => 1,
            },
            max_depth: None,
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::invalid_argument(format!(
                "mtry must be in 1..={n_features}, got {}",
                self.mtry
            )));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid_argument("min_node_size must be >= 1"));
        }
        Ok(())
    }
}

/// Kind of one feature column, including the level dictionary for
/// categoricals so schema checks catch re-encoded data.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    Numeric,
    Categorical(Vec<String>),
}

/// The feature/response layout a forest was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub response_name: String,
    /// Class names for classification, empty for regression.
    pub classes: Vec<String>,
}

impl Schema {
    pub fn of(data: &Dataset) -> Self {
        Schema {
            feature_names: data.feature_names().to_vec(),
            feature_kinds: data
                .columns()
                .iter()
                .map(|c| match c {
                    Column::Numeric(_) => FeatureKind::Numeric,
                    Column::Categorical { levels, .. } => FeatureKind::Categorical(levels.clone()),
                })
                .collect(),
            response_name: data.response_name().to_string(),
            classes: data.classes().to_vec(),
        }
    }

    /// Feature table compatibility (names, kinds, level dictionaries).
    pub(crate) fn check_features(&self, data: &Dataset) -> Result<()> {
        if data.n_features() != self.feature_kinds.len() {
            return Err(Error::schema_mismatch(format!(
                "expected {} features, data has {}",
                self.feature_kinds.len(),
                data.n_features()
            )));
        }
        for (j, (name, kind)) in self
            .feature_names
            .iter()
            .zip(&self.feature_kinds)
            .enumerate()
        {
            if data.feature_names()[j] != *name {
                return Err(Error::schema_mismatch(format!(
                    "feature {j} is `{}`, expected `{name}`",
                    data.feature_names()[j]
                )));
            }
            let ok = match (kind, data.column(j)) {
                (FeatureKind::Numeric, Column::Numeric(_)) => true,
                (FeatureKind::Categorical(levels), Column::Categorical { levels: got, .. }) => {
                    levels == got
                }
                _ => false,
            };
            if !ok {
                return Err(Error::schema_mismatch(format!(
                    "feature `{name}` has a different kind or level dictionary"
                )));
            }
        }
        Ok(())
    }

    /// Feature and response compatibility (task and class dictionary).
    pub(crate) fn check_labeled(&self, data: &Dataset) -> Result<()> {
        self.check_features(data)?;
        if data.classes() != self.classes.as_slice() {
            return Err(Error::schema_mismatch(
                "response task or class dictionary differs from training data",
            ));
        }
        Ok(())
    }
}

/// A trained random forest with its in-bag bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    /// `inbag[j][i]`: multiplicity of observation `i` in tree `j`'s sample.
    inbag: Vec<Vec<u32>>,
    task: Task,
    params: TreeParams,
    master_seed: u64,
    schema: Schema,
}

/// Trains `n_trees` (bootstrap sample, CART tree) pairs.
///
/// Tree `j`'s RNG stream is a pure function of `(master_seed, j)`, so the
/// forest is identical for any thread count or execution order.
pub fn train_forest(
    data: &Dataset,
    n_trees: usize,
    params: &TreeParams,
    master_seed: u64,
) -> Result<Forest> {
    if n_trees == 0 {
        return Err(Error::invalid_argument("number of trees must be >= 1"));
    }
    params.validate(data.n_features())?;
    let n = data.n_rows();
    let pairs: Result<Vec<(Vec<u32>, Tree)>> = (0..n_trees)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(master_seed, domain::TREE, j as u64);
            let bag = bootstrap_multiplicities(n, &mut rng)?;
            let tree = train_tree(data, &bag, params, &mut rng)?;
            Ok((bag, tree))
        })
        .collect();
    let (inbag, trees): (Vec<_>, Vec<_>) = pairs?.into_iter().unzip();
    Ok(Forest {
        trees,
        inbag,
        task: data.task(),
        params: params.clone(),
        master_seed,
        schema: Schema::of(data),
    })
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Number of training observations.
    pub fn n_train(&self) -> usize {
        self.inbag[0].len()
    }

    /// In-bag multiplicity matrix, `[tree][observation]`.
    pub fn inbag(&self) -> &[Vec<u32>] {
        &self.inbag
    }

    /// The out-of-bag tree set `O_i` for every training observation.
    pub fn oob_sets(&self) -> Vec<Vec<u32>> {
        let n = self.n_train();
        let mut sets = vec![Vec::new(); n];
        for (j, bag) in self.inbag.iter().enumerate() {
            for (i, &w) in bag.iter().enumerate() {
                if w == 0 {
                    sets[i].push(j as u32);
                }
            }
        }
        sets
    }

    /// Mean over observations of `|O_i| / B`; approaches `(1 - 1/n)^n`.
    pub fn oob_fraction_mean(&self) -> f64 {
        let n = self.n_train();
        let b = self.n_trees();
        let mut oob = 0usize;
        for bag in &self.inbag {
            oob += bag.iter().filter(|&&w| w == 0).count();
        }
        oob as f64 / (n * b) as f64
    }

    /// Aggregated prediction of the whole forest for one row: the mean of the
    /// member trees in regression, the modal vote in classification (ties
    /// toward the smallest label id).
    pub fn predict(&self, data: &Dataset, row: usize) -> Result<Prediction> {
        self.schema.check_features(data)?;
        if row >= data.n_rows() {
            return Err(Error::invalid_argument(format!(
                "row {row} out of range for {} rows",
                data.n_rows()
            )));
        }
        Ok(self.predict_trusted(data, row, None))
    }

    /// Aggregated prediction over a subforest given by tree indices.
    pub fn predict_subset(&self, data: &Dataset, row: usize, trees: &[u32]) -> Result<Prediction> {
        self.schema.check_features(data)?;
        if trees.is_empty() {
            return Err(Error::EmptySubforest);
        }
        if let Some(&j) = trees.iter().find(|&&j| j as usize >= self.trees.len()) {
            return Err(Error::invalid_argument(format!(
                "tree index {j} out of range for {} trees",
                self.trees.len()
            )));
        }
        if row >= data.n_rows() {
            return Err(Error::invalid_argument(format!(
                "row {row} out of range for {} rows",
                data.n_rows()
            )));
        }
        Ok(self.predict_trusted(data, row, Some(trees)))
    }

    pub(crate) fn predict_trusted(
        &self,
        data: &Dataset,
        row: usize,
        subset: Option<&[u32]>,
    ) -> Prediction {
        match self.task {
            Task::Regression => {
                let (sum, count) = match subset {
                    None => {
                        let mut s = 0.0;
                        for t in &self.trees {
                            s += t.predict_trusted(data, row).as_real().unwrap();
                        }
                        (s, self.trees.len())
                    }
                    Some(ids) => {
                        let mut s = 0.0;
                        for &j in ids {
                            s += self.trees[j as usize]
                                .predict_trusted(data, row)
                                .as_real()
                                .unwrap();
                        }
                        (s, ids.len())
                    }
                };
                Prediction::Real(sum / count as f64)
            }
            Task::Classification => {
                let n_classes = self.schema.classes.len();
                let mut votes = vec![0u32; n_classes];
                match subset {
                    None => {
                        for t in &self.trees {
                            let label = t.predict_trusted(data, row).as_label().unwrap();
                            votes[(label - 1) as usize] += 1;
                        }
                    }
                    Some(ids) => {
                        for &j in ids {
                            let label = self.trees[j as usize]
                                .predict_trusted(data, row)
                                .as_label()
                                .unwrap();
                            votes[(label - 1) as usize] += 1;
                        }
                    }
                }
                Prediction::Label(tree::argmax_tie_smallest(&votes) as u32 + 1)
            }
        }
    }

    /// Full-forest predictions for every row.
    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        self.schema.check_features(data)?;
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        Ok(rows
            .par_chunks(256)
            .flat_map_iter(|chunk| {
                chunk
                    .iter()
                    .map(|&row| self.predict_trusted(data, row, None))
                    .collect::<Vec<_>>()
            })
            .collect())
    }

    /// Mean loss of the full forest on a labeled dataset: mean squared error
    /// in regression, misclassification rate in classification.
    ///
    /// On a fresh sample this approximates the generalization error; on the
    /// training sample it gives the (optimistic) in-bag training error.
    pub fn empirical_error(&self, data: &Dataset) -> Result<f64> {
        self.schema.check_labeled(data)?;
        let n = data.n_rows();
        let rows: Vec<usize> = (0..n).collect();
        // Fixed-size chunks keep the summation order independent of the
        // number of worker threads.
        let partials: Vec<f64> = rows
            .par_chunks(256)
            .map(|chunk| {
                let mut loss = 0.0;
                for &row in chunk {
                    match self.predict_trusted(data, row, None) {
                        Prediction::Real(pred) => {
                            let r = data.y_real(row) - pred;
                            loss += r * r;
                        }
                        Prediction::Label(pred) => {
                            loss += f64::from(pred != data.y_label(row));
                        }
                    }
                }
                loss
            })
            .collect();
        Ok(partials.iter().sum::<f64>() / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::datagen;

    fn small_regression(n: usize, seed: u64) -> Dataset {
        datagen::friedman(n, seed).unwrap()
    }

    #[test]
    fn inbag_columns_sum_to_n() {
        let data = small_regression(40, 5);
        let forest = train_forest(&data, 30, &TreeParams::defaults(Task::Regression, 10), 9).unwrap();
        assert_eq!(forest.n_trees(), 30);
        for bag in forest.inbag() {
            assert_eq!(bag.iter().map(|&w| w as usize).sum::<usize>(), 40);
        }
    }

    #[test]
    fn zero_trees_is_an_error() {
        let data = small_regression(10, 5);
        let err =
            train_forest(&data, 0, &TreeParams::defaults(Task::Regression, 10), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn single_tree_oob_sets_are_all_or_nothing() {
        let data = small_regression(20, 3);
        let forest = train_forest(&data, 1, &TreeParams::defaults(Task::Regression, 10), 2).unwrap();
        for set in forest.oob_sets() {
            assert!(set.is_empty() || set == vec![0]);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data = small_regression(30, 8);
        let p = TreeParams::defaults(Task::Regression, 10);
        let a = train_forest(&data, 12, &p, 77).unwrap();
        let b = train_forest(&data, 12, &p, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thread_count_does_not_change_the_forest() {
        let data = small_regression(30, 8);
        let p = TreeParams::defaults(Task::Regression, 10);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| train_forest(&data, 16, &p, 123)).unwrap();
        let b = pool4.install(|| train_forest(&data, 16, &p, 123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forest_mean_matches_tree_means() {
        let data = small_regression(50, 2);
        let forest = train_forest(&data, 25, &TreeParams::defaults(Task::Regression, 10), 4).unwrap();
        for row in [0usize, 7, 49] {
            let by_forest = forest.predict(&data, row).unwrap().as_real().unwrap();
            let mean: f64 = forest
                .trees()
                .iter()
                .map(|t| t.predict(&data, row).unwrap().as_real().unwrap())
                .sum::<f64>()
                / forest.n_trees() as f64;
            let rel = (by_forest - mean).abs() / mean.abs().max(1.0);
            assert!(rel < 1e-9, "row {row}: {by_forest} vs {mean}");
        }
    }

    #[test]
    fn vote_ties_break_to_smallest_label() {
        // Two constant-leaf trees voting for different labels.
        let data = Dataset::classification(
            vec!["x".into()],
            vec![Column::Numeric(vec![0.0, 1.0])],
            "y",
            vec![1, 2],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        // min_node_size = n makes each tree a single leaf predicting the
        // in-bag majority; with a forced bag each tree sees one row.
        let p = TreeParams {
            mtry: 1,
            min_node_size: 2,
            max_depth: None,
        };
        let forest = train_forest(&data, 40, &p, 3).unwrap();
        let pred = forest.predict(&data, 0).unwrap();
        // Not asserting the winner here (it depends on the bags), only that
        // subset votes {tree for label 1, tree for label 2} tie toward 1.
        let mut one_of_each: Option<(u32, u32)> = None;
        'outer: for (a, ta) in forest.trees().iter().enumerate() {
            for (b, tb) in forest.trees().iter().enumerate() {
                let la = ta.predict(&data, 0).unwrap().as_label().unwrap();
                let lb = tb.predict(&data, 0).unwrap().as_label().unwrap();
                if la == 1 && lb == 2 {
                    one_of_each = Some((a as u32, b as u32));
                    break 'outer;
                }
            }
        }
        let (a, b) = one_of_each.expect("expected both labels among single-leaf trees");
        let tied = forest.predict_subset(&data, 0, &[a, b]).unwrap();
        assert_eq!(tied, Prediction::Label(1));
        assert!(matches!(pred, Prediction::Label(1 | 2)));
    }

    #[test]
    fn empty_subset_is_an_error() {
        let data = small_regression(10, 1);
        let forest = train_forest(&data, 3, &TreeParams::defaults(Task::Regression, 10), 5).unwrap();
        assert!(matches!(
            forest.predict_subset(&data, 0, &[]),
            Err(Error::EmptySubforest)
        ));
    }

    #[test]
    fn schema_mismatch_is_detected() {
        let data = small_regression(10, 1);
        let forest = train_forest(&data, 3, &TreeParams::defaults(Task::Regression, 10), 5).unwrap();
        let other = Dataset::regression(
            vec!["z".into()],
            vec![Column::Numeric(vec![1.0, 2.0])],
            "y",
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            forest.predict(&other, 0),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn three_class_forest_trains_and_votes() {
        // Majority voting needs no special casing beyond binary.
        let n = 90;
        let mut x = Vec::with_capacity(n);
        let mut codes = Vec::with_capacity(n);
        let mut rng = crate::rng::stream(5, 50, 0);
        use rand::Rng;
        for _ in 0..n {
            let v: f64 = rng.random();
            x.push(v);
            codes.push(if v < 0.33 {
                1
            } else if v < 0.66 {
                2
            } else {
                3
            });
        }
        let data = Dataset::classification(
            vec!["x".into()],
            vec![Column::Numeric(x)],
            "y",
            codes.clone(),
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let forest =
            train_forest(&data, 80, &TreeParams::defaults(Task::Classification, 1), 6).unwrap();
        let mut correct = 0;
        for (i, &label) in codes.iter().enumerate() {
            if forest.predict(&data, i).unwrap() == Prediction::Label(label) {
                correct += 1;
            }
        }
        assert!(correct as f64 / n as f64 > 0.9, "{correct}/{n}");
        let aug = crate::oobci::build_augmented(&forest, &data).unwrap();
        let errors = crate::oobci::per_observation_errors(&aug, &data).unwrap();
        let ci = crate::oobci::bootstrap_ci(&errors, 0.9, 300, 2).unwrap();
        assert!(ci.lower >= 0.0 && ci.upper <= 1.0);
    }

    #[test]
    fn mtry_defaults_follow_convention() {
        let r = TreeParams::defaults(Task::Regression, 10);
        assert_eq!((r.mtry, r.min_node_size), (3, 5));
        let c = TreeParams::defaults(Task::Classification, 20);
        assert_eq!((c.mtry, c.min_node_size), (4, 1));
        assert_eq!(TreeParams::defaults(Task::Regression, 2).mtry, 1);
    }
}
