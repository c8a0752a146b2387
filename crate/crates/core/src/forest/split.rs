//! CART split search: for one feature over one node's rows, find the binary
//! split with the largest impurity decrease.
//!
//! Regression impurity is the sum of squared deviations from the node mean;
//! classification impurity is the weighted Gini sum `W - sum_k c_k^2 / W`.
//! Both decreases reduce algebraically to
//! `sum_sides s^2/w - s_tot^2/w_tot` (between-groups form), which is what the
//! scans below compute.

use crate::data::{Column, Dataset, Task};

/// Categorical splits above this many observed levels use the ordinal
/// shortcut (levels ordered by mean response or first-class share) instead of
/// the exhaustive subset search.
pub const EXHAUSTIVE_LEVEL_LIMIT: usize = 10;

/// The set of levels of a categorical feature that route to the left child.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMask {
    blocks: Vec<u64>,
}

impl LevelMask {
    pub fn empty(n_levels: usize) -> Self {
        LevelMask {
            blocks: vec![0; n_levels.div_ceil(64).max(1)],
        }
    }

    pub fn insert(&mut self, level: u32) {
        self.blocks[(level / 64) as usize] |= 1u64 << (level % 64);
    }

    pub fn contains(&self, level: u32) -> bool {
        let block = (level / 64) as usize;
        block < self.blocks.len() && (self.blocks[block] >> (level % 64)) & 1 == 1
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub fn from_blocks(blocks: Vec<u64>) -> Self {
        LevelMask { blocks }
    }
}

/// A split rule at an internal node.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitRule {
    /// Numeric: rows with `value <= threshold` go left.
    Threshold(f64),
    /// Categorical: rows whose level is in the mask go left. Levels never
    /// seen at the node during training are baked into the side whose child
    /// received more in-bag weight.
    Levels(LevelMask),
}

/// Outcome of a split search on one feature.
#[derive(Clone, Debug)]
pub struct BestSplit {
    pub rule: SplitRule,
    /// Impurity decrease; strictly positive.
    pub decrease: f64,
}

/// Searches one feature for the best split of the given rows.
///
/// `weights` are in-bag multiplicities parallel to `rows` (use 1 for plain
/// rows). Returns `None` when the feature is constant on the rows or when no
/// split strictly decreases impurity.
pub fn best_split(
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
    feature: usize,
    task: Task,
) -> Option<BestSplit> {
    debug_assert_eq!(rows.len(), weights.len());
    if rows.len() < 2 {
        return None;
    }
    match (data.column(feature), task) {
        (Column::Numeric(values), Task::Regression) => {
            numeric_regression(values, data, rows, weights)
        }
        (Column::Numeric(values), Task::Classification) => {
            numeric_classification(values, data, rows, weights)
        }
        (Column::Categorical { levels, codes }, Task::Regression) => {
            categorical_regression(levels.len(), codes, data, rows, weights)
        }
        (Column::Categorical { levels, codes }, Task::Classification) => {
            categorical_classification(levels.len(), codes, data, rows, weights)
        }
    }
}

/// Midpoint of two adjacent distinct sorted values, clamped so the rule
/// `x <= t` routes `a` left and `b` right even when rounding lands on `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t < a || t >= b { a } else { t }
}

fn numeric_regression(
    values: &[f64],
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
) -> Option<BestSplit> {
    let mut pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .zip(weights)
        .map(|(&r, &w)| (values[r as usize], data.y_real(r as usize), w as f64))
        .collect();
    pts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let w_tot: f64 = pts.iter().map(|p| p.2).sum();
    let s_tot: f64 = pts.iter().map(|p| p.1 * p.2).sum();
    let parent = s_tot * s_tot / w_tot;

    let mut w_left = 0.0;
    let mut s_left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..pts.len() - 1 {
        w_left += pts[i].2;
        s_left += pts[i].1 * pts[i].2;
        if pts[i + 1].0 > pts[i].0 {
            let w_right = w_tot - w_left;
            let s_right = s_tot - s_left;
            let decrease = s_left * s_left / w_left + s_right * s_right / w_right - parent;
            if best.is_none_or(|(_, d)| decrease > d) {
                best = Some((midpoint(pts[i].0, pts[i + 1].0), decrease));
            }
        }
    }
    let (threshold, decrease) = best?;
    (decrease > 0.0).then_some(BestSplit {
        rule: SplitRule::Threshold(threshold),
        decrease,
    })
}

fn numeric_classification(
    values: &[f64],
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
) -> Option<BestSplit> {
    let n_classes = data.n_classes();
    let mut pts: Vec<(f64, u32, f64)> = rows
        .iter()
        .zip(weights)
        .map(|(&r, &w)| (values[r as usize], data.y_label(r as usize), w as f64))
        .collect();
    pts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut counts_right = vec![0.0f64; n_classes];
    for p in &pts {
        counts_right[(p.1 - 1) as usize] += p.2;
    }
    let w_tot: f64 = counts_right.iter().sum();
    let sumsq_tot: f64 = counts_right.iter().map(|c| c * c).sum();
    let parent = sumsq_tot / w_tot;

    // Counts are integer-valued, so the incremental updates below are exact.
    let mut counts_left = vec![0.0f64; n_classes];
    let mut sumsq_left = 0.0;
    let mut sumsq_right = sumsq_tot;
    let mut w_left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..pts.len() - 1 {
        let k = (pts[i].1 - 1) as usize;
        let w = pts[i].2;
        sumsq_left += 2.0 * counts_left[k] * w + w * w;
        sumsq_right += -2.0 * counts_right[k] * w + w * w;
        counts_left[k] += w;
        counts_right[k] -= w;
        w_left += w;
        if pts[i + 1].0 > pts[i].0 {
            let decrease = sumsq_left / w_left + sumsq_right / (w_tot - w_left) - parent;
            if best.is_none_or(|(_, d)| decrease > d) {
                best = Some((midpoint(pts[i].0, pts[i + 1].0), decrease));
            }
        }
    }
    let (threshold, decrease) = best?;
    (decrease > 0.0).then_some(BestSplit {
        rule: SplitRule::Threshold(threshold),
        decrease,
    })
}

/// Per-level weight and weighted response sums over the node's rows.
fn level_sums(
    n_levels: usize,
    codes: &[u32],
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
) -> (Vec<f64>, Vec<f64>) {
    let mut w_by = vec![0.0f64; n_levels];
    let mut s_by = vec![0.0f64; n_levels];
    for (&r, &w) in rows.iter().zip(weights) {
        let c = codes[r as usize] as usize;
        w_by[c] += w as f64;
        s_by[c] += w as f64 * data.y_real(r as usize);
    }
    (w_by, s_by)
}

/// Completes a categorical split: builds the mask from the chosen left-level
/// set and routes dictionary levels unseen at this node toward the heavier
/// child (ties go left).
fn finish_categorical(
    n_levels: usize,
    observed: &[u32],
    left_set: &[u32],
    w_left: f64,
    w_right: f64,
    decrease: f64,
) -> Option<BestSplit> {
    if decrease <= 0.0 {
        return None;
    }
    let mut mask = LevelMask::empty(n_levels);
    for &lv in left_set {
        mask.insert(lv);
    }
    if w_left >= w_right {
        let mut is_observed = vec![false; n_levels];
        for &lv in observed {
            is_observed[lv as usize] = true;
        }
        for (lv, seen) in is_observed.iter().enumerate() {
            if !seen {
                mask.insert(lv as u32);
            }
        }
    }
    Some(BestSplit {
        rule: SplitRule::Levels(mask),
        decrease,
    })
}

fn categorical_regression(
    n_levels: usize,
    codes: &[u32],
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
) -> Option<BestSplit> {
    let (w_by, s_by) = level_sums(n_levels, codes, data, rows, weights);
    let observed: Vec<u32> = (0..n_levels as u32)
        .filter(|&lv| w_by[lv as usize] > 0.0)
        .collect();
    if observed.len() < 2 {
        return None;
    }
    let w_tot: f64 = observed.iter().map(|&lv| w_by[lv as usize]).sum();
    let s_tot: f64 = observed.iter().map(|&lv| s_by[lv as usize]).sum();
    let parent = s_tot * s_tot / w_tot;

    let score = |left: &[u32]| -> (f64, f64) {
        let w_l: f64 = left.iter().map(|&lv| w_by[lv as usize]).sum();
        let s_l: f64 = left.iter().map(|&lv| s_by[lv as usize]).sum();
        let w_r = w_tot - w_l;
        let s_r = s_tot - s_l;
        (w_l, s_l * s_l / w_l + s_r * s_r / w_r - parent)
    };

    let (left_set, w_left, decrease) = if observed.len() <= EXHAUSTIVE_LEVEL_LIMIT {
        best_subset_exhaustive(&observed, score)
    } else {
        // Ordinal shortcut: order levels by mean response, scan as if numeric.
        let mut ordered = observed.clone();
        ordered.sort_unstable_by(|&a, &b| {
            let ma = s_by[a as usize] / w_by[a as usize];
            let mb = s_by[b as usize] / w_by[b as usize];
            ma.total_cmp(&mb).then(a.cmp(&b))
        });
        best_prefix(&ordered, score)
    }?;
    finish_categorical(
        n_levels,
        &observed,
        &left_set,
        w_left,
        w_tot - w_left,
        decrease,
    )
}

fn categorical_classification(
    n_levels: usize,
    codes: &[u32],
    data: &Dataset,
    rows: &[u32],
    weights: &[u32],
) -> Option<BestSplit> {
    let n_classes = data.n_classes();
    let mut w_by = vec![0.0f64; n_levels];
    let mut counts = vec![0.0f64; n_levels * n_classes];
    for (&r, &w) in rows.iter().zip(weights) {
        let c = codes[r as usize] as usize;
        let k = (data.y_label(r as usize) - 1) as usize;
        w_by[c] += w as f64;
        counts[c * n_classes + k] += w as f64;
    }
    let observed: Vec<u32> = (0..n_levels as u32)
        .filter(|&lv| w_by[lv as usize] > 0.0)
        .collect();
    if observed.len() < 2 {
        return None;
    }
    let w_tot: f64 = observed.iter().map(|&lv| w_by[lv as usize]).sum();
    let mut tot = vec![0.0f64; n_classes];
    for &lv in &observed {
        for k in 0..n_classes {
            tot[k] += counts[lv as usize * n_classes + k];
        }
    }
    let parent = tot.iter().map(|c| c * c).sum::<f64>() / w_tot;

    let score = |left: &[u32]| -> (f64, f64) {
        let mut left_counts = vec![0.0f64; n_classes];
        let mut w_l = 0.0;
        for &lv in left {
            w_l += w_by[lv as usize];
            for k in 0..n_classes {
                left_counts[k] += counts[lv as usize * n_classes + k];
            }
        }
        let mut sumsq_l = 0.0;
        let mut sumsq_r = 0.0;
        for k in 0..n_classes {
            sumsq_l += left_counts[k] * left_counts[k];
            let r = tot[k] - left_counts[k];
            sumsq_r += r * r;
        }
        (w_l, sumsq_l / w_l + sumsq_r / (w_tot - w_l) - parent)
    };

    let (left_set, w_left, decrease) = if observed.len() <= EXHAUSTIVE_LEVEL_LIMIT {
        best_subset_exhaustive(&observed, score)
    } else {
        // Ordinal shortcut: order levels by the share of the first class.
        let mut ordered = observed.clone();
        ordered.sort_unstable_by(|&a, &b| {
            let pa = counts[a as usize * n_classes] / w_by[a as usize];
            let pb = counts[b as usize * n_classes] / w_by[b as usize];
            pa.total_cmp(&pb).then(a.cmp(&b))
        });
        best_prefix(&ordered, score)
    }?;
    finish_categorical(
        n_levels,
        &observed,
        &left_set,
        w_left,
        w_tot - w_left,
        decrease,
    )
}

/// Exhaustive search over binary partitions of `observed` (the last level is
/// pinned to the right side so each partition is visited once).
fn best_subset_exhaustive<F>(observed: &[u32], score: F) -> Option<(Vec<u32>, f64, f64)>
where
    F: Fn(&[u32]) -> (f64, f64),
{
    let k = observed.len();
    let mut best: Option<(Vec<u32>, f64, f64)> = None;
    let mut left = Vec::with_capacity(k);
    for mask in 1u32..(1u32 << (k - 1)) {
        left.clear();
        for (i, &lv) in observed[..k - 1].iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                left.push(lv);
            }
        }
        let (w_l, decrease) = score(&left);
        if best.as_ref().is_none_or(|&(_, _, d)| decrease > d) {
            best = Some((left.clone(), w_l, decrease));
        }
    }
    best
}

/// Prefix scan over an ordered level list: left side is `ordered[..=i]`.
fn best_prefix<F>(ordered: &[u32], score: F) -> Option<(Vec<u32>, f64, f64)>
where
    F: Fn(&[u32]) -> (f64, f64),
{
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..ordered.len() - 1 {
        let (w_l, decrease) = score(&ordered[..=i]);
        if best.is_none_or(|(_, _, d)| decrease > d) {
            best = Some((i, w_l, decrease));
        }
    }
    let (i, w_l, decrease) = best?;
    Some((ordered[..=i].to_vec(), w_l, decrease))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn numeric_data(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        Dataset::regression(vec!["x".into()], vec![Column::Numeric(x)], "y", y).unwrap()
    }

    #[test]
    fn perfectly_separable_regression() {
        // Total SS of [0, 0, 10, 10] is 100; the split leaves pure children.
        let data = numeric_data(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 10.0, 10.0]);
        let rows = [0, 1, 2, 3];
        let w = [1, 1, 1, 1];
        let best = best_split(&data, &rows, &w, 0, Task::Regression).unwrap();
        assert!((best.decrease - 100.0).abs() < 1e-9);
        match best.rule {
            SplitRule::Threshold(t) => assert!(t > 2.0 && t < 3.0, "threshold {t}"),
            _ => panic!("expected threshold rule"),
        }
    }

    #[test]
    fn constant_feature_gives_none() {
        let data = numeric_data(vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 3.0]);
        assert!(best_split(&data, &[0, 1, 2], &[1, 1, 1], 0, Task::Regression).is_none());
    }

    #[test]
    fn constant_response_gives_none() {
        let data = numeric_data(vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]);
        assert!(best_split(&data, &[0, 1, 2], &[1, 1, 1], 0, Task::Regression).is_none());
    }

    #[test]
    fn pure_children_classification() {
        let data = Dataset::classification(
            vec!["x".into()],
            vec![Column::Numeric(vec![1.0, 1.0, 2.0, 2.0])],
            "y",
            vec![1, 1, 2, 2],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let best = best_split(&data, &[0, 1, 2, 3], &[1, 1, 1, 1], 0, Task::Classification).unwrap();
        // Parent Gini sum: 4 * (1 - 0.5) = 2; children are pure, so the
        // decrease equals the parent impurity.
        assert!((best.decrease - 2.0).abs() < 1e-12);
        match best.rule {
            SplitRule::Threshold(t) => assert!((1.0..2.0).contains(&t)),
            _ => panic!("expected threshold rule"),
        }
    }

    #[test]
    fn weights_match_repeated_rows() {
        // A weight-2 row must act exactly like the row listed twice.
        let data = numeric_data(vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 5.0]);
        let weighted = best_split(&data, &[0, 1, 2], &[2, 1, 1], 0, Task::Regression).unwrap();
        let expanded_data = numeric_data(vec![1.0, 1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0, 5.0]);
        let expanded =
            best_split(&expanded_data, &[0, 1, 2, 3], &[1, 1, 1, 1], 0, Task::Regression).unwrap();
        assert!((weighted.decrease - expanded.decrease).abs() < 1e-12);
        match (weighted.rule, expanded.rule) {
            (SplitRule::Threshold(a), SplitRule::Threshold(b)) => assert_eq!(a, b),
            _ => panic!("expected threshold rules"),
        }
    }

    #[test]
    fn categorical_exhaustive_separates_levels() {
        let data = Dataset::regression(
            vec!["c".into()],
            vec![Column::Categorical {
                levels: vec!["a".into(), "b".into(), "c".into()],
                codes: vec![0, 1, 2, 0, 1, 2],
            }],
            "y",
            vec![0.0, 10.0, 0.0, 0.0, 10.0, 0.0],
        )
        .unwrap();
        let rows: Vec<u32> = (0..6).collect();
        let w = vec![1u32; 6];
        let best = best_split(&data, &rows, &w, 0, Task::Regression).unwrap();
        match best.rule {
            SplitRule::Levels(mask) => {
                // Level "b" must be alone on one side.
                assert_ne!(mask.contains(1), mask.contains(0));
                assert_eq!(mask.contains(0), mask.contains(2));
            }
            _ => panic!("expected level rule"),
        }
        // Parent SS: values [0,10,0,0,10,0] mean 10/3 -> SS = 6*var.
        let mean: f64 = 10.0 / 3.0;
        let parent_ss: f64 = [0.0, 10.0, 0.0, 0.0, 10.0, 0.0]
            .iter()
            .map(|y| (y - mean) * (y - mean))
            .sum();
        assert!((best.decrease - parent_ss).abs() < 1e-9);
    }

    #[test]
    fn ordinal_shortcut_handles_many_levels() {
        // 12 levels with monotone means; the ordinal scan should find the
        // jump between levels 0..6 (mean 0) and 6..12 (mean 10).
        let n_levels = 12;
        let mut codes = Vec::new();
        let mut y = Vec::new();
        for lv in 0..n_levels as u32 {
            for rep in 0..3 {
                codes.push(lv);
                y.push(if lv < 6 { 0.0 } else { 10.0 } + 0.01 * rep as f64);
            }
        }
        let levels = (0..n_levels).map(|i| format!("L{i}")).collect();
        let data = Dataset::regression(
            vec!["c".into()],
            vec![Column::Categorical { levels, codes }],
            "y",
            y,
        )
        .unwrap();
        let rows: Vec<u32> = (0..36).collect();
        let w = vec![1u32; 36];
        let best = best_split(&data, &rows, &w, 0, Task::Regression).unwrap();
        match best.rule {
            SplitRule::Levels(mask) => {
                for lv in 0..6 {
                    assert_eq!(mask.contains(lv), mask.contains(0), "level {lv}");
                }
                for lv in 6..12 {
                    assert_ne!(mask.contains(lv), mask.contains(0), "level {lv}");
                }
            }
            _ => panic!("expected level rule"),
        }
    }

    #[test]
    fn midpoint_stays_strictly_below_upper() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(t >= a && t < b);
        assert!(midpoint(2.0, 4.0) == 3.0);
    }
}
