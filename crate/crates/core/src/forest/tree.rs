//! Single CART trees grown on a weighted (bootstrap) sample.

use rand_chacha::ChaCha8Rng;

use crate::data::{Cell, Dataset, Task};
use crate::error::{Error, Result};
use crate::forest::split::{BestSplit, SplitRule, best_split};
use crate::forest::TreeParams;

/// A prediction: the mean response of a node or forest (regression), or a
/// class label in `1..=L` (classification).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prediction {
    Real(f64),
    Label(u32),
}

impl Prediction {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Prediction::Real(v) => Some(v),
            Prediction::Label(_) => None,
        }
    }

    pub fn as_label(self) -> Option<u32> {
        match self {
            Prediction::Real(_) => None,
            Prediction::Label(l) => Some(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Node {
    Leaf(Prediction),
    Split {
        feature: u32,
        rule: SplitRule,
        left: u32,
        right: u32,
    },
}

/// A trained CART tree. Nodes live in a flat arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    /// Routes row `row` of `data` from the root to a leaf.
    ///
    /// The caller is responsible for `data` having the schema the tree was
    /// trained on; a kind mismatch or missing feature is reported as a schema
    /// error.
    pub fn predict(&self, data: &Dataset, row: usize) -> Result<Prediction> {
        if row >= data.n_rows() {
            return Err(Error::invalid_argument(format!(
                "row {row} out of range for {} rows",
                data.n_rows()
            )));
        }
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(value) => return Ok(*value),
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    if *feature as usize >= data.n_features() {
                        return Err(Error::schema_mismatch(format!(
                            "tree splits on feature {feature}, data has {}",
                            data.n_features()
                        )));
                    }
                    let go_left = match (rule, data.cell(row, *feature as usize)) {
                        (SplitRule::Threshold(t), Cell::Num(v)) => v <= *t,
                        (SplitRule::Levels(mask), Cell::Cat(c)) => mask.contains(c),
                        _ => {
                            return Err(Error::schema_mismatch(format!(
                                "feature {feature} kind differs from training data"
                            )));
                        }
                    };
                    idx = if go_left { *left as usize } else { *right as usize };
                }
            }
        }
    }

    /// Prediction without schema checks, for batch paths that validated once.
    pub(crate) fn predict_trusted(&self, data: &Dataset, row: usize) -> Prediction {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(value) => return *value,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let go_left = match (rule, data.cell(row, *feature as usize)) {
                        (SplitRule::Threshold(t), Cell::Num(v)) => v <= *t,
                        (SplitRule::Levels(mask), Cell::Cat(c)) => mask.contains(c),
                        _ => unreachable!("schema validated by caller"),
                    };
                    idx = if go_left { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Index of the largest count, ties resolved toward the smallest index.
pub(crate) fn argmax_tie_smallest<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    best
}

/// Grows a tree on the weighted sample described by `inbag` (per-observation
/// multiplicities, as produced by one bootstrap draw).
///
/// Splitting recurses depth-first; at each node `mtry` candidate features are
/// drawn without replacement from the tree's RNG stream, so the result is a
/// pure function of `(data, inbag, params, rng state)`.
pub fn train_tree(
    data: &Dataset,
    inbag: &[u32],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<Tree> {
    if inbag.len() != data.n_rows() {
        return Err(Error::invalid_argument(format!(
            "inbag has {} entries for {} rows",
            inbag.len(),
            data.n_rows()
        )));
    }
    params.validate(data.n_features())?;

    let mut rows: Vec<u32> = Vec::new();
    let mut weights: Vec<u32> = Vec::new();
    for (i, &w) in inbag.iter().enumerate() {
        if w > 0 {
            rows.push(i as u32);
            weights.push(w);
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid_argument("in-bag sample is empty"));
    }

    let mut builder = TreeBuilder {
        data,
        params,
        task: data.task(),
        n_classes: data.n_classes(),
        nodes: Vec::new(),
        rows,
        weights,
    };
    builder.grow(rng);
    Ok(Tree {
        nodes: builder.nodes,
    })
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    params: &'a TreeParams,
    task: Task,
    n_classes: usize,
    nodes: Vec<Node>,
    // Row/weight arena, partitioned in place as nodes split.
    rows: Vec<u32>,
    weights: Vec<u32>,
}

struct Frame {
    slot: usize,
    start: usize,
    end: usize,
    depth: usize,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rng: &mut ChaCha8Rng) {
        self.nodes.push(Node::Leaf(Prediction::Real(0.0)));
        let mut stack = vec![Frame {
            slot: 0,
            start: 0,
            end: self.rows.len(),
            depth: 0,
        }];
        // Left frames are pushed last so the traversal (and with it the RNG
        // consumption order) is depth-first, left child first.
        while let Some(frame) = stack.pop() {
            self.process(frame, &mut stack, rng);
        }
    }

    fn process(&mut self, frame: Frame, stack: &mut Vec<Frame>, rng: &mut ChaCha8Rng) {
        let Frame {
            slot,
            start,
            end,
            depth,
        } = frame;

        let weight_total: u64 = self.weights[start..end].iter().map(|&w| w as u64).sum();
        let depth_capped = self.params.max_depth.is_some_and(|cap| depth >= cap);
        // A node splits only when its in-bag weight exceeds min_node_size;
        // at min_node_size = n this makes the root itself a leaf.
        if weight_total <= self.params.min_node_size as u64
            || depth_capped
            || self.is_pure(start, end)
        {
            self.nodes[slot] = Node::Leaf(self.leaf_value(start, end));
            return;
        }

        let candidates =
            rand::seq::index::sample(rng, self.data.n_features(), self.params.mtry);
        let mut best: Option<(usize, BestSplit)> = None;
        for feature in candidates {
            if let Some(split) = best_split(
                self.data,
                &self.rows[start..end],
                &self.weights[start..end],
                feature,
                self.task,
            ) && best
                .as_ref()
                .is_none_or(|(_, b)| split.decrease > b.decrease)
            {
                best = Some((feature, split));
            }
        }
        let Some((feature, split)) = best else {
            self.nodes[slot] = Node::Leaf(self.leaf_value(start, end));
            return;
        };

        let mid = self.partition(start, end, feature, &split.rule);
        if mid == start || mid == end {
            // Should not happen: the search only proposes splits with both
            // sides occupied. Kept as a guard against pathological rounding.
            debug_assert!(false, "degenerate partition");
            self.nodes[slot] = Node::Leaf(self.leaf_value(start, end));
            return;
        }

        let left_slot = self.nodes.len();
        self.nodes.push(Node::Leaf(Prediction::Real(0.0)));
        self.nodes.push(Node::Leaf(Prediction::Real(0.0)));
        self.nodes[slot] = Node::Split {
            feature: feature as u32,
            rule: split.rule,
            left: left_slot as u32,
            right: (left_slot + 1) as u32,
        };
        stack.push(Frame {
            slot: left_slot + 1,
            start: mid,
            end,
            depth: depth + 1,
        });
        stack.push(Frame {
            slot: left_slot,
            start,
            end: mid,
            depth: depth + 1,
        });
    }

    fn is_pure(&self, start: usize, end: usize) -> bool {
        match self.task {
            Task::Regression => {
                let first = self.data.y_real(self.rows[start] as usize);
                self.rows[start + 1..end]
                    .iter()
                    .all(|&r| self.data.y_real(r as usize) == first)
            }
            Task::Classification => {
                let first = self.data.y_label(self.rows[start] as usize);
                self.rows[start + 1..end]
                    .iter()
                    .all(|&r| self.data.y_label(r as usize) == first)
            }
        }
    }

    fn leaf_value(&self, start: usize, end: usize) -> Prediction {
        match self.task {
            Task::Regression => {
                let mut w_sum = 0.0;
                let mut s = 0.0;
                for (&r, &w) in self.rows[start..end].iter().zip(&self.weights[start..end]) {
                    w_sum += w as f64;
                    s += w as f64 * self.data.y_real(r as usize);
                }
                Prediction::Real(s / w_sum)
            }
            Task::Classification => {
                let mut counts = vec![0u64; self.n_classes];
                for (&r, &w) in self.rows[start..end].iter().zip(&self.weights[start..end]) {
                    counts[(self.data.y_label(r as usize) - 1) as usize] += w as u64;
                }
                Prediction::Label(argmax_tie_smallest(&counts) as u32 + 1)
            }
        }
    }

    /// Stable partition of the arena range by the rule; returns the index of
    /// the first right-side element.
    fn partition(&mut self, start: usize, end: usize, feature: usize, rule: &SplitRule) -> usize {
        let mut left_rows = Vec::with_capacity(end - start);
        let mut left_w = Vec::with_capacity(end - start);
        let mut right_rows = Vec::new();
        let mut right_w = Vec::new();
        for i in start..end {
            let row = self.rows[i];
            let goes_left = match (rule, self.data.cell(row as usize, feature)) {
                (SplitRule::Threshold(t), Cell::Num(v)) => v <= *t,
                (SplitRule::Levels(mask), Cell::Cat(c)) => mask.contains(c),
                _ => unreachable!("rule built for this feature"),
            };
            if goes_left {
                left_rows.push(row);
                left_w.push(self.weights[i]);
            } else {
                right_rows.push(row);
                right_w.push(self.weights[i]);
            }
        }
        let mid = start + left_rows.len();
        self.rows[start..mid].copy_from_slice(&left_rows);
        self.rows[mid..end].copy_from_slice(&right_rows);
        self.weights[start..mid].copy_from_slice(&left_w);
        self.weights[mid..end].copy_from_slice(&right_w);
        mid
    }
}
