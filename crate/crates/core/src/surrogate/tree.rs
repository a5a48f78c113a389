//! Histogram-based CART regression trees shared by the forest and boosting.
//!
//! Features are binned once per dataset: every distinct value gets its own bin
//! when a feature has at most 256 of them, otherwise bins follow quantiles.
//! Split thresholds sit halfway between adjacent bin values, so predictions
//! compare raw feature values.

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use ordered::Ordered;
use serde::{Deserialize, Serialize};

const MAX_BINS: usize = 256;

mod ordered {
    /// Total-ordered float wrapper for building value sets.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct Ordered(pub f64);

    impl Eq for Ordered {}

    impl PartialOrd for Ordered {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Ordered {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

/// Feature-major bin indices plus the thresholds separating bins.
pub struct BinnedData {
    bins: Vec<Vec<u8>>,
    /// `thresholds[f][b]` separates bin `b` from bin `b + 1`.
    thresholds: Vec<Vec<f64>>,
    rows: usize,
}

impl BinnedData {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let rows = x.nrows();
        let mut bins = Vec::with_capacity(x.ncols());
        let mut thresholds = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let distinct: Vec<f64> = col.iter().map(|&v| Ordered(v)).collect::<BTreeSet<_>>().into_iter().map(|o| o.0).collect();
            let edges: Vec<f64> = if distinct.len() <= MAX_BINS {
                distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut sorted: Vec<f64> = col.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut e: Vec<f64> = (1..MAX_BINS)
                    .map(|q| sorted[q * rows / MAX_BINS])
                    .collect();
                e.dedup();
                e
            };
            let col_bins = col
                .iter()
                .map(|&v| edges.partition_point(|&t| t < v) as u8)
                .collect();
            bins.push(col_bins);
            thresholds.push(edges);
        }
        Self { bins, thresholds, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn features(&self) -> usize {
        self.bins.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub max_leaves: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Candidate {
    node: usize,
    depth: usize,
    rows: Vec<usize>,
    split: Option<BestSplit>,
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    feature: usize,
    bin: usize,
}

fn best_split(data: &BinnedData, y: &[f64], rows: &[usize], params: &TreeParams) -> Option<BestSplit> {
    let n = rows.len();
    if n < params.min_samples_split.max(2) || n < 2 * params.min_samples_leaf.max(1) {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<BestSplit> = None;
    let mut sums = [0.0f64; MAX_BINS];
    let mut counts = [0usize; MAX_BINS];
    for f in 0..data.features() {
        let n_bins = data.thresholds[f].len() + 1;
        if n_bins < 2 {
            continue;
        }
        sums[..n_bins].fill(0.0);
        counts[..n_bins].fill(0);
        let col = &data.bins[f];
        for &i in rows {
            let b = col[i] as usize;
            sums[b] += y[i];
            counts[b] += 1;
        }
        let (mut left_sum, mut left_n) = (0.0, 0usize);
        for b in 0..n_bins - 1 {
            left_sum += sums[b];
            left_n += counts[b];
            let right_n = n - left_n;
            if left_n < params.min_samples_leaf.max(1) {
                continue;
            }
            if right_n < params.min_samples_leaf.max(1) {
                break;
            }
            if counts[b] == 0 {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
            if gain > 1e-12 && best.is_none_or(|s| gain > s.gain) {
                best = Some(BestSplit { gain, feature: f, bin: b });
            }
        }
    }
    best
}

impl RegressionTree {
    /// Grows a tree on `rows` (duplicates allowed, e.g. a bootstrap sample),
    /// always expanding the leaf with the largest impurity reduction.
    pub fn fit(data: &BinnedData, y: &[f64], rows: Vec<usize>, params: &TreeParams) -> Self {
        let mean = |r: &[usize]| r.iter().map(|&i| y[i]).sum::<f64>() / r.len().max(1) as f64;
        let mut nodes = vec![Node::Leaf { value: mean(&rows) }];
        let root_split = if params.max_depth > 0 { best_split(data, y, &rows, params) } else { None };
        let mut open = vec![Candidate {
            node: 0,
            depth: 0,
            rows,
            split: root_split,
        }];
        let mut leaves = 1;
        loop {
            if params.max_leaves.is_some_and(|m| leaves >= m) {
                break;
            }
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.split.map(|s| (i, s.gain)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((idx, _)) = pick else { break };
            let cand = open.swap_remove(idx);
            let split = cand.split.expect("picked a splittable leaf");
            let col = &data.bins[split.feature];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                cand.rows.iter().partition(|&&i| (col[i] as usize) <= split.bin);
            let left = nodes.len();
            nodes.push(Node::Leaf { value: mean(&left_rows) });
            nodes.push(Node::Leaf { value: mean(&right_rows) });
            nodes[cand.node] = Node::Split {
                feature: split.feature,
                threshold: data.thresholds[split.feature][split.bin],
                left,
                right: left + 1,
            };
            leaves += 1;
            let depth = cand.depth + 1;
            for (node, rows) in [(left, left_rows), (left + 1, right_rows)] {
                let split = if depth < params.max_depth { best_split(data, y, &rows, params) } else { None };
                open.push(Candidate { node, depth, rows, split });
            }
        }
        Self { nodes }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
