//! Greedy top-down tree induction by information gain ratio.

use super::tree::{DecisionTree, Node};
use super::{DetectError, Label, LabeledDataset};
use crate::spectral::Feature;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub tree: DecisionTree,
    /// Set when the data held a single label and no split was possible.
    pub degenerate: bool,
}

fn entropy(pos: usize, neg: usize) -> f64 {
    let n = (pos + neg) as f64;
    [pos, neg]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

struct Candidate {
    feature_idx: usize,
    threshold: f64,
    ratio: f64,
}

struct Builder {
    features: Vec<Feature>,
    /// values[f][row]
    values: Vec<Vec<f64>>,
    labels: Vec<Label>,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder {
    fn leaf_for(&self, rows: &[usize]) -> Node {
        let pos = rows
            .iter()
            .filter(|&&r| self.labels[r] == Label::Positive)
            .count();
        let neg = rows.len() - pos;
        // Majority label; ties go negative.
        let (label, count) = if pos > neg {
            (Label::Positive, pos)
        } else {
            (Label::Negative, neg)
        };
        Node::Leaf {
            label,
            confidence: count as f64 / rows.len() as f64,
        }
    }

    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let total_pos = rows
            .iter()
            .filter(|&&r| self.labels[r] == Label::Positive)
            .count();
        let n = rows.len();
        let base = entropy(total_pos, n - total_pos);
        let mut best: Option<Candidate> = None;
        for (fi, vals) in self.values.iter().enumerate() {
            let mut sorted: Vec<usize> = rows.to_vec();
            sorted.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                if self.labels[sorted[i]] == Label::Positive {
                    left_pos += 1;
                }
                let (v, next) = (vals[sorted[i]], vals[sorted[i + 1]]);
                if v == next {
                    continue;
                }
                let left_n = i + 1;
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let (pl, pr) = (left_n as f64 / n as f64, right_n as f64 / n as f64);
                let gain = base
                    - pl * entropy(left_pos, left_n - left_pos)
                    - pr * entropy(total_pos - left_pos, right_n - (total_pos - left_pos));
                if gain <= 1e-12 {
                    continue;
                }
                let split_info = -(pl * pl.log2() + pr * pr.log2());
                let ratio = gain / split_info;
                if best.as_ref().is_none_or(|b| ratio > b.ratio) {
                    best = Some(Candidate {
                        feature_idx: fi,
                        threshold: v + (next - v) / 2.0,
                        ratio,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let pos = rows
            .iter()
            .filter(|&&r| self.labels[r] == Label::Positive)
            .count();
        let pure = pos == 0 || pos == rows.len();
        let split = if pure || depth >= self.max_depth {
            None
        } else {
            self.best_split(rows)
        };
        let id = self.nodes.len();
        self.nodes.push(self.leaf_for(rows));
        if let Some(c) = split {
            let vals = &self.values[c.feature_idx];
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&row| vals[row] <= c.threshold);
            let left = self.build(&l, depth + 1);
            let right = self.build(&r, depth + 1);
            self.nodes[id] = Node::Split {
                feature: self.features[c.feature_idx],
                threshold: c.threshold,
                left,
                right,
            };
        }
        id
    }
}

/// Induces a binary tree over the features shared by every row.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Features are scanned in the order of their `(index, band)` names and
/// thresholds in ascending order; a later candidate replaces the best only
/// with a strictly larger gain ratio.
pub fn train_tree(
    data: &LabeledDataset,
    max_depth: usize,
    min_leaf: usize,
) -> Result<TrainResult, DetectError> {
    if data.rows.len() < 2 {
        return Err(DetectError::InvalidDataset("need at least 2 rows".into()));
    }
    if max_depth == 0 || min_leaf == 0 {
        return Err(DetectError::InvalidDataset(
            "max_depth and min_leaf must be at least 1".into(),
        ));
    }
    let labels: Vec<Label> = data.rows.iter().map(|(_, l)| *l).collect();
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    if pos == 0 || pos == labels.len() {
        return Ok(TrainResult {
            tree: DecisionTree::leaf(labels[0], 1.0),
            degenerate: true,
        });
    }

    let mut features: Vec<Feature> = data.rows[0].0.iter().map(|(f, _)| f).collect();
    features.retain(|f| data.rows.iter().all(|(fv, _)| fv.get(f.0, f.1).is_some()));
    features.sort_by(|a, b| (a.0.as_str(), a.1.as_str()).cmp(&(b.0.as_str(), b.1.as_str())));
    let values = features
        .iter()
        .map(|f| {
            data.rows
                .iter()
                .map(|(fv, _)| fv.get(f.0, f.1).unwrap())
                .collect()
        })
        .collect();

    let mut b = Builder {
        features,
        values,
        labels,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
    };
    let rows: Vec<usize> = (0..data.rows.len()).collect();
    let root = b.build(&rows, 0);
    Ok(TrainResult {
        tree: DecisionTree::new(b.nodes, root)?,
        degenerate: false,
    })
}

/// Fraction of rows the tree labels correctly.
pub fn accuracy(tree: &DecisionTree, data: &LabeledDataset) -> Result<f64, DetectError> {
    let mut hits = 0;
    for (fv, label) in &data.rows {
        if tree.classify(fv)?.label == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.rows.len().max(1) as f64)
}

/// Stratified k-fold cross-validated accuracy. Rows of each label are dealt
/// round-robin to the folds in dataset order.
pub fn cross_validate(
    data: &LabeledDataset,
    folds: usize,
    max_depth: usize,
    min_leaf: usize,
) -> Result<f64, DetectError> {
    if folds < 2 || data.rows.len() < folds {
        return Err(DetectError::InvalidDataset(format!(
            "cannot make {folds} folds"
        )));
    }
    let mut fold_of = vec![0; data.rows.len()];
    let mut next = [0usize; 2];
    for (i, (_, label)) in data.rows.iter().enumerate() {
        let slot = (*label == Label::Positive) as usize;
        fold_of[i] = next[slot] % folds;
        next[slot] += 1;
    }
    let mut hits = 0;
    for k in 0..folds {
        let pick = |want: bool| LabeledDataset {
            rows: data
                .rows
                .iter()
                .zip(&fold_of)
                .filter(|(_, &f)| (f == k) == want)
                .map(|(r, _)| r.clone())
                .collect(),
        };
        let (train, test) = (pick(false), pick(true));
        let tree = train_tree(&train, max_depth, min_leaf)?.tree;
        for (fv, label) in &test.rows {
            if tree.classify(fv)?.label == *label {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / data.rows.len() as f64)
}
