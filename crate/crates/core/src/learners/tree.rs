//! Multi-output regression trees with exact greedy splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Features;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Split {
    /// Rows with `x[feature] <= threshold` go left.
    Numeric { feature: usize, threshold: f64 },
    /// Rows with `x[feature] == code` go left.
    Category { feature: usize, code: u32 },
}

impl Split {
    pub fn goes_left(&self, row: &[f64]) -> bool {
        match *self {
            Split::Numeric { feature, threshold } => row[feature] <= threshold,
            Split::Category { feature, code } => row[feature] == code as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub split: Option<Split>,
    pub left: u32,
    pub right: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub split: Split,
    /// Reduction in summed per-output squared error.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_outputs: usize,
    pub nodes: Vec<Node>,
    /// Mean target vector of the training rows that reached each node,
    /// `n_outputs` values per node.
    pub values: Vec<f64>,
}

/// Row-major targets of width `dim`.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub values: &'a [f64],
    pub dim: usize,
}

impl Targets<'_> {
    fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    fn sums(&self, rows: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for &r in rows {
            s.iter_mut().zip(self.row(r)).for_each(|(a, b)| *a += b);
        }
        s
    }

    /// Summed per-output squared deviation from the mean.
    pub fn sse(&self, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let mean: Vec<f64> = self.sums(rows).iter().map(|s| s / rows.len() as f64).collect();
        rows.iter().map(|&r| self.row(r).iter().zip(&mean).map(|(y, m)| (y - m).powi(2)).sum::<f64>()).sum()
    }
}

fn score(sums: &[f64], n: usize) -> f64 {
    sums.iter().map(|s| s * s).sum::<f64>() / n as f64
}

/// Best split of `rows` over `features`, scanning every threshold between
/// consecutive distinct values and every one-vs-rest category.
pub fn best_split(x: &Features, y: Targets<'_>, rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitCandidate> {
    let n = rows.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total = y.sums(rows);
    let parent = score(&total, n);
    let mut best: Option<SplitCandidate> = None;
    let mut consider = |split: Split, gain: f64| {
        if best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate { split, gain });
        }
    };
    let categorical: Vec<bool> = x.columns().iter().map(|c| c.kind.is_categorical()).collect();
    let mut order = rows.to_vec();
    let mut left = vec![0.0; y.dim];
    let mut right = vec![0.0; y.dim];
    for &f in features {
        if categorical[f] {
            let mut codes: Vec<u32> = rows.iter().map(|&r| x.row(r)[f] as u32).collect();
            codes.sort_unstable();
            codes.dedup();
            if codes.len() < 2 {
                continue;
            }
            for code in codes {
                left.fill(0.0);
                let mut n_left = 0;
                for &r in rows.iter().filter(|&&r| x.row(r)[f] as u32 == code) {
                    left.iter_mut().zip(y.row(r)).for_each(|(a, b)| *a += b);
                    n_left += 1;
                }
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                right.iter_mut().zip(&total).zip(&left).for_each(|((r, t), l)| *r = t - l);
                let gain = score(&left, n_left) + score(&right, n - n_left) - parent;
                consider(Split::Category { feature: f, code }, gain);
            }
        } else {
            order.sort_by(|&a, &b| x.row(a)[f].total_cmp(&x.row(b)[f]));
            left.fill(0.0);
            for k in 1..n {
                left.iter_mut().zip(y.row(order[k - 1])).for_each(|(a, b)| *a += b);
                let lo = x.row(order[k - 1])[f];
                let hi = x.row(order[k])[f];
                if lo == hi || k < min_leaf || n - k < min_leaf {
                    continue;
                }
                right.iter_mut().zip(&total).zip(&left).for_each(|((r, t), l)| *r = t - l);
                let gain = score(&left, k) + score(&right, n - k) - parent;
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                consider(Split::Numeric { feature: f, threshold }, gain);
            }
        }
    }
    best
}

impl Tree {
    /// Grow a tree on `rows` (duplicates allowed, as in a bootstrap sample).
    pub fn fit(x: &Features, y: Targets<'_>, rows: &[usize], config: &TreeConfig, rng: &mut Rng) -> Tree {
        let d = x.n_cols();
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        let mut stack = vec![(rows.to_vec(), 0usize, 0usize)];
        push_leaf(&mut nodes, &mut values, y, rows);
        let mut features: Vec<usize> = (0..d).collect();
        while let Some((node_rows, id, depth)) = stack.pop() {
            if config.max_depth.is_some_and(|m| depth >= m) {
                continue;
            }
            let parent_sse = y.sse(&node_rows);
            if parent_sse <= f64::MIN_POSITIVE {
                continue;
            }
            let found = match config.max_features {
                Some(k) if k < d => {
                    // Examine k random features; keep drawing if none of them splits.
                    features.shuffle(rng);
                    let mut found = None;
                    let mut start = 0;
                    while start < d && found.is_none() {
                        let end = (start + k).min(d);
                        found = best_split(x, y, &node_rows, &features[start..end], config.min_leaf)
                            .filter(|c| c.gain > 1e-12 * parent_sse);
                        start = end;
                    }
                    found
                }
                _ => best_split(x, y, &node_rows, &features, config.min_leaf).filter(|c| c.gain > 1e-12 * parent_sse),
            };
            let Some(candidate) = found else { continue };
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                node_rows.iter().partition(|&&r| candidate.split.goes_left(x.row(r)));
            let l = nodes.len();
            push_leaf(&mut nodes, &mut values, y, &l_rows);
            push_leaf(&mut nodes, &mut values, y, &r_rows);
            nodes[id].split = Some(candidate.split);
            nodes[id].left = l as u32;
            nodes[id].right = l as u32 + 1;
            stack.push((r_rows, l + 1, depth + 1));
            stack.push((l_rows, l, depth + 1));
        }
        Tree { n_outputs: y.dim, nodes, values }
    }

    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match &node.split {
                Some(s) => id = if s.goes_left(row) { node.left } else { node.right } as usize,
                None => return self.value(id),
            }
        }
    }

    pub fn value(&self, id: usize) -> &[f64] {
        &self.values[id * self.n_outputs..(id + 1) * self.n_outputs]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, id: usize) -> usize {
            match t.nodes[id].split {
                Some(_) => 1 + walk(t, t.nodes[id].left as usize).max(walk(t, t.nodes[id].right as usize)),
                None => 0,
            }
        }
        walk(self, 0)
    }
}

fn push_leaf(nodes: &mut Vec<Node>, values: &mut Vec<f64>, y: Targets<'_>, rows: &[usize]) {
    let n = rows.len().max(1) as f64;
    nodes.push(Node { split: None, left: 0, right: 0 });
    values.extend(y.sums(rows).iter().map(|s| s / n));
}
