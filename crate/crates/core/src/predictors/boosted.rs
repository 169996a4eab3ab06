//! Stagewise squared-loss boosting of depth-limited regression trees.
//!
//! Splits are exact: every feature is presorted once per fit and each tree
//! level is grown with one sweep per feature over the presorted order.

use crate::data::Matrix;

#[derive(Debug, Clone)]
struct Node {
    feature: usize,
    threshold: f64,
    left: usize,
    right: usize,
    value: f64,
    is_leaf: bool,
}

impl Node {
    fn leaf() -> Self {
        Self {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: 0.0,
            is_leaf: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            if node.is_leaf {
                return node.value;
            }
            id = if x[node.feature] <= node.threshold {
                node.left
            } else {
                node.right
            };
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostedTrees {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    stage_losses: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

impl BoostedTrees {
    pub(super) fn fit(
        x: &Matrix,
        y: &[f64],
        n_trees: usize,
        learning_rate: f64,
        max_depth: usize,
    ) -> Self {
        let n = x.nrows();
        let p = x.ncols();
        let data = x.as_slice();
        let orders: Vec<Vec<u32>> = (0..p)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| data[a as usize * p + f].total_cmp(&data[b as usize * p + f]));
                idx
            })
            .collect();

        let init = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![init; n];
        let mut stage_losses = Vec::with_capacity(n_trees + 1);
        stage_losses.push(mse(y, &pred));
        let mut trees = Vec::with_capacity(n_trees);
        let mut resid = vec![0.0; n];
        for _ in 0..n_trees {
            for i in 0..n {
                resid[i] = y[i] - pred[i];
            }
            let (tree, leaf_of) = grow(data, p, &resid, &orders, max_depth);
            for i in 0..n {
                pred[i] += learning_rate * tree.nodes[leaf_of[i]].value;
            }
            stage_losses.push(mse(y, &pred));
            trees.push(tree);
        }
        Self {
            init,
            learning_rate,
            trees,
            stage_losses,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Training MSE after each stage, starting with the constant fit.
    pub fn stage_losses(&self) -> &[f64] {
        &self.stage_losses
    }
}

fn grow(
    data: &[f64],
    p: usize,
    resid: &[f64],
    orders: &[Vec<u32>],
    max_depth: usize,
) -> (Tree, Vec<usize>) {
    let n = resid.len();
    let mut nodes = vec![Node::leaf()];
    let mut node_of = vec![0usize; n];
    let mut frontier = vec![0usize];

    for _ in 0..max_depth {
        let count = nodes.len();
        let mut sum = vec![0.0; count];
        let mut cnt = vec![0usize; count];
        for i in 0..n {
            sum[node_of[i]] += resid[i];
            cnt[node_of[i]] += 1;
        }
        let mut active = vec![false; count];
        for &id in &frontier {
            active[id] = cnt[id] >= 2;
        }
        if !active.iter().any(|&a| a) {
            break;
        }

        let mut best: Vec<Option<Split>> = vec![None; count];
        let mut left_sum = vec![0.0; count];
        let mut left_cnt = vec![0usize; count];
        let mut last_x = vec![0.0; count];
        for (f, order) in orders.iter().enumerate() {
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_cnt.iter_mut().for_each(|v| *v = 0);
            for &i in order {
                let i = i as usize;
                let nd = node_of[i];
                if !active[nd] {
                    continue;
                }
                let xi = data[i * p + f];
                let nl = left_cnt[nd];
                if nl > 0 && xi > last_x[nd] {
                    let total = sum[nd];
                    let nt = cnt[nd] as f64;
                    let sl = left_sum[nd];
                    let nlf = nl as f64;
                    let gain = sl * sl / nlf + (total - sl) * (total - sl) / (nt - nlf)
                        - total * total / nt;
                    if best[nd].is_none_or(|b| gain > b.gain) {
                        let mut threshold = last_x[nd] + 0.5 * (xi - last_x[nd]);
                        if threshold >= xi {
                            threshold = last_x[nd];
                        }
                        best[nd] = Some(Split {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
                left_sum[nd] += resid[i];
                left_cnt[nd] += 1;
                last_x[nd] = xi;
            }
        }

        let mut next = Vec::new();
        for &id in &frontier {
            if let Some(split) = best[id].filter(|s| s.gain > 0.0) {
                let left = nodes.len();
                nodes.push(Node::leaf());
                nodes.push(Node::leaf());
                let node = &mut nodes[id];
                node.is_leaf = false;
                node.feature = split.feature;
                node.threshold = split.threshold;
                node.left = left;
                node.right = left + 1;
                next.push(left);
                next.push(left + 1);
            }
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let node = &nodes[node_of[i]];
            if !node.is_leaf {
                node_of[i] = if data[i * p + node.feature] <= node.threshold {
                    node.left
                } else {
                    node.right
                };
            }
        }
        frontier = next;
    }

    let mut sum = vec![0.0; nodes.len()];
    let mut cnt = vec![0usize; nodes.len()];
    for i in 0..n {
        sum[node_of[i]] += resid[i];
        cnt[node_of[i]] += 1;
    }
    for (id, node) in nodes.iter_mut().enumerate() {
        if node.is_leaf && cnt[id] > 0 {
            node.value = sum[id] / cnt[id] as f64;
        }
    }
    (Tree { nodes }, node_of)
}
