//! Extremely randomized regression trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, RngStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or `min_leaf` binds.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Random (feature, threshold) candidates scored per node.
    pub n_candidates: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 5,
            n_candidates: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    w: &'a [f64],
    params: ForestParams,
}

fn weighted_stats(idx: &[usize], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut swy = 0.0;
    let mut swyy = 0.0;
    for &i in idx {
        sw += w[i];
        swy += w[i] * y[i];
        swyy += w[i] * y[i] * y[i];
    }
    (sw, swy, swyy)
}

impl Builder<'_> {
    fn build(&self, rng: &mut impl Rng) -> Tree {
        let mut nodes = Vec::new();
        let mut idx: Vec<usize> = (0..self.y.len()).collect();
        self.grow(&mut idx, 0, &mut nodes, rng);
        Tree { nodes }
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (sw, swy, _) = weighted_stats(idx, self.y, self.w);
        swy / sw
    }

    fn grow(&self, idx: &mut [usize], depth: usize, nodes: &mut Vec<Node>, rng: &mut impl Rng) -> usize {
        let me = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(idx)));
        let n = idx.len();
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < 2 * self.params.min_leaf.max(1) {
            return me;
        }
        let y0 = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == y0) {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return me;
        };
        // partition in place: left block holds x <= threshold
        let col = &self.cols[feature];
        let mut split = 0;
        for k in 0..n {
            if col[idx[k]] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, nodes, rng);
        let right = self.grow(r, depth + 1, nodes, rng);
        nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn best_split(&self, idx: &[usize], rng: &mut impl Rng) -> Option<(usize, f64)> {
        let p = self.cols.len();
        let min_leaf = self.params.min_leaf.max(1);
        let (sw, swy, swyy) = weighted_stats(idx, self.y, self.w);
        let parent_sse = swyy - swy * swy / sw;
        let mut best: Option<(f64, usize, f64)> = None;
        // features found constant in this node are never redrawn
        let mut pool: Vec<usize> = (0..p).collect();
        let mut tried = 0;
        while tried < self.params.n_candidates.max(1) && !pool.is_empty() {
            let pick = rng.random_range(0..pool.len());
            let feature = pool[pick];
            let col = &self.cols[feature];
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(col[i]), hi.max(col[i]))
                });
            if lo >= hi {
                pool.swap_remove(pick);
                continue;
            }
            tried += 1;
            let u: f64 = rng.random();
            let mut threshold = lo + u * (hi - lo);
            if threshold >= hi {
                threshold = lo;
            }
            let (mut lw, mut lwy, mut lwyy, mut ln) = (0.0, 0.0, 0.0, 0usize);
            for &i in idx {
                if col[i] <= threshold {
                    lw += self.w[i];
                    lwy += self.w[i] * self.y[i];
                    lwyy += self.w[i] * self.y[i] * self.y[i];
                    ln += 1;
                }
            }
            let rn = idx.len() - ln;
            if ln < min_leaf || rn < min_leaf {
                continue;
            }
            let (rw, rwy, rwyy) = (sw - lw, swy - lwy, swyy - lwyy);
            let child_sse = (lwyy - lwy * lwy / lw) + (rwyy - rwy * rwy / rw);
            let gain = parent_sse - child_sse;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, feature, threshold));
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

pub(crate) fn columns(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect()
}

/// Fit an extra-trees ensemble; tree `t` draws from `stream.child(t)`.
pub fn forest_fit(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    params: ForestParams,
    stream: &RngStream,
) -> Result<TreeEnsemble> {
    if x.nrows() == 0 {
        return Err(Error::invalid("forest: empty training set"));
    }
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::invalid("forest: row count mismatch"));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("forest: n_trees must be >= 1"));
    }
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("forest: weights must be positive"));
    }
    let cols = columns(x);
    let builder = Builder {
        cols: &cols,
        y,
        w,
        params,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| builder.build(&mut stream.child(t as u64).rng()))
        .collect();
    Ok(TreeEnsemble { params, trees })
}

pub fn forest_predict(model: &TreeEnsemble, x: &Matrix) -> Vec<f64> {
    let n_trees = model.trees.len() as f64;
    (0..x.nrows())
        .map(|i| {
            model
                .trees
                .iter()
                .map(|t| t.predict_row(|j| x[(i, j)]))
                .sum::<f64>()
                / n_trees
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::derive_stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_target() {
        let x = Matrix::from_fn(30, 2, |i, j| (i * (j + 1)) as f64);
        let m = forest_fit(&x, &[3.0; 30], &[1.0; 30], ForestParams::default(), &derive_stream(0, &[])).unwrap();
        assert!(forest_predict(&m, &x).iter().all(|&p| p == 3.0));
    }

    #[test]
    fn min_leaf_n_gives_weighted_mean() {
        let x = Matrix::from_fn(6, 1, |i, _| i as f64);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = [1.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let params = ForestParams { min_leaf: 6, ..Default::default() };
        let m = forest_fit(&x, &y, &w, params, &derive_stream(0, &[])).unwrap();
        let expect = (1.0 + 2.0 + 3.0 + 4.0 + 5.0 + 30.0) / 10.0;
        for p in forest_predict(&m, &x) {
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_training_data() {
        let mut rng = derive_stream(1, &[]).rng();
        let x = Matrix::from_fn(60, 3, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..60).map(|i| x[(i, 0)] * 2.0 + x[(i, 1)].sin()).collect();
        let params = ForestParams { n_trees: 10, max_depth: None, min_leaf: 1, n_candidates: 8 };
        let m = forest_fit(&x, &y, &vec![1.0; 60], params, &derive_stream(2, &[])).unwrap();
        for (p, t) in forest_predict(&m, &x).iter().zip(&y) {
            assert!((p - t).abs() < 1e-9);
        }
    }

    #[test]
    fn step_function_generalizes() {
        let mut rng = derive_stream(3, &[]).rng();
        let n = 500;
        let x = Matrix::from_fn(2 * n, 2, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..2 * n).map(|i| if x[(i, 0)] > 0.0 { 1.0 } else { 0.0 }).collect();
        let train: Vec<usize> = (0..n).collect();
        let test: Vec<usize> = (n..2 * n).collect();
        let params = ForestParams { n_trees: 200, max_depth: Some(4), min_leaf: 1, n_candidates: 8 };
        let m = forest_fit(
            &x.select_rows(&train),
            &y[..n],
            &vec![1.0; n],
            params,
            &derive_stream(4, &[]),
        )
        .unwrap();
        let p = forest_predict(&m, &x.select_rows(&test));
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let acc = p.iter().zip(&y[n..]).filter(|(p, y)| (**p >= 0.5) == (**y == 1.0)).count() as f64 / n as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn empty_training_set() {
        assert!(forest_fit(&Matrix::zeros(0, 2), &[], &[], ForestParams::default(), &derive_stream(0, &[])).is_err());
    }

    #[test]
    fn deterministic_under_stream() {
        let x = Matrix::from_fn(40, 2, |i, j| ((i * 31 + j * 7) % 13) as f64);
        let y: Vec<f64> = (0..40).map(|i| (i % 5) as f64).collect();
        let a = forest_fit(&x, &y, &[1.0; 40], ForestParams::default(), &derive_stream(9, &[1])).unwrap();
        let b = forest_fit(&x, &y, &[1.0; 40], ForestParams::default(), &derive_stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
