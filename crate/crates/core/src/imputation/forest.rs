use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{run_imputations, ImputationSet, MethodConfig, OutcomeData, ParameterDraw, SourceFit};
use crate::data::{DesignSpec, Dataset};
use crate::error::{Error, Result};

/// Growth controls for one regression tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Minimum number of (bootstrap) rows in a leaf.
    pub min_leaf: usize,
    /// Depth limit; `Some(0)` yields a single leaf.
    pub max_depth: Option<usize>,
    /// Features tried per split; defaults to max(1, ⌊k/3⌋).
    pub mtry: Option<usize>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            min_leaf: 5,
            max_depth: None,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf,
}

/// CART regression tree with variance-reduction splits. Only the partition
/// is kept; leaves are identified by node index.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Grows a tree on rows `rows` (may repeat) of `x` with responses `y`.
    pub fn grow<R: Rng + ?Sized>(
        x: &DMatrix<f64>,
        y: &[f64],
        rows: &[usize],
        opts: &TreeOptions,
        rng: &mut R,
    ) -> Self {
        let k = x.ncols();
        let mtry = opts.mtry.unwrap_or((k / 3).max(1)).clamp(1, k.max(1));
        let mut tree = RegressionTree { nodes: vec![Node::Leaf] };
        let mut stack = vec![(0usize, rows.to_vec(), 0usize)];
        let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        while let Some((node, members, depth)) = stack.pop() {
            if k == 0
                || members.len() < 2 * opts.min_leaf
                || opts.max_depth.is_some_and(|d| depth >= d)
            {
                continue;
            }
            let mut best: Option<(f64, usize, f64)> = None;
            let n = members.len() as f64;
            let total: f64 = members.iter().map(|&i| y[i]).sum();
            for feature in sample(rng, k, mtry) {
                scratch.clear();
                scratch.extend(members.iter().map(|&i| (x[(i, feature)], y[i])));
                scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left_sum = 0.0;
                for s in 0..scratch.len() - 1 {
                    left_sum += scratch[s].1;
                    let nl = (s + 1) as f64;
                    if s + 1 < opts.min_leaf || scratch.len() - s - 1 < opts.min_leaf {
                        continue;
                    }
                    if scratch[s].0 == scratch[s + 1].0 {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    // SSE reduction up to a constant: Σ_L²/n_L + Σ_R²/n_R.
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / (n - nl);
                    if best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, feature, 0.5 * (scratch[s].0 + scratch[s + 1].0)));
                    }
                }
            }
            let Some((gain, feature, threshold)) = best else {
                continue;
            };
            if gain <= total * total / n * (1.0 + 1e-12) {
                continue;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| x[(i, feature)] <= threshold);
            let left = tree.nodes.len();
            tree.nodes.push(Node::Leaf);
            tree.nodes.push(Node::Leaf);
            tree.nodes[node] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        tree
    }

    /// Leaf (node index) reached by a feature row.
    pub fn leaf<F: Fn(usize) -> f64>(&self, feature_value: F) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf => return node,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if feature_value(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf)).count()
    }
}

/// Random-forest hot-deck multiple imputation.
///
/// Per imputation, `trees` CART trees are grown on bootstrap resamples of
/// the observed rows, using the encoded outcome covariates (without
/// intercept) as features. For a missing row the observed rows sharing its
/// leaf in each tree are pooled across trees and one donor is drawn
/// uniformly; the imputation is that donor's observed outcome.
pub fn impute_mi_rf(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    let d = OutcomeData::new(ds, spec)?;
    let n1 = d.y_obs.len();
    if n1 < 2 * cfg.tree.min_leaf.max(1) && cfg.tree.max_depth != Some(0) {
        return Err(Error::Degenerate(format!(
            "{n1} observed rows are too few for leaves of {}",
            cfg.tree.min_leaf
        )));
    }
    let x_obs = d.x_obs.columns(1, d.x_obs.ncols() - 1).into_owned();
    let x_mis = d.x_mis.columns(1, d.x_mis.ncols() - 1).into_owned();
    run_imputations(ds, spec, cfg, SourceFit::Forest, &d.missing_rows, |_, rng| {
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); x_mis.nrows()];
        for _ in 0..cfg.trees {
            let boot: Vec<usize> = (0..n1).map(|_| rng.random_range(0..n1)).collect();
            let tree = RegressionTree::grow(&x_obs, &d.y_obs, &boot, &cfg.tree, rng);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
            for i in 0..n1 {
                members[tree.leaf(|f| x_obs[(i, f)])].push(i);
            }
            for (r, pool) in pools.iter_mut().enumerate() {
                pool.extend_from_slice(&members[tree.leaf(|f| x_mis[(r, f)])]);
            }
        }
        let values = pools
            .iter()
            .map(|pool| {
                assert!(!pool.is_empty(), "every leaf holds at least one observed row");
                d.y_obs[pool[rng.random_range(0..pool.len())]]
            })
            .collect();
        Ok((values, ParameterDraw::default()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    #[test]
    fn step_function_is_recovered() {
        let n = 200;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..n).map(|i| if i < 100 { 0.0 } else { 10.0 }).collect();
        let rows: Vec<usize> = (0..n).collect();
        let mut rng = RngStream::new(1, 0).rng();
        let tree = RegressionTree::grow(&x, &y, &rows, &TreeOptions::default(), &mut rng);
        assert_ne!(tree.leaf(|_| 10.0), tree.leaf(|_| 150.0));
    }

    #[test]
    fn depth_zero_is_one_leaf() {
        let x = DMatrix::from_fn(50, 2, |i, j| (i * (j + 1)) as f64);
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let rows: Vec<usize> = (0..50).collect();
        let opts = TreeOptions {
            max_depth: Some(0),
            ..Default::default()
        };
        let mut rng = RngStream::new(1, 0).rng();
        let tree = RegressionTree::grow(&x, &y, &rows, &opts, &mut rng);
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn leaves_respect_min_size() {
        let n = 100;
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64).sin());
        let y: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let rows: Vec<usize> = (0..n).collect();
        let opts = TreeOptions {
            min_leaf: 7,
            ..Default::default()
        };
        let mut rng = RngStream::new(2, 0).rng();
        let tree = RegressionTree::grow(&x, &y, &rows, &opts, &mut rng);
        let mut counts = vec![0usize; tree.nodes.len()];
        for i in 0..n {
            counts[tree.leaf(|f| x[(i, f)])] += 1;
        }
        assert!(counts.iter().all(|&c| c == 0 || c >= 7));
    }
}
