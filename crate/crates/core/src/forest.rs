//! Random-forest regression, used to stack per-view predictions.
//!
//! Trees use axis-aligned splits chosen by variance reduction over midpoint
//! thresholds, scanning features in increasing index and thresholds in
//! increasing value; only a strictly better split replaces the incumbent, so
//! ties go to the lowest feature, then the lowest threshold. Each tree draws
//! its own random stream from `(seed, tree_index)`.

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until the leaf-size limit.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `max(1, ceil(m / 3))`.
    pub max_features: Option<usize>,
    /// Draw `n` rows with replacement per tree; otherwise use every row once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            max_depth: None,
            min_leaf: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
}

struct Builder<'a> {
    columns: Vec<Vec<f64>>,
    y: &'a [f64],
    min_leaf: usize,
    max_depth: usize,
    max_features: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize], pure: bool) -> usize {
        let value = if pure {
            self.y[rows[0]]
        } else {
            rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
        };
        self.nodes.push(Node::Leaf {
            value,
            count: rows.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in features {
            let col = &self.columns[f];
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for split in 1..n {
                left_sum += pairs[split - 1].1;
                if split < self.min_leaf || n - split < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (pairs[split - 1].0, pairs[split].0);
                if !(lo < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / split as f64
                    + right_sum * right_sum / (n - split) as f64
                    - base;
                if gain > best.map_or(1e-12 * base.abs().max(1e-300), |b| b.0) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut rng::Rng) -> usize {
        let n = rows.len();
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&i| self.y[i] == first);
        if n < 2 * self.min_leaf || depth >= self.max_depth || pure {
            return self.leaf(rows, pure);
        }
        let m = self.columns.len();
        let mut pool: Vec<usize> = (0..m).collect();
        for k in 0..self.max_features {
            let j = rng.random_range(k..m);
            pool.swap(k, j);
        }
        let mut features = pool[..self.max_features].to_vec();
        features.sort_unstable();

        let Some((feature, threshold)) = self.best_split(rows, &features) else {
            return self.leaf(rows, false);
        };
        let col = &self.columns[feature];
        let mut cut = 0;
        for k in 0..n {
            if col[rows[k]] <= threshold {
                rows.swap(k, cut);
                cut += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
        let (left_rows, right_rows) = rows.split_at_mut(cut);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

fn fit_tree(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ForestParams,
    sampler: Option<&WeightedIndex<f64>>,
    tree_index: usize,
) -> Tree {
    let n = x.nrows();
    let m = x.ncols();
    let mut rng = rng::stream(params.seed, stage::FOREST, tree_index as u64);
    let mut rows: Vec<usize> = if params.bootstrap {
        match sampler {
            Some(s) => (0..n).map(|_| s.sample(&mut rng)).collect(),
            None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        }
    } else {
        (0..n).collect()
    };
    let max_features = params
        .max_features
        .unwrap_or_else(|| m.div_ceil(3))
        .clamp(1, m);
    let mut builder = Builder {
        columns: x.column_iter().map(|c| c.iter().copied().collect()).collect(),
        y,
        min_leaf: params.min_leaf.max(1),
        max_depth: params.max_depth.unwrap_or(usize::MAX),
        max_features,
        nodes: Vec::new(),
    };
    builder.grow(&mut rows, 0, &mut rng);
    Tree {
        nodes: builder.nodes,
    }
}

/// Fits a forest. With `weights`, bootstrap draws are proportional to them.
pub fn forest_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ForestParams,
    weights: Option<&[f64]>,
) -> Result<ForestModel> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument("forest needs at least one row and one column".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }
    if n < params.min_leaf {
        return Err(Error::InvalidArgument(format!(
            "{n} rows is fewer than min_leaf = {}",
            params.min_leaf
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite forest input".into()));
    }
    let sampler = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::Shape(format!("{} weights for {n} rows", w.len())))
        }
        Some(w) => Some(
            WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(format!("weights: {e}")))?,
        ),
        None => None,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(x, y, params, sampler.as_ref(), t))
        .collect();
    Ok(ForestModel {
        trees,
        n_features: x.ncols(),
        params: params.clone(),
    })
}

impl ForestModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape(format!(
                "forest trained on {} columns, got {}",
                self.n_features,
                x.ncols()
            )));
        }
        let inv = 1.0 / self.trees.len() as f64;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() * inv
            })
            .collect())
    }

    /// Forest holding the trees of both inputs.
    pub fn merged(&self, other: &ForestModel) -> Result<ForestModel> {
        if self.n_features != other.n_features {
            return Err(Error::Shape("cannot merge forests over different inputs".into()));
        }
        let mut trees = self.trees.clone();
        trees.extend(other.trees.iter().cloned());
        let mut params = self.params.clone();
        params.n_trees = trees.len();
        Ok(ForestModel {
            trees,
            n_features: self.n_features,
            params,
        })
    }
}

pub fn forest_predict(model: &ForestModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn data(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 0, 0);
        DMatrix::from_fn(n, m, |_, _| r.random::<f64>())
    }

    fn params(n_trees: usize) -> ForestParams {
        ForestParams { n_trees, seed: 7, ..Default::default() }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = data(50, 3, 1);
        let m = forest_fit(&x, &[0.42; 50], &params(20), None).unwrap();
        assert!(m.predict(&data(10, 3, 2)).unwrap().iter().all(|&p| (p - 0.42).abs() < 1e-15));
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let x = data(30, 2, 1);
        let y: Vec<f64> = (0..30).map(|i| i as f64 / 7.0).collect();
        let p = ForestParams { n_trees: 1, min_leaf: 30, bootstrap: false, ..params(1) };
        let m = forest_fit(&x, &y, &p, None).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
        let mean = y.iter().sum::<f64>() / 30.0;
        assert!((m.predict(&x).unwrap()[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn deep_trees_fit_identity_target() {
        let x = data(400, 4, 3);
        let y: Vec<f64> = x.column(0).iter().copied().collect();
        let m = forest_fit(&x, &y, &params(50), None).unwrap();
        let p = m.predict(&x).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let mse = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(mse <= var / 10.0, "mse {mse} vs var {var}");
    }

    #[test]
    fn leaves_respect_min_leaf_and_range() {
        let x = data(300, 3, 4);
        let y: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        let p = ForestParams { min_leaf: 5, ..params(10) };
        let m = forest_fit(&x, &y, &p, None).unwrap();
        assert!(m.trees.iter().flat_map(Tree::leaves).all(|(_, c)| c >= 5));
        let pred = m.predict(&data(100, 3, 5)).unwrap();
        assert!(pred.iter().all(|&v| (0.0..=100.0).contains(&v)));
    }

    #[test]
    fn single_tree_and_merge_are_consistent() {
        let x = data(80, 2, 6);
        let y: Vec<f64> = x.column(1).iter().map(|v| v * v).collect();
        let one = forest_fit(&x, &y, &params(1), None).unwrap();
        let probe = data(20, 2, 9);
        let direct: Vec<f64> = (0..20)
            .map(|i| one.trees[0].predict_row(&[probe[(i, 0)], probe[(i, 1)]]))
            .collect();
        assert_eq!(one.predict(&probe).unwrap(), direct);

        let a = forest_fit(&x, &y, &params(8), None).unwrap();
        let b = forest_fit(&x, &y, &ForestParams { seed: 99, ..params(8) }, None).unwrap();
        let merged = a.merged(&b).unwrap().predict(&probe).unwrap();
        let (pa, pb) = (a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        for i in 0..20 {
            assert!((merged[i] - (pa[i] + pb[i]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let x = data(120, 4, 10);
        let y: Vec<f64> = x.row_iter().map(|r| r.sum()).collect();
        let a = forest_fit(&x, &y, &params(16), None).unwrap();
        let b = forest_fit(&x, &y, &params(16), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn input_errors() {
        let x = data(10, 2, 1);
        assert!(forest_fit(&DMatrix::zeros(0, 2), &[], &params(1), None).is_err());
        assert!(forest_fit(&x, &[0.0; 9], &params(1), None).is_err());
        let m = forest_fit(&x, &[0.0; 10], &params(1), None).unwrap();
        assert!(m.predict(&DMatrix::zeros(1, 3)).is_err());
    }
}
