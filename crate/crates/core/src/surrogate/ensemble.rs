//! Random forests and gradient-boosted trees built on [`RegressionTree`].

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedData, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::rng::derived;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    /// Bootstrap-aggregated trees; tree `t` draws its sample from a seed
    /// derived from `(seed, t)`, so results do not depend on scheduling.
    pub fn fit(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        n_trees: usize,
        params: &TreeParams,
        seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if n_trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        let data = BinnedData::new(x);
        let y = y.to_vec();
        let trees = map_range(exec, n_trees, |t| {
            let mut rng = derived(seed, &[t as u64]);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            RegressionTree::fit(&data, &y, rows, params)
        });
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    init: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    /// Training RMSE after each round, starting with the constant model.
    pub train_rmse: Vec<f64>,
}

impl Boosted {
    /// Squared-error boosting from the mean with constant shrinkage.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, n_rounds: usize, learning_rate: f64, params: &TreeParams) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let data = BinnedData::new(x);
        let init = y.mean().expect("non-empty");
        let mut current = vec![init; n];
        let rmse = |cur: &[f64]| (cur.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64).sqrt();
        let mut train_rmse = vec![rmse(&current)];
        let mut trees = Vec::with_capacity(n_rounds);
        for _ in 0..n_rounds {
            let residual: Vec<f64> = y.iter().zip(&current).map(|(t, p)| t - p).collect();
            let tree = RegressionTree::fit(&data, &residual, (0..n).collect(), params);
            for (i, row) in x.rows().into_iter().enumerate() {
                current[i] += learning_rate * tree.predict(row.as_slice().expect("standard layout"));
            }
            train_rmse.push(rmse(&current));
            trees.push(tree);
        }
        Ok(Self {
            init,
            learning_rate,
            trees,
            train_rmse,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}
