//! k-nearest and radius-nearest neighbour regression on raw features.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum NeighbourRule {
    /// Mean of the `k` closest rows (ties broken by training order).
    Nearest { k: usize },
    /// Inverse-distance weighted mean of rows within `radius`; exact matches
    /// take precedence, and an empty neighbourhood predicts the training mean.
    Radius { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighbourModel {
    pub rule: NeighbourRule,
    train_x: Array2<f64>,
    train_y: Vec<f64>,
    train_mean: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighbourModel {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, rule: NeighbourRule) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        match rule {
            NeighbourRule::Nearest { k: 0 } => {
                return Err(Error::InvalidConfig("knn needs k >= 1".into()));
            }
            NeighbourRule::Radius { radius } if !(radius > 0.0) => {
                return Err(Error::InvalidConfig("radius must be positive".into()));
            }
            _ => {}
        }
        Ok(Self {
            rule,
            train_x: x.to_owned(),
            train_y: y.to_vec(),
            train_mean: y.mean().expect("non-empty"),
        })
    }

    pub fn predict(&self, query: &[f64]) -> f64 {
        let dists: Vec<f64> = self.train_x.rows().into_iter().map(|r| sq_dist(r, query)).collect();
        match self.rule {
            NeighbourRule::Nearest { k } => {
                let mut idx: Vec<usize> = (0..dists.len()).collect();
                let k = k.min(idx.len());
                let cmp = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
                if k < idx.len() {
                    idx.select_nth_unstable_by(k - 1, cmp);
                }
                idx[..k].iter().map(|&i| self.train_y[i]).sum::<f64>() / k as f64
            }
            NeighbourRule::Radius { radius } => {
                let r2 = radius * radius;
                let exact: Vec<f64> = dists
                    .iter()
                    .zip(&self.train_y)
                    .filter(|(d, _)| **d == 0.0)
                    .map(|(_, y)| *y)
                    .collect();
                if !exact.is_empty() {
                    return exact.iter().sum::<f64>() / exact.len() as f64;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for (d2, y) in dists.iter().zip(&self.train_y) {
                    if *d2 <= r2 {
                        let w = 1.0 / d2.sqrt();
                        num += w * y;
                        den += w;
                    }
                }
                if den == 0.0 {
                    self.train_mean
                } else {
                    num / den
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_nearest_returns_training_target() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]];
        let y = array![0.2, 0.4, 0.9];
        let m = NeighbourModel::fit(x.view(), y.view(), NeighbourRule::Nearest { k: 1 }).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]), 0.4);
        assert_eq!(m.predict(&[0.1, 2.5]), 0.9);
        let all = NeighbourModel::fit(x.view(), y.view(), NeighbourRule::Nearest { k: 100 }).unwrap();
        assert!((all.predict(&[5.0, 5.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn isolated_query_falls_back_to_mean() {
        let x = array![[0.0], [1.0]];
        let y = array![0.2, 0.6];
        let m = NeighbourModel::fit(x.view(), y.view(), NeighbourRule::Radius { radius: 16.0 }).unwrap();
        assert!((m.predict(&[100.0]) - 0.4).abs() < 1e-12);
        // weights 1/0.5 and 1/1.5
        let expected = (0.2 / 0.5 + 0.6 / 1.5) / (1.0 / 0.5 + 1.0 / 1.5);
        assert!((m.predict(&[-0.5]) - expected).abs() < 1e-12);
        assert_eq!(m.predict(&[1.0]), 0.6);
    }
}
