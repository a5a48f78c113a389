//! Multilayer-perceptron regressor on raw features, trained full-batch with Adam.

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    net: Mlp,
    pub final_loss: f64,
}

pub struct MlpTraining {
    pub hidden: Vec<usize>,
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl MlpRegressor {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &MlpTraining, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let ys = y.to_owned().insert_axis(Axis(1));
        let mut sizes = vec![x.ncols()];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let mut net = Mlp::new(&sizes, &mut seeded(seed));
        let mut adam = Adam::new(cfg.learning_rate);
        let mut final_loss = f64::NAN;
        for _ in 0..cfg.epochs {
            let (out, cache) = net.forward_train(x);
            let diff = &out - &ys;
            final_loss = 0.5 * diff.mapv(|d| d * d).sum() / n as f64;
            let (mut grads, _) = net.backward(&cache, (diff / n as f64).view(), false);
            for ((dw, _), layer) in grads.layers.iter_mut().zip(&net.layers) {
                dw.scaled_add(cfg.l2 / n as f64, &layer.weights);
            }
            if !grads.is_finite() {
                return Err(Error::NonFiniteGradient("mlp surrogate".into()));
            }
            adam.step(net.param_slices_mut(), grads.slices());
        }
        Ok(Self { net, final_loss })
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.net.forward(x).column(0).to_vec()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.predict_batch(row)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    #[test]
    fn learns_a_smooth_function() {
        let mut rng = seeded(11);
        let x = Array2::from_shape_fn((200, 3), |_| rng.gen_range(-1.0..1.0));
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * r[1] + 0.5 * r[2]).collect();
        let cfg = MlpTraining {
            hidden: vec![16, 16],
            l2: 1e-3,
            learning_rate: 1e-2,
            epochs: 500,
        };
        let m = MlpRegressor::fit(x.view(), y.view(), &cfg, 1).unwrap();
        let pred = m.predict_batch(x.view());
        let mse: f64 = pred.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / 200.0;
        assert!(mse < 0.01, "mse {mse}");
        assert!((m.predict(x.row(3).as_slice().unwrap()) - pred[3]).abs() < 1e-12);
    }
}
