//! Minimal dense-network machinery: ReLU multilayer perceptrons with manual
//! backpropagation and an Adam optimizer.
//!
//! Shared by the MLP surrogate and the Q-network so there is exactly one
//! backprop implementation to verify against finite differences.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in x out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// ReLU hidden layers, linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_train`]; `inputs[l]` feeds layer `l`.
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

/// Weight and bias gradients of one layer.
pub type LayerGrad = (Array2<f64>, Array1<f64>);

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    pub fn forward_train(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(a);
            a = z;
        }
        (a, MlpCache { inputs })
    }

    /// Gradients of `sum(grad_out * output)` with respect to every parameter,
    /// and optionally with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: ArrayView2<f64>, want_input: bool) -> (MlpGrads, Option<Array2<f64>>) {
        let mut g = grad_out.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut input_grad = None;
        for l in (0..self.layers.len()).rev() {
            let a = &cache.inputs[l];
            let dw = a.t().dot(&g).as_standard_layout().into_owned();
            let db = g.sum_axis(Axis(0));
            grads.push((dw, db));
            if l > 0 {
                let mut prev = g.dot(&self.layers[l].weights.t());
                prev.zip_mut_with(a, |p, &act| {
                    if act <= 0.0 {
                        *p = 0.0;
                    }
                });
                g = prev;
            } else if want_input {
                input_grad = Some(g.dot(&self.layers[0].weights.t()));
            }
        }
        grads.reverse();
        (MlpGrads { layers: grads }, input_grad)
    }

    /// Forward pass from the first layer's pre-activations `z0`, for callers
    /// that compute the first product themselves.
    pub fn forward_tail(&self, z0: Array2<f64>) -> Array2<f64> {
        self.forward_tail_train(z0).0
    }

    /// Like [`forward_tail`](Self::forward_tail), keeping what
    /// [`backward_tail`](Self::backward_tail) needs.
    pub fn forward_tail_train(&self, z0: Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(Array2::zeros((0, 0)));
        let mut z = z0;
        for l in 1..=last {
            z.mapv_inplace(|v| v.max(0.0));
            let mut next = z.dot(&self.layers[l].weights);
            next += &self.layers[l].bias;
            inputs.push(z);
            z = next;
        }
        (z, MlpCache { inputs })
    }

    /// Gradients of layers `1..` and of `z0`, ordered like `layers[1..]`.
    pub fn backward_tail(&self, cache: &MlpCache, grad_out: ArrayView2<f64>) -> (Vec<LayerGrad>, Array2<f64>) {
        let mut g = grad_out.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len() - 1);
        for l in (1..self.layers.len()).rev() {
            let a = &cache.inputs[l];
            grads.push((a.t().dot(&g).as_standard_layout().into_owned(), g.sum_axis(Axis(0))));
            let mut prev = g.dot(&self.layers[l].weights.t());
            prev.zip_mut_with(a, |p, &act| {
                if act <= 0.0 {
                    *p = 0.0;
                }
            });
            g = prev;
        }
        grads.reverse();
        (grads, g)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params());
        let mut it = values.iter();
        for slice in self.param_slices_mut() {
            for p in slice.iter_mut() {
                *p = *it.next().unwrap();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place; the slice lists must line up across calls.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len());
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
