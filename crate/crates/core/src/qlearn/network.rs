//! Dueling Q-network over candidate sets.
//!
//! The advantage head scores each `(state, candidate)` pair from their
//! concatenated 192-wide encoding; the value head sees the state alone.
//! `Q(s, a_i) = V(s) + A(s, a_i) - mean_j A(s, a_j)` over selectable candidates.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::{encode_into, Architecture, FEATURE_LEN, MAX_VERTICES, TRIANGLE_LEN};
use crate::nn::{Mlp, MlpGrads};

/// State encoding, candidate encoding, then a flag set only for candidate 0.
pub const PAIR_LEN: usize = 2 * FEATURE_LEN + 1;
const STAY: usize = 2 * FEATURE_LEN;

/// Encoding with the vertex and edge counts scaled into `[0, 1]`.
pub fn network_features(arch: &Architecture, out: &mut [f64]) {
    encode_into(arch, out);
    out[FEATURE_LEN - 2] /= MAX_VERTICES as f64;
    out[FEATURE_LEN - 1] /= TRIANGLE_LEN as f64;
}

/// Candidate 0 is always the current architecture; `mask` bit `i` marks
/// candidate `i` as selectable.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub archs: Arc<[Architecture]>,
    pub mask: u64,
}

impl CandidateSet {
    pub fn new(current: Architecture, neighbours: &[Architecture]) -> Self {
        let mut archs = Vec::with_capacity(neighbours.len() + 1);
        archs.push(current);
        archs.extend_from_slice(neighbours);
        assert!(archs.len() <= 64, "candidate sets are limited to 64 entries");
        let mask = if archs.len() == 64 { u64::MAX } else { (1u64 << archs.len()) - 1 };
        Self { archs: archs.into(), mask }
    }

    pub fn with_mask(mut self, mask: u64) -> Self {
        let full = if self.archs.len() == 64 { u64::MAX } else { (1u64 << self.archs.len()) - 1 };
        self.mask = mask & full;
        assert!(self.mask != 0, "at least one candidate must be selectable");
        self
    }

    pub fn state(&self) -> &Architecture {
        &self.archs[0]
    }

    pub fn len(&self) -> usize {
        self.archs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archs.is_empty()
    }

    pub fn is_selectable(&self, i: usize) -> bool {
        i < self.archs.len() && self.mask >> i & 1 == 1
    }

    pub fn selectable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.archs.len()).filter(|&i| self.is_selectable(i))
    }

    pub fn num_selectable(&self) -> usize {
        self.mask.count_ones() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub advantage: Mlp,
    pub value: Mlp,
}

#[derive(Clone, Debug)]
pub struct QGrads {
    pub advantage: MlpGrads,
    pub value: MlpGrads,
}

impl QGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.advantage.slices();
        v.extend(self.value.slices());
        v
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.advantage.is_finite() && self.value.is_finite()
    }
}

/// Row layout of a stacked batch: set `b` owns candidate rows
/// `offsets[b]..offsets[b+1]` holding its selectable candidates in index order.
/// The pair encoding is never materialized; the first advantage layer is
/// split into a state half applied per set and a candidate half per row.
pub struct Stacked {
    pub candidates: Array2<f64>,
    pub states: Array2<f64>,
    pub offsets: Vec<usize>,
    pub indices: Vec<Vec<usize>>,
}

pub fn stack(sets: &[&CandidateSet]) -> Stacked {
    let rows: usize = sets.iter().map(|s| s.num_selectable()).sum();
    let mut candidates = Array2::zeros((rows, FEATURE_LEN));
    let mut states = Array2::zeros((sets.len(), FEATURE_LEN));
    let mut offsets = Vec::with_capacity(sets.len() + 1);
    let mut indices = Vec::with_capacity(sets.len());
    let mut r = 0;
    offsets.push(0);
    for (b, set) in sets.iter().enumerate() {
        network_features(set.state(), states.row_mut(b).as_slice_mut().expect("standard layout"));
        let idx: Vec<usize> = set.selectable().collect();
        for &i in &idx {
            network_features(&set.archs[i], candidates.row_mut(r).as_slice_mut().expect("standard layout"));
            r += 1;
        }
        offsets.push(r);
        indices.push(idx);
    }
    Stacked {
        candidates,
        states,
        offsets,
        indices,
    }
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], value_hidden: &[usize], rng: &mut R) -> Self {
        let mut a = vec![PAIR_LEN];
        a.extend(hidden);
        a.push(1);
        let mut v = vec![FEATURE_LEN];
        v.extend(value_hidden);
        v.push(1);
        Self {
            advantage: Mlp::new(&a, rng),
            value: Mlp::new(&v, rng),
        }
    }

    pub fn num_params(&self) -> usize {
        self.advantage.num_params() + self.value.num_params()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.advantage.param_slices_mut();
        v.extend(self.value.param_slices_mut());
        v
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.advantage.flat_params();
        v.extend(self.value.flat_params());
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let k = self.advantage.num_params();
        self.advantage.set_flat_params(&p[..k]);
        self.value.set_flat_params(&p[k..]);
    }

    pub fn is_finite(&self) -> bool {
        self.advantage.is_finite() && self.value.is_finite()
    }

    /// Pre-activations of the first advantage layer for every stacked pair.
    fn first_layer(&self, st: &Stacked) -> Array2<f64> {
        let first = &self.advantage.layers[0];
        let from_state = st.states.dot(&first.weights.slice(s![..FEATURE_LEN, ..]));
        let mut z = st.candidates.dot(&first.weights.slice(s![FEATURE_LEN..STAY, ..]));
        let stay = first.weights.row(STAY);
        for b in 0..st.indices.len() {
            let shift = from_state.row(b);
            for r in st.offsets[b]..st.offsets[b + 1] {
                let mut row = z.row_mut(r);
                row += &shift;
            }
            if st.indices[b].first() == Some(&0) {
                let mut row = z.row_mut(st.offsets[b]);
                row += &stay;
            }
        }
        z += &first.bias;
        z
    }

    fn advantages(&self, st: &Stacked) -> Array2<f64> {
        self.advantage.forward_tail(self.first_layer(st))
    }

    /// Q-values for the selectable candidates of each set, in index order,
    /// together with the state values.
    pub fn q_stacked(&self, st: &Stacked) -> (Vec<Vec<f64>>, Vec<f64>) {
        let adv = self.advantages(st);
        let val = self.value.forward(st.states.view());
        let q = (0..st.indices.len())
            .map(|b| {
                let a = adv.slice(s![st.offsets[b]..st.offsets[b + 1], 0]);
                let mean = a.mean().unwrap_or(0.0);
                a.iter().map(|x| val[[b, 0]] + x - mean).collect()
            })
            .collect();
        (q, val.column(0).to_vec())
    }

    /// Q-values indexed by candidate position; unselectable entries are NaN.
    pub fn q_values(&self, set: &CandidateSet) -> Vec<f64> {
        let st = stack(&[set]);
        let (q, _) = self.q_stacked(&st);
        let mut out = vec![f64::NAN; set.len()];
        for (&i, v) in st.indices[0].iter().zip(&q[0]) {
            out[i] = *v;
        }
        out
    }

    /// Raw advantage and value heads for one set, indexed like [`q_values`](Self::q_values).
    pub fn heads(&self, set: &CandidateSet) -> (Vec<f64>, f64) {
        let st = stack(&[set]);
        let adv = self.advantages(&st);
        let val = self.value.forward(st.states.view());
        let mut out = vec![f64::NAN; set.len()];
        for (r, &i) in st.indices[0].iter().enumerate() {
            out[i] = adv[[r, 0]];
        }
        (out, val[[0, 0]])
    }

    /// Importance-weighted loss `(1/B) * sum_b w_b * (Q(s_b, a_b) - y_b)^2 / 2`,
    /// its gradient, and the per-sample TD errors `Q - y`.
    pub fn loss_and_grads(&self, sets: &[&CandidateSet], chosen: &[usize], targets: &[f64], weights: &[f64]) -> (f64, QGrads, Vec<f64>) {
        let st = stack(sets);
        let (adv, adv_cache) = self.advantage.forward_tail_train(self.first_layer(&st));
        let (val, val_cache) = self.value.forward_train(st.states.view());
        let n = sets.len() as f64;
        let mut grad_adv = Array2::zeros(adv.raw_dim());
        let mut grad_val = Array2::zeros(val.raw_dim());
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(sets.len());
        for b in 0..sets.len() {
            let (lo, hi) = (st.offsets[b], st.offsets[b + 1]);
            let k = (hi - lo) as f64;
            let mean = adv.slice(s![lo..hi, 0]).mean().unwrap_or(0.0);
            let pos = st.indices[b]
                .iter()
                .position(|&i| i == chosen[b])
                .expect("chosen candidate must be selectable");
            let q = val[[b, 0]] + adv[[lo + pos, 0]] - mean;
            let delta = q - targets[b];
            td.push(delta);
            loss += 0.5 * weights[b] * delta * delta / n;
            let g = weights[b] * delta / n;
            grad_val[[b, 0]] = g;
            for r in lo..hi {
                grad_adv[[r, 0]] = -g / k;
            }
            grad_adv[[lo + pos, 0]] += g;
        }
        let (tail, g0) = self.advantage.backward_tail(&adv_cache, grad_adv.view());
        let mut per_set = Array2::zeros((sets.len(), g0.ncols()));
        let mut stay = Array2::zeros((1, g0.ncols()));
        for b in 0..sets.len() {
            let mut acc = per_set.row_mut(b);
            for r in st.offsets[b]..st.offsets[b + 1] {
                acc += &g0.row(r);
            }
            if st.indices[b].first() == Some(&0) {
                let mut row = stay.row_mut(0);
                row += &g0.row(st.offsets[b]);
            }
        }
        let dw0 = ndarray::concatenate(
            Axis(0),
            &[st.states.t().dot(&per_set).view(), st.candidates.t().dot(&g0).view(), stay.view()],
        )
            .expect("matching widths")
            .as_standard_layout()
            .into_owned();
        let mut layers = vec![(dw0, g0.sum_axis(Axis(0)))];
        layers.extend(tail);
        let ga = MlpGrads { layers };
        let (gv, _) = self.value.backward(&val_cache, grad_val.view(), false);
        (loss, QGrads { advantage: ga, value: gv }, td)
    }
}
