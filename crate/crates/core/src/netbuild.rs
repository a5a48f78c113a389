//! Node-output ruleset, parameter counting and a reference forward pass.
//!
//! Every intermediate vertex concatenates its predecessors' outputs (ascending
//! predecessor index) and applies its operation. Fully-connected labels map to
//! 16 features; convolutions, pooling and spectral attention preserve width.
//! The output vertex projects its concatenated input to a single logit.

use rand::Rng;

use crate::archspace::{Architecture, OpLabel};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Feature count of one input pixel.
pub const INPUT_FEATURES: usize = 16;
/// Output width of every fully-connected label.
pub const LINEAR_WIDTH: usize = 16;
/// Initial PReLU slope.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WidthMap {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

fn op_output_width(op: OpLabel, input: usize) -> usize {
    if op.is_linear() {
        LINEAR_WIDTH
    } else {
        input
    }
}

fn kernel_size(op: OpLabel) -> usize {
    match op {
        OpLabel::Conv3 | OpLabel::MaxPool3 => 3,
        OpLabel::Conv5 | OpLabel::MaxPool5 => 5,
        _ => 0,
    }
}

pub fn propagate_widths(arch: &Architecture) -> WidthMap {
    let v = arch.num_vertices();
    let mut input = vec![0; v];
    let mut output = vec![0; v];
    input[0] = INPUT_FEATURES;
    output[0] = INPUT_FEATURES;
    for k in 1..v {
        input[k] = arch.predecessors(k).map(|p| output[p]).sum();
        output[k] = if k == v - 1 { 1 } else { op_output_width(arch.op(k), input[k]) };
    }
    WidthMap { input, output }
}

fn op_params(op: OpLabel, input: usize) -> usize {
    match op {
        OpLabel::LinearPrelu => input * LINEAR_WIDTH + 2 * LINEAR_WIDTH,
        OpLabel::LinearRelu | OpLabel::LinearRelu6 | OpLabel::LinearTanh | OpLabel::Linear => {
            input * LINEAR_WIDTH + LINEAR_WIDTH
        }
        OpLabel::Conv3 | OpLabel::Conv5 => kernel_size(op) + 1,
        OpLabel::MaxPool3 | OpLabel::MaxPool5 => 0,
        OpLabel::SpectralAttn => input * input + input,
    }
}

/// Trainable parameter count under the width ruleset.
pub fn count_params(arch: &Architecture) -> usize {
    let widths = propagate_widths(arch);
    let v = arch.num_vertices();
    let hidden: usize = (1..v - 1).map(|k| op_params(arch.op(k), widths.input[k])).sum();
    hidden + widths.input[v - 1] + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Relu6,
    Tanh,
    Prelu,
}

/// Parameters of one vertex.
#[derive(Clone, Debug, PartialEq)]
pub enum VertexBlock {
    Input,
    Dense {
        /// Row-major `LINEAR_WIDTH x in_width`.
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
        /// PReLU slopes, one per output feature.
        slopes: Vec<f64>,
        in_width: usize,
    },
    Conv {
        kernel: Vec<f64>,
        bias: f64,
        in_width: usize,
    },
    MaxPool {
        size: usize,
        in_width: usize,
    },
    Attention {
        /// Row-major `in_width x in_width`.
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_width: usize,
    },
    Output {
        weights: Vec<f64>,
        bias: f64,
    },
}

impl VertexBlock {
    fn num_params(&self) -> usize {
        match self {
            VertexBlock::Input | VertexBlock::MaxPool { .. } => 0,
            VertexBlock::Dense {
                weights, bias, slopes, ..
            } => weights.len() + bias.len() + slopes.len(),
            VertexBlock::Conv { kernel, .. } => kernel.len() + 1,
            VertexBlock::Attention { weights, bias, .. } => weights.len() + bias.len(),
            VertexBlock::Output { weights, .. } => weights.len() + 1,
        }
    }

    fn for_each_param(&mut self, f: &mut impl FnMut(&mut f64)) {
        match self {
            VertexBlock::Input | VertexBlock::MaxPool { .. } => {}
            VertexBlock::Dense {
                weights, bias, slopes, ..
            } => weights.iter_mut().chain(bias.iter_mut()).chain(slopes.iter_mut()).for_each(f),
            VertexBlock::Conv { kernel, bias, .. } => {
                kernel.iter_mut().for_each(&mut *f);
                f(bias);
            }
            VertexBlock::Attention { weights, bias, .. } => weights.iter_mut().chain(bias.iter_mut()).for_each(f),
            VertexBlock::Output { weights, bias } => {
                weights.iter_mut().for_each(&mut *f);
                f(bias);
            }
        }
    }
}

/// An architecture with allocated parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterializedNetwork {
    arch: Architecture,
    blocks: Vec<VertexBlock>,
}

fn uniform_block<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Allocates parameters: weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
/// zero biases, PReLU slopes at 0.25.
pub fn materialize(arch: &Architecture, init_seed: u64) -> MaterializedNetwork {
    let mut rng = seeded(init_seed);
    let widths = propagate_widths(arch);
    let v = arch.num_vertices();
    let mut blocks = Vec::with_capacity(v);
    blocks.push(VertexBlock::Input);
    for k in 1..v - 1 {
        let op = arch.op(k);
        let w = widths.input[k];
        let block = match op {
            OpLabel::LinearPrelu | OpLabel::LinearRelu | OpLabel::LinearRelu6 | OpLabel::LinearTanh | OpLabel::Linear => {
                let activation = match op {
                    OpLabel::LinearPrelu => Activation::Prelu,
                    OpLabel::LinearRelu => Activation::Relu,
                    OpLabel::LinearRelu6 => Activation::Relu6,
                    OpLabel::LinearTanh => Activation::Tanh,
                    _ => Activation::Identity,
                };
                VertexBlock::Dense {
                    weights: uniform_block(&mut rng, LINEAR_WIDTH * w, w),
                    bias: vec![0.0; LINEAR_WIDTH],
                    activation,
                    slopes: if activation == Activation::Prelu {
                        vec![PRELU_INIT_SLOPE; LINEAR_WIDTH]
                    } else {
                        Vec::new()
                    },
                    in_width: w,
                }
            }
            OpLabel::Conv3 | OpLabel::Conv5 => {
                let size = kernel_size(op);
                VertexBlock::Conv {
                    kernel: uniform_block(&mut rng, size, size),
                    bias: 0.0,
                    in_width: w,
                }
            }
            OpLabel::MaxPool3 | OpLabel::MaxPool5 => VertexBlock::MaxPool {
                size: kernel_size(op),
                in_width: w,
            },
            OpLabel::SpectralAttn => VertexBlock::Attention {
                weights: uniform_block(&mut rng, w * w, w),
                bias: vec![0.0; w],
                in_width: w,
            },
        };
        blocks.push(block);
    }
    let w_out = widths.input[v - 1];
    blocks.push(VertexBlock::Output {
        weights: uniform_block(&mut rng, w_out, w_out),
        bias: 0.0,
    });
    MaterializedNetwork { arch: *arch, blocks }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_width(vertex: usize, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { vertex, expected, got })
    }
}

impl MaterializedNetwork {
    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn blocks(&self) -> &[VertexBlock] {
        &self.blocks
    }

    pub fn total_params(&self) -> usize {
        self.blocks.iter().map(VertexBlock::num_params).sum()
    }

    /// Applies `f` to every scalar parameter in vertex order.
    pub fn map_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for block in &mut self.blocks {
            block.for_each_param(&mut f);
        }
    }

    /// Evaluates the network on one pixel and returns a probability.
    pub fn forward(&self, pixel: &[f64]) -> Result<f64> {
        check_width(0, crate::netbuild::INPUT_FEATURES, pixel.len())?;
        let v = self.arch.num_vertices();
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(v);
        outputs.push(pixel.to_vec());
        for k in 1..v {
            let x: Vec<f64> = self
                .arch
                .predecessors(k)
                .flat_map(|p| outputs[p].iter().copied())
                .collect();
            let y = match &self.blocks[k] {
                VertexBlock::Input => unreachable!("input block at vertex {k}"),
                VertexBlock::Dense {
                    weights,
                    bias,
                    activation,
                    slopes,
                    in_width,
                } => {
                    check_width(k, *in_width, x.len())?;
                    (0..LINEAR_WIDTH)
                        .map(|o| {
                            let row = &weights[o * in_width..(o + 1) * in_width];
                            let z = bias[o] + row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
                            match activation {
                                Activation::Identity => z,
                                Activation::Relu => z.max(0.0),
                                Activation::Relu6 => z.clamp(0.0, 6.0),
                                Activation::Tanh => z.tanh(),
                                Activation::Prelu => {
                                    if z >= 0.0 {
                                        z
                                    } else {
                                        slopes[o] * z
                                    }
                                }
                            }
                        })
                        .collect()
                }
                VertexBlock::Conv { kernel, bias, in_width } => {
                    check_width(k, *in_width, x.len())?;
                    let half = kernel.len() / 2;
                    (0..x.len())
                        .map(|i| {
                            let mut acc = *bias;
                            for (t, w) in kernel.iter().enumerate() {
                                if let Some(idx) = (i + t).checked_sub(half) {
                                    if idx < x.len() {
                                        acc += w * x[idx];
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                }
                VertexBlock::MaxPool { size, in_width } => {
                    check_width(k, *in_width, x.len())?;
                    let half = size / 2;
                    (0..x.len())
                        .map(|i| {
                            let lo = i.saturating_sub(half);
                            let hi = (i + half).min(x.len() - 1);
                            x[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                }
                VertexBlock::Attention {
                    weights,
                    bias,
                    in_width,
                } => {
                    check_width(k, *in_width, x.len())?;
                    (0..x.len())
                        .map(|o| {
                            let row = &weights[o * in_width..(o + 1) * in_width];
                            let gate = sigmoid(bias[o] + row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>());
                            gate * x[o]
                        })
                        .collect()
                }
                VertexBlock::Output { weights, bias } => {
                    check_width(k, weights.len(), x.len())?;
                    let z = bias + weights.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
                    vec![sigmoid(z)]
                }
            };
            outputs.push(y);
        }
        Ok(outputs[v - 1][0])
    }
}

/// Parameter count of the complete 8-vertex DAG with every label linear-prelu.
pub fn worst_case_params() -> usize {
    let arch = Architecture::complete(crate::archspace::MAX_VERTICES, OpLabel::LinearPrelu)
        .expect("complete graph is representable");
    count_params(&arch)
}

/// Parameter count of the 2-vertex architecture.
pub fn minimal_params() -> usize {
    count_params(&Architecture::minimal())
}
