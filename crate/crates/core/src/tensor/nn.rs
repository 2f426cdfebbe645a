//! Layer primitives built from the differentiable tensor operations.

use super::graph::Tensor;
use super::TensorError;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept on the old running statistics at each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub const LRELU: Activation = Activation::LeakyRelu(0.2);

    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Identity => x.clone(),
            Activation::Relu => relu(x),
            Activation::LeakyRelu(slope) => leaky_relu(x, slope),
            Activation::Tanh => x.tanh(),
        }
    }
}

fn masked(x: &Tensor, negative_slope: f64) -> Tensor {
    // The mask is a constant: its derivative vanishes almost everywhere.
    // At exactly zero the negative branch is taken, so relu'(0) = 0.
    let mask: Vec<f64> = x.data().iter().map(|&v| if v > 0.0 { 1.0 } else { negative_slope }).collect();
    let mask = Tensor::new(x.shape(), mask).expect("mask mirrors input shape");
    x.mul(&mask).expect("mask mirrors input shape")
}

pub fn relu(x: &Tensor) -> Tensor {
    masked(x, 0.0)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    masked(x, slope)
}

/// `x [batch, in] . weight [in, out] + bias [out]`
pub fn fully_connected(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    let y = x.matmul(weight)?;
    y.add(&bias.broadcast_channel(y.shape())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running per-channel statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Per-channel batch normalization over every axis but the last.
///
/// In train mode the batch statistics are used and folded into `running`
/// as an exponential moving average; eval mode reads `running` only.
pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mode: BnMode,
    running: &mut RunningStats,
) -> Result<Tensor, TensorError> {
    let c = *x.shape().last().ok_or(TensorError::Rank {
        op: "batch_norm",
        expected: 2,
        got: 0,
    })?;
    if gamma.shape() != [c] || beta.shape() != [c] || running.mean.len() != c {
        return Err(TensorError::ShapeMismatch {
            op: "batch_norm",
            detail: format!("{c} channels vs gamma {:?}, beta {:?}", gamma.shape(), beta.shape()),
        });
    }
    let shape = x.shape().to_vec();
    let (centered, inv_std) = match mode {
        BnMode::Train => {
            if shape[0] < 2 {
                return Err(TensorError::BatchTooSmall(shape[0]));
            }
            let n = (x.numel() / c) as f64;
            let mean = x.sum_to_channel()?.scale(1.0 / n);
            let centered = x.sub(&mean.broadcast_channel(&shape)?)?;
            let var = centered.square().sum_to_channel()?.scale(1.0 / n);
            for ch in 0..c {
                running.mean[ch] = BN_MOMENTUM * running.mean[ch] + (1.0 - BN_MOMENTUM) * mean.data()[ch];
                running.var[ch] = BN_MOMENTUM * running.var[ch] + (1.0 - BN_MOMENTUM) * var.data()[ch];
            }
            (centered, var.add_scalar(BN_EPSILON).powf(-0.5))
        }
        BnMode::Eval => {
            let mean = Tensor::new(&[c], running.mean.clone())?;
            let inv: Vec<f64> = running.var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            (x.sub(&mean.broadcast_channel(&shape)?)?, Tensor::new(&[c], inv)?)
        }
    };
    let scale = inv_std.mul(gamma)?;
    centered
        .mul(&scale.broadcast_channel(&shape)?)?
        .add(&beta.broadcast_channel(&shape)?)
}
