//! Valid (unpadded) N-d convolution, its transpose and its kernel gradient.
//!
//! Activations are channels-last: `[batch, spatial..., channels]`.
//! Kernels are `[k..., a, b]` where the convolution maps `a -> b` channels
//! and the transposed convolution maps `b -> a`. The three operations are
//! mutual adjoints, so each one's derivative is expressed with the others
//! and the graph stays differentiable to any order.

use super::graph::{numel, Op, Tensor};
use super::TensorError;

pub(crate) struct Geometry {
    batch: usize,
    in_positions: usize,
    out_positions: usize,
    k_positions: usize,
    a: usize,
    b: usize,
    /// `(out_pos, in_pos, kernel_pos)` for every tap that lands inside the input.
    taps: Vec<(usize, usize, usize)>,
}

fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for (o, &d) in out.iter_mut().zip(dims).rev() {
        *o = flat % d;
        flat /= d;
    }
}

impl Geometry {
    /// `x_shape` is the (larger) convolution input, `out_sp` the spatial
    /// extents of the convolution output.
    pub(crate) fn for_conv(x_shape: &[usize], k_shape: &[usize], strides: &[usize], out_sp: &[usize]) -> Self {
        let d = strides.len();
        let in_sp = &x_shape[1..=d];
        let k_sp = &k_shape[..d];
        let mut taps = Vec::with_capacity(numel(out_sp) * numel(k_sp));
        let mut o_idx = vec![0; d];
        let mut k_idx = vec![0; d];
        for o in 0..numel(out_sp) {
            unravel(o, out_sp, &mut o_idx);
            for k in 0..numel(k_sp) {
                unravel(k, k_sp, &mut k_idx);
                let mut flat = 0;
                let mut inside = true;
                for ax in 0..d {
                    let pos = o_idx[ax] * strides[ax] + k_idx[ax];
                    if pos >= in_sp[ax] {
                        inside = false;
                        break;
                    }
                    flat = flat * in_sp[ax] + pos;
                }
                if inside {
                    taps.push((o, flat, k));
                }
            }
        }
        Geometry {
            batch: x_shape[0],
            in_positions: numel(in_sp),
            out_positions: numel(out_sp),
            k_positions: numel(k_sp),
            a: k_shape[d],
            b: k_shape[d + 1],
            taps,
        }
    }

    pub(crate) fn conv_forward(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (a, b) = (self.a, self.b);
        let mut y = vec![0.0; self.batch * self.out_positions * b];
        for n in 0..self.batch {
            for &(o, i, k) in &self.taps {
                let xr = &x[(n * self.in_positions + i) * a..][..a];
                let yr = &mut y[(n * self.out_positions + o) * b..][..b];
                let wk = &w[k * a * b..][..a * b];
                for (ai, &xv) in xr.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (yv, wv) in yr.iter_mut().zip(&wk[ai * b..(ai + 1) * b]) {
                        *yv += xv * wv;
                    }
                }
            }
        }
        y
    }

    pub(crate) fn transposed_forward(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let (a, b) = (self.a, self.b);
        let mut x = vec![0.0; self.batch * self.in_positions * a];
        for n in 0..self.batch {
            for &(o, i, k) in &self.taps {
                let yr = &y[(n * self.out_positions + o) * b..][..b];
                let xr = &mut x[(n * self.in_positions + i) * a..][..a];
                let wk = &w[k * a * b..][..a * b];
                for (ai, xv) in xr.iter_mut().enumerate() {
                    let wr = &wk[ai * b..(ai + 1) * b];
                    *xv += wr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>();
                }
            }
        }
        x
    }

    pub(crate) fn kernel_grad(&self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let (a, b) = (self.a, self.b);
        let mut w = vec![0.0; self.k_positions * a * b];
        for n in 0..self.batch {
            for &(o, i, k) in &self.taps {
                let xr = &x[(n * self.in_positions + i) * a..][..a];
                let gr = &dy[(n * self.out_positions + o) * b..][..b];
                let wk = &mut w[k * a * b..][..a * b];
                for (ai, &xv) in xr.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (wv, g) in wk[ai * b..(ai + 1) * b].iter_mut().zip(gr) {
                        *wv += xv * g;
                    }
                }
            }
        }
        w
    }
}

fn check_kernel(op: &'static str, k: &Tensor, strides: &[usize]) -> Result<usize, TensorError> {
    let d = strides.len();
    if d == 0 || k.ndim() != d + 2 {
        return Err(TensorError::Rank {
            op,
            expected: d + 2,
            got: k.ndim(),
        });
    }
    if let Some(axis) = strides.iter().position(|&s| s == 0) {
        return Err(TensorError::Axis {
            op,
            axis,
            detail: "stride must be >= 1".into(),
        });
    }
    Ok(d)
}

impl Tensor {
    /// Valid convolution. `self` is `[batch, spatial..., a]`, `kernel` is
    /// `[k..., a, b]`; the output extent per axis is `(in - k) / s + 1`.
    pub fn conv(&self, kernel: &Tensor, strides: &[usize]) -> Result<Tensor, TensorError> {
        let op = "conv";
        let d = check_kernel(op, kernel, strides)?;
        if self.ndim() != d + 2 {
            return Err(TensorError::Rank {
                op,
                expected: d + 2,
                got: self.ndim(),
            });
        }
        if self.shape()[d + 1] != kernel.shape()[d] {
            return Err(TensorError::Axis {
                op,
                axis: d + 1,
                detail: format!("input has {} channels, kernel expects {}", self.shape()[d + 1], kernel.shape()[d]),
            });
        }
        let mut shape = vec![self.shape()[0]];
        for ax in 0..d {
            let (n, k) = (self.shape()[ax + 1], kernel.shape()[ax]);
            if n < k {
                return Err(TensorError::Axis {
                    op,
                    axis: ax + 1,
                    detail: format!("extent {n} smaller than kernel {k}"),
                });
            }
            shape.push((n - k) / strides[ax] + 1);
        }
        shape.push(kernel.shape()[d + 1]);
        Ok(Tensor::from_op(Op::Conv(self.clone(), kernel.clone(), strides.to_vec()), shape))
    }

    /// Transposed convolution: `self` is `[batch, spatial..., b]`, `kernel`
    /// is `[k..., a, b]`; each output extent is `(in - 1) * s + k`.
    pub fn transposed_conv(&self, kernel: &Tensor, strides: &[usize]) -> Result<Tensor, TensorError> {
        let d = check_kernel("transposed_conv", kernel, strides)?;
        if self.ndim() != d + 2 {
            return Err(TensorError::Rank {
                op: "transposed_conv",
                expected: d + 2,
                got: self.ndim(),
            });
        }
        let out: Vec<usize> = (0..d)
            .map(|ax| (self.shape()[ax + 1] - 1) * strides[ax] + kernel.shape()[ax])
            .collect();
        self.transposed_conv_to(kernel, strides, &out)
    }

    /// Transposed convolution into explicit output extents, which may exceed
    /// the natural ones by less than one stride (the extra cells are zero).
    /// This is exactly the input gradient of [`Tensor::conv`].
    pub fn transposed_conv_to(&self, kernel: &Tensor, strides: &[usize], out_sp: &[usize]) -> Result<Tensor, TensorError> {
        let op = "transposed_conv";
        let d = check_kernel(op, kernel, strides)?;
        if self.ndim() != d + 2 || out_sp.len() != d {
            return Err(TensorError::Rank {
                op,
                expected: d + 2,
                got: self.ndim(),
            });
        }
        if self.shape()[d + 1] != kernel.shape()[d + 1] {
            return Err(TensorError::Axis {
                op,
                axis: d + 1,
                detail: format!("input has {} channels, kernel expects {}", self.shape()[d + 1], kernel.shape()[d + 1]),
            });
        }
        let mut shape = vec![self.shape()[0]];
        for ax in 0..d {
            let (n, k, s) = (self.shape()[ax + 1], kernel.shape()[ax], strides[ax]);
            let natural = (n - 1) * s + k;
            if out_sp[ax] < natural || out_sp[ax] >= natural + s {
                return Err(TensorError::Axis {
                    op,
                    axis: ax + 1,
                    detail: format!("output extent {} incompatible with input {n}, kernel {k}, stride {s}", out_sp[ax]),
                });
            }
            shape.push(out_sp[ax]);
        }
        shape.push(kernel.shape()[d]);
        Ok(Tensor::from_op(Op::TransConv(self.clone(), kernel.clone(), strides.to_vec()), shape))
    }

    /// Gradient of a convolution with respect to its kernel: correlates the
    /// input `self` (`[batch, in..., a]`) with `dy` (`[batch, out..., b]`).
    pub fn kernel_grad(&self, dy: &Tensor, kernel_spatial: &[usize], strides: &[usize]) -> Result<Tensor, TensorError> {
        let op = "kernel_grad";
        let d = strides.len();
        if d == 0 || kernel_spatial.len() != d || self.ndim() != d + 2 || dy.ndim() != d + 2 {
            return Err(TensorError::Rank {
                op,
                expected: d + 2,
                got: self.ndim(),
            });
        }
        if self.shape()[0] != dy.shape()[0] {
            return Err(TensorError::Axis {
                op,
                axis: 0,
                detail: format!("batch {} vs {}", self.shape()[0], dy.shape()[0]),
            });
        }
        for ax in 0..d {
            let (n, k, s, o) = (self.shape()[ax + 1], kernel_spatial[ax], strides[ax], dy.shape()[ax + 1]);
            if s == 0 || n < k || (n - k) / s + 1 != o {
                return Err(TensorError::Axis {
                    op,
                    axis: ax + 1,
                    detail: format!("input {n}, kernel {k}, stride {s} cannot give output {o}"),
                });
            }
        }
        let mut shape = kernel_spatial.to_vec();
        shape.push(self.shape()[d + 1]);
        shape.push(dy.shape()[d + 1]);
        Ok(Tensor::from_op(Op::KernelGrad(self.clone(), dy.clone(), strides.to_vec()), shape))
    }
}
