//! 2-D cross-correlation with zero padding, lowered to matrix products via im2col.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output extent for an input extent, or an error when the window does not fit.
    pub fn output_extent(&self, extent: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(TensorError::ConvGeometry(format!(
                "kernel ({}) and stride ({}) must be at least 1",
                self.kernel, self.stride
            )));
        }
        let padded = extent + 2 * self.padding;
        if padded < self.kernel {
            return Err(TensorError::ConvGeometry(format!(
                "kernel {} does not fit padded extent {padded}",
                self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_channels * (self.in_channels * self.kernel * self.kernel) + self.out_channels
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn cols_rows(&self, k: usize) -> usize {
        self.c * k * k
    }

    fn cols_width(&self) -> usize {
        self.oh * self.ow
    }
}

fn check_geometry<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Geometry> {
    input.expect_rank(op, 4)?;
    let s = input.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if c != spec.in_channels {
        return Err(TensorError::shape(
            op,
            format!("input has {c} channels, spec expects {}", spec.in_channels),
        ));
    }
    if weights.shape() != spec.weight_shape() {
        return Err(TensorError::shape(
            op,
            format!(
                "weights {:?} do not match spec {:?}",
                weights.shape(),
                spec.weight_shape()
            ),
        ));
    }
    let oh = spec.output_extent(h)?;
    let ow = spec.output_extent(w)?;
    Ok(Geometry { n, c, h, w, oh, ow })
}

/// Unfolds one sample `[C,H,W]` into columns `[C·k·k, OH·OW]`.
fn im2col<T: Scalar>(sample: &[T], g: &Geometry, spec: &ConvSpec, cols: &mut [T]) {
    let k = spec.kernel;
    let width = g.cols_width();
    let pad = spec.padding as isize;
    for ch in 0..g.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * width..(row + 1) * width];
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    for ox in 0..g.ow {
                        let ix = (ox * spec.stride + kx) as isize - pad;
                        dst[oy * g.ow + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < g.h
                            && (ix as usize) < g.w
                        {
                            sample[(ch * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Folds columns back onto a `[C,H,W]` sample, accumulating overlaps.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, spec: &ConvSpec, sample: &mut [T]) {
    let k = spec.kernel;
    let width = g.cols_width();
    let pad = spec.padding as isize;
    for ch in 0..g.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * width..(row + 1) * width];
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * spec.stride + kx) as isize - pad;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        sample[(ch * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = check_geometry("conv2d_forward", input, weights, spec)?;
    if bias.shape() != [spec.out_channels] {
        return Err(TensorError::shape(
            "conv2d_forward",
            format!("bias {:?}, expected [{}]", bias.shape(), spec.out_channels),
        ));
    }
    let f = spec.out_channels;
    let rows = g.cols_rows(spec.kernel);
    let width = g.cols_width();
    let in_stride = g.c * g.h * g.w;
    let mut out = Tensor::zeros(&[g.n, f, g.oh, g.ow]);
    let mut cols = vec![T::zero(); rows * width];
    for (sample, dst) in input
        .data()
        .chunks_exact(in_stride)
        .zip(out.data_mut().chunks_exact_mut(f * width))
    {
        im2col(sample, &g, spec, &mut cols);
        for (plane, &b) in dst.chunks_exact_mut(width).zip(bias.data()) {
            plane.fill(b);
        }
        matmul_acc(weights.data(), &cols, dst, f, rows, width);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let g = check_geometry("conv2d_backward", input, weights, spec)?;
    let f = spec.out_channels;
    if grad_out.shape() != [g.n, f, g.oh, g.ow] {
        return Err(TensorError::shape(
            "conv2d_backward",
            format!(
                "grad_out {:?}, forward output is {:?}",
                grad_out.shape(),
                [g.n, f, g.oh, g.ow]
            ),
        ));
    }
    let rows = g.cols_rows(spec.kernel);
    let width = g.cols_width();
    let in_stride = g.c * g.h * g.w;
    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_b = Tensor::zeros(&[f]);
    let mut cols = vec![T::zero(); rows * width];
    let mut grad_cols = vec![T::zero(); rows * width];
    for ((sample, gout), gin) in input
        .data()
        .chunks_exact(in_stride)
        .zip(grad_out.data().chunks_exact(f * width))
        .zip(grad_input.data_mut().chunks_exact_mut(in_stride))
    {
        for (gb, plane) in grad_b.data_mut().iter_mut().zip(gout.chunks_exact(width)) {
            *gb += plane.iter().copied().sum::<T>();
        }
        im2col(sample, &g, spec, &mut cols);
        matmul_a_bt_acc(gout, &cols, grad_w.data_mut(), f, width, rows);
        grad_cols.fill(T::zero());
        matmul_at_b_acc(weights.data(), gout, &mut grad_cols, f, rows, width);
        col2im(&grad_cols, &g, spec, gin);
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: grad_w,
        bias: grad_b,
    })
}
