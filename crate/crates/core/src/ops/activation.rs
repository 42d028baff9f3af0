use crate::error::{Result, TensorError};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] given its forward input.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(input, |g, x| if x > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient of [`sigmoid`] given its forward output.
pub fn sigmoid_backward<T: Scalar>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(output, |g, y| g * y * (T::one() - y))
}

/// Splits a shape around `axis` into (outer, axis extent, inner).
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::shape(
            "softmax",
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Exp-normalization along `axis` with the slice maximum subtracted first.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = axis_layout(x.shape(), axis)?;
    let mut y = Tensor::zeros(x.shape());
    let src = x.data();
    let dst = y.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| src[at(j)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for j in 0..len {
                let e = (src[at(j)] - max).exp();
                dst[at(j)] = e;
                total += e;
            }
            for j in 0..len {
                dst[at(j)] /= total;
            }
        }
    }
    Ok(y)
}

/// Gradient of [`softmax`] given its forward output.
pub fn softmax_backward<T: Scalar>(grad_out: &Tensor<T>, output: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    grad_out.expect_same_shape("softmax_backward", output)?;
    let (outer, len, inner) = axis_layout(output.shape(), axis)?;
    let mut gx = Tensor::zeros(output.shape());
    let (g, y) = (grad_out.data(), output.data());
    let dst = gx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let dot: T = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
            for j in 0..len {
                dst[at(j)] = y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
    Ok(gx)
}
