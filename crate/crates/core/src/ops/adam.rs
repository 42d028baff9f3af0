//! Adam with bias-corrected moment estimates.

use crate::error::{Result, TensorError};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    /// Completed steps.
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize], hyper: AdamHyper) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            hyper,
        }
    }
}

/// One Adam update. Returns the new parameter and state; inputs are untouched.
pub fn adam_step<T: Scalar>(
    param: &Tensor<T>,
    grad: &Tensor<T>,
    state: &AdamState<T>,
) -> Result<(Tensor<T>, AdamState<T>)> {
    param.expect_same_shape("adam_step", grad)?;
    if state.m.shape() != param.shape() || state.v.shape() != param.shape() {
        return Err(TensorError::shape(
            "adam_step",
            format!("moments {:?} vs parameter {:?}", state.m.shape(), param.shape()),
        ));
    }
    let h = state.hyper;
    let t = state.t + 1;
    let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
    let lr = T::lit(h.lr);
    let eps = T::lit(h.eps);
    let c1 = T::one() - T::lit(h.beta1.powi(t as i32));
    let c2 = T::one() - T::lit(h.beta2.powi(t as i32));
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut out = param.clone();
    for (((p, &g), mi), vi) in out
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *mi = b1 * *mi + (T::one() - b1) * g;
        *vi = b2 * *vi + (T::one() - b2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok((
        out,
        AdamState {
            m,
            v,
            t,
            hyper: h,
        },
    ))
}
