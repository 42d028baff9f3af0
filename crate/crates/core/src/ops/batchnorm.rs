//! Batch normalization over `[N, C, ...]` tensors.
//!
//! Statistics are taken per channel over the batch and every trailing spatial
//! position. Training mode normalizes with the population variance of the
//! batch; inference mode uses the running estimates.

use crate::error::{Result, TensorError};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    /// Weight kept by the running estimates at each update.
    pub momentum: T,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            epsilon: T::lit(DEFAULT_EPSILON),
            momentum: T::lit(DEFAULT_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Blends the batch statistics recorded in a training-mode cache into the running estimates.
    pub fn with_running_update(&self, cache: &BatchNormCache<T>) -> Result<Self> {
        if cache.mode != Mode::Train {
            return Err(TensorError::CacheMode);
        }
        let m = self.momentum;
        let keep = |run: T, batch: T| m * run + (T::one() - m) * batch;
        Ok(BatchNormState {
            running_mean: self.running_mean.zip_map(&cache.mean, keep)?,
            running_var: self.running_var.zip_map(&cache.var, keep)?,
            ..self.clone()
        })
    }

    pub fn cast<U: Scalar>(&self) -> BatchNormState<U> {
        BatchNormState {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            epsilon: U::from_f64(self.epsilon.to_f64().unwrap()).unwrap(),
            momentum: U::from_f64(self.momentum.to_f64().unwrap()).unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormCache<T = f32> {
    pub mode: Mode,
    pub x_hat: Tensor<T>,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub inv_std: Tensor<T>,
}

fn layout<T: Scalar>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    if x.rank() < 2 {
        return Err(TensorError::shape(
            "batchnorm",
            format!("expected [N, C, ...], got {:?}", x.shape()),
        ));
    }
    if x.shape()[1] != channels {
        return Err(TensorError::shape(
            "batchnorm",
            format!("input has {} channels, state has {channels}", x.shape()[1]),
        ));
    }
    let inner: usize = x.shape()[2..].iter().product();
    Ok((x.shape()[0], inner))
}

pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    state: &BatchNormState<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let c = state.channels();
    let (n, inner) = layout(x, c)?;
    if n == 0 {
        return Err(TensorError::EmptyBatch("batchnorm_forward"));
    }
    let (mean, var) = match mode {
        Mode::Train => {
            let count = T::from_usize(n * inner).unwrap();
            let mut mean = Tensor::zeros(&[c]);
            let mut var = Tensor::zeros(&[c]);
            for ch in 0..c {
                let mut acc = T::zero();
                for b in 0..n {
                    let base = (b * c + ch) * inner;
                    acc += x.data()[base..base + inner].iter().copied().sum::<T>();
                }
                let mu = acc / count;
                let mut sq = T::zero();
                for b in 0..n {
                    let base = (b * c + ch) * inner;
                    for &v in &x.data()[base..base + inner] {
                        sq += (v - mu) * (v - mu);
                    }
                }
                mean.data_mut()[ch] = mu;
                var.data_mut()[ch] = sq / count;
            }
            (mean, var)
        }
        Mode::Infer => (state.running_mean.clone(), state.running_var.clone()),
    };
    let inv_std = var.map(|v| T::one() / (v + state.epsilon).sqrt());
    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * inner;
            let (mu, is) = (mean.data()[ch], inv_std.data()[ch]);
            let (g, be) = (state.gamma.data()[ch], state.beta.data()[ch]);
            for i in base..base + inner {
                let xh = (x.data()[i] - mu) * is;
                x_hat.data_mut()[i] = xh;
                y.data_mut()[i] = g * xh + be;
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            mode,
            x_hat,
            mean,
            var,
            inv_std,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormGrads<T> {
    pub x: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Exact gradients of the training-mode forward pass.
pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    state: &BatchNormState<T>,
) -> Result<BatchNormGrads<T>> {
    if cache.mode != Mode::Train {
        return Err(TensorError::CacheMode);
    }
    grad_out.expect_same_shape("batchnorm_backward", &cache.x_hat)?;
    let c = state.channels();
    let (n, inner) = layout(grad_out, c)?;
    let count = T::from_usize(n * inner).unwrap();
    let mut gx = Tensor::zeros(grad_out.shape());
    let mut g_gamma = Tensor::zeros(&[c]);
    let mut g_beta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..n {
            let base = (b * c + ch) * inner;
            for i in base..base + inner {
                let g = grad_out.data()[i];
                sum_g += g;
                sum_gx += g * cache.x_hat.data()[i];
            }
        }
        g_beta.data_mut()[ch] = sum_g;
        g_gamma.data_mut()[ch] = sum_gx;
        let scale = state.gamma.data()[ch] * cache.inv_std.data()[ch] / count;
        for b in 0..n {
            let base = (b * c + ch) * inner;
            for i in base..base + inner {
                let g = grad_out.data()[i];
                gx.data_mut()[i] = scale * (count * g - sum_g - cache.x_hat.data()[i] * sum_gx);
            }
        }
    }
    Ok(BatchNormGrads {
        x: gx,
        gamma: g_gamma,
        beta: g_beta,
    })
}
