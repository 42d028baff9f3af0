use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::ops::{adam_step, AdamHyper, AdamState, Mode};
use crate::tensor::{Scalar, Tensor};

use super::loss::{hue_sector_targets, margin_loss, mse_loss};
use super::model::{backward, forward, ForwardCache, ModelParams};
use super::{LossKind, ModelError};

/// Adam state for every trainable tensor, aligned with [`ModelParams::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub states: Vec<AdamState<f32>>,
}

impl Optimizer {
    pub fn new(model: &ModelParams<f32>, hyper: AdamHyper) -> Self {
        Optimizer {
            states: model
                .parameters()
                .iter()
                .map(|(_, t)| AdamState::new(t.shape(), hyper))
                .collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        for s in &mut self.states {
            s.hyper.lr = lr;
        }
        self
    }

    /// Writes moments as `adam.<param>.m` / `.v` and the step and hyperparameters as metadata.
    pub fn write_into(&self, model: &ModelParams<f32>, ckpt: &mut Checkpoint) -> Result<(), CheckpointError> {
        for ((name, _), st) in model.parameters().iter().zip(&self.states) {
            ckpt.push(format!("adam.{name}.m"), st.m.clone())?;
            ckpt.push(format!("adam.{name}.v"), st.v.clone())?;
        }
        let h = self.states.first().map(|s| s.hyper).unwrap_or_default();
        for (k, v) in [
            ("adam.step", self.steps().to_string()),
            ("adam.lr", h.lr.to_string()),
            ("adam.beta1", h.beta1.to_string()),
            ("adam.beta2", h.beta2.to_string()),
            ("adam.eps", h.eps.to_string()),
        ] {
            ckpt.metadata.insert(k.into(), v);
        }
        Ok(())
    }

    pub fn read_from(model: &ModelParams<f32>, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let num = |key: &str| -> Result<f64, CheckpointError> {
            ckpt.meta(key)?
                .parse()
                .map_err(|_| CheckpointError::Malformed(format!("metadata `{key}` is not a number")))
        };
        let hyper = AdamHyper {
            lr: num("adam.lr")?,
            beta1: num("adam.beta1")?,
            beta2: num("adam.beta2")?,
            eps: num("adam.eps")?,
        };
        let t = num("adam.step")? as u64;
        let mut states = Vec::new();
        for (name, p) in model.parameters() {
            let load = |suffix: &str| -> Result<Tensor<f32>, CheckpointError> {
                let key = format!("adam.{name}.{suffix}");
                let src = ckpt.require(&key)?;
                if src.shape() != p.shape() {
                    return Err(CheckpointError::ShapeMismatch {
                        name: key,
                        found: src.shape().to_vec(),
                        expected: p.shape().to_vec(),
                    });
                }
                Ok(src.clone())
            };
            states.push(AdamState {
                m: load("m")?,
                v: load("v")?,
                t,
                hyper,
            });
        }
        Ok(Optimizer { states })
    }
}

/// Training-mode loss without the backward pass.
pub fn training_loss<T: Scalar>(model: &ModelParams<T>, gray: &Tensor<T>, lab: &Tensor<T>) -> Result<T, ModelError> {
    if gray.shape().first() != lab.shape().first() {
        return Err(ModelError::BatchMismatch(format!(
            "gray {:?} vs lab {:?}",
            gray.shape(),
            lab.shape()
        )));
    }
    let out = forward(model, gray, Mode::Train)?;
    let (mut loss, _) = mse_loss(&out.lab, lab)?;
    if model.config.loss == LossKind::Margin {
        let targets = hue_sector_targets(lab, model.config.num_output_capsules)?;
        loss += margin_loss(&out.caps, &targets, T::lit(model.config.margin_lambda))?.0;
    }
    Ok(loss)
}

#[derive(Clone, Debug)]
pub struct LossAndGradients<T> {
    pub loss: T,
    pub grads: Vec<Tensor<T>>,
    pub cache: ForwardCache<T>,
}

/// Training-mode forward pass, configured loss, and full backward pass.
pub fn loss_and_gradients<T: Scalar>(
    model: &ModelParams<T>,
    gray: &Tensor<T>,
    lab: &Tensor<T>,
) -> Result<LossAndGradients<T>, ModelError> {
    if gray.shape().first() != lab.shape().first() {
        return Err(ModelError::BatchMismatch(format!(
            "gray {:?} vs lab {:?}",
            gray.shape(),
            lab.shape()
        )));
    }
    let out = forward(model, gray, Mode::Train)?;
    let (mut loss, grad_lab) = mse_loss(&out.lab, lab)?;
    let grad_caps = match model.config.loss {
        LossKind::Mse => None,
        LossKind::Margin => {
            let targets = hue_sector_targets(lab, model.config.num_output_capsules)?;
            let (m, g) = margin_loss(&out.caps, &targets, T::lit(model.config.margin_lambda))?;
            loss += m;
            Some(g)
        }
    };
    let grads = backward(model, &out.cache, &grad_lab, grad_caps.as_ref())?;
    Ok(LossAndGradients {
        loss,
        grads,
        cache: out.cache,
    })
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub model: ModelParams<f32>,
    pub optimizer: Optimizer,
    /// Batch loss before the update.
    pub loss: f32,
}

/// One forward/backward pass and Adam update over a batch.
pub fn train_step(
    model: &ModelParams<f32>,
    optimizer: &Optimizer,
    gray: &Tensor<f32>,
    lab: &Tensor<f32>,
) -> Result<StepOutput, ModelError> {
    let lg = loss_and_gradients(model, gray, lab)?;
    let mut next = model.with_running_updates(&lg.cache)?;
    let mut states = Vec::with_capacity(optimizer.states.len());
    for ((param, grad), st) in next.parameters_mut().into_iter().zip(&lg.grads).zip(&optimizer.states) {
        let (p, s) = adam_step(param, grad, st)?;
        *param = p;
        states.push(s);
    }
    Ok(StepOutput {
        model: next,
        optimizer: Optimizer { states },
        loss: lg.loss,
    })
}
