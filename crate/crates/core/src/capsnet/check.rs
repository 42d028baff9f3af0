use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::{gradcheck_piecewise, GradCheckReport, STEP};
use crate::ops::Mode;
use crate::tensor::Tensor;

use super::loss::{hue_sector_targets, margin_loss, mse_loss, MARGIN_HIGH, MARGIN_LOW};
use super::model::ForwardOutput;
use super::train::loss_and_gradients;
use super::{build_model, forward, ColorCapsNetConfig, LossKind, ModelError, ModelParams};

/// End-to-end check of every parameter gradient of the training loss in 64-bit.
///
/// Uses a two-sample batch: a seeded random patch and its photometric inverse. With `per_tensor` set,
/// only that many random coordinates of each parameter tensor are perturbed.
/// Coordinates whose perturbation flips a ReLU or margin hinge are skipped and
/// counted in the report.
pub fn model_gradcheck(
    config: &ColorCapsNetConfig,
    seed: u64,
    per_tensor: Option<usize>,
) -> Result<(GradCheckReport, Vec<String>), ModelError> {
    model_gradcheck_with_step(config, seed, per_tensor, STEP)
}

/// [`model_gradcheck`] with a caller-chosen central-difference step.
pub fn model_gradcheck_with_step(
    config: &ColorCapsNetConfig,
    seed: u64,
    per_tensor: Option<usize>,
    step: f64,
) -> Result<(GradCheckReport, Vec<String>), ModelError> {
    let model = build_model(config, seed, None)?.cast::<f64>();
    let n = config.patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let first: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let gray = Tensor::new(vec![2, 1, n, n], first.iter().copied().chain(first.iter().map(|v| 1.0 - v)).collect())?;
    let lab = Tensor::<f64>::from_fn(&[2, 3, n, n], |_| rng.gen_range(0.0..1.0));
    let analytic = loss_and_gradients(&model, &gray, &lab)?.grads;
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let point: Vec<Tensor<f64>> = model.parameters().into_iter().map(|(_, t)| t.clone()).collect();
    let targets = match config.loss {
        LossKind::Mse => None,
        LossKind::Margin => Some(hue_sector_targets(&lab, config.num_output_capsules)?),
    };
    let mut scratch = model.clone();
    let scratch = std::cell::RefCell::new(&mut scratch);
    let loss = |p: &[Tensor<f64>]| {
        let mut m = scratch.borrow_mut();
        for (slot, value) in m.parameters_mut().into_iter().zip(p) {
            slot.data_mut().copy_from_slice(value.data());
        }
        let out = forward(&m, &gray, Mode::Train).expect("shapes fixed");
        let mut value = mse_loss(&out.lab, &lab).expect("shapes fixed").0;
        if let Some(t) = &targets {
            value += margin_loss(&out.caps, t, config.margin_lambda).expect("shapes fixed").0;
        }
        (value, piece(&m, &out))
    };
    let report = gradcheck_piecewise(loss, &point, &analytic, per_tensor, seed, step)?;
    Ok((report, names))
}

/// Which side of every kink the forward pass is on.
fn piece(model: &ModelParams<f64>, out: &ForwardOutput<f64>) -> Vec<bool> {
    let c = &out.cache;
    let mut bits: Vec<bool> = c.a1.data().iter().chain(c.a2.data()).map(|&v| v > 0.0).collect();
    for hidden in &c.dense_inputs[1..] {
        bits.extend(hidden.data().iter().map(|&v| v > 0.0));
    }
    if model.config.loss == LossKind::Margin {
        for l in out.caps.lengths().data() {
            bits.push(*l > MARGIN_HIGH);
            bits.push(*l > MARGIN_LOW);
        }
    }
    bits
}
