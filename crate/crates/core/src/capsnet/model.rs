use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::{import_external, Checkpoint, VGG_NAME_MAP};
use crate::error::TensorError;
use crate::ops::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dense_backward, dense_forward, relu,
    relu_backward, sigmoid, sigmoid_backward, BatchNormCache, BatchNormState, ConvSpec, Mode,
};
use crate::tensor::{Scalar, Tensor};

use super::capsule::{dynamic_routing, routing_backward, squash_last_axis, squash_last_axis_backward, CapsuleSet, Routing};
use super::{ColorCapsNetConfig, ModelError};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = f32> {
    /// `[in, out]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All learnable tensors and batch-norm running statistics of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ColorCapsNetConfig,
    pub conv1: ConvLayer<T>,
    pub bn1: BatchNormState<T>,
    pub conv2: ConvLayer<T>,
    pub bn2: BatchNormState<T>,
    pub primary: ConvLayer<T>,
    pub primary_bn: BatchNormState<T>,
    /// `[primary_count, output_count, primary_dim, output_dim]`
    pub routing_weight: Tensor<T>,
    pub decoder: Vec<DenseLayer<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Trainable tensors in their canonical order.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("conv1.weight".into(), &self.conv1.weight),
            ("conv1.bias".into(), &self.conv1.bias),
            ("bn1.gamma".into(), &self.bn1.gamma),
            ("bn1.beta".into(), &self.bn1.beta),
            ("conv2.weight".into(), &self.conv2.weight),
            ("conv2.bias".into(), &self.conv2.bias),
            ("bn2.gamma".into(), &self.bn2.gamma),
            ("bn2.beta".into(), &self.bn2.beta),
            ("primary.weight".into(), &self.primary.weight),
            ("primary.bias".into(), &self.primary.bias),
            ("primary_bn.gamma".into(), &self.primary_bn.gamma),
            ("primary_bn.beta".into(), &self.primary_bn.beta),
            ("routing.weight".into(), &self.routing_weight),
        ];
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.weight"), &l.weight));
            out.push((format!("decoder.{i}.bias"), &l.bias));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.primary.weight,
            &mut self.primary.bias,
            &mut self.primary_bn.gamma,
            &mut self.primary_bn.beta,
            &mut self.routing_weight,
        ];
        for l in &mut self.decoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Running statistics; persisted but not trained.
    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (name, bn) in [("bn1", &self.bn1), ("bn2", &self.bn2), ("primary_bn", &self.primary_bn)] {
            out.push((format!("{name}.running_mean"), &bn.running_mean));
            out.push((format!("{name}.running_var"), &bn.running_var));
        }
        out
    }

    /// Mutable access to any named parameter or buffer.
    pub fn slot_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        fn bn<'a, T>(st: &'a mut BatchNormState<T>, field: &str) -> Option<&'a mut Tensor<T>> {
            match field {
                "gamma" => Some(&mut st.gamma),
                "beta" => Some(&mut st.beta),
                "running_mean" => Some(&mut st.running_mean),
                "running_var" => Some(&mut st.running_var),
                _ => None,
            }
        }
        fn conv<'a, T>(layer: &'a mut ConvLayer<T>, field: &str) -> Option<&'a mut Tensor<T>> {
            match field {
                "weight" => Some(&mut layer.weight),
                "bias" => Some(&mut layer.bias),
                _ => None,
            }
        }
        let (prefix, field) = name.rsplit_once('.')?;
        match prefix {
            "bn1" => bn(&mut self.bn1, field),
            "bn2" => bn(&mut self.bn2, field),
            "primary_bn" => bn(&mut self.primary_bn, field),
            "conv1" => conv(&mut self.conv1, field),
            "conv2" => conv(&mut self.conv2, field),
            "primary" => conv(&mut self.primary, field),
            "routing" if field == "weight" => Some(&mut self.routing_weight),
            _ => {
                let idx: usize = prefix.strip_prefix("decoder.")?.parse().ok()?;
                let layer = self.decoder.get_mut(idx)?;
                match field {
                    "weight" => Some(&mut layer.weight),
                    "bias" => Some(&mut layer.bias),
                    _ => None,
                }
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |l: &ConvLayer<T>| ConvLayer {
            spec: l.spec,
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        ModelParams {
            config: self.config.clone(),
            conv1: conv(&self.conv1),
            bn1: self.bn1.cast(),
            conv2: conv(&self.conv2),
            bn2: self.bn2.cast(),
            primary: conv(&self.primary),
            primary_bn: self.primary_bn.cast(),
            routing_weight: self.routing_weight.cast(),
            decoder: self
                .decoder
                .iter()
                .map(|l| DenseLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }

    /// Folds the batch statistics of a training forward pass into the running estimates.
    pub fn with_running_updates(&self, cache: &ForwardCache<T>) -> Result<Self, ModelError> {
        Ok(ModelParams {
            bn1: self.bn1.with_running_update(&cache.bn1)?,
            bn2: self.bn2.with_running_update(&cache.bn2)?,
            primary_bn: self.primary_bn.with_running_update(&cache.primary_bn)?,
            ..self.clone()
        })
    }
}

impl ModelParams<f32> {
    /// Every parameter and buffer, plus the configuration under metadata key `config`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        for (name, t) in self.parameters().into_iter().chain(self.buffers()) {
            ckpt.push(name, t.clone()).expect("model names are unique");
        }
        ckpt.metadata.insert(
            "config".into(),
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let config: ColorCapsNetConfig = serde_json::from_str(ckpt.meta("config")?)
            .map_err(|e| ModelError::Config(format!("checkpoint config: {e}")))?;
        let mut model = build_model(&config, 0, None)?;
        let names: Vec<String> = model
            .parameters()
            .into_iter()
            .chain(model.buffers())
            .map(|(n, _)| n)
            .collect();
        for name in names {
            let src = ckpt.require(&name)?;
            let dst = model.slot_mut(&name).expect("name enumerated from model");
            if src.shape() != dst.shape() {
                return Err(crate::checkpoint::CheckpointError::ShapeMismatch {
                    name,
                    found: src.shape().to_vec(),
                    expected: dst.shape().to_vec(),
                }
                .into());
            }
            *dst = src.clone();
        }
        Ok(model)
    }
}

fn conv_init(spec: ConvSpec, rng: &mut ChaCha8Rng) -> ConvLayer<f32> {
    let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
    ConvLayer {
        spec,
        weight: Tensor::from_fn(&spec.weight_shape(), |_| normal.sample(rng) as f32),
        bias: Tensor::zeros(&[spec.out_channels]),
    }
}

/// Zero-mean uniform with variance `2/(fan_in+fan_out)`.
fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-a..a) as f32)
}

/// Seeded initialization, optionally overwriting the two front convolutions from VGG weights.
pub fn build_model(
    config: &ColorCapsNetConfig,
    seed: u64,
    vgg_weights: Option<&Checkpoint>,
) -> Result<ModelParams<f32>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = config.conv_channels;
    let n = config.patch_size;
    let conv1 = conv_init(ConvSpec::new(1, f, 3, 1, 1), &mut rng);
    let conv2 = conv_init(ConvSpec::new(f, f, 3, 1, 1), &mut rng);
    let primary = conv_init(ConvSpec::new(f, config.primary_channels(), n, 1, 0), &mut rng);
    let (p, c, d, o) = (
        config.primary_capsule_count,
        config.num_output_capsules,
        config.primary_capsule_dim,
        config.output_capsule_dim,
    );
    let routing_weight = glorot_uniform(&[p, c, d, o], d, o, &mut rng);
    let widths = config.decoder_widths();
    let decoder = widths
        .windows(2)
        .map(|w| DenseLayer {
            weight: glorot_uniform(&[w[0], w[1]], w[0], w[1], &mut rng),
            bias: Tensor::zeros(&[w[1]]),
        })
        .collect();
    let model = ModelParams {
        config: config.clone(),
        conv1,
        bn1: BatchNormState::new(f),
        conv2,
        bn2: BatchNormState::new(f),
        primary,
        primary_bn: BatchNormState::new(config.primary_channels()),
        routing_weight,
        decoder,
    };
    match vgg_weights {
        None => Ok(model),
        Some(ckpt) => {
            let mut offending = Vec::new();
            let mut probe = model.clone();
            for (src, dst) in VGG_NAME_MAP {
                let expected = probe.slot_mut(dst).expect("vgg slots exist").shape().to_vec();
                match ckpt.get(src) {
                    None => offending.push((src.to_string(), "missing".to_string())),
                    Some(t) if t.shape() != expected.as_slice() => {
                        offending.push((src.to_string(), format!("shape {:?}, expected {expected:?}", t.shape())))
                    }
                    Some(_) => {}
                }
            }
            if !offending.is_empty() {
                let detail = offending.iter().map(|(n, why)| format!("{n}: {why}")).collect::<Vec<_>>().join("; ");
                return Err(ModelError::Import {
                    names: offending.into_iter().map(|(n, _)| n).collect(),
                    detail,
                });
            }
            Ok(import_external(ckpt, &model, &VGG_NAME_MAP)?)
        }
    }
}

/// Intermediate values retained for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T = f32> {
    pub mode: Mode,
    input: Tensor<T>,
    pub(crate) a1: Tensor<T>,
    h1: Tensor<T>,
    pub bn1: BatchNormCache<T>,
    pub(crate) a2: Tensor<T>,
    h2: Tensor<T>,
    pub bn2: BatchNormCache<T>,
    pub primary_bn: BatchNormCache<T>,
    /// Primary capsules before squashing, `[batch, count, dim]`.
    primary_raw: Tensor<T>,
    /// Squashed primary capsules.
    pub primary_caps: Tensor<T>,
    pub predictions: Tensor<T>,
    pub routing: Routing<T>,
    /// Inputs to each decoder layer.
    pub(crate) dense_inputs: Vec<Tensor<T>>,
    /// Decoder output after the sigmoid, `[batch, 3·n·n]`.
    output: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T = f32> {
    /// Normalized Lab prediction, `[batch, 3, n, n]`.
    pub lab: Tensor<T>,
    pub caps: CapsuleSet<T>,
    pub cache: ForwardCache<T>,
}

fn predict<T: Scalar>(u: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let (nb, np, d) = (u.shape()[0], u.shape()[1], u.shape()[2]);
    let (nc, o) = (w.shape()[1], w.shape()[3]);
    let mut out = Tensor::zeros(&[nb, np, nc, o]);
    for b in 0..nb {
        for i in 0..np {
            let ui = &u.data()[(b * np + i) * d..][..d];
            for j in 0..nc {
                let dst = &mut out.data_mut()[((b * np + i) * nc + j) * o..][..o];
                for (k, &uk) in ui.iter().enumerate() {
                    let wrow = &w.data()[((i * nc + j) * d + k) * o..][..o];
                    for (acc, &wv) in dst.iter_mut().zip(wrow) {
                        *acc += uk * wv;
                    }
                }
            }
        }
    }
    out
}

pub fn forward<T: Scalar>(model: &ModelParams<T>, gray: &Tensor<T>, mode: Mode) -> Result<ForwardOutput<T>, ModelError> {
    let cfg = &model.config;
    let n = cfg.patch_size;
    if gray.rank() != 4 || gray.shape()[1..] != [1, n, n] {
        return Err(TensorError::shape(
            "forward",
            format!("expected [batch, 1, {n}, {n}], got {:?}", gray.shape()),
        )
        .into());
    }
    if let Some(bad) = gray.data().iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
        return Err(ModelError::Domain(format!("gray value {bad:?} outside [0, 1]")));
    }
    let nb = gray.shape()[0];
    let z1 = conv2d_forward(gray, &model.conv1.weight, &model.conv1.bias, &model.conv1.spec)?;
    let (a1, bn1) = batchnorm_forward(&z1, &model.bn1, mode)?;
    let h1 = relu(&a1);
    let z2 = conv2d_forward(&h1, &model.conv2.weight, &model.conv2.bias, &model.conv2.spec)?;
    let (a2, bn2) = batchnorm_forward(&z2, &model.bn2, mode)?;
    let h2 = relu(&a2);
    let z3 = conv2d_forward(&h2, &model.primary.weight, &model.primary.bias, &model.primary.spec)?;
    let (a3, primary_bn) = batchnorm_forward(&z3, &model.primary_bn, mode)?;
    let primary_raw = a3.reshape(&[nb, cfg.primary_capsule_count, cfg.primary_capsule_dim])?;
    let primary_caps = squash_last_axis(&primary_raw);
    let predictions = predict(&primary_caps, &model.routing_weight);
    let routing = dynamic_routing(&predictions, cfg.routing_iterations)?;
    let mut x = routing.output.activities.clone().reshape(&[nb, cfg.latent_width()])?;
    let mut dense_inputs = Vec::with_capacity(model.decoder.len());
    let last = model.decoder.len() - 1;
    for (i, layer) in model.decoder.iter().enumerate() {
        let z = dense_forward(&x, &layer.weight, &layer.bias)?;
        dense_inputs.push(x);
        x = if i == last { sigmoid(&z) } else { relu(&z) };
    }
    let lab = x.clone().reshape(&[nb, 3, n, n])?;
    Ok(ForwardOutput {
        lab,
        caps: routing.output.clone(),
        cache: ForwardCache {
            mode,
            input: gray.clone(),
            a1,
            h1,
            bn1,
            a2,
            h2,
            bn2,
            primary_bn,
            primary_raw,
            primary_caps,
            predictions,
            routing,
            dense_inputs,
            output: x,
        },
    })
}

/// Gradients of a scalar loss with respect to every parameter, in [`ModelParams::parameters`] order.
///
/// `grad_lab` is the loss gradient at the normalized Lab output; `grad_caps`
/// optionally adds a gradient arriving directly at the output capsules.
pub fn backward<T: Scalar>(
    model: &ModelParams<T>,
    cache: &ForwardCache<T>,
    grad_lab: &Tensor<T>,
    grad_caps: Option<&Tensor<T>>,
) -> Result<Vec<Tensor<T>>, ModelError> {
    let cfg = &model.config;
    let nb = cache.input.shape()[0];
    let mut g = grad_lab.clone().reshape(&[nb, cfg.output_width()])?;
    let last = model.decoder.len() - 1;
    let mut dense_grads = Vec::with_capacity(model.decoder.len());
    for (i, layer) in model.decoder.iter().enumerate().rev() {
        let g_pre = if i == last {
            sigmoid_backward(&g, &cache.output)?
        } else {
            // the next layer's input is this layer's ReLU output
            relu_backward(&g, &cache.dense_inputs[i + 1])?
        };
        let dg = dense_backward(&g_pre, &cache.dense_inputs[i], &layer.weight)?;
        g = dg.input;
        dense_grads.push((dg.weights, dg.bias));
    }
    dense_grads.reverse();

    let mut g_v = g.reshape(&[nb, cfg.num_output_capsules, cfg.output_capsule_dim])?;
    if let Some(extra) = grad_caps {
        g_v = g_v.zip_map(extra, |a, b| a + b)?;
    }
    let g_pred = routing_backward(&g_v, &cache.routing, cache.predictions.shape())?;

    let (np, nc, d, o) = (
        cfg.primary_capsule_count,
        cfg.num_output_capsules,
        cfg.primary_capsule_dim,
        cfg.output_capsule_dim,
    );
    let w = &model.routing_weight;
    let u = &cache.primary_caps;
    let mut g_w = Tensor::zeros(w.shape());
    let mut g_u = Tensor::zeros(u.shape());
    for b in 0..nb {
        for i in 0..np {
            let ui = &u.data()[(b * np + i) * d..][..d];
            for j in 0..nc {
                let gp = &g_pred.data()[((b * np + i) * nc + j) * o..][..o];
                for k in 0..d {
                    let base = ((i * nc + j) * d + k) * o;
                    let wrow = &w.data()[base..base + o];
                    let mut acc = T::zero();
                    for ((gw, &wv), &gv) in g_w.data_mut()[base..base + o].iter_mut().zip(wrow).zip(gp) {
                        *gw += ui[k] * gv;
                        acc += wv * gv;
                    }
                    g_u.data_mut()[(b * np + i) * d + k] += acc;
                }
            }
        }
    }
    let g_raw = squash_last_axis_backward(&g_u, &cache.primary_raw)?;
    let g_a3 = g_raw.reshape(&[nb, cfg.primary_channels(), 1, 1])?;
    let g_bn3 = batchnorm_backward(&g_a3, &cache.primary_bn, &model.primary_bn)?;
    let g_c3 = conv2d_backward(&g_bn3.x, &cache.h2, &model.primary.weight, &model.primary.spec)?;
    let g_a2 = relu_backward(&g_c3.input, &cache.a2)?;
    let g_bn2 = batchnorm_backward(&g_a2, &cache.bn2, &model.bn2)?;
    let g_c2 = conv2d_backward(&g_bn2.x, &cache.h1, &model.conv2.weight, &model.conv2.spec)?;
    let g_a1 = relu_backward(&g_c2.input, &cache.a1)?;
    let g_bn1 = batchnorm_backward(&g_a1, &cache.bn1, &model.bn1)?;
    let g_c1 = conv2d_backward(&g_bn1.x, &cache.input, &model.conv1.weight, &model.conv1.spec)?;

    let mut grads = vec![
        g_c1.weights,
        g_c1.bias,
        g_bn1.gamma,
        g_bn1.beta,
        g_c2.weights,
        g_c2.bias,
        g_bn2.gamma,
        g_bn2.beta,
        g_c3.weights,
        g_c3.bias,
        g_bn3.gamma,
        g_bn3.beta,
        g_w,
    ];
    for (gw, gb) in dense_grads {
        grads.push(gw);
        grads.push(gb);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::count_parameters;

    fn gray_batch(nb: usize, n: usize, offset: f32) -> Tensor<f32> {
        Tensor::from_fn(&[nb, 1, n, n], |i| (i as f32 * 0.37 + offset).sin() * 0.5 + 0.5)
    }

    #[test]
    fn same_seed_same_model() {
        let cfg = ColorCapsNetConfig::default();
        let a = build_model(&cfg, 42, None).unwrap();
        let b = build_model(&cfg, 42, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_model(&cfg, 43, None).unwrap());
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for cfg in [ColorCapsNetConfig::default(), ColorCapsNetConfig::reduced()] {
            let m = build_model(&cfg, 1, None).unwrap();
            assert_eq!(m.parameter_count(), count_parameters(&cfg).total);
        }
    }

    #[test]
    fn forward_shapes_and_range() {
        let m = build_model(&ColorCapsNetConfig::reduced(), 3, None).unwrap();
        let out = forward(&m, &gray_batch(2, 9, 0.0), Mode::Train).unwrap();
        assert_eq!(out.lab.shape(), &[2, 3, 9, 9]);
        assert!(out.lab.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(out.caps.activities.shape(), &[2, 6, 16]);
        assert!(out.caps.lengths().data().iter().all(|&l| l < 1.0));
    }

    #[test]
    fn rejects_out_of_range_input() {
        let m = build_model(&ColorCapsNetConfig::reduced(), 3, None).unwrap();
        let mut x = gray_batch(1, 9, 0.0);
        x.data_mut()[5] = 1.5;
        assert!(matches!(forward(&m, &x, Mode::Infer), Err(ModelError::Domain(_))));
        let wrong = Tensor::<f32>::zeros(&[1, 1, 8, 8]);
        assert!(matches!(forward(&m, &wrong, Mode::Infer), Err(ModelError::Tensor(_))));
    }

    #[test]
    fn infer_mode_is_batch_independent() {
        let m = build_model(&ColorCapsNetConfig::default(), 5, None).unwrap();
        let batch = gray_batch(3, 9, 1.0);
        let all = forward(&m, &batch, Mode::Infer).unwrap().lab;
        for b in 0..3 {
            let single = Tensor::new(vec![1, 1, 9, 9], batch.data()[b * 81..(b + 1) * 81].to_vec()).unwrap();
            let one = forward(&m, &single, Mode::Infer).unwrap().lab;
            assert_eq!(one.data(), &all.data()[b * 243..(b + 1) * 243]);
        }
        let twin = Tensor::new(
            vec![2, 1, 9, 9],
            [&batch.data()[..81], &batch.data()[..81]].concat(),
        )
        .unwrap();
        let out = forward(&m, &twin, Mode::Infer).unwrap().lab;
        assert_eq!(out.data()[..243], out.data()[243..]);
    }

    #[test]
    fn larger_patches_are_supported() {
        let cfg = ColorCapsNetConfig {
            patch_size: 11,
            ..ColorCapsNetConfig::reduced()
        };
        let m = build_model(&cfg, 2, None).unwrap();
        let out = forward(&m, &gray_batch(2, 11, 0.3), Mode::Train).unwrap();
        assert_eq!(out.lab.shape(), &[2, 3, 11, 11]);
    }

    #[test]
    fn slot_lookup_covers_every_name() {
        let mut m = build_model(&ColorCapsNetConfig::reduced(), 0, None).unwrap();
        let names: Vec<String> = m.parameters().into_iter().chain(m.buffers()).map(|(n, _)| n).collect();
        for n in &names {
            assert!(m.slot_mut(n).is_some(), "{n}");
        }
        assert!(m.slot_mut("decoder.9.weight").is_none());
        assert!(m.slot_mut("bn1.bogus").is_none());
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let m = build_model(&ColorCapsNetConfig::reduced(), 9, None).unwrap();
        let back = ModelParams::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
    }
}
