use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use colorcaps_core::capsnet::{ColorCapsNetConfig, LossKind};
use colorcaps_core::ops::AdamHyper;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Overlays the flags given on the command line onto a JSON config file.
///
/// Keys in the file use the flag names with `_` for `-`. Unset options,
/// switched-off booleans and empty lists on the command line leave the
/// file's value in place.
pub fn layered<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(cli)?)?);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut merged: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Value::Object(file) = &mut merged else {
        anyhow::bail!("config {} must be a JSON object", path.display());
    };
    let Value::Object(flags) = serde_json::to_value(cli)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (k, v) in flags {
        let unset = match &v {
            Value::Null | Value::Bool(false) => true,
            Value::Array(a) => a.is_empty(),
            _ => false,
        };
        if !unset || !file.contains_key(&k) {
            file.insert(k, v);
        }
    }
    serde_json::from_value(merged).with_context(|| format!("config {}", path.display()))
}

/// Everything a training run depends on; echoed into every checkpoint it writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ColorCapsNetConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamHyper,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    pub vgg: Option<PathBuf>,
}

/// Training flags, all optional so that a config file can supply them.
#[derive(Clone, Debug, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// JSON file with any of these flags; command-line values win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory for checkpoints and `loss.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// CCPS file with `vgg.conv1_1.*` / `vgg.conv1_2.*` tensors for the front convolutions.
    #[arg(long)]
    pub vgg: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Defaults to the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Defaults to the manifest's `n`.
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub routing_iterations: Option<usize>,
    #[arg(long)]
    pub num_output_capsules: Option<usize>,
    #[arg(long)]
    pub output_capsule_dim: Option<usize>,
    #[arg(long)]
    pub primary_capsule_count: Option<usize>,
    #[arg(long)]
    pub primary_capsule_dim: Option<usize>,
    #[arg(long)]
    pub conv_channels: Option<usize>,
    /// Comma-separated hidden widths of the decoder, e.g. `512,1024`.
    #[arg(long, value_delimiter = ',')]
    pub decoder_hidden: Vec<usize>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub margin_lambda: Option<f64>,
}

impl TrainArgs {
    /// Fills unset values from the defaults and the manifest's `n` and `seed`.
    pub fn resolve(&self, manifest_n: usize, manifest_seed: u64) -> anyhow::Result<RunConfig> {
        let d = ColorCapsNetConfig::default();
        let h = AdamHyper::default();
        let model = ColorCapsNetConfig {
            patch_size: self.patch_size.unwrap_or(manifest_n),
            routing_iterations: self.routing_iterations.unwrap_or(d.routing_iterations),
            num_output_capsules: self.num_output_capsules.unwrap_or(d.num_output_capsules),
            output_capsule_dim: self.output_capsule_dim.unwrap_or(d.output_capsule_dim),
            primary_capsule_count: self.primary_capsule_count.unwrap_or(d.primary_capsule_count),
            primary_capsule_dim: self.primary_capsule_dim.unwrap_or(d.primary_capsule_dim),
            conv_channels: self.conv_channels.unwrap_or(d.conv_channels),
            decoder_hidden: if self.decoder_hidden.is_empty() {
                d.decoder_hidden
            } else {
                self.decoder_hidden.clone()
            },
            loss: self.loss.unwrap_or(d.loss),
            margin_lambda: self.margin_lambda.unwrap_or(d.margin_lambda),
        };
        let batch_size = self.batch_size.unwrap_or(64);
        anyhow::ensure!(batch_size > 0, "batch size must be positive");
        Ok(RunConfig {
            model,
            epochs: self.epochs.unwrap_or(50),
            batch_size,
            seed: self.seed.unwrap_or(manifest_seed),
            adam: AdamHyper {
                lr: self.lr.unwrap_or(h.lr),
                beta1: self.beta1.unwrap_or(h.beta1),
                beta2: self.beta2.unwrap_or(h.beta2),
                eps: self.eps.unwrap_or(h.eps),
            },
            manifest: self.manifest.clone().unwrap_or_default(),
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("run")),
            resume: self.resume.clone(),
            vgg: self.vgg.clone(),
        })
    }
}
