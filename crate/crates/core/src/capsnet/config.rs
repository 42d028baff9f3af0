use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Margin,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "margin" => Ok(LossKind::Margin),
            other => Err(format!("unknown loss `{other}` (expected mse or margin)")),
        }
    }
}

/// Topology and loss settings of the colorizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorCapsNetConfig {
    pub patch_size: usize,
    pub routing_iterations: usize,
    pub num_output_capsules: usize,
    pub output_capsule_dim: usize,
    pub primary_capsule_count: usize,
    pub primary_capsule_dim: usize,
    /// Filters in each of the two 3×3 feature-detector convolutions.
    pub conv_channels: usize,
    pub decoder_hidden: Vec<usize>,
    pub loss: LossKind,
    pub margin_lambda: f64,
}

impl Default for ColorCapsNetConfig {
    fn default() -> Self {
        ColorCapsNetConfig {
            patch_size: 9,
            routing_iterations: 1,
            num_output_capsules: 6,
            output_capsule_dim: 16,
            primary_capsule_count: 32,
            primary_capsule_dim: 8,
            conv_channels: 64,
            decoder_hidden: vec![512, 1024],
            loss: LossKind::Mse,
            margin_lambda: 0.5,
        }
    }
}

impl ColorCapsNetConfig {
    /// The width-reduced variant used for end-to-end gradient checks.
    pub fn reduced() -> Self {
        ColorCapsNetConfig {
            conv_channels: 8,
            primary_capsule_count: 4,
            decoder_hidden: vec![16, 32],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.patch_size < 9 {
            return fail(format!("patch_size must be at least 9, got {}", self.patch_size));
        }
        if self.routing_iterations < 1 {
            return fail("routing_iterations must be at least 1".into());
        }
        if self.num_output_capsules < 1 {
            return fail("num_output_capsules must be at least 1".into());
        }
        let positive = [
            ("output_capsule_dim", self.output_capsule_dim),
            ("primary_capsule_count", self.primary_capsule_count),
            ("primary_capsule_dim", self.primary_capsule_dim),
            ("conv_channels", self.conv_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.decoder_hidden.contains(&0) {
            return fail("decoder_hidden widths must be positive".into());
        }
        if !(self.margin_lambda.is_finite() && self.margin_lambda >= 0.0) {
            return fail(format!("margin_lambda must be non-negative, got {}", self.margin_lambda));
        }
        Ok(())
    }

    pub fn primary_channels(&self) -> usize {
        self.primary_capsule_count * self.primary_capsule_dim
    }

    pub fn latent_width(&self) -> usize {
        self.num_output_capsules * self.output_capsule_dim
    }

    pub fn output_width(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    /// Decoder layer widths from the flattened capsules to the output pixels.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_width()];
        w.extend(&self.decoder_hidden);
        w.push(self.output_width());
        w
    }
}
