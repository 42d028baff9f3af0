use crate::ops::ConvSpec;

use super::ColorCapsNetConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterBreakdown {
    /// (layer name, trainable parameter count) in forward order.
    pub layers: Vec<(String, usize)>,
    pub total: usize,
}

impl ParameterBreakdown {
    pub fn layer(&self, name: &str) -> Option<usize> {
        self.layers.iter().find(|(n, _)| n == name).map(|&(_, c)| c)
    }
}

/// Closed-form trainable parameter count for a configuration.
pub fn count_parameters(config: &ColorCapsNetConfig) -> ParameterBreakdown {
    let f = config.conv_channels;
    let pc = config.primary_channels();
    let mut layers = vec![
        ("conv1".to_string(), ConvSpec::new(1, f, 3, 1, 1).parameter_count()),
        ("bn1".to_string(), 2 * f),
        ("conv2".to_string(), ConvSpec::new(f, f, 3, 1, 1).parameter_count()),
        ("bn2".to_string(), 2 * f),
        (
            "primary".to_string(),
            ConvSpec::new(f, pc, config.patch_size, 1, 0).parameter_count(),
        ),
        ("primary_bn".to_string(), 2 * pc),
        (
            "routing".to_string(),
            config.primary_capsule_count
                * config.num_output_capsules
                * config.primary_capsule_dim
                * config.output_capsule_dim,
        ),
    ];
    for (i, w) in config.decoder_widths().windows(2).enumerate() {
        layers.push((format!("decoder.{i}"), w[0] * w[1] + w[1]));
    }
    let total = layers.iter().map(|(_, c)| c).sum();
    ParameterBreakdown { layers, total }
}
