use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the stacked spatial-temporal network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub num_nodes: usize,
    pub t_in: usize,
    pub horizon: usize,
    pub features_in: usize,
    pub features_out: usize,
    pub kernel_size: usize,
    /// One dilation per spatial-temporal layer.
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub end_channels: usize,
}

impl BackboneConfig {
    /// Eight layers, kernel 2, dilations 1,2,…, channels 32/256/512, one hour in and out.
    pub fn new(num_nodes: usize) -> Self {
        BackboneConfig {
            num_nodes,
            t_in: 12,
            horizon: 12,
            features_in: 1,
            features_out: 1,
            kernel_size: 2,
            dilations: vec![1, 2, 1, 2, 1, 2, 1, 2],
            residual_channels: 32,
            skip_channels: 256,
            end_channels: 512,
        }
    }

    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    /// Input steps seen by the last layer's final output.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations.iter().map(|d| d * (self.kernel_size - 1)).sum::<usize>()
    }

    /// Input length after left zero-padding to the receptive field.
    pub fn padded_len(&self) -> usize {
        self.t_in.max(self.receptive_field())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_nodes", self.num_nodes),
            ("t_in", self.t_in),
            ("horizon", self.horizon),
            ("features_in", self.features_in),
            ("features_out", self.features_out),
            ("kernel_size", self.kernel_size),
            ("residual_channels", self.residual_channels),
            ("skip_channels", self.skip_channels),
            ("end_channels", self.end_channels),
            ("layers", self.layers()),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        if self.receptive_field() < self.t_in {
            return Err(Error::Config(format!(
                "receptive field {} is shorter than t_in {}",
                self.receptive_field(),
                self.t_in
            )));
        }
        Ok(())
    }
}

/// Closed-form count of learnable parameters, including the N×N learnable adjacency.
pub fn count_parameters(c: &BackboneConfig) -> usize {
    count_backbone_weights(c) + c.num_nodes * c.num_nodes
}

/// Closed-form count excluding any graph parameters.
pub fn count_backbone_weights(c: &BackboneConfig) -> usize {
    let (r, s, e, k) = (c.residual_channels, c.skip_channels, c.end_channels, c.kernel_size);
    let out = c.horizon * c.features_out;
    let start = c.features_in * r + r;
    let per_layer = 2 * (k * r * r + r) + (r * s + s) + (r * r + r);
    let end = (s * e + e) + (e * out + out);
    start + c.layers() * per_layer + end
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_receptive_field_covers_an_hour() {
        let c = BackboneConfig::new(170);
        assert_eq!(c.receptive_field(), 13);
        c.validate().unwrap();
    }

    #[test]
    fn minimal_config_hand_count() {
        let c = BackboneConfig {
            num_nodes: 3,
            t_in: 1,
            horizon: 1,
            features_in: 1,
            features_out: 1,
            kernel_size: 1,
            dilations: vec![1],
            residual_channels: 4,
            skip_channels: 4,
            end_channels: 4,
        };
        // start 4+4, tcn 2·(16+4), skip 16+4, gcn 16+4, end 16+4 and 4+1, phi 9
        assert_eq!(count_parameters(&c), 8 + 40 + 20 + 20 + 20 + 5 + 9);
    }

    #[test]
    fn more_channels_more_parameters() {
        let c = BackboneConfig::new(10);
        let mut d = c.clone();
        d.residual_channels *= 2;
        assert!(count_parameters(&d) > count_parameters(&c));
    }

    #[test]
    fn short_receptive_field_rejected() {
        let mut c = BackboneConfig::new(5);
        c.dilations = vec![1, 1];
        assert!(c.validate().is_err());
        c.dilations = vec![];
        assert!(c.validate().is_err());
    }
}
