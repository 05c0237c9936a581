use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::DecodeMode;
use crate::volume::{Dims, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    #[default]
    MultiView,
    /// Fusion is skipped and the view encoders are never evaluated.
    VolumeOnly,
}

/// Required reduction of the slice axis between input and tokens.
pub const SLICE_REDUCTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocNetConfig {
    /// Network input grid (D, H, W); volumes are resampled to it.
    pub input_dims: Dims,
    /// Output channels of each residual stage. The stem uses the first.
    pub channels_3d: Vec<usize>,
    /// Strides (d, h, w) of the stem followed by one entry per stage.
    pub stride_plan: Vec<[usize; 3]>,
    pub blocks_per_stage: usize,
    /// Output channels of the four stride-2 conv layers of each view encoder.
    pub view_channels: [usize; 4],
    pub d_k: usize,
    /// Use the attention inputs directly instead of learned query/key maps.
    /// Needs `view_channels[3] == channels_3d.last() == d_k`.
    pub raw_qkv: bool,
    pub heatmap_len: usize,
    pub sigma: f64,
    pub view_mode: ViewMode,
    pub decode: DecodeMode,
    pub window: WindowSpec,
    pub seed: u64,
}

impl Default for LocNetConfig {
    fn default() -> Self {
        LocNetConfig {
            input_dims: Dims::new(128, 32, 32),
            channels_3d: vec![8, 16, 32, 64],
            stride_plan: vec![[2, 2, 2], [2, 2, 2], [2, 2, 2], [2, 1, 1], [1, 2, 2]],
            blocks_per_stage: 2,
            view_channels: [8, 16, 32, 32],
            d_k: 32,
            raw_qkv: false,
            heatmap_len: 128,
            sigma: 2.0,
            view_mode: ViewMode::MultiView,
            decode: DecodeMode::Argmax,
            window: WindowSpec::default(),
            seed: 0,
        }
    }
}

fn conv_out(n: usize, stride: usize) -> usize {
    // kernel 3, padding 1
    (n + 2 - 3) / stride + 1
}

impl LocNetConfig {
    /// Smallest useful configuration: 16 x 8 x 8 input, one token.
    pub fn tiny() -> Self {
        LocNetConfig {
            input_dims: Dims::new(16, 8, 8),
            channels_3d: vec![2, 3],
            stride_plan: vec![[2, 2, 2], [2, 1, 1], [4, 2, 2]],
            blocks_per_stage: 1,
            view_channels: [2, 2, 3, 3],
            d_k: 4,
            heatmap_len: 16,
            ..LocNetConfig::default()
        }
    }

    pub fn stages(&self) -> usize {
        self.channels_3d.len()
    }

    /// Spatial extent after the backbone: (D', H', W').
    pub fn feature_dims(&self) -> [usize; 3] {
        let mut d = self.input_dims.as_array();
        for s in &self.stride_plan {
            for a in 0..3 {
                d[a] = conv_out(d[a], s[a]);
            }
        }
        d
    }

    pub fn tokens(&self) -> usize {
        self.feature_dims()[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.channels_3d.last().unwrap_or(&0)
    }

    /// Extent of a view encoder output along (slice axis, in-plane axis).
    pub fn view_feature_dims(&self, in_plane: usize) -> (usize, usize) {
        let (mut a, mut b) = (self.input_dims.depth, in_plane);
        for _ in 0..4 {
            a = conv_out(a, 2);
            b = conv_out(b, 2);
        }
        (a, b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = self.input_dims;
        if d.is_empty() {
            return bad(format!("input dims {:?} are empty", d.as_array()));
        }
        if self.channels_3d.is_empty() || self.channels_3d.contains(&0) {
            return bad(format!("channels_3d {:?} must be nonempty and positive", self.channels_3d));
        }
        if self.stride_plan.len() != self.stages() + 1 {
            return bad(format!(
                "stride_plan needs {} entries (stem + {} stages), got {}",
                self.stages() + 1,
                self.stages(),
                self.stride_plan.len()
            ));
        }
        if self.stride_plan.iter().flatten().any(|&s| s == 0) {
            return bad("strides must be positive".into());
        }
        let slice_product: usize = self.stride_plan.iter().map(|s| s[0]).product();
        if slice_product != SLICE_REDUCTION {
            return bad(format!(
                "stride_plan reduces the slice axis by {slice_product}, expected {SLICE_REDUCTION}"
            ));
        }
        if !d.depth.is_multiple_of(SLICE_REDUCTION) {
            return bad(format!("input depth {} is not a multiple of {SLICE_REDUCTION}", d.depth));
        }
        if self.tokens() != d.depth / SLICE_REDUCTION {
            return bad(format!("backbone yields {} tokens, expected {}", self.tokens(), d.depth / SLICE_REDUCTION));
        }
        if self.blocks_per_stage == 0 {
            return bad("blocks_per_stage must be >= 1".into());
        }
        if self.view_channels.contains(&0) {
            return bad("view_channels must be positive".into());
        }
        for (name, n) in [("coronal", d.cols), ("sagittal", d.rows)] {
            let (t, _) = self.view_feature_dims(n);
            if t != self.tokens() {
                return bad(format!("{name} encoder yields {t} tokens, backbone {}", self.tokens()));
            }
        }
        if self.d_k == 0 {
            return bad("d_k must be positive".into());
        }
        if self.raw_qkv && !(self.view_channels[3] == self.feature_dim() && self.feature_dim() == self.d_k) {
            return bad(format!(
                "raw_qkv needs view channels ({}) == volume channels ({}) == d_k ({})",
                self.view_channels[3],
                self.feature_dim(),
                self.d_k
            ));
        }
        if self.heatmap_len < 2 {
            return bad(format!("heatmap_len must be >= 2, got {}", self.heatmap_len));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = LocNetConfig::default();
        c.validate().unwrap();
        assert_eq!(c.feature_dims(), [8, 2, 2]);
        assert_eq!(c.view_feature_dims(32), (8, 2));
        LocNetConfig::tiny().validate().unwrap();
        assert_eq!(LocNetConfig::tiny().tokens(), 1);
    }

    #[test]
    fn full_scale_is_valid() {
        let c = LocNetConfig {
            input_dims: Dims::new(512, 64, 64),
            channels_3d: vec![64, 128, 256, 512],
            view_channels: [64, 128, 256, 512],
            heatmap_len: 512,
            d_k: 64,
            ..LocNetConfig::default()
        };
        c.validate().unwrap();
        assert_eq!(c.tokens(), 32);
    }

    #[test]
    fn stride_product_checked() {
        let mut c = LocNetConfig::default();
        c.stride_plan[3] = [1, 1, 1];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = LocNetConfig::default();
        c.stride_plan.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn raw_qkv_needs_matching_dims() {
        let mut c = LocNetConfig {
            raw_qkv: true,
            ..LocNetConfig::default()
        };
        assert!(c.validate().is_err());
        c.view_channels[3] = 64;
        c.d_k = 64;
        c.validate().unwrap();
    }

    #[test]
    fn serde_round_trip() {
        let c = LocNetConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<LocNetConfig>(&s).unwrap(), c);
        let partial: LocNetConfig = serde_json::from_str(r#"{"heatmap_len": 64}"#).unwrap();
        assert_eq!(partial.heatmap_len, 64);
    }
}
