use alloc::format;
use alloc::vec::Vec;

use crate::axis::AxisPair;
use crate::beamsim::default_channels;
use crate::error::{Error, Result};
use crate::params::N_PARAMS;

/// Pointwise nonlinearity applied after a layer's affine part.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
    Softplus,
}

impl Activation {
    pub const LEAKY: Activation = Activation::LeakyRelu { slope: 0.01 };

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Softplus => crate::math::softplus(z),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Softplus => crate::math::sigmoid(z),
        }
    }
}

/// Architecture of the encoder-decoder.
///
/// Encoder: `input_size²` image → stride-2 3x3 convolutions (`conv_filters`)
/// → flatten → concatenate the machine parameters → dense `encoder_dense`
/// → linear latent of `latent_dim`. Decoder: latent → dense `decoder_dense`
/// → dense to `reshape_size² x reshape_channels` → stride-2 transpose
/// convolutions (`tconv_filters`, the last emitting one channel per entry of
/// `channels`) → softplus scaled by `output_scale`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NetworkSpec {
    pub input_size: usize,
    pub n_params: usize,
    pub conv_filters: Vec<usize>,
    pub encoder_dense: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_dense: Vec<usize>,
    pub reshape_size: usize,
    pub reshape_channels: usize,
    /// Hidden transpose-convolution widths; a final layer to `channels.len()` is implied.
    pub tconv_filters: Vec<usize>,
    pub channels: Vec<AxisPair>,
    pub hidden_activation: Activation,
    /// Multiplies the softplus output so an untrained network predicts
    /// roughly uniform unit-mass images.
    pub output_scale: f64,
    /// Multiplies input pixels so a unit-mass image has mean pixel ~1.
    pub input_scale: f64,
    /// `(min, max)` window per axis, attached to the decoded images.
    pub axis_extents: [(f64, f64); 6],
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            input_size: 16,
            n_params: N_PARAMS,
            conv_filters: alloc::vec![8, 16],
            encoder_dense: alloc::vec![64],
            latent_dim: 8,
            decoder_dense: alloc::vec![64],
            reshape_size: 8,
            reshape_channels: 4,
            tconv_filters: alloc::vec![8],
            channels: default_channels(),
            hidden_activation: Activation::LEAKY,
            output_scale: 1.0 / (32.0 * 32.0),
            input_scale: 16.0 * 16.0,
            axis_extents: [(-6.0, 6.0); 6],
        }
    }
}

/// Shape of one trainable layer and where its parameters live in the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv { in_c: usize, out_c: usize, in_h: usize, in_w: usize, stride: usize },
    Dense { n_in: usize, n_out: usize },
    TConv { in_c: usize, out_c: usize, in_h: usize, in_w: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub activation: Activation,
    pub w_offset: usize,
    pub w_len: usize,
    pub b_offset: usize,
    pub b_len: usize,
}

impl LayerShape {
    pub fn in_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { in_c, in_h, in_w, .. } | LayerKind::TConv { in_c, in_h, in_w, .. } => {
                in_c * in_h * in_w
            }
            LayerKind::Dense { n_in, .. } => n_in,
        }
    }

    pub fn out_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { out_c, in_h, in_w, stride, .. } => out_c * in_h.div_ceil(stride) * in_w.div_ceil(stride),
            LayerKind::TConv { out_c, in_h, in_w, .. } => out_c * 4 * in_h * in_w,
            LayerKind::Dense { n_out, .. } => n_out,
        }
    }

    /// Inputs feeding one output unit, for initialisation.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { in_c, .. } => in_c * 9,
            // a stride-2 transpose conv reaches each output through 9/4 taps on average
            LayerKind::TConv { in_c, .. } => (in_c * 9).div_ceil(4),
            LayerKind::Dense { n_in, .. } => n_in,
        }
    }
}

/// Layer sequence of both halves with parameter offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub encoder_convs: Vec<LayerShape>,
    pub encoder_dense: Vec<LayerShape>,
    pub decoder_dense: Vec<LayerShape>,
    pub decoder_tconvs: Vec<LayerShape>,
    pub n_weights: usize,
}

impl LayerPlan {
    pub fn layers(&self) -> impl Iterator<Item = &LayerShape> {
        self.encoder_convs
            .iter()
            .chain(&self.encoder_dense)
            .chain(&self.decoder_dense)
            .chain(&self.decoder_tconvs)
    }

    /// Length of the flattened conv output before the parameters are appended.
    pub fn conv_out_len(&self, spec: &NetworkSpec) -> usize {
        self.encoder_convs.last().map_or(spec.input_size * spec.input_size, |l| l.out_len())
    }
}

impl NetworkSpec {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Side of each output image after the transpose convolutions.
    pub fn output_size(&self) -> usize {
        self.reshape_size << (self.tconv_filters.len() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.input_size == 0 || self.latent_dim == 0 || self.reshape_size == 0 || self.reshape_channels == 0 {
            return bad(format!("network dimensions must be positive: {self:?}"));
        }
        if self.channels.is_empty() {
            return bad("network needs at least one output channel".into());
        }
        if self.conv_filters.iter().chain(&self.encoder_dense).chain(&self.decoder_dense).chain(&self.tconv_filters).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return bad(format!("output scale {} must be positive", self.output_scale));
        }
        if self.axis_extents.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return bad(format!("axis windows must be finite and non-empty: {:?}", self.axis_extents));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad(format!("input scale {} must be positive", self.input_scale));
        }
        let mut sorted = self.channels.clone();
        sorted.sort_by_key(|p| p.ordinal());
        sorted.dedup();
        if sorted != self.channels {
            return bad("channels must be distinct and in canonical order".into());
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<LayerPlan> {
        self.validate()?;
        let mut offset = 0;
        let mut push = |kind: LayerKind, activation: Activation| {
            let (w_len, b_len) = match kind {
                LayerKind::Conv { in_c, out_c, .. } | LayerKind::TConv { in_c, out_c, .. } => (in_c * out_c * 9, out_c),
                LayerKind::Dense { n_in, n_out } => (n_in * n_out, n_out),
            };
            let shape = LayerShape { kind, activation, w_offset: offset, w_len, b_offset: offset + w_len, b_len };
            offset += w_len + b_len;
            shape
        };
        let hidden = self.hidden_activation;

        let mut encoder_convs = Vec::new();
        let (mut c, mut h) = (1, self.input_size);
        for &f in &self.conv_filters {
            encoder_convs.push(push(LayerKind::Conv { in_c: c, out_c: f, in_h: h, in_w: h, stride: 2 }, hidden));
            c = f;
            h = h.div_ceil(2);
        }
        let mut encoder_dense = Vec::new();
        let mut n = c * h * h + self.n_params;
        for &width in &self.encoder_dense {
            encoder_dense.push(push(LayerKind::Dense { n_in: n, n_out: width }, hidden));
            n = width;
        }
        encoder_dense.push(push(LayerKind::Dense { n_in: n, n_out: self.latent_dim }, Activation::Identity));

        let mut decoder_dense = Vec::new();
        let mut n = self.latent_dim;
        for &width in &self.decoder_dense {
            decoder_dense.push(push(LayerKind::Dense { n_in: n, n_out: width }, hidden));
            n = width;
        }
        let reshaped = self.reshape_channels * self.reshape_size * self.reshape_size;
        decoder_dense.push(push(LayerKind::Dense { n_in: n, n_out: reshaped }, hidden));

        let mut decoder_tconvs = Vec::new();
        let (mut c, mut h) = (self.reshape_channels, self.reshape_size);
        let widths = self.tconv_filters.iter().map(|&f| (f, hidden)).chain(core::iter::once((self.n_channels(), Activation::Softplus)));
        for (f, act) in widths {
            decoder_tconvs.push(push(LayerKind::TConv { in_c: c, out_c: f, in_h: h, in_w: h }, act));
            c = f;
            h *= 2;
        }
        Ok(LayerPlan { encoder_convs, encoder_dense, decoder_dense, decoder_tconvs, n_weights: offset })
    }
}
