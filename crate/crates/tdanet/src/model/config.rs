use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the global-attention module forms its input from the feature ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaInput {
    /// Pool every ladder level to the coarsest resolution and fuse.
    FusedG,
    /// Use the top (coarsest) feature directly.
    TopF,
}

/// Fusion strategy for the pooled multi-scale features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Sum,
    Concat,
}

impl std::str::FromStr for GaInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused_g" => Ok(GaInput::FusedG),
            "top_f" => Ok(GaInput::TopF),
            other => Err(Error::Config(format!(
                "unknown ga_input `{other}` (expected fused_g or top_f)"
            ))),
        }
    }
}

impl std::str::FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Fusion::Sum),
            "concat" => Ok(Fusion::Concat),
            other => Err(Error::Config(format!(
                "unknown fusion `{other}` (expected sum or concat)"
            ))),
        }
    }
}

/// Every architecture hyperparameter, including the ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate: u32,
    /// Audio encoder/decoder window in milliseconds; the stride is a quarter
    /// of the window.
    pub win_ms: f64,
    /// Channel count N of the embedding and every internal feature map.
    pub n_channels: usize,
    /// Number of down-samplings S; the ladder has S+1 levels.
    pub s_levels: usize,
    /// Macro-level unfold count B (weight shared).
    pub b_unfolds: usize,
    pub heads: usize,
    /// Number of speakers C separated from the mixture.
    pub c_speakers: usize,
    pub dropout: f64,
    pub use_ga: bool,
    pub use_la: bool,
    pub use_transformer_layer: bool,
    pub use_mhsa: bool,
    pub use_ffn: bool,
    pub ga_input: GaInput,
    pub fusion: Fusion,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sample_rate: 16_000,
            win_ms: 4.0,
            n_channels: 512,
            s_levels: 4,
            b_unfolds: 16,
            heads: 8,
            c_speakers: 2,
            dropout: 0.1,
            use_ga: true,
            use_la: true,
            use_transformer_layer: true,
            use_mhsa: true,
            use_ffn: true,
            ga_input: GaInput::FusedG,
            fusion: Fusion::Sum,
        }
    }
}

/// Waveform padding plan: the frame count is rounded up to a multiple of
/// 2^S so every ladder level halves exactly, and the waveform is zero-padded
/// left/right to the length that produces exactly that many frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadPlan {
    /// Number of encoder frames T'.
    pub frames: usize,
    /// Waveform length after padding.
    pub padded_len: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ModelConfig {
    /// The large preset: 2 ms window, 0.5 ms stride. Parameter count is
    /// unchanged; only the temporal resolution grows.
    pub fn large() -> Self {
        ModelConfig {
            win_ms: 2.0,
            ..ModelConfig::default()
        }
    }

    /// Encoder kernel length L in samples.
    pub fn win_samples(&self) -> usize {
        (self.sample_rate as f64 * self.win_ms / 1000.0).round() as usize
    }

    /// Encoder hop in samples, floor(L/4).
    pub fn stride_samples(&self) -> usize {
        self.win_samples() / 4
    }

    /// Inner dimension of the attention projections (half the channel count,
    /// split across heads).
    pub fn attn_dim(&self) -> usize {
        self.n_channels / 2
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.win_samples();
        if l < 4 || !l.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "window of {} ms at {} Hz is {l} samples; must be a positive multiple of 4",
                self.win_ms, self.sample_rate
            )));
        }
        if self.n_channels == 0 || !self.n_channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_channels must be even and positive, got {}",
                self.n_channels
            )));
        }
        if self.s_levels == 0 {
            return Err(Error::Config("s_levels must be at least 1".into()));
        }
        if self.b_unfolds == 0 {
            return Err(Error::Config("b_unfolds must be at least 1".into()));
        }
        if self.c_speakers < 2 {
            return Err(Error::Config(format!(
                "c_speakers must be at least 2, got {}",
                self.c_speakers
            )));
        }
        if self.heads == 0 || !self.attn_dim().is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "attention dim {} must divide evenly across {} heads",
                self.attn_dim(),
                self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Padding plan for a waveform of `t` samples. The frame count is the
    /// smallest multiple of 2^S that covers the input under the encoder's
    /// shape formula.
    pub fn pad_plan(&self, t: usize) -> Result<PadPlan> {
        let l = self.win_samples();
        let stride = self.stride_samples();
        if t < l {
            return Err(Error::Input(format!(
                "waveform of {t} samples is shorter than one {l}-sample window"
            )));
        }
        let raw_frames = (t - l).div_ceil(stride) + 1;
        let align = 1usize << self.s_levels;
        let frames = raw_frames.div_ceil(align) * align;
        let padded_len = (frames - 1) * stride + l;
        let pad = padded_len - t;
        Ok(PadPlan {
            frames,
            padded_len,
            pad_left: pad / 2,
            pad_right: pad - pad / 2,
        })
    }

    /// Time lengths of the S+1 ladder levels for a given frame count.
    pub fn ladder_lengths(&self, frames: usize) -> Vec<usize> {
        (0..=self.s_levels).map(|i| frames >> i).collect()
    }
}
