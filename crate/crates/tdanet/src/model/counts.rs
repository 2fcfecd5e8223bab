use serde::{Deserialize, Serialize};

use super::{Fusion, GaInput, ModelConfig};
use crate::Result;

/// Analytic parameter count: a pure function of the configuration, summed in
/// the same order the store registers tensors. No model is constructed.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    let n = cfg.n_channels as u64;
    let l = cfg.win_samples() as u64;
    let s = cfg.s_levels as u64;
    let c = cfg.c_speakers as u64;
    let d = cfg.attn_dim() as u64;
    let gln = |ch: u64| 2 * ch;

    let mut total = 0u64;
    total += n * l; // audio encoder (no bias)
    total += n * (n / 2) + gln(n); // grouped pointwise bottleneck + GLN
    total += s * (n * 5 + n + gln(n) + 1); // down-sampling: DW conv + bias + GLN + PReLU

    if cfg.use_ga {
        if cfg.ga_input == GaInput::FusedG && cfg.fusion == Fusion::Concat {
            total += n * ((s + 1) * n); // concat projection (no bias)
        }
        if cfg.use_transformer_layer && cfg.use_mhsa {
            total += 3 * (d * n + d); // Q, K, V projections with bias
            total += n * d + n; // output projection with bias
            total += gln(n); // post-attention GLN
        }
        if cfg.use_transformer_layer && cfg.use_ffn {
            let h = 2 * n;
            total += n * h + gln(h); // expand + GLN
            total += h * 5 + h + gln(h); // depthwise (bias) + GLN
            total += h * n + gln(n); // compress + GLN
        }
    }
    if cfg.use_la {
        total += s * 2 * (n * 5 + n + gln(n)); // gate and bias stacks per level
    }
    total += c * (n * n + n); // mask head: C pointwise convs with bias
    total += n * l; // audio decoder (shared across speakers, no bias)
    total
}

/// Multiply-accumulate counts for one forward pass over `seconds` of audio.
/// Convolutions and attention matmuls are counted (one MAC per multiply);
/// normalizations, activations, pooling, interpolation, and elementwise
/// gates are excluded, matching common op-counter conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacsBreakdown {
    pub audio_encoder: u64,
    pub audio_decoder: u64,
    pub mask_head: u64,
    /// One pass through the shared block.
    pub per_block: u64,
    pub unfolds: u64,
    pub total: u64,
}

pub fn count_macs(cfg: &ModelConfig, seconds: f64) -> Result<MacsBreakdown> {
    cfg.validate()?;
    let t = (cfg.sample_rate as f64 * seconds).round() as usize;
    let plan = cfg.pad_plan(t)?;
    let lens = cfg.ladder_lengths(plan.frames);

    let n = cfg.n_channels as u64;
    let l = cfg.win_samples() as u64;
    let c = cfg.c_speakers as u64;
    let d = cfg.attn_dim() as u64;
    let heads = cfg.heads as u64;
    let dh = d / heads;
    let frames = plan.frames as u64;
    let tg = *lens.last().unwrap() as u64;

    let audio_encoder = frames * n * l;
    let audio_decoder = c * frames * n * l;
    let mask_head = c * frames * n * n;

    let mut per_block = frames * n * (n / 2); // grouped bottleneck
    per_block += lens[1..].iter().map(|&t| t as u64 * n * 5).sum::<u64>(); // DW downsampling

    if cfg.use_ga {
        if cfg.ga_input == GaInput::FusedG && cfg.fusion == Fusion::Concat {
            per_block += tg * n * ((cfg.s_levels as u64 + 1) * n);
        }
        if cfg.use_transformer_layer && cfg.use_mhsa {
            per_block += 3 * tg * d * n; // Q, K, V projections
            per_block += 2 * heads * tg * tg * dh; // scores and attention-value products
            per_block += tg * n * d; // output projection
        }
        if cfg.use_transformer_layer && cfg.use_ffn {
            let h = 2 * n;
            per_block += tg * h * n + tg * h * 5 + tg * n * h;
        }
    }
    if cfg.use_la {
        per_block += lens[..cfg.s_levels]
            .iter()
            .map(|&t| 2 * t as u64 * n * 5)
            .sum::<u64>();
    }

    let unfolds = cfg.b_unfolds as u64;
    let total = audio_encoder + audio_decoder + mask_head + unfolds * per_block;
    Ok(MacsBreakdown {
        audio_encoder,
        audio_decoder,
        mask_head,
        per_block,
        unfolds,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_off(cfg: &ModelConfig) -> ModelConfig {
        ModelConfig {
            use_ga: false,
            use_la: false,
            ..cfg.clone()
        }
    }

    #[test]
    fn default_params_near_reported() {
        let cfg = ModelConfig::default();
        let m = count_params(&cfg) as f64 / 1e6;
        assert!((1.955..=2.645).contains(&m), "default params {m} M");
        let base = count_params(&base_off(&cfg)) as f64 / 1e6;
        assert!((0.595..=0.805).contains(&base), "control params {base} M");
    }

    #[test]
    fn la_layers_are_cheap() {
        let cfg = ModelConfig::default();
        let la_only = count_params(&ModelConfig {
            use_ga: false,
            ..cfg.clone()
        });
        let base = count_params(&base_off(&cfg));
        let delta = (la_only - base) as f64 / 1e6;
        assert!(delta <= 0.05, "LA adds {delta} M");
    }

    #[test]
    fn macs_scale_linearly_in_unfolds() {
        let cfg = ModelConfig::default();
        let one = count_macs(&cfg, 1.0).unwrap();
        let sixteen = count_macs(
            &ModelConfig {
                b_unfolds: 16,
                ..cfg.clone()
            },
            1.0,
        )
        .unwrap();
        assert_eq!(one.per_block, sixteen.per_block);
        assert_eq!(
            sixteen.total - sixteen.unfolds * sixteen.per_block,
            one.total - one.unfolds * one.per_block,
            "fixed portion must not depend on B"
        );
    }

    #[test]
    fn counts_are_pure_functions() {
        let cfg = ModelConfig::default();
        assert_eq!(count_params(&cfg), count_params(&cfg.clone()));
        assert_eq!(
            count_macs(&cfg, 1.0).unwrap(),
            count_macs(&cfg, 1.0).unwrap()
        );
    }

    #[test]
    fn ga_strictly_increases_params() {
        let cfg = ModelConfig::default();
        assert!(count_params(&cfg) > count_params(&base_off(&cfg)));
    }
}
