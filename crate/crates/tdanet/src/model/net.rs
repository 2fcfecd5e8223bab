use crate::layers::{ConvLayer, Ffn, ForwardCtx, Gln, Mhsa, PRelu};
use crate::numerics::{no_grad, ConvSpec, Scalar, Tensor};
use crate::{Error, Result};

use super::{derive_seed, Fusion, GaInput, ModelConfig, ParamStore};

struct DownLayer<T: Scalar> {
    conv: ConvLayer<T>,
    norm: Gln<T>,
    act: PRelu<T>,
}

struct GaModule<T: Scalar> {
    concat_proj: Option<ConvLayer<T>>,
    mhsa: Option<Mhsa<T>>,
    ffn: Option<Ffn<T>>,
}

struct LaLayer<T: Scalar> {
    gate_conv: ConvLayer<T>,
    gate_norm: Gln<T>,
    bias_conv: ConvLayer<T>,
    bias_norm: Gln<T>,
}

/// The assembled separation network. Construction is deterministic in the
/// seed; the same seed and config always produce the same parameters. A
/// constructed model is read-only during inference.
pub struct TdaNet<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    encoder: ConvLayer<T>,
    bottleneck_conv: ConvLayer<T>,
    bottleneck_norm: Gln<T>,
    downs: Vec<DownLayer<T>>,
    ga: Option<GaModule<T>>,
    la: Vec<LaLayer<T>>,
    mask_heads: Vec<ConvLayer<T>>,
    decoder_weight: Tensor<T>,
}

fn gln_params<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Gln<T> {
    let gain = store.constant(format!("{prefix}.gain"), &[channels, 1], 1.0);
    let bias = store.constant(format!("{prefix}.bias"), &[channels, 1], 0.0);
    Gln::new(gain, bias)
}

impl<T: Scalar> TdaNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new(derive_seed(seed, "init"));
        let n = config.n_channels;
        let l = config.win_samples();
        let d_attn = config.attn_dim();

        let encoder = ConvLayer {
            weight: p.conv_weight("audio_encoder.weight", n, 1, l),
            bias: None,
            spec: ConvSpec {
                stride: config.stride_samples(),
                ..ConvSpec::default()
            },
        };

        // Pointwise bottleneck (two groups keep its weight within the
        // block's parameter budget) followed by GLN; its output is the first
        // ladder level.
        let bottleneck_conv = ConvLayer {
            weight: p.conv_weight("bottleneck.conv.weight", n, n / 2, 1),
            bias: None,
            spec: ConvSpec {
                groups: 2,
                ..ConvSpec::default()
            },
        };
        let bottleneck_norm = gln_params(&mut p, "bottleneck.norm", n);

        // Dilated depthwise down-sampling: kernel 5, stride 2, dilation 2,
        // padding 4 halves even lengths exactly.
        let down_spec = ConvSpec {
            stride: 2,
            dilation: 2,
            padding: 4,
            groups: n,
        };
        let mut downs = Vec::with_capacity(config.s_levels);
        for i in 0..config.s_levels {
            let prefix = format!("encoder.down{i}");
            downs.push(DownLayer {
                conv: ConvLayer {
                    weight: p.conv_weight(format!("{prefix}.conv.weight"), n, 1, 5),
                    bias: Some(p.bias(format!("{prefix}.conv.bias"), n, 5)),
                    spec: down_spec,
                },
                norm: gln_params(&mut p, &format!("{prefix}.norm"), n),
                act: PRelu {
                    slope: p.constant(format!("{prefix}.prelu.slope"), &[1], 0.25),
                },
            });
        }

        let ga = config.use_ga.then(|| {
            let concat_proj = (config.ga_input == GaInput::FusedG
                && config.fusion == Fusion::Concat)
                .then(|| ConvLayer {
                    weight: p.conv_weight(
                        "ga.fuse.proj.weight",
                        n,
                        (config.s_levels + 1) * n,
                        1,
                    ),
                    bias: None,
                    spec: ConvSpec::default(),
                });
            let mhsa = (config.use_transformer_layer && config.use_mhsa).then(|| Mhsa {
                wq: p.linear_weight("ga.mhsa.wq.weight", d_attn, n),
                bq: p.bias("ga.mhsa.wq.bias", d_attn, n),
                wk: p.linear_weight("ga.mhsa.wk.weight", d_attn, n),
                bk: p.bias("ga.mhsa.wk.bias", d_attn, n),
                wv: p.linear_weight("ga.mhsa.wv.weight", d_attn, n),
                bv: p.bias("ga.mhsa.wv.bias", d_attn, n),
                wo: p.linear_weight("ga.mhsa.wo.weight", n, d_attn),
                bo: p.bias("ga.mhsa.wo.bias", n, d_attn),
                heads: config.heads,
                post_norm: gln_params(&mut p, "ga.mhsa.norm", n),
                positional: crate::layers::positional_table(n, 1024)
                    .expect("n validated even"),
                dropout_p: config.dropout,
            });
            let ffn = (config.use_transformer_layer && config.use_ffn).then(|| {
                let h = 2 * n;
                Ffn {
                    expand: ConvLayer {
                        weight: p.conv_weight("ga.ffn.expand.weight", h, n, 1),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm1: gln_params(&mut p, "ga.ffn.norm1", h),
                    depthwise: ConvLayer {
                        weight: p.conv_weight("ga.ffn.depthwise.weight", h, 1, 5),
                        bias: Some(p.bias("ga.ffn.depthwise.bias", h, 5)),
                        spec: ConvSpec {
                            padding: 2,
                            groups: h,
                            ..ConvSpec::default()
                        },
                    },
                    norm2: gln_params(&mut p, "ga.ffn.norm2", h),
                    compress: ConvLayer {
                        weight: p.conv_weight("ga.ffn.compress.weight", n, h, 1),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm3: gln_params(&mut p, "ga.ffn.norm3", n),
                    dropout_p: config.dropout,
                }
            });
            GaModule {
                concat_proj,
                mhsa,
                ffn,
            }
        });

        let same_spec = ConvSpec {
            padding: 2,
            groups: n,
            ..ConvSpec::default()
        };
        let mut la = Vec::new();
        if config.use_la {
            for i in 0..config.s_levels {
                let prefix = format!("la.{i}");
                la.push(LaLayer {
                    gate_conv: ConvLayer {
                        weight: p.conv_weight(format!("{prefix}.gate.conv.weight"), n, 1, 5),
                        bias: Some(p.bias(format!("{prefix}.gate.conv.bias"), n, 5)),
                        spec: same_spec,
                    },
                    gate_norm: gln_params(&mut p, &format!("{prefix}.gate.norm"), n),
                    bias_conv: ConvLayer {
                        weight: p.conv_weight(format!("{prefix}.bias.conv.weight"), n, 1, 5),
                        bias: Some(p.bias(format!("{prefix}.bias.conv.bias"), n, 5)),
                        spec: same_spec,
                    },
                    bias_norm: gln_params(&mut p, &format!("{prefix}.bias.norm"), n),
                });
            }
        }

        let mut mask_heads = Vec::with_capacity(config.c_speakers);
        for i in 0..config.c_speakers {
            mask_heads.push(ConvLayer {
                weight: p.conv_weight(format!("mask.{i}.weight"), n, n, 1),
                bias: Some(p.bias(format!("mask.{i}.bias"), n, n)),
                spec: ConvSpec::default(),
            });
        }

        // One decoder parameter set, applied to every speaker embedding.
        let decoder_weight = p.conv_weight("audio_decoder.weight", n, 1, l);

        Ok(TdaNet {
            config,
            params: p,
            encoder,
            bottleneck_conv,
            bottleneck_norm,
            downs,
            ga,
            la,
            mask_heads,
            decoder_weight,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Mixture embedding E: strided encoder convolution plus ReLU, computed
    /// on the padded waveform.
    fn encode(&self, padded: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.encoder.apply(padded)?.relu())
    }

    /// Bottom-up ladder: level 1 is the bottleneck output, each further level
    /// halves the time axis.
    fn encoder_path(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let f1 = self
            .bottleneck_norm
            .apply(&self.bottleneck_conv.apply(input)?)?;
        let mut ladder = Vec::with_capacity(self.config.s_levels + 1);
        ladder.push(f1);
        for down in &self.downs {
            let prev = ladder.last().unwrap();
            let next = down.act.apply(&down.norm.apply(&down.conv.apply(prev)?)?)?;
            debug_assert_eq!(
                next.shape()[1],
                prev.shape()[1] / 2,
                "down-sampling must halve the time axis exactly"
            );
            ladder.push(next);
        }
        Ok(ladder)
    }

    /// Fuses the ladder into the global feature G at the coarsest resolution.
    fn ga_fuse(&self, ladder: &[Tensor<T>], ga: &GaModule<T>) -> Result<Tensor<T>> {
        let coarse_len = ladder.last().unwrap().shape()[1];
        match self.config.ga_input {
            GaInput::TopF => Ok(ladder.last().unwrap().clone()),
            GaInput::FusedG => {
                let pooled: Vec<Tensor<T>> = ladder
                    .iter()
                    .map(|f| f.avg_pool1d(coarse_len))
                    .collect::<Result<_>>()?;
                match self.config.fusion {
                    Fusion::Sum => {
                        let mut acc = pooled[0].clone();
                        for p in &pooled[1..] {
                            acc = acc.add(p)?;
                        }
                        Ok(acc)
                    }
                    Fusion::Concat => {
                        let stacked = Tensor::concat_rows(&pooled)?;
                        let proj = ga
                            .concat_proj
                            .as_ref()
                            .expect("concat fusion built with projection");
                        proj.apply(&stacked)
                    }
                }
            }
        }
    }

    /// Transformer layer on the global feature; each stage is skippable and
    /// with both off this is the identity.
    fn ga_transform(
        &self,
        g: Tensor<T>,
        ga: &GaModule<T>,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor<T>> {
        let mut out = g;
        if let Some(mhsa) = &ga.mhsa {
            out = mhsa.apply(&out, ctx)?;
        }
        if let Some(ffn) = &ga.ffn {
            out = ffn.apply(&out, ctx)?;
        }
        Ok(out)
    }

    /// One pass through the shared block: ladder up, global modulation,
    /// local-attention decode back to full resolution.
    fn block(&self, input: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let ladder = self.encoder_path(input)?;

        let modulated: Vec<Tensor<T>> = match &self.ga {
            Some(ga) => {
                let g = self.ga_fuse(&ladder, ga)?;
                let gm = self.ga_transform(g, ga, ctx)?;
                ladder
                    .iter()
                    .map(|f| {
                        let gate = gm.nearest_interp1d(f.shape()[1])?.sigmoid();
                        gate.mul(f)
                    })
                    .collect::<Result<_>>()?
            }
            None => ladder,
        };

        let mut d = modulated[self.config.s_levels].clone();
        for i in (0..self.config.s_levels).rev() {
            let lateral = &modulated[i];
            let up = d.nearest_interp1d(lateral.shape()[1])?;
            d = if self.config.use_la {
                let la = &self.la[i];
                let rho = la.gate_norm.apply(&la.gate_conv.apply(&up)?)?.sigmoid();
                let tau = la.bias_norm.apply(&la.bias_conv.apply(&up)?)?;
                rho.mul(lateral)?.add(&tau)?
            } else {
                up.add(lateral)?
            };
        }
        Ok(d)
    }

    /// B repeats of the shared block under the summation-connection scheme:
    /// the embedding is added to each block's output to form the next input.
    fn unfold(&self, embedding: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let mut r = self.block(embedding, ctx)?;
        for _ in 1..self.config.b_unfolds {
            r = self.block(&embedding.add(&r)?, ctx)?;
        }
        Ok(r)
    }

    /// Full differentiable pipeline: returns C estimated sources as `[1, T]`
    /// tensors, exactly the input length.
    pub fn separate_tensors(&self, wave: &[T], ctx: &mut ForwardCtx) -> Result<Vec<Tensor<T>>> {
        let plan = self.config.pad_plan(wave.len())?;
        let mut padded = vec![T::zero(); plan.padded_len];
        padded[plan.pad_left..plan.pad_left + wave.len()].copy_from_slice(wave);
        let x = Tensor::from_vec(padded, &[1, plan.padded_len]);

        let embedding = self.encode(&x)?;
        let features = self.unfold(&embedding, ctx)?;

        let mut sources = Vec::with_capacity(self.config.c_speakers);
        for head in &self.mask_heads {
            let mask = head.apply(&features)?.relu();
            let masked = embedding.mul(&mask)?;
            let decoded =
                masked.conv_transpose1d(&self.decoder_weight, None, self.config.stride_samples())?;
            sources.push(decoded.slice_time(plan.pad_left, wave.len())?);
        }
        Ok(sources)
    }

    /// Inference entry point: no tape, no dropout. Returns C waveforms of the
    /// input length.
    pub fn separate(&self, wave: &[T]) -> Result<Vec<Vec<T>>> {
        no_grad(|| {
            let mut ctx = ForwardCtx::inference();
            let sources = self.separate_tensors(wave, &mut ctx)?;
            Ok(sources.iter().map(|s| s.to_vec()).collect())
        })
    }

    /// Masks for a given waveform (inference only); exposed for inspection.
    pub fn masks(&self, wave: &[T]) -> Result<Vec<Vec<T>>> {
        no_grad(|| {
            let plan = self.config.pad_plan(wave.len())?;
            let mut padded = vec![T::zero(); plan.padded_len];
            padded[plan.pad_left..plan.pad_left + wave.len()].copy_from_slice(wave);
            let x = Tensor::from_vec(padded, &[1, plan.padded_len]);
            let embedding = self.encode(&x)?;
            let mut ctx = ForwardCtx::inference();
            let features = self.unfold(&embedding, &mut ctx)?;
            self.mask_heads
                .iter()
                .map(|head| Ok(head.apply(&features)?.relu().to_vec()))
                .collect()
        })
    }

    /// Replaces a named parameter's values (checkpoint restore).
    pub(super) fn load_values(&self, name: &str, data: Vec<T>) -> Result<()> {
        let tensor = self.params.get(name).ok_or_else(|| {
            Error::State(format!("checkpoint names unknown parameter `{name}`"))
        })?;
        if tensor.numel() != data.len() {
            return Err(Error::State(format!(
                "checkpoint size mismatch for `{name}`: {} vs {}",
                tensor.numel(),
                data.len()
            )));
        }
        tensor.set_data(data);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::count_params;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_channels: 16,
            s_levels: 2,
            b_unfolds: 2,
            heads: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn analytic_param_count_matches_store() {
        for cfg in [
            tiny_config(),
            ModelConfig {
                use_ga: false,
                use_la: false,
                ..tiny_config()
            },
            ModelConfig {
                use_la: false,
                ..tiny_config()
            },
            ModelConfig {
                fusion: Fusion::Concat,
                ..tiny_config()
            },
            ModelConfig {
                ga_input: GaInput::TopF,
                ..tiny_config()
            },
            ModelConfig {
                use_transformer_layer: false,
                ..tiny_config()
            },
            ModelConfig {
                use_mhsa: false,
                ..tiny_config()
            },
            ModelConfig {
                c_speakers: 3,
                ..tiny_config()
            },
        ] {
            let model = TdaNet::<f32>::new(cfg.clone(), 1).unwrap();
            assert_eq!(
                model.params().total_params(),
                count_params(&cfg),
                "analytic count diverges for {cfg:?}"
            );
        }
    }

    #[test]
    fn zero_waveform_encodes_to_zero() {
        let model = TdaNet::<f32>::new(tiny_config(), 2).unwrap();
        let plan = model.config().pad_plan(512).unwrap();
        let x = Tensor::from_vec(vec![0.0; plan.padded_len], &[1, plan.padded_len]);
        let e = model.encode(&x).unwrap();
        assert!(e.to_vec().iter().all(|v| *v == 0.0));
        assert_eq!(e.shape(), vec![16, plan.frames]);
    }

    #[test]
    fn ladder_lengths_halve_exactly() {
        let model = TdaNet::<f32>::new(tiny_config(), 3).unwrap();
        let plan = model.config().pad_plan(800).unwrap();
        let x = Tensor::from_vec(vec![0.25; plan.padded_len], &[1, plan.padded_len]);
        let e = model.encode(&x).unwrap();
        let ladder = model.encoder_path(&e).unwrap();
        let expected = model.config().ladder_lengths(plan.frames);
        let got: Vec<usize> = ladder.iter().map(|f| f.shape()[1]).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn separate_returns_input_length_per_speaker() {
        let model = TdaNet::<f32>::new(tiny_config(), 4).unwrap();
        for t in [320usize, 1000, 1001] {
            let wave: Vec<f32> = (0..t).map(|i| (i as f32 * 0.01).sin() * 0.3).collect();
            let out = model.separate(&wave).unwrap();
            assert_eq!(out.len(), 2);
            for s in &out {
                assert_eq!(s.len(), t);
            }
        }
    }

    #[test]
    fn same_seed_same_outputs() {
        let a = TdaNet::<f32>::new(tiny_config(), 77).unwrap();
        let b = TdaNet::<f32>::new(tiny_config(), 77).unwrap();
        let wave: Vec<f32> = (0..700).map(|i| (i as f32 * 0.013).cos() * 0.4).collect();
        let ya = a.separate(&wave).unwrap();
        let yb = b.separate(&wave).unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn forced_masks_behave() {
        // All-ones masks make every output the decode of E; an all-zero mask
        // yields silence (the decoder has no bias).
        let model = TdaNet::<f32>::new(tiny_config(), 5).unwrap();
        for (i, head) in model.mask_heads.iter().enumerate() {
            head.weight.set_data(vec![0.0; head.weight.numel()]);
            let ones = if i == 0 { 1.0 } else { 0.0 };
            let b = head.bias.as_ref().unwrap();
            b.set_data(vec![ones; b.numel()]);
        }
        let wave: Vec<f32> = (0..512).map(|i| (i as f32 * 0.02).sin() * 0.5).collect();
        let out = model.separate(&wave).unwrap();
        assert!(out[1].iter().all(|v| *v == 0.0), "zero mask must silence");
        assert!(out[0].iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn unfold_b1_is_single_block() {
        let cfg = ModelConfig {
            b_unfolds: 1,
            ..tiny_config()
        };
        let model = TdaNet::<f32>::new(cfg, 6).unwrap();
        let plan = model.config().pad_plan(400).unwrap();
        let x = Tensor::from_vec(vec![0.1; plan.padded_len], &[1, plan.padded_len]);
        let e = model.encode(&x).unwrap();
        let mut ctx = ForwardCtx::inference();
        let via_unfold = model.unfold(&e, &mut ctx).unwrap().to_vec();
        let direct = model.block(&e, &mut ctx).unwrap().to_vec();
        assert_eq!(via_unfold, direct);
    }

    #[test]
    fn ga_transform_identity_when_transformer_off() {
        let cfg = ModelConfig {
            use_transformer_layer: false,
            ..tiny_config()
        };
        let model = TdaNet::<f32>::new(cfg, 7).unwrap();
        let ga = model.ga.as_ref().unwrap();
        let g = Tensor::from_vec((0..16 * 8).map(|i| i as f32 * 0.01).collect(), &[16, 8]);
        let gm = model
            .ga_transform(g.clone(), ga, &mut ForwardCtx::inference())
            .unwrap();
        assert_eq!(gm.to_vec(), g.to_vec());
    }

    #[test]
    fn ga_fuse_sums_pooled_levels() {
        let model = TdaNet::<f32>::new(tiny_config(), 8).unwrap();
        let ga = model.ga.as_ref().unwrap();
        // constant ladders: sum mode adds the per-level constants
        let ladder = vec![
            Tensor::full(&[16, 8], 1.0f32),
            Tensor::full(&[16, 4], 2.0f32),
            Tensor::full(&[16, 2], 4.0f32),
        ];
        let g = model.ga_fuse(&ladder, ga).unwrap();
        assert_eq!(g.shape(), vec![16, 2]);
        assert!(g.to_vec().iter().all(|v| (*v - 7.0).abs() < 1e-6));

        // all-zero ladder fuses to zero
        let zeros = vec![
            Tensor::zeros(&[16, 8]),
            Tensor::zeros(&[16, 4]),
            Tensor::zeros(&[16, 2]),
        ];
        let gz = model.ga_fuse(&zeros, ga).unwrap();
        assert!(gz.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ga_modulate_zero_gate_halves_features() {
        // sigmoid(0) = 0.5, so a zero global feature scales each level by half.
        let f = Tensor::from_vec((0..32).map(|i| i as f32).collect(), &[4, 8]);
        let gm = Tensor::zeros(&[4, 2]);
        let gate = gm.nearest_interp1d(8).unwrap().sigmoid();
        let out = gate.mul(&f).unwrap();
        for (a, b) in out.to_vec().iter().zip(f.to_vec()) {
            assert!((a - 0.5 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn every_ablation_variant_separates_with_exact_lengths() {
        let variants = [
            ModelConfig {
                ga_input: GaInput::TopF,
                ..tiny_config()
            },
            ModelConfig {
                fusion: Fusion::Concat,
                ..tiny_config()
            },
            ModelConfig {
                use_mhsa: false,
                ..tiny_config()
            },
            ModelConfig {
                use_ffn: false,
                ..tiny_config()
            },
            ModelConfig {
                use_transformer_layer: false,
                ..tiny_config()
            },
            ModelConfig {
                use_la: false,
                ..tiny_config()
            },
            ModelConfig {
                use_ga: false,
                use_la: false,
                ..tiny_config()
            },
        ];
        let wave: Vec<f32> = (0..777).map(|i| (i as f32 * 0.017).sin() * 0.4).collect();
        for cfg in variants {
            let model = TdaNet::<f32>::new(cfg.clone(), 12).unwrap();
            let out = model.separate(&wave).unwrap();
            assert_eq!(out.len(), 2, "{cfg:?}");
            for s in &out {
                assert_eq!(s.len(), wave.len(), "{cfg:?}");
            }
        }
    }

    #[test]
    fn mask_count_follows_speakers() {
        for c in [2usize, 3] {
            let cfg = ModelConfig {
                c_speakers: c,
                ..tiny_config()
            };
            let model = TdaNet::<f32>::new(cfg, 9).unwrap();
            let wave: Vec<f32> = (0..512).map(|i| (i as f32 * 0.05).sin()).collect();
            let masks = model.masks(&wave).unwrap();
            assert_eq!(masks.len(), c);
            for m in masks {
                assert!(m.iter().all(|v| *v >= 0.0), "masks are ReLU outputs");
            }
        }
    }
}
