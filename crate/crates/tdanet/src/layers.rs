//! Parameterized layers: global layer normalization, PReLU, convolution
//! wrappers, sinusoidal positional encoding, multi-head self-attention, and
//! the convolutional feed-forward block.
//!
//! Layers are immutable parameter holders; applying one is a pure function of
//! its inputs plus the forward context (training flag and dropout stream).

use rand_chacha::ChaCha8Rng;

use crate::numerics::{ConvSpec, Scalar, Tensor};
use crate::{Error, Result};

/// Per-pass state threaded through the network: whether dropout is active and
/// the RNG that feeds it. Inference uses `ForwardCtx::inference()`, which
/// never draws randomness.
pub struct ForwardCtx {
    pub training: bool,
    pub dropout_rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn inference() -> Self {
        use rand::SeedableRng;
        ForwardCtx {
            training: false,
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn training(dropout_seed: u64) -> Self {
        use rand::SeedableRng;
        ForwardCtx {
            training: true,
            dropout_rng: ChaCha8Rng::seed_from_u64(dropout_seed),
        }
    }
}

fn maybe_dropout<T: Scalar>(x: &Tensor<T>, p: f64, ctx: &mut ForwardCtx) -> Tensor<T> {
    if ctx.training && p > 0.0 {
        x.dropout(p, &mut ctx.dropout_rng)
    } else {
        x.clone()
    }
}

/// Global layer normalization: standardizes over channel and time jointly,
/// then applies a per-channel gain and bias.
pub struct Gln<T: Scalar> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
    pub eps: f64,
}

impl<T: Scalar> Gln<T> {
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(gain: Tensor<T>, bias: Tensor<T>) -> Self {
        Gln {
            gain,
            bias,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.gln(&self.gain, &self.bias, self.eps)
    }
}

/// PReLU with a single learnable slope.
pub struct PRelu<T: Scalar> {
    pub slope: Tensor<T>,
}

impl<T: Scalar> PRelu<T> {
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.prelu(&self.slope)
    }
}

/// A convolution plus its geometry; bias is optional.
pub struct ConvLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub spec: ConvSpec,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv1d(&self.weight, self.bias.as_ref(), self.spec)
    }
}

/// Precomputed sinusoid table `d` with `d[2k][t] = sin(t / 10000^{2k/N})` and
/// `d[2k+1][t] = cos` of the same phase.
pub struct PositionalEncoding<T: Scalar> {
    table: Vec<T>,
    n: usize,
    t_max: usize,
}

/// Builds the table; `n` must be even.
pub fn positional_table<T: Scalar>(n: usize, t_max: usize) -> Result<PositionalEncoding<T>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "positional encoding needs an even channel count, got {n}"
        )));
    }
    let mut table = vec![T::zero(); n * t_max];
    for c in 0..n {
        let pair = (c / 2) * 2;
        let denom = 10000f64.powf(pair as f64 / n as f64);
        for t in 0..t_max {
            let angle = t as f64 / denom;
            table[c * t_max + t] = T::from_f64(if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Ok(PositionalEncoding { table, n, t_max })
}

impl<T: Scalar> PositionalEncoding<T> {
    /// All-zero table: attention runs with no positional information.
    pub fn zeros(n: usize, t_max: usize) -> Self {
        PositionalEncoding {
            table: vec![T::zero(); n * t_max],
            n,
            t_max,
        }
    }

    pub fn value(&self, channel: usize, t: usize) -> T {
        self.table[channel * self.t_max + t]
    }

    /// First `t` frames as a constant `[N, t]` tensor. Frames past the
    /// precomputed horizon are generated on the fly (the table is a pure
    /// function, so this stays deterministic).
    pub fn frames(&self, t: usize) -> Tensor<T> {
        if t <= self.t_max {
            let mut data = Vec::with_capacity(self.n * t);
            for c in 0..self.n {
                data.extend_from_slice(&self.table[c * self.t_max..c * self.t_max + t]);
            }
            Tensor::from_vec(data, &[self.n, t])
        } else {
            let ext = positional_table::<T>(self.n, t).expect("n validated at construction");
            ext.frames(t)
        }
    }
}

/// Multi-head self-attention over time frames of an `[N, T]` feature map,
/// wrapped transformer-style: `out = x + GLN(MHSA(x + positional))`.
pub struct Mhsa<T: Scalar> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub heads: usize,
    pub post_norm: Gln<T>,
    pub positional: PositionalEncoding<T>,
    pub dropout_p: f64,
}

impl<T: Scalar> Mhsa<T> {
    pub fn attn_dim(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn apply(&self, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        Ok(self.apply_with_weights(x, ctx)?.0)
    }

    /// Forward pass that also returns the per-head attention matrices
    /// (each `[T, T]`, rows summing to one).
    pub fn apply_with_weights(
        &self,
        x: &Tensor<T>,
        ctx: &mut ForwardCtx,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let shape = x.shape();
        if shape.len() != 2 {
            return Err(Error::Dimension {
                op: "mhsa",
                lhs: shape,
                rhs: vec![0, 0],
            });
        }
        let t = shape[1];
        let d_attn = self.attn_dim();
        if !d_attn.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "attention dim {d_attn} not divisible by {} heads",
                self.heads
            )));
        }
        let dh = d_attn / self.heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        let xb = x.add(&self.positional.frames(t))?;
        let q = self.wq.matmul(&xb)?.add_channel_bias(&self.bq)?;
        let k = self.wk.matmul(&xb)?.add_channel_bias(&self.bk)?;
        let v = self.wv.matmul(&xb)?.add_channel_bias(&self.bv)?;

        let mut heads_out = Vec::with_capacity(self.heads);
        let mut attn_maps = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice_rows(h * dh, dh)?;
            let kh = k.slice_rows(h * dh, dh)?;
            let vh = v.slice_rows(h * dh, dh)?;
            let scores = qh.transpose()?.matmul(&kh)?.scale(scale);
            let attn = scores.softmax_rows()?;
            attn_maps.push(attn.clone());
            let attn = maybe_dropout(&attn, self.dropout_p, ctx);
            heads_out.push(vh.matmul(&attn.transpose()?)?);
        }
        let merged = Tensor::concat_rows(&heads_out)?;
        let projected = self.wo.matmul(&merged)?.add_channel_bias(&self.bo)?;
        let normed = self.post_norm.apply(&projected)?;
        Ok((x.add(&normed)?, attn_maps))
    }
}

/// Feed-forward block of three convolutions (pointwise expand, depthwise
/// kernel-5, pointwise compress), each followed by GLN, with a residual
/// connection around the whole stack.
pub struct Ffn<T: Scalar> {
    pub expand: ConvLayer<T>,
    pub norm1: Gln<T>,
    pub depthwise: ConvLayer<T>,
    pub norm2: Gln<T>,
    pub compress: ConvLayer<T>,
    pub norm3: Gln<T>,
    pub dropout_p: f64,
}

impl<T: Scalar> Ffn<T> {
    pub fn apply(&self, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let y = self.norm1.apply(&self.expand.apply(x)?)?;
        let y = maybe_dropout(&y, self.dropout_p, ctx);
        let y = self.norm2.apply(&self.depthwise.apply(&y)?)?;
        let y = maybe_dropout(&y, self.dropout_p, ctx);
        let y = self.norm3.apply(&self.compress.apply(&y)?)?;
        let y = maybe_dropout(&y, self.dropout_p, ctx);
        x.add(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn randt(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape)
    }

    fn test_mhsa(n: usize, heads: usize, with_pos: bool, rng: &mut impl Rng) -> Mhsa<f64> {
        let d = n / 2;
        Mhsa {
            wq: randt(rng, &[d, n]),
            bq: randt(rng, &[d]),
            wk: randt(rng, &[d, n]),
            bk: randt(rng, &[d]),
            wv: randt(rng, &[d, n]),
            bv: randt(rng, &[d]),
            wo: randt(rng, &[n, d]),
            bo: randt(rng, &[n]),
            heads,
            post_norm: Gln::new(
                Tensor::from_vec(vec![1.0; n], &[n, 1]),
                Tensor::from_vec(vec![0.0; n], &[n, 1]),
            ),
            positional: if with_pos {
                positional_table(n, 64).unwrap()
            } else {
                PositionalEncoding::zeros(n, 64)
            },
            dropout_p: 0.0,
        }
    }

    #[test]
    fn positional_table_values() {
        let pe = positional_table::<f64>(8, 4).unwrap();
        assert_eq!(pe.value(0, 0), 0.0); // sin 0
        assert_eq!(pe.value(1, 0), 1.0); // cos 0
        assert!((pe.value(0, 1) - 1f64.sin()).abs() < 1e-12); // ~0.8415
        // sine/cosine rows share the phase
        let phase = 3.0 / 10000f64.powf(2.0 / 8.0);
        assert!((pe.value(2, 3) - phase.sin()).abs() < 1e-12);
        assert!((pe.value(3, 3) - phase.cos()).abs() < 1e-12);
    }

    #[test]
    fn positional_table_rejects_odd_channels() {
        assert!(positional_table::<f64>(7, 4).is_err());
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mhsa = test_mhsa(8, 4, true, &mut rng);
        let x = randt(&mut rng, &[8, 6]);
        let (_, maps) = mhsa
            .apply_with_weights(&x, &mut ForwardCtx::inference())
            .unwrap();
        assert_eq!(maps.len(), 4);
        for m in maps {
            let v = m.to_vec();
            for r in 0..6 {
                let s: f64 = v[r * 6..(r + 1) * 6].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zeroed_value_and_output_projections_pass_residual_through() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut mhsa = test_mhsa(8, 2, true, &mut rng);
        mhsa.wv = Tensor::zeros(&[4, 8]);
        mhsa.bv = Tensor::zeros(&[4]);
        mhsa.wo = Tensor::zeros(&[8, 4]);
        mhsa.bo = Tensor::zeros(&[8]);
        let x = randt(&mut rng, &[8, 5]);
        let y = mhsa.apply(&x, &mut ForwardCtx::inference()).unwrap();
        for (a, b) in x.to_vec().iter().zip(y.to_vec()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_without_positional_encoding_is_permutation_equivariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mhsa = test_mhsa(8, 2, false, &mut rng);
        let x = randt(&mut rng, &[8, 4]);
        let perm = [2usize, 0, 3, 1];

        let xv = x.to_vec();
        let mut permuted = vec![0.0; xv.len()];
        for c in 0..8 {
            for (dst, &src) in perm.iter().enumerate() {
                permuted[c * 4 + dst] = xv[c * 4 + src];
            }
        }
        let xp = Tensor::from_vec(permuted, &[8, 4]);

        let y = mhsa.apply(&x, &mut ForwardCtx::inference()).unwrap().to_vec();
        let yp = mhsa.apply(&xp, &mut ForwardCtx::inference()).unwrap().to_vec();
        for c in 0..8 {
            for (dst, &src) in perm.iter().enumerate() {
                assert!(
                    (yp[c * 4 + dst] - y[c * 4 + src]).abs() < 1e-9,
                    "equivariance broken at channel {c}, frame {dst}"
                );
            }
        }
    }

    #[test]
    fn mhsa_dropout_reproducible_with_fixed_seed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut mhsa = test_mhsa(8, 2, true, &mut rng);
        mhsa.dropout_p = 0.1;
        let x = randt(&mut rng, &[8, 6]);
        let a = mhsa.apply(&x, &mut ForwardCtx::training(99)).unwrap().to_vec();
        let b = mhsa.apply(&x, &mut ForwardCtx::training(99)).unwrap().to_vec();
        assert_eq!(a, b);
        // and p=0 (inference) is deterministic without any seed agreement
        let c = mhsa.apply(&x, &mut ForwardCtx::inference()).unwrap().to_vec();
        let d = mhsa.apply(&x, &mut ForwardCtx::inference()).unwrap().to_vec();
        assert_eq!(c, d);
    }

    fn test_ffn(n: usize, rng: &mut impl Rng) -> Ffn<f64> {
        let h = 2 * n;
        let gln = |ch: usize| {
            Gln::new(
                Tensor::from_vec(vec![1.0; ch], &[ch, 1]),
                Tensor::from_vec(vec![0.0; ch], &[ch, 1]),
            )
        };
        Ffn {
            expand: ConvLayer {
                weight: randt(rng, &[h, n, 1]),
                bias: None,
                spec: ConvSpec::default(),
            },
            norm1: gln(h),
            depthwise: ConvLayer {
                weight: randt(rng, &[h, 1, 5]),
                bias: Some(randt(rng, &[h])),
                spec: ConvSpec {
                    padding: 2,
                    groups: h,
                    ..ConvSpec::default()
                },
            },
            norm2: gln(h),
            compress: ConvLayer {
                weight: randt(rng, &[n, h, 1]),
                bias: None,
                spec: ConvSpec::default(),
            },
            norm3: gln(n),
            dropout_p: 0.0,
        }
    }

    #[test]
    fn ffn_zeroed_final_conv_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut ffn = test_ffn(6, &mut rng);
        ffn.compress.weight = Tensor::zeros(&[6, 12, 1]);
        let x = randt(&mut rng, &[6, 10]);
        let y = ffn.apply(&x, &mut ForwardCtx::inference()).unwrap();
        for (a, b) in x.to_vec().iter().zip(y.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ffn_preserves_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let ffn = test_ffn(4, &mut rng);
        for t in [8usize, 16, 62] {
            let x = randt(&mut rng, &[4, t]);
            let y = ffn.apply(&x, &mut ForwardCtx::inference()).unwrap();
            assert_eq!(y.shape(), vec![4, t]);
        }
    }

    #[test]
    fn ffn_gradients_match_finite_differences() {
        use crate::numerics::grad_check;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let x: Vec<f64> = (0..n * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w1: Vec<f64> = (0..2 * n * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let wd: Vec<f64> = (0..2 * n * 5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w2: Vec<f64> = (0..2 * n * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let report = grad_check(
            |ts| {
                let gln = |ch: usize| {
                    Gln::new(
                        Tensor::from_vec(vec![1.0; ch], &[ch, 1]),
                        Tensor::from_vec(vec![0.0; ch], &[ch, 1]),
                    )
                };
                let ffn = Ffn {
                    expand: ConvLayer {
                        weight: ts[1].clone(),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm1: gln(2 * n),
                    depthwise: ConvLayer {
                        weight: ts[2].clone(),
                        bias: None,
                        spec: ConvSpec {
                            padding: 2,
                            groups: 2 * n,
                            ..ConvSpec::default()
                        },
                    },
                    norm2: gln(2 * n),
                    compress: ConvLayer {
                        weight: ts[3].clone(),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm3: gln(n),
                    dropout_p: 0.0,
                };
                let y = ffn.apply(&ts[0], &mut ForwardCtx::inference())?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w1, wd, w2],
            &[
                vec![n, 8],
                vec![2 * n, n, 1],
                vec![2 * n, 1, 5],
                vec![n, 2 * n, 1],
            ],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn mhsa_gradients_match_finite_differences() {
        use crate::numerics::grad_check;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let n = 6;
        let d = 3;
        let mk = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-0.7..0.7)).collect()
        };
        let inputs = vec![
            mk(n * 5, &mut rng),  // x
            mk(d * n, &mut rng),  // wq
            mk(d * n, &mut rng),  // wk
            mk(d * n, &mut rng),  // wv
            mk(n * d, &mut rng),  // wo
        ];
        let shapes = vec![
            vec![n, 5],
            vec![d, n],
            vec![d, n],
            vec![d, n],
            vec![n, d],
        ];
        let report = grad_check(
            |ts| {
                let mhsa = Mhsa {
                    wq: ts[1].clone(),
                    bq: Tensor::zeros(&[d]),
                    wk: ts[2].clone(),
                    bk: Tensor::zeros(&[d]),
                    wv: ts[3].clone(),
                    bv: Tensor::zeros(&[d]),
                    wo: ts[4].clone(),
                    bo: Tensor::zeros(&[n]),
                    heads: 3,
                    post_norm: Gln::new(
                        Tensor::from_vec(vec![1.0; n], &[n, 1]),
                        Tensor::from_vec(vec![0.0; n], &[n, 1]),
                    ),
                    positional: positional_table(n, 16).unwrap(),
                    dropout_p: 0.0,
                };
                let y = mhsa.apply(&ts[0], &mut ForwardCtx::inference())?;
                Ok(y.mul(&y)?.sum_all())
            },
            &inputs,
            &shapes,
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }
}
