use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Geometry of a 1-D convolution. Inputs are `[C_in, T]`, kernels
/// `[C_out, C_in/groups, K]`, outputs `[C_out, T_out]` with
/// `T_out = (T + 2*padding - dilation*(K-1) - 1)/stride + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            stride: 1,
            dilation: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl ConvSpec {
    pub fn output_len(&self, t: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = t + 2 * self.padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

impl<T: Scalar> Tensor<T> {
    /// Cross-correlation style 1-D convolution with stride, dilation, zero
    /// padding, and grouping. Differentiable w.r.t. input, kernels, and bias.
    pub fn conv1d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        spec: ConvSpec,
    ) -> Result<Tensor<T>> {
        if spec.stride == 0 || spec.dilation == 0 || spec.groups == 0 {
            return Err(Error::Config(format!(
                "conv1d requires positive stride/dilation/groups, got {spec:?}"
            )));
        }
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 3 {
            return Err(Error::Dimension {
                op: "conv1d",
                lhs: xs,
                rhs: ws,
            });
        }
        let (c_in, t) = (xs[0], xs[1]);
        let (c_out, w_cin, k) = (ws[0], ws[1], ws[2]);
        if c_in % spec.groups != 0 || c_out % spec.groups != 0 || w_cin != c_in / spec.groups {
            return Err(Error::Dimension {
                op: "conv1d",
                lhs: xs,
                rhs: ws,
            });
        }
        if let Some(b) = bias {
            if b.numel() != c_out {
                return Err(Error::Dimension {
                    op: "conv1d bias",
                    lhs: vec![c_out],
                    rhs: b.shape(),
                });
            }
        }
        let Some(t_out) = spec.output_len(t, k) else {
            return Err(Error::Dimension {
                op: "conv1d (input shorter than receptive field)",
                lhs: xs,
                rhs: ws,
            });
        };

        let group_in = c_in / spec.groups;
        let group_out = c_out / spec.groups;

        // Valid kernel-tap range per output frame, so inner loops run
        // branch-free: ti = to*stride + ki*dilation - padding must land in
        // [0, t).
        let tap_range = |to: usize| -> (usize, usize, isize) {
            let origin = (to * spec.stride) as isize - spec.padding as isize;
            let k_lo = if origin >= 0 {
                0
            } else {
                ((-origin) as usize).div_ceil(spec.dilation)
            };
            let k_hi_excl = if origin >= t as isize {
                0
            } else {
                (((t as isize - 1 - origin) as usize) / spec.dilation + 1).min(k)
            };
            (k_lo, k_hi_excl.max(k_lo), origin)
        };

        let out = self.with_data(|x, _| {
            weight.with_data(|w, _| {
                let mut y = vec![T::zero(); c_out * t_out];
                if k == 1 && spec.stride == 1 && spec.padding == 0 {
                    // Pointwise: one [group_out x group_in] matmul per group.
                    for g in 0..spec.groups {
                        let wg = &w[g * group_out * group_in..(g + 1) * group_out * group_in];
                        let xg = &x[g * group_in * t..(g + 1) * group_in * t];
                        let yg = super::ops::matmul_raw(wg, xg, group_out, group_in, t);
                        y[g * group_out * t..(g + 1) * group_out * t].copy_from_slice(&yg);
                    }
                } else {
                    for o in 0..c_out {
                        let g = o / group_out;
                        let in_base = g * group_in;
                        let w_base = o * group_in * k;
                        for to in 0..t_out {
                            let (k_lo, k_hi, origin) = tap_range(to);
                            let mut acc = T::zero();
                            for ci in 0..group_in {
                                let xrow = &x[(in_base + ci) * t..(in_base + ci + 1) * t];
                                let wrow = &w[w_base + ci * k..w_base + (ci + 1) * k];
                                for (ki, wv) in wrow.iter().enumerate().take(k_hi).skip(k_lo) {
                                    let ti = (origin + (ki * spec.dilation) as isize) as usize;
                                    acc += *wv * xrow[ti];
                                }
                            }
                            y[o * t_out + to] = acc;
                        }
                    }
                }
                if let Some(b) = bias {
                    b.with_data(|bv, _| {
                        for o in 0..c_out {
                            for to in 0..t_out {
                                y[o * t_out + to] += bv[o];
                            }
                        }
                    });
                }
                y
            })
        });

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (xt, wt, bt) = (self.clone(), weight.clone(), bias.cloned());
        Ok(Tensor::from_op(
            out,
            &[c_out, t_out],
            "conv1d",
            parents,
            move |grad| {
                let need_x = xt.requires_grad();
                let need_w = wt.requires_grad();
                let mut dx = need_x.then(|| vec![T::zero(); c_in * t]);
                let mut dw = need_w.then(|| vec![T::zero(); c_out * group_in * k]);
                if need_x || need_w {
                    xt.with_data(|x, _| {
                        wt.with_data(|w, _| {
                            if k == 1 && spec.stride == 1 && spec.padding == 0 {
                                for g in 0..spec.groups {
                                    let wg = &w[g * group_out * group_in
                                        ..(g + 1) * group_out * group_in];
                                    let xg = &x[g * group_in * t..(g + 1) * group_in * t];
                                    let gg = &grad[g * group_out * t..(g + 1) * group_out * t];
                                    if let Some(dx) = dx.as_mut() {
                                        // dX_g = W_g^T . dY_g
                                        let wt_t = super::ops::transpose_raw(
                                            wg, group_out, group_in,
                                        );
                                        let d = super::ops::matmul_raw(
                                            &wt_t, gg, group_in, group_out, t,
                                        );
                                        dx[g * group_in * t..(g + 1) * group_in * t]
                                            .copy_from_slice(&d);
                                    }
                                    if let Some(dw) = dw.as_mut() {
                                        // dW_g = dY_g . X_g^T
                                        let xg_t = super::ops::transpose_raw(xg, group_in, t);
                                        let d = super::ops::matmul_raw(
                                            gg, &xg_t, group_out, t, group_in,
                                        );
                                        dw[g * group_out * group_in
                                            ..(g + 1) * group_out * group_in]
                                            .copy_from_slice(&d);
                                    }
                                }
                            } else {
                                for o in 0..c_out {
                                    let g = o / group_out;
                                    let in_base = g * group_in;
                                    let w_base = o * group_in * k;
                                    for to in 0..t_out {
                                        let gv = grad[o * t_out + to];
                                        if gv == T::zero() {
                                            continue;
                                        }
                                        let origin = (to * spec.stride) as isize
                                            - spec.padding as isize;
                                        for ci in 0..group_in {
                                            for ki in 0..k {
                                                let ti =
                                                    origin + (ki * spec.dilation) as isize;
                                                if ti < 0 || ti as usize >= t {
                                                    continue;
                                                }
                                                let xi = (in_base + ci) * t + ti as usize;
                                                if let Some(dw) = dw.as_mut() {
                                                    dw[w_base + ci * k + ki] += gv * x[xi];
                                                }
                                                if let Some(dx) = dx.as_mut() {
                                                    dx[xi] += gv * w[w_base + ci * k + ki];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        })
                    });
                }
                if let Some(dx) = dx {
                    xt.accumulate_grad(&dx);
                }
                if let Some(dw) = dw {
                    wt.accumulate_grad(&dw);
                }
                if let Some(b) = &bt {
                    if b.requires_grad() {
                        let mut db = vec![T::zero(); c_out];
                        for o in 0..c_out {
                            for to in 0..t_out {
                                db[o] += grad[o * t_out + to];
                            }
                        }
                        b.accumulate_grad(&db);
                    }
                }
            },
        ))
    }

    /// Transposed 1-D convolution (the adjoint of `conv1d` with the same
    /// kernel, zero padding, unit dilation). Input `[C_from, T]`, weight in
    /// convolution layout `[C_from, C_to, K]`, output
    /// `[C_to, (T-1)*stride + K]`.
    pub fn conv_transpose1d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
    ) -> Result<Tensor<T>> {
        if stride == 0 {
            return Err(Error::Config(
                "conv_transpose1d requires positive stride".into(),
            ));
        }
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 3 || ws[0] != xs[0] {
            return Err(Error::Dimension {
                op: "conv_transpose1d",
                lhs: xs,
                rhs: ws,
            });
        }
        let (c_from, t) = (xs[0], xs[1]);
        let (c_to, k) = (ws[1], ws[2]);
        if let Some(b) = bias {
            if b.numel() != c_to {
                return Err(Error::Dimension {
                    op: "conv_transpose1d bias",
                    lhs: vec![c_to],
                    rhs: b.shape(),
                });
            }
        }
        let t_out = (t - 1) * stride + k;

        // Overlap-add: each input frame deposits a scaled kernel copy.
        let out = self.with_data(|x, _| {
            weight.with_data(|w, _| {
                let mut y = vec![T::zero(); c_to * t_out];
                for cf in 0..c_from {
                    for co in 0..c_to {
                        let wrow = &w[(cf * c_to + co) * k..(cf * c_to + co + 1) * k];
                        let yrow_base = co * t_out;
                        for ti in 0..t {
                            let xv = x[cf * t + ti];
                            if xv == T::zero() {
                                continue;
                            }
                            let base = yrow_base + ti * stride;
                            for (ki, wv) in wrow.iter().enumerate() {
                                y[base + ki] += xv * *wv;
                            }
                        }
                    }
                }
                if let Some(b) = bias {
                    b.with_data(|bv, _| {
                        for co in 0..c_to {
                            for u in 0..t_out {
                                y[co * t_out + u] += bv[co];
                            }
                        }
                    });
                }
                y
            })
        });

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (xt, wt, bt) = (self.clone(), weight.clone(), bias.cloned());
        Ok(Tensor::from_op(
            out,
            &[c_to, t_out],
            "conv_transpose1d",
            parents,
            move |grad| {
                // The adjoint of overlap-add is a strided correlation.
                if xt.requires_grad() {
                    let d = wt.with_data(|w, _| {
                        let mut dx = vec![T::zero(); c_from * t];
                        for cf in 0..c_from {
                            for co in 0..c_to {
                                let wrow = &w[(cf * c_to + co) * k..(cf * c_to + co + 1) * k];
                                for ti in 0..t {
                                    let base = co * t_out + ti * stride;
                                    let mut acc = T::zero();
                                    for (ki, wv) in wrow.iter().enumerate() {
                                        acc += *wv * grad[base + ki];
                                    }
                                    dx[cf * t + ti] += acc;
                                }
                            }
                        }
                        dx
                    });
                    xt.accumulate_grad(&d);
                }
                if wt.requires_grad() {
                    let d = xt.with_data(|x, _| {
                        let mut dw = vec![T::zero(); c_from * c_to * k];
                        for cf in 0..c_from {
                            for co in 0..c_to {
                                let base = (cf * c_to + co) * k;
                                for ti in 0..t {
                                    let xv = x[cf * t + ti];
                                    if xv == T::zero() {
                                        continue;
                                    }
                                    let gbase = co * t_out + ti * stride;
                                    for ki in 0..k {
                                        dw[base + ki] += xv * grad[gbase + ki];
                                    }
                                }
                            }
                        }
                        dw
                    });
                    wt.accumulate_grad(&d);
                }
                if let Some(b) = &bt {
                    if b.requires_grad() {
                        let mut db = vec![T::zero(); c_to];
                        for co in 0..c_to {
                            for u in 0..t_out {
                                db[co] += grad[co * t_out + u];
                            }
                        }
                        b.accumulate_grad(&db);
                    }
                }
            },
        ))
    }

    /// Non-overlapping average pooling down to `target_len`; the input length
    /// must divide evenly (the network's padding policy guarantees this).
    pub fn avg_pool1d(&self, target_len: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || target_len == 0 || !s[1].is_multiple_of(target_len) {
            return Err(Error::Dimension {
                op: "avg_pool1d",
                lhs: s,
                rhs: vec![target_len],
            });
        }
        let (c, t) = (s[0], s[1]);
        let w = t / target_len;
        let inv = T::from_f64(1.0 / w as f64);
        let out = self.with_data(|x, _| {
            let mut y = vec![T::zero(); c * target_len];
            for ch in 0..c {
                for j in 0..target_len {
                    let mut acc = T::zero();
                    for i in 0..w {
                        acc += x[ch * t + j * w + i];
                    }
                    y[ch * target_len + j] = acc * inv;
                }
            }
            y
        });
        let lhs = self.clone();
        Ok(Tensor::from_op(
            out,
            &[c, target_len],
            "avg_pool1d",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let mut d = vec![T::zero(); c * t];
                    for ch in 0..c {
                        for j in 0..target_len {
                            let gv = g[ch * target_len + j] * inv;
                            for i in 0..w {
                                d[ch * t + j * w + i] = gv;
                            }
                        }
                    }
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Nearest-neighbor resampling along time: `out[c][t] = in[c][t*T/target]`.
    pub fn nearest_interp1d(&self, target_len: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || target_len == 0 {
            return Err(Error::Dimension {
                op: "nearest_interp1d",
                lhs: s,
                rhs: vec![target_len],
            });
        }
        let (c, t) = (s[0], s[1]);
        let src: Vec<usize> = (0..target_len).map(|ti| ti * t / target_len).collect();
        let out = self.with_data(|x, _| {
            let mut y = vec![T::zero(); c * target_len];
            for ch in 0..c {
                for (ti, si) in src.iter().enumerate() {
                    y[ch * target_len + ti] = x[ch * t + si];
                }
            }
            y
        });
        let lhs = self.clone();
        let saved_src = src;
        Ok(Tensor::from_op(
            out,
            &[c, target_len],
            "nearest_interp1d",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let mut d = vec![T::zero(); c * t];
                    for ch in 0..c {
                        for (ti, si) in saved_src.iter().enumerate() {
                            d[ch * t + si] += g[ch * target_len + ti];
                        }
                    }
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force correlation oracle: independent of the implementation,
    /// using explicitly padded input.
    fn conv_oracle(x: &[f64], w: &[f64], stride: usize, dilation: usize, pad: usize) -> Vec<f64> {
        let mut padded = vec![0.0; x.len() + 2 * pad];
        padded[pad..pad + x.len()].copy_from_slice(x);
        let span = dilation * (w.len() - 1) + 1;
        let mut out = Vec::new();
        let mut start = 0usize;
        while start + span <= padded.len() {
            let mut acc = 0.0;
            for (ki, wv) in w.iter().enumerate() {
                acc += wv * padded[start + ki * dilation];
            }
            out.push(acc);
            start += stride;
        }
        out
    }

    /// Overlap-add oracle for the transposed convolution.
    fn conv_transpose_oracle(x: &[f64], w: &[f64], stride: usize) -> Vec<f64> {
        let mut out = vec![0.0; (x.len() - 1) * stride + w.len()];
        for (ti, xv) in x.iter().enumerate() {
            for (ki, wv) in w.iter().enumerate() {
                out[ti * stride + ki] += xv * wv;
            }
        }
        out
    }

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data, shape)
    }

    #[test]
    fn identity_kernel() {
        let x = t(vec![1.0, 2.0, 3.0], &[1, 3]);
        let w = t(vec![1.0], &[1, 1, 1]);
        let y = x.conv1d(&w, None, ConvSpec::default()).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sliding_dot_product() {
        let x = t(vec![1.0, 2.0, 3.0], &[1, 3]);
        let w = t(vec![1.0, 1.0], &[1, 1, 2]);
        let y = x.conv1d(&w, None, ConvSpec::default()).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 5.0]);
        assert_eq!(
            y.to_vec(),
            conv_oracle(&[1.0, 2.0, 3.0], &[1.0, 1.0], 1, 1, 0)
        );
    }

    #[test]
    fn dilated_strided_shape_matches_oracle() {
        // length 8, K=5, stride 2, dilation 2, pad 4 -> T_out = 4
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let w: Vec<f64> = (0..5).map(|i| 0.3 - 0.1 * i as f64).collect();
        let spec = ConvSpec {
            stride: 2,
            dilation: 2,
            padding: 4,
            groups: 1,
        };
        let y = t(x.clone(), &[1, 8])
            .conv1d(&t(w.clone(), &[1, 1, 5]), None, spec)
            .unwrap();
        let oracle = conv_oracle(&x, &w, 2, 2, 4);
        assert_eq!(y.shape(), vec![1, 4]);
        assert_eq!(oracle.len(), 4);
        for (a, b) in y.to_vec().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grouped_conv_runs_per_group() {
        // 2 channels, depthwise: each output channel sees only its own input.
        let x = t(vec![1.0, 2.0, 10.0, 20.0], &[2, 2]);
        let w = t(vec![1.0, 1.0, 2.0, 2.0], &[2, 1, 2]);
        let spec = ConvSpec {
            groups: 2,
            ..ConvSpec::default()
        };
        let y = x.conv1d(&w, None, spec).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 60.0]);
    }

    #[test]
    fn nonpositive_stride_is_config_error() {
        let x = t(vec![1.0, 2.0], &[1, 2]);
        let w = t(vec![1.0], &[1, 1, 1]);
        let err = x
            .conv1d(
                &w,
                None,
                ConvSpec {
                    stride: 0,
                    ..ConvSpec::default()
                },
            )
            .unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let x = t(vec![1.0, 2.0], &[1, 2]);
        let w = t(vec![1.0, 1.0], &[1, 2, 1]); // expects 2 input channels
        let err = x.conv1d(&w, None, ConvSpec::default()).unwrap_err();
        match err {
            crate::Error::Dimension { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![1, 2]);
                assert_eq!(rhs, vec![1, 2, 1]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn transpose_single_frame_copies_kernel() {
        let x = t(vec![1.0], &[1, 1]);
        let w = t(vec![1.0, 1.0, 1.0, 1.0], &[1, 1, 4]);
        let y = x.conv_transpose1d(&w, None, 4).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn transpose_overlap_add_matches_oracle() {
        let x = vec![1.0, 1.0];
        let w = vec![1.0, 1.0, 1.0, 1.0];
        let y = t(x.clone(), &[1, 2])
            .conv_transpose1d(&t(w.clone(), &[1, 1, 4]), None, 2)
            .unwrap();
        let oracle = conv_transpose_oracle(&x, &w, 2);
        assert_eq!(y.numel(), 6); // (T-1)*stride + K = (2-1)*2 + 4
        assert_eq!(y.to_vec(), oracle);
        assert_eq!(oracle, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn adjointness_of_conv_and_transpose() {
        // <conv(x,k), y> == <x, convT(y,k)> for a spread of shapes.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for &(c_in, c_out, t_len, k, stride) in
            &[(1usize, 1usize, 8usize, 3usize, 1usize), (2, 3, 16, 5, 2), (4, 4, 12, 4, 4)]
        {
            let x: Vec<f64> = (0..c_in * t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..c_out * c_in * k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let spec = ConvSpec {
                stride,
                ..ConvSpec::default()
            };
            let xt = t(x.clone(), &[c_in, t_len]);
            let wt = t(w.clone(), &[c_out, c_in, k]);
            let fwd = xt.conv1d(&wt, None, spec).unwrap();
            let t_out = fwd.shape()[1];
            let y: Vec<f64> = (0..c_out * t_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yt = t(y.clone(), &[c_out, t_out]);
            let adj = yt.conv_transpose1d(&wt, None, stride).unwrap();

            let lhs: f64 = fwd.to_vec().iter().zip(&y).map(|(a, b)| a * b).sum();
            // The adjoint's support is (T_out-1)*stride + K samples; any
            // trailing input samples the forward conv never read contribute
            // zero, so the inner product runs over the overlap.
            let adj_v = adj.to_vec();
            let adj_len = adj.shape()[1];
            let overlap = t_len.min(adj_len);
            let rhs: f64 = (0..c_in)
                .flat_map(|c| (0..overlap).map(move |ti| (c, ti)))
                .map(|(c, ti)| x[c * t_len + ti] * adj_v[c * adj_len + ti])
                .sum();
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "adjointness violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn avg_pool_examples() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 4]);
        assert_eq!(x.avg_pool1d(2).unwrap().to_vec(), vec![1.5, 3.5]);
        let c = t(vec![5.0; 8], &[1, 8]);
        assert_eq!(c.avg_pool1d(2).unwrap().to_vec(), vec![5.0, 5.0]);
        assert_eq!(x.avg_pool1d(4).unwrap().to_vec(), x.to_vec());
        assert!(x.avg_pool1d(3).is_err());
    }

    #[test]
    fn nearest_interp_examples() {
        let x = t(vec![1.0, 2.0], &[1, 2]);
        assert_eq!(x.nearest_interp1d(4).unwrap().to_vec(), vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(x.nearest_interp1d(2).unwrap().to_vec(), x.to_vec());
        let s = t(vec![3.0], &[1, 1]);
        assert_eq!(s.nearest_interp1d(3).unwrap().to_vec(), vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn pool_then_interp_preserves_window_means() {
        let x = t(vec![1.0, 3.0, 2.0, 6.0, -1.0, 1.0, 0.0, 4.0], &[1, 8]);
        let pooled = x.avg_pool1d(4).unwrap();
        let back = pooled.nearest_interp1d(8).unwrap();
        let v = back.to_vec();
        for j in 0..4 {
            let mean = (x.to_vec()[2 * j] + x.to_vec()[2 * j + 1]) / 2.0;
            assert_eq!(v[2 * j], mean);
            assert_eq!(v[2 * j + 1], mean);
        }
    }
}
