use rand::Rng;

use super::{Scalar, Tensor};
use crate::{Error, Result};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<usize>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::Dimension {
            op,
            lhs: sa,
            rhs: sb,
        });
    }
    Ok(sa)
}

fn expect_scalar<T: Scalar>(op: &'static str, s: &Tensor<T>) -> Result<()> {
    if !s.is_scalar() {
        return Err(Error::Dimension {
            op,
            lhs: s.shape(),
            rhs: vec![1],
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    // ---- elementwise binary ---------------------------------------------

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = same_shape("add", self, other)?;
        let out = self.with_data(|a, _| {
            other.with_data(|b, _| a.iter().zip(b).map(|(x, y)| *x + *y).collect::<Vec<T>>())
        });
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "add",
            vec![self.clone(), other.clone()],
            move |g| {
                if lhs.requires_grad() {
                    lhs.accumulate_grad(g);
                }
                if rhs.requires_grad() {
                    rhs.accumulate_grad(g);
                }
            },
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = same_shape("sub", self, other)?;
        let out = self.with_data(|a, _| {
            other.with_data(|b, _| a.iter().zip(b).map(|(x, y)| *x - *y).collect::<Vec<T>>())
        });
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "sub",
            vec![self.clone(), other.clone()],
            move |g| {
                if lhs.requires_grad() {
                    lhs.accumulate_grad(g);
                }
                if rhs.requires_grad() {
                    let neg: Vec<T> = g.iter().map(|v| -*v).collect();
                    rhs.accumulate_grad(&neg);
                }
            },
        ))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = same_shape("mul", self, other)?;
        let out = self.with_data(|a, _| {
            other.with_data(|b, _| a.iter().zip(b).map(|(x, y)| *x * *y).collect::<Vec<T>>())
        });
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "mul",
            vec![self.clone(), other.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d: Vec<T> =
                        rhs.with_data(|b, _| g.iter().zip(b).map(|(gi, y)| *gi * *y).collect());
                    lhs.accumulate_grad(&d);
                }
                if rhs.requires_grad() {
                    let d: Vec<T> =
                        lhs.with_data(|a, _| g.iter().zip(a).map(|(gi, x)| *gi * *x).collect());
                    rhs.accumulate_grad(&d);
                }
            },
        ))
    }

    // ---- scalar-tensor broadcasts (scalar is a [1] tensor) ---------------

    /// `self - s`, broadcasting the scalar over every element.
    pub fn sub_scalar_t(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        expect_scalar("sub_scalar_t", s)?;
        let sv = s.item();
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| *x - sv).collect());
        let (lhs, rhs) = (self.clone(), s.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "sub_scalar_t",
            vec![self.clone(), s.clone()],
            move |g| {
                if lhs.requires_grad() {
                    lhs.accumulate_grad(g);
                }
                if rhs.requires_grad() {
                    let total: T = g.iter().copied().sum();
                    rhs.accumulate_grad(&[-total]);
                }
            },
        ))
    }

    /// `self * s` with a scalar tensor.
    pub fn mul_scalar_t(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        expect_scalar("mul_scalar_t", s)?;
        let sv = s.item();
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| *x * sv).collect());
        let (lhs, rhs) = (self.clone(), s.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "mul_scalar_t",
            vec![self.clone(), s.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d: Vec<T> = g.iter().map(|gi| *gi * sv).collect();
                    lhs.accumulate_grad(&d);
                }
                if rhs.requires_grad() {
                    let total: T = lhs.with_data(|a, _| {
                        g.iter().zip(a).map(|(gi, x)| *gi * *x).sum()
                    });
                    rhs.accumulate_grad(&[total]);
                }
            },
        ))
    }

    /// `self / s` with a scalar tensor.
    pub fn div_scalar_t(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        expect_scalar("div_scalar_t", s)?;
        let sv = s.item();
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| *x / sv).collect());
        let (lhs, rhs) = (self.clone(), s.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "div_scalar_t",
            vec![self.clone(), s.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d: Vec<T> = g.iter().map(|gi| *gi / sv).collect();
                    lhs.accumulate_grad(&d);
                }
                if rhs.requires_grad() {
                    // d/ds (x/s) = -x / s^2
                    let total: T = lhs.with_data(|a, _| {
                        g.iter().zip(a).map(|(gi, x)| *gi * *x).sum()
                    });
                    rhs.accumulate_grad(&[-total / (sv * sv)]);
                }
            },
        ))
    }

    // ---- elementwise unary ------------------------------------------------

    pub fn scale(&self, c: T) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| *x * c).collect());
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "scale", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> = g.iter().map(|gi| *gi * c).collect();
                lhs.accumulate_grad(&d);
            }
        })
    }

    pub fn add_const(&self, c: T) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| *x + c).collect());
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "add_const", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                lhs.accumulate_grad(g);
            }
        })
    }

    pub fn relu(&self) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| {
            a.iter()
                .map(|x| if *x > T::zero() { *x } else { T::zero() })
                .collect()
        });
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "relu", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> = lhs.with_data(|a, _| {
                    g.iter()
                        .zip(a)
                        .map(|(gi, x)| if *x > T::zero() { *gi } else { T::zero() })
                        .collect()
                });
                lhs.accumulate_grad(&d);
            }
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| {
            a.iter()
                .map(|x| T::one() / (T::one() + (-*x).exp()))
                .collect()
        });
        let saved = out.clone();
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "sigmoid", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> = g
                    .iter()
                    .zip(&saved)
                    .map(|(gi, y)| *gi * *y * (T::one() - *y))
                    .collect();
                lhs.accumulate_grad(&d);
            }
        })
    }

    /// Natural log; inputs must be strictly positive.
    pub fn ln(&self) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| a.iter().map(|x| x.ln()).collect());
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "ln", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> =
                    lhs.with_data(|a, _| g.iter().zip(a).map(|(gi, x)| *gi / *x).collect());
                lhs.accumulate_grad(&d);
            }
        })
    }

    /// Saturating clamp; gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| {
            a.iter()
                .map(|x| if *x < lo { lo } else if *x > hi { hi } else { *x })
                .collect()
        });
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "clamp", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> = lhs.with_data(|a, _| {
                    g.iter()
                        .zip(a)
                        .map(|(gi, x)| if *x >= lo && *x <= hi { *gi } else { T::zero() })
                        .collect()
                });
                lhs.accumulate_grad(&d);
            }
        })
    }

    /// Parametric ReLU with a learnable scalar slope for the negative part.
    pub fn prelu(&self, slope: &Tensor<T>) -> Result<Tensor<T>> {
        expect_scalar("prelu", slope)?;
        let s = slope.item();
        let shape = self.shape();
        let out: Vec<T> = self.with_data(|a, _| {
            a.iter()
                .map(|x| if *x >= T::zero() { *x } else { s * *x })
                .collect()
        });
        let (lhs, sl) = (self.clone(), slope.clone());
        Ok(Tensor::from_op(
            out,
            &shape,
            "prelu",
            vec![self.clone(), slope.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d: Vec<T> = lhs.with_data(|a, _| {
                        g.iter()
                            .zip(a)
                            .map(|(gi, x)| if *x >= T::zero() { *gi } else { *gi * s })
                            .collect()
                    });
                    lhs.accumulate_grad(&d);
                }
                if sl.requires_grad() {
                    let total: T = lhs.with_data(|a, _| {
                        g.iter()
                            .zip(a)
                            .filter(|(_, x)| **x < T::zero())
                            .map(|(gi, x)| *gi * *x)
                            .sum()
                    });
                    sl.accumulate_grad(&[total]);
                }
            },
        ))
    }

    // ---- reductions -------------------------------------------------------

    /// Sum of all elements, as a `[1]` tensor. Accumulates in f64 so large
    /// f32 reductions stay accurate; the order is fixed, so results are
    /// reproducible bit-for-bit.
    pub fn sum_all(&self) -> Tensor<T> {
        let total =
            self.with_data(|a, _| a.iter().fold(0.0f64, |acc, x| acc + x.to_f64_lossy()));
        let lhs = self.clone();
        Tensor::from_op(
            vec![T::from_f64(total)],
            &[1],
            "sum_all",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d = vec![g[0]; lhs.numel()];
                    lhs.accumulate_grad(&d);
                }
            },
        )
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.numel();
        let total =
            self.with_data(|a, _| a.iter().fold(0.0f64, |acc, x| acc + x.to_f64_lossy()));
        let lhs = self.clone();
        Tensor::from_op(
            vec![T::from_f64(total / n as f64)],
            &[1],
            "mean_all",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let inv = T::from_f64(1.0 / n as f64);
                    let d = vec![g[0] * inv; lhs.numel()];
                    lhs.accumulate_grad(&d);
                }
            },
        )
    }

    // ---- matrix ops ---------------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let sa = self.shape();
        let sb = other.shape();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = self.with_data(|a, _| other.with_data(|b, _| matmul_raw(a, b, m, k, n)));
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            &[m, n],
            "matmul",
            vec![self.clone(), other.clone()],
            move |g| {
                if lhs.requires_grad() {
                    // dA = G . B^T
                    let d = rhs.with_data(|b, _| {
                        let bt = transpose_raw(b, k, n);
                        matmul_raw(g, &bt, m, n, k)
                    });
                    lhs.accumulate_grad(&d);
                }
                if rhs.requires_grad() {
                    // dB = A^T . G
                    let d = lhs.with_data(|a, _| {
                        let at = transpose_raw(a, m, k);
                        matmul_raw(&at, g, k, m, n)
                    });
                    rhs.accumulate_grad(&d);
                }
            },
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: "transpose",
                lhs: s,
                rhs: vec![0, 0],
            });
        }
        let (r, c) = (s[0], s[1]);
        let out = self.with_data(|a, _| transpose_raw(a, r, c));
        let lhs = self.clone();
        Ok(Tensor::from_op(
            out,
            &[c, r],
            "transpose",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let d = transpose_raw(g, c, r);
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Row-wise softmax of a `[rows, cols]` matrix with max-subtraction for
    /// numerical stability. Every output row sums to 1.
    pub fn softmax_rows(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: "softmax_rows",
                lhs: s,
                rhs: vec![0, 0],
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let out = self.with_data(|a, _| {
            let mut y = vec![T::zero(); rows * cols];
            for r in 0..rows {
                let row = &a[r * cols..(r + 1) * cols];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (j, x) in row.iter().enumerate() {
                    let e = (*x - max).exp();
                    y[r * cols + j] = e;
                    sum += e;
                }
                for j in 0..cols {
                    y[r * cols + j] /= sum;
                }
            }
            y
        });
        let saved = out.clone();
        let lhs = self.clone();
        Ok(Tensor::from_op(
            out,
            &[rows, cols],
            "softmax_rows",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let mut d = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        let base = r * cols;
                        let mut dot = T::zero();
                        for j in 0..cols {
                            dot += g[base + j] * saved[base + j];
                        }
                        for j in 0..cols {
                            d[base + j] = saved[base + j] * (g[base + j] - dot);
                        }
                    }
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }

    // ---- structural ops -------------------------------------------------

    /// Concatenate along the first axis; all inputs must share trailing dims.
    pub fn concat_rows(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let first = parts[0].shape();
        let tail = &first[1..];
        let mut rows = 0usize;
        for p in parts {
            let s = p.shape();
            if &s[1..] != tail {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    lhs: first.clone(),
                    rhs: s,
                });
            }
            rows += s[0];
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        let mut out = Vec::with_capacity(shape.iter().product());
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            p.with_data(|d, _| out.extend_from_slice(d));
            sizes.push(p.numel());
        }
        let captured: Vec<Tensor<T>> = parts.to_vec();
        Ok(Tensor::from_op(
            out,
            &shape,
            "concat_rows",
            parts.to_vec(),
            move |g| {
                let mut offset = 0usize;
                for (p, sz) in captured.iter().zip(&sizes) {
                    if p.requires_grad() {
                        p.accumulate_grad(&g[offset..offset + sz]);
                    }
                    offset += sz;
                }
            },
        ))
    }

    /// Rows `[start, start+count)` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || start + count > s[0] {
            return Err(Error::Dimension {
                op: "slice_rows",
                lhs: s,
                rhs: vec![start, count],
            });
        }
        let cols = s[1];
        let total = s[0] * cols;
        let out = self.with_data(|a, _| a[start * cols..(start + count) * cols].to_vec());
        let lhs = self.clone();
        Ok(Tensor::from_op(
            out,
            &[count, cols],
            "slice_rows",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let mut d = vec![T::zero(); total];
                    d[start * cols..(start + count) * cols].copy_from_slice(g);
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Columns `[start, start+len)` of a `[C, T]` tensor (a time crop).
    pub fn slice_time(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::Dimension {
                op: "slice_time",
                lhs: s,
                rhs: vec![start, len],
            });
        }
        let (c, t) = (s[0], s[1]);
        let out = self.with_data(|a, _| {
            let mut v = Vec::with_capacity(c * len);
            for ch in 0..c {
                v.extend_from_slice(&a[ch * t + start..ch * t + start + len]);
            }
            v
        });
        let lhs = self.clone();
        Ok(Tensor::from_op(
            out,
            &[c, len],
            "slice_time",
            vec![self.clone()],
            move |g| {
                if lhs.requires_grad() {
                    let mut d = vec![T::zero(); c * t];
                    for ch in 0..c {
                        d[ch * t + start..ch * t + start + len]
                            .copy_from_slice(&g[ch * len..(ch + 1) * len]);
                    }
                    lhs.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Per-channel bias broadcast over time: `out[c,t] = x[c,t] + b[c]`.
    pub fn add_channel_bias(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || bias.numel() != s[0] {
            return Err(Error::Dimension {
                op: "add_channel_bias",
                lhs: s,
                rhs: bias.shape(),
            });
        }
        let (c, t) = (s[0], s[1]);
        let out = self.with_data(|a, _| {
            bias.with_data(|b, _| {
                let mut v = a.to_vec();
                for ch in 0..c {
                    for ti in 0..t {
                        v[ch * t + ti] += b[ch];
                    }
                }
                v
            })
        });
        let (lhs, bt) = (self.clone(), bias.clone());
        Ok(Tensor::from_op(
            out,
            &s,
            "add_channel_bias",
            vec![self.clone(), bias.clone()],
            move |g| {
                if lhs.requires_grad() {
                    lhs.accumulate_grad(g);
                }
                if bt.requires_grad() {
                    let mut d = vec![T::zero(); c];
                    for ch in 0..c {
                        for ti in 0..t {
                            d[ch] += g[ch * t + ti];
                        }
                    }
                    bt.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Global layer normalization: standardize over channel and time jointly,
    /// then apply a per-channel affine. `gain`/`bias` carry one value per
    /// channel. Statistics accumulate in f64.
    pub fn gln(&self, gain: &Tensor<T>, bias: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || gain.numel() != s[0] || bias.numel() != s[0] {
            return Err(Error::Dimension {
                op: "gln",
                lhs: s,
                rhs: gain.shape(),
            });
        }
        let (c, t) = (s[0], s[1]);
        let n = (c * t) as f64;
        let (xhat, inv_std) = self.with_data(|a, _| {
            let mean = a.iter().fold(0.0f64, |acc, v| acc + v.to_f64_lossy()) / n;
            let var = a
                .iter()
                .fold(0.0f64, |acc, v| {
                    let d = v.to_f64_lossy() - mean;
                    acc + d * d
                })
                / n;
            let inv = 1.0 / (var + eps).sqrt();
            let xhat: Vec<T> = a
                .iter()
                .map(|v| T::from_f64((v.to_f64_lossy() - mean) * inv))
                .collect();
            (xhat, inv)
        });
        let out = gain.with_data(|gv, _| {
            bias.with_data(|bv, _| {
                let mut y = vec![T::zero(); c * t];
                for ch in 0..c {
                    for ti in 0..t {
                        y[ch * t + ti] = gv[ch] * xhat[ch * t + ti] + bv[ch];
                    }
                }
                y
            })
        });
        let (xt, gt, bt) = (self.clone(), gain.clone(), bias.clone());
        let saved_xhat = xhat;
        Ok(Tensor::from_op(
            out,
            &s,
            "gln",
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                if gt.requires_grad() {
                    let mut d = vec![T::zero(); c];
                    for ch in 0..c {
                        for ti in 0..t {
                            d[ch] += g[ch * t + ti] * saved_xhat[ch * t + ti];
                        }
                    }
                    gt.accumulate_grad(&d);
                }
                if bt.requires_grad() {
                    let mut d = vec![T::zero(); c];
                    for ch in 0..c {
                        for ti in 0..t {
                            d[ch] += g[ch * t + ti];
                        }
                    }
                    bt.accumulate_grad(&d);
                }
                if xt.requires_grad() {
                    // p = g * gain (per channel); dx = inv_std*(p - mean(p) - xhat*mean(p.xhat))
                    let p: Vec<f64> = gt.with_data(|gv, _| {
                        let mut p = vec![0.0f64; c * t];
                        for ch in 0..c {
                            for ti in 0..t {
                                p[ch * t + ti] =
                                    g[ch * t + ti].to_f64_lossy() * gv[ch].to_f64_lossy();
                            }
                        }
                        p
                    });
                    let mean_p = p.iter().sum::<f64>() / n;
                    let mean_px = p
                        .iter()
                        .zip(&saved_xhat)
                        .map(|(pi, xh)| pi * xh.to_f64_lossy())
                        .sum::<f64>()
                        / n;
                    let d: Vec<T> = p
                        .iter()
                        .zip(&saved_xhat)
                        .map(|(pi, xh)| {
                            T::from_f64(inv_std * (pi - mean_p - xh.to_f64_lossy() * mean_px))
                        })
                        .collect();
                    xt.accumulate_grad(&d);
                }
            },
        ))
    }

    /// Inverted dropout: kept elements are scaled by `1/(1-p)` so the
    /// expectation is unchanged. `p == 0` is the identity and draws nothing
    /// from the RNG.
    pub fn dropout<R: Rng>(&self, p: f64, rng: &mut R) -> Tensor<T> {
        assert!((0.0..1.0).contains(&p), "dropout probability {p} out of range");
        if p == 0.0 {
            return self.clone();
        }
        let shape = self.shape();
        let scale = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel())
            .map(|_| {
                if rng.gen::<f64>() >= p {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let out = self.with_data(|a, _| {
            a.iter()
                .zip(&mask)
                .map(|(x, m)| *x * *m)
                .collect::<Vec<T>>()
        });
        let lhs = self.clone();
        Tensor::from_op(out, &shape, "dropout", vec![self.clone()], move |g| {
            if lhs.requires_grad() {
                let d: Vec<T> = g.iter().zip(&mask).map(|(gi, m)| *gi * *m).collect();
                lhs.accumulate_grad(&d);
            }
        })
    }
}

pub(super) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

pub(super) fn transpose_raw<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;

    #[test]
    fn sum_backward_is_ones() {
        let x = Tensor::param(vec![1.0f64, -2.0, 3.5, 0.0], &[2, 2]);
        x.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn square_backward() {
        let x = Tensor::param(vec![1.0f64, 2.0], &[2]);
        let y = x.mul(&x).unwrap().sum_all();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::from_vec(vec![5.0f64, 6.0, 7.0, 8.0], &[2, 2]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let x = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, -1.0, 0.0, 1.0], &[2, 3]);
        let y = x.softmax_rows().unwrap();
        let v = y.to_vec();
        for r in 0..2 {
            let s: f64 = v[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prelu_examples() {
        let x = Tensor::from_vec(vec![-1.0f64, 0.0, 2.0], &[3]);
        let quarter = Tensor::scalar(0.25f64);
        assert_eq!(x.prelu(&quarter).unwrap().to_vec(), vec![-0.25, 0.0, 2.0]);
        let one = Tensor::scalar(1.0f64);
        assert_eq!(x.prelu(&one).unwrap().to_vec(), x.to_vec());
        let zero = Tensor::scalar(0.0f64);
        assert_eq!(x.prelu(&zero).unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn gln_constant_input_is_zero() {
        let x = Tensor::from_vec(vec![3.0f64; 8], &[2, 4]);
        let gain = Tensor::from_vec(vec![1.0, 1.0], &[2, 1]);
        let bias = Tensor::from_vec(vec![0.0, 0.0], &[2, 1]);
        let y = x.gln(&gain, &bias, 1e-8).unwrap();
        for v in y.to_vec() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn gln_standardizes_and_is_shift_scale_invariant() {
        let x = Tensor::from_vec(vec![1.0f64, -2.0, 0.5, 4.0, -1.0, 2.0], &[2, 3]);
        let gain = Tensor::from_vec(vec![1.0, 1.0], &[2, 1]);
        let bias = Tensor::from_vec(vec![0.0, 0.0], &[2, 1]);
        let y = x.gln(&gain, &bias, 1e-10).unwrap().to_vec();
        let mean: f64 = y.iter().sum::<f64>() / 6.0;
        let var: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-5);

        let x2 = x.scale(3.0).add_const(7.0);
        let y2 = x2.gln(&gain, &bias, 1e-10).unwrap().to_vec();
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_zero_p_is_identity_without_rng_draws() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let before = rand::Rng::gen::<u64>(&mut rng);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::from_vec(vec![1.0f32, 2.0], &[2]);
        let y = x.dropout(0.0, &mut rng);
        assert_eq!(y.to_vec(), x.to_vec());
        assert_eq!(rand::Rng::gen::<u64>(&mut rng), before);
    }

    #[test]
    fn slice_time_crops_columns() {
        let x = Tensor::from_vec(vec![0.0f64, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0], &[2, 4]);
        let y = x.slice_time(1, 2).unwrap();
        assert_eq!(y.shape(), vec![2, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 11.0, 12.0]);
    }
}
