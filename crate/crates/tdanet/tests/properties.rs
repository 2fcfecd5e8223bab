//! Property tests for the numeric invariants that must hold across shapes,
//! not just on hand-picked cases.

use proptest::prelude::*;

use tdanet::numerics::{ConvSpec, Tensor};
use tdanet::training::{pit_align, si_snr, SiSnrOptions};

fn conv_output_len_oracle(t: usize, k: usize, stride: usize, dilation: usize, pad: usize) -> Option<usize> {
    // count positions of the dilated kernel over the padded input
    let padded = t + 2 * pad;
    let span = dilation * (k - 1) + 1;
    if padded < span {
        return None;
    }
    let mut count = 0;
    let mut start = 0;
    while start + span <= padded {
        count += 1;
        start += stride;
    }
    Some(count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_shape_formula_matches_enumeration(
        t in 1usize..64,
        k in 1usize..8,
        stride in 1usize..4,
        dilation in 1usize..4,
        pad in 0usize..8,
    ) {
        let spec = ConvSpec { stride, dilation, padding: pad, groups: 1 };
        let x = Tensor::from_vec(vec![1.0f64; t], &[1, t]);
        let w = Tensor::from_vec(vec![1.0f64; k], &[1, 1, k]);
        match (spec.output_len(t, k), conv_output_len_oracle(t, k, stride, dilation, pad)) {
            (Some(formula), Some(oracle)) => {
                prop_assert_eq!(formula, oracle);
                let y = x.conv1d(&w, None, spec).unwrap();
                prop_assert_eq!(y.shape()[1], oracle);
            }
            (None, None) => {
                prop_assert!(x.conv1d(&w, None, spec).is_err());
            }
            (a, b) => prop_assert!(false, "formula {:?} vs oracle {:?}", a, b),
        }
    }

    #[test]
    fn conv_and_transpose_are_adjoint(
        c_in in 1usize..4,
        c_out in 1usize..4,
        t in 6usize..24,
        k in 1usize..6,
        stride in 1usize..4,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        prop_assume!(t >= k);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..c_in * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..c_out * c_in * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xt = Tensor::from_vec(x.clone(), &[c_in, t]);
        let wt = Tensor::from_vec(w, &[c_out, c_in, k]);
        let spec = ConvSpec { stride, ..ConvSpec::default() };
        let fwd = xt.conv1d(&wt, None, spec).unwrap();
        let t_out = fwd.shape()[1];
        let y: Vec<f64> = (0..c_out * t_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let yt = Tensor::from_vec(y.clone(), &[c_out, t_out]);
        let adj = yt.conv_transpose1d(&wt, None, stride).unwrap();

        let lhs: f64 = fwd.to_vec().iter().zip(&y).map(|(a, b)| a * b).sum();
        let adj_v = adj.to_vec();
        let adj_len = adj.shape()[1];
        let overlap = t.min(adj_len);
        let rhs: f64 = (0..c_in)
            .flat_map(|c| (0..overlap).map(move |ti| (c, ti)))
            .map(|(c, ti)| x[c * t + ti] * adj_v[c * adj_len + ti])
            .sum();
        prop_assert!((lhs - rhs).abs() < 1e-9, "adjointness violated: {} vs {}", lhs, rhs);
    }

    #[test]
    fn pool_then_interp_preserves_window_means(
        c in 1usize..4,
        target in 1usize..8,
        window in 1usize..6,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = target * window;
        let data: Vec<f64> = (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(data.clone(), &[c, t]);
        let back = x.avg_pool1d(target).unwrap().nearest_interp1d(t).unwrap().to_vec();
        for ch in 0..c {
            for j in 0..target {
                let mean: f64 = (0..window)
                    .map(|i| data[ch * t + j * window + i])
                    .sum::<f64>() / window as f64;
                for i in 0..window {
                    prop_assert!((back[ch * t + j * window + i] - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wav_float32_roundtrip_is_bit_exact(samples in prop::collection::vec(-1.0f32..1.0, 1..400)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.wav");
        tdanet::datagen::write_wav_f32(&path, &samples, 16_000).unwrap();
        let (back, sr) = tdanet::datagen::read_wav(&path).unwrap();
        prop_assert_eq!(sr, 16_000);
        prop_assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pit_alignment_value_is_permutation_invariant(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let estimates: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let opts = SiSnrOptions::default();
        let (base, _) = pit_align(&estimates, &targets, &opts).unwrap();
        let shuffled = vec![targets[1].clone(), targets[2].clone(), targets[0].clone()];
        let (swapped, _) = pit_align(&estimates, &shuffled, &opts).unwrap();
        prop_assert!((base - swapped).abs() < 1e-12);
    }

    #[test]
    fn si_snr_is_scale_invariant(alpha in 0.01f64..100.0, seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let est: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let opts = SiSnrOptions::default();
        let base = si_snr(&est, &tgt, &opts).unwrap();
        let scaled: Vec<f64> = est.iter().map(|v| alpha * v).collect();
        let v = si_snr(&scaled, &tgt, &opts).unwrap();
        prop_assert!((v - base).abs() < 1e-9, "alpha {}: {} vs {}", alpha, v, base);
    }
}
