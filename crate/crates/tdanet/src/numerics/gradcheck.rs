use super::{no_grad, Tensor};
use crate::Result;

/// Outcome of an analytic-vs-numeric gradient comparison. A failing check is
/// a report, not an error.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// (input index, flat element index, analytic, numeric) of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked_elements: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} (tol {:.1e}, {} elements",
            if self.passed() { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.tolerance,
            self.checked_elements,
        )?;
        if let Some((inp, idx, a, n)) = self.worst {
            write!(
                f,
                ", worst input {inp} element {idx}: analytic {a:.9e} numeric {n:.9e}"
            )?;
        }
        write!(f, ")")
    }
}

const FD_STEP: f64 = 1e-5;

/// Core comparison: `loss` is re-evaluated while the given leaf tensors are
/// perturbed in place. The analytic pass runs once up front; numeric passes
/// run without a tape.
///
/// `max_elements_per_input` bounds how many coordinates of each leaf are
/// perturbed (chosen at a fixed stride, deterministically); `None` checks
/// every element.
pub fn grad_check_params<F>(
    loss: F,
    params: &[Tensor<f64>],
    tolerance: f64,
    max_elements_per_input: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    for p in params {
        p.zero_grad();
    }
    let out = loss()?;
    out.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;
    for (pi, p) in params.iter().enumerate() {
        let orig = p.to_vec();
        let n = orig.len();
        let limit = max_elements_per_input.unwrap_or(n).max(1);
        let stride = n.div_ceil(limit);
        let mut ei = 0usize;
        while ei < n {
            let mut work = orig.clone();
            work[ei] = orig[ei] + FD_STEP;
            p.set_data(work.clone());
            let plus = no_grad(&loss)?.item();
            work[ei] = orig[ei] - FD_STEP;
            p.set_data(work);
            let minus = no_grad(&loss)?.item();
            p.set_data(orig.clone());

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[pi][ei];
            // Relative error with an absolute floor: gradients that are
            // mathematically zero carry ~1e-10 of central-difference noise,
            // which must not register as relative error.
            let denom = a.abs().max(numeric.abs()).max(1e-4);
            let rel = (a - numeric).abs() / denom;
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = Some((pi, ei, a, numeric));
            }
            ei += stride;
        }
    }

    Ok(GradCheckReport {
        max_rel_err: max_rel,
        tolerance,
        worst,
        checked_elements: checked,
    })
}

/// Compares the reverse-mode gradient of a scalar-valued function against
/// central finite differences at 64-bit precision.
pub fn grad_check<F>(
    f: F,
    inputs: &[Vec<f64>],
    shapes: &[Vec<usize>],
    tolerance: f64,
    max_elements_per_input: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    assert_eq!(inputs.len(), shapes.len());
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .zip(shapes)
        .map(|(d, s)| Tensor::param(d.clone(), s))
        .collect();
    let captured = leaves.clone();
    grad_check_params(
        move || f(&captured),
        &leaves,
        tolerance,
        max_elements_per_input,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ConvSpec;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(1234)
    }

    fn randv(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut r = rng();
        let x = randv(&mut r, 12);
        let report = grad_check(
            |ts| {
                let y = ts[0].sigmoid().mul(&ts[0])?;
                Ok(y.sum_all())
            },
            &[x],
            &[vec![3, 4]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn conv1d_gradients() {
        let mut r = rng();
        let x = randv(&mut r, 2 * 16);
        let w = randv(&mut r, 4 * 2 * 5);
        let b = randv(&mut r, 4);
        let spec = ConvSpec {
            stride: 2,
            dilation: 2,
            padding: 4,
            groups: 1,
        };
        let report = grad_check(
            |ts| {
                let y = ts[0].conv1d(&ts[1], Some(&ts[2]), spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w, b],
            &[vec![2, 16], vec![4, 2, 5], vec![4]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn depthwise_conv_gradients() {
        let mut r = rng();
        let x = randv(&mut r, 4 * 12);
        let w = randv(&mut r, 4 * 5);
        let spec = ConvSpec {
            stride: 2,
            dilation: 2,
            padding: 4,
            groups: 4,
        };
        let report = grad_check(
            |ts| {
                let y = ts[0].conv1d(&ts[1], None, spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w],
            &[vec![4, 12], vec![4, 1, 5]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn pointwise_grouped_conv_gradients() {
        let mut r = rng();
        let x = randv(&mut r, 4 * 10);
        let w = randv(&mut r, 4 * 2); // groups=2: [4, 2, 1]
        let spec = ConvSpec {
            groups: 2,
            ..ConvSpec::default()
        };
        let report = grad_check(
            |ts| {
                let y = ts[0].conv1d(&ts[1], None, spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w],
            &[vec![4, 10], vec![4, 2, 1]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn conv_transpose_gradients() {
        let mut r = rng();
        let x = randv(&mut r, 3 * 6);
        let w = randv(&mut r, 3 * 2 * 4);
        let report = grad_check(
            |ts| {
                let y = ts[0].conv_transpose1d(&ts[1], None, 2)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w],
            &[vec![3, 6], vec![3, 2, 4]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn pool_interp_gln_gradients() {
        let mut r = rng();
        let x = randv(&mut r, 2 * 8);
        let gain = randv(&mut r, 2);
        let bias = randv(&mut r, 2);
        let report = grad_check(
            |ts| {
                let pooled = ts[0].avg_pool1d(4)?;
                let up = pooled.nearest_interp1d(8)?;
                let y = up.gln(&ts[1], &ts[2], 1e-8)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, gain, bias],
            &[vec![2, 8], vec![2], vec![2]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn softmax_matmul_gradients() {
        let mut r = rng();
        let a = randv(&mut r, 3 * 4);
        let b = randv(&mut r, 4 * 3);
        let report = grad_check(
            |ts| {
                let m = ts[0].matmul(&ts[1])?;
                let s = m.softmax_rows()?;
                Ok(s.mul(&s)?.sum_all())
            },
            &[a, b],
            &[vec![3, 4], vec![4, 3]],
            1e-4,
            None,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn subsampling_selects_deterministically() {
        let mut r = rng();
        let x = randv(&mut r, 100);
        let run = || {
            grad_check(
                |ts| Ok(ts[0].sigmoid().sum_all()),
                std::slice::from_ref(&x),
                &[vec![100]],
                1e-4,
                Some(7),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert!(a.checked_elements <= 15 && a.checked_elements >= 7);
        assert_eq!(a.checked_elements, b.checked_elements);
        assert_eq!(a.max_rel_err, b.max_rel_err);
        assert!(a.passed());
    }
}
