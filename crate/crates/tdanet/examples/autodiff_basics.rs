//! The tensor engine on its own: build a small expression, differentiate it,
//! and cross-check one gradient against central finite differences.

use tdanet::numerics::{grad_check, ConvSpec, Tensor};

fn main() {
    // y = sum(sigmoid(conv(x, w)))^2-ish pipeline, differentiated in reverse mode
    let x = Tensor::param(vec![0.5f64, -1.0, 2.0, 0.25, -0.75, 1.5], &[1, 6]);
    let w = Tensor::param(vec![0.2f64, -0.4, 0.6], &[1, 1, 3]);

    let conv = x
        .conv1d(&w, None, ConvSpec::default())
        .expect("shapes line up");
    let loss = conv.sigmoid().mul(&conv).expect("same shape").sum_all();
    println!("loss = {:.6}", loss.item());

    loss.backward().expect("fresh tape");
    println!("dL/dx = {:?}", x.grad().unwrap());
    println!("dL/dw = {:?}", w.grad().unwrap());

    // the same computation, checked against finite differences at 64 bit
    let report = grad_check(
        |ts| {
            let c = ts[0].conv1d(&ts[1], None, ConvSpec::default())?;
            Ok(c.sigmoid().mul(&c)?.sum_all())
        },
        &[x.to_vec(), w.to_vec()],
        &[vec![1, 6], vec![1, 1, 3]],
        1e-4,
        None,
    )
    .expect("check runs");
    println!("finite-difference agreement: {report}");
    assert!(report.passed());
}
