//! The metric suite on controlled estimates: perfect estimates hit the clamp
//! ceiling, passthrough estimates score exactly zero improvement, and noisy
//! estimates land in between.

use tdanet::datagen::{simulate_example, Recipe};
use tdanet::eval::evaluate_estimates;
use tdanet::training::SiSnrOptions;

fn main() {
    let ex = simulate_example(Recipe::Lrs2TwoMixStyle, 1.0, 16_000, 5).expect("example");
    let opts = SiSnrOptions::default();

    let oracle = evaluate_estimates(0, &ex.sources, &ex.sources, &ex.mixture, &opts).unwrap();
    println!(
        "oracle estimates:      SI-SNRi {:>7.2} dB   SDRi {:>7.2} dB",
        oracle.si_snri_db, oracle.sdri_db
    );

    let passthrough = vec![ex.mixture.clone(), ex.mixture.clone()];
    let zero = evaluate_estimates(1, &passthrough, &ex.sources, &ex.mixture, &opts).unwrap();
    println!(
        "mixture as estimates:  SI-SNRi {:>7.2} dB   SDRi {:>7.2} dB",
        zero.si_snri_db, zero.sdri_db
    );
    assert_eq!(zero.si_snri_db, 0.0);

    // sources with a bit of the other speaker leaked in
    let leaky: Vec<Vec<f32>> = (0..2)
        .map(|i| {
            ex.sources[i]
                .iter()
                .zip(&ex.sources[1 - i])
                .map(|(own, other)| own + 0.2 * other)
                .collect()
        })
        .collect();
    let noisy = evaluate_estimates(2, &leaky, &ex.sources, &ex.mixture, &opts).unwrap();
    println!(
        "20% leakage:           SI-SNRi {:>7.2} dB   SDRi {:>7.2} dB",
        noisy.si_snri_db, noisy.sdri_db
    );
}
