//! Static complexity numbers across the ablation grid, plus a quick
//! real-time-factor measurement on a reduced configuration.

use tdanet::eval::{cpu_rtf, profile};
use tdanet::model::{count_macs, Fusion, ModelConfig, TdaNet};

fn main() {
    let default = ModelConfig::default();
    let rows: Vec<(&str, ModelConfig)> = vec![
        ("full (GA + LA)", default.clone()),
        (
            "no GA / no LA",
            ModelConfig {
                use_ga: false,
                use_la: false,
                ..default.clone()
            },
        ),
        (
            "GA only",
            ModelConfig {
                use_la: false,
                ..default.clone()
            },
        ),
        (
            "LA only",
            ModelConfig {
                use_ga: false,
                ..default.clone()
            },
        ),
        (
            "concat fusion",
            ModelConfig {
                fusion: Fusion::Concat,
                ..default.clone()
            },
        ),
    ];

    println!("{:<16} {:>10} {:>11}", "variant", "params (M)", "MACs (G/s)");
    for (name, cfg) in &rows {
        let report = profile(cfg).expect("profile");
        println!(
            "{:<16} {:>10.3} {:>11.3}",
            name, report.params_m, report.macs_g_per_s
        );
    }

    // per-block breakdown scales linearly in the unfold count
    let macs = count_macs(&default, 1.0).expect("macs");
    println!(
        "\nfixed portion {:.3} G, {} unfolds x {:.3} G per block",
        (macs.total - macs.unfolds * macs.per_block) as f64 / 1e9,
        macs.unfolds,
        macs.per_block as f64 / 1e9
    );

    let small = ModelConfig {
        n_channels: 64,
        s_levels: 3,
        b_unfolds: 4,
        ..default
    };
    let model = TdaNet::<f32>::new(small, 0).expect("model");
    let rtf = cpu_rtf(&model, 10, 5, 1, 0).expect("rtf");
    println!(
        "\nreduced-config CPU RTF: {:.4} +/- {:.4} s/s ({} x 1 s tracks, {} repeats, single thread)",
        rtf.mean, rtf.std, rtf.n_tracks, rtf.repeats
    );
}
