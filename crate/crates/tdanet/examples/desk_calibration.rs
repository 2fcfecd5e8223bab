use std::path::PathBuf;
use tdanet::datagen::{load_examples, simulate_dataset, Recipe, SimCounts, Split};
use tdanet::eval::evaluate_model;
use tdanet::model::{ModelConfig, TdaNet};
use tdanet::training::{train_loop, SiSnrOptions, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let variant = args.get(1).map(|s| s.as_str()).unwrap_or("full");
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let data_dir = PathBuf::from("/tmp/desk_data");
    let manifest = if data_dir.join("manifest.csv").exists() {
        tdanet::datagen::DatasetManifest::read(&data_dir.join("manifest.csv")).unwrap()
    } else {
        simulate_dataset(
            Recipe::Lrs2TwoMixStyle,
            SimCounts { train: 200, val: 40, test: 40 },
            Some(1.0),
            16000,
            &data_dir,
            2024,
        )
        .unwrap()
    };
    let train = load_examples(&manifest, Split::Train).unwrap();
    let val = load_examples(&manifest, Split::Val).unwrap();
    let test = load_examples(&manifest, Split::Test).unwrap();

    let mut cfg = ModelConfig {
        n_channels: 64,
        s_levels: 3,
        b_unfolds: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    if variant == "control" {
        cfg.use_ga = false;
        cfg.use_la = false;
    }
    let model = TdaNet::<f32>::new(cfg, 7).unwrap();
    let tcfg = TrainConfig {
        max_epochs: epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = PathBuf::from(format!("/tmp/desk_{variant}"));
    let t0 = std::time::Instant::now();
    let outcome = train_loop(&model, &train, &val, &tcfg, &out, None).unwrap();
    println!(
        "[{variant}] {} epochs in {:.0} s, best val loss {:.3} at {}",
        outcome.records.len(),
        t0.elapsed().as_secs_f64(),
        outcome.best_val_loss,
        outcome.best_epoch
    );
    // evaluate the best checkpoint on test
    let (best, _) = tdanet::model::load_checkpoint::<f32>(&out.join("checkpoint.json")).unwrap();
    let report = evaluate_model(&best, &test, &SiSnrOptions::default()).unwrap();
    println!(
        "[{variant}] test SI-SNRi {:.3} dB, SDRi {:.3} dB",
        report.si_snri_db.unwrap(),
        report.sdri_simplified_db.unwrap()
    );
}
