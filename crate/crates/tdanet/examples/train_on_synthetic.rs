//! Train a reduced model on synthetic mixtures, then reload the best
//! checkpoint and report test-set improvement.

use tdanet::datagen::{load_examples, simulate_dataset, Recipe, SimCounts, Split};
use tdanet::eval::evaluate_model;
use tdanet::model::{load_checkpoint, ModelConfig, TdaNet};
use tdanet::training::{train_loop, SiSnrOptions, TrainConfig};

fn main() {
    let data_dir = std::env::temp_dir().join("tdanet_example_train_data");
    let out_dir = std::env::temp_dir().join("tdanet_example_train_run");
    let manifest = simulate_dataset(
        Recipe::Lrs2TwoMixStyle,
        SimCounts {
            train: 24,
            val: 6,
            test: 6,
        },
        Some(0.5),
        16_000,
        &data_dir,
        7,
    )
    .expect("dataset");
    let train = load_examples(&manifest, Split::Train).expect("train split");
    let val = load_examples(&manifest, Split::Val).expect("val split");
    let test = load_examples(&manifest, Split::Test).expect("test split");

    let config = ModelConfig {
        n_channels: 32,
        s_levels: 2,
        b_unfolds: 2,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = TdaNet::<f32>::new(config, 7).expect("model builds");
    let train_cfg = TrainConfig {
        max_epochs: 8,
        seed: 7,
        ..TrainConfig::default()
    };

    let outcome = train_loop(&model, &train, &val, &train_cfg, &out_dir, None).expect("training");
    for r in &outcome.records {
        println!(
            "epoch {:>2}  train {:>8.3}  val {:>8.3}  lr {}  ({:.1}s)",
            r.epoch, r.train_loss, r.val_loss, r.lr, r.wall_time_s
        );
    }
    println!(
        "best val loss {:.3} at epoch {} -> {}",
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.checkpoint.display()
    );

    let (best, _) = load_checkpoint::<f32>(&outcome.checkpoint).expect("checkpoint loads");
    let report = evaluate_model(&best, &test, &SiSnrOptions::default()).expect("evaluation");
    println!(
        "test SI-SNRi {:.2} dB (SDRi simplified {:.2} dB) over {} examples",
        report.si_snri_db.unwrap(),
        report.sdri_simplified_db.unwrap(),
        report.per_example.len()
    );
}
