//! End-to-end checks of the command-line binary: each subcommand is invoked
//! as a real process against a temporary workspace.

use std::path::Path;
use std::process::{Command, Output};

fn tdanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdanet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_into(dir: &Path, seed: u64) {
    let out = tdanet(&[
        "simulate",
        "--recipe",
        "lrs2_2mix_style",
        "--train",
        "4",
        "--val",
        "2",
        "--test",
        "2",
        "--duration",
        "0.3",
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&out);
}

const TINY: &[&str] = &[
    "--set",
    "model.n_channels=16",
    "--set",
    "model.s_levels=2",
    "--set",
    "model.b_unfolds=1",
    "--set",
    "model.dropout=0",
    "--set",
    "train.max_epochs=2",
    "--set",
    "seed=3",
];

#[test]
fn simulate_writes_dataset_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_into(a.path(), 11);
    simulate_into(b.path(), 11);
    assert!(a.path().join("manifest.csv").exists());
    assert!(a.path().join("config.resolved").exists());
    let bytes_a = std::fs::read(a.path().join("train/00000_mix.wav")).unwrap();
    let bytes_b = std::fs::read(b.path().join("train/00000_mix.wav")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must produce identical audio bytes");
}

#[test]
fn invalid_recipe_is_usage_error_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdanet(&[
        "simulate",
        "--recipe",
        "bogus",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown recipe"));
}

#[test]
fn train_separate_eval_workflow() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    simulate_into(data.path(), 5);
    let manifest = data.path().join("manifest.csv");

    let mut args = vec![
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        run.path().to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    assert_ok(&tdanet(&args));
    assert!(run.path().join("checkpoint.json").exists());
    assert!(run.path().join("checkpoint.bin").exists());
    assert!(run.path().join("best").exists());
    assert!(run.path().join("config.resolved").exists());
    let log = std::fs::read_to_string(run.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_loss,lr,wall_time_s"));

    // single-input separation produces spk1/spk2 of the input length
    let sep = tempfile::tempdir().unwrap();
    let ckpt = run.path().join("checkpoint.json");
    let input = data.path().join("test/00006_mix.wav");
    assert_ok(&tdanet(&[
        "separate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        sep.path().to_str().unwrap(),
    ]));
    let (mix, _) = tdanet::datagen::read_wav(&input).unwrap();
    for name in ["spk1.wav", "spk2.wav"] {
        let (wave, sr) = tdanet::datagen::read_wav(&sep.path().join(name)).unwrap();
        assert_eq!(sr, 16_000);
        assert_eq!(wave.len(), mix.len());
    }

    // batch separation per manifest split
    let batch = tempfile::tempdir().unwrap();
    assert_ok(&tdanet(&[
        "separate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "test",
        "--out-dir",
        batch.path().to_str().unwrap(),
    ]));
    assert!(batch.path().join("00000/spk1.wav").exists());
    assert!(batch.path().join("00001/spk2.wav").exists());

    // eval with model estimates writes report + per-example CSV
    let eval_dir = tempfile::tempdir().unwrap();
    let out = tdanet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--per-example",
        "--out-dir",
        eval_dir.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(eval_dir.path().join("report.json").exists());
    assert!(eval_dir.path().join("per_example.csv").exists());

    // oracle estimates sit at the clamp ceiling minus the mixture score;
    // passthrough estimates give exactly zero improvement
    let oracle_dir = tempfile::tempdir().unwrap();
    let out = tdanet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--estimates",
        "oracle",
        "--out-dir",
        oracle_dir.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(oracle_dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report["si_snri_db"].as_f64().unwrap() > 40.0);

    let pass_dir = tempfile::tempdir().unwrap();
    let out = tdanet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--estimates",
        "passthrough",
        "--out-dir",
        pass_dir.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pass_dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["si_snri_db"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_report_is_byte_stable() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    simulate_into(data.path(), 6);
    let manifest = data.path().join("manifest.csv");
    let mut args = vec![
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        run.path().to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    assert_ok(&tdanet(&args));
    let ckpt = run.path().join("checkpoint.json");

    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        assert_ok(&tdanet(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]));
        reports.push(std::fs::read(dir.path().join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn separate_rejects_sample_rate_mismatch() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    simulate_into(data.path(), 7);
    let manifest = data.path().join("manifest.csv");
    let mut args = vec![
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        run.path().to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    assert_ok(&tdanet(&args));

    let wav8k = data.path().join("slow.wav");
    tdanet::datagen::write_wav_f32(&wav8k, &vec![0.1f32; 4000], 8000).unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = tdanet(&[
        "separate",
        "--checkpoint",
        run.path().join("checkpoint.json").to_str().unwrap(),
        "--input",
        wav8k.to_str().unwrap(),
        "--out-dir",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("8000"));
}

#[test]
fn profile_reports_headline_numbers() {
    // default config: the reported parameter and MAC scales
    let out = tdanet(&["profile"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let grab = |label: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(label))
            .unwrap_or_else(|| panic!("missing `{label}` in:\n{text}"))
            .split_whitespace()
            .last()
            .unwrap()
            .parse()
            .unwrap()
    };
    let params = grab("params (M)");
    let macs = grab("MACs (G/s)");
    assert!((1.955..=2.645).contains(&params), "params {params} M");
    assert!((3.76..=5.64).contains(&macs), "macs {macs} G/s");

    // ablated control
    let out = tdanet(&["profile", "--ablate", "no_ga,no_la"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let params: f64 = text
        .lines()
        .find(|l| l.starts_with("params (M)"))
        .unwrap()
        .split_whitespace()
        .last()
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.595..=0.805).contains(&params), "control params {params} M");
}

#[test]
fn profile_rtf_flag_times_the_protocol() {
    let out = tdanet(&[
        "profile",
        "--set",
        "model.n_channels=16",
        "--set",
        "model.s_levels=2",
        "--set",
        "model.b_unfolds=1",
        "--rtf",
        "--repeats",
        "2",
        "--tracks",
        "2",
        "--warmup",
        "1",
    ]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("CPU RTF"), "{text}");
    assert!(text.contains("2 x 1s tracks"), "{text}");
}

#[test]
fn unknown_config_key_fails_with_exit_2() {
    let out = tdanet(&["profile", "--set", "model.nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key"));
}

#[test]
fn gradcheck_layers_pass() {
    let out = tdanet(&["gradcheck", "--layers-only"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.lines().count() >= 10);
    for line in text.lines() {
        assert!(line.contains("pass"), "failing line: {line}");
    }
}
