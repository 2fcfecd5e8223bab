//! Operator surface: reproducible commands over the library. The binary in
//! `main.rs` is a thin wrapper around [`run`]; everything here is callable
//! (and tested) as a library.
//!
//! Configuration is layered: built-in defaults, then a key-value config file,
//! then `--set key=value` flags. The fully resolved configuration is echoed
//! into every output directory as `config.resolved`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};

use crate::datagen::{
    load_examples, read_wav, simulate_dataset, write_wav_f32, DatasetManifest, Recipe, SimCounts,
    Split,
};
use crate::eval::{cpu_rtf, evaluate_estimates, evaluate_model, profile};
use crate::layers::{positional_table, ConvLayer, Ffn, ForwardCtx, Gln, Mhsa, PRelu};
use crate::model::{
    load_checkpoint, ModelConfig, TdaNet,
};
use crate::numerics::{grad_check, grad_check_params, ConvSpec, GradCheckReport, Tensor};
use crate::training::{
    pit_loss, si_snr_graph, train_loop, SiSnrOptions, TrainConfig,
};
use crate::{Error, Result};

/// Merged view of model + training configuration plus the root seed. All
/// randomness (init, data order, dropout) derives from `seed`.
#[derive(Debug, Clone)]
#[derive(Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}


macro_rules! parse_kv {
    ($value:expr, $key:expr) => {
        $value
            .parse()
            .map_err(|_| Error::Config(format!("bad value `{}` for key `{}`", $value, $key)))?
    };
}

impl RunConfig {
    /// Applies one `key = value` pair; unknown keys are configuration errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_kv!(v, key),
            "model.sample_rate" => self.model.sample_rate = parse_kv!(v, key),
            "model.win_ms" => self.model.win_ms = parse_kv!(v, key),
            "model.n_channels" => self.model.n_channels = parse_kv!(v, key),
            "model.s_levels" => self.model.s_levels = parse_kv!(v, key),
            "model.b_unfolds" => self.model.b_unfolds = parse_kv!(v, key),
            "model.heads" => self.model.heads = parse_kv!(v, key),
            "model.c_speakers" => self.model.c_speakers = parse_kv!(v, key),
            "model.dropout" => self.model.dropout = parse_kv!(v, key),
            "model.use_ga" => self.model.use_ga = parse_kv!(v, key),
            "model.use_la" => self.model.use_la = parse_kv!(v, key),
            "model.use_transformer_layer" => {
                self.model.use_transformer_layer = parse_kv!(v, key)
            }
            "model.use_mhsa" => self.model.use_mhsa = parse_kv!(v, key),
            "model.use_ffn" => self.model.use_ffn = parse_kv!(v, key),
            "model.ga_input" => self.model.ga_input = v.parse()?,
            "model.fusion" => self.model.fusion = v.parse()?,
            "train.lr" => self.train.lr = parse_kv!(v, key),
            "train.beta1" => self.train.beta1 = parse_kv!(v, key),
            "train.beta2" => self.train.beta2 = parse_kv!(v, key),
            "train.adam_eps" => self.train.adam_eps = parse_kv!(v, key),
            "train.lr_halve_patience" => self.train.lr_halve_patience = parse_kv!(v, key),
            "train.early_stop_patience" => self.train.early_stop_patience = parse_kv!(v, key),
            "train.grad_clip_l2" => self.train.grad_clip_l2 = parse_kv!(v, key),
            "train.batch_size" => self.train.batch_size = parse_kv!(v, key),
            "train.max_epochs" => self.train.max_epochs = parse_kv!(v, key),
            "train.si_snr_zero_mean" => self.train.si_snr_zero_mean = parse_kv!(v, key),
            other => {
                return Err(Error::Config(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Builds the configuration with precedence defaults < file < overrides.
    pub fn from_sources(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                cfg.apply_kv(key, value)?;
            }
        }
        for kv in overrides {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{kv}` is not of the form key=value"))
            })?;
            cfg.apply_kv(key, value)?;
        }
        cfg.train.seed = cfg.seed;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// The fully resolved key-value snapshot, in schema order.
    pub fn to_key_values(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "model.sample_rate = {}", m.sample_rate);
        let _ = writeln!(s, "model.win_ms = {}", m.win_ms);
        let _ = writeln!(s, "model.n_channels = {}", m.n_channels);
        let _ = writeln!(s, "model.s_levels = {}", m.s_levels);
        let _ = writeln!(s, "model.b_unfolds = {}", m.b_unfolds);
        let _ = writeln!(s, "model.heads = {}", m.heads);
        let _ = writeln!(s, "model.c_speakers = {}", m.c_speakers);
        let _ = writeln!(s, "model.dropout = {}", m.dropout);
        let _ = writeln!(s, "model.use_ga = {}", m.use_ga);
        let _ = writeln!(s, "model.use_la = {}", m.use_la);
        let _ = writeln!(s, "model.use_transformer_layer = {}", m.use_transformer_layer);
        let _ = writeln!(s, "model.use_mhsa = {}", m.use_mhsa);
        let _ = writeln!(s, "model.use_ffn = {}", m.use_ffn);
        let _ = writeln!(
            s,
            "model.ga_input = {}",
            match m.ga_input {
                crate::model::GaInput::FusedG => "fused_g",
                crate::model::GaInput::TopF => "top_f",
            }
        );
        let _ = writeln!(
            s,
            "model.fusion = {}",
            match m.fusion {
                crate::model::Fusion::Sum => "sum",
                crate::model::Fusion::Concat => "concat",
            }
        );
        let _ = writeln!(s, "train.lr = {}", t.lr);
        let _ = writeln!(s, "train.beta1 = {}", t.beta1);
        let _ = writeln!(s, "train.beta2 = {}", t.beta2);
        let _ = writeln!(s, "train.adam_eps = {}", t.adam_eps);
        let _ = writeln!(s, "train.lr_halve_patience = {}", t.lr_halve_patience);
        let _ = writeln!(s, "train.early_stop_patience = {}", t.early_stop_patience);
        let _ = writeln!(s, "train.grad_clip_l2 = {}", t.grad_clip_l2);
        let _ = writeln!(s, "train.batch_size = {}", t.batch_size);
        let _ = writeln!(s, "train.max_epochs = {}", t.max_epochs);
        let _ = writeln!(s, "train.si_snr_zero_mean = {}", t.si_snr_zero_mean);
        s
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.resolved");
        std::fs::write(&path, self.to_key_values()).map_err(|e| Error::io(path, e))
    }
}

/// Worker-thread cap from the environment. All built-in paths are currently
/// single-threaded, so the cap is validated and recorded but never exceeded;
/// the RTF benchmark ignores it by protocol.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("TDANET_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                Error::Config(format!("TDANET_THREADS must be a positive integer, got `{v}`"))
            })?;
            if n == 0 {
                return Err(Error::Config("TDANET_THREADS must be at least 1".into()));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tdanet",
    about = "Time-domain speech separation with top-down attention",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic mixture dataset and its manifest.
    Simulate {
        /// Recipe: lrs2_2mix_style | wham_style | libri2mix_style
        #[arg(long)]
        recipe: String,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 5)]
        val: usize,
        #[arg(long, default_value_t = 3)]
        test: usize,
        /// Utterance length in seconds (recipe default when omitted).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a simulated or ingested dataset.
    Train {
        /// Key-value config file (see README for the schema).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Config overrides, e.g. --set model.n_channels=64
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from `<out_dir>/checkpoint.json`, keeping epoch numbering.
        #[arg(long, default_value_t = false)]
        resume: bool,
    },
    /// Separate a mixture WAV (or every mixture of a manifest split).
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Single input WAV; mutually exclusive with --manifest.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Batch mode: separate every mixture of a manifest split.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate separation quality on a manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Estimates source: model | oracle (targets) | passthrough (mixture).
        #[arg(long, default_value = "model")]
        estimates: String,
        /// Also dump per-example metrics as CSV.
        #[arg(long, default_value_t = false)]
        per_example: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Report parameter count and MACs for a configuration; optionally time
    /// the CPU real-time factor.
    Profile {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Comma list of switches to disable: no_ga,no_la,no_transformer_layer,no_mhsa,no_ffn
        #[arg(long)]
        ablate: Option<String>,
        /// Measure CPU RTF (single-threaded protocol).
        #[arg(long, default_value_t = false)]
        rtf: bool,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Use 1000 repeats, matching the reported protocol.
        #[arg(long, default_value_t = false)]
        reference_protocol: bool,
        #[arg(long, default_value_t = 10)]
        tracks: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        /// Write the JSON report here (stdout gets the text form).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        /// Skip the per-layer suite.
        #[arg(long, default_value_t = false)]
        full_only: bool,
        /// Skip the full-model check.
        #[arg(long, default_value_t = false)]
        layers_only: bool,
        /// Cap on perturbed elements per parameter in the full-model check.
        #[arg(long, default_value_t = 64)]
        max_elements: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    thread_cap()?;
    match cli.command {
        Command::Simulate {
            recipe,
            train,
            val,
            test,
            duration,
            sample_rate,
            out_dir,
            seed,
        } => cmd_simulate(&recipe, SimCounts { train, val, test }, duration, sample_rate, &out_dir, seed),
        Command::Train {
            config,
            overrides,
            manifest,
            out_dir,
            resume,
        } => cmd_train(config.as_deref(), &overrides, &manifest, &out_dir, resume),
        Command::Separate {
            checkpoint,
            input,
            manifest,
            split,
            out_dir,
        } => cmd_separate(&checkpoint, input.as_deref(), manifest.as_deref(), &split, &out_dir),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            estimates,
            per_example,
            out_dir,
        } => cmd_eval(&checkpoint, &manifest, &split, &estimates, per_example, &out_dir),
        Command::Profile {
            config,
            overrides,
            ablate,
            rtf,
            repeats,
            reference_protocol,
            tracks,
            warmup,
            json,
        } => cmd_profile(
            config.as_deref(),
            &overrides,
            ablate.as_deref(),
            rtf,
            if reference_protocol { 1000 } else { repeats },
            tracks,
            warmup,
            json.as_deref(),
        ),
        Command::Gradcheck {
            full_only,
            layers_only,
            max_elements,
        } => cmd_gradcheck(full_only, layers_only, Some(max_elements)),
    }
}

pub fn cmd_simulate(
    recipe: &str,
    counts: SimCounts,
    duration: Option<f64>,
    sample_rate: u32,
    out_dir: &Path,
    seed: u64,
) -> Result<()> {
    let recipe: Recipe = recipe.parse()?;
    let manifest = simulate_dataset(recipe, counts, duration, sample_rate, out_dir, seed)?;
    let mut snapshot = String::new();
    let _ = writeln!(snapshot, "recipe = {}", recipe.name());
    let _ = writeln!(snapshot, "train = {}", counts.train);
    let _ = writeln!(snapshot, "val = {}", counts.val);
    let _ = writeln!(snapshot, "test = {}", counts.test);
    let _ = writeln!(snapshot, "duration_s = {}", manifest.duration_s);
    let _ = writeln!(snapshot, "sample_rate = {}", sample_rate);
    let _ = writeln!(snapshot, "seed = {}", seed);
    let path = out_dir.join("config.resolved");
    std::fs::write(&path, snapshot).map_err(|e| Error::io(path, e))?;
    println!(
        "wrote {} examples ({} train / {} val / {} test) to {}",
        manifest.rows.len(),
        counts.train,
        counts.val,
        counts.test,
        out_dir.display()
    );
    println!("manifest: {}", out_dir.join("manifest.csv").display());
    Ok(())
}

pub fn cmd_train(
    config: Option<&Path>,
    overrides: &[String],
    manifest_path: &Path,
    out_dir: &Path,
    resume: bool,
) -> Result<()> {
    let cfg = RunConfig::from_sources(config, overrides)?;
    let manifest = DatasetManifest::read(manifest_path)?;
    let train = load_examples(&manifest, Split::Train)?;
    let val = load_examples(&manifest, Split::Val)?;
    cfg.write_snapshot(out_dir)?;

    let (model, resume_state) = if resume {
        let ckpt = out_dir.join("checkpoint.json");
        let (model, loaded) = load_checkpoint::<f32>(&ckpt)?;
        (model, loaded.trainer)
    } else {
        (TdaNet::<f32>::new(cfg.model.clone(), cfg.seed)?, None)
    };

    let outcome = train_loop(&model, &train, &val, &cfg.train, out_dir, resume_state)?;
    println!(
        "trained {} epochs; best val loss {:.3} at epoch {}{}",
        outcome.records.len(),
        outcome.best_val_loss,
        outcome.best_epoch,
        if outcome.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    println!("checkpoint: {}", outcome.checkpoint.display());
    println!("log: {}", out_dir.join("train_log.csv").display());
    Ok(())
}

fn write_sources(model: &TdaNet<f32>, wave: &[f32], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sources = model.separate(wave)?;
    let mut paths = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        let path = dir.join(format!("spk{}.wav", i + 1));
        write_wav_f32(&path, s, model.config().sample_rate)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn cmd_separate(
    checkpoint: &Path,
    input: Option<&Path>,
    manifest: Option<&Path>,
    split: &str,
    out_dir: &Path,
) -> Result<()> {
    let (model, loaded) = load_checkpoint::<f32>(checkpoint)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let snapshot = serde_json::to_string_pretty(&loaded.config)?;
    std::fs::write(out_dir.join("config.resolved"), snapshot)
        .map_err(|e| Error::io(out_dir.join("config.resolved"), e))?;

    match (input, manifest) {
        (Some(wav_path), None) => {
            let (wave, sr) = read_wav(wav_path)?;
            if sr != model.config().sample_rate {
                return Err(Error::Input(format!(
                    "{} is {sr} Hz but the model expects {} Hz",
                    wav_path.display(),
                    model.config().sample_rate
                )));
            }
            for p in write_sources(&model, &wave, out_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        (None, Some(manifest_path)) => {
            let manifest = DatasetManifest::read(manifest_path)?;
            let split: Split = split.parse()?;
            let examples = load_examples(&manifest, split)?;
            if examples.is_empty() {
                return Err(Error::Input(format!(
                    "manifest has no `{}` examples",
                    split.as_str()
                )));
            }
            for (i, ex) in examples.iter().enumerate() {
                if ex.sample_rate != model.config().sample_rate {
                    return Err(Error::Input(format!(
                        "example {i} is {} Hz but the model expects {} Hz",
                        ex.sample_rate,
                        model.config().sample_rate
                    )));
                }
                let dir = out_dir.join(format!("{i:05}"));
                write_sources(&model, &ex.mixture, &dir)?;
            }
            println!(
                "separated {} examples into {}",
                examples.len(),
                out_dir.display()
            );
            Ok(())
        }
        _ => Err(Error::Config(
            "separate needs exactly one of --input or --manifest".into(),
        )),
    }
}

pub fn cmd_eval(
    checkpoint: &Path,
    manifest_path: &Path,
    split: &str,
    estimates: &str,
    per_example: bool,
    out_dir: &Path,
) -> Result<()> {
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    let manifest = DatasetManifest::read(manifest_path)?;
    let split: Split = split.parse()?;
    let examples = load_examples(&manifest, split)?;
    if examples.is_empty() {
        return Err(Error::Input(format!(
            "manifest has no `{}` examples",
            split.as_str()
        )));
    }
    let opts = SiSnrOptions::default();

    let report = match estimates {
        "model" => evaluate_model(&model, &examples, &opts)?,
        "oracle" | "passthrough" => {
            let mut per = Vec::new();
            for (i, ex) in examples.iter().enumerate() {
                let est: Vec<Vec<f32>> = match estimates {
                    "oracle" => ex.sources.clone(),
                    _ => vec![ex.mixture.clone(); ex.sources.len()],
                };
                per.push(evaluate_estimates(i, &est, &ex.sources, &ex.mixture, &opts)?);
            }
            let n = per.len() as f64;
            let mut base = profile(model.config())?;
            base.si_snri_db = Some(per.iter().map(|m| m.si_snri_db).sum::<f64>() / n);
            base.sdri_simplified_db = Some(per.iter().map(|m| m.sdri_db).sum::<f64>() / n);
            base.per_example = per;
            base
        }
        other => {
            return Err(Error::Config(format!(
                "unknown estimates source `{other}` (model|oracle|passthrough)"
            )))
        }
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    std::fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| Error::io(out_dir.join("report.json"), e))?;
    if per_example {
        std::fs::write(out_dir.join("per_example.csv"), report.per_example_csv())
            .map_err(|e| Error::io(out_dir.join("per_example.csv"), e))?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn apply_ablations(model_cfg: &mut ModelConfig, ablate: Option<&str>) -> Result<()> {
    let Some(list) = ablate else { return Ok(()) };
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "no_ga" => model_cfg.use_ga = false,
            "no_la" => model_cfg.use_la = false,
            "no_transformer_layer" => model_cfg.use_transformer_layer = false,
            "no_mhsa" => model_cfg.use_mhsa = false,
            "no_ffn" => model_cfg.use_ffn = false,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation `{other}` (no_ga, no_la, no_transformer_layer, no_mhsa, no_ffn)"
                )))
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_profile(
    config: Option<&Path>,
    overrides: &[String],
    ablate: Option<&str>,
    rtf: bool,
    repeats: usize,
    tracks: usize,
    warmup: usize,
    json: Option<&Path>,
) -> Result<()> {
    let mut cfg = RunConfig::from_sources(config, overrides)?;
    apply_ablations(&mut cfg.model, ablate)?;
    cfg.model.validate()?;

    let mut report = profile(&cfg.model)?;
    if rtf {
        let model = TdaNet::<f32>::new(cfg.model.clone(), cfg.seed)?;
        report.cpu_rtf = Some(cpu_rtf(&model, tracks, repeats, warmup, cfg.seed)?);
    }
    if let Some(path) = json {
        std::fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))?;
    }
    print!("{}", report.to_text());
    Ok(())
}

/// Named gradient checks covering every differentiable layer type.
pub fn layer_grad_checks() -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_240_001);
    let mut randv = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect()
    };
    let mut out: Vec<(String, GradCheckReport)> = Vec::new();
    let tol = 1e-4;

    out.push((
        "conv1d (stride 2, dilation 2, pad 4)".into(),
        grad_check(
            |ts| {
                let spec = ConvSpec {
                    stride: 2,
                    dilation: 2,
                    padding: 4,
                    groups: 1,
                };
                let y = ts[0].conv1d(&ts[1], Some(&ts[2]), spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(2 * 16), randv(4 * 2 * 5), randv(4)],
            &[vec![2, 16], vec![4, 2, 5], vec![4]],
            tol,
            None,
        )?,
    ));
    out.push((
        "depthwise conv1d".into(),
        grad_check(
            |ts| {
                let spec = ConvSpec {
                    stride: 2,
                    dilation: 2,
                    padding: 4,
                    groups: 6,
                };
                let y = ts[0].conv1d(&ts[1], Some(&ts[2]), spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(6 * 12), randv(6 * 5), randv(6)],
            &[vec![6, 12], vec![6, 1, 5], vec![6]],
            tol,
            None,
        )?,
    ));
    out.push((
        "grouped pointwise conv1d".into(),
        grad_check(
            |ts| {
                let spec = ConvSpec {
                    groups: 2,
                    ..ConvSpec::default()
                };
                let y = ts[0].conv1d(&ts[1], None, spec)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(4 * 10), randv(4 * 2)],
            &[vec![4, 10], vec![4, 2, 1]],
            tol,
            None,
        )?,
    ));
    out.push((
        "transposed conv1d".into(),
        grad_check(
            |ts| {
                let y = ts[0].conv_transpose1d(&ts[1], None, 4)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(3 * 6), randv(3 * 2 * 8)],
            &[vec![3, 6], vec![3, 2, 8]],
            tol,
            None,
        )?,
    ));
    out.push((
        "avg_pool1d + nearest_interp1d".into(),
        grad_check(
            |ts| {
                let y = ts[0].avg_pool1d(4)?.nearest_interp1d(16)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(3 * 16)],
            &[vec![3, 16]],
            tol,
            None,
        )?,
    ));
    out.push((
        "gln".into(),
        grad_check(
            |ts| {
                let y = ts[0].gln(&ts[1], &ts[2], 1e-8)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(4 * 9), randv(4), randv(4)],
            &[vec![4, 9], vec![4], vec![4]],
            tol,
            None,
        )?,
    ));
    out.push((
        "prelu".into(),
        grad_check(
            |ts| {
                let y = ts[0].prelu(&ts[1])?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(20), vec![0.25]],
            &[vec![20], vec![1]],
            tol,
            None,
        )?,
    ));
    out.push((
        "softmax rows".into(),
        grad_check(
            |ts| {
                let y = ts[0].softmax_rows()?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(5 * 7)],
            &[vec![5, 7]],
            tol,
            None,
        )?,
    ));
    out.push((
        "sigmoid gate".into(),
        grad_check(
            |ts| {
                let y = ts[0].sigmoid().mul(&ts[1])?;
                Ok(y.sum_all())
            },
            &[randv(24), randv(24)],
            &[vec![4, 6], vec![4, 6]],
            tol,
            None,
        )?,
    ));

    // attention and feed-forward blocks at a small width
    let n = 8;
    let d = 4;
    out.push((
        "mhsa".into(),
        grad_check(
            |ts| {
                let mhsa = Mhsa {
                    wq: ts[1].clone(),
                    bq: ts[2].clone(),
                    wk: ts[3].clone(),
                    bk: ts[4].clone(),
                    wv: ts[5].clone(),
                    bv: ts[6].clone(),
                    wo: ts[7].clone(),
                    bo: ts[8].clone(),
                    heads: 2,
                    post_norm: Gln::new(ts[9].clone(), ts[10].clone()),
                    positional: positional_table(n, 32)?,
                    dropout_p: 0.0,
                };
                let y = mhsa.apply(&ts[0], &mut ForwardCtx::inference())?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[
                randv(n * 6),
                randv(d * n),
                randv(d),
                randv(d * n),
                randv(d),
                randv(d * n),
                randv(d),
                randv(n * d),
                randv(n),
                randv(n),
                randv(n),
            ],
            &[
                vec![n, 6],
                vec![d, n],
                vec![d],
                vec![d, n],
                vec![d],
                vec![d, n],
                vec![d],
                vec![n, d],
                vec![n],
                vec![n, 1],
                vec![n, 1],
            ],
            tol,
            None,
        )?,
    ));
    out.push((
        "ffn".into(),
        grad_check(
            |ts| {
                let h = 2 * n;
                let gln1 = Gln::new(Tensor::full(&[h, 1], 1.0), Tensor::zeros(&[h, 1]));
                let gln2 = Gln::new(Tensor::full(&[h, 1], 1.0), Tensor::zeros(&[h, 1]));
                let gln3 = Gln::new(Tensor::full(&[n, 1], 1.0), Tensor::zeros(&[n, 1]));
                let ffn = Ffn {
                    expand: ConvLayer {
                        weight: ts[1].clone(),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm1: gln1,
                    depthwise: ConvLayer {
                        weight: ts[2].clone(),
                        bias: Some(ts[3].clone()),
                        spec: ConvSpec {
                            padding: 2,
                            groups: h,
                            ..ConvSpec::default()
                        },
                    },
                    norm2: gln2,
                    compress: ConvLayer {
                        weight: ts[4].clone(),
                        bias: None,
                        spec: ConvSpec::default(),
                    },
                    norm3: gln3,
                    dropout_p: 0.0,
                };
                let y = ffn.apply(&ts[0], &mut ForwardCtx::inference())?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[
                randv(n * 8),
                randv(2 * n * n),
                randv(2 * n * 5),
                randv(2 * n),
                randv(n * 2 * n),
            ],
            &[
                vec![n, 8],
                vec![2 * n, n, 1],
                vec![2 * n, 1, 5],
                vec![2 * n],
                vec![n, 2 * n, 1],
            ],
            tol,
            None,
        )?,
    ));
    out.push((
        "prelu layer wrapper".into(),
        grad_check(
            |ts| {
                let layer = PRelu {
                    slope: ts[1].clone(),
                };
                let y = layer.apply(&ts[0])?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[randv(12), vec![0.3]],
            &[vec![12], vec![1]],
            tol,
            None,
        )?,
    ));
    out.push((
        "si-snr loss".into(),
        grad_check(
            |ts| {
                let target: Vec<f64> = (0..48).map(|i| (i as f64 * 0.23).sin()).collect();
                si_snr_graph(&ts[0], &target, &SiSnrOptions::default())
            },
            &[randv(48)],
            &[vec![48]],
            tol,
            None,
        )?,
    ));
    Ok(out)
}

/// Gradient check of the full network at a small scale: every parameter of a
/// N=16, S=2, B=2 model against central differences on a 512-sample mixture,
/// through the PIT loss.
pub fn full_model_grad_check(
    max_elements_per_param: Option<usize>,
) -> Result<(GradCheckReport, Vec<String>)> {
    let cfg = ModelConfig {
        n_channels: 16,
        s_levels: 2,
        b_unfolds: 2,
        heads: 8,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = TdaNet::<f64>::new(cfg, 31_415)?;
    // 512-sample crop of a simulated two-speaker mixture
    let ex = crate::datagen::simulate_example(Recipe::Lrs2TwoMixStyle, 0.1, 16_000, 7)?;
    let t = 512;
    let wave: Vec<f64> = ex.mixture[..t].iter().map(|v| *v as f64).collect();
    let targets: Vec<Vec<f64>> = ex
        .sources
        .iter()
        .map(|s| s[..t].iter().map(|v| *v as f64).collect())
        .collect();

    let params = model.params().tensors();
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.to_string()).collect();
    let opts = SiSnrOptions::default();
    let report = grad_check_params(
        || {
            let estimates = model.separate_tensors(&wave, &mut ForwardCtx::inference())?;
            let (loss, _) = pit_loss(&estimates, &targets, &opts)?;
            Ok(loss)
        },
        &params,
        1e-3,
        max_elements_per_param,
    )?;
    Ok((report, names))
}

pub fn cmd_gradcheck(
    full_only: bool,
    layers_only: bool,
    max_elements: Option<usize>,
) -> Result<()> {
    let mut all_passed = true;
    if !full_only {
        for (name, report) in layer_grad_checks()? {
            println!("{name:<36} {report}");
            all_passed &= report.passed();
        }
    }
    if !layers_only {
        let (report, names) = full_model_grad_check(max_elements)?;
        let detail = report
            .worst
            .map(|(pi, ei, _, _)| format!(" [worst: {} element {ei}]", names[pi]))
            .unwrap_or_default();
        println!("{:<36} {report}{detail}", "full model (N=16,S=2,B=2)");
        all_passed &= report.passed();
    }
    if all_passed {
        Ok(())
    } else {
        Err(Error::Numeric(
            "gradient check failed; see the report lines above".into(),
        ))
    }
}
