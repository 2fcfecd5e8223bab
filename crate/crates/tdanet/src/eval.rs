//! Separation-quality metrics (SI-SNRi and simplified SDRi), static
//! complexity numbers, and the single-threaded CPU real-time-factor
//! benchmark.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datagen::MixtureExample;
use crate::model::{count_macs, count_params, ModelConfig, TdaNet};
use crate::training::{pit_align, si_snr, SiSnrOptions};
use crate::{Error, Result};

/// Per-example improvement numbers under the PIT-optimal pairing.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleMetrics {
    pub index: usize,
    pub si_snri_db: f64,
    pub sdri_db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RtfReport {
    /// Processing seconds per second of audio, averaged over repeats.
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
    pub n_tracks: usize,
    pub track_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub precision: &'static str,
}

impl Environment {
    pub fn single_threaded() -> Self {
        Environment {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: 1,
            precision: "f32",
        }
    }
}

/// Everything a profiling or evaluation run reports. Quality fields are
/// means over the evaluated set; the SDR column is the simplified,
/// projection-based variant (no allowed-distortion filtering), hence the
/// label `sdri_simplified`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub params_m: f64,
    pub macs_g_per_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub si_snri_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdri_simplified_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_rtf: Option<RtfReport>,
    pub environment: Environment,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_example: Vec<ExampleMetrics>,
}

pub fn config_hash(cfg: &ModelConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Static complexity numbers for a configuration.
pub fn profile(cfg: &ModelConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    Ok(MetricsReport {
        config_hash: config_hash(cfg),
        params_m: count_params(cfg) as f64 / 1e6,
        macs_g_per_s: count_macs(cfg, 1.0)?.total as f64 / 1e9,
        si_snri_db: None,
        sdri_simplified_db: None,
        cpu_rtf: None,
        environment: Environment::single_threaded(),
        per_example: Vec::new(),
    })
}

fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|v| *v as f64).collect()
}

/// Mean SI-SNR improvement over the mixture, under the PIT-optimal pairing.
pub fn si_snri(
    estimates: &[Vec<f64>],
    targets: &[Vec<f64>],
    mixture: &[f64],
    opts: &SiSnrOptions,
) -> Result<f64> {
    let (_, perm) = pit_align(estimates, targets, opts)?;
    let mut improvement = 0.0;
    for (i, &p) in perm.iter().enumerate() {
        improvement +=
            si_snr(&estimates[i], &targets[p], opts)? - si_snr(mixture, &targets[p], opts)?;
    }
    Ok(improvement / estimates.len() as f64)
}

/// Simplified SDR improvement: projection-based best-scale alignment without
/// mean removal, relative to the mixture, under the same PIT pairing as
/// SI-SNR.
pub fn sdri(
    estimates: &[Vec<f64>],
    targets: &[Vec<f64>],
    mixture: &[f64],
    opts: &SiSnrOptions,
) -> Result<f64> {
    let (_, perm) = pit_align(estimates, targets, opts)?;
    let raw = SiSnrOptions {
        zero_mean: false,
        ..*opts
    };
    let mut improvement = 0.0;
    for (i, &p) in perm.iter().enumerate() {
        improvement +=
            si_snr(&estimates[i], &targets[p], &raw)? - si_snr(mixture, &targets[p], &raw)?;
    }
    Ok(improvement / estimates.len() as f64)
}

/// Metrics of one example given already-computed estimates.
pub fn evaluate_estimates(
    index: usize,
    estimates: &[Vec<f32>],
    targets: &[Vec<f32>],
    mixture: &[f32],
    opts: &SiSnrOptions,
) -> Result<ExampleMetrics> {
    let est: Vec<Vec<f64>> = estimates.iter().map(|e| to_f64(e)).collect();
    let tgt: Vec<Vec<f64>> = targets.iter().map(|t| to_f64(t)).collect();
    let mix = to_f64(mixture);
    Ok(ExampleMetrics {
        index,
        si_snri_db: si_snri(&est, &tgt, &mix, opts)?,
        sdri_db: sdri(&est, &tgt, &mix, opts)?,
    })
}

/// Runs the model over a set of examples and aggregates the improvements.
pub fn evaluate_model(
    model: &TdaNet<f32>,
    examples: &[MixtureExample],
    opts: &SiSnrOptions,
) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mut per_example = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        if ex.sample_rate != model.config().sample_rate {
            return Err(Error::Input(format!(
                "example {i} has sample rate {}, model expects {}",
                ex.sample_rate,
                model.config().sample_rate
            )));
        }
        let estimates = model.separate(&ex.mixture)?;
        per_example.push(evaluate_estimates(
            i,
            &estimates,
            &ex.sources,
            &ex.mixture,
            opts,
        )?);
    }
    let n = per_example.len() as f64;
    let cfg = model.config();
    Ok(MetricsReport {
        config_hash: config_hash(cfg),
        params_m: count_params(cfg) as f64 / 1e6,
        macs_g_per_s: count_macs(cfg, 1.0)?.total as f64 / 1e9,
        si_snri_db: Some(per_example.iter().map(|m| m.si_snri_db).sum::<f64>() / n),
        sdri_simplified_db: Some(per_example.iter().map(|m| m.sdri_db).sum::<f64>() / n),
        cpu_rtf: None,
        environment: Environment::single_threaded(),
        per_example,
    })
}

/// CPU real-time factor: per repeat, the wall time to separate `n_tracks`
/// one-second tracks divided by `n_tracks`. Single-threaded, inference mode,
/// model construction and track synthesis excluded from the timing.
pub fn cpu_rtf(
    model: &TdaNet<f32>,
    n_tracks: usize,
    repeats: usize,
    warmup: usize,
    seed: u64,
) -> Result<RtfReport> {
    use rand::{Rng, SeedableRng};
    let sr = model.config().sample_rate as usize;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let tracks: Vec<Vec<f32>> = (0..n_tracks)
        .map(|_| (0..sr).map(|_| rng.gen_range(-0.5f32..0.5)).collect())
        .collect();

    for _ in 0..warmup {
        for t in &tracks {
            let _ = model.separate(t)?;
        }
    }

    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let started = Instant::now();
        for t in &tracks {
            let _ = model.separate(t)?;
        }
        samples.push(started.elapsed().as_secs_f64() / n_tracks as f64);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
    Ok(RtfReport {
        mean,
        std: var.sqrt(),
        repeats,
        n_tracks,
        track_seconds: 1.0,
        threads: 1,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned-column text rendering for humans.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("config hash".into(), self.config_hash.clone()),
            ("params (M)".into(), format!("{:.4}", self.params_m)),
            ("MACs (G/s)".into(), format!("{:.4}", self.macs_g_per_s)),
        ];
        if let Some(v) = self.si_snri_db {
            rows.push(("SI-SNRi (dB)".into(), format!("{v:.3}")));
        }
        if let Some(v) = self.sdri_simplified_db {
            rows.push(("SDRi simplified (dB)".into(), format!("{v:.3}")));
        }
        if let Some(rtf) = &self.cpu_rtf {
            rows.push((
                "CPU RTF (s/s)".into(),
                format!("{:.4} +/- {:.4}", rtf.mean, rtf.std),
            ));
            rows.push((
                "RTF protocol".into(),
                format!(
                    "{} x {:.0}s tracks, {} repeats, {} thread",
                    rtf.n_tracks, rtf.track_seconds, rtf.repeats, rtf.threads
                ),
            ));
        }
        rows.push((
            "environment".into(),
            format!(
                "{}/{} threads={} {}",
                self.environment.os,
                self.environment.arch,
                self.environment.threads,
                self.environment.precision
            ),
        ));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }

    /// Per-example CSV dump.
    pub fn per_example_csv(&self) -> String {
        let mut out = String::from("index,si_snri_db,sdri_simplified_db\n");
        for m in &self.per_example {
            out.push_str(&format!("{},{:.6},{:.6}\n", m.index, m.si_snri_db, m.sdri_db));
        }
        out
    }
}
