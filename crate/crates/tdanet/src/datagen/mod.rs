//! Synthetic source generation and SNR-controlled mixing, plus WAV ingestion
//! for user-supplied corpora. Every example is fully determined by its seed.

mod manifest;
mod wav;

pub use manifest::{DatasetManifest, ManifestRow, SimCounts, Split};
pub use wav::{read_wav, write_wav_f32, write_wav_pcm16};

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::derive_seed;
use crate::{Error, Result};

/// One mixture with its ground-truth constituents. The mixture equals the
/// left-to-right f32 sum of the stored sources (plus noise).
#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub mixture: Vec<f32>,
    pub sources: Vec<Vec<f32>>,
    pub noise: Option<Vec<f32>>,
    pub snr_db: f64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub seed: u64,
}

impl MixtureExample {
    /// Recomputes the mixture from the stored constituents, in the same
    /// summation order used at construction.
    pub fn recomposed_mixture(&self) -> Vec<f32> {
        let mut y = vec![0.0f32; self.mixture.len()];
        for s in &self.sources {
            for (yi, si) in y.iter_mut().zip(s) {
                *yi += *si;
            }
        }
        if let Some(n) = &self.noise {
            for (yi, ni) in y.iter_mut().zip(n) {
                *yi += *ni;
            }
        }
        y
    }
}

/// Synthetic source families standing in for licensed speech corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Sum of 3-8 harmonics of a random fundamental in [80, 300] Hz with a
    /// slowly varying amplitude envelope.
    HarmonicVoice,
    /// Linear frequency sweep.
    Chirp,
    /// White noise gated into bursts.
    NoiseBurst,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic_voice" => Ok(SourceKind::HarmonicVoice),
            "chirp" => Ok(SourceKind::Chirp),
            "noise_burst" => Ok(SourceKind::NoiseBurst),
            other => Err(Error::Config(format!("unknown source kind `{other}`"))),
        }
    }
}

fn peak_normalize(x: &mut [f32], peak: f32) {
    let max = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max > 0.0 {
        let g = peak / max;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
}

/// Piecewise-smooth random envelope: cosine interpolation between control
/// points drawn every ~140 ms, with occasional near-silent dips so sources
/// wax and wane against each other the way utterances do.
fn random_envelope(rng: &mut ChaCha8Rng, len: usize, sample_rate: u32) -> Vec<f32> {
    let hop = (sample_rate as usize / 7).max(1);
    let knots = len / hop + 2;
    let points: Vec<f64> = (0..knots)
        .map(|_| {
            if rng.gen_bool(0.2) {
                rng.gen_range(0.02..0.15)
            } else {
                rng.gen_range(0.3..1.0)
            }
        })
        .collect();
    (0..len)
        .map(|i| {
            let pos = i as f64 / hop as f64;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let w = 0.5 - 0.5 * (PI * frac).cos();
            (points[k] * (1.0 - w) + points[k + 1] * w) as f32
        })
        .collect()
}

/// Fundamental a harmonic voice with this seed will sing at; the first draw
/// of the synthesis stream, so pair selection can test pitch without
/// synthesizing.
pub(crate) fn harmonic_f0_of_seed(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).gen_range(80.0..300.0)
}

pub(crate) fn synth_harmonic_with_f0(
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> (Vec<f32>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (duration_s * sample_rate as f64).round() as usize;
    let f0 = rng.gen_range(80.0..300.0);
    let harmonics = rng.gen_range(3..=8usize);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let amps: Vec<f64> = (0..harmonics)
        .map(|h| rng.gen_range(0.5..1.0) / (h + 1) as f64)
        .collect();
    let envelope = random_envelope(&mut rng, len, sample_rate);
    let dt = 1.0 / sample_rate as f64;
    let mut x: Vec<f32> = (0..len)
        .map(|i| {
            let t = i as f64 * dt;
            let mut v = 0.0;
            for h in 0..harmonics {
                v += amps[h] * (2.0 * PI * f0 * (h + 1) as f64 * t + phases[h]).sin();
            }
            (v as f32) * envelope[i]
        })
        .collect();
    peak_normalize(&mut x, 0.9);
    (x, f0)
}

/// Deterministic synthetic source; identical seeds give identical samples.
/// Peak magnitude is 0.9.
pub fn synth_source(
    kind: SourceKind,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<f32>> {
    if duration_s < 0.1 {
        return Err(Error::Input(format!(
            "source duration {duration_s} s is below the 0.1 s minimum"
        )));
    }
    let len = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = match kind {
        SourceKind::HarmonicVoice => return Ok(synth_harmonic_with_f0(duration_s, sample_rate, seed).0),
        SourceKind::Chirp => {
            let f_start = rng.gen_range(100.0..800.0);
            let f_end = f_start * rng.gen_range(2.0..5.0);
            let dt = 1.0 / sample_rate as f64;
            let total = duration_s;
            (0..len)
                .map(|i| {
                    let t = i as f64 * dt;
                    // instantaneous phase of a linear sweep
                    let phase = 2.0 * PI * (f_start * t + (f_end - f_start) * t * t / (2.0 * total));
                    phase.sin() as f32
                })
                .collect::<Vec<f32>>()
        }
        SourceKind::NoiseBurst => {
            let mut x = vec![0.0f32; len];
            let mut pos = 0usize;
            while pos < len {
                let burst = rng.gen_range(sample_rate as usize / 20..sample_rate as usize / 4);
                let gap = rng.gen_range(sample_rate as usize / 50..sample_rate as usize / 8);
                let amp = rng.gen_range(0.4..1.0);
                let end = (pos + burst).min(len);
                for v in &mut x[pos..end] {
                    *v = (rng.gen_range(-1.0f64..1.0) * amp) as f32;
                }
                pos += burst + gap;
            }
            x
        }
    };
    peak_normalize(&mut x, 0.9);
    Ok(x)
}

fn energy(x: &[f32]) -> f64 {
    x.iter().map(|v| (*v as f64) * (*v as f64)).sum()
}

fn rms_dbfs(x: &[f32]) -> f64 {
    10.0 * (energy(x) / x.len() as f64).log10()
}

fn scale_to(x: &[f32], gain: f64) -> Vec<f32> {
    x.iter().map(|v| (*v as f64 * gain) as f32).collect()
}

/// Scales `s2` so the s1-to-s2 energy ratio equals `snr_db`, then sums. The
/// returned sources are exactly the mixture's constituents.
pub fn mix_at_snr(s1: &[f32], s2: &[f32], snr_db: f64) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>)> {
    if s1.len() != s2.len() {
        return Err(Error::Input(format!(
            "mix_at_snr requires equal lengths, got {} and {}",
            s1.len(),
            s2.len()
        )));
    }
    let (e1, e2) = (energy(s1), energy(s2));
    if e1 == 0.0 || e2 == 0.0 {
        return Err(Error::Input("mix_at_snr requires nonzero-energy sources".into()));
    }
    let gain = (e1 / (e2 * 10f64.powf(snr_db / 10.0))).sqrt();
    let s2_scaled = scale_to(s2, gain);
    let y: Vec<f32> = s1.iter().zip(&s2_scaled).map(|(a, b)| a + b).collect();
    Ok((y, s1.to_vec(), s2_scaled))
}

/// Mixing recipes. All sources are harmonic voices; the recipes differ in how
/// levels and noise are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// Two speakers mixed at an SNR drawn uniformly from [-5, 5] dB, 2 s.
    Lrs2TwoMixStyle,
    /// Two speakers plus noise bursts at an SNR drawn from [-6, 3] dB, 2 s.
    WhamStyle,
    /// Loudness-based placement: sources at RMS dBFS in [-33, -25], noise in
    /// [-38, -30], 3 s. (RMS dB stands in for LUFS.)
    Libri2MixStyle,
}

impl Recipe {
    pub fn name(&self) -> &'static str {
        match self {
            Recipe::Lrs2TwoMixStyle => "lrs2_2mix_style",
            Recipe::WhamStyle => "wham_style",
            Recipe::Libri2MixStyle => "libri2mix_style",
        }
    }

    pub fn default_duration_s(&self) -> f64 {
        match self {
            Recipe::Lrs2TwoMixStyle | Recipe::WhamStyle => 2.0,
            Recipe::Libri2MixStyle => 3.0,
        }
    }
}

impl std::str::FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrs2_2mix_style" => Ok(Recipe::Lrs2TwoMixStyle),
            "wham_style" => Ok(Recipe::WhamStyle),
            "libri2mix_style" => Ok(Recipe::Libri2MixStyle),
            other => Err(Error::Config(format!(
                "unknown recipe `{other}` (expected lrs2_2mix_style, wham_style, or libri2mix_style)"
            ))),
        }
    }
}

/// Builds one example from its row seed. Pure function of the arguments.
///
/// Speaker pairs are pitch-adjacent (fundamentals within ~a fourth of each
/// other), mirroring the hard same-gender pairs of real two-speaker
/// mixtures; well-separated pitches would make frame-wise assignment
/// trivial.
pub fn simulate_example(
    recipe: Recipe,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<MixtureExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "row"));
    let s1_seed = derive_seed(seed, "src1");
    let f0_1 = harmonic_f0_of_seed(s1_seed);
    let s2_seed = (0u32..)
        .map(|k| derive_seed(seed, &format!("src2.{k}")))
        .find(|&cand| {
            let f0_2 = harmonic_f0_of_seed(cand);
            let ratio = f0_2 / f0_1;
            (0.78..=1.28).contains(&ratio) && (f0_2 - f0_1).abs() >= 2.0
        })
        .expect("pitch window has positive probability");
    let s1 = synth_source(SourceKind::HarmonicVoice, duration_s, sample_rate, s1_seed)?;
    let s2 = synth_source(SourceKind::HarmonicVoice, duration_s, sample_rate, s2_seed)?;

    let (mut sources, mut noise, snr_db): (Vec<Vec<f32>>, Option<Vec<f32>>, f64) = match recipe {
        Recipe::Lrs2TwoMixStyle => {
            let snr = rng.gen_range(-5.0..=5.0);
            let (_, a, b) = mix_at_snr(&s1, &s2, snr)?;
            (vec![a, b], None, snr)
        }
        Recipe::WhamStyle => {
            let speaker_snr = rng.gen_range(-5.0..=5.0);
            let noise_snr = rng.gen_range(-6.0..=3.0);
            let (_, a, b) = mix_at_snr(&s1, &s2, speaker_snr)?;
            let n = synth_source(
                SourceKind::NoiseBurst,
                duration_s,
                sample_rate,
                derive_seed(seed, "noise"),
            )?;
            let gain = (energy(&a) / (energy(&n) * 10f64.powf(noise_snr / 10.0))).sqrt();
            (vec![a, b], Some(scale_to(&n, gain)), noise_snr)
        }
        Recipe::Libri2MixStyle => {
            let l1 = rng.gen_range(-33.0..=-25.0);
            let l2 = rng.gen_range(-33.0..=-25.0);
            let ln = rng.gen_range(-38.0..=-30.0);
            let a = scale_to(&s1, 10f64.powf((l1 - rms_dbfs(&s1)) / 20.0));
            let b = scale_to(&s2, 10f64.powf((l2 - rms_dbfs(&s2)) / 20.0));
            let n = synth_source(
                SourceKind::NoiseBurst,
                duration_s,
                sample_rate,
                derive_seed(seed, "noise"),
            )?;
            let n = scale_to(&n, 10f64.powf((ln - rms_dbfs(&n)) / 20.0));
            let snr = 10.0 * (energy(&a) / energy(&b)).log10();
            (vec![a, b], Some(n), snr)
        }
    };

    // Clipping policy: rescale the whole example jointly so the mixture
    // identity and relative levels survive.
    let mut mixture = compose(&sources, noise.as_deref());
    let peak = mixture.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        let factor = 0.9 / peak as f64;
        for s in &mut sources {
            *s = scale_to(s, factor);
        }
        if let Some(n) = &mut noise {
            *n = scale_to(n, factor);
        }
        mixture = compose(&sources, noise.as_deref());
    }

    Ok(MixtureExample {
        mixture,
        sources,
        noise,
        snr_db,
        sample_rate,
        duration_s,
        seed,
    })
}

fn compose(sources: &[Vec<f32>], noise: Option<&[f32]>) -> Vec<f32> {
    let mut y = vec![0.0f32; sources[0].len()];
    for s in sources {
        for (yi, si) in y.iter_mut().zip(s) {
            *yi += *si;
        }
    }
    if let Some(n) = noise {
        for (yi, ni) in y.iter_mut().zip(n) {
            *yi += *ni;
        }
    }
    y
}

/// Generates WAV files and a manifest under `out_dir`. Fully reproducible
/// from the seed: the same call writes identical bytes.
pub fn simulate_dataset(
    recipe: Recipe,
    counts: SimCounts,
    duration_s: Option<f64>,
    sample_rate: u32,
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetManifest> {
    let duration = duration_s.unwrap_or_else(|| recipe.default_duration_s());
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    if recipe == Recipe::Libri2MixStyle {
        notes.push("libri2mix_style approximates LUFS targets with RMS dBFS".to_string());
    }

    let mut index = 0usize;
    for (split, count) in [
        (Split::Train, counts.train),
        (Split::Val, counts.val),
        (Split::Test, counts.test),
    ] {
        let split_dir = out_dir.join(split.as_str());
        std::fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
        for _ in 0..count {
            // One global counter drives every row seed, so no source seed is
            // shared across splits.
            let row_seed = derive_seed(seed, &format!("example.{index}"));
            let ex = simulate_example(recipe, duration, sample_rate, row_seed)?;
            let stem = format!("{}/{index:05}", split.as_str());
            let mix_rel = format!("{stem}_mix.wav");
            let s1_rel = format!("{stem}_src1.wav");
            let s2_rel = format!("{stem}_src2.wav");
            write_wav_f32(&out_dir.join(&mix_rel), &ex.mixture, sample_rate)?;
            write_wav_f32(&out_dir.join(&s1_rel), &ex.sources[0], sample_rate)?;
            write_wav_f32(&out_dir.join(&s2_rel), &ex.sources[1], sample_rate)?;
            let noise_rel = match &ex.noise {
                Some(n) => {
                    let rel = format!("{stem}_noise.wav");
                    write_wav_f32(&out_dir.join(&rel), n, sample_rate)?;
                    Some(rel)
                }
                None => None,
            };
            let peak = ex.mixture.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            if peak > 0.95 {
                notes.push(format!("{mix_rel}: example rescaled to avoid clipping"));
            }
            rows.push(ManifestRow {
                mixture: mix_rel,
                src1: s1_rel,
                src2: s2_rel,
                noise: noise_rel,
                snr_db: ex.snr_db,
                split,
                seed: row_seed,
            });
            index += 1;
        }
    }

    let manifest = DatasetManifest {
        recipe: recipe.name().to_string(),
        seed,
        sample_rate,
        duration_s: duration,
        notes,
        rows,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Loads the examples of one split into memory.
pub fn load_examples(manifest: &DatasetManifest, split: Split) -> Result<Vec<MixtureExample>> {
    let mut out = Vec::new();
    for row in manifest.rows.iter().filter(|r| r.split == split) {
        let (mixture, sr) = read_wav(&manifest.base_dir.join(&row.mixture))?;
        let (s1, _) = read_wav(&manifest.base_dir.join(&row.src1))?;
        let (s2, _) = read_wav(&manifest.base_dir.join(&row.src2))?;
        let noise = match &row.noise {
            Some(p) => Some(read_wav(&manifest.base_dir.join(p))?.0),
            None => None,
        };
        let duration_s = mixture.len() as f64 / sr as f64;
        out.push(MixtureExample {
            mixture,
            sources: vec![s1, s2],
            noise,
            snr_db: row.snr_db,
            sample_rate: sr,
            duration_s,
            seed: row.seed,
        });
    }
    Ok(out)
}
