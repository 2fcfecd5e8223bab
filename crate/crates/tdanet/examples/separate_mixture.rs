//! Separate a two-speaker mixture with a freshly initialized model and write
//! the per-speaker estimates as WAV files.
//!
//! An untrained model produces arbitrary masks; the point here is the
//! pipeline: waveform in, C exact-length waveforms out, round-tripped through
//! the WAV writer.

use tdanet::datagen::{mix_at_snr, synth_source, write_wav_f32, SourceKind};
use tdanet::model::{ModelConfig, TdaNet};

fn main() {
    let sr = 16_000;
    let s1 = synth_source(SourceKind::HarmonicVoice, 1.0, sr, 1).expect("source 1");
    let s2 = synth_source(SourceKind::HarmonicVoice, 1.0, sr, 2).expect("source 2");
    let (mixture, _, _) = mix_at_snr(&s1, &s2, 2.5).expect("mixing");

    let config = ModelConfig {
        n_channels: 32,
        s_levels: 3,
        b_unfolds: 2,
        ..ModelConfig::default()
    };
    let model = TdaNet::<f32>::new(config, 99).expect("model builds");
    let estimates = model.separate(&mixture).expect("separation");

    let out = std::env::temp_dir().join("tdanet_example_separation");
    std::fs::create_dir_all(&out).expect("output dir");
    write_wav_f32(&out.join("mixture.wav"), &mixture, sr).expect("write mixture");
    for (i, est) in estimates.iter().enumerate() {
        assert_eq!(est.len(), mixture.len(), "outputs match the input length");
        let path = out.join(format!("spk{}.wav", i + 1));
        write_wav_f32(&path, est, sr).expect("write estimate");
        println!("wrote {}", path.display());
    }
}
