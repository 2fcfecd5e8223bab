//! Minimal RIFF/WAVE reader and writer: mono PCM16 or IEEE float32.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes mono IEEE float32 samples. Reading the file back reproduces the
/// samples bit-exactly.
pub fn write_wav_f32(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    write_header(&mut out, FMT_IEEE_FLOAT, 32, sample_rate, data_len);
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes mono 16-bit PCM; samples are clamped to [-1, 1] and quantized, so
/// the round trip is accurate to one quantization step (2^-15).
pub fn write_wav_pcm16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    write_header(&mut out, FMT_PCM, 16, sample_rate, data_len);
    for s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_header(out: &mut Vec<u8>, fmt: u16, bits: u16, sample_rate: u32, data_len: usize) {
    let byte_rate = sample_rate * (bits as u32 / 8);
    let block_align = bits / 8;
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&fmt.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
}

/// Reads a mono PCM16 or float32 RIFF/WAVE file. Unknown chunks are skipped;
/// anything malformed is reported with the offending chunk named.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err(path, "missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32)> = None; // (format, bits, sample_rate)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(format_err(
                path,
                format!(
                    "chunk `{}` truncated (declares {size} bytes)",
                    String::from_utf8_lossy(id)
                ),
            ));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err(path, "chunk `fmt ` shorter than 16 bytes"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if channels != 1 {
                    return Err(format_err(
                        path,
                        format!("chunk `fmt `: expected mono, got {channels} channels"),
                    ));
                }
                match (format, bits) {
                    (FMT_PCM, 16) | (FMT_IEEE_FLOAT, 32) => {}
                    _ => {
                        return Err(format_err(
                            path,
                            format!(
                                "chunk `fmt `: unsupported codec (format {format}, {bits}-bit); \
                                 only PCM16 and float32 are handled"
                            ),
                        ))
                    }
                }
                fmt = Some((format, bits, sample_rate));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, etc.
        }
        pos = body_start + size + (size & 1); // chunks are word-aligned
    }

    let (format, bits, sample_rate) =
        fmt.ok_or_else(|| format_err(path, "chunk `fmt ` missing"))?;
    let data = data.ok_or_else(|| format_err(path, "chunk `data` missing"))?;

    let samples = match (format, bits) {
        (FMT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FMT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        _ => unreachable!("validated above"),
    };
    Ok((samples, sample_rate))
}
