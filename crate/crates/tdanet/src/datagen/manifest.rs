use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One dataset row; paths are relative to the manifest's directory.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub mixture: String,
    pub src1: String,
    pub src2: String,
    pub noise: Option<String>,
    pub snr_db: f64,
    pub split: Split,
    pub seed: u64,
}

/// The dataset manifest: CSV with `#` comment lines for provenance, then a
/// header and one row per example.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub recipe: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub notes: Vec<String>,
    pub rows: Vec<ManifestRow>,
    /// Directory the row paths are relative to.
    pub base_dir: PathBuf,
}

const HEADER: &str = "mixture,src1,src2,noise,snr_db,split,seed";

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "# recipe={}", self.recipe);
        let _ = writeln!(text, "# seed={}", self.seed);
        let _ = writeln!(text, "# sample_rate={}", self.sample_rate);
        let _ = writeln!(text, "# duration_s={}", self.duration_s);
        for note in &self.notes {
            let _ = writeln!(text, "# note={note}");
        }
        text.push_str(HEADER);
        text.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{}",
                r.mixture,
                r.src1,
                r.src2,
                r.noise.as_deref().unwrap_or(""),
                r.snr_db,
                r.split.as_str(),
                r.seed
            );
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut recipe = String::new();
        let mut seed = 0u64;
        let mut sample_rate = 16_000u32;
        let mut duration_s = 0.0f64;
        let mut notes = Vec::new();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("recipe=") {
                    recipe = v.to_string();
                } else if let Some(v) = comment.strip_prefix("seed=") {
                    seed = v.parse().unwrap_or(0);
                } else if let Some(v) = comment.strip_prefix("sample_rate=") {
                    sample_rate = v.parse().unwrap_or(16_000);
                } else if let Some(v) = comment.strip_prefix("duration_s=") {
                    duration_s = v.parse().unwrap_or(0.0);
                } else if let Some(v) = comment.strip_prefix("note=") {
                    notes.push(v.to_string());
                }
                continue;
            }
            if !saw_header {
                if line != HEADER {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        detail: format!("line {}: expected header `{HEADER}`", lineno + 1),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("line {}: expected 7 fields, got {}", lineno + 1, fields.len()),
                });
            }
            let parse_err = |what: &str| Error::Format {
                path: path.to_path_buf(),
                detail: format!("line {}: bad {what}", lineno + 1),
            };
            rows.push(ManifestRow {
                mixture: fields[0].to_string(),
                src1: fields[1].to_string(),
                src2: fields[2].to_string(),
                noise: (!fields[3].is_empty()).then(|| fields[3].to_string()),
                snr_db: fields[4].parse().map_err(|_| parse_err("snr_db"))?,
                split: fields[5].parse()?,
                seed: fields[6].parse().map_err(|_| parse_err("seed"))?,
            });
        }
        if !saw_header {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: "manifest has no header row".into(),
            });
        }
        Ok(DatasetManifest {
            recipe,
            seed,
            sample_rate,
            duration_s,
            notes,
            rows,
            base_dir,
        })
    }
}
