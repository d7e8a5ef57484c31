//! Audio ingestion: WAV decoding, band-limited resampling and duration
//! standardization.
//!
//! Every clip handed to the rest of the pipeline is mono, normalized to
//! `[-1, 1]` and carries its sample rate.

mod resample;
mod wav;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resample::{resample, resample_ratio};
pub use wav::{decode_wav, encode_wav_pcm16};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV data: {0}")]
    Decode(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid audio configuration: {0}")]
    Config(String),
    #[error("empty audio clip")]
    EmptyInput,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type AudioResult<T> = Result<T, AudioError>;

/// A mono clip with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_path: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            source_path: None,
        }
    }

    pub fn with_source(mut self, path: impl Into<String>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute amplitude, 0 for an empty clip.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Reads and decodes a WAV file.
    pub fn load(path: &Path) -> AudioResult<Self> {
        let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(decode_wav(&bytes)?.with_source(path.display().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Zero,
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrimAnchor {
    Start,
    #[default]
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub target_rate: u32,
    pub target_duration: f64,
    pub pad_mode: PadMode,
    pub trim_anchor: TrimAnchor,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            target_rate: 16_000,
            target_duration: 3.0,
            pad_mode: PadMode::Zero,
            trim_anchor: TrimAnchor::Center,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> AudioResult<()> {
        if self.target_rate == 0 {
            return Err(AudioError::Config("target_rate must be positive".into()));
        }
        if !(self.target_duration > 0.0 && self.target_duration.is_finite()) {
            return Err(AudioError::Config(
                "target_duration must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn target_len(&self) -> usize {
        (self.target_duration * self.target_rate as f64).round() as usize
    }
}

/// Brings a clip to `cfg.target_rate` and exactly `cfg.target_len()` samples.
///
/// Short clips are padded at the tail, long clips are trimmed around the
/// configured anchor. A clip that already has the target rate and length is
/// returned unchanged.
pub fn standardize_duration(clip: &AudioClip, cfg: &IngestConfig) -> AudioResult<AudioClip> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(AudioError::EmptyInput);
    }
    let clip = resample(clip, cfg.target_rate)?;
    let target = cfg.target_len();
    let len = clip.len();
    let samples = if len == target {
        clip.samples
    } else if len < target {
        let mut out = clip.samples;
        match cfg.pad_mode {
            PadMode::Zero => out.resize(target, 0.0),
            PadMode::Reflect => {
                let src = out.clone();
                // mirror without repeating the edge sample: a b c d -> c b a b c ...
                let period = if src.len() > 1 { 2 * (src.len() - 1) } else { 1 };
                let mut i = src.len();
                while out.len() < target {
                    let pos = i % period;
                    let idx = if pos < src.len() { pos } else { period - pos };
                    out.push(src[idx]);
                    i += 1;
                }
            }
        }
        out
    } else {
        let start = match cfg.trim_anchor {
            TrimAnchor::Start => 0,
            TrimAnchor::Center => (len - target) / 2,
        };
        clip.samples[start..start + target].to_vec()
    };
    Ok(AudioClip {
        samples,
        sample_rate: cfg.target_rate,
        source_path: clip.source_path,
    })
}

/// Decode, resample and standardize in one step.
pub fn ingest_file(path: &Path, cfg: &IngestConfig) -> AudioResult<AudioClip> {
    let clip = AudioClip::load(path)?;
    standardize_duration(&clip, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(secs: f64, rate: u32) -> AudioClip {
        let n = (secs * rate as f64).round() as usize;
        AudioClip::new((0..n).map(|i| ((i % 97) as f64 / 97.0) - 0.5).collect(), rate)
    }

    #[test]
    fn pads_short_clip_with_trailing_zeros() {
        let c = clip(2.0, 16_000);
        let out = standardize_duration(&c, &IngestConfig::default()).unwrap();
        assert_eq!(out.len(), 48_000);
        assert_eq!(&out.samples[..32_000], &c.samples[..]);
        assert!(out.samples[32_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn center_trim_keeps_middle() {
        let c = clip(4.0, 16_000);
        let out = standardize_duration(&c, &IngestConfig::default()).unwrap();
        assert_eq!(out.len(), 48_000);
        assert_eq!(&out.samples[..], &c.samples[8_000..56_000]);
    }

    #[test]
    fn start_trim_keeps_onset() {
        let c = clip(4.0, 16_000);
        let cfg = IngestConfig {
            trim_anchor: TrimAnchor::Start,
            ..Default::default()
        };
        let out = standardize_duration(&c, &cfg).unwrap();
        assert_eq!(&out.samples[..], &c.samples[..48_000]);
    }

    #[test]
    fn exact_length_is_bitwise_identity() {
        let c = clip(3.0, 16_000);
        let out = standardize_duration(&c, &IngestConfig::default()).unwrap();
        assert_eq!(out.samples, c.samples);
    }

    #[test]
    fn reflect_pad_mirrors_tail() {
        let c = AudioClip::new(vec![1.0, 2.0, 3.0], 4);
        let cfg = IngestConfig {
            target_rate: 4,
            target_duration: 2.0,
            pad_mode: PadMode::Reflect,
            trim_anchor: TrimAnchor::Center,
        };
        let out = standardize_duration(&c, &cfg).unwrap();
        assert_eq!(out.samples, vec![1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn empty_clip_rejected() {
        let c = AudioClip::new(vec![], 16_000);
        assert!(matches!(
            standardize_duration(&c, &IngestConfig::default()),
            Err(AudioError::EmptyInput)
        ));
    }

    #[test]
    fn standardize_is_idempotent() {
        for secs in [0.7, 3.0, 5.3] {
            let cfg = IngestConfig::default();
            let once = standardize_duration(&clip(secs, 22_050), &cfg).unwrap();
            let twice = standardize_duration(&once, &cfg).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IngestConfig {
            target_rate: 0,
            ..Default::default()
        };
        assert!(matches!(
            standardize_duration(&clip(1.0, 8000), &cfg),
            Err(AudioError::Config(_))
        ));
    }
}
