//! Training-set expansion by Gaussian noise injection and pitch shifting.

mod vocoder;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{resample_ratio, AudioClip, AudioError};
use crate::corpus::{AugmentTag, ManifestRow};

pub use vocoder::{time_stretch, VocoderConfig};

/// Largest accepted shift in either direction.
pub const MAX_SEMITONES: i32 = 12;

const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0001;
const SIGN_STREAM: u64 = 0x7369_676e_0000_0002;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    Config(String),
    #[error("failed to load {path}: {source}")]
    Load {
        path: String,
        #[source]
        source: AudioError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignPolicy {
    /// One shift per clip, direction drawn from the seeded source.
    #[default]
    Random,
    Up,
    Down,
    /// Both directions, giving four rows per original.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_scale: f64,
    pub semitones: i32,
    pub rng_seed: u64,
    pub sign_policy: SignPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_scale: 0.035,
            semitones: 4,
            rng_seed: 0,
            sign_policy: SignPolicy::Random,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(AugmentError::Config("noise_scale must be >= 0".into()));
        }
        if !(0..=MAX_SEMITONES).contains(&self.semitones) {
            return Err(AugmentError::Config(format!(
                "semitones must be in 0..={MAX_SEMITONES}"
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one clip, derived from the global seed and
/// a per-clip key so results do not depend on processing order.
pub fn clip_rng(seed: u64, key: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(key ^ splitmix64(stream))))
}

/// Stable 64-bit FNV-1a hash of a row path, used as the clip key.
pub fn clip_key(path: &str) -> u64 {
    path.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// `x + noise_scale * max|x| * n`, `n ~ N(0, 1)`, clamped to `[-1, 1]`.
pub fn add_noise<R: Rng + ?Sized>(clip: &AudioClip, noise_scale: f64, rng: &mut R) -> AudioClip {
    let amplitude = noise_scale * clip.peak();
    let samples = clip
        .samples
        .iter()
        .map(|&x| {
            let n: f64 = rng.sample(StandardNormal);
            (x + amplitude * n).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    }
}

/// Shifts pitch by `semitones` while keeping length and sample rate: the
/// clip is time-stretched by `2^(s/12)` with a phase vocoder and resampled
/// back to its original length.
pub fn pitch_shift(clip: &AudioClip, semitones: i32) -> Result<AudioClip, AugmentError> {
    if semitones.abs() > MAX_SEMITONES {
        return Err(AugmentError::Config(format!(
            "shift of {semitones} semitones exceeds ±{MAX_SEMITONES}"
        )));
    }
    let len = clip.len();
    // speed < 1 slows the clip down; resampling by the same factor restores
    // the length and scales every frequency by 1 / speed.
    let speed = 2f64.powf(-semitones as f64 / 12.0);
    let stretched = time_stretch(&clip.samples, speed, &VocoderConfig::default());
    let shifted = if stretched.len() == len && semitones == 0 {
        stretched
    } else {
        resample_ratio(&stretched, speed, len)
    };
    Ok(AudioClip {
        samples: shifted.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    })
}

/// Produces the audio for a (possibly augmented) row from its decoded source.
pub fn render(
    clip: &AudioClip,
    tag: AugmentTag,
    key: u64,
    cfg: &AugmentConfig,
) -> Result<AudioClip, AugmentError> {
    match tag {
        AugmentTag::None => Ok(clip.clone()),
        AugmentTag::Noise => {
            let mut rng = clip_rng(cfg.rng_seed, key, NOISE_STREAM);
            Ok(add_noise(clip, cfg.noise_scale, &mut rng))
        }
        AugmentTag::PitchUp => pitch_shift(clip, cfg.semitones),
        AugmentTag::PitchDown => pitch_shift(clip, -cfg.semitones),
    }
}

/// Expands original rows into augmented rows without touching audio: each
/// original yields itself, a noisy copy and one pitch-shifted copy (two under
/// [`SignPolicy::Both`]). Rows that already carry an augmentation tag pass
/// through unchanged.
pub fn expand_rows(rows: &[ManifestRow], cfg: &AugmentConfig) -> Vec<ManifestRow> {
    let mut out = Vec::with_capacity(rows.len() * 3);
    for row in rows {
        out.push(row.clone());
        if row.augment_tag != AugmentTag::None {
            continue;
        }
        let tagged = |tag| ManifestRow {
            augment_tag: tag,
            ..row.clone()
        };
        out.push(tagged(AugmentTag::Noise));
        match cfg.sign_policy {
            SignPolicy::Up => out.push(tagged(AugmentTag::PitchUp)),
            SignPolicy::Down => out.push(tagged(AugmentTag::PitchDown)),
            SignPolicy::Both => {
                out.push(tagged(AugmentTag::PitchUp));
                out.push(tagged(AugmentTag::PitchDown));
            }
            SignPolicy::Random => {
                let mut rng = clip_rng(cfg.rng_seed, clip_key(&row.path), SIGN_STREAM);
                let tag = if rng.gen_bool(0.5) {
                    AugmentTag::PitchUp
                } else {
                    AugmentTag::PitchDown
                };
                out.push(tagged(tag));
            }
        }
    }
    out
}

/// Expands rows and renders every resulting clip. `load` supplies the
/// decoded, standardized source audio for a row path.
pub fn expand_dataset<F>(
    rows: &[ManifestRow],
    cfg: &AugmentConfig,
    mut load: F,
) -> Result<Vec<(ManifestRow, AudioClip)>, AugmentError>
where
    F: FnMut(&str) -> Result<AudioClip, AudioError>,
{
    cfg.validate()?;
    expand_rows(rows, cfg)
        .into_iter()
        .map(|row| {
            let clip = load(&row.path).map_err(|source| AugmentError::Load {
                path: row.path.clone(),
                source,
            })?;
            let audio = render(&clip, row.augment_tag, clip_key(&row.path), cfg)?;
            Ok((row, audio))
        })
        .collect()
}
