//! MFCC feature extraction.
//!
//! The chain is pre-emphasis, framing with a Hamming window, one-sided power
//! spectrum, triangular mel filterbank, log compression and a cosine
//! projection that keeps coefficients `1..=n_coeff`:
//!
//! ```text
//! x'(t)   = x(t) - alpha x(t-1)
//! w[n]    = a - (1 - a) cos(2 pi n / (N - 1))
//! M_k     = sum_f |X[f]|^2 H_k(f)
//! L_k     = ln(M_k + 1e-10)
//! MFCC_n  = sum_k L_k cos(n (k - 0.5) pi / K)
//! ```

mod cache;
mod dct;
mod demo;
mod mel;
mod spectrum;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

pub use cache::{read_features, write_features, FeatureCacheError, CACHE_MAGIC, CACHE_VERSION};
pub use dct::DctMatrix;
pub use demo::{demo_signal, demo_spectra, dominant_peaks, DemoSpectra, DEMO_TONES_HZ};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterBank};
pub use spectrum::{power_spectrum, PowerSpectrumPlan, Spectrum};

/// Energy floor added before the logarithm so silent bands stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid DSP configuration: {0}")]
    Config(String),
    #[error("clip of {len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    pub preemph_alpha: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub hamming_a: f64,
    pub n_mels: usize,
    pub n_coeff: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            preemph_alpha: 0.97,
            frame_len: 512,
            hop: 256,
            hamming_a: 0.54,
            n_mels: 40,
            n_coeff: 20,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

impl DspConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        let fail = |m: String| Err(DspError::Config(m));
        if !(0.9..=1.0).contains(&self.preemph_alpha) {
            return fail(format!("pre-emphasis {} outside [0.9, 1.0]", self.preemph_alpha));
        }
        if self.frame_len < 2 || !self.frame_len.is_multiple_of(2) {
            return fail(format!("frame length {} must be even and >= 2", self.frame_len));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return fail(format!("hop {} must be in 1..={}", self.hop, self.frame_len));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return fail(format!("need 0 <= fmin < fmax, got {}..{}", self.fmin, self.fmax));
        }
        if self.fmax > sample_rate as f64 / 2.0 {
            return fail(format!("fmax {} above Nyquist of {sample_rate} Hz", self.fmax));
        }
        if self.n_coeff == 0 || self.n_coeff > self.n_mels {
            return fail(format!("need 1 <= n_coeff <= n_mels, got {}/{}", self.n_coeff, self.n_mels));
        }
        Ok(())
    }
}

/// `out[0] = x[0]`, `out[t] = x[t] - alpha x[t-1]`.
pub fn pre_emphasize(clip: &AudioClip, alpha: f64) -> AudioClip {
    AudioClip {
        samples: pre_emphasize_samples(&clip.samples, alpha),
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    }
}

fn pre_emphasize_samples(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        out.push(first);
    }
    out.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    out
}

pub fn hamming_window(len: usize, a: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| a - (1.0 - a) * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Splits into `1 + (len - N) / H` frames and multiplies each by `window`.
fn frames(x: &[f64], frame_len: usize, hop: usize, window: Option<&[f64]>) -> Result<Vec<Vec<f64>>, DspError> {
    if x.len() < frame_len {
        return Err(DspError::TooShort {
            len: x.len(),
            frame_len,
        });
    }
    let count = 1 + (x.len() - frame_len) / hop;
    Ok((0..count)
        .map(|i| {
            let frame = &x[i * hop..i * hop + frame_len];
            match window {
                Some(w) => frame.iter().zip(w).map(|(s, w)| s * w).collect(),
                None => frame.to_vec(),
            }
        })
        .collect())
}

/// Frames the clip with length `cfg.frame_len` and hop `cfg.hop` and applies
/// the Hamming window to each frame.
pub fn frame_and_window(clip: &AudioClip, cfg: &DspConfig) -> Result<Vec<Vec<f64>>, DspError> {
    let window = hamming_window(cfg.frame_len, cfg.hamming_a);
    frames(&clip.samples, cfg.frame_len, cfg.hop, Some(&window))
}

/// `ln(M_k + 1e-10)`.
pub fn log_compress(mel: &[f64]) -> Vec<f64> {
    mel.iter().map(|&m| (m + LOG_FLOOR).ln()).collect()
}

/// Per-clip feature matrix, frames x coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFeatures {
    pub frames: usize,
    pub coeffs: usize,
    pub data: Vec<f64>,
    pub pooled: Option<Vec<f64>>,
    pub clip_id: Option<String>,
}

impl MfccFeatures {
    pub fn from_rows(rows: Vec<Vec<f64>>, clip_id: Option<String>) -> Self {
        let frames = rows.len();
        let coeffs = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let mut f = Self {
            frames,
            coeffs,
            data,
            pooled: None,
            clip_id,
        };
        f.pooled = Some(f.time_mean());
        f
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.coeffs..(frame + 1) * self.coeffs]
    }

    /// Per-coefficient mean over frames.
    pub fn time_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.coeffs];
        for f in 0..self.frames {
            for (m, v) in mean.iter_mut().zip(self.row(f)) {
                *m += v;
            }
        }
        let n = self.frames.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Coefficient-major copy (`coeffs x frames`), the layout of a
    /// multi-channel sequence input.
    pub fn transposed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for f in 0..self.frames {
            for c in 0..self.coeffs {
                out[c * self.frames + f] = self.data[f * self.coeffs + c];
            }
        }
        out
    }
}

/// Precomputed window, FFT plan, filterbank and DCT for one configuration
/// and sample rate. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: DspConfig,
    sample_rate: u32,
    window: Vec<f64>,
    plan: PowerSpectrumPlan,
    bank: MelFilterBank,
    dct: DctMatrix,
}

impl MfccExtractor {
    pub fn new(cfg: &DspConfig, sample_rate: u32) -> Result<Self, DspError> {
        cfg.validate(sample_rate)?;
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window: hamming_window(cfg.frame_len, cfg.hamming_a),
            plan: PowerSpectrumPlan::new(cfg.frame_len),
            bank: MelFilterBank::new(cfg, sample_rate)?,
            dct: DctMatrix::new(cfg.n_coeff, cfg.n_mels),
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    pub fn filter_bank(&self) -> &MelFilterBank {
        &self.bank
    }

    pub fn dct(&self) -> &DctMatrix {
        &self.dct
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<(), DspError> {
        if clip.sample_rate != self.sample_rate {
            return Err(DspError::Config(format!(
                "clip rate {} Hz, extractor built for {} Hz",
                clip.sample_rate, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MfccFeatures, DspError> {
        self.check_rate(clip)?;
        let emphasized = pre_emphasize_samples(&clip.samples, self.cfg.preemph_alpha);
        let rows = frames(&emphasized, self.cfg.frame_len, self.cfg.hop, Some(&self.window))?
            .iter()
            .map(|frame| {
                let spec = self.plan.compute(frame, self.sample_rate as f64);
                self.dct.project(&log_compress(&self.bank.apply(&spec)))
            })
            .collect();
        Ok(MfccFeatures::from_rows(rows, clip.source_path.clone()))
    }

    /// Feature matrix of the same shape as [`extract`](Self::extract) that
    /// skips the spectral chain: each windowed frame is cut into `n_coeff`
    /// equal sub-blocks and the log energy of each block is kept.
    pub fn extract_frame_energies(&self, clip: &AudioClip) -> Result<MfccFeatures, DspError> {
        self.check_rate(clip)?;
        let n = self.cfg.n_coeff;
        let rows = frames(&clip.samples, self.cfg.frame_len, self.cfg.hop, Some(&self.window))?
            .iter()
            .map(|frame| {
                (0..n)
                    .map(|i| {
                        let (a, b) = (i * frame.len() / n, (i + 1) * frame.len() / n);
                        (frame[a..b].iter().map(|v| v * v).sum::<f64>() + LOG_FLOOR).ln()
                    })
                    .collect()
            })
            .collect();
        Ok(MfccFeatures::from_rows(rows, clip.source_path.clone()))
    }
}

/// One-shot MFCC extraction.
pub fn extract_mfcc(clip: &AudioClip, cfg: &DspConfig) -> Result<MfccFeatures, DspError> {
    MfccExtractor::new(cfg, clip.sample_rate)?.extract(clip)
}
