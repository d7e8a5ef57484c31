//! Spectral-preservation demo: a sum of four tones analysed raw, after
//! pre-emphasis, and after pre-emphasis plus windowing.

use std::f64::consts::PI;

use super::{frames, hamming_window, pre_emphasize_samples, DspConfig, PowerSpectrumPlan, Spectrum};
use crate::audio::AudioClip;

pub const DEMO_TONES_HZ: [f64; 4] = [100.0, 500.0, 1000.0, 2000.0];
const DEMO_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpectra {
    pub raw: Spectrum,
    pub pre_emphasized: Spectrum,
    pub windowed: Spectrum,
}

impl DemoSpectra {
    pub fn named(&self) -> [(&'static str, &Spectrum); 3] {
        [
            ("raw", &self.raw),
            ("pre_emphasized", &self.pre_emphasized),
            ("windowed", &self.windowed),
        ]
    }
}

/// One second at 16 kHz of the four demo tones, scaled to unit peak.
pub fn demo_signal() -> AudioClip {
    let raw: Vec<f64> = (0..DEMO_RATE as usize)
        .map(|t| {
            let x = t as f64 / DEMO_RATE as f64;
            DEMO_TONES_HZ.iter().map(|f| (2.0 * PI * f * x).sin()).sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    AudioClip::new(raw.into_iter().map(|v| v / peak).collect(), DEMO_RATE)
}

fn mean_spectrum(x: &[f64], cfg: &DspConfig, window: Option<&[f64]>, plan: &PowerSpectrumPlan) -> Spectrum {
    let frames = frames(x, cfg.frame_len, cfg.hop, window).expect("demo signal longer than a frame");
    let mut power = vec![0.0; cfg.frame_len / 2 + 1];
    for f in &frames {
        for (acc, p) in power.iter_mut().zip(plan.compute(f, DEMO_RATE as f64).power) {
            *acc += p;
        }
    }
    power.iter_mut().for_each(|p| *p /= frames.len() as f64);
    Spectrum {
        power,
        bin_hz: DEMO_RATE as f64 / cfg.frame_len as f64,
    }
}

/// Frame-averaged power spectra (N = 512, 31.25 Hz per bin) of the demo
/// signal at the three stages.
pub fn demo_spectra() -> DemoSpectra {
    let cfg = DspConfig::default();
    let x = demo_signal().samples;
    let plan = PowerSpectrumPlan::new(cfg.frame_len);
    let emphasized = pre_emphasize_samples(&x, cfg.preemph_alpha);
    let window = hamming_window(cfg.frame_len, cfg.hamming_a);
    DemoSpectra {
        raw: mean_spectrum(&x, &cfg, None, &plan),
        pre_emphasized: mean_spectrum(&emphasized, &cfg, None, &plan),
        windowed: mean_spectrum(&emphasized, &cfg, Some(&window), &plan),
    }
}

/// The `count` strongest local maxima, returned in ascending bin order.
pub fn dominant_peaks(spec: &Spectrum, count: usize) -> Vec<usize> {
    let p = &spec.power;
    let mut maxima: Vec<usize> = (1..p.len().saturating_sub(1))
        .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1])
        .collect();
    maxima.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    maxima.truncate(count);
    maxima.sort_unstable();
    maxima
}
