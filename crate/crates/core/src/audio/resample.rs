use std::f64::consts::PI;

use super::{AudioClip, AudioError, AudioResult};

/// Zero crossings of the interpolation kernel on each side of the center.
const KERNEL_ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

fn blackman(t: f64) -> f64 {
    // t in [-1, 1]
    0.42 + 0.5 * (PI * t).cos() + 0.08 * (2.0 * PI * t).cos()
}

/// Band-limited resampling of `samples` by `ratio` (output rate / input
/// rate), producing exactly `out_len` samples.
pub fn resample_ratio(samples: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite());
    if samples.is_empty() {
        return vec![0.0; out_len];
    }
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = KERNEL_ZERO_CROSSINGS / cutoff;
    let n = samples.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                let d = t - j as f64;
                acc += samples[j as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc
        })
        .collect()
}

/// Windowed-sinc resampling to `target_rate`. Same-rate input is returned
/// unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioResult<AudioClip> {
    if target_rate == 0 {
        return Err(AudioError::Config("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = (clip.len() as f64 * ratio).round() as usize;
    let samples = resample_ratio(&clip.samples, ratio, out_len)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        source_path: clip.source_path.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{peak_bin, tone};

    #[test]
    fn same_rate_is_identity() {
        let c = tone(440.0, 16_000, 1000, 0.5);
        assert_eq!(resample(&c, 16_000).unwrap(), c);
    }

    #[test]
    fn length_arithmetic() {
        let c = tone(440.0, 44_100, 44_100, 0.5);
        let out = resample(&c, 16_000).unwrap();
        assert!((out.len() as i64 - 16_000).abs() <= 1);
        assert!((out.duration_secs() - c.duration_secs()).abs() <= 1.0 / 16_000.0);
    }

    #[test]
    fn downsample_keeps_tone_peak() {
        let c = tone(440.0, 48_000, 48_000, 0.8);
        let out = resample(&c, 16_000).unwrap();
        let n = 4096;
        let mid = out.len() / 2 - n / 2;
        let expected = 440.0 / (16_000.0 / n as f64);
        let got = peak_bin(&out.samples[mid..mid + n]) as f64;
        assert!((got - expected).abs() <= 1.0, "peak bin {got}, expected {expected}");
    }

    #[test]
    fn upsample_keeps_tone_peak() {
        let c = tone(1000.0, 8_000, 8_000, 0.8);
        let out = resample(&c, 22_050).unwrap();
        let n = 8192;
        let mid = out.len() / 2 - n / 2;
        let expected = 1000.0 / (22_050.0 / n as f64);
        let got = peak_bin(&out.samples[mid..mid + n]) as f64;
        assert!((got - expected).abs() <= 1.0);
    }

    #[test]
    fn zero_rate_rejected() {
        let c = tone(440.0, 16_000, 100, 0.5);
        assert!(matches!(resample(&c, 0), Err(AudioError::Config(_))));
    }
}
