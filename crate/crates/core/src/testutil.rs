//! Signal helpers shared by unit tests.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioClip;

pub fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> AudioClip {
    AudioClip::new(
        (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect(),
        rate,
    )
}

/// Bin of the largest Hann-windowed magnitude in `0..=n/2`.
pub fn peak_bin(x: &[f64]) -> usize {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            Complex::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap()
}
