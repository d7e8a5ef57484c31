use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

/// One-sided power spectrum `|X[k]|^2`, `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub power: Vec<f64>,
    /// Frequency resolution in Hz (sample rate / N).
    pub bin_hz: f64,
}

impl Spectrum {
    /// Length of the frame the spectrum was computed from.
    pub fn frame_len(&self) -> usize {
        2 * (self.power.len() - 1)
    }

    /// `sum_k |X[k]|^2` over the full range `0..N`, reconstructed from the
    /// one-sided half by conjugate symmetry.
    pub fn full_energy(&self) -> f64 {
        let n = self.frame_len();
        let half = n / 2;
        self.power
            .iter()
            .enumerate()
            .map(|(k, &p)| if k == 0 || k == half { p } else { 2.0 * p })
            .sum()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }
}

/// Reusable forward FFT of a fixed frame length.
#[derive(Clone)]
pub struct PowerSpectrumPlan {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl std::fmt::Debug for PowerSpectrumPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrumPlan").field("len", &self.len).finish()
    }
}

impl PowerSpectrumPlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 2 && len.is_multiple_of(2), "frame length must be even");
        Self {
            fft: FftPlanner::new().plan_fft_forward(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn compute(&self, frame: &[f64], sample_rate: f64) -> Spectrum {
        assert_eq!(frame.len(), self.len, "frame length mismatch");
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        Spectrum {
            power: buf[..=self.len / 2].iter().map(|c| c.re * c.re + c.im * c.im).collect(),
            bin_hz: sample_rate / self.len as f64,
        }
    }
}

/// One-shot power spectrum of an even-length frame.
pub fn power_spectrum(frame: &[f64], sample_rate: f64) -> Spectrum {
    PowerSpectrumPlan::new(frame.len()).compute(frame, sample_rate)
}
