use super::{DspConfig, DspError, Spectrum};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided FFT bins.
///
/// Filter edges and centers are placed uniformly on the mel scale and
/// snapped to FFT bins, so every filter peaks at exactly 1 on its center bin
/// and neighbouring filters sum to 1 on every bin between the first and last
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    /// `n_mels` rows of `n_bins` weights.
    pub weights: Vec<Vec<f64>>,
    /// Center frequency of each filter in Hz.
    pub centers: Vec<f64>,
    center_bins: Vec<usize>,
    bin_hz: f64,
}

impl MelFilterBank {
    pub fn new(cfg: &DspConfig, sample_rate: u32) -> Result<Self, DspError> {
        cfg.validate(sample_rate)?;
        let n_bins = cfg.frame_len / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.frame_len as f64;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let k = cfg.n_mels;
        let edges: Vec<usize> = (0..k + 2)
            .map(|i| {
                let hz = mel_to_hz(lo + (hi - lo) * i as f64 / (k + 1) as f64);
                ((hz / bin_hz).round() as usize).min(n_bins - 1)
            })
            .collect();
        if let Some(w) = edges.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DspError::Config(format!(
                "{k} mel filters too many for {} Hz bins: points {w} and {} share bin {}",
                bin_hz,
                w + 1,
                edges[w]
            )));
        }

        let weights = (1..=k)
            .map(|m| {
                let (left, center, right) = (edges[m - 1], edges[m], edges[m + 1]);
                (0..n_bins)
                    .map(|b| {
                        if b > left && b <= center {
                            (b - left) as f64 / (center - left) as f64
                        } else if b > center && b < right {
                            (right - b) as f64 / (right - center) as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let center_bins = edges[1..=k].to_vec();
        Ok(Self {
            weights,
            centers: center_bins.iter().map(|&b| b as f64 * bin_hz).collect(),
            center_bins,
            bin_hz,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn center_bins(&self) -> &[usize] {
        &self.center_bins
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    /// Bins whose frequency lies between the first and last filter center.
    pub fn covered_bins(&self) -> std::ops::RangeInclusive<usize> {
        self.center_bins[0]..=*self.center_bins.last().unwrap()
    }

    /// Mel band energies `M_k = sum_f |X[f]|^2 H_k(f)`.
    pub fn apply(&self, spec: &Spectrum) -> Vec<f64> {
        assert_eq!(spec.power.len(), self.n_bins(), "spectrum/filter size mismatch");
        self.weights
            .iter()
            .map(|row| row.iter().zip(&spec.power).map(|(w, p)| w * p).sum())
            .collect()
    }
}
