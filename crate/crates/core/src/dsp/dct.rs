use std::f64::consts::PI;

/// Cosine projection of log mel energies onto cepstral coefficients
/// `1..=n_coeff` (the DC term is not included).
///
/// `basis[n-1][k-1] = cos(n (k - 0.5) pi / K)` for `n = 1..=n_coeff`,
/// `k = 1..=K`. The matrix is fixed; it stands in for the projection `P` of
/// a learned decorrelating transform.
#[derive(Debug, Clone, PartialEq)]
pub struct DctMatrix {
    pub basis: Vec<Vec<f64>>,
}

impl DctMatrix {
    pub fn new(n_coeff: usize, n_mels: usize) -> Self {
        let k_f = n_mels as f64;
        let basis = (1..=n_coeff)
            .map(|n| {
                (1..=n_mels)
                    .map(|k| (n as f64 * (k as f64 - 0.5) * PI / k_f).cos())
                    .collect()
            })
            .collect();
        Self { basis }
    }

    pub fn n_coeff(&self) -> usize {
        self.basis.len()
    }

    pub fn n_mels(&self) -> usize {
        self.basis.first().map_or(0, Vec::len)
    }

    pub fn project(&self, log_mel: &[f64]) -> Vec<f64> {
        assert_eq!(log_mel.len(), self.n_mels(), "log-mel length mismatch");
        self.basis
            .iter()
            .map(|row| row.iter().zip(log_mel).map(|(b, l)| b * l).sum())
            .collect()
    }
}
