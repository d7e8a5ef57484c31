use super::{NnError, NnResult, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `[batch, channels, length]`.
///
/// Training mode normalizes with the batch statistics (biased variance) and
/// moves the running estimates by `momentum` toward the batch mean and the
/// unbiased batch variance. Inference mode uses the running estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    training: bool,
    shape: (usize, usize, usize),
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> NnResult<(usize, usize, usize)> {
        let (batch, channels, len) = x.dims3("batchnorm")?;
        if channels != self.channels() {
            return Err(NnError::Shape(format!(
                "batchnorm has {} channels, input has {channels}",
                self.channels()
            )));
        }
        if batch == 0 || len == 0 {
            return Err(NnError::Shape("batchnorm on an empty batch".into()));
        }
        Ok((batch, channels, len))
    }

    /// Training mode updates the running statistics; inference mode leaves
    /// the layer untouched.
    pub fn forward(&mut self, x: &Tensor, training: bool) -> NnResult<(Tensor, BatchNormCache)> {
        let (batch, channels, len) = self.check(x)?;
        if !training {
            return self.normalize(x, &self.running_mean.data, &self.running_var.data, false);
        }
        let count = (batch * len) as f64;
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for c in 0..channels {
            let values = || (0..batch).flat_map(move |b| x.data[(b * channels + c) * len..(b * channels + c + 1) * len].iter());
            mean[c] = values().sum::<f64>() / count;
            var[c] = values().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / count;
            let unbiased = if count > 1.0 { var[c] * count / (count - 1.0) } else { var[c] };
            let m = self.momentum;
            self.running_mean.data[c] = (1.0 - m) * self.running_mean.data[c] + m * mean[c];
            self.running_var.data[c] = (1.0 - m) * self.running_var.data[c] + m * unbiased;
        }
        self.normalize(x, &mean, &var, true)
    }

    /// Inference-mode forward pass without a cache.
    pub fn infer(&self, x: &Tensor) -> NnResult<Tensor> {
        self.check(x)?;
        Ok(self.normalize(x, &self.running_mean.data, &self.running_var.data, false)?.0)
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], var: &[f64], training: bool) -> NnResult<(Tensor, BatchNormCache)> {
        let (batch, channels, len) = x.dims3("batchnorm")?;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for b in 0..batch {
            for c in 0..channels {
                let (g, bt, mu, inv) = (self.gamma.data[c], self.beta.data[c], mean[c], inv_std[c]);
                let off = (b * channels + c) * len;
                for i in off..off + len {
                    xhat[i] = (x.data[i] - mu) * inv;
                    out[i] = g * xhat[i] + bt;
                }
            }
        }
        Ok((
            Tensor::new(&[batch, channels, len], out)?,
            BatchNormCache {
                xhat,
                inv_std,
                training,
                shape: (batch, channels, len),
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor) -> NnResult<Tensor> {
        let (batch, channels, len) = cache.shape;
        if dy.shape() != [batch, channels, len] {
            return Err(NnError::Shape("batchnorm gradient shape mismatch".into()));
        }
        let count = (batch * len) as f64;
        let mut dgamma = vec![0.0; channels];
        let mut dbeta = vec![0.0; channels];
        let mut dx = vec![0.0; dy.len()];
        for c in 0..channels {
            let idx = |b: usize| (b * channels + c) * len..(b * channels + c + 1) * len;
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for b in 0..batch {
                for i in idx(b) {
                    sum_dy += dy.data[i];
                    sum_dy_xhat += dy.data[i] * cache.xhat[i];
                }
            }
            dgamma[c] = sum_dy_xhat;
            dbeta[c] = sum_dy;
            let g = self.gamma.data[c];
            let inv = cache.inv_std[c];
            for b in 0..batch {
                for i in idx(b) {
                    dx[i] = if cache.training {
                        g * inv / count * (count * dy.data[i] - sum_dy - cache.xhat[i] * sum_dy_xhat)
                    } else {
                        g * inv * dy.data[i]
                    };
                }
            }
        }
        for (acc, v) in self.gamma.grad_mut().iter_mut().zip(dgamma) {
            *acc += v;
        }
        for (acc, v) in self.beta.grad_mut().iter_mut().zip(dbeta) {
            *acc += v;
        }
        Tensor::new(&[batch, channels, len], dx)
    }
}
