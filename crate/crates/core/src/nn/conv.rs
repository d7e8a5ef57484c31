use rand::Rng;

use super::tensor::gemm;
use super::{uniform_init, NnError, NnResult, Tensor};

/// 1-D cross-correlation, stride 1, `same` zero padding of `(kernel-1)/2`
/// on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[out_channels, in_channels, kernel]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

/// Unfolded input kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv1dCache {
    cols: Vec<f64>,
    batch: usize,
    len: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> NnResult<Self> {
        if kernel.is_multiple_of(2) {
            return Err(NnError::Config(format!("kernel {kernel} must be odd for same padding")));
        }
        let fan_in = in_channels * kernel;
        Ok(Self {
            weight: uniform_init(&[out_channels, in_channels, kernel], fan_in, rng),
            bias: uniform_init(&[out_channels], fan_in, rng),
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> NnResult<Self> {
        let (out_c, _, k) = weight.dims3("conv weight")?;
        if bias.shape() != [out_c] {
            return Err(NnError::Shape(format!("conv bias {:?} for {out_c} filters", bias.shape())));
        }
        if k % 2 == 0 {
            return Err(NnError::Config(format!("kernel {k} must be odd for same padding")));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn im2col(&self, x: &Tensor) -> NnResult<(Vec<f64>, usize, usize)> {
        let (batch, c_in, len) = x.dims3("conv1d")?;
        if c_in != self.in_channels() {
            return Err(NnError::Shape(format!(
                "conv1d expects {} input channels, got {c_in}",
                self.in_channels()
            )));
        }
        let k = self.kernel();
        let pad = (k - 1) / 2;
        let width = batch * len;
        let mut cols = vec![0.0; c_in * k * width];
        for ci in 0..c_in {
            for kk in 0..k {
                let row = &mut cols[(ci * k + kk) * width..(ci * k + kk + 1) * width];
                for b in 0..batch {
                    let src = &x.data[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                    let dst = &mut row[b * len..(b + 1) * len];
                    // dst[l] = src[l + kk - pad]
                    let lo = pad.saturating_sub(kk);
                    let hi = (len + pad).saturating_sub(kk).min(len);
                    if lo < hi {
                        dst[lo..hi].copy_from_slice(&src[lo + kk - pad..hi + kk - pad]);
                    }
                }
            }
        }
        Ok((cols, batch, len))
    }

    pub fn forward(&self, x: &Tensor) -> NnResult<(Tensor, Conv1dCache)> {
        let (cols, batch, len) = self.im2col(x)?;
        let c_out = self.out_channels();
        let inner = self.in_channels() * self.kernel();
        let width = batch * len;
        let mut y = vec![0.0; c_out * width];
        gemm(c_out, inner, width, &self.weight.data, false, &cols, false, 0.0, &mut y);
        let mut out = vec![0.0; batch * c_out * len];
        for co in 0..c_out {
            let bias = self.bias.data[co];
            for b in 0..batch {
                let src = &y[co * width + b * len..co * width + (b + 1) * len];
                let dst = &mut out[(b * c_out + co) * len..(b * c_out + co + 1) * len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        Ok((
            Tensor::new(&[batch, c_out, len], out)?,
            Conv1dCache { cols, batch, len },
        ))
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &Conv1dCache, dy: &Tensor) -> NnResult<Tensor> {
        let Conv1dCache { cols, batch, len } = cache;
        let (batch, len) = (*batch, *len);
        let c_out = self.out_channels();
        let c_in = self.in_channels();
        let k = self.kernel();
        if dy.shape() != [batch, c_out, len] {
            return Err(NnError::Shape(format!(
                "conv1d upstream gradient {:?}, expected {:?}",
                dy.shape(),
                [batch, c_out, len]
            )));
        }
        let width = batch * len;
        let inner = c_in * k;
        // dY as c_out x (batch * len)
        let mut dmat = vec![0.0; c_out * width];
        for co in 0..c_out {
            for b in 0..batch {
                dmat[co * width + b * len..co * width + (b + 1) * len]
                    .copy_from_slice(&dy.data[(b * c_out + co) * len..(b * c_out + co + 1) * len]);
            }
        }
        gemm(c_out, width, inner, &dmat, false, cols, true, 1.0, self.weight.grad_mut());
        let bias_grad = self.bias.grad_mut();
        for co in 0..c_out {
            bias_grad[co] += dmat[co * width..(co + 1) * width].iter().sum::<f64>();
        }

        let mut dcols = vec![0.0; inner * width];
        gemm(inner, c_out, width, &self.weight.data, true, &dmat, false, 0.0, &mut dcols);
        let pad = (k - 1) / 2;
        let mut dx = vec![0.0; batch * c_in * len];
        for ci in 0..c_in {
            for kk in 0..k {
                let row = &dcols[(ci * k + kk) * width..(ci * k + kk + 1) * width];
                let lo = pad.saturating_sub(kk);
                let hi = (len + pad).saturating_sub(kk).min(len);
                for b in 0..batch {
                    let src = &row[b * len..(b + 1) * len];
                    let dst = &mut dx[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                    for l in lo..hi {
                        dst[l + kk - pad] += src[l];
                    }
                }
            }
        }
        Tensor::new(&[batch, c_in, len], dx)
    }
}
