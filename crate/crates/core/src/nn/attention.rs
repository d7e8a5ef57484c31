//! Channel and spatial attention over `[batch, channels, length]` maps.

use rand::Rng;

use super::conv::{Conv1d, Conv1dCache};
use super::{sigmoid, uniform_init, NnError, NnResult, Tensor};

/// Squeeze-and-excitation style channel gate:
/// `M_c = sigmoid(W1 relu(W0 avg(x)) + W1 relu(W0 max(x)))`, pooled over the
/// length axis, with the same `W0`/`W1` for both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention {
    /// `[channels / reduction, channels]`
    pub w0: Tensor,
    /// `[channels, channels / reduction]`
    pub w1: Tensor,
}

#[derive(Debug, Clone)]
pub struct ChannelAttentionCache {
    x: Tensor,
    avg: Vec<f64>,
    max: Vec<f64>,
    max_idx: Vec<usize>,
    h_avg: Vec<f64>,
    h_max: Vec<f64>,
    gate: Vec<f64>,
}

impl ChannelAttention {
    pub fn new<R: Rng + ?Sized>(channels: usize, reduction: usize, rng: &mut R) -> NnResult<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) || channels / reduction == 0 {
            return Err(NnError::Config(format!(
                "channel count {channels} not divisible by reduction {reduction}"
            )));
        }
        let hidden = channels / reduction;
        Ok(Self {
            w0: uniform_init(&[hidden, channels], channels, rng),
            w1: uniform_init(&[channels, hidden], hidden, rng),
        })
    }

    pub fn channels(&self) -> usize {
        self.w0.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w0.shape()[0]
    }

    /// Gate values `M_c`, shape `[batch, channels]`.
    pub fn gate(&self, x: &Tensor) -> NnResult<Vec<f64>> {
        Ok(self.forward(x)?.1.gate)
    }

    pub fn forward(&self, x: &Tensor) -> NnResult<(Tensor, ChannelAttentionCache)> {
        let (batch, channels, len) = x.dims3("channel attention")?;
        if channels != self.channels() {
            return Err(NnError::Shape(format!(
                "channel attention built for {} channels, input has {channels}",
                self.channels()
            )));
        }
        let hidden = self.hidden();
        let mut avg = vec![0.0; batch * channels];
        let mut max = vec![0.0; batch * channels];
        let mut max_idx = vec![0usize; batch * channels];
        for r in 0..batch * channels {
            let row = &x.data[r * len..(r + 1) * len];
            avg[r] = row.iter().sum::<f64>() / len as f64;
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            max[r] = row[best];
            max_idx[r] = best;
        }
        let mut h_avg = vec![0.0; batch * hidden];
        let mut h_max = vec![0.0; batch * hidden];
        let mut gate = vec![0.0; batch * channels];
        for b in 0..batch {
            for j in 0..hidden {
                let w = &self.w0.data[j * channels..(j + 1) * channels];
                h_avg[b * hidden + j] = w.iter().zip(&avg[b * channels..(b + 1) * channels]).map(|(w, v)| w * v).sum();
                h_max[b * hidden + j] = w.iter().zip(&max[b * channels..(b + 1) * channels]).map(|(w, v)| w * v).sum();
            }
            for c in 0..channels {
                let w = &self.w1.data[c * hidden..(c + 1) * hidden];
                let s: f64 = (0..hidden)
                    .map(|j| w[j] * (h_avg[b * hidden + j].max(0.0) + h_max[b * hidden + j].max(0.0)))
                    .sum();
                gate[b * channels + c] = sigmoid(s);
            }
        }
        let mut out = x.data.clone();
        for r in 0..batch * channels {
            out[r * len..(r + 1) * len].iter_mut().for_each(|v| *v *= gate[r]);
        }
        Ok((
            Tensor::new(&[batch, channels, len], out)?,
            ChannelAttentionCache {
                x: x.clone(),
                avg,
                max,
                max_idx,
                h_avg,
                h_max,
                gate,
            },
        ))
    }

    pub fn backward(&mut self, cache: &ChannelAttentionCache, dy: &Tensor) -> NnResult<Tensor> {
        let x = &cache.x;
        let (batch, channels, len) = x.dims3("channel attention")?;
        if dy.shape() != x.shape() {
            return Err(NnError::Shape("channel attention gradient shape mismatch".into()));
        }
        let hidden = self.hidden();
        let mut dx = vec![0.0; x.len()];
        let mut ds = vec![0.0; batch * channels];
        for r in 0..batch * channels {
            let (xs, ds_row) = (&x.data[r * len..(r + 1) * len], &dy.data[r * len..(r + 1) * len]);
            let dgate: f64 = xs.iter().zip(ds_row).map(|(a, b)| a * b).sum();
            let g = cache.gate[r];
            ds[r] = dgate * g * (1.0 - g);
            for (d, &u) in dx[r * len..(r + 1) * len].iter_mut().zip(ds_row) {
                *d = u * g;
            }
        }
        let mut dw0 = vec![0.0; hidden * channels];
        let mut dw1 = vec![0.0; channels * hidden];
        for b in 0..batch {
            let ds_b = &ds[b * channels..(b + 1) * channels];
            let ha = &cache.h_avg[b * hidden..(b + 1) * hidden];
            let hm = &cache.h_max[b * hidden..(b + 1) * hidden];
            for c in 0..channels {
                for j in 0..hidden {
                    dw1[c * hidden + j] += ds_b[c] * (ha[j].max(0.0) + hm[j].max(0.0));
                }
            }
            // gradient w.r.t. the shared hidden activations
            let dr: Vec<f64> = (0..hidden)
                .map(|j| (0..channels).map(|c| self.w1.data[c * hidden + j] * ds_b[c]).sum())
                .collect();
            let dha: Vec<f64> = (0..hidden).map(|j| if ha[j] > 0.0 { dr[j] } else { 0.0 }).collect();
            let dhm: Vec<f64> = (0..hidden).map(|j| if hm[j] > 0.0 { dr[j] } else { 0.0 }).collect();
            let avg = &cache.avg[b * channels..(b + 1) * channels];
            let max = &cache.max[b * channels..(b + 1) * channels];
            for j in 0..hidden {
                for c in 0..channels {
                    dw0[j * channels + c] += dha[j] * avg[c] + dhm[j] * max[c];
                }
            }
            for c in 0..channels {
                let (mut davg, mut dmax) = (0.0, 0.0);
                for j in 0..hidden {
                    let w = self.w0.data[j * channels + c];
                    davg += w * dha[j];
                    dmax += w * dhm[j];
                }
                let r = b * channels + c;
                dx[r * len..(r + 1) * len].iter_mut().for_each(|d| *d += davg / len as f64);
                dx[r * len + cache.max_idx[r]] += dmax;
            }
        }
        for (acc, v) in self.w0.grad_mut().iter_mut().zip(dw0) {
            *acc += v;
        }
        for (acc, v) in self.w1.grad_mut().iter_mut().zip(dw1) {
            *acc += v;
        }
        Tensor::new(&[batch, channels, len], dx)
    }
}

/// Per-position gate: `M_s = sigmoid(conv([mean_c(x); max_c(x)]))` with a
/// 2-in, 1-out `same`-padded convolution along the length axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    pub conv: Conv1d,
}

#[derive(Debug, Clone)]
pub struct SpatialAttentionCache {
    x: Tensor,
    max_idx: Vec<usize>,
    conv: Conv1dCache,
    gate: Vec<f64>,
}

impl SpatialAttention {
    pub fn new<R: Rng + ?Sized>(kernel: usize, rng: &mut R) -> NnResult<Self> {
        Ok(Self {
            conv: Conv1d::new(2, 1, kernel, rng)?,
        })
    }

    /// Gate values `M_s`, shape `[batch, length]`.
    pub fn gate(&self, x: &Tensor) -> NnResult<Vec<f64>> {
        Ok(self.forward(x)?.1.gate)
    }

    pub fn forward(&self, x: &Tensor) -> NnResult<(Tensor, SpatialAttentionCache)> {
        let (batch, channels, len) = x.dims3("spatial attention")?;
        if len == 0 || channels == 0 {
            return Err(NnError::Shape("spatial attention on empty map".into()));
        }
        let mut pooled = vec![0.0; batch * 2 * len];
        let mut max_idx = vec![0usize; batch * len];
        for b in 0..batch {
            for l in 0..len {
                let at = |c: usize| x.data[(b * channels + c) * len + l];
                let mut best = 0;
                let mut sum = 0.0;
                for c in 0..channels {
                    sum += at(c);
                    if at(c) > at(best) {
                        best = c;
                    }
                }
                pooled[(b * 2) * len + l] = sum / channels as f64;
                pooled[(b * 2 + 1) * len + l] = at(best);
                max_idx[b * len + l] = best;
            }
        }
        let (s, conv_cache) = self.conv.forward(&Tensor::new(&[batch, 2, len], pooled)?)?;
        let gate: Vec<f64> = s.data.iter().map(|&v| sigmoid(v)).collect();
        let mut out = x.data.clone();
        for b in 0..batch {
            for c in 0..channels {
                let row = &mut out[(b * channels + c) * len..(b * channels + c + 1) * len];
                for (v, g) in row.iter_mut().zip(&gate[b * len..(b + 1) * len]) {
                    *v *= g;
                }
            }
        }
        Ok((
            Tensor::new(&[batch, channels, len], out)?,
            SpatialAttentionCache {
                x: x.clone(),
                max_idx,
                conv: conv_cache,
                gate,
            },
        ))
    }

    pub fn backward(&mut self, cache: &SpatialAttentionCache, dy: &Tensor) -> NnResult<Tensor> {
        let x = &cache.x;
        let (batch, channels, len) = x.dims3("spatial attention")?;
        if dy.shape() != x.shape() {
            return Err(NnError::Shape("spatial attention gradient shape mismatch".into()));
        }
        let mut dx = vec![0.0; x.len()];
        let mut ds = vec![0.0; batch * len];
        for b in 0..batch {
            for l in 0..len {
                let g = cache.gate[b * len + l];
                let mut dgate = 0.0;
                for c in 0..channels {
                    let i = (b * channels + c) * len + l;
                    dgate += dy.data[i] * x.data[i];
                    dx[i] = dy.data[i] * g;
                }
                ds[b * len + l] = dgate * g * (1.0 - g);
            }
        }
        let dpooled = self.conv.backward(&cache.conv, &Tensor::new(&[batch, 1, len], ds)?)?;
        for b in 0..batch {
            for l in 0..len {
                let davg = dpooled.data[(b * 2) * len + l] / channels as f64;
                for c in 0..channels {
                    dx[(b * channels + c) * len + l] += davg;
                }
                let c = cache.max_idx[b * len + l];
                dx[(b * channels + c) * len + l] += dpooled.data[(b * 2 + 1) * len + l];
            }
        }
        Tensor::new(&[batch, channels, len], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn zero_weights_halve_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 8, 5], &mut rng);
        let mut ca = ChannelAttention::new(8, 4, &mut rng).unwrap();
        ca.w0.data.iter_mut().for_each(|v| *v = 0.0);
        ca.w1.data.iter_mut().for_each(|v| *v = 0.0);
        let (y, _) = ca.forward(&x).unwrap();
        assert_eq!(y.data, x.map(|v| 0.5 * v).data);

        let mut sa = SpatialAttention::new(7, &mut rng).unwrap();
        sa.conv.weight.data.iter_mut().for_each(|v| *v = 0.0);
        sa.conv.bias.data[0] = 0.0;
        let (y, _) = sa.forward(&x).unwrap();
        assert_eq!(y.data, x.map(|v| 0.5 * v).data);
    }

    #[test]
    fn channel_gate_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, c, l, r) = (2, 6, 5, 3);
        let x = random(&[b, c, l], &mut rng);
        let ca = ChannelAttention::new(c, r, &mut rng).unwrap();
        let (y, _) = ca.forward(&x).unwrap();
        let h = c / r;
        for bb in 0..b {
            let row = |ch: usize| &x.data[(bb * c + ch) * l..(bb * c + ch + 1) * l];
            let avg: Vec<f64> = (0..c).map(|ch| row(ch).iter().sum::<f64>() / l as f64).collect();
            let max: Vec<f64> = (0..c).map(|ch| row(ch).iter().cloned().fold(f64::MIN, f64::max)).collect();
            let mlp = |v: &[f64]| -> Vec<f64> {
                let hid: Vec<f64> = (0..h)
                    .map(|j| (0..c).map(|k| ca.w0.data[j * c + k] * v[k]).sum::<f64>().max(0.0))
                    .collect();
                (0..c).map(|k| (0..h).map(|j| ca.w1.data[k * h + j] * hid[j]).sum()).collect()
            };
            let (ma, mm) = (mlp(&avg), mlp(&max));
            for ch in 0..c {
                let g = sig(ma[ch] + mm[ch]);
                assert!(g > 0.0 && g < 1.0);
                for t in 0..l {
                    let i = (bb * c + ch) * l + t;
                    assert!((y.data[i] - g * x.data[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spatial_gate_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (b, c, l) = (2, 3, 9);
        let x = random(&[b, c, l], &mut rng);
        let sa = SpatialAttention::new(7, &mut rng).unwrap();
        let (y, _) = sa.forward(&x).unwrap();
        let w = &sa.conv.weight.data;
        for bb in 0..b {
            let at = |ch: usize, t: usize| x.data[(bb * c + ch) * l + t];
            let avg: Vec<f64> = (0..l).map(|t| (0..c).map(|ch| at(ch, t)).sum::<f64>() / c as f64).collect();
            let max: Vec<f64> = (0..l).map(|t| (0..c).map(|ch| at(ch, t)).fold(f64::MIN, f64::max)).collect();
            for t in 0..l {
                let mut s = sa.conv.bias.data[0];
                for k in 0..7 {
                    let p = t as isize + k as isize - 3;
                    if p >= 0 && (p as usize) < l {
                        s += w[k] * avg[p as usize] + w[7 + k] * max[p as usize];
                    }
                }
                let g = sig(s);
                for ch in 0..c {
                    assert!((y.data[(bb * c + ch) * l + t] - g * at(ch, t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn saturated_gates_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 4, 6], &mut rng).map(|v| v.abs() + 0.1);
        let mut sa = SpatialAttention::new(7, &mut rng).unwrap();
        sa.conv.weight.data.iter_mut().for_each(|v| *v = 0.0);
        sa.conv.bias.data[0] = 1e3;
        assert_eq!(sa.forward(&x).unwrap().0, x);

        let mut ca = ChannelAttention::new(4, 2, &mut rng).unwrap();
        ca.w0.data.iter_mut().for_each(|v| *v = 1.0);
        ca.w1.data.iter_mut().for_each(|v| *v = 1e3);
        assert_eq!(ca.forward(&x).unwrap().0, x);
    }

    #[test]
    fn bad_reduction_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(ChannelAttention::new(10, 4, &mut rng), Err(NnError::Config(_))));
        assert!(matches!(ChannelAttention::new(4, 8, &mut rng), Err(NnError::Config(_))));
    }
}
