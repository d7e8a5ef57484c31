use super::{NnError, NnResult, Tensor};

/// Stride-1 max pooling over the length axis with `same` padding (padded
/// positions never win). Returns the output and, per output position, the
/// source index along the length axis. Ties resolve to the leftmost index.
pub fn maxpool1d(x: &Tensor, window: usize) -> NnResult<(Tensor, Vec<usize>)> {
    if window.is_multiple_of(2) {
        return Err(NnError::Config(format!("pool window {window} must be odd")));
    }
    let (batch, channels, len) = x.dims3("maxpool1d")?;
    let reach = window / 2;
    let mut out = vec![0.0; x.len()];
    let mut argmax = vec![0usize; x.len()];
    for row in 0..batch * channels {
        let src = &x.data[row * len..(row + 1) * len];
        for l in 0..len {
            let lo = l.saturating_sub(reach);
            let hi = (l + reach).min(len - 1);
            let mut best = lo;
            for j in lo + 1..=hi {
                if src[j] > src[best] {
                    best = j;
                }
            }
            out[row * len + l] = src[best];
            argmax[row * len + l] = best;
        }
    }
    Ok((Tensor::new(&[batch, channels, len], out)?, argmax))
}

pub fn maxpool1d_backward(dy: &Tensor, argmax: &[usize]) -> NnResult<Tensor> {
    let (batch, channels, len) = dy.dims3("maxpool1d backward")?;
    if argmax.len() != dy.len() {
        return Err(NnError::Shape("maxpool1d cache does not match gradient".into()));
    }
    let mut dx = vec![0.0; dy.len()];
    for row in 0..batch * channels {
        for l in 0..len {
            dx[row * len + argmax[row * len + l]] += dy.data[row * len + l];
        }
    }
    Tensor::new(&[batch, channels, len], dx)
}
