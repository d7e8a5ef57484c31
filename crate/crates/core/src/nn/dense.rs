use rand::Rng;

use super::tensor::gemm;
use super::{uniform_init, NnError, NnResult, Tensor};

/// Fully connected layer `y = W x + b` over `[batch, in]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_init(&[outputs, inputs], inputs, rng),
            bias: uniform_init(&[outputs], inputs, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> NnResult<Tensor> {
        let (batch, inputs) = x.dims2("dense")?;
        if inputs != self.inputs() {
            return Err(NnError::Shape(format!(
                "dense layer expects {} inputs, got {inputs}",
                self.inputs()
            )));
        }
        let out_n = self.outputs();
        let mut y: Vec<f64> = (0..batch).flat_map(|_| self.bias.data.iter().copied()).collect();
        gemm(batch, inputs, out_n, &x.data, false, &self.weight.data, true, 1.0, &mut y);
        Tensor::new(&[batch, out_n], y)
    }

    /// `x` is the forward input. Accumulates parameter gradients and returns
    /// the input gradient.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> NnResult<Tensor> {
        let (batch, inputs) = x.dims2("dense")?;
        let out_n = self.outputs();
        if dy.shape() != [batch, out_n] {
            return Err(NnError::Shape("dense gradient shape mismatch".into()));
        }
        gemm(out_n, batch, inputs, &dy.data, true, &x.data, false, 1.0, self.weight.grad_mut());
        let bias_grad = self.bias.grad_mut();
        for row in dy.data.chunks_exact(out_n) {
            for (g, d) in bias_grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; batch * inputs];
        gemm(batch, out_n, inputs, &dy.data, false, &self.weight.data, false, 0.0, &mut dx);
        Tensor::new(&[batch, inputs], dx)
    }
}
