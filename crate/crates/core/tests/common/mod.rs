//! Central finite-difference oracle and small fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use ser_core::nn::{ModelConfig, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors, so gradients that are zero up to
/// rounding do not blow up the ratio.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Deterministic values in [-1, 1) from a 64-bit LCG; independent of the
/// generators the library uses.
pub fn probe(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub fn probe_tensor(shape: &[usize], seed: u64) -> Tensor {
    Tensor::new(shape, probe(shape.iter().product(), seed)).unwrap()
}

/// `sum r_i y_i`; its gradient with respect to `y` is `r`.
pub fn linear_loss(y: &Tensor, r: &Tensor) -> f64 {
    y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

/// Largest relative error between `analytic` and central differences of
/// `loss` with respect to the tensor selected by `slot`.
pub fn check_tensor<M>(
    target: &mut M,
    slot: impl Fn(&mut M) -> &mut Tensor,
    analytic: &[f64],
    loss: impl Fn(&mut M) -> f64,
) -> f64 {
    let n = slot(target).len();
    assert_eq!(analytic.len(), n, "analytic gradient length");
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = slot(target).data[i];
        slot(target).data[i] = orig + FD_STEP;
        let up = loss(target);
        slot(target).data[i] = orig - FD_STEP;
        let down = loss(target);
        slot(target).data[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(a, numeric));
    }
    worst
}

/// The gradient-check model: 4 filters, length 8, 3 classes.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        in_channels: 1,
        input_len: 8,
        filters: 4,
        kernel: 7,
        conv_blocks: 2,
        pool_window: 7,
        reduction: 2,
        spatial_kernel: 7,
        dense_units: 8,
        classes: 3,
    }
}
