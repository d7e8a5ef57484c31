//! The attention 1D-CNN: convolutional blocks (conv, batch norm, ReLU, max
//! pool), channel attention, spatial attention, a ReLU dense layer and a
//! linear head producing class logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{ChannelAttention, ChannelAttentionCache, SpatialAttention, SpatialAttentionCache};
use super::conv::{Conv1d, Conv1dCache};
use super::dense::Dense;
use super::norm::{BatchNorm1d, BatchNormCache};
use super::pool::{maxpool1d, maxpool1d_backward};
use super::{NnError, NnResult, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// 1 for the time-pooled MFCC vector, `n_coeff` for frame sequences.
    pub in_channels: usize,
    /// Length axis of the input (coefficients or frames).
    pub input_len: usize,
    pub filters: usize,
    pub kernel: usize,
    pub conv_blocks: usize,
    pub pool_window: usize,
    pub reduction: usize,
    pub spatial_kernel: usize,
    pub dense_units: usize,
    pub classes: usize,
}

impl ModelConfig {
    /// Defaults for the pooled-vector input: 2 blocks of 256 filters with
    /// kernel 7, pool window 7, reduction 8, 64 dense units.
    pub fn pooled(n_coeff: usize, classes: usize) -> Self {
        Self {
            in_channels: 1,
            input_len: n_coeff,
            filters: 256,
            kernel: 7,
            conv_blocks: 2,
            pool_window: 7,
            reduction: 8,
            spatial_kernel: 7,
            dense_units: 64,
            classes,
        }
    }

    /// Frame-sequence input: coefficients become channels.
    pub fn sequence(n_coeff: usize, frames: usize, classes: usize) -> Self {
        Self {
            in_channels: n_coeff,
            input_len: frames,
            ..Self::pooled(n_coeff, classes)
        }
    }

    pub fn validate(&self) -> NnResult<()> {
        let fail = |m: &str| Err(NnError::Config(m.to_string()));
        if self.in_channels == 0 || self.input_len == 0 || self.filters == 0 {
            return fail("input and filter dimensions must be positive");
        }
        if self.conv_blocks == 0 {
            return fail("need at least one convolutional block");
        }
        if self.kernel.is_multiple_of(2) || self.pool_window.is_multiple_of(2) || self.spatial_kernel.is_multiple_of(2) {
            return fail("kernel and pool widths must be odd");
        }
        if self.reduction == 0 || !self.filters.is_multiple_of(self.reduction) {
            return fail("filters must be divisible by the attention reduction");
        }
        if self.dense_units == 0 || self.classes < 2 {
            return fail("need dense units and at least two classes");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv1d,
    pub bn: BatchNorm1d,
}

#[derive(Debug, Clone)]
struct BlockCache {
    conv: Conv1dCache,
    bn: BatchNormCache,
    /// batch-norm output, pre-ReLU
    pre_relu: Vec<f64>,
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    blocks: Vec<BlockCache>,
    ca: ChannelAttentionCache,
    sa: SpatialAttentionCache,
    shape: (usize, usize, usize),
    flat: Tensor,
    dense_pre: Tensor,
    hidden: Tensor,
}

/// Model parameters plus the record of the last forward pass.
#[derive(Debug, Clone)]
pub struct AttentionCnn {
    config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    pub ca: ChannelAttention,
    pub sa: SpatialAttention,
    pub dense: Dense,
    pub head: Dense,
    cache: Option<ForwardCache>,
}

impl PartialEq for AttentionCnn {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.named_tensors().iter().zip(other.named_tensors()).all(|((n1, t1), (n2, t2))| {
                n1 == &n2 && t1.shape() == t2.shape() && t1.data == t2.data
            })
    }
}

fn relu_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

impl AttentionCnn {
    /// Seeded uniform fan-in initialization; batch norm starts at
    /// `gamma = 1`, `beta = 0`.
    pub fn new(config: ModelConfig, seed: u64) -> NnResult<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(config.conv_blocks);
        let mut in_c = config.in_channels;
        for _ in 0..config.conv_blocks {
            blocks.push(ConvBlock {
                conv: Conv1d::new(in_c, config.filters, config.kernel, &mut rng)?,
                bn: BatchNorm1d::new(config.filters),
            });
            in_c = config.filters;
        }
        let ca = ChannelAttention::new(config.filters, config.reduction, &mut rng)?;
        let sa = SpatialAttention::new(config.spatial_kernel, &mut rng)?;
        let dense = Dense::new(config.filters * config.input_len, config.dense_units, &mut rng);
        let head = Dense::new(config.dense_units, config.classes, &mut rng);
        Ok(Self {
            config,
            blocks,
            ca,
            sa,
            dense,
            head,
            cache: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.classes
    }

    fn check_input(&self, x: &Tensor) -> NnResult<usize> {
        let (batch, c, l) = x.dims3("model input")?;
        if c != self.config.in_channels || l != self.config.input_len {
            return Err(NnError::Shape(format!(
                "model expects [batch, {}, {}], got {:?}",
                self.config.in_channels,
                self.config.input_len,
                x.shape()
            )));
        }
        if batch == 0 {
            return Err(NnError::Shape("empty batch".into()));
        }
        Ok(batch)
    }

    /// Computes logits `[batch, classes]` and records everything the
    /// backward pass needs. In training mode batch norm uses batch
    /// statistics and updates its running estimates.
    pub fn forward(&mut self, x: &Tensor, training: bool) -> NnResult<Tensor> {
        let batch = self.check_input(x)?;
        self.cache = None;
        let mut h = x.clone();
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (c, conv_cache) = block.conv.forward(&h)?;
            let (mut n, bn_cache) = block.bn.forward(&c, training)?;
            let pre_relu = n.data.clone();
            relu_inplace(&mut n.data);
            let (p, argmax) = maxpool1d(&n, self.config.pool_window)?;
            block_caches.push(BlockCache {
                conv: conv_cache,
                bn: bn_cache,
                pre_relu,
                argmax,
            });
            h = p;
        }
        let shape = h.dims3("attention input")?;
        let (h, ca_cache) = self.ca.forward(&h)?;
        let (h, sa_cache) = self.sa.forward(&h)?;
        let flat = h.reshape(&[batch, shape.1 * shape.2])?;
        let dense_pre = self.dense.forward(&flat)?;
        let mut hidden = dense_pre.clone();
        relu_inplace(&mut hidden.data);
        let logits = self.head.forward(&hidden)?;
        self.cache = Some(ForwardCache {
            blocks: block_caches,
            ca: ca_cache,
            sa: sa_cache,
            shape,
            flat,
            dense_pre,
            hidden,
        });
        Ok(logits)
    }

    /// Inference-mode logits from a shared reference; records nothing.
    pub fn infer(&self, x: &Tensor) -> NnResult<Tensor> {
        let batch = self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            let (c, _) = block.conv.forward(&h)?;
            let mut n = block.bn.infer(&c)?;
            relu_inplace(&mut n.data);
            h = maxpool1d(&n, self.config.pool_window)?.0;
        }
        let (_, c, l) = h.dims3("attention input")?;
        let (h, _) = self.ca.forward(&h)?;
        let (h, _) = self.sa.forward(&h)?;
        let mut hidden = self.dense.forward(&h.reshape(&[batch, c * l])?)?;
        relu_inplace(&mut hidden.data);
        self.head.forward(&hidden)
    }

    /// Back-propagates `dlogits` through the recorded forward pass,
    /// accumulating into every parameter's gradient buffer. Returns the
    /// gradient with respect to the input.
    pub fn backward(&mut self, dlogits: &Tensor) -> NnResult<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("backward called without a recorded forward pass".into()))?;
        let batch = cache.hidden.shape()[0];
        if dlogits.shape() != [batch, self.config.classes] {
            return Err(NnError::Shape(format!(
                "logit gradient {:?}, expected [{batch}, {}]",
                dlogits.shape(),
                self.config.classes
            )));
        }
        let mut dh = self.head.backward(&cache.hidden, dlogits)?;
        for (d, pre) in dh.data.iter_mut().zip(&cache.dense_pre.data) {
            if *pre <= 0.0 {
                *d = 0.0;
            }
        }
        let dflat = self.dense.backward(&cache.flat, &dh)?;
        let (b, c, l) = cache.shape;
        let mut d = dflat.reshape(&[b, c, l])?;
        d = self.sa.backward(&cache.sa, &d)?;
        d = self.ca.backward(&cache.ca, &d)?;
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let mut dn = maxpool1d_backward(&d, &bc.argmax)?;
            for (g, pre) in dn.data.iter_mut().zip(&bc.pre_relu) {
                if *pre <= 0.0 {
                    *g = 0.0;
                }
            }
            let dc = block.bn.backward(&bc.bn, &dn)?;
            d = block.conv.backward(&bc.conv, &dc)?;
        }
        Ok(d)
    }

    /// Learnable parameters in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let n = i + 1;
            out.push((format!("conv{n}.weight"), &mut block.conv.weight));
            out.push((format!("conv{n}.bias"), &mut block.conv.bias));
            out.push((format!("bn{n}.gamma"), &mut block.bn.gamma));
            out.push((format!("bn{n}.beta"), &mut block.bn.beta));
        }
        out.push(("ca.w0".into(), &mut self.ca.w0));
        out.push(("ca.w1".into(), &mut self.ca.w1));
        out.push(("sa.weight".into(), &mut self.sa.conv.weight));
        out.push(("sa.bias".into(), &mut self.sa.conv.bias));
        out.push(("dense.weight".into(), &mut self.dense.weight));
        out.push(("dense.bias".into(), &mut self.dense.bias));
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// Parameters followed by batch-norm running statistics.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut buffers: Vec<(String, *mut Tensor)> = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            buffers.push((format!("bn{}.running_mean", i + 1), &mut block.bn.running_mean));
            buffers.push((format!("bn{}.running_var", i + 1), &mut block.bn.running_var));
        }
        let mut out = self.parameters_mut();
        // SAFETY: running statistics are disjoint fields from every tensor
        // returned by `parameters_mut`, and all borrows share `&mut self`.
        out.extend(buffers.into_iter().map(|(n, p)| (n, unsafe { &mut *p })));
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let n = i + 1;
            out.push((format!("conv{n}.weight"), &block.conv.weight));
            out.push((format!("conv{n}.bias"), &block.conv.bias));
            out.push((format!("bn{n}.gamma"), &block.bn.gamma));
            out.push((format!("bn{n}.beta"), &block.bn.beta));
        }
        out.push(("ca.w0".into(), &self.ca.w0));
        out.push(("ca.w1".into(), &self.ca.w1));
        out.push(("sa.weight".into(), &self.sa.conv.weight));
        out.push(("sa.bias".into(), &self.sa.conv.bias));
        out.push(("dense.weight".into(), &self.dense.weight));
        out.push(("dense.bias".into(), &self.dense.bias));
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("bn{}.running_mean", i + 1), &block.bn.running_mean));
            out.push((format!("bn{}.running_var", i + 1), &block.bn.running_var));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.parameters_mut() {
            t.zero_grad();
        }
    }

    /// Copy without gradients or forward record.
    pub fn snapshot(&self) -> Self {
        let mut s = self.clone();
        s.cache = None;
        for (_, t) in s.parameters_mut() {
            t.grad = None;
        }
        s
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors()
            .iter()
            .filter(|(n, _)| !n.contains("running"))
            .map(|(_, t)| t.len())
            .sum()
    }
}
