//! Graph feature embedding of the correspondence set.
//!
//! Correspondences are 6-D points; a k-NN graph over them yields 12-channel
//! edge features (anchor, neighbor minus anchor) which pass through a linear
//! edge transform, three conv/BN/ReLU scale stages (the neighbor axis is
//! halved entering stages two and three and repeated back up before the
//! merge), a merge conv, and a channelwise max over neighbors, producing one
//! D-dimensional row per correspondence. Forward and analytic backward are
//! implemented by hand; gradients are validated against central finite
//! differences in the tests.
//!
//! Two reduced backends (`PointNetLike`: per-point MLP without the graph;
//! `DgcnnLike`: single-scale edge convolution) share the same parameter and
//! gradient machinery for ablation runs.

use crate::error::{Error, Result};
use crate::features::{CorrespondenceSet, FeatureMatrix};
use crate::{real, to_f64, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Feature-embedding backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    /// Multiscale graph feature merging (the full model).
    Gfm,
    /// Per-correspondence MLP on the 6-D coordinates, no graph.
    PointNetLike,
    /// Single-scale edge convolution.
    DgcnnLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfmConfig {
    /// Neighbors per correspondence in the 6-D k-NN graph.
    pub graph_k: usize,
    /// Channel widths of the three scale stages.
    pub scale_channels: (usize, usize, usize),
    /// Output embedding dimension D.
    pub out_dim: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
    pub backend: EmbeddingBackend,
}

impl GfmConfig {
    /// Full-size configuration: 100 neighbors, 64/64/128 channels, D = 256.
    pub fn full() -> Self {
        GfmConfig {
            graph_k: 100,
            scale_channels: (64, 64, 128),
            out_dim: 256,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            backend: EmbeddingBackend::Gfm,
        }
    }

    /// Desk-scale configuration used by tests and the synthetic benchmark.
    pub fn desk() -> Self {
        GfmConfig {
            graph_k: 8,
            scale_channels: (8, 8, 16),
            out_dim: 16,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            backend: EmbeddingBackend::Gfm,
        }
    }

    fn merge_in_channels(&self) -> usize {
        let (c1, c2, c3) = self.scale_channels;
        match self.backend {
            EmbeddingBackend::Gfm => c1 + c2 + c3,
            EmbeddingBackend::PointNetLike | EmbeddingBackend::DgcnnLike => c1,
        }
    }

    /// `(in, out)` channel widths of each backbone block, in order.
    fn block_dims(&self) -> Vec<(usize, usize)> {
        let (c1, c2, c3) = self.scale_channels;
        match self.backend {
            EmbeddingBackend::Gfm => {
                vec![(12, c1), (c1, c1), (c1, c2), (c2, c2), (c2, c3), (c3, c3)]
            }
            EmbeddingBackend::DgcnnLike => vec![(12, c1), (c1, c1)],
            EmbeddingBackend::PointNetLike => vec![(6, c1), (c1, c1)],
        }
    }

    fn has_edge_transform(&self) -> bool {
        !matches!(self.backend, EmbeddingBackend::PointNetLike)
    }

    pub fn validate(&self) -> Result<()> {
        let (c1, c2, c3) = self.scale_channels;
        if self.graph_k < 2 || self.out_dim < 8 || c1 == 0 || c2 == 0 || c3 == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding config out of range: graph_k {} (>= 2), out_dim {} (>= 8), channels {:?} (positive)",
                self.graph_k, self.out_dim, self.scale_channels
            )));
        }
        if self.bn_epsilon <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidConfig(
                "bn_epsilon must be positive and bn_momentum in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Channel-major dense tensor: `data[(c * n + i) * k + j]`.
#[derive(Debug, Clone)]
pub struct Tensor3<T> {
    pub ch: usize,
    pub n: usize,
    pub k: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(ch: usize, n: usize, k: usize) -> Self {
        Tensor3 {
            ch,
            n,
            k,
            data: vec![T::zero(); ch * n * k],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize) -> T {
        self.data[(c * self.n + i) * self.k + j]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, i: usize, j: usize) -> &mut T {
        &mut self.data[(c * self.n + i) * self.k + j]
    }

    fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.n * self.k..(c + 1) * self.n * self.k]
    }

    fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let stride = self.n * self.k;
        &mut self.data[c * stride..(c + 1) * stride]
    }
}

/// 1x1 convolution over the (correspondence, neighbor) grid: a per-position
/// linear map on channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1x1<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Row-major `out_ch x in_ch`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv1x1<T> {
    fn init<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_ch as f64).sqrt();
        let weight = (0..in_ch * out_ch)
            .map(|_| real::<T>((2.0 * rng.random::<f64>() - 1.0) * bound))
            .collect();
        Conv1x1 {
            in_ch,
            out_ch,
            weight,
            bias: vec![T::zero(); out_ch],
        }
    }

    fn forward(&self, x: &Tensor3<T>) -> Tensor3<T> {
        debug_assert_eq!(x.ch, self.in_ch);
        let mut y = Tensor3::zeros(self.out_ch, x.n, x.k);
        for co in 0..self.out_ch {
            let b = self.bias[co];
            let yc = y.channel_mut(co);
            yc.fill(b);
            for ci in 0..self.in_ch {
                let w = self.weight[co * self.in_ch + ci];
                for (yv, &xv) in yc.iter_mut().zip(x.channel(ci)) {
                    *yv += w * xv;
                }
            }
        }
        y
    }

    /// Returns `(dW/db, dx)` for upstream gradient `dy` and traced input `x`.
    fn backward(&self, x: &Tensor3<T>, dy: &Tensor3<T>) -> (ConvGrad<T>, Tensor3<T>) {
        let mut dw = vec![T::zero(); self.in_ch * self.out_ch];
        let mut db = vec![T::zero(); self.out_ch];
        let mut dx = Tensor3::zeros(self.in_ch, x.n, x.k);
        for co in 0..self.out_ch {
            let dyc = dy.channel(co);
            db[co] = dyc.iter().copied().sum();
            for ci in 0..self.in_ch {
                let mut acc = T::zero();
                for (&g, &xv) in dyc.iter().zip(x.channel(ci)) {
                    acc += g * xv;
                }
                dw[co * self.in_ch + ci] = acc;
                let w = self.weight[co * self.in_ch + ci];
                for (dxv, &g) in dx.channel_mut(ci).iter_mut().zip(dyc) {
                    *dxv += w * g;
                }
            }
        }
        (
            ConvGrad {
                weight: dw,
                bias: db,
            },
            dx,
        )
    }
}

/// Per-channel batch normalization over all (correspondence, neighbor)
/// positions. Train mode normalizes with biased batch statistics and folds
/// them into the running estimates; eval mode uses the running estimates
/// only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    fn init(ch: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); ch],
            beta: vec![T::zero(); ch],
            running_mean: vec![T::zero(); ch],
            running_var: vec![T::one(); ch],
        }
    }
}

/// conv -> batchnorm -> ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvBlock<T> {
    pub conv: Conv1x1<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Real> ConvBlock<T> {
    fn init<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        ConvBlock {
            conv: Conv1x1::init(in_ch, out_ch, rng),
            bn: BatchNorm::init(out_ch),
        }
    }
}

/// All learnable parameters of the embedding network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GfmParams<T> {
    /// Linear transform of the raw edge features (absent for the point
    /// backend, which consumes coordinates directly).
    pub edge: Option<Conv1x1<T>>,
    pub blocks: Vec<ConvBlock<T>>,
    pub merge: ConvBlock<T>,
}

impl<T: Real> GfmParams<T> {
    /// Deterministic seeded initialization matching `config`.
    pub fn init(config: &GfmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::mix(seed, 0x6f6d));
        let edge = if config.has_edge_transform() {
            Some(Conv1x1::init(12, 12, &mut rng))
        } else {
            None
        };
        let blocks = config
            .block_dims()
            .into_iter()
            .map(|(i, o)| ConvBlock::init(i, o, &mut rng))
            .collect();
        let merge = ConvBlock::init(config.merge_in_channels(), config.out_dim, &mut rng);
        GfmParams {
            edge,
            blocks,
            merge,
        }
    }

    /// Checks that every tensor matches the shapes implied by `config`.
    pub fn validate(&self, config: &GfmConfig) -> Result<()> {
        config.validate()?;
        let check = |name: &str, conv: &Conv1x1<T>, want_in: usize, want_out: usize| {
            if conv.in_ch != want_in
                || conv.out_ch != want_out
                || conv.weight.len() != want_in * want_out
                || conv.bias.len() != want_out
            {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {want_in}->{want_out}, found {}->{}",
                    conv.in_ch, conv.out_ch
                )));
            }
            Ok(())
        };
        match (&self.edge, config.has_edge_transform()) {
            (Some(e), true) => check("edge", e, 12, 12)?,
            (None, false) => {}
            _ => {
                return Err(Error::ShapeMismatch(
                    "edge transform presence does not match backend".into(),
                ))
            }
        }
        let dims = config.block_dims();
        if dims.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} backbone blocks, found {}",
                dims.len(),
                self.blocks.len()
            )));
        }
        for (idx, ((i, o), block)) in dims.iter().zip(&self.blocks).enumerate() {
            check(&format!("block{idx}"), &block.conv, *i, *o)?;
            if block.bn.gamma.len() != *o {
                return Err(Error::ShapeMismatch(format!("block{idx} bn width")));
            }
        }
        check(
            "merge",
            &self.merge.conv,
            config.merge_in_channels(),
            config.out_dim,
        )?;
        let finite = self
            .edge
            .iter()
            .flat_map(|c| c.weight.iter().chain(&c.bias))
            .chain(self.blocks.iter().flat_map(|b| {
                b.conv
                    .weight
                    .iter()
                    .chain(&b.conv.bias)
                    .chain(&b.bn.gamma)
                    .chain(&b.bn.beta)
            }))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Applies a gradient step `theta -= lr * grad`.
    pub fn apply_gradients(&mut self, grads: &GfmGrads<T>, lr: T) {
        fn step<T: Real>(p: &mut [T], g: &[T], lr: T) {
            for (pv, &gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
        if let (Some(e), Some(ge)) = (&mut self.edge, &grads.edge) {
            step(&mut e.weight, &ge.weight, lr);
            step(&mut e.bias, &ge.bias, lr);
        }
        for (b, gb) in self.blocks.iter_mut().zip(&grads.blocks) {
            step(&mut b.conv.weight, &gb.conv.weight, lr);
            step(&mut b.conv.bias, &gb.conv.bias, lr);
            step(&mut b.bn.gamma, &gb.gamma, lr);
            step(&mut b.bn.beta, &gb.beta, lr);
        }
        step(&mut self.merge.conv.weight, &grads.merge.conv.weight, lr);
        step(&mut self.merge.conv.bias, &grads.merge.conv.bias, lr);
        step(&mut self.merge.bn.gamma, &grads.merge.gamma, lr);
        step(&mut self.merge.bn.beta, &grads.merge.beta, lr);
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BlockGrad<T> {
    pub conv: ConvGrad<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Parameter gradients, same layout as [`GfmParams`].
#[derive(Debug, Clone)]
pub struct GfmGrads<T> {
    pub edge: Option<ConvGrad<T>>,
    pub blocks: Vec<BlockGrad<T>>,
    pub merge: BlockGrad<T>,
}

impl<T: Real> GfmGrads<T> {
    pub fn zeros_like(params: &GfmParams<T>) -> Self {
        let zero_conv = |c: &Conv1x1<T>| ConvGrad {
            weight: vec![T::zero(); c.weight.len()],
            bias: vec![T::zero(); c.bias.len()],
        };
        let zero_block = |b: &ConvBlock<T>| BlockGrad {
            conv: zero_conv(&b.conv),
            gamma: vec![T::zero(); b.bn.gamma.len()],
            beta: vec![T::zero(); b.bn.beta.len()],
        };
        GfmGrads {
            edge: params.edge.as_ref().map(zero_conv),
            blocks: params.blocks.iter().map(zero_block).collect(),
            merge: zero_block(&params.merge),
        }
    }

    pub fn accumulate(&mut self, other: &GfmGrads<T>) {
        fn acc<T: Real>(a: &mut [T], b: &[T]) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        if let (Some(e), Some(o)) = (&mut self.edge, &other.edge) {
            acc(&mut e.weight, &o.weight);
            acc(&mut e.bias, &o.bias);
        }
        for (b, o) in self.blocks.iter_mut().zip(&other.blocks) {
            acc(&mut b.conv.weight, &o.conv.weight);
            acc(&mut b.conv.bias, &o.conv.bias);
            acc(&mut b.gamma, &o.gamma);
            acc(&mut b.beta, &o.beta);
        }
        acc(&mut self.merge.conv.weight, &other.merge.conv.weight);
        acc(&mut self.merge.conv.bias, &other.merge.conv.bias);
        acc(&mut self.merge.gamma, &other.merge.gamma);
        acc(&mut self.merge.beta, &other.merge.beta);
    }

    pub fn scale(&mut self, factor: T) {
        fn sc<T: Real>(a: &mut [T], f: T) {
            for x in a.iter_mut() {
                *x *= f;
            }
        }
        if let Some(e) = &mut self.edge {
            sc(&mut e.weight, factor);
            sc(&mut e.bias, factor);
        }
        for b in self.blocks.iter_mut() {
            sc(&mut b.conv.weight, factor);
            sc(&mut b.conv.bias, factor);
            sc(&mut b.gamma, factor);
            sc(&mut b.beta, factor);
        }
        sc(&mut self.merge.conv.weight, factor);
        sc(&mut self.merge.conv.bias, factor);
        sc(&mut self.merge.gamma, factor);
        sc(&mut self.merge.beta, factor);
    }
}

/// Raw k-NN edge features of the correspondence graph: channels 0..6 hold the
/// anchor `m_i`, channels 6..12 hold `m_j - m_i` for its j-th nearest
/// neighbor (ascending distance, ties to the lower index; self excluded).
pub fn edge_features<T: Real>(
    corrs: &CorrespondenceSet<T>,
    k: usize,
) -> Result<(Tensor3<T>, Vec<usize>)> {
    let n = corrs.len();
    if n <= k {
        return Err(Error::TooFewCorrespondences { have: n, need: k });
    }
    let coords: Vec<[T; 6]> = corrs.pairs.iter().map(|c| c.as_6d()).collect();
    let mut neighbors = vec![0usize; n * k];
    let mut scratch: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for (j, cj) in coords.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut d = T::zero();
            for a in 0..6 {
                let diff = cj[a] - coords[i][a];
                d += diff * diff;
            }
            scratch.push((d, j));
        }
        let cmp =
            |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch.truncate(k);
        }
        scratch.sort_by(cmp);
        for (slot, &(_, j)) in scratch.iter().enumerate() {
            neighbors[i * k + slot] = j;
        }
    }

    let mut out = Tensor3::zeros(12, n, k);
    for i in 0..n {
        for j in 0..k {
            let nb = neighbors[i * k + j];
            for c in 0..6 {
                *out.at_mut(c, i, j) = coords[i][c];
                *out.at_mut(c + 6, i, j) = coords[nb][c] - coords[i][c];
            }
        }
    }
    Ok((out, neighbors))
}

fn point_tensor<T: Real>(corrs: &CorrespondenceSet<T>) -> Tensor3<T> {
    let n = corrs.len();
    let mut out = Tensor3::zeros(6, n, 1);
    for (i, c) in corrs.pairs.iter().enumerate() {
        let m = c.as_6d();
        for ch in 0..6 {
            *out.at_mut(ch, i, 0) = m[ch];
        }
    }
    out
}

/// Keep columns 0, 2, 4, ... of the neighbor axis.
fn downsample2<T: Real>(x: &Tensor3<T>) -> Tensor3<T> {
    let k_out = x.k.div_ceil(2);
    let mut y = Tensor3::zeros(x.ch, x.n, k_out);
    for c in 0..x.ch {
        for i in 0..x.n {
            for j in 0..k_out {
                *y.at_mut(c, i, j) = x.at(c, i, 2 * j);
            }
        }
    }
    y
}

fn downsample2_backward<T: Real>(dy: &Tensor3<T>, k_in: usize) -> Tensor3<T> {
    let mut dx = Tensor3::zeros(dy.ch, dy.n, k_in);
    for c in 0..dy.ch {
        for i in 0..dy.n {
            for j in 0..dy.k {
                *dx.at_mut(c, i, 2 * j) = dy.at(c, i, j);
            }
        }
    }
    dx
}

/// Nearest-neighbor repetition back to `k_out` columns (column j reads
/// column j / factor of the coarse map).
fn upsample_repeat<T: Real>(x: &Tensor3<T>, factor: usize, k_out: usize) -> Tensor3<T> {
    let mut y = Tensor3::zeros(x.ch, x.n, k_out);
    for c in 0..x.ch {
        for i in 0..x.n {
            for j in 0..k_out {
                *y.at_mut(c, i, j) = x.at(c, i, (j / factor).min(x.k - 1));
            }
        }
    }
    y
}

fn upsample_repeat_backward<T: Real>(dy: &Tensor3<T>, factor: usize, k_in: usize) -> Tensor3<T> {
    let mut dx = Tensor3::zeros(dy.ch, dy.n, k_in);
    for c in 0..dy.ch {
        for i in 0..dy.n {
            for j in 0..dy.k {
                *dx.at_mut(c, i, (j / factor).min(k_in - 1)) += dy.at(c, i, j);
            }
        }
    }
    dx
}

fn concat_channels<T: Real>(parts: &[&Tensor3<T>]) -> Tensor3<T> {
    let (n, k) = (parts[0].n, parts[0].k);
    let ch: usize = parts.iter().map(|p| p.ch).sum();
    let mut y = Tensor3::zeros(ch, n, k);
    let mut offset = 0;
    for p in parts {
        debug_assert!(p.n == n && p.k == k);
        for c in 0..p.ch {
            y.channel_mut(offset + c).copy_from_slice(p.channel(c));
        }
        offset += p.ch;
    }
    y
}

fn split_channels<T: Real>(x: &Tensor3<T>, widths: &[usize]) -> Vec<Tensor3<T>> {
    let mut out = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        let mut part = Tensor3::zeros(w, x.n, x.k);
        for c in 0..w {
            part.channel_mut(c).copy_from_slice(x.channel(offset + c));
        }
        offset += w;
        out.push(part);
    }
    out
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Tensor3<T>,
    xhat: Tensor3<T>,
    var: Vec<T>,
    post_bn: Tensor3<T>,
}

/// Activations cached by a train-mode forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct GfmTrace<T> {
    fingerprint: u64,
    n: usize,
    edge_input: Option<Tensor3<T>>,
    block_caches: Vec<BlockCache<T>>,
    merge_cache: BlockCache<T>,
    /// Argmax neighbor column per (channel, correspondence).
    pool_argmax: Vec<usize>,
    /// Spatial widths of the three scale stages (Gfm backend only).
    k_sizes: (usize, usize, usize),
}

fn fingerprint<T: Real>(corrs: &CorrespondenceSet<T>, config: &GfmConfig) -> u64 {
    let coord_bytes = corrs
        .pairs
        .iter()
        .flat_map(|c| c.as_6d())
        .flat_map(|v| to_f64(v).to_bits().to_le_bytes());
    crate::seeds::fnv1a(
        coord_bytes.chain(
            [
                corrs.len() as u64,
                config.graph_k as u64,
                config.out_dim as u64,
            ]
            .iter()
            .flat_map(|v| v.to_le_bytes()),
        ),
    )
}

fn block_forward<T: Real>(
    block: &mut ConvBlock<T>,
    x: &Tensor3<T>,
    epsilon: T,
    train: bool,
    momentum: T,
) -> (Tensor3<T>, Option<BlockCache<T>>) {
    let z = block.conv.forward(x);
    let m_count = z.n * z.k;
    let m = real::<T>(m_count as f64);
    let mut post_bn = Tensor3::zeros(z.ch, z.n, z.k);
    if train {
        let mut xhat = Tensor3::zeros(z.ch, z.n, z.k);
        let mut vars = vec![T::zero(); z.ch];
        for c in 0..z.ch {
            let zc = z.channel(c);
            let mean: T = zc.iter().copied().sum::<T>() / m;
            let var: T = zc.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
            let inv = T::one() / (var + epsilon).sqrt();
            let (g, b) = (block.bn.gamma[c], block.bn.beta[c]);
            for (idx, &v) in zc.iter().enumerate() {
                let xh = (v - mean) * inv;
                xhat.channel_mut(c)[idx] = xh;
                post_bn.channel_mut(c)[idx] = g * xh + b;
            }
            vars[c] = var;
            let keep = T::one() - momentum;
            block.bn.running_mean[c] = keep * block.bn.running_mean[c] + momentum * mean;
            block.bn.running_var[c] = keep * block.bn.running_var[c] + momentum * var;
        }
        let mut y = post_bn.clone();
        for v in y.data.iter_mut() {
            *v = v.max(T::zero());
        }
        (
            y,
            Some(BlockCache {
                input: x.clone(),
                xhat,
                var: vars,
                post_bn,
            }),
        )
    } else {
        for c in 0..z.ch {
            let inv = T::one() / (block.bn.running_var[c] + epsilon).sqrt();
            let mean = block.bn.running_mean[c];
            let (g, b) = (block.bn.gamma[c], block.bn.beta[c]);
            for (idx, &v) in z.channel(c).iter().enumerate() {
                post_bn.channel_mut(c)[idx] = g * (v - mean) * inv + b;
            }
        }
        for v in post_bn.data.iter_mut() {
            *v = v.max(T::zero());
        }
        (post_bn, None)
    }
}

fn block_backward<T: Real>(
    block: &ConvBlock<T>,
    cache: &BlockCache<T>,
    dy: &Tensor3<T>,
    epsilon: T,
) -> (BlockGrad<T>, Tensor3<T>) {
    let m_count = dy.n * dy.k;
    let m = real::<T>(m_count as f64);
    // ReLU gate on the traced pre-activation.
    let mut dz = dy.clone();
    for (g, &pre) in dz.data.iter_mut().zip(&cache.post_bn.data) {
        if pre <= T::zero() {
            *g = T::zero();
        }
    }
    // Batchnorm backward with batch statistics.
    let ch = dz.ch;
    let mut dgamma = vec![T::zero(); ch];
    let mut dbeta = vec![T::zero(); ch];
    let mut dconv_out = Tensor3::zeros(ch, dz.n, dz.k);
    for c in 0..ch {
        let dzc = dz.channel(c);
        let xhc = cache.xhat.channel(c);
        let sum_dz: T = dzc.iter().copied().sum();
        let sum_dz_xhat: T = dzc.iter().zip(xhc).map(|(&a, &b)| a * b).sum();
        dgamma[c] = sum_dz_xhat;
        dbeta[c] = sum_dz;
        let inv = T::one() / (cache.var[c] + epsilon).sqrt();
        let coef = block.bn.gamma[c] * inv / m;
        let out = dconv_out.channel_mut(c);
        for idx in 0..m_count {
            out[idx] = coef * (m * dzc[idx] - sum_dz - xhc[idx] * sum_dz_xhat);
        }
    }
    let (conv_grad, dx) = block.conv.backward(&cache.input, &dconv_out);
    (
        BlockGrad {
            conv: conv_grad,
            gamma: dgamma,
            beta: dbeta,
        },
        dx,
    )
}

fn pool_max<T: Real>(x: &Tensor3<T>) -> (FeatureMatrix<T>, Vec<usize>) {
    let mut out = FeatureMatrix::zeros(x.n, x.ch);
    let mut argmax = vec![0usize; x.ch * x.n];
    for c in 0..x.ch {
        for i in 0..x.n {
            let mut best = x.at(c, i, 0);
            let mut best_j = 0usize;
            for j in 1..x.k {
                let v = x.at(c, i, j);
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            out.row_mut(i)[c] = best;
            argmax[c * x.n + i] = best_j;
        }
    }
    (out, argmax)
}

/// Eval-mode forward pass: deterministic, uses BN running statistics, does
/// not mutate the parameters.
pub fn forward_eval<T: Real>(
    params: &GfmParams<T>,
    config: &GfmConfig,
    corrs: &CorrespondenceSet<T>,
) -> Result<FeatureMatrix<T>> {
    let mut scratch = params.clone();
    let (features, _) = forward_impl(&mut scratch, config, corrs, false)?;
    Ok(features)
}

/// Train-mode forward pass: normalizes with batch statistics, updates the
/// running estimates in place and returns the trace required by
/// [`backward`].
pub fn forward_train<T: Real>(
    params: &mut GfmParams<T>,
    config: &GfmConfig,
    corrs: &CorrespondenceSet<T>,
) -> Result<(FeatureMatrix<T>, GfmTrace<T>)> {
    let (features, trace) = forward_impl(params, config, corrs, true)?;
    Ok((features, trace.expect("train mode always produces a trace")))
}

fn forward_impl<T: Real>(
    params: &mut GfmParams<T>,
    config: &GfmConfig,
    corrs: &CorrespondenceSet<T>,
    train: bool,
) -> Result<(FeatureMatrix<T>, Option<GfmTrace<T>>)> {
    params.validate(config)?;
    let epsilon = real::<T>(config.bn_epsilon);
    let momentum = real::<T>(config.bn_momentum);
    let n = corrs.len();

    let x0 = match config.backend {
        EmbeddingBackend::PointNetLike => point_tensor(corrs),
        _ => edge_features(corrs, config.graph_k)?.0,
    };
    let edge_input = if params.edge.is_some() {
        Some(x0.clone())
    } else {
        None
    };
    let x = match &params.edge {
        Some(e) => e.forward(&x0),
        None => x0,
    };

    let mut caches: Vec<BlockCache<T>> = Vec::new();
    let run_block = |block: &mut ConvBlock<T>,
                     input: &Tensor3<T>,
                     caches: &mut Vec<BlockCache<T>>|
     -> Tensor3<T> {
        let (y, cache) = block_forward(block, input, epsilon, train, momentum);
        if let Some(c) = cache {
            caches.push(c);
        }
        y
    };

    let (merged, k_sizes) = match config.backend {
        EmbeddingBackend::Gfm => {
            let k1 = x.k;
            let y = run_block(&mut params.blocks[0], &x, &mut caches);
            let f1 = run_block(&mut params.blocks[1], &y, &mut caches);

            let x2 = downsample2(&f1);
            let k2 = x2.k;
            let y = run_block(&mut params.blocks[2], &x2, &mut caches);
            let f2 = run_block(&mut params.blocks[3], &y, &mut caches);

            let x3 = downsample2(&f2);
            let k3 = x3.k;
            let y = run_block(&mut params.blocks[4], &x3, &mut caches);
            let f3 = run_block(&mut params.blocks[5], &y, &mut caches);

            let up2 = upsample_repeat(&f2, 2, k1);
            let up3 = upsample_repeat(&f3, 4, k1);
            (concat_channels(&[&f1, &up2, &up3]), (k1, k2, k3))
        }
        EmbeddingBackend::DgcnnLike | EmbeddingBackend::PointNetLike => {
            let k1 = x.k;
            let y = run_block(&mut params.blocks[0], &x, &mut caches);
            let f1 = run_block(&mut params.blocks[1], &y, &mut caches);
            (f1, (k1, 0, 0))
        }
    };

    let (pooled_in, merge_cache) =
        block_forward(&mut params.merge, &merged, epsilon, train, momentum);
    let (features, argmax) = pool_max(&pooled_in);

    if !features.is_finite() {
        return Err(Error::ShapeMismatch("non-finite embedding output".into()));
    }

    let trace = if train {
        Some(GfmTrace {
            fingerprint: fingerprint(corrs, config),
            n,
            edge_input,
            block_caches: caches,
            merge_cache: merge_cache.expect("train cache"),
            pool_argmax: argmax,
            k_sizes,
        })
    } else {
        None
    };
    Ok((features, trace))
}

/// Analytic backward pass from `grad_out` (gradient of a scalar loss with
/// respect to the N x D output) to gradients of every parameter. Max-pool
/// routes to the argmax column recorded in the trace; ties were resolved to
/// the lowest index during the forward pass.
pub fn backward<T: Real>(
    params: &GfmParams<T>,
    config: &GfmConfig,
    trace: &GfmTrace<T>,
    corrs: &CorrespondenceSet<T>,
    grad_out: &FeatureMatrix<T>,
) -> Result<GfmGrads<T>> {
    if trace.fingerprint != fingerprint(corrs, config) {
        return Err(Error::StaleTrace);
    }
    if grad_out.rows() != trace.n || grad_out.dim() != config.out_dim {
        return Err(Error::ShapeMismatch(format!(
            "grad shape {}x{} does not match output {}x{}",
            grad_out.rows(),
            grad_out.dim(),
            trace.n,
            config.out_dim
        )));
    }
    let epsilon = real::<T>(config.bn_epsilon);
    let (k1, k2, k3) = trace.k_sizes;
    let n = trace.n;
    let d = config.out_dim;

    // Unpool into the merge block's output grid.
    let mut d_merge_out = Tensor3::zeros(d, n, trace.merge_cache.post_bn.k);
    for i in 0..n {
        for c in 0..d {
            let j = trace.pool_argmax[c * n + i];
            *d_merge_out.at_mut(c, i, j) += grad_out.row(i)[c];
        }
    }

    let (merge_grad, d_merged) =
        block_backward(&params.merge, &trace.merge_cache, &d_merge_out, epsilon);

    let mut block_grads: Vec<Option<BlockGrad<T>>> = vec![None; params.blocks.len()];
    let backward_block =
        |idx: usize, dy: &Tensor3<T>, grads: &mut Vec<Option<BlockGrad<T>>>| -> Tensor3<T> {
            let (grad, dx) =
                block_backward(&params.blocks[idx], &trace.block_caches[idx], dy, epsilon);
            grads[idx] = Some(grad);
            dx
        };

    let d_edge_out = match config.backend {
        EmbeddingBackend::Gfm => {
            let (c1, c2, c3) = config.scale_channels;
            let parts = split_channels(&d_merged, &[c1, c2, c3]);
            let d_f2_up = upsample_repeat_backward(&parts[1], 2, k2);
            let d_f3 = upsample_repeat_backward(&parts[2], 4, k3);

            // Scale 3 back to its stride-2 input, folded into the scale 2 grad.
            let d_y = backward_block(5, &d_f3, &mut block_grads);
            let d_x3 = backward_block(4, &d_y, &mut block_grads);
            let mut d_f2 = d_f2_up;
            for (a, &b) in d_f2
                .data
                .iter_mut()
                .zip(&downsample2_backward(&d_x3, k2).data)
            {
                *a += b;
            }

            let d_y = backward_block(3, &d_f2, &mut block_grads);
            let d_x2 = backward_block(2, &d_y, &mut block_grads);
            let mut d_f1 = parts[0].clone();
            for (a, &b) in d_f1
                .data
                .iter_mut()
                .zip(&downsample2_backward(&d_x2, k1).data)
            {
                *a += b;
            }

            let d_y = backward_block(1, &d_f1, &mut block_grads);
            backward_block(0, &d_y, &mut block_grads)
        }
        EmbeddingBackend::DgcnnLike | EmbeddingBackend::PointNetLike => {
            let d_y = backward_block(1, &d_merged, &mut block_grads);
            backward_block(0, &d_y, &mut block_grads)
        }
    };

    let edge_grad = match (&params.edge, &trace.edge_input) {
        (Some(e), Some(x0)) => {
            let (g, _) = e.backward(x0, &d_edge_out);
            Some(g)
        }
        _ => None,
    };

    Ok(GfmGrads {
        edge: edge_grad,
        blocks: block_grads.into_iter().map(|g| g.unwrap()).collect(),
        merge: merge_grad,
    })
}
