//! Per-correspondence confidence estimation (a small MLP over embedding
//! rows) and one-shot top-N candidate sampling.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::{real, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, rowwise: `y = W x + b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        DenseLayer {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim)
                .map(|_| real::<T>((2.0 * rng.random::<f64>() - 1.0) * bound))
                .collect(),
            // Small nonzero biases keep dead-row preactivations off the exact
            // ReLU kink, where subgradients and finite differences disagree.
            bias: (0..out_dim)
                .map(|_| real::<T>((2.0 * rng.random::<f64>() - 1.0) * 0.1 * bound))
                .collect(),
        }
    }

    fn forward_row(&self, x: &[T], out: &mut [T]) {
        for (o, out_v) in out.iter_mut().enumerate() {
            let mut acc = self.bias[o];
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, &xv) in row.iter().zip(x) {
                acc += *w * xv;
            }
            *out_v = acc;
        }
    }
}

/// Three dense layers (ReLU after the first two, linear head) followed by a
/// logistic squashing at the public interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightMlpParams<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Real> WeightMlpParams<T> {
    /// `dims` chains input to output, e.g. `[256, 128, 64, 1]`.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2 && *dims.last().unwrap() == 1);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::mix(seed, 0x3317));
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], &mut rng))
            .collect();
        WeightMlpParams { layers }
    }

    /// Default head for embedding dimension `d`: `d -> 128 -> 64 -> 1`,
    /// tapered down proportionally for desk-scale dimensions.
    pub fn for_feature_dim(d: usize, seed: u64) -> Self {
        let h1 = (d / 2).max(4);
        let h2 = (d / 4).max(2);
        Self::init(&[d, h1, h2, 1], seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.last().unwrap().out_dim != 1 {
            return Err(Error::ShapeMismatch("mlp must end in one output".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch("mlp layer dims do not chain".into()));
            }
        }
        let finite = self
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::ShapeMismatch("non-finite mlp parameter".into()));
        }
        Ok(())
    }

    pub fn apply_gradients(&mut self, grads: &MlpGrads<T>, lr: T) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &gv) in l.weight.iter_mut().zip(&g.weight) {
                *p -= lr * gv;
            }
            for (p, &gv) in l.bias.iter_mut().zip(&g.bias) {
                *p -= lr * gv;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> MlpGrads<T> {
    pub fn zeros_like(params: &WeightMlpParams<T>) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, f: T) {
        for l in self.layers.iter_mut() {
            for x in l.weight.iter_mut() {
                *x *= f;
            }
            for x in l.bias.iter_mut() {
                *x *= f;
            }
        }
    }
}

/// Per-layer activations cached for backprop: `inputs[l]` is the input of
/// layer `l`, `preacts[l]` its pre-ReLU output.
#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    inputs: Vec<FeatureMatrix<T>>,
    preacts: Vec<FeatureMatrix<T>>,
}

/// Rowwise logits (pre-sigmoid scores) plus the trace for backprop.
pub fn forward_logits<T: Real>(
    params: &WeightMlpParams<T>,
    features: &FeatureMatrix<T>,
) -> Result<(Vec<T>, MlpTrace<T>)> {
    params.validate()?;
    if features.dim() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "feature dim {} does not match mlp input {}",
            features.dim(),
            params.input_dim()
        )));
    }
    let n = features.rows();
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut preacts = Vec::with_capacity(params.layers.len());
    let mut current = features.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        let mut pre = FeatureMatrix::zeros(n, layer.out_dim);
        for i in 0..n {
            layer.forward_row(current.row(i), pre.row_mut(i));
        }
        inputs.push(current);
        preacts.push(pre.clone());
        let last = li + 1 == params.layers.len();
        if !last {
            for i in 0..n {
                for v in pre.row_mut(i) {
                    *v = v.max(T::zero());
                }
            }
        }
        current = pre;
    }
    let logits = (0..n).map(|i| current.row(i)[0]).collect();
    Ok((logits, MlpTrace { inputs, preacts }))
}

/// Per-correspondence confidence in `(0, 1)`: logistic of the MLP logit,
/// clamped away from the exact endpoints.
pub fn confidence<T: Real>(
    params: &WeightMlpParams<T>,
    features: &FeatureMatrix<T>,
) -> Result<Vec<T>> {
    let (logits, _) = forward_logits(params, features)?;
    let lo = real::<T>(1e-12);
    let hi = T::one() - lo;
    Ok(logits
        .into_iter()
        .map(|z| (T::one() / (T::one() + (-z).exp())).max(lo).min(hi))
        .collect())
}

/// Backward pass from per-row logit gradients; returns parameter gradients
/// and the gradient with respect to the input features (for upstream
/// training of the embedding).
pub fn backward<T: Real>(
    params: &WeightMlpParams<T>,
    trace: &MlpTrace<T>,
    dlogits: &[T],
) -> Result<(MlpGrads<T>, FeatureMatrix<T>)> {
    let n = trace.inputs[0].rows();
    if dlogits.len() != n {
        return Err(Error::LengthMismatch {
            left: dlogits.len(),
            right: n,
        });
    }
    let mut grads = MlpGrads::zeros_like(params);
    // Gradient w.r.t. the current layer's output, one row per item.
    let mut dy = FeatureMatrix::zeros(n, 1);
    for i in 0..n {
        dy.row_mut(i)[0] = dlogits[i];
    }
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input = &trace.inputs[li];
        let pre = &trace.preacts[li];
        let last = li + 1 == params.layers.len();
        let mut dx = FeatureMatrix::zeros(n, layer.in_dim);
        let g = &mut grads.layers[li];
        for i in 0..n {
            let dyr = dy.row(i);
            let xr = input.row(i);
            for o in 0..layer.out_dim {
                // ReLU gate on every layer except the linear head.
                let mut go = dyr[o];
                if !last && pre.row(i)[o] <= T::zero() {
                    go = T::zero();
                }
                if go == T::zero() {
                    continue;
                }
                g.bias[o] += go;
                let wrow = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut g.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                let dxr = dx.row_mut(i);
                for c in 0..layer.in_dim {
                    grow[c] += go * xr[c];
                    dxr[c] += go * wrow[c];
                }
            }
        }
        dy = dx;
    }
    Ok((grads, dy))
}

/// The selected candidate inliers: unique indices ordered by descending
/// confidence (ties toward the lower index).
#[derive(Debug, Clone)]
pub struct CandidateSet<T> {
    pub indices: Vec<usize>,
    pub confidences: Vec<T>,
}

/// One-shot top-`n_s` selection by confidence rank; requesting more than
/// available returns everything.
pub fn sample_candidates<T: Real>(confidences: &[T], n_s: usize) -> CandidateSet<T> {
    assert!(n_s >= 1, "candidate count must be at least 1");
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| {
        confidences[b]
            .partial_cmp(&confidences[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(n_s);
    CandidateSet {
        confidences: order.iter().map(|&i| confidences[i]).collect(),
        indices: order,
    }
}
