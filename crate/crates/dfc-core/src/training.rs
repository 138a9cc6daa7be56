//! Losses, label generation, and a plain mini-batch gradient-descent
//! training loop for the embedding network and confidence MLP on synthetic
//! correspondence sets.
//!
//! Only the classification loss is backpropagated; the transformation loss
//! is evaluated on a held-out split and reported in the per-epoch totals.

use crate::bench;
use crate::checkpoint::Checkpoint;
use crate::cloud::{make_synthetic_pair, SyntheticConfig};
use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geometry::RigidTransform;
use crate::gfm::{self, GfmConfig, GfmGrads, GfmParams};
use crate::weighting::{self, MlpGrads, WeightMlpParams};
use crate::{real, to_f64, Real};
use serde::{Deserialize, Serialize};

/// Mean binary cross entropy of probabilities against 0/1 labels, with the
/// probabilities clamped to `[eps, 1 - eps]` (eps = 1e-7), plus the exact
/// gradient with respect to each (clamped) probability.
pub fn classification_loss<T: Real>(confidences: &[T], labels: &[u8]) -> Result<(T, Vec<T>)> {
    if confidences.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: confidences.len(),
            right: labels.len(),
        });
    }
    let eps = real::<T>(1e-7);
    let n = real::<T>(confidences.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(confidences.len());
    for (&c, &l) in confidences.iter().zip(labels) {
        let c = c.max(eps).min(T::one() - eps);
        let (term, g) = if l == 1 {
            (-c.ln(), -T::one() / c)
        } else {
            (-(T::one() - c).ln(), T::one() / (T::one() - c))
        };
        loss += term;
        grad.push(g / n);
    }
    Ok((loss / n, grad))
}

/// Numerically stable BCE straight from logits: `softplus(z) - l*z` per row,
/// with gradient `(sigmoid(z) - l) / n`.
pub fn bce_with_logits<T: Real>(logits: &[T], labels: &[u8]) -> Result<(T, Vec<T>)> {
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: labels.len(),
        });
    }
    let n = real::<T>(logits.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &l) in logits.iter().zip(labels) {
        let lf = real::<T>(l as f64);
        // softplus(z) = max(z, 0) + ln(1 + exp(-|z|))
        let softplus = z.max(T::zero()) + (T::one() + (-z.abs()).exp()).ln();
        loss += softplus - lf * z;
        let sigmoid = T::one() / (T::one() + (-z).exp());
        grad.push((sigmoid - lf) / n);
    }
    Ok((loss / n, grad))
}

/// Pose disagreement `|R_est^T R_gt - I|_F^2 + |t_est - t_gt|^2`
/// (evaluation-only; not differentiated).
pub fn transformation_loss<T: Real>(est: &RigidTransform<T>, gt: &RigidTransform<T>) -> T {
    let r = est.rotation.transpose().mul(&gt.rotation);
    let mut frob2 = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            let d = r.m[i][j] - if i == j { T::one() } else { T::zero() };
            frob2 += d * d;
        }
    }
    frob2 + (est.translation - gt.translation).norm_squared()
}

/// Ground-truth labels: 1 iff the residual under `gt` is strictly below
/// `tau`.
pub fn generate_labels<T: Real>(
    corrs: &CorrespondenceSet<T>,
    gt: &RigidTransform<T>,
    tau: T,
) -> Vec<u8> {
    corrs
        .pairs
        .iter()
        .map(|c| u8::from(gt.apply(&c.src).distance(&c.dst) < tau))
        .collect()
}

/// Per-epoch loss summary; `total = l_c + lambda * l_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub l_c: f64,
    pub l_t: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Loss mixing weight applied to the reported transformation loss.
    pub lambda: f64,
    pub gfm: GfmConfig,
    /// Correspondences per synthetic pair.
    pub pair_points: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub outlier_ratio: f64,
    pub noise_sigma: f64,
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 0.2,
            seed: 7,
            lambda: 1e-2,
            gfm: GfmConfig {
                out_dim: 32,
                ..GfmConfig::desk()
            },
            pair_points: 256,
            train_pairs: 500,
            val_pairs: 50,
            // High-outlier regime: the embedding must separate a thin inlier
            // population, which is where confidence weighting earns its keep.
            outlier_ratio: 0.93,
            noise_sigma: 0.01,
            tau: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub trace: Vec<LossReport>,
    /// Held-out classification loss before any update.
    pub initial_val_lc: f64,
    /// Held-out classification loss per epoch.
    pub val_lc: Vec<f64>,
}

impl TrainOutput {
    /// Training trace as CSV (`epoch,l_c,l_t,total`).
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,l_c,l_t,total\n");
        for row in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.epoch, row.l_c, row.l_t, row.total
            ));
        }
        out
    }
}

fn synthetic_training_pairs(
    cfg: &TrainConfig,
    count: usize,
    stream: u64,
) -> Vec<(CorrespondenceSet<f64>, RigidTransform<f64>)> {
    let synth = SyntheticConfig {
        n_points: cfg.pair_points,
        outlier_ratio: cfg.outlier_ratio,
        noise_sigma: cfg.noise_sigma,
        tau: cfg.tau,
        translation_range: 1.0,
    };
    (0..count)
        .map(|i| {
            let mut rng = rand::SeedableRng::seed_from_u64(crate::seeds::mix(
                cfg.seed,
                stream.wrapping_add(i as u64),
            ));
            let (pair, mut corrs) =
                make_synthetic_pair::<f64, rand_chacha::ChaCha8Rng>(&synth, &mut rng);
            corrs.labels = Some(pair.gt_labels.clone());
            (corrs, pair.gt)
        })
        .collect()
}

fn val_classification_loss(
    gfm_params: &GfmParams<f64>,
    mlp: &WeightMlpParams<f64>,
    config: &GfmConfig,
    val: &[(CorrespondenceSet<f64>, RigidTransform<f64>)],
) -> Result<f64> {
    let mut acc = 0.0;
    for (corrs, _) in val {
        let feats = gfm::forward_eval(gfm_params, config, corrs)?;
        let (logits, _) = weighting::forward_logits(mlp, &feats)?;
        let (loss, _) = bce_with_logits(&logits, corrs.labels.as_ref().unwrap())?;
        acc += to_f64(loss);
    }
    Ok(acc / val.len() as f64)
}

fn val_transformation_loss(
    gfm_params: &GfmParams<f64>,
    mlp: &WeightMlpParams<f64>,
    cfg: &TrainConfig,
    val: &[(CorrespondenceSet<f64>, RigidTransform<f64>)],
) -> f64 {
    // Evaluation-only: run the matching pipeline with the current model on a
    // slice of the validation pairs and report the mean pose disagreement.
    let reg = bench::RegistrationConfig {
        tau: cfg.tau,
        n_s: 32,
        subset_k: 16.min(cfg.pair_points / 4).max(4),
        ..bench::RegistrationConfig::synthetic()
    };
    let mut acc = 0.0;
    let mut n = 0usize;
    for (corrs, gt) in val.iter().take(10) {
        let feats = match gfm::forward_eval(gfm_params, &cfg.gfm, corrs) {
            Ok(f) => f,
            Err(_) => continue,
        };
        if let Ok(result) = bench::register_correspondences(corrs, &feats, mlp, &reg, None) {
            acc += to_f64(transformation_loss(&result.transform, gt));
            n += 1;
        }
    }
    if n > 0 {
        acc / n as f64
    } else {
        f64::NAN
    }
}

/// Mini-batch gradient descent on the classification loss. Deterministic for
/// a fixed config; divergence (non-finite loss) aborts with an error.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutput> {
    if cfg.batch_size == 0 || cfg.pair_points <= cfg.gfm.graph_k {
        return Err(Error::InvalidConfig(
            "batch size must be positive and pair_points must exceed graph_k".into(),
        ));
    }
    let train_set = synthetic_training_pairs(cfg, cfg.train_pairs, 0x1000_0000);
    let val_set = synthetic_training_pairs(cfg, cfg.val_pairs, 0x2000_0000);

    let mut gfm_params = GfmParams::<f64>::init(&cfg.gfm, cfg.seed);
    let mut mlp = WeightMlpParams::<f64>::for_feature_dim(cfg.gfm.out_dim, cfg.seed ^ 0x55);
    let lr = cfg.learning_rate;

    let initial_val_lc = val_classification_loss(&gfm_params, &mlp, &cfg.gfm, &val_set)?;
    let mut val_lc = Vec::with_capacity(cfg.epochs);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut epoch_lc = 0.0;
        let mut batches = 0usize;
        for batch in train_set.chunks(cfg.batch_size) {
            let mut gfm_grads = GfmGrads::zeros_like(&gfm_params);
            let mut mlp_grads = MlpGrads::zeros_like(&mlp);
            let mut batch_loss = 0.0;
            for (corrs, _) in batch {
                let labels = corrs.labels.as_ref().expect("training labels");
                let (feats, gfm_trace) = gfm::forward_train(&mut gfm_params, &cfg.gfm, corrs)?;
                let (logits, mlp_trace) = weighting::forward_logits(&mlp, &feats)?;
                let (loss, dlogits) = bce_with_logits(&logits, labels)?;
                batch_loss += to_f64(loss);
                let (mg, dfeats) = weighting::backward(&mlp, &mlp_trace, &dlogits)?;
                let gg = gfm::backward(&gfm_params, &cfg.gfm, &gfm_trace, corrs, &dfeats)?;
                mlp_grads.accumulate(&mg);
                gfm_grads.accumulate(&gg);
            }
            let scale = 1.0 / batch.len() as f64;
            gfm_grads.scale(scale);
            mlp_grads.scale(scale);
            gfm_params.apply_gradients(&gfm_grads, lr);
            mlp.apply_gradients(&mlp_grads, lr);
            // Exploding updates show up as non-finite parameters before the
            // loss itself overflows.
            if gfm_params.validate(&cfg.gfm).is_err() || mlp.validate().is_err() {
                return Err(Error::DivergenceDetected { epoch });
            }
            epoch_lc += batch_loss * scale;
            batches += 1;
        }
        let train_lc = epoch_lc / batches as f64;
        if !train_lc.is_finite() {
            return Err(Error::DivergenceDetected { epoch });
        }

        let vlc = val_classification_loss(&gfm_params, &mlp, &cfg.gfm, &val_set)?;
        let vlt = val_transformation_loss(&gfm_params, &mlp, cfg, &val_set);
        val_lc.push(vlc);
        trace.push(LossReport {
            epoch,
            l_c: train_lc,
            l_t: vlt,
            total: train_lc + cfg.lambda * vlt,
        });
    }

    let checkpoint = Checkpoint::new(cfg.gfm.clone(), gfm_params, mlp);
    checkpoint.validate()?;
    Ok(TrainOutput {
        checkpoint,
        trace,
        initial_val_lc,
        val_lc,
    })
}
