//! Hypothesis verification: score candidate transforms by strict-threshold
//! inlier counting over the correspondence set and pick the maximizer.

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geometry::RigidTransform;
use crate::{real, to_f64, Real};
use serde::{Deserialize, Serialize};

/// One candidate transform with its verification score.
#[derive(Debug, Clone)]
pub struct Hypothesis<T> {
    pub transform: RigidTransform<T>,
    pub inlier_count: usize,
    pub mean_inlier_residual: T,
    /// Index of the candidate subset (or iteration) that produced it.
    pub subset_seed: usize,
}

/// Inlier census of one transform over the correspondence set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlierCount<T> {
    pub count: usize,
    /// Mean residual over inliers; 0 when there are none.
    pub mean_residual: T,
    pub mask: Vec<bool>,
}

/// Strict `< tau` inlier test per correspondence.
pub fn count_inliers<T: Real>(
    tf: &RigidTransform<T>,
    corrs: &CorrespondenceSet<T>,
    tau: T,
) -> InlierCount<T> {
    assert!(tau > T::zero(), "inlier threshold must be positive");
    let mut mask = Vec::with_capacity(corrs.len());
    let mut count = 0usize;
    let mut residual_sum = T::zero();
    let tau_sq = tau * tau;
    for c in &corrs.pairs {
        // Compare squared distances; the root is only needed for inliers.
        let r_sq = (tf.apply(&c.src) - c.dst).norm_squared();
        let inlier = r_sq < tau_sq;
        mask.push(inlier);
        if inlier {
            count += 1;
            residual_sum += r_sq.sqrt();
        }
    }
    let mean_residual = if count > 0 {
        residual_sum / real::<T>(count as f64)
    } else {
        T::zero()
    };
    InlierCount {
        count,
        mean_residual,
        mask,
    }
}

/// Picks the hypothesis with the most inliers; ties fall to the smaller mean
/// inlier residual, then to the lower subset seed.
pub fn select_best<T: Real>(hypotheses: &[Hypothesis<T>]) -> Result<Hypothesis<T>> {
    let mut best: Option<&Hypothesis<T>> = None;
    for h in hypotheses {
        let better = match best {
            None => true,
            Some(b) => {
                h.inlier_count > b.inlier_count
                    || (h.inlier_count == b.inlier_count
                        && (to_f64(h.mean_inlier_residual) < to_f64(b.mean_inlier_residual)
                            || (h.mean_inlier_residual == b.mean_inlier_residual
                                && h.subset_seed < b.subset_seed)))
            }
        };
        if better {
            best = Some(h);
        }
    }
    best.cloned().ok_or(Error::EmptyHypothesisSet)
}
