//! Classical registration components: point-to-point ICP refinement and a
//! RANSAC baseline over correspondence sets.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geometry::RigidTransform;
use crate::kdtree::KdTree;
use crate::procrustes::{self, WeightedPairs};
use crate::verification::{count_inliers, Hypothesis};
use crate::{real, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcpConfig<T> {
    pub max_iterations: usize,
    /// Pairs farther than this after the current transform are ignored.
    pub max_corr_dist: T,
    /// Stop when the transform update is below this (Frobenius + Euclidean).
    pub transform_tol: T,
    /// Stop when the RMSE improvement is below this.
    pub rmse_tol: T,
}

impl<T: Real> Default for IcpConfig<T> {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            max_corr_dist: real(0.1),
            transform_tol: real(1e-6),
            rmse_tol: real(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpStatus {
    /// Transform delta or RMSE delta fell below tolerance.
    Converged,
    MaxIterations,
    /// No point pair within `max_corr_dist`; the initial transform is kept.
    NoCorrespondencesInRange,
    /// A solve on the matched pairs was degenerate; last good transform kept.
    DegenerateMatches,
    /// RMSE stopped improving; last improving transform kept.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct IcpResult<T> {
    pub transform: RigidTransform<T>,
    pub iterations: usize,
    pub final_rmse: Option<T>,
    /// RMSE after each accepted iteration; non-increasing by construction.
    pub rmse_history: Vec<T>,
    pub status: IcpStatus,
}

/// Iterates nearest-neighbor matching within range and unit-weight rigid
/// solves until the transform or the RMSE stops moving. The accepted RMSE
/// sequence is non-increasing: an iteration that would raise it is rejected
/// and iteration stops there.
pub fn icp_refine<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    initial: &RigidTransform<T>,
    cfg: &IcpConfig<T>,
) -> Result<IcpResult<T>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&target.points);
    let mut tf = *initial;
    let mut prev_rmse: Option<T> = None;
    let mut history = Vec::new();
    let mut status = IcpStatus::MaxIterations;
    let mut iterations = 0usize;

    for it in 1..=cfg.max_iterations {
        // Match each source point to its nearest target within range.
        let mut src_pts = Vec::new();
        let mut dst_pts = Vec::new();
        for p in &source.points {
            let moved = tf.apply(p);
            if let Some((j, _)) = tree.nearest_within(&moved, cfg.max_corr_dist) {
                src_pts.push(*p);
                dst_pts.push(target.points[j]);
            }
        }
        if src_pts.len() < 3 {
            if it == 1 {
                return Ok(IcpResult {
                    transform: *initial,
                    iterations: 0,
                    final_rmse: None,
                    rmse_history: history,
                    status: IcpStatus::NoCorrespondencesInRange,
                });
            }
            status = IcpStatus::DegenerateMatches;
            break;
        }

        let wp = WeightedPairs::unit_weights(src_pts, dst_pts)?;
        let new_tf = match procrustes::solve(&wp) {
            Ok(t) => t,
            Err(Error::DegenerateGeometry(_)) => {
                status = IcpStatus::DegenerateMatches;
                break;
            }
            Err(e) => return Err(e),
        };
        let mse = procrustes::residual_mse(&wp, &new_tf);
        let rmse = mse.max(T::zero()).sqrt();

        if let Some(prev) = prev_rmse {
            if rmse > prev {
                // Keep the previous (better) transform.
                status = IcpStatus::Stalled;
                break;
            }
        }
        debug_assert!(prev_rmse.is_none_or(|p| rmse <= p), "icp rmse increased");

        let delta = new_tf.rotation.sub(&tf.rotation).frobenius_norm()
            + new_tf.translation.distance(&tf.translation);
        let rmse_delta = prev_rmse.map(|p| (p - rmse).abs());
        tf = new_tf;
        iterations = it;
        history.push(rmse);
        prev_rmse = Some(rmse);

        if delta < cfg.transform_tol {
            status = IcpStatus::Converged;
            break;
        }
        if let Some(rd) = rmse_delta {
            if rd < cfg.rmse_tol {
                status = IcpStatus::Converged;
                break;
            }
        }
    }

    Ok(IcpResult {
        transform: tf,
        iterations,
        final_rmse: prev_rmse,
        rmse_history: history,
        status,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RansacConfig<T> {
    pub iterations: usize,
    /// Inlier threshold (strict `<`, shared with hypothesis verification).
    pub tau: T,
    pub seed: u64,
}

/// Three-point RANSAC over the correspondence set: per-iteration minimal
/// samples with derived seeds, strict inlier counting, verification tie
/// rules, and a final unit-weight refit on the winning consensus set (kept
/// only if it does not lose inliers).
pub fn ransac<T: Real>(
    corrs: &CorrespondenceSet<T>,
    cfg: &RansacConfig<T>,
) -> Result<Hypothesis<T>> {
    let n = corrs.len();
    if n < 3 {
        return Err(Error::TooFewCorrespondences { have: n, need: 2 });
    }
    assert!(cfg.iterations >= 1);

    let mut best: Option<Hypothesis<T>> = None;
    for iter in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::mix(cfg.seed, iter as u64));
        // Three distinct indices by rejection.
        let mut idx = [0usize; 3];
        idx[0] = rng.random_range(0..n);
        loop {
            idx[1] = rng.random_range(0..n);
            if idx[1] != idx[0] {
                break;
            }
        }
        loop {
            idx[2] = rng.random_range(0..n);
            if idx[2] != idx[0] && idx[2] != idx[1] {
                break;
            }
        }
        let src = idx.iter().map(|&i| corrs.pairs[i].src).collect();
        let dst = idx.iter().map(|&i| corrs.pairs[i].dst).collect();
        let wp = match WeightedPairs::unit_weights(src, dst) {
            Ok(wp) => wp,
            Err(_) => continue,
        };
        let tf = match procrustes::solve(&wp) {
            Ok(tf) => tf,
            Err(Error::DegenerateGeometry(_)) => continue,
            Err(e) => return Err(e),
        };
        let census = count_inliers(&tf, corrs, cfg.tau);
        let candidate = Hypothesis {
            transform: tf,
            inlier_count: census.count,
            mean_inlier_residual: census.mean_residual,
            subset_seed: iter,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                candidate.inlier_count > b.inlier_count
                    || (candidate.inlier_count == b.inlier_count
                        && (candidate.mean_inlier_residual < b.mean_inlier_residual
                            || (candidate.mean_inlier_residual == b.mean_inlier_residual
                                && candidate.subset_seed < b.subset_seed)))
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    let mut best = best.ok_or(Error::AllSamplesDegenerate)?;

    // Consensus refit, iterated while support improves under the tie rules
    // (count, then mean residual). A refit that would lose support is
    // discarded, so the result is never worse than the best raw sample.
    for _ in 0..20 {
        let census = count_inliers(&best.transform, corrs, cfg.tau);
        let inlier_src: Vec<_> = corrs
            .pairs
            .iter()
            .zip(&census.mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| c.src)
            .collect();
        let inlier_dst: Vec<_> = corrs
            .pairs
            .iter()
            .zip(&census.mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| c.dst)
            .collect();
        if inlier_src.len() < 3 {
            break;
        }
        let Ok(wp) = WeightedPairs::unit_weights(inlier_src, inlier_dst) else {
            break;
        };
        let Ok(refit) = procrustes::solve(&wp) else {
            break;
        };
        let refit_census = count_inliers(&refit, corrs, cfg.tau);
        let improves = refit_census.count > best.inlier_count
            || (refit_census.count == best.inlier_count
                && refit_census.mean_residual < best.mean_inlier_residual);
        if !improves {
            break;
        }
        best = Hypothesis {
            transform: refit,
            inlier_count: refit_census.count,
            mean_inlier_residual: refit_census.mean_residual,
            subset_seed: best.subset_seed,
        };
    }
    Ok(best)
}
