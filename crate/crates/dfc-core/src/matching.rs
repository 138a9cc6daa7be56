//! Feature-consistency matching: grow candidate inlier subsets by k-NN in
//! embedding space, score pairwise feature agreement in a consistency
//! matrix, take its principal vector as inlier likelihoods, and solve one
//! weighted rigid alignment per subset.

use crate::error::{Error, Result};
use crate::features::{CorrespondenceSet, FeatureMatrix};
use crate::geometry::RigidTransform;
use crate::procrustes::{self, WeightedPairs};
use crate::weighting::CandidateSet;
use crate::{real, to_f64, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Dot product with two independent accumulators; the relaxed association
/// lets the compiler keep the FMA pipeline full on the short rows the
/// consistency matrix is built from.
#[inline]
fn dot_unrolled<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc0 = T::zero();
    let mut acc1 = T::zero();
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
        acc0 += ca[0] * cb[0] + ca[2] * cb[2];
        acc1 += ca[1] * cb[1] + ca[3] * cb[3];
    }
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        acc0 += x * y;
    }
    acc0 + acc1
}

/// A candidate inlier subset: the seed plus its k-1 nearest correspondences
/// in embedding space, seed first, then ascending distance.
#[derive(Debug, Clone)]
pub struct InlierSubset {
    pub member_indices: Vec<usize>,
    pub seed_index: usize,
}

/// Pairwise feature-agreement matrix over one subset: symmetric, unit
/// diagonal, entries in `[0, 1]` after clamping.
#[derive(Debug, Clone)]
pub struct ConsistencyMatrix<T> {
    pub k: usize,
    /// Row-major `k x k`.
    pub m: Vec<T>,
    pub sigma2: T,
    /// True when some subset rows had zero norm (their off-diagonal
    /// agreements are defined as 0).
    pub has_zero_rows: bool,
}

impl<T: Real> ConsistencyMatrix<T> {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.m[i * self.k + j]
    }

    pub fn mul_vec(&self, v: &[T], out: &mut [T]) {
        for i in 0..self.k {
            out[i] = dot_unrolled(&self.m[i * self.k..(i + 1) * self.k], v);
        }
    }
}

/// How the principal vector is extracted from the consistency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrincipalMode {
    /// Dominant eigenvector of the matrix itself.
    Eigenvector,
    /// Dominant eigenvector after column-mean centering.
    Pca,
}

/// Nonnegative unit-norm inlier likelihoods for one subset.
#[derive(Debug, Clone)]
pub struct PrincipalVector<T> {
    /// Clamped-at-zero, re-normalized weights.
    pub weights: Vec<T>,
    /// Sign-oriented iterate before clamping (used for eigen residuals).
    pub raw: Vec<T>,
    /// Rayleigh quotient of the raw iterate.
    pub lambda: T,
    pub mode: PrincipalMode,
    pub converged: bool,
}

/// One subset per candidate: the seed plus its `k - 1` nearest rows of
/// `features` by Euclidean distance (ties toward the lower index).
pub fn build_subsets<T: Real>(
    features: &FeatureMatrix<T>,
    candidates: &CandidateSet<T>,
    k: usize,
) -> Result<Vec<InlierSubset>> {
    let n = features.rows();
    if n < k {
        return Err(Error::TooFewCorrespondences {
            have: n,
            need: k - 1,
        });
    }
    // Seeds are independent; selection of the k-1 smallest under the total
    // order (distance, index) is unique, so parallel order cannot matter.
    let subsets = candidates
        .indices
        .par_iter()
        .map(|&seed| {
            let mut scratch: Vec<(T, usize)> = Vec::with_capacity(n.saturating_sub(1));
            for j in 0..n {
                if j == seed {
                    continue;
                }
                scratch.push((features.row_distance_sq(seed, features, j), j));
            }
            let cmp =
                |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
            let take = (k - 1).min(scratch.len());
            if take > 0 && take < scratch.len() {
                scratch.select_nth_unstable_by(take - 1, cmp);
                scratch.truncate(take);
            }
            scratch.sort_by(cmp);
            let mut members = Vec::with_capacity(k);
            members.push(seed);
            members.extend(scratch.iter().map(|&(_, j)| j));
            InlierSubset {
                member_indices: members,
                seed_index: seed,
            }
        })
        .collect();
    Ok(subsets)
}

/// Consistency entries `e_ij = max(0, 1 - |fbar_i - fbar_j|^2 / sigma^2)`
/// over the L2-normalized feature rows of `members`; the diagonal is 1.
pub fn consistency_matrix<T: Real>(
    features: &FeatureMatrix<T>,
    members: &[usize],
    sigma2: T,
) -> Result<ConsistencyMatrix<T>> {
    if sigma2 <= T::zero() {
        return Err(Error::NonPositiveSigma(to_f64(sigma2)));
    }
    let k = members.len();
    let dim = features.dim();
    // Normalize member rows once; zero-norm rows stay zero and are flagged.
    let mut rows = vec![T::zero(); k * dim];
    let mut zero_row = vec![false; k];
    for (slot, &idx) in members.iter().enumerate() {
        let src = features.row(idx);
        let norm: T = src.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            for (dst, &v) in rows[slot * dim..(slot + 1) * dim].iter_mut().zip(src) {
                *dst = v / norm;
            }
        } else {
            zero_row[slot] = true;
        }
    }

    let mut m = vec![T::zero(); k * k];
    let two = real::<T>(2.0);
    for i in 0..k {
        m[i * k + i] = T::one();
        for j in (i + 1)..k {
            let e = if zero_row[i] || zero_row[j] {
                T::zero()
            } else {
                // Rows are unit, so |a - b|^2 = 2 - 2 a.b.
                let dot =
                    dot_unrolled(&rows[i * dim..(i + 1) * dim], &rows[j * dim..(j + 1) * dim]);
                (T::one() - (two - two * dot) / sigma2).max(T::zero())
            };
            m[i * k + j] = e;
            m[j * k + i] = e;
        }
    }
    Ok(ConsistencyMatrix {
        k,
        m,
        sigma2,
        has_zero_rows: zero_row.iter().any(|&z| z),
    })
}

/// Power iteration from the uniform vector; converged when successive unit
/// iterates differ by less than `tol`. The final iterate is sign-oriented
/// (entry sum nonnegative), then clamped at zero and re-normalized.
pub fn principal_vector<T: Real>(
    matrix: &ConsistencyMatrix<T>,
    mode: PrincipalMode,
    max_iters: usize,
    tol: T,
) -> PrincipalVector<T> {
    let k = matrix.k;
    // PCA mode centers each column on its mean before iterating.
    let work: Vec<T> = match mode {
        PrincipalMode::Eigenvector => matrix.m.clone(),
        PrincipalMode::Pca => {
            let mut centered = matrix.m.clone();
            let kk = real::<T>(k as f64);
            for j in 0..k {
                let mean: T = (0..k).map(|i| matrix.at(i, j)).sum::<T>() / kk;
                for i in 0..k {
                    centered[i * k + j] -= mean;
                }
            }
            centered
        }
    };
    let mul = |v: &[T], out: &mut [T]| {
        for i in 0..k {
            out[i] = dot_unrolled(&work[i * k..(i + 1) * k], v);
        }
    };

    let mut v = vec![T::one() / real::<T>((k as f64).sqrt()); k];
    let mut next = vec![T::zero(); k];
    let mut converged = false;
    for _ in 0..max_iters {
        mul(&v, &mut next);
        let norm: T = next.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            // Matrix annihilates the iterate; keep the last vector.
            break;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        let diff: T = v
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        std::mem::swap(&mut v, &mut next);
        if diff < tol {
            converged = true;
            break;
        }
    }

    // Orientation: agreement with the uncentered consistency row mass
    // decides the sign. For the plain eigenvector of a nonnegative matrix
    // this reduces to the entry-sum rule; in centered (pca) mode every
    // iterate sums to zero, so the entry sum cannot orient the contrast
    // direction and the row mass (largest for mutually consistent rows)
    // disambiguates it. Entry sum stays as the tiebreak.
    let row_mass: Vec<T> = (0..k)
        .map(|i| matrix.m[i * k..(i + 1) * k].iter().copied().sum())
        .collect();
    let mass_score: T = v.iter().zip(&row_mass).map(|(&a, &b)| a * b).sum();
    let sum: T = v.iter().copied().sum();
    if mass_score < T::zero() || (mass_score == T::zero() && sum < T::zero()) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    let mut mv = vec![T::zero(); k];
    mul(&v, &mut mv);
    let lambda: T = v.iter().zip(&mv).map(|(&a, &b)| a * b).sum();

    // Clamp negatives, re-normalize; an all-clamped vector falls back to
    // uniform (cannot happen for a nonnegative matrix, only in PCA mode).
    let mut weights: Vec<T> = v.iter().map(|&x| x.max(T::zero())).collect();
    let wnorm: T = weights.iter().map(|&x| x * x).sum::<T>().sqrt();
    if wnorm > T::zero() {
        for x in weights.iter_mut() {
            *x /= wnorm;
        }
    } else {
        let u = T::one() / real::<T>((k as f64).sqrt());
        weights.iter_mut().for_each(|x| *x = u);
    }

    PrincipalVector {
        weights,
        raw: v,
        lambda,
        mode,
        converged,
    }
}

/// Weighted rigid alignment of one subset's point pairs using the principal
/// vector entries as weights.
pub fn subset_transform<T: Real>(
    corrs: &CorrespondenceSet<T>,
    subset: &InlierSubset,
    weights: &[T],
) -> Result<RigidTransform<T>> {
    if weights.len() != subset.member_indices.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: subset.member_indices.len(),
        });
    }
    let source = subset
        .member_indices
        .iter()
        .map(|&i| corrs.pairs[i].src)
        .collect();
    let target = subset
        .member_indices
        .iter()
        .map(|&i| corrs.pairs[i].dst)
        .collect();
    let wp = WeightedPairs::new(source, target, weights.to_vec())?;
    procrustes::solve(&wp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{make_synthetic_pair, SyntheticConfig};
    use crate::features::consistency_features;
    use crate::geometry::pose_error;
    use crate::weighting::sample_candidates;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, dim: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::from_rows(
            (0..n)
                .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn subsets_with_k_equal_n_cover_everything() {
        let feats = random_features(12, 6, 1);
        let candidates = sample_candidates(&[0.5; 12], 12);
        let subsets = build_subsets(&feats, &candidates, 12).unwrap();
        for s in &subsets {
            let mut sorted = s.member_indices.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..12).collect::<Vec<_>>());
            assert_eq!(s.member_indices[0], s.seed_index);
        }
    }

    #[test]
    fn subset_neighbor_ties_break_low() {
        // One-hot rows: every non-self distance ties, so the lowest other
        // index is chosen.
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let feats = FeatureMatrix::from_rows(rows).unwrap();
        let candidates = sample_candidates(&[1.0; 5], 5);
        let subsets = build_subsets(&feats, &candidates, 2).unwrap();
        for s in &subsets {
            let expect_other = if s.seed_index == 0 { 1 } else { 0 };
            assert_eq!(s.member_indices, vec![s.seed_index, expect_other]);
        }
    }

    #[test]
    fn subsets_match_bruteforce_knn() {
        let feats = random_features(100, 32, 3);
        let conf: Vec<f64> = (0..100).map(|i| 1.0 - i as f64 / 200.0).collect();
        let candidates = sample_candidates(&conf, 20);
        let k = 10;
        let subsets = build_subsets(&feats, &candidates, k).unwrap();
        for s in &subsets {
            let seed = s.seed_index;
            let mut d: Vec<(f64, usize)> = (0..100)
                .filter(|&j| j != seed)
                .map(|j| (feats.row_distance_sq(seed, &feats, j), j))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut expect = vec![seed];
            expect.extend(d.iter().take(k - 1).map(|&(_, j)| j));
            assert_eq!(s.member_indices, expect);
        }
    }

    #[test]
    fn consistency_identical_and_antipodal() {
        let feats = FeatureMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0, 0.0], // same direction after normalization
            vec![-1.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let m = consistency_matrix(&feats, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(m.at(0, 1), 1.0); // identical normalized features
        assert_eq!(m.at(0, 2), 0.0); // antipodal: 1 - 4 clamps to 0
        assert_eq!(m.at(2, 2), 1.0);
    }

    #[test]
    fn consistency_matches_naive_loop_and_invariants() {
        let feats = random_features(5, 8, 7);
        let members = [0, 1, 2, 3, 4];
        let sigma2 = 0.8;
        let m = consistency_matrix(&feats, &members, sigma2).unwrap();

        // Naive double-loop oracle on explicitly normalized rows.
        let norm_row = |i: usize| -> Vec<f64> {
            let r = feats.row(i);
            let n: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| v / n).collect()
        };
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j {
                    1.0
                } else {
                    let a = norm_row(i);
                    let b = norm_row(j);
                    let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                    (1.0 - d2 / sigma2).max(0.0)
                };
                assert!((m.at(i, j) - expect).abs() < 1e-12);
                assert!((m.at(i, j) - m.at(j, i)).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&m.at(i, j)));
            }
        }
    }

    #[test]
    fn zero_sigma_is_rejected() {
        let feats = random_features(3, 4, 9);
        assert!(matches!(
            consistency_matrix(&feats, &[0, 1, 2], 0.0),
            Err(Error::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn zero_feature_rows_are_flagged() {
        let feats =
            FeatureMatrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let m = consistency_matrix(&feats, &[0, 1, 2], 1.0).unwrap();
        assert!(m.has_zero_rows);
        assert_eq!(m.at(0, 1), 0.0);
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(m.at(1, 2), 1.0);
    }

    #[test]
    fn identity_matrix_returns_uniform_vector() {
        let m = ConsistencyMatrix {
            k: 3,
            m: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            sigma2: 1.0,
            has_zero_rows: false,
        };
        let pv = principal_vector(&m, PrincipalMode::Eigenvector, 1000, 1e-10);
        assert!(pv.converged);
        let u = 1.0 / 3.0f64.sqrt();
        for &w in &pv.weights {
            assert!((w - u).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_matrix_recovers_generator() {
        let v = [0.6f64, 0.8, 0.0, 0.0];
        let mut m = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                m[i * 4 + j] = v[i] * v[j];
            }
        }
        let cm = ConsistencyMatrix {
            k: 4,
            m,
            sigma2: 1.0,
            has_zero_rows: false,
        };
        let pv = principal_vector(&cm, PrincipalMode::Eigenvector, 1000, 1e-12);
        for (w, expect) in pv.weights.iter().zip(&v) {
            assert!((w - expect).abs() < 1e-9);
        }
        assert!((pv.lambda - 1.0).abs() < 1e-9); // |v| = 1 so lambda = v^T v
    }

    /// Plain cyclic Jacobi eigensolver used as the independent oracle.
    fn jacobi_dense(m: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut a = m.to_vec();
        let mut v: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..200 {
            let mut off = 0.0;
            for p in 0..k {
                for q in (p + 1)..k {
                    off += a[p * k + q] * a[p * k + q];
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..k {
                for q in (p + 1)..k {
                    let apq = a[p * k + q];
                    if apq.abs() < 1e-30 {
                        continue;
                    }
                    let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..k {
                        let aip = a[i * k + p];
                        let aiq = a[i * k + q];
                        a[i * k + p] = c * aip - s * aiq;
                        a[i * k + q] = s * aip + c * aiq;
                    }
                    for j in 0..k {
                        let apj = a[p * k + j];
                        let aqj = a[q * k + j];
                        a[p * k + j] = c * apj - s * aqj;
                        a[q * k + j] = s * apj + c * aqj;
                    }
                    for row in v.iter_mut() {
                        let vp = row[p];
                        let vq = row[q];
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let eigvals: Vec<f64> = (0..k).map(|i| a[i * k + i]).collect();
        (eigvals, v)
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..100 {
            let k = 2 + rng.random_range(0..11usize); // up to 12
                                                      // Random symmetric nonnegative matrix with unit diagonal.
            let mut m = vec![0.0f64; k * k];
            for i in 0..k {
                m[i * k + i] = 1.0;
                for j in (i + 1)..k {
                    let e: f64 = rng.random();
                    m[i * k + j] = e;
                    m[j * k + i] = e;
                }
            }
            let cm = ConsistencyMatrix {
                k,
                m: m.clone(),
                sigma2: 1.0,
                has_zero_rows: false,
            };
            let pv = principal_vector(&cm, PrincipalMode::Eigenvector, 5000, 1e-12);

            let (eigvals, vecs) = jacobi_dense(&m, k);
            let top = (0..k)
                .max_by(|&a, &b| eigvals[a].partial_cmp(&eigvals[b]).unwrap())
                .unwrap();
            let oracle: Vec<f64> = (0..k).map(|i| vecs[i][top]).collect();
            let dot: f64 = pv.raw.iter().zip(&oracle).map(|(a, b)| a * b).sum();
            let on: f64 = oracle.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cosine = (dot / on).abs();
            assert!(
                cosine > 1.0 - 1e-8,
                "trial {trial}: cosine {cosine} (k = {k})"
            );

            // Eigen-residual on the raw iterate.
            let mut mv = vec![0.0; k];
            cm.mul_vec(&pv.raw, &mut mv);
            let residual: f64 = mv
                .iter()
                .zip(&pv.raw)
                .map(|(a, b)| (a - pv.lambda * b) * (a - pv.lambda * b))
                .sum::<f64>()
                .sqrt();
            assert!(residual / pv.lambda < 1e-6, "trial {trial}: residual");
        }
    }

    #[test]
    fn inlier_weights_exceed_outlier_weights() {
        // Oracle-feature subsets: half inliers (consistent rows), noise 0.1.
        let mut wins = 0;
        for seed in 0..100 {
            let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
            let feats = consistency_features::<f64>(&labels, 16, 0.1, seed);
            let members: Vec<usize> = (0..40).collect();
            let m = consistency_matrix(&feats, &members, 1.0).unwrap();
            let pv = principal_vector(&m, PrincipalMode::Eigenvector, 1000, 1e-10);
            let (mut in_sum, mut in_n, mut out_sum, mut out_n) = (0.0, 0, 0.0, 0);
            for (i, &l) in labels.iter().enumerate() {
                if l == 1 {
                    in_sum += pv.weights[i];
                    in_n += 1;
                } else {
                    out_sum += pv.weights[i];
                    out_n += 1;
                }
            }
            if in_sum / in_n as f64 > out_sum / out_n as f64 {
                wins += 1;
            }
        }
        assert_eq!(wins, 100);
    }

    #[test]
    fn pca_mode_also_separates_inliers() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i < 24)).collect();
        let feats = consistency_features::<f64>(&labels, 16, 0.1, 5);
        let members: Vec<usize> = (0..40).collect();
        let m = consistency_matrix(&feats, &members, 1.0).unwrap();
        let pv = principal_vector(&m, PrincipalMode::Pca, 2000, 1e-10);
        let in_mean: f64 = (0..24).map(|i| pv.weights[i]).sum::<f64>() / 24.0;
        let out_mean: f64 = (24..40).map(|i| pv.weights[i]).sum::<f64>() / 16.0;
        assert!(in_mean > out_mean, "in {in_mean} out {out_mean}");
        // Unit norm, nonnegative entries.
        let norm: f64 = pv.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!(pv.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn subset_transform_examples() {
        let cfg = SyntheticConfig {
            n_points: 60,
            outlier_ratio: 0.25,
            noise_sigma: 0.0,
            ..SyntheticConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (pair, corrs) = make_synthetic_pair::<f64, _>(&cfg, &mut rng);
        let labels = corrs.labels.clone().unwrap();

        // Clean subset with uniform weights recovers the ground truth.
        let clean: Vec<usize> = (0..60).filter(|&i| labels[i] == 1).take(10).collect();
        let subset = InlierSubset {
            member_indices: clean.clone(),
            seed_index: clean[0],
        };
        let w = vec![1.0; clean.len()];
        let tf = subset_transform(&corrs, &subset, &w).unwrap();
        let err = pose_error(&tf, &pair.gt);
        assert!(err.re < 1e-9 && err.te < 1e-9);

        // One outlier with weight -> 0 changes nothing.
        let outlier = (0..60).find(|&i| labels[i] == 0).unwrap();
        let mut with_outlier = clean.clone();
        with_outlier.push(outlier);
        let subset2 = InlierSubset {
            member_indices: with_outlier,
            seed_index: clean[0],
        };
        let mut w2 = vec![1.0; clean.len() + 1];
        w2[clean.len()] = 0.0;
        let tf2 = subset_transform(&corrs, &subset2, &w2).unwrap();
        assert!(tf2.rotation.sub(&tf.rotation).frobenius_norm() < 1e-9);
        assert!(tf2.translation.distance(&tf.translation) < 1e-9);
    }

    #[test]
    fn noisy_subset_with_principal_weights_stays_accurate() {
        // 30 inliers + 10 outliers with oracle features: the full spectral
        // path (consistency -> principal vector -> weighted solve) must land
        // within a degree of the ground truth.
        let cfg = SyntheticConfig {
            n_points: 40,
            outlier_ratio: 0.25,
            noise_sigma: 0.005,
            ..SyntheticConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (pair, corrs) = make_synthetic_pair::<f64, _>(&cfg, &mut rng);
        let labels = corrs.labels.clone().unwrap();
        let feats = consistency_features::<f64>(&labels, 16, 0.1, 17);
        let members: Vec<usize> = (0..40).collect();
        let m = consistency_matrix(&feats, &members, 1.0).unwrap();
        let pv = principal_vector(&m, PrincipalMode::Eigenvector, 1000, 1e-10);
        let subset = InlierSubset {
            member_indices: members,
            seed_index: 0,
        };
        let tf = subset_transform(&corrs, &subset, &pv.weights).unwrap();
        let err = pose_error(&tf, &pair.gt);
        assert!(err.re_degrees() < 1.0, "re {} deg", err.re_degrees());
    }
}
