//! Embedded self-verification: quick oracle-equivalence and gradient checks
//! runnable from the CLI, each returning pass/fail with a diagnostic.

use crate::cloud::{make_synthetic_pair, voxel_downsample, PointCloud, SyntheticConfig};
use crate::features::consistency_features;
use crate::features::FeatureMatrix;
use crate::geometry::{pose_error, random_transform, random_unit_vector, Vec3};
use crate::gfm::{self, GfmConfig, GfmParams};
use crate::matching::{consistency_matrix, principal_vector, PrincipalMode};
use crate::procrustes::{self, WeightedPairs};
use crate::verification::count_inliers;
use crate::weighting::WeightMlpParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CheckResult = std::result::Result<(), String>;

/// Named self-checks in execution order.
pub fn all_checks() -> Vec<(&'static str, fn() -> CheckResult)> {
    vec![
        ("procrustes_noise_free_recovery", check_procrustes_recovery),
        ("procrustes_weight_scaling", check_weight_scaling),
        ("procrustes_reflection_guard", check_reflection_guard),
        ("voxel_binning_oracle", check_voxel_binning),
        ("edge_knn_bruteforce", check_edge_knn),
        ("power_iteration_residual", check_power_iteration),
        ("count_inliers_naive_loop", check_count_inliers),
        ("gfm_gradients_finite_difference", check_gfm_gradients),
        ("mlp_gradients_finite_difference", check_mlp_gradients),
        ("bce_gradient_finite_difference", check_bce_gradient),
    ]
}

fn check_procrustes_recovery() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..100 {
        let tf = random_transform::<f64, _>(&mut rng, 1.0);
        let src: Vec<Vec3<f64>> = (0..8)
            .map(|_| random_unit_vector::<f64, _>(&mut rng).scale(rng.random::<f64>() + 0.1))
            .collect();
        let dst: Vec<_> = src.iter().map(|p| tf.apply(p)).collect();
        let wp = WeightedPairs::unit_weights(src, dst).map_err(|e| e.to_string())?;
        let est = procrustes::solve(&wp).map_err(|e| e.to_string())?;
        let err = pose_error(&est, &tf);
        if err.re >= 1e-9 || err.te >= 1e-9 {
            return Err(format!("trial {trial}: re {} te {}", err.re, err.te));
        }
    }
    Ok(())
}

fn check_weight_scaling() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for &c in &[1e-3, 1.0, 1e3] {
        let tf = random_transform::<f64, _>(&mut rng, 1.0);
        let src: Vec<Vec3<f64>> = (0..6)
            .map(|_| random_unit_vector::<f64, _>(&mut rng))
            .collect();
        let dst: Vec<_> = src.iter().map(|p| tf.apply(p)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 0.05).collect();
        let sw: Vec<f64> = w.iter().map(|x| x * c).collect();
        let a = procrustes::solve(&WeightedPairs::new(src.clone(), dst.clone(), w).unwrap())
            .map_err(|e| e.to_string())?;
        let b = procrustes::solve(&WeightedPairs::new(src, dst, sw).unwrap())
            .map_err(|e| e.to_string())?;
        let err = pose_error(&a, &b);
        if err.re >= 1e-9 || err.te >= 1e-9 {
            return Err(format!("scale {c}: re {} te {}", err.re, err.te));
        }
    }
    Ok(())
}

fn check_reflection_guard() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for trial in 0..20 {
        let src: Vec<Vec3<f64>> = (0..6)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
            })
            .collect();
        let dst: Vec<_> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let wp = WeightedPairs::unit_weights(src, dst).unwrap();
        let est = procrustes::solve(&wp).map_err(|e| e.to_string())?;
        if est.rotation.rotation_defect() >= 1e-9 {
            return Err(format!("trial {trial}: mirrored input left SO(3)"));
        }
    }
    Ok(())
}

fn check_voxel_binning() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let cloud = PointCloud::from_points(
        (0..2000)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
            .collect(),
    );
    let voxel = 0.1;
    let down = voxel_downsample(&cloud, voxel);
    if down.len() > cloud.len() {
        return Err("downsample grew the cloud".into());
    }
    // Each output point must be the centroid of its own cell's members.
    for q in &down.points {
        let key = |p: &Vec3<f64>| {
            (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            )
        };
        let cell = key(q);
        let members: Vec<&Vec3<f64>> = cloud.points.iter().filter(|p| key(p) == cell).collect();
        if members.is_empty() {
            return Err("output point in empty cell".into());
        }
        let mut c = Vec3::zeros();
        for m in &members {
            c = c + **m;
        }
        let c = c.scale(1.0 / members.len() as f64);
        if c.distance(q) > 1e-9 {
            return Err("output point is not its cell centroid".into());
        }
    }
    Ok(())
}

fn check_edge_knn() -> CheckResult {
    let synth = SyntheticConfig::<f64> {
        n_points: 64,
        outlier_ratio: 0.5,
        ..SyntheticConfig::default()
    };
    let (_, corrs) = make_synthetic_pair(&synth, &mut ChaCha8Rng::seed_from_u64(113));
    let k = 8;
    let (_, nb) = gfm::edge_features(&corrs, k).map_err(|e| e.to_string())?;
    let coords: Vec<[f64; 6]> = corrs.pairs.iter().map(|c| c.as_6d()).collect();
    for i in 0..corrs.len() {
        let mut d: Vec<(f64, usize)> = (0..corrs.len())
            .filter(|&j| j != i)
            .map(|j| {
                (
                    (0..6).map(|a| (coords[j][a] - coords[i][a]).powi(2)).sum(),
                    j,
                )
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = d.iter().take(k).map(|&(_, j)| j).collect();
        if nb[i * k..(i + 1) * k] != expect[..] {
            return Err(format!("neighbor mismatch at row {i}"));
        }
    }
    Ok(())
}

fn check_power_iteration() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(127);
    for trial in 0..50 {
        let labels: Vec<u8> = (0..20)
            .map(|_| u8::from(rng.random::<f64>() > 0.4))
            .collect();
        let feats = consistency_features::<f64>(&labels, 8, 0.2, 1000 + trial);
        let members: Vec<usize> = (0..20).collect();
        let m = consistency_matrix(&feats, &members, 1.0).map_err(|e| e.to_string())?;
        let pv = principal_vector(&m, PrincipalMode::Eigenvector, 2000, 1e-12);
        let mut mv = vec![0.0; 20];
        m.mul_vec(&pv.raw, &mut mv);
        let residual: f64 = mv
            .iter()
            .zip(&pv.raw)
            .map(|(a, b)| (a - pv.lambda * b) * (a - pv.lambda * b))
            .sum::<f64>()
            .sqrt();
        if residual / pv.lambda >= 1e-6 {
            return Err(format!("trial {trial}: residual {}", residual / pv.lambda));
        }
    }
    Ok(())
}

fn check_count_inliers() -> CheckResult {
    let synth = SyntheticConfig::<f64> {
        n_points: 100,
        outlier_ratio: 0.5,
        ..SyntheticConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(131);
    let (pair, corrs) = make_synthetic_pair(&synth, &mut rng);
    let census = count_inliers(&pair.gt, &corrs, 0.05);
    let mut naive = 0usize;
    for c in &corrs.pairs {
        if pair.gt.apply(&c.src).distance(&c.dst) < 0.05 {
            naive += 1;
        }
    }
    if census.count != naive {
        return Err(format!("count {} vs naive {naive}", census.count));
    }
    Ok(())
}

fn check_gfm_gradients() -> CheckResult {
    let config = GfmConfig::desk();
    let params = GfmParams::<f64>::init(&config, 211);
    let synth = SyntheticConfig::<f64> {
        n_points: 20,
        outlier_ratio: 0.5,
        ..SyntheticConfig::default()
    };
    let (_, corrs) = make_synthetic_pair(&synth, &mut ChaCha8Rng::seed_from_u64(223));
    let mut rng = ChaCha8Rng::seed_from_u64(227);
    let g = FeatureMatrix::from_rows(
        (0..20)
            .map(|_| {
                (0..config.out_dim)
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let loss = |p: &GfmParams<f64>| -> f64 {
        let mut scratch = p.clone();
        let (out, _) = gfm::forward_train(&mut scratch, &config, &corrs).unwrap();
        (0..20)
            .map(|i| {
                (0..config.out_dim)
                    .map(|c| out.row(i)[c] * g.row(i)[c])
                    .sum::<f64>()
            })
            .sum()
    };
    let mut traced = params.clone();
    let (_, trace) = gfm::forward_train(&mut traced, &config, &corrs).map_err(|e| e.to_string())?;
    let analytic =
        gfm::backward(&params, &config, &trace, &corrs, &g).map_err(|e| e.to_string())?;

    // Spot-check a slice of each parameter group rather than every entry.
    let step = 1e-5;
    let check =
        |name: &str, idx: usize, set: &dyn Fn(&mut GfmParams<f64>, f64), base: f64, an: f64| {
            let mut plus = params.clone();
            set(&mut plus, base + step);
            let mut minus = params.clone();
            set(&mut minus, base - step);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
            if (fd - an).abs() > 1e-4 * fd.abs().max(an.abs()).max(1e-6) {
                return Err(format!("{name}[{idx}]: fd {fd} analytic {an}"));
            }
            Ok(())
        };
    for idx in [0usize, 7, 23] {
        let base = params.merge.conv.weight[idx];
        let an = analytic.merge.conv.weight[idx];
        check(
            "merge.weight",
            idx,
            &move |p, v| p.merge.conv.weight[idx] = v,
            base,
            an,
        )?;
    }
    for idx in [0usize, 3] {
        let base = params.blocks[0].conv.weight[idx];
        let an = analytic.blocks[0].conv.weight[idx];
        check(
            "block0.weight",
            idx,
            &move |p, v| p.blocks[0].conv.weight[idx] = v,
            base,
            an,
        )?;
        let base = params.blocks[4].bn.gamma[idx];
        let an = analytic.blocks[4].gamma[idx];
        check(
            "block4.gamma",
            idx,
            &move |p, v| p.blocks[4].bn.gamma[idx] = v,
            base,
            an,
        )?;
    }
    params.validate(&config).map_err(|e| e.to_string())?;
    Ok(())
}

fn check_mlp_gradients() -> CheckResult {
    let params = WeightMlpParams::<f64>::init(&[8, 4, 3, 1], 233);
    let mut rng = ChaCha8Rng::seed_from_u64(239);
    let feats = FeatureMatrix::from_rows(
        (0..10)
            .map(|_| (0..8).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect(),
    )
    .unwrap();
    let coef: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
    let loss = |p: &WeightMlpParams<f64>| -> f64 {
        let (z, _) = crate::weighting::forward_logits(p, &feats).unwrap();
        z.iter().zip(&coef).map(|(a, b)| a * b).sum()
    };
    let (_, trace) =
        crate::weighting::forward_logits(&params, &feats).map_err(|e| e.to_string())?;
    let (grads, _) =
        crate::weighting::backward(&params, &trace, &coef).map_err(|e| e.to_string())?;
    let step = 1e-5;
    for li in 0..params.layers.len() {
        for w in (0..params.layers[li].weight.len()).step_by(3) {
            let mut plus = params.clone();
            plus.layers[li].weight[w] += step;
            let mut minus = params.clone();
            minus.layers[li].weight[w] -= step;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
            let an = grads.layers[li].weight[w];
            if (fd - an).abs() > 1e-4 * fd.abs().max(an.abs()).max(1e-6) {
                return Err(format!("layer {li} weight {w}: fd {fd} analytic {an}"));
            }
        }
    }
    Ok(())
}

fn check_bce_gradient() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(241);
    let c: Vec<f64> = (0..16).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
    let l: Vec<u8> = (0..16)
        .map(|_| u8::from(rng.random::<f64>() > 0.5))
        .collect();
    let (_, grad) = crate::training::classification_loss(&c, &l).map_err(|e| e.to_string())?;
    let step = 1e-7;
    for i in 0..c.len() {
        let mut plus = c.clone();
        plus[i] += step;
        let mut minus = c.clone();
        minus[i] -= step;
        let (lp, _) = crate::training::classification_loss(&plus, &l).unwrap();
        let (lm, _) = crate::training::classification_loss(&minus, &l).unwrap();
        let fd = (lp - lm) / (2.0 * step);
        if (fd - grad[i]).abs() > 1e-6 * fd.abs().max(grad[i].abs()).max(1.0) {
            return Err(format!("entry {i}: fd {fd} analytic {}", grad[i]));
        }
    }
    Ok(())
}
