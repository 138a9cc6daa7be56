//! Pipeline orchestration and the benchmark harness: configuration profiles,
//! single-pair registration, suite execution over synthetic or manifest
//! pairs, and report emission.
//!
//! Reports separate deterministic results from timing: the JSON artifact
//! contains only seed-reproducible values (so identical seeds give
//! byte-identical files regardless of thread count), while wall-clock times
//! go to the CSV table and the stdout summary.

use crate::checkpoint::Checkpoint;
use crate::classic::{self, IcpConfig, IcpStatus, RansacConfig};
use crate::cloud::{self, make_synthetic_pair, PointCloud, SyntheticConfig};
use crate::error::{Error, Result};
use crate::features::{
    build_correspondences, consistency_features, CorrespondenceSet, FeatureMatrix, FeatureProvider,
};
use crate::geometry::{pose_error, RigidTransform};
use crate::gfm::{self, GfmConfig, GfmParams};
use crate::matching::{self, PrincipalMode};
use crate::procrustes::{self, WeightedPairs};
use crate::verification::{count_inliers, select_best, Hypothesis};
use crate::weighting::{self, WeightMlpParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Where per-correspondence embedding rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    /// Ground-truth-aware consistent rows (synthetic suites only): inlier
    /// correspondences share a noisy unit direction, outliers are random.
    Oracle { noise: f64, dim: usize },
    /// The trained (or seeded default) graph embedding network.
    Gfm,
}

/// Pointwise descriptor choice for cloud-pair registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProviderSpec {
    LocalHist { radius: f64, bins: usize },
    Precomputed { source: String, target: String },
}

impl ProviderSpec {
    fn to_provider(&self) -> FeatureProvider<f64> {
        match self {
            ProviderSpec::LocalHist { radius, bins } => FeatureProvider::LocalHist {
                radius: *radius,
                bins: *bins,
            },
            ProviderSpec::Precomputed { source, target } => FeatureProvider::Precomputed {
                source: PathBuf::from(source),
                target: PathBuf::from(target),
            },
        }
    }
}

/// All pipeline tunables. Field names double as the CLI override keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Voxel size for downsampling; 0 disables it.
    pub voxel: f64,
    /// Inlier threshold (strict `<`).
    pub tau: f64,
    /// Consistency-matrix sensitivity.
    pub sigma2: f64,
    /// Correspondences drawn from the source cloud (clamped to its size).
    pub n_sample: usize,
    /// Candidate inliers kept by the confidence ranking.
    pub n_s: usize,
    /// Subset size grown around each candidate.
    pub subset_k: usize,
    /// Success thresholds for recall accounting.
    pub re_max_deg: f64,
    pub te_max: f64,
    pub principal_mode: PrincipalMode,
    pub embedding: EmbeddingSpec,
    pub provider: ProviderSpec,
    /// Refine the selected hypothesis with ICP (the dfc vs dfc-v1 switch).
    pub use_icp: bool,
    pub icp_max_iterations: usize,
    /// 0 means "use tau".
    pub icp_max_corr_dist: f64,
    /// Count inliers over the full correspondence set (true) or only the
    /// winning subset's members (false).
    pub verify_full_set: bool,
    pub power_max_iters: usize,
    pub power_tol: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig::synthetic()
    }
}

impl RegistrationConfig {
    /// Indoor-scale profile (meters): 5 cm voxel, 10 cm inlier threshold,
    /// success below 15 degrees / 30 cm.
    pub fn indoor() -> Self {
        RegistrationConfig {
            voxel: 0.05,
            tau: 0.10,
            re_max_deg: 15.0,
            te_max: 0.30,
            ..RegistrationConfig::base()
        }
    }

    /// Outdoor-scale profile (meters): 30 cm voxel, 60 cm threshold,
    /// success below 5 degrees / 60 cm.
    pub fn outdoor() -> Self {
        RegistrationConfig {
            voxel: 0.30,
            tau: 0.60,
            re_max_deg: 5.0,
            te_max: 0.60,
            ..RegistrationConfig::base()
        }
    }

    /// Unit-cube synthetic profile: no downsampling, thresholds scaled to
    /// the dimensionless scene.
    pub fn synthetic() -> Self {
        RegistrationConfig {
            voxel: 0.0,
            tau: 0.05,
            re_max_deg: 5.0,
            te_max: 0.05,
            embedding: EmbeddingSpec::Oracle {
                noise: 0.1,
                dim: 16,
            },
            ..RegistrationConfig::base()
        }
    }

    fn base() -> Self {
        RegistrationConfig {
            voxel: 0.0,
            tau: 0.05,
            sigma2: 1.0,
            n_sample: 5000,
            n_s: 200,
            subset_k: 40,
            re_max_deg: 5.0,
            te_max: 0.05,
            principal_mode: PrincipalMode::Eigenvector,
            embedding: EmbeddingSpec::Gfm,
            provider: ProviderSpec::LocalHist {
                radius: 0.3,
                bins: 4,
            },
            use_icp: false,
            icp_max_iterations: 50,
            icp_max_corr_dist: 0.0,
            verify_full_set: true,
            // Subsets with near-degenerate consistency spectra cannot meet a
            // tight tolerance and would burn the full budget; their
            // hypotheses lose verification regardless, so the pipeline caps
            // iterations well below the library default.
            power_max_iters: 50,
            power_tol: 1e-9,
            seed: 7,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "indoor" => Ok(Self::indoor()),
            "outdoor" => Ok(Self::outdoor()),
            "synthetic" => Ok(Self::synthetic()),
            other => Err(Error::InvalidConfig(format!(
                "unknown profile `{other}` (expected indoor, outdoor or synthetic)"
            ))),
        }
    }

    fn icp_config(&self) -> IcpConfig<f64> {
        IcpConfig {
            max_iterations: self.icp_max_iterations,
            max_corr_dist: if self.icp_max_corr_dist > 0.0 {
                self.icp_max_corr_dist
            } else {
                self.tau
            },
            ..IcpConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IcpSummary {
    pub iterations: usize,
    pub status: IcpStatus,
    pub final_rmse: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoseSummary {
    pub re_deg: f64,
    pub te: f64,
    pub success: bool,
}

/// Outcome of one registration run.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub transform: RigidTransform<f64>,
    pub inlier_count: usize,
    pub inlier_mask: Vec<bool>,
    pub n_correspondences: usize,
    pub n_hypotheses: usize,
    pub skipped_subsets: usize,
    pub best_subset_seed: usize,
    pub icp: Option<IcpSummary>,
    pub pose: Option<PoseSummary>,
    /// (stage name, milliseconds); covers the whole run.
    pub stage_times_ms: Vec<(String, f64)>,
    pub total_ms: f64,
}

impl RegistrationResult {
    pub fn evaluate_against(&mut self, gt: &RigidTransform<f64>, cfg: &RegistrationConfig) {
        let err = pose_error(&self.transform, gt);
        let re_deg = err.re_degrees();
        self.pose = Some(PoseSummary {
            re_deg,
            te: err.te,
            success: re_deg < cfg.re_max_deg && err.te < cfg.te_max,
        });
    }
}

/// Core matching pipeline over an embedded correspondence set: confidence,
/// one-shot candidate sampling, per-subset consistency matching with
/// weighted solves, hypothesis verification, and optional ICP refinement
/// against the supplied clouds.
pub fn register_correspondences(
    corrs: &CorrespondenceSet<f64>,
    features: &FeatureMatrix<f64>,
    mlp: &WeightMlpParams<f64>,
    cfg: &RegistrationConfig,
    icp_clouds: Option<(&PointCloud<f64>, &PointCloud<f64>)>,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    let mut stage_times = Vec::new();
    let mut stage = Instant::now();
    let record = |name: &str, stage: &mut Instant, out: &mut Vec<(String, f64)>| {
        out.push((name.to_string(), stage.elapsed().as_secs_f64() * 1e3));
        *stage = Instant::now();
    };

    let confidences = weighting::confidence(mlp, features)?;
    record("confidence", &mut stage, &mut stage_times);

    let candidates = weighting::sample_candidates(&confidences, cfg.n_s);
    record("sample_candidates", &mut stage, &mut stage_times);

    let subsets = matching::build_subsets(features, &candidates, cfg.subset_k)?;
    record("build_subsets", &mut stage, &mut stage_times);

    // Per-subset consistency matching and weighted solves are independent;
    // order is restored by the indexed collect.
    let outcomes: Vec<Option<Hypothesis<f64>>> = subsets
        .par_iter()
        .map(|subset| {
            let m =
                matching::consistency_matrix(features, &subset.member_indices, cfg.sigma2).ok()?;
            let pv = matching::principal_vector(
                &m,
                cfg.principal_mode,
                cfg.power_max_iters,
                cfg.power_tol,
            );
            let tf = matching::subset_transform(corrs, subset, &pv.weights).ok()?;
            let census = if cfg.verify_full_set {
                count_inliers(&tf, corrs, cfg.tau)
            } else {
                let sub_corrs = CorrespondenceSet {
                    pairs: subset
                        .member_indices
                        .iter()
                        .map(|&i| corrs.pairs[i])
                        .collect(),
                    features: None,
                    confidences: None,
                    labels: None,
                };
                count_inliers(&tf, &sub_corrs, cfg.tau)
            };
            Some(Hypothesis {
                transform: tf,
                inlier_count: census.count,
                mean_inlier_residual: census.mean_residual,
                subset_seed: subset.seed_index,
            })
        })
        .collect();
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    let hypotheses: Vec<Hypothesis<f64>> = outcomes.into_iter().flatten().collect();
    record("hypotheses", &mut stage, &mut stage_times);

    let best = select_best(&hypotheses)?;
    record("select_best", &mut stage, &mut stage_times);

    let mut transform = best.transform;
    let mut icp_summary = None;
    if cfg.use_icp {
        if let Some((src, dst)) = icp_clouds {
            let res = classic::icp_refine(src, dst, &transform, &cfg.icp_config())?;
            icp_summary = Some(IcpSummary {
                iterations: res.iterations,
                status: res.status,
                final_rmse: res.final_rmse,
            });
            transform = res.transform;
        }
    }
    record("icp", &mut stage, &mut stage_times);

    let census = count_inliers(&transform, corrs, cfg.tau);
    record("final_census", &mut stage, &mut stage_times);

    Ok(RegistrationResult {
        transform,
        inlier_count: census.count,
        inlier_mask: census.mask,
        n_correspondences: corrs.len(),
        n_hypotheses: hypotheses.len(),
        skipped_subsets: skipped,
        best_subset_seed: best.subset_seed,
        icp: icp_summary,
        pose: None,
        stage_times_ms: stage_times,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Resolved embedding source shared across a run.
enum EmbeddingEngine {
    Oracle {
        noise: f64,
        dim: usize,
    },
    Gfm {
        config: GfmConfig,
        params: GfmParams<f64>,
    },
}

impl EmbeddingEngine {
    fn resolve(
        spec: &EmbeddingSpec,
        checkpoint: Option<&Checkpoint>,
        seed: u64,
    ) -> EmbeddingEngine {
        match spec {
            EmbeddingSpec::Oracle { noise, dim } => EmbeddingEngine::Oracle {
                noise: *noise,
                dim: *dim,
            },
            EmbeddingSpec::Gfm => match checkpoint {
                Some(ck) => EmbeddingEngine::Gfm {
                    config: ck.gfm_config.clone(),
                    params: ck.gfm_params.clone(),
                },
                None => {
                    let config = GfmConfig::desk();
                    let params = GfmParams::init(&config, seed);
                    EmbeddingEngine::Gfm { config, params }
                }
            },
        }
    }

    fn features_for(
        &self,
        corrs: &CorrespondenceSet<f64>,
        pair_seed: u64,
    ) -> Result<FeatureMatrix<f64>> {
        match self {
            EmbeddingEngine::Oracle { noise, dim } => {
                let labels = corrs.labels.as_ref().ok_or(Error::MissingContext(
                    "oracle embedding needs ground-truth labels (synthetic suites only)",
                ))?;
                Ok(consistency_features(labels, *dim, *noise, pair_seed))
            }
            EmbeddingEngine::Gfm { config, params } => gfm::forward_eval(params, config, corrs),
        }
    }

    fn embedding_dim(&self) -> usize {
        match self {
            EmbeddingEngine::Oracle { dim, .. } => *dim,
            EmbeddingEngine::Gfm { config, .. } => config.out_dim,
        }
    }
}

fn resolve_mlp(
    checkpoint: Option<&Checkpoint>,
    engine: &EmbeddingEngine,
    seed: u64,
) -> WeightMlpParams<f64> {
    match checkpoint {
        Some(ck) if ck.gfm_config.out_dim == engine.embedding_dim() => ck.mlp_params.clone(),
        _ => WeightMlpParams::for_feature_dim(engine.embedding_dim(), seed),
    }
}

/// Full cloud-pair registration: voxel downsampling, pointwise descriptors,
/// correspondence construction, embedding, and the matching pipeline.
pub fn register_pair(
    source: &PointCloud<f64>,
    target: &PointCloud<f64>,
    cfg: &RegistrationConfig,
    checkpoint: Option<&Checkpoint>,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    let mut stage_times = Vec::new();
    let mut stage = Instant::now();

    let (src, dst) = if cfg.voxel > 0.0 {
        (
            cloud::voxel_downsample(source, cfg.voxel),
            cloud::voxel_downsample(target, cfg.voxel),
        )
    } else {
        (source.clone(), target.clone())
    };
    stage_times.push(("voxel".to_string(), stage.elapsed().as_secs_f64() * 1e3));
    stage = Instant::now();

    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }

    let provider = cfg.provider.to_provider();
    let (fs, ft) = provider.describe_pair(&src, &dst, None, cfg.seed)?;
    stage_times.push(("describe".to_string(), stage.elapsed().as_secs_f64() * 1e3));
    stage = Instant::now();

    let corrs = build_correspondences(&src, &fs, &dst, &ft, cfg.n_sample, cfg.seed)?;
    stage_times.push((
        "correspondences".to_string(),
        stage.elapsed().as_secs_f64() * 1e3,
    ));
    stage = Instant::now();

    let engine = match cfg.embedding {
        // Oracle embedding cannot apply to real cloud pairs.
        EmbeddingSpec::Oracle { .. } => {
            EmbeddingEngine::resolve(&EmbeddingSpec::Gfm, checkpoint, cfg.seed)
        }
        _ => EmbeddingEngine::resolve(&cfg.embedding, checkpoint, cfg.seed),
    };
    let features = engine.features_for(&corrs, cfg.seed)?;
    stage_times.push(("embed".to_string(), stage.elapsed().as_secs_f64() * 1e3));

    let mlp = resolve_mlp(checkpoint, &engine, cfg.seed);
    let mut result = register_correspondences(&corrs, &features, &mlp, cfg, Some((&src, &dst)))?;
    let mut all_times = stage_times;
    all_times.extend(result.stage_times_ms.clone());
    result.stage_times_ms = all_times;
    result.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Benchmark methods. `Ransac(n)` runs n iterations; `RawLs` is a single
/// unit-weight solve over all correspondences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Dfc,
    DfcV1,
    Ransac(usize),
    IcpOnly,
    RawLs,
}

pub const METHOD_HELP: &str = "dfc, dfc-v1, ransac-<n>[k], icp-only, raw-ls";

impl MethodSpec {
    pub fn parse(name: &str) -> Result<MethodSpec> {
        let norm = name.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "dfc" => Ok(MethodSpec::Dfc),
            "dfc-v1" => Ok(MethodSpec::DfcV1),
            "icp-only" => Ok(MethodSpec::IcpOnly),
            "raw-ls" | "raw" => Ok(MethodSpec::RawLs),
            other => {
                if let Some(rest) = other.strip_prefix("ransac-") {
                    let (digits, mult) = match rest.strip_suffix('k') {
                        Some(d) => (d, 1000usize),
                        None => (rest, 1usize),
                    };
                    let n: usize = digits
                        .parse()
                        .map_err(|_| Error::UnknownMethod(name.to_string(), METHOD_HELP))?;
                    if n == 0 {
                        return Err(Error::UnknownMethod(name.to_string(), METHOD_HELP));
                    }
                    Ok(MethodSpec::Ransac(n * mult))
                } else {
                    Err(Error::UnknownMethod(name.to_string(), METHOD_HELP))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            MethodSpec::Dfc => "dfc".to_string(),
            MethodSpec::DfcV1 => "dfc-v1".to_string(),
            MethodSpec::Ransac(n) => {
                if n % 1000 == 0 {
                    format!("ransac-{}k", n / 1000)
                } else {
                    format!("ransac-{n}")
                }
            }
            MethodSpec::IcpOnly => "icp-only".to_string(),
            MethodSpec::RawLs => "raw-ls".to_string(),
        }
    }
}

/// Synthetic suite parameters (the pipeline knobs live in
/// [`RegistrationConfig`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSuiteConfig {
    pub pairs: usize,
    pub points: usize,
    pub outlier_ratio: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSuiteConfig {
    fn default() -> Self {
        SyntheticSuiteConfig {
            pairs: 200,
            points: 1000,
            outlier_ratio: 0.7,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

/// Pair source for a benchmark run.
pub enum SuiteSource {
    Synthetic(SyntheticSuiteConfig),
    /// CSV manifest: `src_path,dst_path[,gt_path]` per line.
    Manifest(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteDescriptor {
    pub kind: String,
    pub pairs: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

/// One method's outcome on one pair. Timing is excluded from serialization
/// so the JSON report stays byte-identical across runs and thread counts.
#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub pair: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub te: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inliers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub name: String,
    /// Registration recall in percent over pairs with ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr_percent: Option<f64>,
    /// Mean rotation error (degrees) over successful pairs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_re_deg: Option<f64>,
    /// Mean translation error over successful pairs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_te: Option<f64>,
    pub pairs: Vec<PairOutcome>,
    #[serde(skip)]
    pub mean_time_s: f64,
    #[serde(skip)]
    pub median_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub suite: SuiteDescriptor,
    pub config: RegistrationConfig,
    pub methods: Vec<MethodReport>,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Table mirroring the usual benchmark columns (RR / RE / TE / time).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rr_percent,mean_re_deg,mean_te,mean_time_s\n");
        for m in &self.methods {
            let fmt = |v: Option<f64>| v.map_or(String::from(""), |x| format!("{x:.6}"));
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                m.name,
                fmt(m.rr_percent),
                fmt(m.mean_re_deg),
                fmt(m.mean_te),
                m.mean_time_s
            );
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>10} {:>10} {:>10}",
            "method", "RR(%)", "RE(deg)", "TE", "time(s)"
        );
        for m in &self.methods {
            let fmt = |v: Option<f64>| v.map_or(String::from("-"), |x| format!("{x:.3}"));
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>10} {:>10} {:>10.4}",
                m.name,
                fmt(m.rr_percent),
                fmt(m.mean_re_deg),
                fmt(m.mean_te),
                m.mean_time_s
            );
        }
        out
    }
}

struct SuitePair {
    source: PointCloud<f64>,
    target: PointCloud<f64>,
    gt: Option<RigidTransform<f64>>,
    corrs: CorrespondenceSet<f64>,
    features: FeatureMatrix<f64>,
    pair_seed: u64,
}

fn build_synthetic_pair_data(
    suite: &SyntheticSuiteConfig,
    cfg: &RegistrationConfig,
    engine: &EmbeddingEngine,
    index: usize,
) -> Result<SuitePair> {
    let pair_seed = crate::seeds::mix(suite.seed, index as u64);
    let synth = SyntheticConfig {
        n_points: suite.points,
        outlier_ratio: suite.outlier_ratio,
        noise_sigma: suite.noise_sigma,
        tau: cfg.tau,
        translation_range: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let (pair, mut corrs) = make_synthetic_pair::<f64, _>(&synth, &mut rng);
    corrs.labels = Some(pair.gt_labels.clone());
    let features = engine.features_for(&corrs, pair_seed)?;
    Ok(SuitePair {
        source: pair.source,
        target: pair.target,
        gt: Some(pair.gt),
        corrs,
        features,
        pair_seed,
    })
}

fn build_manifest_pair_data(
    entry: &ManifestEntry,
    cfg: &RegistrationConfig,
    engine: &EmbeddingEngine,
    index: usize,
) -> Result<SuitePair> {
    let pair_seed = crate::seeds::mix(cfg.seed, index as u64);
    let source = cloud::load(&entry.source, cloud::Format::from_path(&entry.source)?)?;
    let target = cloud::load(&entry.target, cloud::Format::from_path(&entry.target)?)?;
    let gt = entry
        .gt
        .as_ref()
        .map(|p| load_transform_file(p))
        .transpose()?;
    let (src, dst) = if cfg.voxel > 0.0 {
        (
            cloud::voxel_downsample(&source, cfg.voxel),
            cloud::voxel_downsample(&target, cfg.voxel),
        )
    } else {
        (source, target)
    };
    let provider = cfg.provider.to_provider();
    let (fs, ft) = provider.describe_pair(&src, &dst, None, pair_seed)?;
    let corrs = build_correspondences(&src, &fs, &dst, &ft, cfg.n_sample, pair_seed)?;
    let features = engine.features_for(&corrs, pair_seed)?;
    Ok(SuitePair {
        source: src,
        target: dst,
        gt,
        corrs,
        features,
        pair_seed,
    })
}

struct ManifestEntry {
    source: PathBuf,
    target: PathBuf,
    gt: Option<PathBuf>,
}

fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                "expected `src,dst[,gt]`",
            ));
        }
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry {
            source: resolve(parts[0]),
            target: resolve(parts[1]),
            gt: parts.get(2).filter(|s| !s.is_empty()).map(|s| resolve(s)),
        });
    }
    if entries.is_empty() {
        return Err(Error::InvalidConfig("manifest lists no pairs".into()));
    }
    Ok(entries)
}

/// 4x4 row-major rigid transform text file (last row `0 0 0 1`).
pub fn load_transform_file(path: &Path) -> Result<RigidTransform<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::parse(
                        path.display().to_string(),
                        idx + 1,
                        format!("invalid number `{t}`"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                "expected 4 values per row",
            ));
        }
        rows.push(vals);
    }
    if rows.len() != 4 {
        return Err(Error::parse(
            path.display().to_string(),
            0,
            format!("expected 4 rows, found {}", rows.len()),
        ));
    }
    let bottom_ok = (rows[3][0]).abs() < 1e-9
        && (rows[3][1]).abs() < 1e-9
        && (rows[3][2]).abs() < 1e-9
        && (rows[3][3] - 1.0).abs() < 1e-9;
    if !bottom_ok {
        return Err(Error::parse(
            path.display().to_string(),
            4,
            "last row must be `0 0 0 1`",
        ));
    }
    let tf = RigidTransform::new(
        crate::geometry::Mat3::from_rows(
            [rows[0][0], rows[0][1], rows[0][2]],
            [rows[1][0], rows[1][1], rows[1][2]],
            [rows[2][0], rows[2][1], rows[2][2]],
        ),
        crate::geometry::Vec3::new(rows[0][3], rows[1][3], rows[2][3]),
    );
    if !tf.is_valid(1e-6) {
        return Err(Error::InvalidConfig(format!(
            "{}: rotation block is not in SO(3)",
            path.display()
        )));
    }
    Ok(tf)
}

pub fn save_transform_file(tf: &RigidTransform<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..3 {
        let t = [tf.translation.x, tf.translation.y, tf.translation.z][i];
        let _ = writeln!(
            out,
            "{} {} {} {}",
            tf.rotation.m[i][0], tf.rotation.m[i][1], tf.rotation.m[i][2], t
        );
    }
    out.push_str("0 0 0 1\n");
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn run_method_on_pair(
    method: MethodSpec,
    data: &SuitePair,
    cfg: &RegistrationConfig,
    mlp: &WeightMlpParams<f64>,
) -> Result<RegistrationResult> {
    match method {
        MethodSpec::Dfc | MethodSpec::DfcV1 => {
            let mut method_cfg = cfg.clone();
            method_cfg.use_icp = matches!(method, MethodSpec::Dfc);
            register_correspondences(
                &data.corrs,
                &data.features,
                mlp,
                &method_cfg,
                Some((&data.source, &data.target)),
            )
        }
        MethodSpec::Ransac(iterations) => {
            let hyp = classic::ransac(
                &data.corrs,
                &RansacConfig {
                    iterations,
                    tau: cfg.tau,
                    seed: data.pair_seed,
                },
            )?;
            let census = count_inliers(&hyp.transform, &data.corrs, cfg.tau);
            Ok(RegistrationResult {
                transform: hyp.transform,
                inlier_count: census.count,
                inlier_mask: census.mask,
                n_correspondences: data.corrs.len(),
                n_hypotheses: iterations,
                skipped_subsets: 0,
                best_subset_seed: hyp.subset_seed,
                icp: None,
                pose: None,
                stage_times_ms: Vec::new(),
                total_ms: 0.0,
            })
        }
        MethodSpec::IcpOnly => {
            let res = classic::icp_refine(
                &data.source,
                &data.target,
                &RigidTransform::identity(),
                &cfg.icp_config(),
            )?;
            let census = count_inliers(&res.transform, &data.corrs, cfg.tau);
            Ok(RegistrationResult {
                transform: res.transform,
                inlier_count: census.count,
                inlier_mask: census.mask,
                n_correspondences: data.corrs.len(),
                n_hypotheses: 1,
                skipped_subsets: 0,
                best_subset_seed: 0,
                icp: Some(IcpSummary {
                    iterations: res.iterations,
                    status: res.status,
                    final_rmse: res.final_rmse,
                }),
                pose: None,
                stage_times_ms: Vec::new(),
                total_ms: 0.0,
            })
        }
        MethodSpec::RawLs => {
            let wp = WeightedPairs::unit_weights(
                data.corrs.source_points(),
                data.corrs.target_points(),
            )?;
            let tf = procrustes::solve(&wp)?;
            let census = count_inliers(&tf, &data.corrs, cfg.tau);
            Ok(RegistrationResult {
                transform: tf,
                inlier_count: census.count,
                inlier_mask: census.mask,
                n_correspondences: data.corrs.len(),
                n_hypotheses: 1,
                skipped_subsets: 0,
                best_subset_seed: 0,
                icp: None,
                pose: None,
                stage_times_ms: Vec::new(),
                total_ms: 0.0,
            })
        }
    }
}

/// [`run_suite`] inside a dedicated worker pool of `threads` threads
/// (0 uses the global default). Results are identical regardless of the
/// thread count.
pub fn run_suite_with_threads(
    source: &SuiteSource,
    cfg: &RegistrationConfig,
    methods: &[MethodSpec],
    checkpoint: Option<&Checkpoint>,
    threads: usize,
) -> Result<SuiteReport> {
    if threads == 0 {
        return run_suite(source, cfg, methods, checkpoint);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_suite(source, cfg, methods, checkpoint))
}

/// Runs every method over every pair (pairs in parallel, methods in the
/// given order) and aggregates recall and error statistics. The same pair
/// data, correspondences and embedding rows are shared by all methods.
pub fn run_suite(
    source: &SuiteSource,
    cfg: &RegistrationConfig,
    methods: &[MethodSpec],
    checkpoint: Option<&Checkpoint>,
) -> Result<SuiteReport> {
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    // The oracle embedding needs ground-truth labels, which only synthetic
    // suites have; manifest pairs fall back to the network embedding.
    let effective_embedding = match (&cfg.embedding, source) {
        (EmbeddingSpec::Oracle { .. }, SuiteSource::Manifest(_)) => &EmbeddingSpec::Gfm,
        (spec, _) => spec,
    };
    let engine = EmbeddingEngine::resolve(effective_embedding, checkpoint, cfg.seed);
    let mlp = resolve_mlp(checkpoint, &engine, cfg.seed);

    let (descriptor, pair_count, manifest_entries) = match source {
        SuiteSource::Synthetic(s) => (
            SuiteDescriptor {
                kind: "synthetic".to_string(),
                pairs: s.pairs,
                seed: s.seed,
                points: Some(s.points),
                outlier_ratio: Some(s.outlier_ratio),
                noise_sigma: Some(s.noise_sigma),
            },
            s.pairs,
            None,
        ),
        SuiteSource::Manifest(path) => {
            let entries = parse_manifest(path)?;
            (
                SuiteDescriptor {
                    kind: "manifest".to_string(),
                    pairs: entries.len(),
                    seed: cfg.seed,
                    points: None,
                    outlier_ratio: None,
                    noise_sigma: None,
                },
                entries.len(),
                Some(entries),
            )
        }
    };
    if pair_count == 0 {
        return Err(Error::InvalidConfig("suite has no pairs".into()));
    }

    // Pairs run sequentially so each method's wall time reflects the method
    // as deployed (the matching pipeline parallelizes over subsets
    // internally); results are index-ordered and thread-count independent.
    let rows: Vec<Vec<PairOutcome>> = (0..pair_count)
        .map(|idx| {
            let data = match source {
                SuiteSource::Synthetic(s) => build_synthetic_pair_data(s, cfg, &engine, idx),
                SuiteSource::Manifest(_) => build_manifest_pair_data(
                    &manifest_entries.as_ref().unwrap()[idx],
                    cfg,
                    &engine,
                    idx,
                ),
            };
            let data = match data {
                Ok(d) => d,
                Err(e) => {
                    return methods
                        .iter()
                        .map(|_| PairOutcome {
                            pair: idx,
                            re_deg: None,
                            te: None,
                            success: Some(false),
                            inliers: None,
                            error: Some(e.to_string()),
                            time_s: 0.0,
                        })
                        .collect();
                }
            };
            methods
                .iter()
                .map(|&method| {
                    let started = Instant::now();
                    match run_method_on_pair(method, &data, cfg, &mlp) {
                        Ok(mut result) => {
                            let time_s = started.elapsed().as_secs_f64();
                            if let Some(gt) = &data.gt {
                                result.evaluate_against(gt, cfg);
                            }
                            PairOutcome {
                                pair: idx,
                                re_deg: result.pose.as_ref().map(|p| p.re_deg),
                                te: result.pose.as_ref().map(|p| p.te),
                                success: result.pose.as_ref().map(|p| p.success),
                                inliers: Some(result.inlier_count),
                                error: None,
                                time_s,
                            }
                        }
                        Err(e) => PairOutcome {
                            pair: idx,
                            re_deg: None,
                            te: None,
                            success: data.gt.as_ref().map(|_| false),
                            inliers: None,
                            error: Some(e.to_string()),
                            time_s: started.elapsed().as_secs_f64(),
                        },
                    }
                })
                .collect()
        })
        .collect();

    let methods_report = methods
        .iter()
        .enumerate()
        .map(|(mi, method)| {
            let pairs: Vec<PairOutcome> = rows.iter().map(|row| row[mi].clone()).collect();
            let with_gt: Vec<&PairOutcome> = pairs.iter().filter(|p| p.success.is_some()).collect();
            let successes: Vec<&PairOutcome> = with_gt
                .iter()
                .copied()
                .filter(|p| p.success == Some(true))
                .collect();
            let rr_percent = if with_gt.is_empty() {
                None
            } else {
                Some(100.0 * successes.len() as f64 / with_gt.len() as f64)
            };
            let mean_over = |f: &dyn Fn(&PairOutcome) -> Option<f64>| {
                let vals: Vec<f64> = successes.iter().filter_map(|p| f(p)).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            let mean_re_deg = mean_over(&|p| p.re_deg);
            let mean_te = mean_over(&|p| p.te);
            let mut times: Vec<f64> = pairs.iter().map(|p| p.time_s).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean_time_s = times.iter().sum::<f64>() / times.len() as f64;
            let median_time_s = times[times.len() / 2];
            MethodReport {
                name: method.name(),
                rr_percent,
                mean_re_deg,
                mean_te,
                pairs,
                mean_time_s,
                median_time_s,
            }
        })
        .collect();

    Ok(SuiteReport {
        schema_version: REPORT_SCHEMA_VERSION,
        suite: descriptor,
        config: cfg.clone(),
        methods: methods_report,
    })
}
