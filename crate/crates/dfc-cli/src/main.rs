//! Command-line driver for the registration toolkit: register a cloud pair,
//! run benchmark suites, train on synthetic data, or run the embedded
//! self-checks.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 pipeline failure.

use clap::{Args, Parser, Subcommand};
use dfc_core::bench::{
    self, MethodSpec, RegistrationConfig, SuiteSource, SyntheticSuiteConfig, METHOD_HELP,
};
use dfc_core::checkpoint::Checkpoint;
use dfc_core::training::{self, TrainConfig};
use dfc_core::{cloud, selfcheck};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dfc",
    version,
    about = "Feature-consistency point cloud registration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud.
    Register(RegisterArgs),
    /// Run a benchmark suite over synthetic pairs or a manifest.
    Benchmark(BenchmarkArgs),
    /// Train the embedding and confidence networks on synthetic data.
    Train(TrainArgs),
    /// Run the embedded oracle and gradient self-checks.
    Selfcheck,
}

#[derive(Args)]
struct RegisterArgs {
    /// Source point cloud (.ply, .xyz or .csv).
    #[arg(long)]
    src: PathBuf,
    /// Target point cloud.
    #[arg(long)]
    dst: PathBuf,
    /// Configuration profile: indoor, outdoor or synthetic.
    #[arg(long, default_value = "indoor")]
    profile: String,
    /// JSON configuration file overriding the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flat key=value overrides applied on top (e.g. --set tau=0.08).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Trained checkpoint for the embedding and confidence networks.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Ground-truth 4x4 transform file; enables error reporting.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Refine the result with ICP.
    #[arg(long)]
    icp: bool,
    /// Output directory (transform.txt and result.json are written here).
    #[arg(long)]
    out: PathBuf,
    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// `synthetic` or a path to a manifest CSV of `src,dst[,gt]` rows.
    #[arg(long, default_value = "synthetic")]
    suite: String,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "dfc-v1,ransac-1k")]
    methods: String,
    /// Synthetic suite: number of pairs.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    /// Synthetic suite: points per cloud.
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Synthetic suite: correspondence outlier fraction.
    #[arg(long, default_value_t = 0.7)]
    outliers: f64,
    /// Synthetic suite: target-point noise sigma.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Configuration profile.
    #[arg(long, default_value = "synthetic")]
    profile: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory (report.json and report.csv are written here).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training configuration (defaults are desk scale).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (checkpoint.json and trace.csv are written here).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Usage(String),
    Pipeline(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Pipeline(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Pipeline(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn pipeline<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Pipeline(e.to_string())
}

fn main() -> ExitCode {
    // Map clap's parse failures to exit code 1 (it defaults to 2), while
    // keeping its rendered help/version output on the right streams.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Register(args) => cmd_register(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Train(args) => cmd_train(args),
        Command::Selfcheck => cmd_selfcheck(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Loads a config: profile defaults, then optional JSON file, then flat
/// `key=value` overrides; unknown keys are rejected.
fn load_registration_config(
    profile: &str,
    config: Option<&Path>,
    sets: &[String],
) -> Result<RegistrationConfig, CliError> {
    let base = RegistrationConfig::profile(profile).map_err(usage)?;
    let mut value = serde_json::to_value(&base).map_err(usage)?;
    if let Some(path) = config {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let file_value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        merge_json(&mut value, file_value)?;
    }
    apply_overrides(&mut value, sets)?;
    serde_json::from_value(value).map_err(|e| usage(format!("configuration: {e}")))
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) -> Result<(), CliError> {
    let (Some(base_map), serde_json::Value::Object(overlay_map)) = (base.as_object_mut(), overlay)
    else {
        return Err(usage("configuration file must be a JSON object"));
    };
    for (k, v) in overlay_map {
        base_map.insert(k, v);
    }
    Ok(())
}

fn apply_overrides(value: &mut serde_json::Value, sets: &[String]) -> Result<(), CliError> {
    let map = value.as_object_mut().expect("config is an object");
    for entry in sets {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{entry}` is not KEY=VALUE")))?;
        if !map.contains_key(key) {
            let known: Vec<&str> = map.keys().map(String::as_str).collect();
            return Err(usage(format!(
                "unknown configuration key `{key}`; valid keys: {}",
                known.join(", ")
            )));
        }
        // Parse as JSON when possible (numbers, booleans, objects), fall
        // back to a plain string.
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.to_string(), parsed);
    }
    Ok(())
}

fn prepare_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: Option<&Path>) -> Result<Option<Checkpoint>, CliError> {
    path.map(|p| Checkpoint::load(p).map_err(usage)).transpose()
}

fn cmd_register(args: RegisterArgs) -> Result<(), CliError> {
    let mut cfg = load_registration_config(&args.profile, args.config.as_deref(), &args.set)?;
    if args.icp {
        cfg.use_icp = true;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    prepare_out_dir(&args.out)?;
    let checkpoint = load_checkpoint(args.checkpoint.as_deref())?;
    let gt = args
        .gt
        .as_deref()
        .map(bench::load_transform_file)
        .transpose()
        .map_err(usage)?;

    let load_cloud = |path: &Path| -> Result<cloud::PointCloud<f64>, CliError> {
        let format = cloud::Format::from_path(path).map_err(usage)?;
        cloud::load(path, format).map_err(pipeline)
    };
    let source = load_cloud(&args.src)?;
    let target = load_cloud(&args.dst)?;

    let mut result =
        bench::register_pair(&source, &target, &cfg, checkpoint.as_ref()).map_err(pipeline)?;
    if let Some(gt) = &gt {
        result.evaluate_against(gt, &cfg);
    }

    bench::save_transform_file(&result.transform, &args.out.join("transform.txt"))
        .map_err(pipeline)?;

    let diagnostics = serde_json::json!({
        "schema_version": 1,
        "transform": {
            "rotation": result.transform.rotation.m,
            "translation": [
                result.transform.translation.x,
                result.transform.translation.y,
                result.transform.translation.z,
            ],
        },
        "n_correspondences": result.n_correspondences,
        "inlier_count": result.inlier_count,
        "n_hypotheses": result.n_hypotheses,
        "skipped_subsets": result.skipped_subsets,
        "icp": result.icp,
        "re_deg": result.pose.as_ref().map(|p| p.re_deg),
        "te": result.pose.as_ref().map(|p| p.te),
        "success": result.pose.as_ref().map(|p| p.success),
        "stage_times_ms": result.stage_times_ms,
        "total_ms": result.total_ms,
    });
    let json_path = args.out.join("result.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&diagnostics).expect("diagnostics serialize") + "\n",
    )
    .map_err(|e| pipeline(format!("{}: {e}", json_path.display())))?;

    println!(
        "registered {} -> {}: {} / {} inliers{}",
        args.src.display(),
        args.dst.display(),
        result.inlier_count,
        result.n_correspondences,
        result
            .pose
            .as_ref()
            .map(|p| format!(", RE {:.4} deg, TE {:.5}", p.re_deg, p.te))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let mut cfg = load_registration_config(&args.profile, args.config.as_deref(), &args.set)?;
    cfg.seed = args.seed;
    let methods = args
        .methods
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(MethodSpec::parse)
        .collect::<dfc_core::Result<Vec<_>>>()
        .map_err(|e| usage(format!("{e}; valid methods: {METHOD_HELP}")))?;
    if methods.is_empty() {
        return Err(usage("no methods requested"));
    }
    prepare_out_dir(&args.out)?;
    let checkpoint = load_checkpoint(args.checkpoint.as_deref())?;

    let source = if args.suite == "synthetic" {
        SuiteSource::Synthetic(SyntheticSuiteConfig {
            pairs: args.pairs,
            points: args.points,
            outlier_ratio: args.outliers,
            noise_sigma: args.noise,
            seed: args.seed,
        })
    } else {
        SuiteSource::Manifest(PathBuf::from(&args.suite))
    };

    let report =
        bench::run_suite_with_threads(&source, &cfg, &methods, checkpoint.as_ref(), args.threads)
            .map_err(pipeline)?;

    std::fs::write(args.out.join("report.json"), report.to_json())
        .map_err(|e| pipeline(format!("writing report.json: {e}")))?;
    std::fs::write(args.out.join("report.csv"), report.to_csv())
        .map_err(|e| pipeline(format!("writing report.csv: {e}")))?;
    print!("{}", report.summary_table());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let base = TrainConfig::default();
    let mut value = serde_json::to_value(&base).map_err(usage)?;
    if let Some(path) = &args.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let file_value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        merge_json(&mut value, file_value)?;
    }
    apply_overrides(&mut value, &args.set)?;
    let mut cfg: TrainConfig =
        serde_json::from_value(value).map_err(|e| usage(format!("configuration: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    prepare_out_dir(&args.out)?;

    let out = training::train(&cfg).map_err(pipeline)?;
    out.checkpoint
        .save(&args.out.join("checkpoint.json"))
        .map_err(pipeline)?;
    std::fs::write(args.out.join("trace.csv"), out.trace_csv())
        .map_err(|e| pipeline(format!("writing trace.csv: {e}")))?;

    println!(
        "trained {} epochs: held-out classification loss {:.4} -> {:.4}",
        cfg.epochs,
        out.initial_val_lc,
        out.val_lc.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_selfcheck() -> Result<(), CliError> {
    let mut failed = Vec::new();
    for (name, check) in selfcheck::all_checks() {
        match check() {
            Ok(()) => println!("{name:<40} PASS"),
            Err(msg) => {
                println!("{name:<40} FAIL ({msg})");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(pipeline(format!("failing checks: {}", failed.join(", "))))
    }
}
