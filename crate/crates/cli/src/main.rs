use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hough_pose::keypoints::{mean_keypoint_distance, KeypointMethod};
use hough_pose::metrics::{AccuracyCurve, ACCURACY_THRESHOLD_2CM, DEFAULT_AUC_THRESHOLD};
use hough_pose::model_io::{
    load_ply, load_poses, load_prediction, load_scene, save_curve, save_keypoints, save_poses, save_prediction,
    save_results, save_scene, sibling_path, write_atomic, KeypointFile, ModelRegistry, PredictionFormat,
};
use hough_pose::simulation::{
    ablation_to_csv, evaluate, generate_scene, keypoint_ablation, occlusion_sweep, occlusion_to_csv,
    oracle_predict, run_pipeline, to_pose_records, KeypointSweepConfig, NoiseSpec, OcclusionSweepConfig,
    PipelineConfig, SceneSpec,
};
use hough_pose::Error;

#[derive(Parser)]
#[command(name = "hough-pose", version, about = "Keypoint voting and pose fitting on simulated scenes")]
struct Cli {
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select keypoints on a PLY model.
    Keypoints(KeypointsArgs),
    /// Generate a scene from a scene spec.
    Simulate(SimulateArgs),
    /// Produce oracle predictions (ground truth plus noise) for a scene.
    Predict(PredictArgs),
    /// Estimate instance poses from a scene and its predictions.
    Estimate(EstimateArgs),
    /// Score estimated poses against the scene's ground truth.
    Evaluate(EvaluateArgs),
    /// Run an occlusion or keypoint-selection sweep.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fps,
    Bbox8,
}

#[derive(Args)]
struct KeypointsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "fps")]
    method: MethodArg,
    /// Number of surface keypoints (FPS only).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    m: Option<u32>,
    #[arg(long, default_value_t = 1)]
    class_id: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Directory holding registry.json.
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Noise spec (JSON); the individual noise flags override its fields.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    outlier_rate: Option<f64>,
    #[arg(long)]
    label_error_rate: Option<f64>,
    #[arg(long)]
    distance_scaled: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; a `.bin` extension selects the binary layout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    prediction: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Pipeline settings (JSON); flags below override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    center_bandwidth: Option<f64>,
    #[arg(long)]
    keypoint_bandwidth: Option<f64>,
    #[arg(long)]
    min_cluster_points: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Results CSV; the ADD(S) accuracy curve goes next to it as `<stem>.curve.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AUC_THRESHOLD)]
    max_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Occlusion,
    Keypoints,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// Sweep config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Overrides the trial count of the config.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(Error::InvalidArgument(format!("{}: {e}", path.display()))))
}

fn cmd_keypoints(args: KeypointsArgs) -> CmdResult {
    let method = match (args.method, args.m) {
        (MethodArg::Fps, m) => KeypointMethod::Fps {
            m: m.map_or(hough_pose::keypoints::DEFAULT_KEYPOINT_COUNT, |m| m as usize),
        },
        (MethodArg::Bbox8, m) => {
            if m.is_some() {
                eprintln!("warning: --m is ignored for bbox8, which always yields 8 corners");
            }
            KeypointMethod::BBox8
        }
    };
    let model = load_ply(&args.model, args.class_id)?;
    let keypoints = method.select(&model)?;
    save_keypoints(&KeypointFile::new(args.class_id, method, &keypoints), &args.out)?;
    println!(
        "{} keypoints ({method}) written to {}; mean distance to model points {:.6} m",
        keypoints.len(),
        args.out.display(),
        mean_keypoint_distance(&model, &keypoints)?
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let spec: SceneSpec = read_json(&args.spec)?;
    spec.validate()?;
    let registry = ModelRegistry::load_dir(&args.registry)?;
    let scene = generate_scene(&spec, &registry)?;
    save_scene(&scene, &args.out)?;
    println!(
        "scene {} with {} instances and {} points written to {}",
        scene.frame_id,
        scene.instances.len(),
        scene.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CmdResult {
    let mut noise: NoiseSpec = match &args.noise {
        Some(path) => read_json(path)?,
        None => NoiseSpec::default(),
    };
    if let Some(s) = args.sigma {
        noise.offset_sigma = s;
    }
    if let Some(r) = args.outlier_rate {
        noise.outlier_rate = r;
    }
    if let Some(r) = args.label_error_rate {
        noise.label_error_rate = r;
    }
    noise.distance_scaled |= args.distance_scaled;
    noise.validate().map_err(|e| usage(e.to_string()))?;

    let scene = load_scene(&args.scene)?;
    let registry = ModelRegistry::load_dir(&args.registry)?;
    let pred = oracle_predict(&scene, &registry, &noise, args.seed)?;
    save_prediction(&pred, &args.out, PredictionFormat::from_path(&args.out))?;
    println!(
        "predictions for {} points ({} keypoints, {} classes) written to {}",
        pred.len(),
        pred.num_keypoints(),
        pred.num_classes(),
        args.out.display()
    );
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let mut config: PipelineConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(bw) = args.center_bandwidth {
        config.voting.center.bandwidth = bw;
    }
    if let Some(bw) = args.keypoint_bandwidth {
        config.voting.keypoint.bandwidth = bw;
    }
    if let Some(n) = args.min_cluster_points {
        config.voting.min_cluster_points = n;
    }
    for bw in [config.voting.center.bandwidth, config.voting.keypoint.bandwidth] {
        if !(bw > 0.0 && bw.is_finite()) {
            return Err(usage(format!("bandwidths must be positive, got {bw}")));
        }
    }

    let scene = load_scene(&args.scene)?;
    let pred = load_prediction(&args.prediction)?;
    pred.check_matches(&scene)?;
    let registry = ModelRegistry::load_dir(&args.registry)?;
    let estimates = run_pipeline(&scene, &pred, &registry, &config)?;
    let records = to_pose_records(scene.frame_id, &estimates);
    save_poses(&records, &args.out)?;

    let failed = estimates.iter().filter(|e| e.pose().is_none()).count();
    println!(
        "{} clusters, {} poses, {failed} failed; written to {}",
        estimates.len(),
        estimates.len() - failed,
        args.out.display()
    );
    for e in &estimates {
        if let Err(reason) = &e.outcome {
            println!("  class {}: {reason}", e.class_id());
        }
    }
    // Errors against the scene's ground truth, matching each pose to the
    // nearest instance of its class.
    let mut worst: Option<(f64, f64)> = None;
    for pose in estimates.iter().filter_map(|e| e.pose().map(|p| (e.class_id(), p))) {
        let nearest = scene
            .instances
            .iter()
            .filter(|inst| inst.class_id == pose.0)
            .min_by(|a, b| {
                pose.1
                    .translation_distance_to(&a.pose)
                    .total_cmp(&pose.1.translation_distance_to(&b.pose))
            });
        if let Some(inst) = nearest {
            let (r, t) = worst.unwrap_or((0.0, 0.0));
            worst = Some((
                r.max(pose.1.rotation_angle_to(&inst.pose)),
                t.max(pose.1.translation_distance_to(&inst.pose)),
            ));
        }
    }
    if let Some((r, t)) = worst {
        println!("max pose error vs ground truth: rotation {r:.3e} rad, translation {t:.3e} m");
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    if !(args.max_threshold > 0.0 && args.max_threshold.is_finite()) {
        return Err(usage("--max-threshold must be positive"));
    }
    let scene = load_scene(&args.scene)?;
    let registry = ModelRegistry::load_dir(&args.registry)?;
    let poses = load_poses(&args.poses)?;
    let records = evaluate(&scene, &poses, &registry)?;
    if records.is_empty() {
        save_results(&records, &args.out)?;
        println!("scene has no instances; wrote an empty results file");
        return Ok(());
    }
    let named = [ACCURACY_THRESHOLD_2CM];
    let column = |f: fn(&hough_pose::metrics::EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let add = AccuracyCurve::compute(&column(|r| r.add), args.max_threshold, &named)?;
    let adds = AccuracyCurve::compute(&column(|r| r.adds), args.max_threshold, &named)?;
    let combined = AccuracyCurve::compute(&column(|r| r.add_s()), args.max_threshold, &named)?;
    let curve_path = sibling_path(&args.out, "curve.csv");
    save_curve(&combined, &curve_path)?;
    save_results(&records, &args.out)?;

    let estimated = records.iter().filter(|r| r.is_estimated()).count();
    println!("{} instances, {estimated} estimated", records.len());
    for (name, curve) in [("ADD", &add), ("ADD-S", &adds), ("ADD(S)", &combined)] {
        let acc = curve.acc_at.values().next().copied().unwrap_or(0.0);
        println!("{name:<7} AUC {:.4}  <2cm {:.4}", curve.auc, acc);
    }
    println!("results: {}, ADD(S) curve: {}", args.out.display(), curve_path.display());
    Ok(())
}

fn check_trials(config_trials: usize, flag: Option<usize>) -> Result<usize, Failure> {
    match flag.unwrap_or(config_trials) {
        0 => Err(usage("trials must be at least 1")),
        n => Ok(n),
    }
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    match args.kind {
        SweepKind::Occlusion => {
            let config: OcclusionSweepConfig = read_json(&args.config)?;
            let trials = check_trials(config.trials, args.trials)?;
            if config.fractions.is_empty() {
                return Err(usage("fractions must not be empty"));
            }
            if let Some(f) = config.fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
                return Err(usage(format!("occlusion fraction {f} outside [0, 1)")));
            }
            config.noise.validate().map_err(|e| usage(e.to_string()))?;
            let registry = ModelRegistry::load_dir(&args.registry)?;
            let rows = occlusion_sweep(&config.scene, &config.noise, &config.fractions, trials, &registry, &config.pipeline)?;
            write_atomic(&args.out, occlusion_to_csv(&rows).as_bytes())?;
            for r in &rows {
                println!("fraction {:.3}: <2cm {:.4} over {} instances", r.fraction, r.acc_2cm, r.records.len());
            }
        }
        SweepKind::Keypoints => {
            let config: KeypointSweepConfig = read_json(&args.config)?;
            let trials = check_trials(config.trials, args.trials)?;
            let methods = config.parsed_methods().map_err(|e| usage(e.to_string()))?;
            config.noise.validate().map_err(|e| usage(e.to_string()))?;
            let registry = ModelRegistry::load_dir(&args.registry)?;
            let rows = keypoint_ablation(&config.scene, &config.noise, &methods, trials, &registry, &config.pipeline)?;
            write_atomic(&args.out, ablation_to_csv(&rows).as_bytes())?;
            for r in &rows {
                println!("{:<6} mean ADD {:.6} m  <2cm {:.4}", r.method, r.mean_add, r.acc_2cm);
            }
        }
    }
    println!("written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests exit 0, parse errors exit 2.
            e.exit();
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads as usize).build_global() {
            eprintln!("error: could not set up the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Keypoints(a) => cmd_keypoints(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(match failure {
                Failure::Usage(_) => 2,
                Failure::Runtime(_) => 1,
            })
        }
    }
}
