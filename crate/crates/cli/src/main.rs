//! Command-line surface of the repetitive-motion analytics engine.
//!
//! Subcommands: `synth` (generate corpora and scenes), `features` (dump
//! per-window feature vectors), `train` (produce the model bundle), `run`
//! (the full pipeline to a report), `evaluate` (metrics from a report plus
//! ground truth) and `gradcheck` (verify the network gradients).
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error, 3 internal.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repmotion::config::PipelineConfig;
use repmotion::formats::{self, FormatError, GroundTruthRecord, ModelBundle};
use repmotion::nn;
use repmotion::pipeline::{self, PipelineError};
use repmotion::report::AnalyticsReport;
use repmotion::synth::{self, MotionKind};
use repmotion::trajectory::{ingest_trajectories, BoundingBox};

#[derive(Parser)]
#[command(name = "repmotion", version, about = "Repetitive-motion exercise analytics")]
struct Cli {
    /// Seed override; applies to every seeded stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration file (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus or scene with ground truth.
    Synth(SynthArgs),
    /// Extract per-window feature vectors from a trajectory file.
    Features(FeaturesArgs),
    /// Train detector, regressor and recognizer into a model bundle.
    Train(TrainArgs),
    /// Run the full pipeline and write the analytics report.
    Run(RunArgs),
    /// Compute evaluation metrics from a report and ground truth.
    Evaluate(EvaluateArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// What to generate: "training" (balanced labeled corpus) or "scene"
    /// (multi-station gym scene with boxes).
    #[arg(long)]
    preset: String,
    /// Output directory for trajectories.jsonl, truth.jsonl (and boxes.json
    /// for scenes).
    #[arg(long)]
    out: PathBuf,
    /// Trajectories per motion kind for the training preset.
    #[arg(long, default_value_t = 60)]
    count: usize,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Trajectory JSON-lines file.
    #[arg(long)]
    trajectories: PathBuf,
    /// Ground-truth JSON-lines file with per-trajectory labels.
    #[arg(long)]
    truth: PathBuf,
    /// Where to write the model bundle (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Trajectory JSON-lines file.
    #[arg(long)]
    input: PathBuf,
    /// Station bounding-box configuration (JSON).
    #[arg(long)]
    boxes: PathBuf,
    /// Model bundle produced by `train`.
    #[arg(long)]
    models: PathBuf,
    /// Optional ground truth; adds an evaluation block to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Metrics output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Maximum relative error accepted.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

/// Error with its process exit code.
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> CliError {
        CliError { code: 1, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::runtime(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> CliError {
        match e {
            FormatError::Io(inner) => CliError::runtime(inner.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> CliError {
        CliError { code: e.exit_code(), message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code.clamp(0, 255) as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Synth(args) => cmd_synth(args, &config),
        Command::Features(args) => cmd_features(args, &config),
        Command::Train(args) => cmd_train(args, &config),
        Command::Run(args) => cmd_run(args, &config),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Gradcheck(args) => cmd_gradcheck(args, &config),
    }
}

/// Defaults, overridden by the config file, overridden by flags.
fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig, CliError> {
    let config: PipelineConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("invalid config {}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    // One seed governs every stage; the flag beats the file.
    let seed = seed.unwrap_or(config.seed);
    let config = config.with_seed(seed);
    config.validate().map_err(CliError::validation)?;
    Ok(config)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn read_truth(path: &Path) -> Result<Vec<GroundTruthRecord>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::validation(format!("cannot open truth {}: {e}", path.display())))?;
    Ok(formats::read_ground_truth(BufReader::new(file))?)
}

fn cmd_synth(args: SynthArgs, config: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let (trajectories, truths, boxes) = match args.preset.as_str() {
        "training" => {
            // Repetition periods of 1.7-4 s: the cadence band in which the
            // 1 s combined-trajectory smoothing keeps all five exercise
            // shapes recognizable. Mixing in much faster repetitions would
            // make each class span wildly different cycle counts per window,
            // which the default training budget does not fit well.
            let spec = synth::CorpusSpec {
                kinds: MotionKind::EXERCISE_KINDS
                    .iter()
                    .chain(MotionKind::WALK_KINDS.iter())
                    .copied()
                    .collect(),
                n_per_kind: args.count,
                frequency_hz: (0.25, 0.6),
                seed: config.seed,
                ..synth::CorpusSpec::default()
            };
            let corpus = synth::generate_corpus(&spec)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let mut trajectories = Vec::new();
            let mut truths = Vec::new();
            for item in corpus.items {
                truths.push(GroundTruthRecord {
                    id: Some(item.trajectory.id.clone()),
                    region: None,
                    class: Some(item.truth.class.name().to_string()),
                    start_frame: item.trajectory.start_frame,
                    end_frame: item.trajectory.end_frame(),
                    reps: item.truth.reps,
                });
                trajectories.push(item.trajectory);
            }
            (trajectories, truths, None)
        }
        "scene" => {
            let (scene_spec, boxes) = demo_scene(config.seed);
            let scene = synth::generate_scene(&scene_spec)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let mut truths: Vec<GroundTruthRecord> = scene
                .trajectory_truths
                .iter()
                .map(|t| GroundTruthRecord {
                    id: Some(t.id.clone()),
                    region: None,
                    class: Some(t.class.name().to_string()),
                    start_frame: t.start_frame,
                    end_frame: t.end_frame,
                    reps: t.reps,
                })
                .collect();
            truths.extend(scene.exercise_truths.iter().map(|e| GroundTruthRecord {
                id: None,
                region: Some(e.box_id),
                class: Some(e.class.name().to_string()),
                start_frame: e.start_frame,
                end_frame: e.end_frame,
                reps: e.reps,
            }));
            (scene.trajectories, truths, Some(boxes))
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown preset '{other}'; expected 'training' or 'scene'"
            )))
        }
    };

    let traj_path = args.out.join("trajectories.jsonl");
    formats::write_trajectories(create_file(&traj_path)?, &trajectories)?;
    let truth_path = args.out.join("truth.jsonl");
    formats::write_ground_truth(create_file(&truth_path)?, &truths)?;
    if let Some(boxes) = boxes {
        let box_path = args.out.join("boxes.json");
        formats::write_boxes(create_file(&box_path)?, &boxes)?;
    }
    eprintln!(
        "wrote {} trajectories and {} truth records to {}",
        trajectories.len(),
        truths.len(),
        args.out.display()
    );
    Ok(())
}

/// The bundled demonstration scene: three exercises over two stations (two
/// of them sharing a station back-to-back) plus two walking confounders.
/// Exercise durations stay within the repetition regressor's training
/// envelope (trajectory durations up to the keypoint lifespan).
fn demo_scene(seed: u64) -> (synth::SceneSpec, Vec<BoundingBox>) {
    let boxes = vec![
        BoundingBox { id: 1, x_min: 0.0, y_min: 0.0, x_max: 220.0, y_max: 240.0 },
        BoundingBox { id: 2, x_min: 320.0, y_min: 0.0, x_max: 560.0, y_max: 240.0 },
    ];
    let spec = synth::SceneSpec {
        exercises: vec![
            synth::SceneExercise {
                kind: MotionKind::SinusoidY,
                frequency_hz: 0.6,
                amplitude_px: 55.0,
                phase_deg: 0.0,
                center: (105.0, 115.0),
                box_id: 1,
                start_s: 0.0,
                duration_s: 11.0,
                keypoints: 8,
            },
            synth::SceneExercise {
                kind: MotionKind::Circle,
                frequency_hz: 0.5,
                amplitude_px: 45.0,
                phase_deg: 120.0,
                center: (430.0, 110.0),
                box_id: 2,
                start_s: 2.0,
                duration_s: 10.0,
                keypoints: 7,
            },
            synth::SceneExercise {
                kind: MotionKind::SinusoidX,
                frequency_hz: 0.55,
                amplitude_px: 50.0,
                phase_deg: 45.0,
                center: (450.0, 140.0),
                box_id: 2,
                start_s: 16.0,
                duration_s: 11.0,
                keypoints: 7,
            },
        ],
        walks: vec![
            synth::SceneWalk {
                kind: MotionKind::RandomWalk,
                center: (270.0, 320.0),
                start_s: 1.0,
                duration_s: 9.0,
            },
            synth::SceneWalk {
                kind: MotionKind::LinearWalk,
                center: (200.0, 400.0),
                start_s: 12.0,
                duration_s: 8.0,
            },
        ],
        seed,
        ..synth::SceneSpec::default()
    };
    (spec, boxes)
}

fn cmd_features(args: FeaturesArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", args.input.display())))?;
    let outcome = ingest_trajectories(BufReader::new(file), config.max_lifespan_s)?;
    let mut writer = create_file(&args.out)?;
    let mut windows = 0usize;
    for t in &outcome.accepted {
        let prepared = pipeline::prepare_windows(t, config);
        for ((start, end), feature) in prepared.spans.iter().zip(&prepared.features) {
            let line = serde_json::json!({
                "id": t.id,
                "start_frame": start,
                "end_frame": end,
                "features": feature.map(|f| f.values().to_vec()),
            });
            serde_json::to_writer(&mut writer, &line)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            writer.write_all(b"\n")?;
            windows += 1;
        }
    }
    writer.flush()?;
    eprintln!(
        "extracted {windows} windows from {} trajectories ({} rejected, {} parse errors)",
        outcome.accepted.len(),
        outcome.rejected.len(),
        outcome.parse_errors.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let file = fs::File::open(&args.trajectories).map_err(|e| {
        CliError::validation(format!("cannot open {}: {e}", args.trajectories.display()))
    })?;
    let outcome = ingest_trajectories(BufReader::new(file), config.max_lifespan_s)?;
    let truths = read_truth(&args.truth)?;
    let (bundle, summary) = pipeline::train_models(&outcome.accepted, &truths, config)?;
    let mut writer = create_file(&args.out)?;
    writer.write_all(bundle.to_json().as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    for line in summary.lines() {
        println!("{line}");
    }
    eprintln!("wrote model bundle to {}", args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", args.input.display())))?;
    let outcome = ingest_trajectories(BufReader::new(file), config.max_lifespan_s)?;

    let boxes_file = fs::File::open(&args.boxes)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", args.boxes.display())))?;
    let boxes = formats::read_boxes(boxes_file)?;

    let bundle_text = fs::read_to_string(&args.models)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", args.models.display())))?;
    let bundle = ModelBundle::from_json(&bundle_text)?;

    let truth = args.truth.as_deref().map(read_truth).transpose()?;

    let report = pipeline::run_pipeline(&outcome, &boxes, &bundle, config, truth.as_deref())?;
    let mut writer = create_file(&args.out)?;
    writer.write_all(report.to_json().as_bytes())?;
    writer.flush()?;
    eprintln!(
        "report: {} trajectories, {} segments, {} clusters -> {}",
        report.trajectories.len(),
        report.segments.len(),
        report.clusters.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.report)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", args.report.display())))?;
    let report = AnalyticsReport::from_json(&text).map_err(CliError::validation)?;
    let truths = read_truth(&args.truth)?;
    let metrics = repmotion::eval::evaluate(&report, &truths)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let mut json = serde_json::to_string_pretty(&metrics).map_err(|e| CliError::runtime(e.to_string()))?;
    json.push('\n');
    match args.out {
        Some(path) => {
            let mut writer = create_file(&path)?;
            writer.write_all(json.as_bytes())?;
            writer.flush()?;
            eprintln!("wrote metrics to {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let mut failures = 0;
    for (name, error) in nn::gradient_check_pipeline_architectures(config.seed) {
        let ok = error <= args.tolerance;
        println!(
            "{}: max relative error {:.3e} {}",
            name,
            error,
            if ok { "ok" } else { "FAILED" }
        );
        if !ok {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::runtime(format!("{failures} gradient check(s) failed")));
    }
    Ok(())
}
