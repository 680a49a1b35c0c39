use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leadvel::config::PipelineConfig;
use leadvel::dataset::save_scene;
use leadvel::distance::{estimate_distance_trace, Bandwidth, Estimator};
use leadvel::eval::report::{to_csv, write};
use leadvel::eval::{
    load_inputs, pooled_rmse, prediction_rows, run_ablation, run_ablation_on, AblationSettings,
    AblationSpec, SceneInput,
};
use leadvel::synth::{as_test_scene, contamination_benchmark, generate_scene, ScenarioConfig, ScenarioFile};
use leadvel::tracking::TrackerKind;
use leadvel::velocity::{predict_from_distances, train_model, training_rows, ModelKind, Predictor, TrainedModel};
use leadvel::{BoundingBox, Error, ErrorKind, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "leadvel", version, about = "Lead-vehicle velocity from stereo disparity")]
struct Cli {
    /// Config file: a scenario file for `generate`, the pipeline config
    /// (TOML) for every other command. Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic scenes with ground truth.
    Generate(GenerateArgs),
    /// Propagate the frame-0 box through each scene; writes boxes.csv.
    Track(TrackArgs),
    /// Per-frame lead distance; writes distances.csv.
    Distance(DistanceArgs),
    /// Fit a velocity regressor on train scenes.
    Train(TrainArgs),
    /// Predict lead velocity; writes predictions.csv per scene.
    Predict(PredictArgs),
    /// Train and score one pipeline combination.
    Evaluate(EvaluateArgs),
    /// Score every combination listed in an ablation spec.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the contamination benchmark preset instead of a scenario file.
    #[arg(long)]
    benchmark: bool,
    /// Keep only the frame-0 box and drop velocity/distance annotations.
    #[arg(long)]
    strip_truth: bool,
}

#[derive(Args, Clone)]
struct StageFlags {
    #[arg(long)]
    tracker: Option<TrackerKind>,
    #[arg(long)]
    search_radius: Option<usize>,
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Fixed KDE bandwidth in meters (default: Silverman's rule).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    mode_bin_width: Option<f64>,
    #[arg(long)]
    lags: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args)]
struct TrackArgs {
    /// Scene directory or a directory of scene directories.
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stage: StageFlags,
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stage: StageFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Scene directories or directories of scene directories.
    #[arg(long, num_args = 1..)]
    train: Vec<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stage: StageFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    scenes: PathBuf,
    /// Trained model file; without it gap arithmetic (relvel) is used.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stage: StageFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scene directories or directories of scene directories.
    #[arg(long, num_args = 1..)]
    train: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    test: Vec<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    stage: StageFlags,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            })
        }
        Err(_) => ExitCode::from(3),
    }
}

fn run(cli: Cli) -> Result<()> {
    let command = match cli.command {
        Command::Generate(a) => return generate(cli.config.as_deref(), a),
        other => other,
    };
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match command {
        Command::Generate(_) => unreachable!("handled above"),
        Command::Track(a) => track(&apply(base, &a.stage)?, a),
        Command::Distance(a) => distance(&apply(base, &a.stage)?, a),
        Command::Train(a) => {
            let mut cfg = apply(base, &a.stage)?;
            if let Some(m) = a.model {
                cfg.velocity.model = m;
            }
            train(&cfg, a)
        }
        Command::Predict(a) => predict(&apply(base, &a.stage)?, a),
        Command::Evaluate(a) => {
            let mut cfg = apply(base, &a.stage)?;
            if let Some(m) = a.model {
                cfg.velocity.model = m;
            }
            evaluate(&cfg, a)
        }
        Command::Ablate(a) => ablate(a),
    }
}

fn apply(mut cfg: PipelineConfig, f: &StageFlags) -> Result<PipelineConfig> {
    if let Some(t) = f.tracker {
        cfg.tracking.tracker = t;
    }
    if let Some(r) = f.search_radius {
        cfg.tracking.search_radius_px = r;
    }
    if let Some(e) = f.estimator {
        cfg.distance.estimator = e;
    }
    if let Some(h) = f.bandwidth {
        cfg.distance.bandwidth = Bandwidth::Fixed(h);
    }
    if let Some(w) = f.mode_bin_width {
        cfg.distance.mode_bin_width_m = w;
    }
    if let Some(l) = f.lags {
        cfg.velocity.lags = l;
    }
    if let Some(r) = f.rounds {
        cfg.gbdt.rounds = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(scenario: Option<&Path>, a: GenerateArgs) -> Result<()> {
    if a.benchmark && scenario.is_some() {
        return Err(Error::ConfigInvalid("--benchmark and --config are exclusive".into()));
    }
    let base = match scenario {
        Some(p) => ScenarioFile::parse(&read_text(p)?)?.to_config()?,
        None => ScenarioConfig::default(),
    };
    for i in 0..a.scenes {
        let seed = a.seed + i as u64;
        let cfg = if a.benchmark {
            contamination_benchmark(seed)
        } else {
            ScenarioConfig {
                rng_seed: seed,
                ..base
            }
        };
        let id = format!("scene_{seed:06}");
        let g = generate_scene(&cfg, &id)?;
        let scene = if a.strip_truth { as_test_scene(&g.scene) } else { g.scene };
        let dir = a.out.join(&id);
        save_scene(&scene, &g.images, &dir)?;
        if !a.strip_truth {
            let rows: Vec<TruthCsv> = g
                .truth
                .iter()
                .map(|r| TruthCsv {
                    idx: r.idx,
                    time_s: r.time_s,
                    gap_m: r.gap_m,
                    lead_velocity_mps: r.lead_velocity_mps,
                    ego_velocity_mps: r.ego_velocity_mps,
                    x: r.bbox.x,
                    y: r.bbox.y,
                    w: r.bbox.w,
                    h: r.bbox.h,
                    collision: r.collision,
                })
                .collect();
            write(&dir, "ground_truth.csv", &to_csv(&rows)?)?;
        }
        println!("{}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthCsv {
    idx: usize,
    time_s: f64,
    gap_m: f64,
    lead_velocity_mps: f64,
    ego_velocity_mps: f64,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    collision: bool,
}

#[derive(Serialize)]
struct BoxCsv {
    idx: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    score: Option<f64>,
}

#[derive(Serialize)]
struct DistanceCsv {
    idx: usize,
    distance_m: f64,
    truth_m: Option<f64>,
    carried: bool,
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigInvalid(format!("{} not found", p.display())),
        _ => Error::io(p, e),
    })
}

fn tracked(cfg: &PipelineConfig, inputs: &[SceneInput]) -> Result<Vec<Vec<leadvel::tracking::TrackedBox>>> {
    let t = cfg.tracking.tracker.build(cfg.tracking.search_radius_px);
    inputs
        .iter()
        .map(|s| t.track(&s.scene, s.images.as_deref()))
        .collect()
}

fn load_for(cfg: &PipelineConfig, paths: &[PathBuf]) -> Result<Vec<SceneInput>> {
    let inputs = load_inputs(paths, cfg.tracking.tracker == TrackerKind::Ncc)?;
    if inputs.is_empty() {
        return Err(Error::Empty("no scene directories found".into()));
    }
    Ok(inputs)
}

fn bboxes(t: &[leadvel::tracking::TrackedBox]) -> Vec<BoundingBox> {
    t.iter().map(|b| b.bbox).collect()
}

fn track(cfg: &PipelineConfig, a: TrackArgs) -> Result<()> {
    let inputs = load_for(cfg, &[a.scenes])?;
    for (s, boxes) in inputs.iter().zip(tracked(cfg, &inputs)?) {
        let rows: Vec<BoxCsv> = boxes
            .iter()
            .enumerate()
            .map(|(idx, b)| BoxCsv {
                idx,
                x: b.bbox.x,
                y: b.bbox.y,
                w: b.bbox.w,
                h: b.bbox.h,
                score: b.score,
            })
            .collect();
        write(&a.out.join(&s.scene.scene_id), "boxes.csv", &to_csv(&rows)?)?;
        let held = boxes.iter().filter(|b| b.degenerate()).count();
        println!("{}: {} frames, {held} held", s.scene.scene_id, boxes.len());
    }
    Ok(())
}

fn distance(cfg: &PipelineConfig, a: DistanceArgs) -> Result<()> {
    let inputs = load_for(cfg, &[a.scenes])?;
    let dcfg = cfg.distance_config();
    let mut scored = Vec::new();
    for (s, boxes) in inputs.iter().zip(tracked(cfg, &inputs)?) {
        let trace = estimate_distance_trace(&s.scene, &bboxes(&boxes), &dcfg)?;
        let rows: Vec<DistanceCsv> = s
            .scene
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| DistanceCsv {
                idx: f.idx,
                distance_m: trace.distances_m[t],
                truth_m: f.lead_distance_m,
                carried: trace.carried[t],
            })
            .collect();
        write(&a.out.join(&s.scene.scene_id), "distances.csv", &to_csv(&rows)?)?;
        if let Some(truth) = s.scene.lead_distance_truth() {
            scored.push((trace.distances_m, truth));
        }
    }
    if !scored.is_empty() {
        let r = pooled_rmse(scored.iter().map(|(p, t)| (p.as_slice(), t.as_slice())))?;
        println!("distance rmse {r:.4} m over {} scenes", scored.len());
    }
    Ok(())
}

fn train(cfg: &PipelineConfig, a: TrainArgs) -> Result<()> {
    if a.train.is_empty() {
        return Err(Error::ConfigInvalid("--train is required".into()));
    }
    let inputs = load_for(cfg, &a.train)?;
    let dcfg = cfg.distance_config();
    let lags = cfg.velocity.lags;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (s, boxes) in inputs.iter().zip(tracked(cfg, &inputs)?) {
        let trace = estimate_distance_trace(&s.scene, &bboxes(&boxes), &dcfg)?;
        let (rows, targets) = training_rows(&s.scene, &trace.distances_m, lags)?;
        x.extend(rows);
        y.extend(targets);
    }
    let model = train_model(cfg.velocity.model, &x, &y, lags, &cfg.gbdt)?;
    write(
        a.out.parent().unwrap_or(Path::new(".")),
        &a.out.file_name().map_or("model.json".into(), |n| n.to_string_lossy().into_owned()),
        &model.to_json(),
    )?;
    println!("{} model trained on {} frames -> {}", model.kind(), y.len(), a.out.display());
    Ok(())
}

fn predict(cfg: &PipelineConfig, a: PredictArgs) -> Result<()> {
    let model = match &a.model_file {
        Some(p) => Some(TrainedModel::from_json(&read_text(p)?)?),
        None => None,
    };
    let (predictor, kind, lags) = match &model {
        Some(m) => (Predictor::Trained(m), m.kind(), m.lags),
        None => (Predictor::Relvel, ModelKind::Relvel, cfg.velocity.lags),
    };
    let inputs = load_for(cfg, &[a.scenes])?;
    let dcfg = cfg.distance_config();
    let mut scored = Vec::new();
    for (s, boxes) in inputs.iter().zip(tracked(cfg, &inputs)?) {
        let trace = estimate_distance_trace(&s.scene, &bboxes(&boxes), &dcfg)?;
        let pred = predict_from_distances(&s.scene, &trace.distances_m, predictor)?;
        let rows = prediction_rows(&s.scene, Some(&boxes), &trace, &pred, kind, lags);
        write(&a.out.join(&s.scene.scene_id), "predictions.csv", &to_csv(&rows)?)?;
        if let Some(truth) = s.scene.lead_velocity_truth() {
            scored.push((pred, truth));
        }
    }
    if !scored.is_empty() {
        let r = pooled_rmse(scored.iter().map(|(p, t)| (p.as_slice(), t.as_slice())))?;
        println!("velocity rmse {r:.4} m/s over {} scenes", scored.len());
    }
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, a: EvaluateArgs) -> Result<()> {
    if a.test.is_empty() {
        return Err(Error::ConfigInvalid("--test is required".into()));
    }
    let settings = AblationSettings::from_pipeline(cfg);
    let test = load_for(cfg, &a.test)?;
    let train = if settings.needs_training() {
        load_inputs(&a.train, settings.needs_images())?
    } else {
        Vec::new()
    };
    let report = run_ablation_on(&settings, &train, &test)?;
    print!("{}", report.to_table());
    if let Some(out) = a.out {
        report.write_to(&out)?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let spec = AblationSpec::load(&a.spec)?;
    let report = run_ablation(&spec)?;
    print!("{}", report.to_table());
    if let Some(out) = a.out {
        report.write_to(&out)?;
    }
    Ok(())
}
