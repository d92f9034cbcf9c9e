use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egopose::classify::NEUTRAL_SITTING_PROBABILITY;
use egopose::config::PipelineConfig;
use egopose::error::ErrorKind;
use egopose::eval::joint_errors;
use egopose::io;
use egopose::pipeline::{
    cluster_sequences, infer, to_local, training_set, Classifier, ClassifierKind, InferenceInput, Solver,
};
use egopose::skeleton::PoseSequence;
use egopose::synth::{generate, MotionScript};
use egopose::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "egopose", version, about = "Infer a camera wearer's 3D pose from egocentric camera motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion capture and camera motion dataset.
    Synth(SynthArgs),
    /// Cluster training poses and build the exemplar bank.
    Cluster(ClusterArgs),
    /// Train the per-frame cluster classifier.
    Train(TrainArgs),
    /// Infer a pose sequence for a motion file.
    Infer(InferArgs),
    /// Score predicted poses against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig, Error> {
        match &self.config {
            Some(path) => PipelineConfig::from_json_str(&io::read_text(path)?),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Motion script JSON.
    #[arg(long, required_unless_present = "random_frames", conflicts_with = "random_frames")]
    script: Option<PathBuf>,
    /// Use a random script of at least this many frames instead.
    #[arg(long)]
    random_frames: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the script's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct ClusterArgs {
    /// Training pose files, one per sequence.
    #[arg(long, num_args = 1.., required = true)]
    poses: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cluster model output.
    #[arg(long)]
    out: PathBuf,
    /// Exemplar bank output; defaults to bank.json next to the model.
    #[arg(long)]
    bank_out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct TrainArgs {
    /// Motion files (homographies or correspondences), one per bank
    /// sequence and in the same order.
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value = "forest")]
    classifier: ClassifierKind,
    #[arg(long)]
    trees: Option<usize>,
    /// Report leave-one-out accuracy of a knn model.
    #[arg(long)]
    loo: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct InferArgs {
    /// Motion file (homographies or correspondences).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    cluster_model: PathBuf,
    #[arg(long)]
    classifier_model: Option<PathBuf>,
    /// Per-frame sitting probabilities; 0.5 everywhere when absent.
    #[arg(long)]
    static_h: Option<PathBuf>,
    #[arg(long, default_value = "paper")]
    solver: Solver,
    /// Path output (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Predicted poses; defaults to `<out stem>.poses.jsonl`.
    #[arg(long)]
    poses_out: Option<PathBuf>,
    /// Energy breakdown; defaults to `<out stem>.energy.json`.
    #[arg(long)]
    energy_out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    code: &'a str,
    message: String,
}

fn fail(code: &str, message: String, exit: u8) -> ExitCode {
    let text = serde_json::to_string(&ErrorJson { code, message }).expect("error message serializes");
    eprintln!("{text}");
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string().trim_end().to_string(), 2),
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => run_infer(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let exit = match e.kind() {
                ErrorKind::Data => 3,
                ErrorKind::Degenerate => 4,
            };
            fail(e.code(), e.to_string(), exit)
        }
    }
}

fn synth(a: SynthArgs) -> Result<(), Error> {
    let cfg = a.config.load()?;
    let mut script = match (&a.script, a.random_frames) {
        (Some(path), _) => io::read_json::<MotionScript>(path)?,
        (None, Some(frames)) => MotionScript::random(frames, a.seed.unwrap_or(0)),
        (None, None) => unreachable!("clap requires one of --script and --random-frames"),
    };
    if let Some(seed) = a.seed {
        script.seed = seed;
    }
    let out = generate(&script, &cfg.intrinsics.camera()?)?;
    let m = io::write_synth(&a.out_dir, &out, &script, &cfg.intrinsics)?;
    println!("wrote {} frames to {}", m.frames, a.out_dir.display());
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<(), Error> {
    let mut cfg = a.config.load()?;
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let seqs = a.poses.iter().map(|p| io::read_poses(p)).collect::<Result<Vec<_>, _>>()?;
    let c = cluster_sequences(&seqs, &cfg)?;
    io::write_cluster_model(&a.out, &c.model)?;
    let bank_out = a.bank_out.unwrap_or_else(|| sibling(&a.out, "bank.json"));
    io::write_bank(&bank_out, &c.bank, "bank_poses.jsonl")?;
    let sitting = c
        .model
        .labels()
        .map_or(0, |l| l.iter().filter(|&&x| x == egopose::clustering::ClusterLabel::SittingLike).count());
    println!(
        "k-means objective {:.6} after {} iterations{}",
        c.kmeans.objective(),
        c.kmeans.objective_history.len(),
        if c.kmeans.converged { "" } else { " (not converged)" }
    );
    println!(
        "{} clusters ({sitting} sitting-like, hip threshold {:.4}), bank of {} poses in {} sequences",
        c.model.k(),
        c.sit_threshold,
        c.bank.len(),
        seqs.len()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = a.config.load()?;
    cfg.trees = a.trees.unwrap_or(cfg.trees);
    cfg.validate()?;
    let bank = io::read_bank(&a.bank)?;
    let sequences = bank.sequence_ranges().len();
    if a.features.len() != sequences {
        return Err(Error::LengthMismatch {
            what: "motion files (one per bank sequence)",
            expected: sequences,
            actual: a.features.len(),
        });
    }
    let motions = a
        .features
        .iter()
        .map(|p| io::read_motion(p)?.homographies())
        .collect::<Result<Vec<_>, _>>()?;
    let set = training_set(&bank, &motions, &cfg)?;
    let clf = Classifier::train(a.classifier, &set, bank.k(), &cfg)?;
    io::write_json(&a.out, &clf.to_json())?;
    let kind = if matches!(clf, Classifier::Forest(_)) { "forest" } else { "knn" };
    println!("trained {kind} classifier on {} windows", set.features.len());
    match &clf {
        Classifier::Forest(f) => match f.oob_accuracy() {
            Some(acc) => println!("out-of-bag accuracy {acc:.4}"),
            None => println!("out-of-bag accuracy undefined (every sample was in every bootstrap)"),
        },
        Classifier::Knn(k) if a.loo => println!("leave-one-out accuracy {:.4}", k.leave_one_out_accuracy()?),
        Classifier::Knn(_) => {}
    }
    Ok(())
}

fn run_infer(a: InferArgs) -> Result<(), Error> {
    let cfg = a.config.load()?;
    let bank = io::read_bank(&a.bank)?;
    let model = io::read_cluster_model(&a.cluster_model)?;
    let labels = model
        .labels()
        .ok_or_else(|| Error::InvalidParameter("cluster model has no sit/stand labels".into()))?;
    let hs = io::read_motion(&a.input)?.homographies()?;
    let static_h = match &a.static_h {
        Some(path) => io::read_static_h(path)?,
        None => vec![NEUTRAL_SITTING_PROBABILITY; hs.len() + 1],
    };
    let classifier = match (&a.classifier_model, a.solver.needs_classifier()) {
        (Some(path), true) => Some(Classifier::from_json_str(&io::read_text(path)?)?),
        (None, true) => {
            return Err(Error::InvalidParameter(format!(
                "solver {} needs --classifier-model",
                a.solver
            )))
        }
        (_, false) => None,
    };
    let input = InferenceInput {
        bank: &bank,
        labels,
        classifier: classifier.as_ref(),
        homographies: &hs,
        static_h: &static_h,
    };
    let r = infer(&input, a.solver, &cfg)?;

    let poses_out = a.poses_out.unwrap_or_else(|| with_suffix(&a.out, "poses.jsonl"));
    io::write_poses(&poses_out, &r.poses)?;
    let exemplars = r.exemplars.clone().unwrap_or_default();
    io::write_path(&a.out, &exemplars, &bank)?;
    if let Some(path) = &r.path {
        let energy_out = a.energy_out.unwrap_or_else(|| with_suffix(&a.out, "energy.json"));
        io::write_energy(&energy_out, path)?;
        let e = path.energy;
        println!(
            "energy {:.6} (U {:.6}, T {:.6}, V {:.6}, S {:.6})",
            e.total, e.unary, e.step, e.speed, e.stationary
        );
    }
    let sitting = r.sitting.iter().filter(|&&s| s).count();
    let mean_candidates = r.candidates.iter().sum::<usize>() as f64 / r.candidates.len() as f64;
    println!(
        "{} frames, solver {}, {sitting} sitting, {mean_candidates:.1} candidates/frame, {} repaired frames",
        r.timing.frames, r.solver, r.repaired_frames
    );
    let t = &r.timing;
    let ms = |s: f64| 1e3 * t.per_frame(s);
    println!(
        "ms/frame: features {:.3}, classify {:.3}, costs {:.3}, solve {:.3}, total {:.3}",
        ms(t.features),
        ms(t.classify),
        ms(t.costs),
        ms(t.solve),
        ms(t.total)
    );
    let per_frame = t.per_frame(t.total);
    if per_frame > cfg.frame_budget_s {
        eprintln!(
            "warning: {per_frame:.3} s/frame exceeds the {} s/frame budget",
            cfg.frame_budget_s
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Error> {
    let cfg = a.config.load()?;
    let local = |path: &Path| -> Result<PoseSequence, Error> {
        let seq = io::read_poses(path)?;
        PoseSequence::new(to_local(seq.poses(), &cfg)?, seq.frame_rate_hz())
    };
    let report = joint_errors(&local(&a.pred)?, &local(&a.gt)?)?;
    io::write_json(&a.out, &report)?;
    println!("{report}");
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

/// `run/path.jsonl` with suffix `poses.jsonl` becomes `run/path.poses.jsonl`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    sibling(path, &format!("{stem}.{suffix}"))
}
