use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use roe_core::config::{RunConfig, SynthPreset};
use roe_core::pipeline;
use roe_core::{ApMode, Error, SuppressionMethod};

#[derive(Parser, Debug)]
#[command(
    name = "roe",
    version,
    about = "Class-wise expert ensembling of object detectors"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-class AP of every pool detector.
    Eval(Common),
    /// Fold-averaged per-class AP matrix and its row ranking.
    Rank(Common),
    /// Select experts per class and fuse their detections.
    Ensemble(Common),
    /// Class-wise ensembling against the greedy whole-model baseline.
    Compare(Common),
    /// mAP and selection statistics across several deltas.
    Sweep(Common),
    /// Write a synthetic pool and ground truth.
    Synth(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long = "gt")]
    ground_truth: Option<PathBuf>,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    /// IoU thresholds; AP is averaged over them.
    #[arg(long = "iou", value_delimiter = ',')]
    iou_thresholds: Option<Vec<f64>>,
    /// all-point or eleven-point
    #[arg(long)]
    ap_mode: Option<ApMode>,
    /// Box budget per class per image.
    #[arg(long)]
    cap: Option<usize>,
    /// hard, linear or gaussian
    #[arg(long = "nms-method")]
    nms_method: Option<SuppressionMethod>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "nms-cutoff")]
    nms_cutoff: Option<f64>,
    #[arg(long)]
    score_floor: Option<f64>,
    /// JSON array of image-id lists.
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Precomputed ranking matrix CSV.
    #[arg(long)]
    ranking: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Similarity thresholds for the baseline.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// complementary or oracle
    #[arg(long)]
    preset: Option<SynthPreset>,
    #[arg(long)]
    images: Option<usize>,
}

impl Common {
    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        if self.manifest.is_some() {
            cfg.manifest = self.manifest;
        }
        if self.ground_truth.is_some() {
            cfg.ground_truth = self.ground_truth;
        }
        if self.folds.is_some() {
            cfg.folds = self.folds;
        }
        if self.ranking.is_some() {
            cfg.ranking = self.ranking;
        }
        set!(self.output_dir => cfg.output_dir);
        set!(self.iou_thresholds => cfg.iou_thresholds);
        set!(self.ap_mode => cfg.ap_mode);
        set!(self.cap => cfg.cap);
        set!(self.nms_method => cfg.suppression.method);
        set!(self.sigma => cfg.suppression.sigma);
        set!(self.nms_cutoff => cfg.suppression.iou_cutoff);
        set!(self.score_floor => cfg.suppression.score_floor);
        set!(self.delta => cfg.delta);
        set!(self.deltas => cfg.deltas);
        set!(self.thresholds => cfg.similarity_thresholds);
        set!(self.seed => cfg.seed);
        set!(self.preset => cfg.preset);
        set!(self.images => cfg.num_images);
    }
}

impl Command {
    /// Moves the subcommand's flags into `cfg`, leaving an empty flag set.
    fn take_flags(self, cfg: &mut RunConfig) -> Command {
        let (flags, rebuild): (Common, fn(Common) -> Command) = match self {
            Command::Eval(c) => (c, Command::Eval),
            Command::Rank(c) => (c, Command::Rank),
            Command::Ensemble(c) => (c, Command::Ensemble),
            Command::Compare(c) => (c, Command::Compare),
            Command::Sweep(c) => (c, Command::Sweep),
            Command::Synth(c) => (c, Command::Synth),
        };
        flags.apply(cfg);
        rebuild(Common::default())
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn run(command: Command, cfg: &RunConfig) -> roe_core::Result<()> {
    match command {
        Command::Eval(_) => {
            for r in pipeline::cmd_eval(cfg)? {
                println!("detector={} map={:.6}", r.detector_id, r.map);
            }
        }
        Command::Rank(_) => {
            let m = pipeline::cmd_rank(cfg)?;
            println!(
                "classes={} detectors={} folds={}",
                m.num_classes(),
                m.num_detectors(),
                m.folds()
            );
        }
        Command::Ensemble(_) => {
            let s = pipeline::cmd_ensemble(cfg)?;
            println!("{}", s.line());
        }
        Command::Compare(_) => {
            for r in pipeline::cmd_compare(cfg)? {
                println!(
                    "{} knob={} models={} map={:.6}",
                    r.method, r.knob, r.models_selected, r.map
                );
            }
        }
        Command::Sweep(_) => {
            for r in pipeline::cmd_sweep(cfg)? {
                println!(
                    "delta={}{} map={:.6} selected={}",
                    r.delta,
                    if r.is_default { " (default)" } else { "" },
                    r.map,
                    r.total_selected
                );
            }
        }
        Command::Synth(_) => {
            let s = pipeline::cmd_synth(cfg)?;
            println!(
                "wrote {} detectors and {} ground-truth boxes; manifest at {}",
                s.detectors,
                s.ground_truth_boxes,
                s.manifest_path.display()
            );
        }
    }
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::from_json_file(path) {
            Ok(c) => c,
            Err(e) => return exit_for(&e),
        },
        None => RunConfig::default(),
    };
    let Cli {
        command, threads, ..
    } = cli;
    let command = command.take_flags(&mut cfg);
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Err(e) = cfg.validate() {
        return exit_for(&e);
    }

    let result = match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                info!("running on {n} threads");
                pool.install(|| run(command, &cfg))
            }
            Err(e) => Err(Error::InvalidConfig(format!("thread pool: {e}"))),
        },
        None => run(command, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
