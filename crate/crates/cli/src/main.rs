mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Pooling-based salient object detection: train, infer, evaluate, ablate,
/// benchmark and generate synthetic data.
#[derive(Parser, Debug)]
#[command(name = "poolnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write per-epoch and final checkpoints.
    Train(TrainCmd),
    /// Write sigmoid saliency maps (and edge maps when enabled) as 8-bit PGM.
    Infer(InferCmd),
    /// Score predicted maps against ground truth and write a metrics CSV.
    Eval(EvalCmd),
    /// Train and score all six PPM/GGF/FAM combinations.
    Ablate(AblateCmd),
    /// Measure forward latency.
    Bench(BenchCmd),
    /// Generate a synthetic saliency or edge dataset.
    Synth(SynthCmd),
}

/// Settings shared by commands that build a model.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// `key = value` configuration file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for initialisation, augmentation and sampling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Width preset.
    #[arg(long, value_name = "desk|paper")]
    preset: Option<String>,
    /// Five backbone stage widths, comma-separated.
    #[arg(long, value_name = "LIST")]
    backbone_widths: Option<String>,
    /// Four top-down widths (levels 2..5), comma-separated.
    #[arg(long, value_name = "LIST")]
    pyramid_channels: Option<String>,
    /// Three edge residual widths (levels 2..4), comma-separated.
    #[arg(long, value_name = "LIST")]
    edge_widths: Option<String>,
    /// Pyramid pooling module on C5.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    enable_ppm: Option<String>,
    /// Global guiding flows into every level.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    enable_ggf: Option<String>,
    /// Feature aggregation modules after each fusion.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    enable_fam: Option<String>,
    /// Edge branch for joint training.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    enable_edge: Option<String>,
    /// FAM pooling rates, comma-separated.
    #[arg(long, value_name = "LIST")]
    fam_rates: Option<String>,
    /// PPM adaptive output sizes, comma-separated.
    #[arg(long, value_name = "LIST")]
    ppm_sizes: Option<String>,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<String>,
    /// L2 weight decay added to the gradient.
    #[arg(long)]
    weight_decay: Option<String>,
    /// Number of epochs.
    #[arg(long)]
    epochs: Option<String>,
    /// First epoch (zero-based) trained at the reduced rate.
    #[arg(long)]
    lr_drop_epoch: Option<String>,
    /// Divisor applied to the learning rate at the drop.
    #[arg(long)]
    lr_drop_factor: Option<String>,
    /// Samples per optimizer step.
    #[arg(long)]
    batch_size: Option<String>,
    /// Alternate saliency and edge steps (requires --enable-edge).
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    joint_edge: Option<String>,
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Saliency training manifest.
    #[arg(long, value_name = "FILE")]
    saliency_manifest: Option<PathBuf>,
    /// Edge training manifest (joint mode).
    #[arg(long, value_name = "FILE")]
    edge_manifest: Option<PathBuf>,
    /// Directory for checkpoints, the log and the resolved config.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferCmd {
    #[command(flatten)]
    model: ModelFlags,
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Manifest of input images.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Directory for the maps.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalCmd {
    /// Directory of predicted maps named after the input images.
    #[arg(long, value_name = "DIR")]
    pred_dir: PathBuf,
    /// Manifest with the ground truth.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Metrics CSV path (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateCmd {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Saliency training manifest.
    #[arg(long, value_name = "FILE")]
    saliency_manifest: Option<PathBuf>,
    /// Manifest to score on [default: the training manifest].
    #[arg(long, value_name = "FILE")]
    eval_manifest: Option<PathBuf>,
    /// Seeds per row, starting at --seed; the median is reported.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Table CSV path (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchCmd {
    #[command(flatten)]
    model: ModelFlags,
    /// Checkpoint to load [default: random initialisation].
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Input width.
    #[arg(long, default_value_t = 400)]
    width: usize,
    /// Input height.
    #[arg(long, default_value_t = 300)]
    height: usize,
    /// Timed iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Untimed warm-up iterations.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Saliency,
    Edge,
}

#[derive(Args, Debug)]
struct SynthCmd {
    /// Dataset type.
    #[arg(long, value_enum, default_value_t = Kind::Saliency)]
    kind: Kind,
    /// Number of images.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination directory.
    #[arg(long, value_name = "DIR")]
    output_dir: PathBuf,
}

fn push(pairs: &mut Vec<(String, String)>, key: &str, value: &Option<impl ToString>) {
    if let Some(v) = value {
        pairs.push((key.to_owned(), v.to_string()));
    }
}

impl ModelFlags {
    fn pairs(&self, out: &mut Vec<(String, String)>) {
        push(out, "seed", &self.seed);
        push(out, "preset", &self.preset);
        push(out, "backbone_widths", &self.backbone_widths);
        push(out, "pyramid_channels", &self.pyramid_channels);
        push(out, "edge_widths", &self.edge_widths);
        push(out, "enable_ppm", &self.enable_ppm);
        push(out, "enable_ggf", &self.enable_ggf);
        push(out, "enable_fam", &self.enable_fam);
        push(out, "enable_edge", &self.enable_edge);
        push(out, "fam_rates", &self.fam_rates);
        push(out, "ppm_sizes", &self.ppm_sizes);
    }
}

impl TrainFlags {
    fn pairs(&self, out: &mut Vec<(String, String)>) {
        push(out, "lr", &self.lr);
        push(out, "weight_decay", &self.weight_decay);
        push(out, "epochs", &self.epochs);
        push(out, "lr_drop_epoch", &self.lr_drop_epoch);
        push(out, "lr_drop_factor", &self.lr_drop_factor);
        push(out, "batch_size", &self.batch_size);
        push(out, "joint_edge", &self.joint_edge);
    }
}

fn path_pairs(out: &mut Vec<(String, String)>, items: &[(&str, &Option<PathBuf>)]) {
    for (k, v) in items {
        push(out, k, &v.as_ref().map(|p| p.display().to_string()));
    }
}

fn run(cli: Cli) -> poolnet::Result<()> {
    commands::init_threads()?;
    match cli.command {
        Command::Train(c) => {
            let mut flags = Vec::new();
            c.model.pairs(&mut flags);
            c.train.pairs(&mut flags);
            path_pairs(
                &mut flags,
                &[
                    ("saliency_manifest", &c.saliency_manifest),
                    ("edge_manifest", &c.edge_manifest),
                    ("output_dir", &c.output_dir),
                    ("resume", &c.resume),
                ],
            );
            commands::train(&config::RunConfig::load(c.model.config.as_deref(), &flags)?)
        }
        Command::Infer(c) => {
            let mut flags = Vec::new();
            c.model.pairs(&mut flags);
            path_pairs(
                &mut flags,
                &[("checkpoint", &c.checkpoint), ("eval_manifest", &c.manifest), ("output_dir", &c.output_dir)],
            );
            commands::infer(&config::RunConfig::load(c.model.config.as_deref(), &flags)?)
        }
        Command::Eval(c) => commands::eval(&c.pred_dir, &c.manifest, c.output.as_deref()),
        Command::Ablate(c) => {
            let mut flags = Vec::new();
            c.model.pairs(&mut flags);
            c.train.pairs(&mut flags);
            path_pairs(&mut flags, &[("saliency_manifest", &c.saliency_manifest), ("eval_manifest", &c.eval_manifest)]);
            let cfg = config::RunConfig::load(c.model.config.as_deref(), &flags)?;
            commands::ablate(&cfg, c.seeds, c.output.as_deref())
        }
        Command::Bench(c) => {
            let mut flags = Vec::new();
            c.model.pairs(&mut flags);
            path_pairs(&mut flags, &[("checkpoint", &c.checkpoint)]);
            let cfg = config::RunConfig::load(c.model.config.as_deref(), &flags)?;
            commands::bench(&cfg, (c.width, c.height), c.iters, c.warmup)
        }
        Command::Synth(c) => {
            let kind = match c.kind {
                Kind::Saliency => poolnet::data::SampleKind::Saliency,
                Kind::Edge => poolnet::data::SampleKind::Edge,
            };
            commands::synth(kind, c.count, c.size, c.seed, &c.output_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
