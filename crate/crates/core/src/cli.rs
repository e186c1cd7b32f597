//! The `elite-pixel` command line: synthesize, label, train, predict,
//! evaluate. Batch-oriented; all randomness flows from explicit seeds in the
//! config files, never from the clock.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_masks, pixel_density, truncate_2dp};
use crate::nn::{init_params, CipsConfig, CipsModel, Tensor};
use crate::patch::{extract_patches, stitch_scalar_tiles, temporal_sample, FeatureEncoding};
use crate::selector::{elite_labels, AcceptanceRule, SelectorConfig};
use crate::stack::{read_mask, read_stack, write_mask, write_stack, EliteMask};
use crate::synth::{generate_scene, SceneSpecFile};
use crate::train::{fit, split_train_val, transfer, write_history_csv, FitOutput, HyperParams, TrainingSet};

#[derive(Parser)]
#[command(name = "elite-pixel", version, about = "Elite-pixel selection for interferogram time series")]
pub struct Cli {
    /// Worker thread cap (falls back to ELITE_PIXEL_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: `<out>.tsstack` and `<out>.mask` from a JSON spec.
    Synth(SynthArgs),
    /// Label elite pixels statistically: dispersion thresholds + F test.
    Label(LabelArgs),
    /// Train the network on labeled scenes.
    Train(TrainArgs),
    /// Predict an elite mask with a trained checkpoint.
    Predict(PredictArgs),
    /// Score a predicted mask against a truth mask.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Scene description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output prefix; writes `<out>.tsstack` and `<out>.mask`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LabelArgs {
    /// Input stack (.tsstack).
    #[arg(long)]
    pub stack: PathBuf,
    /// Output mask path.
    #[arg(long)]
    pub out: PathBuf,
    /// Selector configuration (JSON); flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ps_threshold: Option<f64>,
    #[arg(long)]
    pub ds_threshold: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RuleArg {
    PaperLiteral,
    TwoSided,
}

impl From<RuleArg> for AcceptanceRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::PaperLiteral => AcceptanceRule::PaperLiteral,
            RuleArg::TwoSided => AcceptanceRule::TwoSided,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// A labeled scene: stack file followed by its mask file. Repeatable.
    #[arg(long = "scene", num_args = 2, value_names = ["STACK", "MASK"], required = true)]
    pub scenes: Vec<PathBuf>,
    /// Training configuration (JSON): hyperparameters, sampling, encoding.
    #[arg(long)]
    pub config: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV path (default: `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Initialize from an existing checkpoint instead of random weights.
    #[arg(long)]
    pub transfer_from: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output mask path.
    #[arg(long)]
    pub out: PathBuf,
    /// Probability threshold: pixels with p > threshold become elite.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Optionally sample the time axis before prediction.
    #[arg(long)]
    pub sample_epochs: Option<usize>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path (JSON); a CSV for plotting lands next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Training config file: hyperparameters plus pipeline settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    #[serde(flatten)]
    pub hyper: HyperParams,
    /// Epoch count each stack is sampled to before patching (25..=30).
    pub sample_epochs: usize,
    pub encoding: FeatureEncoding,
    pub hidden: usize,
    pub kernel_size: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            hyper: HyperParams::default(),
            sample_epochs: 25,
            encoding: FeatureEncoding::PhaseCosSin,
            hidden: 16,
            kernel_size: 3,
        }
    }
}

impl TrainSpec {
    fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(25..=30).contains(&self.sample_epochs) {
            return Err(Error::InvalidConfig(format!(
                "sample_epochs must lie in [25, 30], got {}",
                self.sample_epochs
            )));
        }
        Ok(())
    }
}

impl Cli {
    pub fn run(self) -> Result<()> {
        match self.command {
            Command::Synth(args) => run_synth(&args),
            Command::Label(args) => run_label(&args),
            Command::Train(args) => run_train(&args),
            Command::Predict(args) => run_predict(&args),
            Command::Evaluate(args) => run_evaluate(&args),
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", prefix.display()))
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)?;
    let file: SceneSpecFile = serde_json::from_str(&text)?;
    let spec = file.resolve()?;
    let (stack, mask) = generate_scene(&spec)?;
    let stack_path = with_suffix(&args.out, "tsstack");
    let mask_path = with_suffix(&args.out, "mask");
    write_stack(&stack, &stack_path)?;
    write_mask(&mask, &mask_path)?;
    println!("seed: {}", spec.seed);
    for (class, count) in spec.class_histogram() {
        println!("class {class}: {count} pixels");
    }
    println!("wrote {} and {}", stack_path.display(), mask_path.display());
    Ok(())
}

pub fn run_label(args: &LabelArgs) -> Result<()> {
    let stack = read_stack(&args.stack)?;
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str::<SelectorConfig>(&std::fs::read_to_string(path)?)?,
        None => SelectorConfig::default(),
    };
    if let Some(v) = args.ps_threshold {
        cfg.ps_threshold = v;
    }
    if let Some(v) = args.ds_threshold {
        cfg.ds_threshold = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(r) = args.rule {
        cfg.rule = r.into();
    }
    let selection = elite_labels(&stack, &cfg)?;
    if selection.empty_ps {
        eprintln!("warning: no pixel passed the PS threshold; elite set is empty");
    }
    println!("PS candidates: {}", selection.ps_count);
    println!(
        "DS candidates: {} (accepted: {})",
        selection.ds_candidates, selection.ds_accepted
    );
    println!("elite pixels: {}", selection.mask.elite_count());
    println!("density: {:.2}", truncate_2dp(pixel_density(&selection.mask)?));
    write_mask(&selection.mask, &args.out)?;
    Ok(())
}

fn load_training_sets(scenes: &[PathBuf], spec: &TrainSpec) -> Result<TrainingSet> {
    let mut sets = Vec::new();
    for pair in scenes.chunks(2) {
        let stack = read_stack(&pair[0])?;
        let stack = temporal_sample(&stack, spec.sample_epochs)?;
        let batch = extract_patches(&stack, spec.encoding)?;
        let mask = read_mask(&pair[1])?;
        sets.push(TrainingSet::from_scene(&batch, &mask)?);
    }
    TrainingSet::concat(&sets)
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let spec: TrainSpec = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    spec.validate()?;
    let all = load_training_sets(&args.scenes, &spec)?;
    let (train_set, val_set) = split_train_val(&all, spec.hyper.seed)?;
    println!(
        "{} scenes -> {} train / {} val patches",
        args.scenes.len() / 2,
        train_set.samples(),
        val_set.samples()
    );

    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, "history.csv"));
    let result = match &args.transfer_from {
        Some(ckpt) => transfer(ckpt, &train_set, &val_set, &spec.hyper),
        None => {
            let config = CipsConfig {
                features: spec.encoding.feature_count(),
                kernel_size: spec.kernel_size,
                hidden: spec.hidden,
                dropout: spec.hyper.dropout,
            };
            let model = init_params(&config, spec.hyper.seed)?;
            fit(model, &train_set, &val_set, &spec.hyper)
        }
    };
    match result {
        Ok(output) => {
            finish_training(&output, &args.out, &history_path)?;
            Ok(())
        }
        Err(Error::Diverged { epoch, output }) => {
            // Persist the last good checkpoint and history, then fail.
            finish_training(&output, &args.out, &history_path)?;
            eprintln!("training diverged at epoch {epoch}; last good checkpoint written");
            Err(Error::Diverged { epoch, output })
        }
        Err(e) => Err(e),
    }
}

fn finish_training(output: &FitOutput, ckpt: &Path, history: &Path) -> Result<()> {
    save_checkpoint(ckpt, &output.model, None)?;
    write_history_csv(history, &output.history)?;
    if let Some(last) = output.history.last() {
        println!(
            "stopped after epoch {} ({:?}); val_loss {:.6}, val_f1 {:.4}",
            last.epoch, output.stop, last.val_loss, last.val_f1
        );
    }
    println!("wrote {} and {}", ckpt.display(), history.display());
    Ok(())
}

fn encoding_for_model(model: &CipsModel) -> Result<FeatureEncoding> {
    match model.config.features {
        2 => Ok(FeatureEncoding::PhaseCosSin),
        3 => Ok(FeatureEncoding::PhaseCosSinAmplitude),
        other => Err(Error::InvalidConfig(format!(
            "checkpoint expects {other} feature planes; no known encoding produces that"
        ))),
    }
}

/// Patches a stack, runs the model in eval mode, thresholds, and stitches
/// the tiles back to a full-scene mask.
pub fn predict_mask(stack_path: &Path, checkpoint: &Path, threshold: f64, sample_epochs: Option<usize>) -> Result<(EliteMask, f64)> {
    let mut stack = read_stack(stack_path)?;
    if let Some(m) = sample_epochs {
        stack = temporal_sample(&stack, m)?;
    }
    let (model, _) = load_checkpoint(checkpoint)?;
    let encoding = encoding_for_model(&model)?;

    let start = std::time::Instant::now();
    let batch = extract_patches(&stack, encoding)?;
    let pred = model.forward_eval(&batch.data)?;
    let shape = pred.shape();
    let tiles = Tensor::from_vec(&[shape[0], shape[1], shape[2]], pred.into_data())?;
    let plane = stitch_scalar_tiles(&tiles, &batch.origins, stack.height, stack.width)?;
    let mask = EliteMask {
        height: stack.height,
        width: stack.width,
        elite: plane.iter().map(|&p| p > threshold).collect(),
        valid: vec![true; stack.height * stack.width],
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok((mask, elapsed))
}

pub fn run_predict(args: &PredictArgs) -> Result<()> {
    let (mask, elapsed) = predict_mask(&args.stack, &args.checkpoint, args.threshold, args.sample_epochs)?;
    println!(
        "prediction time: {elapsed:.2} s ({}x{} pixels)",
        mask.height, mask.width
    );
    println!("elite pixels: {}", mask.elite_count());
    println!("density: {:.2}", truncate_2dp(pixel_density(&mask)?));
    write_mask(&mask, &args.out)?;
    Ok(())
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let pred = read_mask(&args.pred)?;
    let truth = read_mask(&args.truth)?;
    let report = evaluate_masks(&pred, &truth)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    let csv_path = args.out.with_extension("csv");
    std::fs::write(&csv_path, report.to_csv())?;
    println!(
        "accuracy {:.2}  precision {:.2}  recall {:.2}  f1 {:.2}",
        report.scores.accuracy, report.scores.precision, report.scores.recall, report.scores.f1
    );
    println!("densities: pred {:.2}, truth {:.2}", report.density_pred, report.density_truth);
    println!("wrote {} and {}", args.out.display(), csv_path.display());
    Ok(())
}
