//! Command-line front end. Each stage reads and writes files in the output
//! directory so stages can be rerun independently.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::autodiff::OpKind;
use crate::cmapss::{self, Subset, SubsetData};
use crate::error::{Error, Result};
use crate::gradcheck::check_model;
use crate::metrics::{emit_report, evaluate_windows, EvaluationReport, ReportFormat};
use crate::model::{Checkpoint, ModelConfig, Variant};
use crate::preprocessing::{split_train_val, FittedPipeline, Mode, PipelineConfig, WindowBatch, TRAIN_FRACTION};
use crate::synthetic::{generate_fleet, FleetSpec};
use crate::training::{train, write_history, TrainConfig, TrainOutcome};

/// Largest acceptable gradient-check relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const SYNTHETIC_TAG: &str = "synthetic";

#[derive(Debug, Parser)]
#[command(name = "rul-forge", version, about = "Remaining-useful-life estimation for turbofan fleets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the preprocessing pipeline and write train/val/test window files.
    Preprocess(DataArgs),
    /// Train one model on preprocessed windows.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint on the test windows.
    Evaluate(EvaluateArgs),
    /// Train one model per block count and tabulate test RMSE.
    Ablate(AblateArgs),
    /// Train and evaluate all four architectures on the same split.
    Baselines(TrainArgs),
    /// Finite-difference check of the model gradients.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic fleet as C-MAPSS text files.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn parse_subset(s: &str) -> std::result::Result<Subset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Benchmark subset read from --data-dir.
    #[arg(long, value_parser = parse_subset, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub subset: Option<Subset>,
    /// Fleet specification (JSON) for a generated data set.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

impl DataArgs {
    fn tag(&self) -> String {
        match self.subset {
            Some(s) => s.to_string(),
            None => SYNTHETIC_TAG.to_string(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{name}", self.tag()))
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_variant, default_value = "biclstm")]
    pub variant: Variant,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 64)]
    pub proj: usize,
    #[arg(long, default_value_t = 32)]
    pub corrector_hidden: usize,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 100)]
    pub max_epochs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_variant, default_value = "biclstm")]
    pub variant: Variant,
    /// Checkpoint to evaluate; defaults to the one `train` wrote.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Block counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 6, 8, 10])]
    pub sweep: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_variant, default_value = "biclstm")]
    pub variant: Variant,
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    #[arg(long, default_value_t = 6)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Test hook: scale the backward rule of this op to prove the check bites.
    #[arg(long, hide = true)]
    pub corrupt_rule: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Ablate(a) => cmd_ablate(&a, out),
        Command::Baselines(a) => cmd_baselines(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Prints `rows` as a JSON array of objects or as CSV with `header`.
fn print_rows(out: &mut dyn Write, format: Format, header: &[&str], rows: &[Vec<serde_json::Value>]) -> Result<()> {
    let text = match format {
        Format::Json => {
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let map = header.iter().zip(r).map(|(k, v)| (k.to_string(), v.clone())).collect();
                    serde_json::Value::Object(map)
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&objects)?)
        }
        Format::Csv => csv_text(header, rows),
    };
    emit(out, &text)
}

fn csv_text(header: &[&str], rows: &[Vec<serde_json::Value>]) -> String {
    let cell = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let mut text = header.join(",") + "\n";
    for r in rows {
        text += &r.iter().map(cell).collect::<Vec<_>>().join(",");
        text.push('\n');
    }
    text
}

fn load_data(args: &DataArgs) -> Result<(SubsetData, Mode)> {
    match (&args.subset, &args.synthetic) {
        (Some(subset), _) => {
            let data = cmapss::load_files(&args.data_dir, &subset.to_string())?;
            for w in cmapss::check_against_meta(*subset, &data.train, &data.test) {
                eprintln!("warning: {w}");
            }
            Ok((data, Mode::for_subset(*subset)))
        }
        (None, Some(path)) => {
            let spec = FleetSpec::load(path)?;
            let mode = if spec.regimes() > 1 {
                Mode::MultiCondition
            } else {
                Mode::SingleCondition
            };
            Ok((generate_fleet(&spec)?, mode))
        }
        (None, None) => Err(Error::Usage("either --subset or --synthetic is required".into())),
    }
}

pub fn cmd_preprocess(args: &DataArgs, out: &mut dyn Write) -> Result<()> {
    let (data, mode) = load_data(args)?;
    args.ensure_out_dir()?;
    if args.synthetic.is_some() {
        cmapss::save_files(&args.out_dir, SYNTHETIC_TAG, &data)?;
    }
    let mut config = PipelineConfig::default();
    config.forest.seed = args.seed;
    config.kmeans_seed = args.seed;
    let pipeline = FittedPipeline::fit(&args.tag(), mode, &data.train, config)?;
    let windows = pipeline.train_windows(&data.train)?;
    let (train, val) = split_train_val(&windows, TRAIN_FRACTION, args.seed)?;
    let test = pipeline.test_windows(&data.test, &data.test_rul)?;

    pipeline.save(&args.out("pipeline.json"))?;
    train.save(&args.out("train.rulw"))?;
    val.save(&args.out("val.rulw"))?;
    test.save(&args.out("test.rulw"))?;

    let header = ["dataset", "mode", "train_windows", "val_windows", "test_windows", "features", "retained_sensors"];
    let retained: Vec<&str> = pipeline
        .selection
        .retained
        .iter()
        .map(|&s| cmapss::SENSOR_NAMES[s])
        .collect();
    let row = vec![
        json!(args.tag()),
        serde_json::to_value(pipeline.mode)?,
        json!(train.len()),
        json!(val.len()),
        json!(test.len()),
        json!(pipeline.feature_dim()),
        json!(retained.join(" ")),
    ];
    print_rows(out, args.format, &header, &[row])
}

struct Prepared {
    pipeline: FittedPipeline,
    train: WindowBatch,
    val: WindowBatch,
    test: WindowBatch,
}

fn load_prepared(args: &DataArgs) -> Result<Prepared> {
    Ok(Prepared {
        pipeline: FittedPipeline::load(&args.out("pipeline.json"))?,
        train: WindowBatch::load(&args.out("train.rulw"))?,
        val: WindowBatch::load(&args.out("val.rulw"))?,
        test: WindowBatch::load(&args.out("test.rulw"))?,
    })
}

fn model_config(args: &ModelArgs, variant: Variant, blocks: usize, input_dim: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(input_dim).with_variant(variant);
    cfg.num_blocks = blocks;
    cfg.hidden_dim = args.hidden;
    cfg.projection_dim = args.proj;
    cfg.corrector_hidden_dim = args.corrector_hidden;
    cfg.seed = seed;
    cfg
}

fn train_config(args: &OptimArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        patience: args.patience,
        max_epochs: args.max_epochs,
        seed,
        ..TrainConfig::default()
    }
}

/// Trains and writes checkpoint and history under `stem`. A diverged run is
/// saved first and then reported as a numerical failure.
fn fit_and_save(
    data: &Prepared,
    model: &ModelConfig,
    cfg: &TrainConfig,
    stem: &Path,
) -> Result<TrainOutcome> {
    let outcome = train(model, &data.train, &data.val, cfg)?;
    let with_suffix = |s: &str| PathBuf::from(format!("{}_{s}", stem.display()));
    outcome.checkpoint.save(&with_suffix("checkpoint.json"))?;
    write_history(&with_suffix("history.csv"), &outcome.history)?;
    if let Some(msg) = &outcome.diverged {
        return Err(Error::Numerical(format!(
            "training diverged ({msg}); best checkpoint so far was saved"
        )));
    }
    Ok(outcome)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    args.data.ensure_out_dir()?;
    let data = load_prepared(&args.data)?;
    let variant = args.model.variant;
    let model = model_config(&args.model, variant, args.model.blocks, data.train.feature_dim(), args.data.seed);
    let cfg = train_config(&args.optim, args.data.seed);
    let stem = args.data.out(variant.token());
    let outcome = fit_and_save(&data, &model, &cfg, &stem)?;
    let meta = outcome.checkpoint.training.as_ref().expect("train sets metadata");
    let header = ["variant", "blocks", "epochs_run", "best_epoch", "best_val_rmse", "stop_reason"];
    let row = vec![
        json!(variant.label()),
        json!(model.num_blocks),
        json!(meta.epochs_run),
        json!(meta.best_epoch),
        json!(meta.best_val_rmse),
        json!(meta.stop_reason),
    ];
    print_rows(out, args.data.format, &header, &[row])
}

fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    emit_report(report, dir, ReportFormat::Json)?;
    emit_report(report, dir, ReportFormat::Csv)?;
    Ok(())
}

fn metric_row(report: &EvaluationReport) -> Vec<serde_json::Value> {
    vec![
        json!(report.variant.label()),
        json!(report.rmse),
        json!(report.mae_cycles),
        json!(report.mae_normalized),
        json!(report.r2),
    ]
}

const METRIC_HEADER: [&str; 5] = ["variant", "rmse", "mae_cycles", "mae_normalized", "r2"];

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let pipeline = FittedPipeline::load(&args.data.out("pipeline.json"))?;
    let test = WindowBatch::load(&args.data.out("test.rulw"))?;
    let path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.data.out(&format!("{}_checkpoint.json", args.variant.token())));
    let checkpoint = Checkpoint::load(&path)?;
    let report = evaluate_windows(&checkpoint, &pipeline, &test)?;
    write_report(&report, &args.data.out_dir)?;
    print_rows(out, args.data.format, &METRIC_HEADER, &[metric_row(&report)])
}

pub fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let t = &args.train;
    t.data.ensure_out_dir()?;
    let data = load_prepared(&t.data)?;
    let mut rows = Vec::new();
    for &blocks in &args.sweep {
        let seed = t.data.seed + blocks as u64;
        let model = model_config(&t.model, t.model.variant, blocks, data.train.feature_dim(), seed);
        let cfg = train_config(&t.optim, seed);
        let stem = t.data.out(&format!("{}_blocks{blocks}", t.model.variant.token()));
        let outcome = fit_and_save(&data, &model, &cfg, &stem)?;
        let report = evaluate_windows(&outcome.checkpoint, &data.pipeline, &data.test)?;
        rows.push(vec![json!(t.data.tag()), json!(blocks), json!(report.rmse)]);
    }
    let header = ["dataset", "blocks", "rmse"];
    write_file(&t.data.out("ablation.csv"), &csv_text(&header, &rows))?;
    print_rows(out, t.data.format, &header, &rows)
}

pub fn cmd_baselines(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    args.data.ensure_out_dir()?;
    let data = load_prepared(&args.data)?;
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let model = model_config(&args.model, variant, args.model.blocks, data.train.feature_dim(), args.data.seed);
        let cfg = train_config(&args.optim, args.data.seed);
        let outcome = fit_and_save(&data, &model, &cfg, &args.data.out(variant.token()))?;
        let report = evaluate_windows(&outcome.checkpoint, &data.pipeline, &data.test)?;
        write_report(&report, &args.data.out_dir)?;
        rows.push(metric_row(&report));
    }
    write_file(&args.data.out("baselines.csv"), &csv_text(&METRIC_HEADER, &rows))?;
    print_rows(out, args.data.format, &METRIC_HEADER, &rows)
}

fn parse_op_kind(name: &str) -> Result<OpKind> {
    let kind = match name.to_ascii_lowercase().as_str() {
        "matmul" => OpKind::MatMul,
        "transpose" => OpKind::Transpose,
        "add" => OpKind::Add,
        "sub" => OpKind::Sub,
        "mul" => OpKind::Mul,
        "sigmoid" => OpKind::Sigmoid,
        "tanh" => OpKind::Tanh,
        "relu" => OpKind::Relu,
        "add_bias" => OpKind::AddBias,
        "concat" => OpKind::Concat,
        "narrow" => OpKind::Narrow,
        "layer_norm" | "layernorm" => OpKind::LayerNorm,
        "reduce_mean" => OpKind::ReduceMean,
        _ => return Err(Error::Usage(format!("unknown op {name:?}"))),
    };
    Ok(kind)
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let fault = args.corrupt_rule.as_deref().map(parse_op_kind).transpose()?;
    let mut cfg = ModelConfig::new(args.features).with_variant(args.variant);
    cfg.projection_dim = args.hidden;
    cfg.hidden_dim = args.hidden;
    cfg.corrector_hidden_dim = args.hidden;
    cfg.num_blocks = args.blocks;
    cfg.seed = args.seed;
    let groups = check_model(&cfg, args.steps, args.batch, args.seed, fault)?;
    let worst = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    let passed = worst < GRADCHECK_TOLERANCE;
    match args.format {
        Format::Json => {
            let report = json!({
                "variant": args.variant.label(),
                "max_rel_err": worst,
                "tolerance": GRADCHECK_TOLERANCE,
                "passed": passed,
                "groups": groups.iter().map(|g| json!({
                    "group": g.group,
                    "max_rel_err": g.max_rel_err,
                    "max_abs_grad": g.max_abs_grad,
                })).collect::<Vec<_>>(),
            });
            emit(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Format::Csv => {
            let rows: Vec<Vec<serde_json::Value>> = groups
                .iter()
                .map(|g| vec![json!(g.group), json!(g.max_rel_err), json!(g.max_abs_grad)])
                .collect();
            emit(out, &csv_text(&["group", "max_rel_err", "max_abs_grad"], &rows))?;
        }
    }
    if passed {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: max relative error {worst:e} >= {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = FleetSpec::load(&args.synthetic)?;
    let data = generate_fleet(&spec)?;
    cmapss::save_files(&args.out_dir, SYNTHETIC_TAG, &data)?;
    emit(
        out,
        &format!(
            "wrote {} training and {} test units to {}\n",
            data.train.len(),
            data.test.len(),
            args.out_dir.display()
        ),
    )
}
