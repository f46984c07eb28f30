use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dbrc_core::data::{load_dataset, DatasetPaths, SplitSpec, SynthConfig};
use dbrc_core::experiment::{
    ablate, encode_to_file, eval_files, format_ablation, layout, synth_to_dir, train_to_dir, write_json,
    BenchmarkSpec, ExperimentManifest,
};
use dbrc_core::model::{DbrcConfig, Mode, Variant};
use dbrc_core::mrbm::check_identity;
use dbrc_core::par::Execution;

/// Largest `|nll − rhs|` accepted by `mrbm-check`.
const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "dbrc", version, about = "Deep binary reconstruction for cross-modal hashing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset.
    Synth(SynthArgs),
    /// Split a dataset, train the joint model and both unimodal query models.
    Train(TrainArgs),
    /// Encode features into a codes file.
    Encode(EncodeArgs),
    /// Score query codes against database codes in both directions.
    Eval(EvalArgs),
    /// Compare the activation variants across code lengths.
    Ablate(AblateArgs),
    /// Check the likelihood decomposition on random tiny MRBMs.
    MrbmCheck(MrbmArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    #[arg(long, default_value_t = 32)]
    dim_x: usize,
    #[arg(long, default_value_t = 16)]
    dim_y: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    multi_label: bool,
}

/// Hyperparameters shared by `train` and `ablate`.
#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.001)]
    lambda: f64,
    /// Joint training epochs.
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    /// Epochs of each unimodal fine-tune.
    #[arg(long, default_value_t = 150)]
    finetune_epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.25)]
    query_fraction: f64,
}

impl ModelArgs {
    fn config(&self, bits: usize, variant: Variant) -> DbrcConfig {
        let mut c = DbrcConfig::new(1, 1, bits).with_variant(variant);
        c.lambda = self.lambda;
        c.epochs = self.epochs;
        c.finetune_epochs = self.finetune_epochs;
        c.batch_size = self.batch;
        c.learning_rate = self.lr;
        c.seed = self.seed;
        c
    }
}

/// A dataset given as a directory of `x.txt`, `y.txt`, `labels.txt`, with
/// optional per-file overrides.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<DatasetPaths> {
        let base = self.data.as_ref().map(DatasetPaths::in_dir);
        let pick = |given: &Option<PathBuf>, fallback: Option<&PathBuf>, what: &str| -> Result<PathBuf> {
            given
                .clone()
                .or_else(|| fallback.cloned())
                .with_context(|| format!("no {what} file: pass --data DIR or --{what}"))
        };
        Ok(DatasetPaths {
            x: pick(&self.x, base.as_ref().map(|b| &b.x), "x")?,
            y: pick(&self.y, base.as_ref().map(|b| &b.y), "y")?,
            labels: pick(&self.labels, base.as_ref().map(|b| &b.labels), "labels")?,
        })
    }

    fn is_given(&self) -> bool {
        self.data.is_some() || self.x.is_some() || self.y.is_some() || self.labels.is_some()
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: dbrc_core::Error| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    bits: usize,
    #[arg(long, default_value = "DBRC", value_parser = parse_variant)]
    variant: Variant,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodeMode {
    Joint,
    XOnly,
    YOnly,
}

impl From<EncodeMode> for Mode {
    fn from(m: EncodeMode) -> Mode {
        match m {
            EncodeMode::Joint => Mode::Joint,
            EncodeMode::XOnly => Mode::XOnly,
            EncodeMode::YOnly => Mode::YOnly,
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "joint")]
    mode: EncodeMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Database codes (joint model).
    #[arg(long)]
    db: PathBuf,
    /// Query codes from the x-only model.
    #[arg(long)]
    i2t: Option<PathBuf>,
    /// Query codes from the y-only model.
    #[arg(long)]
    t2i: Option<PathBuf>,
    #[arg(long)]
    query_labels: PathBuf,
    #[arg(long)]
    db_labels: PathBuf,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    /// Directory for the report and manifest; stdout only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Use this dataset instead of the synthetic benchmark.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64, 128])]
    bits: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_values = ["DBRC", "DBRC-N", "DBRC-C", "TWO-STAGE"])]
    variants: Vec<Variant>,
    /// Runs per cell, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct MrbmArgs {
    /// Visible x, visible y and hidden unit counts.
    #[arg(long, value_delimiter = ',', num_args = 1, default_values_t = [2, 2, 2])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n: a.n,
        classes: a.classes,
        latent_dim: a.latent_dim,
        dim_x: a.dim_x,
        dim_y: a.dim_y,
        noise_sigma: a.noise,
        seed: a.seed,
        multi_label: a.multi_label,
    };
    let manifest = synth_to_dir(&config, &a.out)?;
    for p in &manifest.outputs {
        println!("wrote {p}");
    }
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let config = a.model.config(a.bits, a.variant);
    let split = SplitSpec {
        query_fraction: a.model.query_fraction,
        seed: a.model.seed,
    };
    let manifest = train_to_dir(&a.data.paths()?, &config, &split, &a.out)?;
    println!("trained {} ({} bits) in {:.1}s", a.variant, a.bits, manifest.timing_seconds["total"]);
    println!("outputs in {}", a.out.display());
    Ok(())
}

fn run_encode(a: &EncodeArgs) -> Result<()> {
    let codes = encode_to_file(&a.checkpoint, a.x.as_deref(), a.y.as_deref(), a.mode.into(), &a.out)?;
    println!("encoded {} items into {} bits: {}", codes.len(), codes.bits(), a.out.display());
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let report = eval_files(a.i2t.as_deref(), a.t2i.as_deref(), &a.db, &a.query_labels, &a.db_labels, a.radius)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let inputs: Vec<String> = [Some(&a.db), a.i2t.as_ref(), a.t2i.as_ref(), Some(&a.query_labels), Some(&a.db_labels)]
            .into_iter()
            .flatten()
            .map(|p| p.display().to_string())
            .collect();
        let mut manifest = ExperimentManifest::new("eval", 0, &(inputs, a.radius));
        let text_path = out.join(layout::REPORT_TEXT);
        std::fs::write(&text_path, &text).with_context(|| format!("writing {}", text_path.display()))?;
        let json_path = out.join(layout::REPORT_JSON);
        write_json(&json_path, &report)?;
        manifest.output(&text_path);
        manifest.output(&json_path);
        manifest.timing_seconds.insert("total".into(), start.elapsed().as_secs_f64());
        manifest.save(out.join(layout::MANIFEST))?;
    }
    Ok(())
}

fn run_ablate(a: &AblateArgs) -> Result<()> {
    if a.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let start = Instant::now();
    let dataset = if a.data.is_given() {
        let p = a.data.paths()?;
        Some(load_dataset(&p.x, &p.y, &p.labels)?)
    } else {
        None
    };
    let mut spec = BenchmarkSpec::synthetic(a.bits[0], a.model.seed);
    spec.model = a.model.config(a.bits[0], Variant::Dbrc);
    spec.query_fraction = a.model.query_fraction;
    spec.radius = a.radius;
    let seeds: Vec<u64> = (0..a.repeats).map(|r| a.model.seed + r).collect();
    let rows = ablate(&spec, dataset.as_ref(), &a.variants, &a.bits, &seeds, Execution::default())?;
    let table = format_ablation(&rows);
    print!("{table}");

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut manifest = ExperimentManifest::new("ablate", a.model.seed, &(&spec, &a.bits, &a.variants, &seeds));
    let table_path = a.out.join("ablation.txt");
    std::fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
    let json_path = a.out.join("ablation.json");
    write_json(&json_path, &rows)?;
    manifest.output(&table_path);
    manifest.output(&json_path);
    manifest.timing_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.save(a.out.join(layout::MANIFEST))?;
    Ok(())
}

fn run_mrbm(a: &MrbmArgs) -> Result<()> {
    let [dx, dy, dh] = a.dims[..] else {
        bail!("--dims takes three counts, e.g. 2,2,2");
    };
    let check = check_identity((dx, dy, dh), a.trials, a.seed)?;
    println!("trials = {}", check.trials);
    println!("max |nll - rhs| conditioned on x = {:.3e}", check.max_abs_diff_x);
    println!("max |nll - rhs| conditioned on y = {:.3e}", check.max_abs_diff_y);
    println!("max |nll - rhs| = {:.3e}", check.max_abs_diff());
    if let Some(out) = &a.out {
        write_json(out, &check)?;
    }
    let diff = check.max_abs_diff();
    if diff.is_nan() || diff >= IDENTITY_TOLERANCE {
        bail!("decomposition differs from the likelihood by {diff:e}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Encode(a) => run_encode(a),
        Command::Eval(a) => run_eval(a),
        Command::Ablate(a) => run_ablate(a),
        Command::MrbmCheck(a) => run_mrbm(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
