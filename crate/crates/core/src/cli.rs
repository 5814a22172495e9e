//! The `cubelearn` command line.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use crate::bench::{bench_pipeline, write_bench_csv, TABLE_PIPELINES};
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint};
use crate::io::features::export_features;
use crate::radar_sim::{generate_dataset, sample_cube, DatasetSpec, Manifest, RadarConfig, Split};
use crate::training::{
    check_compatible, evaluate_split, load_split, run_experiment, write_epochs_csv, FrontendKind, Metrics, PreparedData,
    RunConfig,
};

pub const THREADS_ENV: &str = "CUBELEARN_THREADS";
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cubelearn", version, about = "Learnable radar cube pre-processing: data, training, evaluation, benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a labelled dataset of raw cubes.
    GenData(GenDataArgs),
    /// Train one pipeline and write a checkpoint directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Train over a grid of values for one setting and seeds.
    Sweep(SweepArgs),
    /// Per-sample inference latency, fixed DFT vs learnable front-end.
    Bench(BenchArgs),
    /// Write per-sample front-end outputs to CSV.
    ExportFeatures(ExportArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Dataset spec (JSON); the built-in six-class set when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Radar configuration (JSON); defaults when omitted.
    #[arg(long)]
    pub radar: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed stored in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// `KIND:CLASSIFIER`, e.g. `DT:CNN2D` or `RDT:CNN2D_LSTM`.
    #[arg(long)]
    pub pipeline: String,
    /// Front-end: `dft` (fixed) or `cubelearn` (learnable).
    #[arg(long, default_value = "cubelearn")]
    pub baseline: String,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration (JSON): training settings and pipeline overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fractions of the sample and chirp axes to keep.
    #[arg(long, num_args = 2, value_names = ["SAMPLES", "CHIRPS"])]
    pub reduce: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub module_lr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint directory; also holds metrics.csv and metrics.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `module_lr`, `classifier_lr` or `reduce` (same fraction on both axes).
    #[arg(long)]
    pub param: String,
    #[arg(long, num_args = 1.., required = true)]
    pub values: Vec<f64>,
    #[arg(long, num_args = 1.., default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Pipelines to time; every row of the standard table when omitted.
    #[arg(long, num_args = 1..)]
    pub pipeline: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Time on the first test cube of this dataset instead of a simulated one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["SAMPLES", "CHIRPS"])]
    pub reduce: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn usage_io(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("cannot read {}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn load_manifest(dir: &Path) -> Result<Manifest> {
    if !dir.join(crate::radar_sim::MANIFEST_FILE).is_file() {
        return Err(Error::Config(format!("{} is not a dataset directory", dir.display())));
    }
    Manifest::load(dir)
}

fn reduce_pair(v: &Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.as_ref().map(|v| [v[0], v[1]])
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::Config(format!("config file {} not found", p.display())));
                }
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.module_lr {
            cfg.train.module_lr = lr;
        }
        if let Some(r) = reduce_pair(&self.reduce) {
            cfg.reduce = Some(r);
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut spec: DatasetSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => DatasetSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let radar: RadarConfig = match &a.radar {
        Some(p) => read_json(p)?,
        None => RadarConfig::default(),
    };
    let m = generate_dataset(&spec, &radar, &a.out)?;
    println!("wrote {} cubes for {} classes to {}", m.samples.len(), m.n_classes, a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.run.data)?;
    let frontend: FrontendKind = a.run.baseline.parse()?;
    let run = a.run.run_config()?;
    let config = run.pipeline(&a.run.pipeline, frontend, manifest.n_classes)?;
    let data = PreparedData::<f64>::load(&config, &a.run.data, &manifest)?;
    let (pipeline, metrics) =
        run_experiment(&config, &run.train, &data, &a.run.data, &manifest, &[Split::Test, Split::OutOfSet])?;
    save_checkpoint(&a.out, &pipeline, &run.train, run.train.seed, &manifest.class_names, Some(&metrics))?;
    write_epochs_csv(&a.out.join("metrics.csv"), &metrics.epochs)?;
    metrics.write_json(&a.out.join("metrics.json"))?;
    println!(
        "{} [{}] best epoch {} val_acc {:.4} test_acc {:.4} out_of_set_acc {:.4}",
        metrics.pipeline,
        metrics.frontend,
        metrics.best_epoch,
        metrics.best_val_acc,
        metrics.test.as_ref().map_or(f64::NAN, |m| m.accuracy),
        metrics.out_of_set.as_ref().map_or(f64::NAN, |m| m.accuracy),
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let split = Split::parse(&a.split)?;
    let (pipeline, ckpt) = load_checkpoint::<f64>(&a.ckpt)?;
    let manifest = load_manifest(&a.data)?;
    let m = evaluate_split(&pipeline, &a.data, &manifest, split, ckpt.train.batch_size)?;
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::json(&a.ckpt, e))?;
    if let Some(out) = &a.out {
        std::fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    }
    println!("{text}");
    Ok(())
}

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 11] = [
    "param",
    "value",
    "seed",
    "pipeline",
    "frontend",
    "best_epoch",
    "val_acc",
    "test_acc",
    "out_of_set_acc",
    "test_latency_ms",
    "train_seconds",
];

pub fn sweep_row(param: &str, value: f64, m: &Metrics) -> Vec<String> {
    let acc = |e: &Option<crate::training::EvalMetrics>| e.as_ref().map_or(String::new(), |e| e.accuracy.to_string());
    vec![
        param.to_string(),
        value.to_string(),
        m.seed.to_string(),
        m.pipeline.clone(),
        m.frontend.clone(),
        m.best_epoch.to_string(),
        m.best_val_acc.to_string(),
        acc(&m.test),
        acc(&m.out_of_set),
        m.test.as_ref().map_or(String::new(), |e| e.latency_ms.to_string()),
        m.train_seconds.to_string(),
    ]
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    if !["module_lr", "classifier_lr", "reduce"].contains(&a.param.as_str()) {
        return Err(Error::Config(format!("cannot sweep '{}' (module_lr, classifier_lr, reduce)", a.param)));
    }
    let manifest = load_manifest(&a.run.data)?;
    let frontend: FrontendKind = a.run.baseline.parse()?;
    let base = a.run.run_config()?;
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| crate::training::csv_error(&a.out, e))?;
    w.write_record(SWEEP_HEADER).map_err(|e| crate::training::csv_error(&a.out, e))?;
    let mut cached: Option<(Option<[f64; 2]>, PreparedData<f64>)> = None;
    for &value in &a.values {
        let mut run = base.clone();
        match a.param.as_str() {
            "module_lr" => run.train.module_lr = value,
            "classifier_lr" => run.train.classifier_lr = value,
            _ => run.reduce = Some([value, value]),
        }
        run.train.validate()?;
        let config = run.pipeline(&a.run.pipeline, frontend, manifest.n_classes)?;
        if cached.as_ref().map_or(true, |(r, _)| *r != config.reduce) {
            drop(cached.take());
            cached = Some((config.reduce, PreparedData::load(&config, &a.run.data, &manifest)?));
        }
        let data = &cached.as_ref().expect("loaded").1;
        for &seed in &a.seeds {
            let mut cfg = run.train.clone();
            cfg.seed = seed;
            let (_, m) = run_experiment(&config, &cfg, data, &a.run.data, &manifest, &[Split::Test, Split::OutOfSet])?;
            w.write_record(sweep_row(&a.param, value, &m)).map_err(|e| crate::training::csv_error(&a.out, e))?;
            w.flush().map_err(|e| Error::io(&a.out, e))?;
            eprintln!("{}={value} seed {seed}: test_acc {:.4}", a.param, m.test.as_ref().map_or(f64::NAN, |t| t.accuracy));
        }
    }
    Ok(())
}

fn bench_cmd(a: &BenchArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let (cube, n_classes) = match &a.data {
        Some(dir) => {
            let m = load_manifest(dir)?;
            let rec = m
                .records(Split::Test)
                .next()
                .ok_or_else(|| Error::Config(format!("{} has no test cubes", dir.display())))?;
            (crate::io::cube_file::read_cube::<f32>(&dir.join(&rec.file))?, m.n_classes)
        }
        None => {
            let spec = DatasetSpec::default();
            let (_, cube) = sample_cube::<f32>(&spec, &RadarConfig::default(), Split::Test, 0, 0)?;
            (cube, spec.n_classes())
        }
    };
    let names: Vec<String> =
        if a.pipeline.is_empty() { TABLE_PIPELINES.iter().map(|s| s.to_string()).collect() } else { a.pipeline.clone() };
    let mut rows = Vec::new();
    for name in &names {
        let mut run = RunConfig::default();
        run.reduce = reduce_pair(&a.reduce);
        let config = run.pipeline(name, FrontendKind::Cubelearn, n_classes)?;
        let row = bench_pipeline::<f64>(&config, &cube, a.repeats, a.seed)?;
        eprintln!("{name}: dft {:.2} ms, cubelearn {:.2} ms", row.dft_ms, row.cubelearn_ms);
        rows.push(row);
    }
    write_bench_csv(&a.out, &rows)
}

fn export_cmd(a: &ExportArgs) -> Result<()> {
    let split = Split::parse(&a.split)?;
    let (pipeline, _) = load_checkpoint::<f64>(&a.ckpt)?;
    let manifest = load_manifest(&a.data)?;
    check_compatible(&pipeline, &manifest)?;
    let examples = load_split(&pipeline, &a.data, &manifest, split)?;
    let e = export_features(&pipeline, &examples, &a.out)?;
    match &e.sidecar {
        Some(s) => println!("{} rows of {} features, values in {}", e.rows, e.width, s.display()),
        None => println!("{} rows of {} features", e.rows, e.width),
    }
    Ok(())
}

/// Worker count from the environment, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = thread_cap()? {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::ExportFeatures(a) => export_cmd(a),
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
