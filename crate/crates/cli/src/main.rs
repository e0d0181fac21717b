use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use deepfake_core::config::validate_config;
use deepfake_core::pipeline::{paths, Pipeline, Stage};
use deepfake_core::Error;

/// Deepfake face detection: preprocess videos, train, evaluate and explain.
#[derive(Parser, Debug)]
#[command(name = "deepfake", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Screen input videos and remove unreadable ones.
    Scan(Opts),
    /// Extract keyframe face crops.
    Preprocess(Opts),
    /// Build the manifest and assign stratified splits.
    Split(Opts),
    /// Compute class weights and print them as JSON.
    Weights(Opts),
    /// Train the classifier.
    Train(Opts),
    /// Evaluate on the test split and print the report as JSON.
    Evaluate(Opts),
    /// Write heatmaps for test crops.
    Explain(Opts),
    /// Run every stage.
    Run(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    fields: Overrides,
}

/// One flag per config field.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    real_dir: Option<PathBuf>,
    #[arg(long)]
    fake_dir: Option<PathBuf>,
    #[arg(long, alias = "out")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dry_run: Option<bool>,
    #[arg(long)]
    target_fps: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    detector: Option<String>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dense_units: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    plateau_patience: Option<usize>,
    #[arg(long)]
    plateau_factor: Option<f64>,
    #[arg(long)]
    min_lr: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fine_tune: Option<bool>,
    #[arg(long, alias = "method", value_delimiter = ',', num_args = 1..)]
    methods: Option<Vec<String>>,
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    explain_samples: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Overrides {
    fn into_map(self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: Option<PathBuf>| p.map(|p| Value::from(p.to_string_lossy().into_owned()));
        put("run_id", self.run_id.map(Value::from));
        put("real_dir", path(self.real_dir));
        put("fake_dir", path(self.fake_dir));
        put("out_dir", path(self.out_dir));
        put("max_epochs", self.max_epochs.map(Value::from));
        put("dry_run", self.dry_run.map(Value::from));
        put("target_fps", self.target_fps.map(Value::from));
        put("window", self.window.map(Value::from));
        put("order", self.order.map(Value::from));
        put("detector", self.detector.map(Value::from));
        put("ratios", self.ratios.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("dense_units", self.dense_units.map(Value::from));
        put("dropout_rate", self.dropout_rate.map(Value::from));
        put("lr0", self.lr0.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("plateau_patience", self.plateau_patience.map(Value::from));
        put("plateau_factor", self.plateau_factor.map(Value::from));
        put("min_lr", self.min_lr.map(Value::from));
        put("fine_tune", self.fine_tune.map(Value::from));
        put("methods", self.methods.map(Value::from));
        put("class", self.class.map(Value::from));
        put("n", self.n.map(Value::from));
        put("sigma", self.sigma.map(Value::from));
        put("top_k", self.top_k.map(Value::from));
        put("explain_samples", self.explain_samples.map(Value::from));
        put("workers", self.workers.map(Value::from));
        m
    }
}

fn load_document(opts: Opts) -> Result<Value, Error> {
    let mut doc = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            match serde_json::from_str(&text)? {
                Value::Object(m) => m,
                _ => return Err(Error::invalid(format!("{} must hold a JSON object", path.display()))),
            }
        }
        None => Map::new(),
    };
    doc.extend(opts.fields.into_map());
    Ok(Value::Object(doc))
}

fn execute(command: Command) -> Result<(), Error> {
    let (stage, opts) = match command {
        Command::Scan(o) => (Stage::Scan, o),
        Command::Preprocess(o) => (Stage::Preprocess, o),
        Command::Split(o) => (Stage::Split, o),
        Command::Weights(o) => (Stage::Weights, o),
        Command::Train(o) => (Stage::Train, o),
        Command::Evaluate(o) => (Stage::Evaluate, o),
        Command::Explain(o) => (Stage::Explain, o),
        Command::Run(o) => (Stage::Explain, o),
    };
    let cfg = validate_config(&load_document(opts)?).map_err(Error::Config)?;
    for dir in [&cfg.real_dir, &cfg.fake_dir] {
        if !dir.is_dir() {
            return Err(Error::NotFound(dir.clone()));
        }
    }
    let pipeline = Pipeline::new(cfg)?;
    for outcome in pipeline.run_until(stage)? {
        let verb = if outcome.skipped { "skipped (up to date)" } else { "done" };
        log::info!("{}: {verb}", outcome.stage);
    }
    let print_file = |rel: &str| -> Result<(), Error> {
        let path = pipeline.artifact(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        println!("{}", text.trim_end());
        Ok(())
    };
    match stage {
        Stage::Weights => print_file(paths::WEIGHTS)?,
        Stage::Evaluate => print_file(paths::REPORT)?,
        _ => println!("{}", pipeline.run_dir().display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
