mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{DatasetSource, ExperimentConfig};
use nilm_core::classify::ClassifierKind;
use nilm_core::domain::{make_context, LabeledDataset};
use nilm_core::eval::{
    run_benchmark_with_models, summary_table, write_model_file, write_reports_csv, write_reports_json,
    write_timings_csv, ModelKind, ModelSpec, TrainedPipeline,
};
use nilm_core::events::{detect_events, EventThresholds, ThresholdTable};
use nilm_core::ingest::{generate_dataset, read_segments, synthetic_catalogue, write_segments, PowerSeries};
use nilm_core::nn::{Architecture, NetConfig};
use nilm_core::Rng;

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Event-based appliance recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled segment file.
    Generate(GenerateArgs),
    /// Detect ON/OFF events in a (timestamp, watts) CSV.
    Detect(DetectArgs),
    /// Train and evaluate the models and write reports.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
struct ContextArgs {
    /// Sampling frequency (Hz).
    #[arg(long)]
    fs: Option<u32>,
    /// Mains frequency (Hz).
    #[arg(long)]
    f0: Option<u32>,
    /// Segment duration (s).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[command(flatten)]
    context: ContextArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output segment file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// CSV with timestamp and power columns; a header row is optional.
    #[arg(long)]
    input: PathBuf,
    /// Appliance whose built-in thresholds apply.
    #[arg(long, default_value = "blond_default")]
    appliance: String,
    /// Switch-on threshold (W); overrides the appliance table.
    #[arg(long, requires = "off")]
    on: Option<f64>,
    /// Switch-off threshold (W).
    #[arg(long, requires = "on")]
    off: Option<f64>,
    /// File of `name, on, off` lines overriding built-in thresholds.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Output events CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segment file to benchmark instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated models, e.g. `handcrafted,cnn`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated classifiers: knn, lda, svm, bdt.
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    /// Network preset applied to the model of matching architecture.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    context: ContextArgs,
    /// Also write every fitted pipeline as a model file.
    #[arg(long)]
    save_models: bool,
}

type CliResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Sizes the worker pool from `NILM_THREADS` when set.
fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("NILM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("NILM_THREADS must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(err)
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let ctx = make_context(
        a.context.fs.unwrap_or(2000),
        a.context.f0.unwrap_or(50),
        a.context.duration.unwrap_or(0.5),
    )
    .map_err(err)?;
    let dataset = generate_dataset(&synthetic_catalogue(a.classes), a.per_class, &ctx, &Rng::new(a.seed)).map_err(err)?;
    write_segments(&dataset, &a.out).map_err(err)?;
    println!("wrote {} segments ({} classes) to {}", dataset.len(), dataset.n_classes(), a.out.display());
    Ok(())
}

fn read_power_csv(path: &Path) -> CliResult<PowerSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        let parse = |j: usize| record.get(j).and_then(|s| s.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(ts), Some(w)) if record.len() == 2 => {
                t.push(ts);
                p.push(w);
            }
            // A non-numeric first row is a header.
            _ if i == 0 => {}
            _ => return Err(format!("{}: line {}: expected `timestamp, watts`", path.display(), i + 1)),
        }
    }
    PowerSeries::new(t, p).map_err(err)
}

fn cmd_detect(a: &DetectArgs) -> CliResult<()> {
    let thresholds = match (a.on, a.off) {
        (Some(on), Some(off)) => EventThresholds::new(on, off).map_err(err)?,
        _ => {
            let mut table = ThresholdTable::builtin();
            if let Some(path) = &a.thresholds {
                let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                table.apply_overrides(&text).map_err(err)?;
            }
            table.get(&a.appliance).map_err(err)?
        }
    };
    let series = read_power_csv(&a.input)?;
    let events = detect_events(&series, &thresholds);
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    w.write_record(["kind", "timestamp"]).map_err(err)?;
    for e in &events {
        w.write_record([e.kind.as_str(), &e.timestamp.to_string()]).map_err(err)?;
    }
    w.flush().map_err(err)?;
    println!("{} events written to {}", events.len(), a.out.display());
    Ok(())
}

fn parse_list<T>(items: &[String], parse: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    items.iter().filter(|s| !s.trim().is_empty()).map(|s| parse(s)).collect()
}

/// Config file (if any) with command-line overrides applied.
fn experiment(a: &BenchmarkArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &a.data {
        cfg.dataset = DatasetSource::File(path.clone());
    }
    if a.classes.is_some() || a.per_class.is_some() {
        let (c0, p0) = match cfg.dataset {
            DatasetSource::Synthetic { classes, per_class } => (classes, per_class),
            DatasetSource::File(_) => (8, 100),
        };
        cfg.dataset = DatasetSource::Synthetic {
            classes: a.classes.unwrap_or(c0),
            per_class: a.per_class.unwrap_or(p0),
        };
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.split.seed = seed;
    }
    if let Some(out) = &a.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(fs) = a.context.fs {
        cfg.context.fs = fs;
    }
    if let Some(f0) = a.context.f0 {
        cfg.context.f0 = f0;
    }
    if let Some(d) = a.context.duration {
        cfg.context.duration = d;
    }
    if let Some(models) = &a.models {
        let kinds = parse_list(models, |s| s.parse::<ModelKind>().map_err(err))?;
        cfg.models = kinds
            .into_iter()
            .map(|k| cfg.models.iter().find(|m| m.model == k).cloned().unwrap_or_else(|| ModelSpec::new(k)))
            .collect();
    }
    if let Some(classifiers) = &a.classifiers {
        let kinds = parse_list(classifiers, |s| s.parse::<ClassifierKind>().map_err(err))?;
        for m in &mut cfg.models {
            m.classifiers = kinds.clone();
        }
    }
    if let Some(name) = &a.preset {
        let preset = NetConfig::preset(name).map_err(err)?;
        let target = match preset.architecture {
            Architecture::Ae => ModelKind::Ae,
            Architecture::Cae => ModelKind::Cae,
            Architecture::Cnn => ModelKind::Cnn,
        };
        let mut applied = false;
        for m in cfg.models.iter_mut().filter(|m| m.model == target) {
            m.net = Some(preset.clone());
            applied = true;
        }
        if !applied {
            return Err(format!("preset '{name}' needs the '{target}' model in the model list"));
        }
    }
    cfg.save_models |= a.save_models;
    Ok(cfg)
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<LabeledDataset> {
    let ctx = make_context(cfg.context.fs, cfg.context.f0, cfg.context.duration).map_err(err)?;
    match &cfg.dataset {
        DatasetSource::File(path) => read_segments(path, &ctx).map_err(err),
        DatasetSource::Synthetic { classes, per_class } => {
            generate_dataset(&synthetic_catalogue(*classes), *per_class, &ctx, &Rng::new(cfg.seed).derive("dataset"))
                .map_err(err)
        }
    }
}

fn cmd_benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    let cfg = experiment(a)?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or("an output directory is required (--out or output_dir in the config)")?;
    let dataset = load_dataset(&cfg)?;
    let rng = Rng::new(cfg.seed);
    let result = run_benchmark_with_models(&dataset, &cfg.models, &cfg.split, &rng, cfg.save_models).map_err(err)?;

    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_reports_json(&out.join("reports.json"), &result.reports).map_err(err)?;
    write_reports_csv(&out.join("reports.csv"), &result.reports).map_err(err)?;
    write_timings_csv(&out.join("timings.csv"), &result.reports).map_err(err)?;
    if cfg.save_models {
        let dir = out.join("models");
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (report, pipeline) in result.reports.iter().zip(&result.pipelines) {
            let path = dir.join(format!("{}.nilmmdl", report.label().replace('+', "_")));
            write_model_file(&path, TrainedPipeline::FILE_KIND, pipeline).map_err(err)?;
        }
    }
    print!("{}", summary_table(&result.reports));
    println!("{} reports written to {}", result.reports.len(), out.display());
    Ok(())
}
