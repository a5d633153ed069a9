//! `inhaler` command line.
//!
//! Exit codes: 0 success, 2 invalid configuration, arguments, failed count
//! validation or missing reports, 3 IO failure, 4 training failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inhaler::core::corpus::{synth_generate, validate_counts, SynthConfig};
use inhaler::core::DatasetTag;
use inhaler::dataset::{load_manifest, MANIFEST_FILE};
use inhaler::experiment::{run_experiment, ExperimentConfig, RunError};
use inhaler::formats::write_manifest_file;
use inhaler::report::write_report;
use inhaler::{dataset, write_json, IoError};

#[derive(Parser)]
#[command(name = "inhaler", version, about = "Inhaler sound event classification experiments")]
struct Cli {
    /// Overrides the seed of the config file and of the SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Threads for independent folds and budgets.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// JSON config for `synth` or `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and validate the manifest of a dataset tree.
    Prepare {
        root: PathBuf,
        /// dpi-watch, rda, synthetic, synthetic-dpi or synthetic-mdi.
        #[arg(long)]
        dataset: DatasetTag,
    },
    /// Write a synthetic dataset tree.
    Synth { file: Option<PathBuf> },
    /// Run one experiment config end to end.
    Run { file: Option<PathBuf> },
    /// Tables, CSV and plots from run directories.
    Report { run_dirs: Vec<PathBuf> },
}

struct Failure(i32, String);

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Corpus(c) => Failure(2, c.to_string()),
            other => Failure(3, other.to_string()),
        }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure(2, format!("SEED={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn config_path(positional: Option<PathBuf>, global: Option<PathBuf>) -> Result<PathBuf, Failure> {
    positional.or(global).ok_or_else(|| Failure(2, "no config file given".into()))
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn prepare(root: &Path, tag: DatasetTag, out: Option<&Path>) -> Result<(), Failure> {
    if !root.is_dir() {
        return Err(Failure(3, format!("{} is not a directory", root.display())));
    }
    let manifest = load_manifest(root, tag)?;
    let out = out.unwrap_or(root);
    std::fs::create_dir_all(out).map_err(|e| Failure(3, format!("{}: {e}", out.display())))?;
    write_manifest_file(&out.join(MANIFEST_FILE), manifest.entries())?;
    let report = validate_counts(&manifest, tag).map_err(|e| Failure(2, e.to_string()))?;
    write_json(&out.join("validation.json"), &report)?;
    println!(
        "{}: {} recordings, {} segments (actuation {}, exhalation {}, inhalation {})",
        tag,
        report.recordings,
        manifest.entries().len(),
        report.counts[0],
        report.counts[1],
        report.counts[2]
    );
    if let Some(want) = report.expected_recordings.filter(|&n| n != report.recordings) {
        return Err(Failure(2, format!("expected {want} recordings, found {}", report.recordings)));
    }
    Ok(())
}

fn synth(cli: &Cli, positional: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg: SynthConfig = match positional.or_else(|| cli.config.clone()) {
        Some(path) => serde_json::from_str(&read_config(&path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = cli.seed.or(env_seed()?) {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure(2, e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("synth_seed{}", cfg.seed)));
    let corpus = synth_generate(&cfg);
    let manifest = dataset::write_synth_tree(&out, &corpus)?;
    println!("{}: {} recordings, {} segments -> {}", corpus.dataset(), manifest.recording_count(), manifest.entries().len(), out.display());
    Ok(())
}

fn run(cli: &Cli, positional: Option<PathBuf>) -> Result<(), Failure> {
    let path = config_path(positional, cli.config.clone())?;
    let mut cfg = ExperimentConfig::from_json(&read_config(&path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed.or(env_seed()?) {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let summary = run_experiment(&cfg, cli.workers).map_err(|e: RunError| Failure(e.exit_code(), e.to_string()))?;
    for row in &summary.rows {
        let budget = row.budget_s.map(|b| format!(" budget {b} s")).unwrap_or_default();
        println!("{} {}{}: UAR {:.4}", row.model, row.eval_method, budget, row.uar());
    }
    println!("{}", cfg.run_dir().display());
    Ok(())
}

fn report(cli: &Cli, run_dirs: &[PathBuf]) -> Result<(), Failure> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    let files = write_report(run_dirs, &out).map_err(|e| Failure(e.exit_code(), e.to_string()))?;
    println!("{}", files.markdown.display());
    println!("{}", files.csv.display());
    for p in &files.plots {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare { root, dataset } => prepare(root, *dataset, cli.out.as_deref()),
        Command::Synth { file } => synth(&cli, file.clone()),
        Command::Run { file } => run(&cli, file.clone()),
        Command::Report { run_dirs } => report(&cli, run_dirs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
