//! Experiment configs and end-to-end runs of the named training configurations.
//!
//! A run directory `<output_dir>/<NAME>_seed<seed>/` holds:
//!
//! ```text
//! config.json              resolved experiment config
//! results.json             every evaluation row
//! results.csv              flat rows (model,eval_method,recall_*,uar,f1_macro)
//! timing.log               wall-clock seconds per stage (not reproducible)
//! <stage>/checkpoint/      checkpoint directory
//! <stage>/run_record.json
//! <stage>/metrics.csv      epoch,train_loss,val_loss,lr
//! <stage>/eval.json        EvalReport of that stage's model, when evaluated
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use inhaler_core::corpus::{make_loso_folds, split_holdout, subsample_segments, CorpusManifest, SplitPlan, BUDGET_SCHEDULE_S};
use inhaler_core::metrics::{evaluate_holdout, select_subjects, CvSummary, EvalReport};
use inhaler_core::model::{ModelCheckpoint, Provenance};
use inhaler_core::train::{
    finetune, pretrain, refinetune, Domain, PretrainConfig, RunRecord, TrainConfig, TrainOutcome, TrainingConfiguration,
};
use inhaler_core::{DatasetTag, LabeledSegment, ModelConfig, Wav2Vec2, Waveform};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{load_manifest, load_recordings, load_segments, MANIFEST_FILE};
use crate::formats::read_manifest_file;
use crate::{write_json, IoError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    #[default]
    Holdout,
    Loso,
}

impl EvalMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Holdout => "holdout",
            Self::Loso => "loso",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    /// Dataset tree of dry-powder inhaler audio.
    pub dpi: Option<PathBuf>,
    /// Dataset tree of metered-dose inhaler audio.
    pub mdi: Option<PathBuf>,
}

fn default_budgets() -> Vec<f64> {
    BUDGET_SCHEDULE_S.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Declarative description of one run. Omitted sections take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// LS_DPI, DPI_DPI, MDI_MDI or MDI_DPI.
    pub configuration: String,
    #[serde(default)]
    pub corpora: CorpusPaths,
    /// Starting checkpoint for LS_DPI; a fresh model when absent.
    #[serde(default)]
    pub pretrained_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval_method: EvalMethod,
    #[serde(default = "default_budgets")]
    pub budgets_s: Vec<f64>,
    /// Seeds pretraining, fine-tuning and budget subsampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("training failed ({context}): {reason}")]
    Training { context: String, reason: String },
}

impl RunError {
    /// Process exit code: 2 configuration, 3 IO, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Training { .. } => 4,
        }
    }

    fn training(context: impl Into<String>) -> impl FnOnce(String) -> Self {
        let context = context.into();
        move |reason| Self::Training { context, reason }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn configuration(&self) -> Result<TrainingConfiguration, RunError> {
        self.configuration.parse().map_err(|e: inhaler_core::train::TrainError| RunError::Config(e.to_string()))
    }

    /// Applies `seed` to every stage and checks the document.
    pub fn resolve(mut self) -> Result<Self, RunError> {
        let name = self.configuration()?;
        self.pretrain.seed = self.seed;
        self.train.seed = self.seed;
        self.model.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.pretrain.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.budgets_s.iter().any(|b| !(*b > 0.0)) {
            return Err(RunError::Config("budgets_s entries must be positive".into()));
        }
        let mut domains = BTreeSet::from([name.finetune_domain(), name.eval_domain()]);
        domains.extend(name.refinetune_domain());
        for d in domains {
            if self.corpus_path(d).is_none() {
                return Err(RunError::Config(format!("{name} needs corpora.{}", domain_key(d))));
            }
        }
        if self.eval_method == EvalMethod::Loso && name.finetune_domain() != name.eval_domain() {
            return Err(RunError::Config(format!("{name} trains and tests on different domains; use holdout")));
        }
        if self.pretrained_checkpoint.is_some() && name.pretrain_domain().is_some() {
            return Err(RunError::Config(format!("{name} pretrains its own model; drop pretrained_checkpoint")));
        }
        Ok(self)
    }

    fn corpus_path(&self, d: Domain) -> Option<&PathBuf> {
        match d {
            Domain::Dpi => self.corpora.dpi.as_ref(),
            Domain::Mdi => self.corpora.mdi.as_ref(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("{}_seed{}", self.configuration, self.seed))
    }
}

fn domain_key(d: Domain) -> &'static str {
    match d {
        Domain::Dpi => "dpi",
        Domain::Mdi => "mdi",
    }
}

/// One evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub eval_method: String,
    pub test_domain: Domain,
    pub budget_s: Option<f64>,
    pub report: Option<EvalReport>,
    pub cv: Option<CvSummary>,
}

impl ResultRow {
    /// `recall_*` (empty when the class was absent), `uar`, `f1_macro`.
    pub fn metric_cells(&self) -> [Option<f64>; 5] {
        if let Some(r) = &self.report {
            [r.recall[0], r.recall[1], r.recall[2], Some(r.uar), Some(r.macro_f1)]
        } else if let Some(cv) = &self.cv {
            let m = |x: &Option<inhaler_core::metrics::MeanStd>| x.map(|v| v.mean);
            [m(&cv.recall[0]), m(&cv.recall[1]), m(&cv.recall[2]), Some(cv.uar.mean), Some(cv.macro_f1.mean)]
        } else {
            [None; 5]
        }
    }

    pub fn uar(&self) -> f64 {
        self.metric_cells()[3].unwrap_or(f64::NAN)
    }
}

pub const CSV_HEADER: &str = "model,eval_method,recall_actuation,recall_exhalation,recall_inhalation,uar,f1_macro";

pub fn csv_rows(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.metric_cells().iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()).collect();
        writeln!(out, "{},{},{}", r.model, r.eval_method, cells.join(",")).expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub configuration: String,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
}

struct Corpus {
    segments: Vec<LabeledSegment>,
    recordings: Vec<(String, Waveform)>,
    subjects: Vec<String>,
}

fn dataset_tag(root: &Path, domain: Domain) -> Result<DatasetTag, IoError> {
    let manifest = root.join(MANIFEST_FILE);
    if manifest.is_file() {
        if let Some(first) = read_manifest_file(&manifest)?.first() {
            return Ok(first.dataset);
        }
    }
    Ok(match domain {
        Domain::Dpi => DatasetTag::DpiWatch,
        Domain::Mdi => DatasetTag::Rda,
    })
}

fn load_corpus(root: &Path, domain: Domain) -> Result<Corpus, IoError> {
    let manifest: CorpusManifest = load_manifest(root, dataset_tag(root, domain)?)?;
    Ok(Corpus {
        segments: load_segments(root, &manifest)?,
        recordings: load_recordings(root, &manifest)?,
        subjects: manifest.subjects(),
    })
}

struct Timing(Mutex<Vec<(String, f64)>>);

impl Timing {
    fn time<T>(&self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.lock().expect("timing lock").push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }
}

fn metrics_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for e in &record.epochs {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, val, e.lr).expect("writing to a String");
    }
    out
}

fn write_stage(dir: &Path, outcome: &TrainOutcome, configuration: &str) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(IoError::fs(dir))?;
    save_checkpoint(&dir.join("checkpoint"), &outcome.checkpoint)?;
    let mut record = outcome.record.clone();
    record.configuration = Some(configuration.to_string());
    write_json(&dir.join("run_record.json"), &record)?;
    let path = dir.join("metrics.csv");
    std::fs::write(&path, metrics_csv(&record)).map_err(IoError::fs(&path))
}

fn evaluate(ckpt: &ModelCheckpoint, segments: &[LabeledSegment], plan: &SplitPlan, context: &str) -> Result<EvalReport, RunError> {
    let model = ckpt.clone().into_model().map_err(|e| RunError::training(context)(e.to_string()))?;
    evaluate_holdout(&model, segments, plan).map_err(|e| RunError::training(context)(e.to_string()))
}

fn pretrained_base(
    cfg: &ExperimentConfig,
    name: TrainingConfiguration,
    corpus: &Corpus,
    subjects: &BTreeSet<String>,
    dir: &Path,
    timing: &Timing,
) -> Result<ModelCheckpoint, RunError> {
    if name.pretrain_domain().is_none() {
        return match &cfg.pretrained_checkpoint {
            Some(path) => Ok(load_checkpoint(path)?),
            None => {
                let model = Wav2Vec2::new(cfg.model.clone(), cfg.seed).map_err(|e| RunError::Config(e.to_string()))?;
                Ok(ModelCheckpoint::capture(&model, Provenance::default()))
            }
        };
    }
    let waves: Vec<Waveform> =
        corpus.recordings.iter().filter(|(s, _)| subjects.contains(s)).map(|(_, w)| w.clone()).collect();
    let context = format!("{} pretrain", dir.display());
    let outcome = timing
        .time(&context, || pretrain(&waves, &cfg.model, &cfg.pretrain))
        .map_err(|e| RunError::training(&context)(e.to_string()))?;
    write_stage(dir, &outcome, &cfg.configuration)?;
    Ok(outcome.checkpoint)
}

/// Runs `jobs` on up to `workers` threads; results come back in job order.
fn parallel<T: Send, R: Send>(jobs: Vec<T>, workers: usize, f: impl Fn(usize, T) -> R + Sync) -> Vec<R> {
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let Some((i, job)) = queue.lock().expect("queue lock").pop() else { break };
                let r = f(i, job);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Executes a resolved experiment and writes its run directory.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunSummary, RunError> {
    let cfg = cfg.clone().resolve()?;
    let name = cfg.configuration()?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(IoError::fs(&run_dir))?;
    write_json(&run_dir.join("config.json"), &cfg)?;
    let timing = Timing(Mutex::new(Vec::new()));

    let ft_domain = name.finetune_domain();
    let load = |d: Domain| -> Result<Corpus, RunError> {
        let path = cfg.corpus_path(d).expect("checked by resolve");
        Ok(timing.time(&format!("load {}", domain_key(d)), || load_corpus(path, d))?)
    };
    let ft_corpus = load(ft_domain)?;
    let eval_corpus = if name.eval_domain() == ft_domain { None } else { Some(load(name.eval_domain())?) };
    let eval_corpus = eval_corpus.as_ref().unwrap_or(&ft_corpus);

    let mut rows = Vec::new();
    match cfg.eval_method {
        EvalMethod::Loso => {
            let folds = make_loso_folds(&ft_corpus.subjects).map_err(|e| RunError::Config(e.to_string()))?;
            let jobs: Vec<(usize, SplitPlan)> = folds.into_iter().enumerate().collect();
            let reports = parallel(jobs, workers, |_, (i, plan)| -> Result<EvalReport, RunError> {
                let fold_dir = run_dir.join(format!("fold_{}", i + 1));
                let base = pretrained_base(&cfg, name, &ft_corpus, &plan.train, &fold_dir.join("pretrain"), &timing)?;
                let train = select_subjects(&ft_corpus.segments, &plan.train);
                let val = select_subjects(&ft_corpus.segments, &plan.validation);
                let context = format!("fold {} finetune", i + 1);
                let outcome = timing
                    .time(&context, || finetune(&base, &train, &val, &cfg.train))
                    .map_err(|e| RunError::training(&context)(e.to_string()))?;
                let stage = fold_dir.join("finetune");
                write_stage(&stage, &outcome, &cfg.configuration)?;
                let report = evaluate(&outcome.checkpoint, &ft_corpus.segments, &plan, &context)?;
                write_json(&stage.join("eval.json"), &report)?;
                Ok(report)
            });
            let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
            rows.push(ResultRow {
                model: cfg.configuration.clone(),
                eval_method: EvalMethod::Loso.as_str().into(),
                test_domain: ft_domain,
                budget_s: None,
                report: None,
                cv: Some(CvSummary::from_folds(reports)),
            });
        }
        EvalMethod::Holdout => {
            let plan = split_holdout(&ft_corpus.subjects).map_err(|e| RunError::Config(e.to_string()))?;
            let eval_plan = split_holdout(&eval_corpus.subjects).map_err(|e| RunError::Config(e.to_string()))?;
            let base = pretrained_base(&cfg, name, &ft_corpus, &plan.train, &run_dir.join("pretrain"), &timing)?;
            let train = select_subjects(&ft_corpus.segments, &plan.train);
            let val = select_subjects(&ft_corpus.segments, &plan.validation);
            let outcome = timing
                .time("finetune", || finetune(&base, &train, &val, &cfg.train))
                .map_err(|e| RunError::training("finetune")(e.to_string()))?;
            let stage = run_dir.join("finetune");
            write_stage(&stage, &outcome, &cfg.configuration)?;
            let report = evaluate(&outcome.checkpoint, &eval_corpus.segments, &eval_plan, "finetune")?;
            write_json(&stage.join("eval.json"), &report)?;
            let unadapted = if name.refinetune_domain().is_some() { "MDI_MDI".to_string() } else { cfg.configuration.clone() };
            rows.push(ResultRow {
                model: unadapted.clone(),
                eval_method: EvalMethod::Holdout.as_str().into(),
                test_domain: name.eval_domain(),
                budget_s: None,
                report: Some(report),
                cv: None,
            });
            if ft_domain != name.eval_domain() {
                let own = evaluate(&outcome.checkpoint, &ft_corpus.segments, &plan, "finetune")?;
                write_json(&stage.join("eval_own_domain.json"), &own)?;
                rows.push(ResultRow {
                    model: format!("{unadapted}@{}", domain_key(ft_domain)),
                    eval_method: EvalMethod::Holdout.as_str().into(),
                    test_domain: ft_domain,
                    budget_s: None,
                    report: Some(own),
                    cv: None,
                });
            }
            if name.refinetune_domain().is_some() {
                let pool = select_subjects(&eval_corpus.segments, &eval_plan.train);
                let val = select_subjects(&eval_corpus.segments, &eval_plan.validation);
                let source = outcome.checkpoint;
                let results = parallel(cfg.budgets_s.clone(), workers, |_, budget| -> Result<ResultRow, RunError> {
                    let subset = subsample_segments(&pool, budget, cfg.seed);
                    let context = format!("refinetune budget {budget} s");
                    let out = timing
                        .time(&context, || refinetune(&source, &subset, &val, &cfg.train, budget))
                        .map_err(|e| RunError::training(&context)(e.to_string()))?;
                    let stage = run_dir.join(format!("refinetune_{budget}s"));
                    write_stage(&stage, &out, &cfg.configuration)?;
                    let report = evaluate(&out.checkpoint, &eval_corpus.segments, &eval_plan, &context)?;
                    write_json(&stage.join("eval.json"), &report)?;
                    Ok(ResultRow {
                        model: cfg.configuration.clone(),
                        eval_method: EvalMethod::Holdout.as_str().into(),
                        test_domain: name.eval_domain(),
                        budget_s: Some(budget),
                        report: Some(report),
                        cv: None,
                    })
                });
                for r in results {
                    rows.push(r?);
                }
            }
        }
    }

    let summary = RunSummary { configuration: cfg.configuration.clone(), seed: cfg.seed, rows };
    write_json(&run_dir.join("results.json"), &summary)?;
    let csv = run_dir.join("results.csv");
    std::fs::write(&csv, csv_rows(&summary.rows)).map_err(IoError::fs(&csv))?;
    let mut log = String::new();
    for (stage, secs) in timing.0.into_inner().expect("timing lock") {
        writeln!(log, "{stage}\t{secs:.3}").expect("writing to a String");
    }
    let log_path = run_dir.join("timing.log");
    std::fs::write(&log_path, log).map_err(IoError::fs(&log_path))?;
    Ok(summary)
}
