//! Markdown tables, flat CSV and adaptation-curve plots from run directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use inhaler_core::metrics::{render, MeanStd};
use inhaler_core::train::{Domain, TrainingConfiguration};

use crate::experiment::{csv_rows, ResultRow, RunSummary, CSV_HEADER};
use crate::{read_json, IoError};

pub const RESULTS_FILE: &str = "results.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0} holds no {RESULTS_FILE}")]
    MissingResults(PathBuf),
    #[error("no run directories given")]
    NoRuns,
    #[error(transparent)]
    Io(#[from] IoError),
}

impl ReportError {
    /// 2 when reports are missing, 3 for other IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::MissingResults(_) | Self::NoRuns => 2,
            Self::Io(_) => 3,
        }
    }
}

pub fn load_run(dir: &Path) -> Result<RunSummary, ReportError> {
    let path = dir.join(RESULTS_FILE);
    if !path.is_file() {
        return Err(ReportError::MissingResults(dir.to_path_buf()));
    }
    Ok(read_json(&path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Models tested on the domain they were trained on.
    SameDomain,
    /// Models tested on the other device without adaptation.
    CrossDomain,
    /// Budgeted re-finetuning rows.
    Adaptation,
}

fn trained_on(row: &ResultRow) -> Option<Domain> {
    let name = row.model.split('@').next()?;
    let cfg: TrainingConfiguration = name.parse().ok()?;
    Some(if row.budget_s.is_some() { cfg.refinetune_domain().unwrap_or(cfg.finetune_domain()) } else { cfg.finetune_domain() })
}

pub fn table_kind(row: &ResultRow) -> TableKind {
    if row.budget_s.is_some() {
        TableKind::Adaptation
    } else if trained_on(row).is_some_and(|d| d != row.test_domain) {
        TableKind::CrossDomain
    } else {
        TableKind::SameDomain
    }
}

/// `4.5 Min`, `2 Min`, `30 Sec`.
pub fn budget_label(seconds: f64) -> String {
    if seconds >= 60.0 {
        let m = seconds / 60.0;
        if (m - m.round()).abs() < 1e-9 {
            format!("{} Min", m.round())
        } else {
            format!("{m:.1} Min")
        }
    } else {
        format!("{} Sec", seconds)
    }
}

fn cells(row: &ResultRow) -> Vec<String> {
    if let Some(cv) = &row.cv {
        let ms = |m: &Option<MeanStd>| m.map(|v| v.render()).unwrap_or_else(|| "n/a".into());
        vec![ms(&cv.recall[0]), ms(&cv.recall[1]), ms(&cv.recall[2]), cv.uar.render(), cv.macro_f1.render()]
    } else {
        row.metric_cells().iter().map(|c| c.map(render).unwrap_or_else(|| "n/a".into())).collect()
    }
}

fn eval_label(method: &str) -> &str {
    match method {
        "holdout" => "Hold-Out",
        "loso" => "LOSO-CV",
        other => other,
    }
}

fn table(out: &mut String, title: &str, head: &[&str], rows: &[Vec<String>]) {
    let w = |out: &mut String, cols: &[String]| writeln!(out, "| {} |", cols.join(" | ")).expect("writing to a String");
    writeln!(out, "### {title}\n").expect("writing to a String");
    w(out, &head.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    w(out, &head.iter().map(|_| "---".to_string()).collect::<Vec<_>>());
    for r in rows {
        w(out, r);
    }
    out.push('\n');
}

const METRIC_HEAD: [&str; 5] = ["Actuation", "Exhalation", "Inhalation", "UAR", "F1"];

/// Markdown for every row of every run.
pub fn markdown(runs: &[RunSummary]) -> String {
    let mut out = String::from("## Results\n\n");
    let rows = |kind: TableKind| runs.iter().flat_map(|r| r.rows.iter()).filter(move |row| table_kind(row) == kind);

    let same: Vec<Vec<String>> = rows(TableKind::SameDomain)
        .map(|r| [vec![r.model.clone(), eval_label(&r.eval_method).to_string()], cells(r)].concat())
        .collect();
    if !same.is_empty() {
        let head = [&["Model", "Evaluation Method"][..], &METRIC_HEAD].concat();
        table(&mut out, "Same-device performance", &head, &same);
    }
    let cross: Vec<Vec<String>> = rows(TableKind::CrossDomain).map(|r| [vec![r.model.clone()], cells(r)].concat()).collect();
    if !cross.is_empty() {
        let head = [&["Model"][..], &METRIC_HEAD].concat();
        table(&mut out, "Cross-device performance without adaptation", &head, &cross);
    }
    for run in runs {
        let mut budget: Vec<&ResultRow> = run.rows.iter().filter(|r| r.budget_s.is_some()).collect();
        if budget.is_empty() {
            continue;
        }
        budget.sort_by(|a, b| b.budget_s.partial_cmp(&a.budget_s).expect("finite budgets"));
        let body: Vec<Vec<String>> =
            budget.iter().map(|r| [vec![budget_label(r.budget_s.expect("filtered"))], cells(r)].concat()).collect();
        let head = [&["Fine-tuning Data"][..], &METRIC_HEAD].concat();
        table(&mut out, &format!("{} re-finetuning budgets (seed {})", run.configuration, run.seed), &head, &body);
    }
    out
}

/// Rows of every run under one header.
pub fn combined_csv(runs: &[RunSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for run in runs {
        out.extend(csv_rows(&run.rows).lines().skip(1).map(|l| format!("{l}\n")));
    }
    out
}

const SERIES: [(&str, &str); 4] =
    [("UAR", "#000000"), ("Actuation", "#1f77b4"), ("Exhalation", "#2ca02c"), ("Inhalation", "#d62728")];

/// SVG line plot of UAR and per-class recall against budget on a log axis.
/// `None` when the run has no budget rows.
pub fn adaptation_svg(run: &RunSummary) -> Option<String> {
    let mut pts: Vec<(f64, [Option<f64>; 5])> =
        run.rows.iter().filter_map(|r| r.budget_s.map(|b| (b, r.metric_cells()))).collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite budgets"));
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 130.0, 30.0, 50.0);
    let (lo, hi) = (pts[0].0.ln(), pts[pts.len() - 1].0.ln());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |b: f64| left + (b.ln() - lo) / span * (w - left - right);
    let y = |v: f64| top + (1.0 - v) * (h - top - bottom);

    let mut s = String::new();
    let mut p = |line: String| {
        s.push_str(&line);
        s.push('\n');
    };
    p(format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#));
    p(format!(r#"<rect width="{w}" height="{h}" fill="white"/>"#));
    p(format!(
        r#"<text x="{}" y="18" text-anchor="middle">{} adaptation curve (seed {})</text>"#,
        (w - right + left) / 2.0,
        run.configuration,
        run.seed
    ));
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        p(format!(r##"<line x1="{left}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#dddddd"/>"##, y(v), w - right));
        p(format!(r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y(v) + 4.0));
    }
    for (b, _) in &pts {
        p(format!(r##"<line x1="{0:.2}" y1="{top}" x2="{0:.2}" y2="{1}" stroke="#eeeeee"/>"##, x(*b), h - bottom));
        p(format!(r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x(*b), h - bottom + 16.0, b));
    }
    p(format!(r#"<text x="{}" y="{}" text-anchor="middle">fine-tuning budget (s, log scale)</text>"#, (w - right + left) / 2.0, h - 12.0));
    p(format!(r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">score</text>"#, (h - bottom + top) / 2.0));
    p(format!(r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - left - right, h - top - bottom));
    for (k, (name, color)) in SERIES.iter().enumerate() {
        let col = if k == 0 { 3 } else { k - 1 };
        let coords: Vec<String> =
            pts.iter().filter_map(|(b, c)| c[col].map(|v| format!("{:.2},{:.2}", x(*b), y(v)))).collect();
        let width = if k == 0 { 2.5 } else { 1.5 };
        p(format!(r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#, coords.join(" ")));
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted above");
            p(format!(r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#));
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        p(format!(r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="{width}"/>"#, w - right + 10.0, w - right + 30.0));
        p(format!(r#"<text x="{}" y="{}">{name}</text>"#, w - right + 36.0, ly + 4.0));
    }
    p("</svg>".into());
    Some(s)
}

/// Files written by [`write_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

pub fn write_report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportFiles, ReportError> {
    if run_dirs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out).map_err(IoError::fs(out))?;
    let put = |name: String, text: &str| -> Result<PathBuf, ReportError> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(IoError::fs(&path))?;
        Ok(path)
    };
    let markdown = put("report.md".into(), &markdown(&runs))?;
    let csv = put("results.csv".into(), &combined_csv(&runs))?;
    let mut plots = Vec::new();
    for run in &runs {
        if let Some(svg) = adaptation_svg(run) {
            plots.push(put(format!("adaptation_{}_seed{}.svg", run.configuration, run.seed), &svg)?);
        }
    }
    Ok(ReportFiles { markdown, csv, plots })
}
