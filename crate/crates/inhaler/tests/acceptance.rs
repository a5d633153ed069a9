//! Prints one PASS/FAIL line per acceptance criterion.
//!
//! Criteria 1-6 and 10 are exact properties and fail the test when violated.
//! Criteria 7-9 and the pretraining loss ratio are empirical desk-scale
//! outcomes: their lines are printed as measured and do not abort the run.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use inhaler::core::corpus::{make_loso_folds, split_holdout, synth_generate, SynthConfig, SynthDomain};
use inhaler::core::metrics::{f1_scores, recall_per_class, render, uar};
use inhaler::core::model::loss::diversity_loss_grad;
use inhaler::core::model::quantizer::{perplexity, quantize, quantize_backward};
use inhaler::core::model::{ModelParams, PretrainItem, QuantizerMode};
use inhaler::core::nn::Mat;
use inhaler::core::optim::{AdamW, AdamWConfig, OneCycle};
use inhaler::core::rng;
use inhaler::core::train::{EarlyStopping, PretrainConfig, RunRecord, StopDecision, TrainConfig};
use inhaler::core::{ConfusionMatrix, ModelConfig, Wav2Vec2};
use inhaler::dataset::write_synth_tree;
use inhaler::experiment::{run_experiment, ExperimentConfig, ResultRow, RunSummary};
use inhaler::read_json;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Line {
    id: &'static str,
    enforced: bool,
    pass: bool,
}

fn report(lines: &mut Vec<Line>, id: &'static str, title: &str, enforced: bool, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = match out {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!("{} {id:>2} {title}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { id, enforced, pass });
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        encoder_channels: 4,
        context_blocks: 2,
        model_dim: 8,
        attention_heads: 2,
        ffn_dim: 16,
        quantizer_groups: 2,
        codebook_entries: 5,
        num_negatives: 4,
        mask_prob: 0.3,
        mask_span: 2,
        ..ModelConfig::default()
    }
}

fn noise_wave(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..len).map(|i| 0.5 * (i as f64 * 0.07).sin() + 0.3 * r.random_range(-1.0..1.0)).collect()
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut r = rng::seeded(seed);
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

fn metric_oracle() -> Outcome {
    let mut r = rng::seeded(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let m: Vec<Vec<u64>> = (0..3).map(|_| (0..3).map(|_| r.random_range(1..50)).collect()).collect();
        let cm = ConfusionMatrix::from_rows(&m);
        let mut recall = [0.0; 3];
        let mut f1 = [0.0; 3];
        for i in 0..3 {
            let tp = m[i][i] as f64;
            let row: f64 = m[i].iter().sum::<u64>() as f64;
            let col: f64 = (0..3).map(|j| m[j][i]).sum::<u64>() as f64;
            recall[i] = tp / row;
            f1[i] = 2.0 * tp / (row + col);
        }
        let rec = recall_per_class(&cm);
        let f = f1_scores(&cm);
        for i in 0..3 {
            worst = worst.max((rec[i].unwrap() - recall[i]).abs()).max((f.per_class[i] - f1[i]).abs());
        }
        worst = worst.max((uar(&cm).unwrap() - recall.iter().sum::<f64>() / 3.0).abs());
        worst = worst.max((f.macro_f1 - f1.iter().sum::<f64>() / 3.0).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    let a = render((1.00 + 0.96 + 0.97) / 3.0);
    let b = render((0.52 + 0.68 + 0.42) / 3.0);
    ensure(a == "0.98" && b == "0.54", || format!("anchors rendered {a} and {b}"))?;
    Ok(format!("500 matrices, max deviation {worst:.1e}; anchors {a} and {b}"))
}

fn gradient_check() -> Outcome {
    let cfg = toy_config();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let model = Wav2Vec2::new(cfg.clone(), seed).unwrap();
        let a = noise_wave(320 * 15 + 400, seed);
        let b = noise_wave(320 * 12 + 400, seed + 100);
        let batch = [PretrainItem { wave: &a, seed: seed * 7 + 1 }, PretrainItem { wave: &b, seed: seed * 7 + 2 }];
        let mode = QuantizerMode { tau: 1.3, hard: false };
        let mut g = model.params.zeros_like();
        model.pretrain_objective(&batch, mode, Some(&mut g)).unwrap();
        let loss = |m: &Wav2Vec2| m.pretrain_objective(&batch, mode, None).unwrap().total;
        let mut r = rng::seeded(seed ^ 0xfd);
        let grads = g.tensors();
        let lens: Vec<usize> = model.params.tensors().iter().map(|(_, m)| m.data.len()).collect();
        for (ti, len) in lens.iter().enumerate() {
            for _ in 0..3 {
                let i = r.random_range(0..*len);
                let mut plus = model.clone();
                plus.params.tensors_mut()[ti].1.data[i] += h;
                let mut minus = model.clone();
                minus.params.tensors_mut()[ti].1.data[i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads[ti].1.data[i];
                if an.abs().max(numeric.abs()) >= 1e-7 {
                    worst = worst.max((an - numeric).abs() / an.abs().max(numeric.abs()));
                }
            }
        }
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    Ok(format!("20 seeds, worst relative error {worst:.1e}"))
}

fn frame_arithmetic() -> Outcome {
    let cfg = ModelConfig::default();
    let mut r = rng::seeded(31);
    for _ in 0..1000 {
        let len = r.random_range(400..=160_000);
        let mut l = len as i64;
        for (&k, &s) in cfg.encoder_kernels.iter().zip(&cfg.encoder_strides) {
            l = (l - k as i64) / s as i64 + 1;
        }
        ensure(cfg.frame_count(len) == Some(l as usize), || format!("length {len}: {:?} vs {l}", cfg.frame_count(len)))?;
    }
    Ok("1000 lengths exact".into())
}

fn quantizer_properties() -> Outcome {
    let cfg = toy_config();
    let (g, v) = (cfg.quantizer_groups, cfg.codebook_entries);
    let params = ModelParams::init(&cfg, 4);
    let z = random_mat(30, cfg.model_dim, 5);
    let noise: Vec<f64> = (0..30 * g * v).map(|i| (i as f64 * 0.37).sin()).collect();
    let (out, _) = quantize(&params, &cfg, &z, Some(&noise), QuantizerMode { tau: 2.0, hard: true });
    for r in 0..out.selections.rows {
        for gi in 0..g {
            let row = &out.selections.row(r)[gi * v..(gi + 1) * v];
            ensure(row.iter().filter(|&&x| x == 1.0).count() == 1 && row.iter().sum::<f64>() == 1.0, || {
                format!("row {r} group {gi} not one-hot")
            })?;
        }
    }
    let uniform = Mat::from_vec(3, 2 * 4, vec![0.25; 24]);
    let mut collapsed = Mat::zeros(3, 2 * 4);
    for r in 0..3 {
        collapsed.row_mut(r)[1] = 1.0;
        collapsed.row_mut(r)[6] = 1.0;
    }
    ensure(perplexity(&uniform, 2, 4) == vec![4.0, 4.0] && perplexity(&collapsed, 2, 4) == vec![1.0, 1.0], || {
        "perplexity extremes".into()
    })?;
    let mut gains = Vec::new();
    for seed in 0..10 {
        let mut p = ModelParams::init(&cfg, seed);
        p.quantizer.logits.w.scale(8.0);
        p.quantizer.logits.b.data.iter_mut().step_by(v).for_each(|b| *b += 3.0);
        let z = random_mat(32, cfg.model_dim, 100 + seed);
        let mode = QuantizerMode { tau: 1.0, hard: false };
        let mean_ppl = |p: &ModelParams| quantize(p, &cfg, &z, None, mode).0.perplexity.iter().sum::<f64>() / g as f64;
        let initial = mean_ppl(&p);
        let mut opt = AdamW::new(&p, AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() });
        for _ in 0..200 {
            let (out, cache) = quantize(&p, &cfg, &z, None, mode);
            let (_, row) = diversity_loss_grad(&[&out.code_probs], g, v);
            let mut dprobs = Mat::zeros(z.rows, g * v);
            (0..z.rows).for_each(|r| dprobs.row_mut(r).copy_from_slice(&row));
            let mut grads = p.zeros_like();
            quantize_backward(&p, &cfg, &out, &cache, &Mat::zeros(z.rows, cfg.model_dim), Some(&dprobs), &mut grads);
            opt.step(&mut p, &grads, 1e-2, |n| n.starts_with("quantizer.logits"));
        }
        let fin = mean_ppl(&p);
        ensure(fin > initial, || format!("seed {seed}: perplexity {initial:.3} -> {fin:.3}"))?;
        gains.push(fin - initial);
    }
    let min = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("one-hot exact, perplexity V and 1, diversity raises perplexity on 10 seeds (min gain {min:.3})"))
}

fn split_safety() -> Outcome {
    let mut r = rng::seeded(99);
    let mut corpora = 0;
    while corpora < 1000 {
        let n = r.random_range(3..40);
        let subjects: Vec<String> = (0..n).map(|_| format!("P{}", r.random_range(0..10_000))).collect();
        let distinct: BTreeSet<String> = subjects.iter().cloned().collect();
        if distinct.len() < 3 {
            continue;
        }
        corpora += 1;
        let plan = split_holdout(&subjects).unwrap();
        ensure(
            plan.train.is_disjoint(&plan.validation) && plan.train.is_disjoint(&plan.test) && plan.validation.is_disjoint(&plan.test),
            || format!("hold-out leakage in {subjects:?}"),
        )?;
        let folds = make_loso_folds(&subjects).unwrap();
        let mut tested = Vec::new();
        for f in &folds {
            ensure(f.train.is_disjoint(&f.validation) && f.train.is_disjoint(&f.test) && f.validation.is_disjoint(&f.test), || {
                format!("fold leakage in {subjects:?}")
            })?;
            tested.extend(f.test.iter().cloned());
        }
        tested.sort();
        ensure(tested == distinct.iter().cloned().collect::<Vec<_>>(), || format!("test subjects {tested:?}"))?;
    }
    Ok("1000 corpora, no leakage, each subject tested once".into())
}

fn stopping_and_schedule() -> Outcome {
    let mut r = rng::seeded(8);
    for _ in 0..1000 {
        let n = r.random_range(1..60);
        let patience = r.random_range(1..8);
        let mut l = 2.0;
        let losses: Vec<f64> = (0..n)
            .map(|_| {
                l += r.random_range(-0.1..0.08);
                l
            })
            .collect();
        let mut best = f64::INFINITY;
        let mut best_epoch = 0;
        let mut want = n;
        for (i, &x) in losses.iter().enumerate() {
            if best_epoch == 0 || x < best - 1e-6 {
                best = x;
                best_epoch = i + 1;
            }
            if i + 1 - best_epoch >= patience {
                want = i + 1;
                break;
            }
        }
        let mut s = EarlyStopping::new(patience);
        let got = losses.iter().position(|&x| s.observe(x) == StopDecision::Stop).map_or(n, |i| i + 1);
        ensure(got == want, || format!("stopped at {got}, scan says {want}: {losses:?}"))?;
    }
    let pi = std::f64::consts::PI;
    for (max, total, frac) in [(3e-5, 200, 0.1), (1e-3, 57, 0.08), (5e-4, 1000, 0.3)] {
        let s = OneCycle::new(max, total, frac);
        let w = s.warmup_steps;
        let (init, fin) = (max / 25.0, max / 25.0 / 1e4);
        for t in 0..total {
            let want = if t <= w {
                init + (max - init) * (1.0 - (pi * t as f64 / w as f64).cos()) / 2.0
            } else {
                fin + (max - fin) * (1.0 + (pi * (t - w) as f64 / (total - 1 - w) as f64).cos()) / 2.0
            };
            ensure((s.lr(t) - want).abs() <= 1e-12, || format!("lr({t}) = {} vs {want}", s.lr(t)))?;
        }
    }
    Ok("1000 loss sequences match the scan; one-cycle trace matches closed form".into())
}

/// Desk-scale preset shared by criteria 7-10.
fn experiment(name: &str, dpi: &Path, mdi: &Path, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(&format!(r#"{{"configuration":"{name}"}}"#)).unwrap();
    cfg.corpora.dpi = Some(dpi.to_path_buf());
    cfg.corpora.mdi = Some(mdi.to_path_buf());
    cfg.pretrain = PretrainConfig { epochs: 10, lr_max: 1e-3, ..PretrainConfig::default() };
    cfg.train = TrainConfig { lr_max: 1e-3, ..TrainConfig::default() };
    cfg.seed = 1;
    cfg.output_dir = out.to_path_buf();
    cfg
}

struct Runs {
    same: RunSummary,
    adapt: RunSummary,
    pretrain_losses: Vec<f64>,
    seconds: f64,
}

fn run_pair(dpi: &Path, mdi: &Path, out: &Path) -> Runs {
    let t = Instant::now();
    let same_cfg = experiment("DPI_DPI", dpi, mdi, out);
    let same = run_experiment(&same_cfg, 1).unwrap();
    let adapt = run_experiment(&experiment("MDI_DPI", dpi, mdi, out), 1).unwrap();
    let record: RunRecord = read_json(&same_cfg.run_dir().join("pretrain").join("run_record.json")).unwrap();
    Runs { same, adapt, pretrain_losses: record.train_losses(), seconds: t.elapsed().as_secs_f64() }
}

fn row<'a>(s: &'a RunSummary, model: &str) -> &'a ResultRow {
    s.rows.iter().find(|r| r.model == model && r.budget_s.is_none()).unwrap()
}

fn same_domain(r: &Runs) -> Outcome {
    let row = row(&r.same, "DPI_DPI");
    let u = row.uar();
    let inhale = row.report.as_ref().and_then(|rep| rep.recall[2]).unwrap_or(f64::NAN);
    ensure(u >= 0.95, || format!("Hold-Out UAR {u:.4}"))?;
    Ok(format!("Hold-Out UAR {u:.4}, inhalation recall {inhale:.2}"))
}

fn cross_domain(r: &Runs) -> Outcome {
    let same = row(&r.same, "DPI_DPI").uar();
    let cross = row(&r.adapt, "MDI_MDI").uar();
    ensure(same - cross >= 0.15, || format!("same {same:.4} cross {cross:.4}, drop {:.4}", same - cross))?;
    Ok(format!("same-domain {same:.4}, cross-domain {cross:.4}, drop {:.4}", same - cross))
}

fn adaptation(r: &Runs) -> Outcome {
    let same = row(&r.same, "DPI_DPI").uar();
    let baseline = row(&r.adapt, "MDI_MDI").uar();
    let mut curve: Vec<(f64, f64)> = r.adapt.rows.iter().filter_map(|x| x.budget_s.map(|b| (b, x.uar()))).collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let shown: Vec<String> = curve.iter().map(|(b, u)| format!("{b}s {u:.3}")).collect();
    let shown = shown.join(", ");
    let budgets: Vec<f64> = curve.iter().map(|c| c.0).collect();
    ensure(budgets == [15.0, 30.0, 60.0, 120.0, 270.0], || format!("budgets {budgets:?}"))?;
    for w in curve.windows(2) {
        ensure(w[1].1 >= w[0].1 - 0.02, || {
            format!("{shown}; drop {:.4} from {} s to {} s exceeds 0.02", w[0].1 - w[1].1, w[0].0, w[1].0)
        })?;
    }
    let full = curve[4].1;
    ensure((same - full).abs() <= 0.03, || format!("{shown}; 270 s {full:.4} vs same-domain {same:.4}"))?;
    let gain = curve[0].1 - baseline;
    ensure(gain >= 0.15, || format!("{shown}; 15 s recovers {gain:.4} over {baseline:.4}"))?;
    Ok(format!("{shown}; baseline {baseline:.3}"))
}

fn pretrain_ratio(r: &Runs) -> Outcome {
    let l = &r.pretrain_losses;
    let (first, last) = (l[0], l[l.len() - 1]);
    let ratio = last / first;
    ensure(ratio < 0.5, || format!("{} epochs: loss {first:.3} -> {last:.3}, ratio {ratio:.2}", l.len()))?;
    Ok(format!("{} epochs: loss {first:.3} -> {last:.3}, ratio {ratio:.2}", l.len()))
}

fn main() {
    let mut lines = Vec::new();
    report(&mut lines, "1", "metric oracle equivalence", true, metric_oracle);
    report(&mut lines, "2", "gradient correctness", true, gradient_check);
    report(&mut lines, "3", "encoder arithmetic", true, frame_arithmetic);
    report(&mut lines, "4", "quantizer properties", true, quantizer_properties);
    report(&mut lines, "5", "split and fold safety", true, split_safety);
    report(&mut lines, "6", "early stopping and scheduler", true, stopping_and_schedule);

    let dir = tempfile::tempdir().unwrap();
    let dpi = dir.path().join("dpi");
    let mdi = dir.path().join("mdi");
    write_synth_tree(&dpi, &synth_generate(&SynthConfig::default())).unwrap();
    write_synth_tree(&mdi, &synth_generate(&SynthConfig { domain: SynthDomain::MdiLike, ..SynthConfig::default() })).unwrap();

    let first = run_pair(&dpi, &mdi, &dir.path().join("a"));
    println!("     desk-scale runs took {:.0} s", first.seconds);
    report(&mut lines, "7", "same-domain analogue", false, || same_domain(&first));
    report(&mut lines, "8", "cross-domain degradation", false, || cross_domain(&first));
    report(&mut lines, "9", "adaptation curve", false, || adaptation(&first));
    report(&mut lines, "p", "pretraining loss halves", false, || pretrain_ratio(&first));

    let second = run_pair(&dpi, &mdi, &dir.path().join("b"));
    report(&mut lines, "10", "determinism", true, || {
        ensure(first.same == second.same && first.adapt == second.adapt, || "metrics differ between repeats".into())?;
        ensure(first.pretrain_losses == second.pretrain_losses, || "pretraining losses differ".into())?;
        let n = first.same.rows.len() + first.adapt.rows.len();
        Ok(format!("{n} result rows and the pretraining trace repeat bit-exactly"))
    });
    println!("SKIP 11 public-data extension: needs the downloaded recordings");

    let failed: Vec<&str> = lines.iter().filter(|l| l.enforced && !l.pass).map(|l| l.id).collect();
    if !failed.is_empty() {
        eprintln!("enforced criteria failed: {failed:?}");
        std::process::exit(1);
    }
}
