use inhaler_core::model::context::{contextualize, positional_encoding};
use inhaler_core::model::loss::{diversity_loss, diversity_loss_grad};
use inhaler_core::model::masking::mask_spans;
use inhaler_core::model::quantizer::{perplexity, quantize, quantize_backward};
use inhaler_core::model::{ModelError, ModelParams, PretrainItem, QuantizerMode};
use inhaler_core::nn::{BlockParams, Mat};
use inhaler_core::optim::{AdamW, AdamWConfig};
use inhaler_core::rng;
use inhaler_core::{ModelConfig, Wav2Vec2};
use rand::Rng;

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
    (0..len).map(|i| 0.5 * (i as f64 * 0.03).sin() + 0.3 * r.random_range(-1.0..1.0)).collect()
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut r = rng::seeded(seed);
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Applies `floor((L - k) / s) + 1` layer by layer.
fn frames_oracle(len: usize, kernels: &[usize], strides: &[usize]) -> Option<usize> {
    let mut l = len as i64;
    for (&k, &s) in kernels.iter().zip(strides) {
        if l < k as i64 {
            return None;
        }
        l = (l - k as i64) / s as i64 + 1;
    }
    Some(l as usize)
}

#[test]
fn frame_counts_match_layer_arithmetic() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.hop(), 320);
    assert_eq!(cfg.receptive_field(), 400);
    let mut r = rng::seeded(31);
    for _ in 0..1000 {
        let len = r.random_range(400..=160_000);
        assert_eq!(cfg.frame_count(len), frames_oracle(len, &cfg.encoder_kernels, &cfg.encoder_strides), "{len}");
    }
    assert_eq!(cfg.frame_count(16_000), Some(49));
    assert_eq!(cfg.frame_count(400), Some(1));
    assert_eq!(cfg.frame_count(399), None);
}

#[test]
fn encoder_emits_the_predicted_frames() {
    let model = Wav2Vec2::new(ModelConfig { encoder_channels: 8, ..ModelConfig::default() }, 1).unwrap();
    for len in [400, 401, 719, 720, 16_000, 23_456] {
        let f = model.encode_features(&noise_wave(len, len as u64)).unwrap();
        assert_eq!(Some(f.rows), frames_oracle(len, &model.config.encoder_kernels, &model.config.encoder_strides));
        assert_eq!(f.cols, model.config.model_dim);
    }
    assert!(matches!(model.encode_features(&[0.1; 399]), Err(ModelError::InputTooShort { len: 399, .. })));
}

#[test]
fn mask_examples() {
    let m = mask_spans(100, 0.0, 5, 9).unwrap();
    assert_eq!(m.iter().filter(|&&b| b).count(), 5);
    let first = m.iter().position(|&b| b).unwrap();
    assert!(m[first..first + 5].iter().all(|&b| b));
    assert!(mask_spans(100, 1.0, 5, 9).unwrap().iter().all(|&b| b));
    assert_eq!(mask_spans(5, 0.5, 5, 0), Err(ModelError::SequenceTooShort { frames: 5, required: 6 }));
    assert_eq!(mask_spans(100, 0.065, 5, 3).unwrap(), mask_spans(100, 0.065, 5, 3).unwrap());
}

#[test]
fn mask_coverage_monte_carlo() {
    let total: usize = (0..1000u64).map(|s| mask_spans(1000, 0.065, 5, s).unwrap().iter().filter(|&&b| b).count()).sum();
    let frac = total as f64 / 1_000_000.0;
    // each frame stays unmasked only if none of the 5 starts covering it fire
    let expected = 1.0 - (1.0f64 - 0.065).powi(5);
    assert!((0.20..=0.35).contains(&frac), "masked fraction {frac}");
    assert!((frac - expected).abs() < 0.01, "masked fraction {frac}, expected about {expected}");
}

#[test]
fn hard_selections_are_one_hot() {
    let cfg = toy_config();
    let params = ModelParams::init(&cfg, 4);
    let z = random_mat(30, cfg.model_dim, 5);
    let noise: Vec<f64> = (0..30 * cfg.quantizer_groups * cfg.codebook_entries).map(|i| (i as f64 * 0.37).sin()).collect();
    let (out, _) = quantize(&params, &cfg, &z, Some(&noise), QuantizerMode { tau: 2.0, hard: true });
    let v = cfg.codebook_entries;
    for r in 0..out.selections.rows {
        for g in 0..cfg.quantizer_groups {
            let row = &out.selections.row(r)[g * v..(g + 1) * v];
            assert_eq!(row.iter().filter(|&&x| x != 0.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }
}

#[test]
fn perplexity_extremes() {
    let (g, v) = (2, 4);
    let uniform = Mat::from_vec(3, g * v, vec![0.25; 3 * g * v]);
    assert_eq!(perplexity(&uniform, g, v), vec![4.0, 4.0]);
    assert_eq!(diversity_loss(&uniform, g, v), 0.0);
    let mut collapsed = Mat::zeros(3, g * v);
    for r in 0..3 {
        collapsed.row_mut(r)[1] = 1.0;
        collapsed.row_mut(r)[v + 2] = 1.0;
    }
    assert_eq!(perplexity(&collapsed, g, v), vec![1.0, 1.0]);
    assert_eq!(diversity_loss(&collapsed, g, v), 0.75);

    // uniform usage spread over frames with one-hot rows
    let mut spread = Mat::zeros(4, v);
    for r in 0..4 {
        spread.row_mut(r)[r] = 1.0;
    }
    assert!((perplexity(&spread, 1, v)[0] - 4.0).abs() < 1e-12);
}

#[test]
fn diversity_matches_entropy_formula() {
    let mut r = rng::seeded(8);
    for _ in 0..50 {
        let (g, v, t) = (2, 6, 7);
        let mut probs = Mat::zeros(t, g * v);
        for row in 0..t {
            for gi in 0..g {
                let w: Vec<f64> = (0..v).map(|_| r.random_range(0.0..1.0)).collect();
                let s: f64 = w.iter().sum();
                for (k, x) in w.iter().enumerate() {
                    probs.row_mut(row)[gi * v + k] = x / s;
                }
            }
        }
        let mut expect = 0.0;
        for gi in 0..g {
            let avg: Vec<f64> = (0..v).map(|k| (0..t).map(|row| probs.row(row)[gi * v + k]).sum::<f64>() / t as f64).collect();
            let h: f64 = avg.iter().map(|p| -p * p.ln()).sum();
            expect += (v as f64 - h.exp()) / (g * v) as f64;
        }
        assert!((diversity_loss(&probs, g, v) - expect).abs() < 1e-12);
    }
}

#[test]
fn diversity_gradient_raises_perplexity() {
    let cfg = toy_config();
    let (g, v) = (cfg.quantizer_groups, cfg.codebook_entries);
    for seed in 0..10 {
        let mut params = ModelParams::init(&cfg, seed);
        // start from a sharply peaked code distribution
        params.quantizer.logits.w.scale(8.0);
        params.quantizer.logits.b.data.iter_mut().step_by(v).for_each(|b| *b += 3.0);
        let z = random_mat(32, cfg.model_dim, 100 + seed);
        let mode = QuantizerMode { tau: 1.0, hard: false };
        let mean_ppl = |p: &ModelParams| {
            let (out, _) = quantize(p, &cfg, &z, None, mode);
            out.perplexity.iter().sum::<f64>() / g as f64
        };
        let initial = mean_ppl(&params);
        let mut opt = AdamW::new(&params, AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() });
        for _ in 0..200 {
            let (out, cache) = quantize(&params, &cfg, &z, None, mode);
            let (_, row) = diversity_loss_grad(&[&out.code_probs], g, v);
            let mut dprobs = Mat::zeros(z.rows, g * v);
            for r in 0..z.rows {
                dprobs.row_mut(r).copy_from_slice(&row);
            }
            let mut grads = params.zeros_like();
            let zero = Mat::zeros(z.rows, cfg.model_dim);
            quantize_backward(&params, &cfg, &out, &cache, &zero, Some(&dprobs), &mut grads);
            opt.step(&mut params, &grads, 1e-2, |n| n.starts_with("quantizer.logits"));
        }
        let fin = mean_ppl(&params);
        assert!(fin > initial, "seed {seed}: perplexity {initial} -> {fin}");
    }
}

#[test]
fn attention_is_global() {
    let cfg = toy_config();
    let params = ModelParams::init(&cfg, 2);
    let x = random_mat(20, cfg.model_dim, 3);
    let (base, _) = contextualize(&params, &cfg, &x);
    let mut swapped = x.clone();
    let (a, b) = (swapped.row(0).to_vec(), swapped.row(19).to_vec());
    swapped.row_mut(0).copy_from_slice(&b);
    swapped.row_mut(19).copy_from_slice(&a);
    let (out, _) = contextualize(&params, &cfg, &swapped);
    assert_eq!((out.rows, out.cols), (20, cfg.model_dim));
    for t in 5..15 {
        let delta: f64 = out.row(t).iter().zip(base.row(t)).map(|(p, q)| (p - q).abs()).sum();
        assert!(delta > 0.0, "frame {t} ignores distant frames");
    }
}

#[test]
fn zero_residual_branches_add_only_positions() {
    let cfg = toy_config();
    let mut params = ModelParams::init(&cfg, 2);
    params.blocks = (0..cfg.context_blocks).map(|_| BlockParams::zeros(cfg.model_dim, cfg.ffn_dim)).collect();
    let x = random_mat(11, cfg.model_dim, 4);
    let (out, _) = contextualize(&params, &cfg, &x);
    let mut expect = positional_encoding(11, cfg.model_dim);
    expect.add_assign(&x);
    assert_eq!(out, expect);
}

#[test]
fn one_step_decreases_pretraining_loss() {
    let cfg = toy_config();
    for seed in 0..10 {
        let mut model = Wav2Vec2::new(cfg.clone(), seed).unwrap();
        let waves = [noise_wave(5200, seed), noise_wave(4300, seed + 50)];
        let batch: Vec<PretrainItem> = waves.iter().enumerate().map(|(i, w)| PretrainItem { wave: w, seed: seed * 10 + i as u64 }).collect();
        // soft selections: the straight-through estimate is not the gradient of the hard loss
        let mode = QuantizerMode { tau: 2.0, hard: false };
        let mut grads = model.params.zeros_like();
        let before = model.pretrain_objective(&batch, mode, Some(&mut grads)).unwrap();
        let mut opt = AdamW::new(&model.params, AdamWConfig::default());
        opt.step(&mut model.params, &grads, 1e-3, |_| true);
        let after = model.pretrain_objective(&batch, mode, None).unwrap();
        assert!(before.total.is_finite());
        assert!(after.total < before.total, "seed {seed}: {} -> {}", before.total, after.total);
    }
}

#[test]
fn classification_is_a_deterministic_distribution() {
    let mut model = Wav2Vec2::new(toy_config(), 6).unwrap();
    model.ensure_head();
    let mut r = rng::seeded(1);
    for w in model.params.head.as_mut().unwrap().w.data.iter_mut() {
        *w = r.random_range(-1.0..1.0);
    }
    for len in [400, 3000, 16_000] {
        let wave = noise_wave(len, len as u64);
        let p = model.classify(&wave).unwrap();
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let again = model.clone().classify(&wave).unwrap();
        assert_eq!(p.map(f64::to_bits), again.map(f64::to_bits));
    }
    assert!(matches!(model.classify(&[0.0; 100]), Err(ModelError::InputTooShort { .. })));
}

#[test]
fn base_scale_config_is_constructible() {
    let cfg = ModelConfig::base_scale();
    assert!(cfg.validate().is_ok());
    assert_eq!(cfg.hop(), 320);
    assert!(ModelConfig { attention_heads: 3, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { encoder_strides: vec![5, 2, 2, 2, 2, 2, 3], ..ModelConfig::default() }.validate().is_err());
}
