//! Contrastive and codebook-diversity objectives.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::ModelError;
use crate::math;
use crate::nn::Mat;
use crate::rng::SeededRng;

/// Distractor frame indices for each masked frame: drawn uniformly from the
/// other masked frames, without replacement when at least `k` are available
/// and with replacement otherwise. A lone masked frame draws from all other frames.
pub fn sample_distractors(masked: &[usize], frames: usize, k: usize, rng: &mut SeededRng) -> Result<Vec<Vec<usize>>, ModelError> {
    if masked.is_empty() {
        return Err(ModelError::NoMaskedFrames);
    }
    masked
        .iter()
        .map(|&t| {
            let mut pool: Vec<usize> = masked.iter().copied().filter(|&o| o != t).collect();
            if pool.is_empty() {
                pool = (0..frames).filter(|&o| o != t).collect();
            }
            if pool.is_empty() {
                return Err(ModelError::NoDistractors);
            }
            Ok(if pool.len() >= k {
                index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
            } else {
                (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect()
            })
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-8)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Summed loss over masked frames with gradients of that sum.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub sum: f64,
    pub count: usize,
    pub dc: Mat,
    pub dq: Mat,
}

impl ContrastiveOutput {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// InfoNCE over cosine similarities: for each masked frame `t`,
/// `-log softmax_0(cos(c_t, q_j) / kappa)` with `j` ranging over the true
/// target `q_t` followed by its distractors.
pub fn contrastive_loss(
    c: &Mat,
    q: &Mat,
    masked: &[usize],
    distractors: &[Vec<usize>],
    kappa: f64,
) -> Result<ContrastiveOutput, ModelError> {
    if masked.is_empty() {
        return Err(ModelError::NoMaskedFrames);
    }
    assert_eq!(masked.len(), distractors.len());
    let mut dc = c.zeros_like();
    let mut dq = q.zeros_like();
    let mut sum = 0.0;
    let mut scores = Vec::new();
    let mut cos = Vec::new();
    let mut cands = Vec::new();
    for (&t, dist) in masked.iter().zip(distractors) {
        cands.clear();
        cands.push(t);
        cands.extend_from_slice(dist);
        let ct = c.row(t);
        let nc = norm(ct);
        cos.clear();
        scores.clear();
        for &j in &cands {
            let qj = q.row(j);
            let cs = dot(ct, qj) / (nc * norm(qj));
            cos.push(cs);
            scores.push(cs / kappa);
        }
        let lse = math::log_sum_exp(&scores);
        sum += lse - scores[0];
        for (idx, &j) in cands.iter().enumerate() {
            let prob = math::exp(scores[idx] - lse);
            let coef = (prob - if idx == 0 { 1.0 } else { 0.0 }) / kappa;
            if coef == 0.0 {
                continue;
            }
            let qj = q.row(j).to_vec();
            let nq = norm(&qj);
            let cs = cos[idx];
            let dct = dc.row_mut(t);
            for ((o, &qv), &cv) in dct.iter_mut().zip(&qj).zip(c.row(t)) {
                *o += coef * (qv / (nc * nq) - cs * cv / (nc * nc));
            }
            let dqj = dq.row_mut(j);
            for ((o, &qv), &cv) in dqj.iter_mut().zip(&qj).zip(c.row(t)) {
                *o += coef * (cv / (nc * nq) - cs * qv / (nq * nq));
            }
        }
    }
    Ok(ContrastiveOutput { sum, count: masked.len(), dc, dq })
}

/// `(1 / (G V)) * sum_g (V - perplexity_g)` over the frame-averaged code distribution.
pub fn diversity_loss(code_probs: &Mat, groups: usize, entries: usize) -> f64 {
    let ppl = super::quantizer::perplexity(code_probs, groups, entries);
    ppl.iter().map(|p| entries as f64 - p).sum::<f64>() / (groups * entries) as f64
}

/// Diversity loss over several sequences pooled together, plus the gradient
/// with respect to each frame's code probabilities (identical for every frame).
pub fn diversity_loss_grad(code_probs: &[&Mat], groups: usize, entries: usize) -> (f64, Vec<f64>) {
    let width = groups * entries;
    let frames: usize = code_probs.iter().map(|m| m.rows).sum();
    let mut avg = vec![0.0; width];
    for m in code_probs {
        for r in 0..m.rows {
            avg.iter_mut().zip(m.row(r)).for_each(|(a, v)| *a += v);
        }
    }
    avg.iter_mut().for_each(|a| *a /= frames as f64);
    let scale = 1.0 / width as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; width];
    for g in 0..groups {
        let span = g * entries..(g + 1) * entries;
        let h: f64 = avg[span.clone()].iter().filter(|&&p| p > 0.0).map(|&p| -p * math::ln(p)).sum();
        let ppl = math::exp(h);
        loss += (entries as f64 - ppl) * scale;
        for (o, &p) in grad[span.clone()].iter_mut().zip(&avg[span]) {
            if p > 0.0 {
                *o = scale * ppl * (math::ln(p) + 1.0) / frames as f64;
            }
        }
    }
    (loss, grad)
}
