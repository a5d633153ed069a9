//! AdamW with decoupled weight decay and the one-cycle learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::math;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamW {
    pub fn new(params: &ModelParams, config: AdamWConfig) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Tensors whose name fails `trainable`
    /// are left untouched, weight decay included.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, trainable: impl Fn(&str) -> bool) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - math::powf(c.beta1, self.step as f64);
        let bc2 = 1.0 - math::powf(c.beta2, self.step as f64);
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for (((name, p), (_, g)), ((_, m), (_, v))) in tensors.zip(moments) {
            if !trainable(&name) {
                continue;
            }
            for (((pv, &gv), mv), vv) in p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                *pv *= 1.0 - lr * c.weight_decay;
                *pv -= lr * (*mv / bc1) / (math::sqrt(*vv / bc2) + c.eps);
            }
        }
    }
}

/// One-cycle schedule with cosine warmup and cosine annealing.
///
/// The rate rises from `max_lr / div_factor` to `max_lr` over the first
/// `warmup_steps` steps, then falls to `initial / final_div_factor` at the
/// last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

fn cos_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + math::cos(core::f64::consts::PI * pct))
}

impl OneCycle {
    pub fn new(max_lr: f64, total_steps: usize, warmup_frac: f64) -> Self {
        let warmup = (math::round(warmup_frac * total_steps as f64) as usize).max(1);
        let warmup_steps = warmup.min(total_steps.saturating_sub(1));
        Self { max_lr, total_steps, warmup_steps, div_factor: 25.0, final_div_factor: 1e4 }
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn min_lr(&self) -> f64 {
        self.initial_lr() / self.final_div_factor
    }

    /// Learning rate at 0-based `step`; steps past the end hold the final rate.
    pub fn lr(&self, step: usize) -> f64 {
        let w = self.warmup_steps;
        if w == 0 {
            return self.initial_lr();
        }
        if step <= w {
            return cos_anneal(self.initial_lr(), self.max_lr, step as f64 / w as f64);
        }
        let span = self.total_steps - 1 - w;
        let pct = ((step - w) as f64 / span as f64).min(1.0);
        cos_anneal(self.max_lr, self.min_lr(), pct)
    }
}
