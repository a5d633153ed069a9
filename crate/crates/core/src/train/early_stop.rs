#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without improvement, where
/// improvement means a loss lower than the best so far by more than `1e-6`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    stale: usize,
}

pub const MIN_IMPROVEMENT: f64 = 1e-6;

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        self.epoch += 1;
        if loss < self.best - MIN_IMPROVEMENT || (self.best_epoch == 0 && loss.is_finite()) {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// 1-based epoch of the best loss; 0 before any finite loss.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}
