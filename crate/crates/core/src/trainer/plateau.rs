/// Reduce-on-plateau learning-rate schedule monitoring validation loss.
///
/// An epoch improves when its loss beats the best so far by more than
/// [`Plateau::MIN_DELTA`]. After `patience` consecutive epochs without
/// improvement the rate is multiplied by `factor` (never below `min_lr`) and
/// the wait counter restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    best: f64,
    wait: usize,
}

impl Plateau {
    pub const MIN_DELTA: f64 = 1e-8;

    pub fn new(lr: f64, patience: usize, factor: f64, min_lr: f64) -> Self {
        Self {
            lr,
            patience,
            factor,
            min_lr,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one epoch's validation loss; returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - Self::MIN_DELTA {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Replays a validation-loss history from `lr0` and returns the rate in
/// effect after the last epoch.
pub fn plateau_schedule(val_losses: &[f64], lr0: f64, patience: usize, factor: f64, min_lr: f64) -> f64 {
    let mut p = Plateau::new(lr0, patience, factor, min_lr);
    val_losses.iter().fold(lr0, |_, &l| p.observe(l))
}
