use serde::{Deserialize, Serialize};

/// Inverse-decay learning-rate schedule `mu0 · (1 + alpha·i)^(−beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub mu0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total_iters: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mu0: 0.01,
            alpha: 0.001,
            beta: 0.75,
            total_iters: 5000,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.mu0 > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(crate::Error::Config(format!("invalid schedule {self:?}")));
        }
        Ok(())
    }
}

pub fn lr_at(i: usize, cfg: &ScheduleConfig) -> f64 {
    cfg.mu0 * (1.0 + cfg.alpha * i as f64).powf(-cfg.beta)
}

/// Gradient-reversal coefficient annealed from 0 to 1 over training:
/// `2 / (1 + exp(−10·p)) − 1` with `p = i / total`.
pub fn grl_coeff(i: usize, total: usize) -> f64 {
    let p = if total == 0 { 1.0 } else { (i as f64 / total as f64).min(1.0) };
    2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
}
