use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer and schedule settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Fraction of the run between learning-rate drops.
    pub step_fraction: f64,
    pub gamma: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            base_lr: 1e-4,
            step_fraction: 0.33,
            gamma: 0.1,
            momentum: 0.9,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "step_fraction {} outside (0, 1]",
                self.step_fraction
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be finite and >= 0", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Epochs between drops: `ceil(step_fraction * epochs)`, at least 1.
    pub fn step_epochs(&self) -> usize {
        // Round away float noise first so 0.33 * 60 yields 20, not 20.000000000000004 -> 21.
        let raw = (self.step_fraction * self.epochs as f64 * 1e9).round() / 1e9;
        (raw.ceil() as usize).max(1)
    }
}

/// Step-down policy: `base_lr * gamma^floor(epoch / ceil(step_fraction * epochs))`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> Result<f64> {
    config.validate()?;
    if epoch >= config.epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} outside 0..{}",
            config.epochs
        )));
    }
    let drops = (epoch / config.step_epochs()) as i32;
    // Dividing by the integer-valued reciprocal keeps decimal rates such as 1e-5 exact.
    Ok(config.base_lr / config.gamma.recip().powi(drops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_drops_at_20_and_40() {
        let c = TrainConfig::default();
        assert_eq!(c.step_epochs(), 20);
        assert_eq!(lr_at(&c, 0).unwrap(), 1e-4);
        assert_eq!(lr_at(&c, 19).unwrap(), 1e-4);
        assert_eq!(lr_at(&c, 20).unwrap(), 1e-5);
        assert_eq!(lr_at(&c, 40).unwrap(), 1e-6);
        assert_eq!(lr_at(&c, 59).unwrap(), 1e-6);
    }

    #[test]
    fn unit_gamma_is_constant() {
        let c = TrainConfig {
            gamma: 1.0,
            ..TrainConfig::default()
        };
        assert!((0..60).all(|e| lr_at(&c, e).unwrap() == 1e-4));
    }

    #[test]
    fn out_of_range_epoch() {
        assert!(matches!(lr_at(&TrainConfig::default(), 60), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs() {
        let d = TrainConfig::default();
        for bad in [
            TrainConfig { epochs: 0, ..d },
            TrainConfig { step_fraction: 0.0, ..d },
            TrainConfig { gamma: 1.5, ..d },
            TrainConfig { gamma: 0.0, ..d },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
