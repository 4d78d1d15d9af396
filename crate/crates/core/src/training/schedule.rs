use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_LR: f64 = 1e-7;
pub const WARMUP_EPOCHS: usize = 5;

/// Per-epoch linear warmup from `min_lr` to `base_lr`, then cosine decay
/// back to `min_lr` at the final epoch. A zero `base_lr` freezes the group:
/// every epoch returns 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(
        base_lr: f64,
        min_lr: f64,
        warmup_epochs: usize,
        total_epochs: usize,
    ) -> Result<Self> {
        let s = LrSchedule {
            base_lr,
            min_lr,
            warmup_epochs,
            total_epochs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr >= 0.0 && self.min_lr.is_finite()) {
            return Err(Error::Config(format!(
                "min_lr {} must be finite and >= 0",
                self.min_lr
            )));
        }
        if !(self.base_lr == 0.0 || (self.base_lr > self.min_lr && self.base_lr.is_finite())) {
            return Err(Error::Config(format!(
                "learning rate {} must be 0 (frozen) or exceed min_lr {}",
                self.base_lr, self.min_lr
            )));
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs {} must be below total epochs {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.base_lr == 0.0
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Parameter(format!(
                "epoch {epoch} outside [0, {})",
                self.total_epochs
            )));
        }
        if self.is_frozen() {
            return Ok(0.0);
        }
        let (base, min, w) = (self.base_lr, self.min_lr, self.warmup_epochs);
        if epoch < w {
            return Ok(min + (base - min) * epoch as f64 / w as f64);
        }
        let span = self.total_epochs - 1 - w;
        if span == 0 {
            return Ok(base);
        }
        let progress = (epoch - w) as f64 / span as f64;
        Ok(min + 0.5 * (base - min) * (1.0 + (PI * progress).cos()))
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> Result<f64> {
    schedule.lr_at(epoch)
}
