use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day-level adjustment rule parameters.
///
/// A residual `E` (mean of target minus achieved over `window_days`) moves
/// tomorrow's target by `direction * sign(E) * min(gain * |E|, clamp_frac * RDA)`,
/// with the running target kept inside `RDA * (1 ± clamp_frac)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustmentPolicy {
    /// +1 raises tomorrow's target after a deficit; -1 lowers it.
    pub direction: i8,
    pub window_days: usize,
    pub gain: f64,
    pub clamp_frac: f64,
    /// Residuals with |E| at or below this are treated as zero.
    pub epsilon: f64,
}

impl Default for AdjustmentPolicy {
    fn default() -> Self {
        Self {
            direction: 1,
            window_days: 1,
            gain: 0.3,
            clamp_frac: 0.15,
            epsilon: 1e-6,
        }
    }
}

impl AdjustmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.direction != 1 && self.direction != -1 {
            return Err(Error::config(format!("direction must be +1 or -1, got {}", self.direction)));
        }
        if self.window_days < 1 {
            return Err(Error::config("window_days must be at least 1"));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(Error::config(format!("gain must be in (0, 1], got {}", self.gain)));
        }
        if !(self.clamp_frac > 0.0 && self.clamp_frac <= 0.5) {
            return Err(Error::config(format!(
                "clamp_frac must be in (0, 0.5], got {}",
                self.clamp_frac
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn sign(&self) -> f64 {
        f64::from(self.direction)
    }
}
