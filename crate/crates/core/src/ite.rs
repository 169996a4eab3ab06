//! Individual treatment effect intervals from per-arm outcome intervals.

use serde::{Deserialize, Serialize};

use crate::conformal::Interval;
use crate::error::{Error, Result};

/// `[C1.lower - C0.upper, C1.upper - C0.lower]`. Covers `Y(1) - Y(0)` with
/// probability at least `1 - alpha_1 - alpha_0` by a union bound.
pub fn bonferroni_ite(treated: &Interval, control: &Interval) -> Result<Interval> {
    Interval::new(treated.lower - control.upper, treated.upper - control.lower)
}

/// Miscoverage budget split between the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmLevels {
    pub treated: f64,
    pub control: f64,
}

impl ArmLevels {
    /// Each arm run at `alpha`; the effect interval then holds at `1 - 2 alpha`.
    pub fn per_arm(alpha: f64) -> Result<Self> {
        check(alpha)?;
        Ok(Self {
            treated: alpha,
            control: alpha,
        })
    }

    /// Each arm run at `alpha / 2` so the effect interval holds at `1 - alpha`.
    pub fn split(alpha: f64) -> Result<Self> {
        check(alpha)?;
        Ok(Self {
            treated: alpha / 2.0,
            control: alpha / 2.0,
        })
    }

    pub fn effect_alpha(&self) -> f64 {
        self.treated + self.control
    }
}

fn check(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteInterval {
    pub bounds: Interval,
    pub levels: ArmLevels,
}

impl IteInterval {
    pub fn new(treated: &Interval, control: &Interval, levels: ArmLevels) -> Result<Self> {
        Ok(Self {
            bounds: bonferroni_ite(treated, control)?,
            levels,
        })
    }
}
