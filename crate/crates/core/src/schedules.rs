//! Epoch-indexed smoothing factors.
//!
//! Epoch `e` (0-based) trains with the value returned by
//! [`SmoothingSchedule::value_at`]; the decay is applied at each epoch
//! boundary, so epoch 0 always uses `init`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `max(floor, init·rate^e)`, `0 < rate < 1`.
    Exponential,
    /// `max(floor, init − rate·e)`, `rate > 0`.
    Linear,
    /// `min(cap, init·rate^e)`, `rate > 1`.
    Anti,
    /// Seeded uniform draw in `[range.0, range.1)` per epoch.
    Random,
    /// `init` at every epoch.
    Constant,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(ScheduleKind::Exponential),
            "linear" => Ok(ScheduleKind::Linear),
            "anti" => Ok(ScheduleKind::Anti),
            "random" => Ok(ScheduleKind::Random),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(Error::invalid(format!("unknown schedule kind `{other}`"))),
        }
    }
}

fn default_cap() -> f64 {
    0.5
}

fn default_range() -> (f64, f64) {
    (0.0, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSchedule {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub init: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_range")]
    pub range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

impl SmoothingSchedule {
    fn base(kind: ScheduleKind, init: f64, rate: f64) -> Self {
        SmoothingSchedule {
            kind,
            init,
            rate,
            floor: 0.0,
            cap: default_cap(),
            range: default_range(),
            seed: 0,
        }
    }

    pub fn exponential(init: f64, rate: f64) -> Result<Self> {
        Self::base(ScheduleKind::Exponential, init, rate).validated()
    }

    pub fn linear(init: f64, rate: f64) -> Result<Self> {
        Self::base(ScheduleKind::Linear, init, rate).validated()
    }

    pub fn anti(init: f64, rate: f64, cap: f64) -> Result<Self> {
        SmoothingSchedule {
            cap,
            ..Self::base(ScheduleKind::Anti, init, rate)
        }
        .validated()
    }

    pub fn random(lo: f64, hi: f64, seed: u64) -> Result<Self> {
        SmoothingSchedule {
            range: (lo, hi),
            seed,
            ..Self::base(ScheduleKind::Random, 0.0, 0.0)
        }
        .validated()
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::base(ScheduleKind::Constant, value, 0.0).validated()
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        self.floor = floor;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.init, self.rate, self.floor, self.cap, self.range.0, self.range.1]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("schedule parameters must be finite"));
        }
        if self.init < 0.0 || self.floor < 0.0 {
            return Err(Error::invalid("schedule init and floor must be non-negative"));
        }
        match self.kind {
            ScheduleKind::Exponential if !(self.rate > 0.0 && self.rate < 1.0) => Err(Error::invalid(
                format!("exponential decay rate must lie in (0, 1), got {}", self.rate),
            )),
            ScheduleKind::Anti if !(self.rate > 1.0) => Err(Error::invalid(format!(
                "anti-curriculum growth rate must exceed 1, got {}",
                self.rate
            ))),
            ScheduleKind::Anti if self.cap < self.init => Err(Error::invalid(format!(
                "anti-curriculum cap {} is below init {}",
                self.cap, self.init
            ))),
            ScheduleKind::Linear if !(self.rate > 0.0) => Err(Error::invalid(format!(
                "linear decrement must be positive, got {}",
                self.rate
            ))),
            ScheduleKind::Random if !(self.range.0 >= 0.0 && self.range.0 < self.range.1) => Err(
                Error::invalid(format!("random range {:?} is empty or negative", self.range)),
            ),
            _ => Ok(()),
        }
    }

    /// Smoothing factor used during `epoch`.
    pub fn value_at(&self, epoch: usize) -> f64 {
        match self.kind {
            ScheduleKind::Exponential => (self.init * pow(self.rate, epoch)).max(self.floor),
            ScheduleKind::Linear => (self.init - self.rate * epoch as f64).max(self.floor),
            ScheduleKind::Anti => (self.init * pow(self.rate, epoch)).min(self.cap),
            ScheduleKind::Random => {
                let mut rng = seed::rng(seed::mix(&[self.seed, epoch as u64]));
                let (lo, hi) = self.range;
                lo + (hi - lo) * rng.random::<f64>()
            }
            ScheduleKind::Constant => self.init,
        }
    }

    /// Values for epochs `0..epochs`.
    pub fn trace(&self, epochs: usize) -> Vec<f64> {
        (0..epochs).map(|e| self.value_at(e)).collect()
    }
}

fn pow(base: f64, epoch: usize) -> f64 {
    // powi takes i32; beyond that range the result has long since saturated.
    base.powi(epoch.min(i32::MAX as usize) as i32)
}
