use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CommError;
use crate::sparse::FlopCount;

/// Tallies of flops `F`, words moved `W` and messages `L`.
///
/// `flops` is the charged (dense-bound) count; `flops_actual` the multiply-adds
/// actually executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub flops: u64,
    pub flops_actual: u64,
    pub words: u64,
    pub messages: u64,
}

impl CostCounters {
    pub fn add_flops(&mut self, work: FlopCount) {
        self.flops += work.charged;
        self.flops_actual += work.actual;
    }

    pub fn saturating_sub(&self, earlier: &CostCounters) -> CostCounters {
        CostCounters {
            flops: self.flops.saturating_sub(earlier.flops),
            flops_actual: self.flops_actual.saturating_sub(earlier.flops_actual),
            words: self.words.saturating_sub(earlier.words),
            messages: self.messages.saturating_sub(earlier.messages),
        }
    }
}

impl std::ops::Add for CostCounters {
    type Output = CostCounters;
    fn add(self, o: CostCounters) -> CostCounters {
        CostCounters {
            flops: self.flops + o.flops,
            flops_actual: self.flops_actual + o.flops_actual,
            words: self.words + o.words,
            messages: self.messages + o.messages,
        }
    }
}

impl std::ops::AddAssign for CostCounters {
    fn add_assign(&mut self, o: CostCounters) {
        *self = *self + o;
    }
}

/// Machine parameters of the runtime model `T = gamma F + alpha L + beta W`.
///
/// `alpha_latency` is seconds per message (not the dual vector).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParams {
    pub gamma: f64,
    #[serde(rename = "alpha")]
    pub alpha_latency: f64,
    pub beta: f64,
}

impl MachineParams {
    pub fn new(gamma: f64, alpha_latency: f64, beta: f64) -> Result<Self, CommError> {
        let m = MachineParams {
            gamma,
            alpha_latency,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), CommError> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("alpha", self.alpha_latency),
            ("beta", self.beta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CommError::InvalidMachineParams(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Parses `gamma = ...`, `alpha = ...`, `beta = ...` lines (TOML key-value syntax).
    pub fn parse(text: &str) -> Result<Self, CommError> {
        let m: MachineParams =
            toml::from_str(text).map_err(|e| CommError::InvalidMachineParams(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CommError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            CommError::InvalidMachineParams(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }
}

impl Default for MachineParams {
    /// Order-of-magnitude values for a commodity cluster.
    fn default() -> Self {
        MachineParams {
            gamma: 1e-10,
            alpha_latency: 1e-6,
            beta: 1e-9,
        }
    }
}

/// `gamma F + alpha L + beta W` for the given (critical-path) counters.
pub fn predicted_time(counters: &CostCounters, machine: &MachineParams) -> f64 {
    machine.gamma * counters.flops as f64
        + machine.alpha_latency * counters.messages as f64
        + machine.beta * counters.words as f64
}

/// `ceil(log2 p)`, zero for `p <= 1`.
pub fn ceil_log2(p: usize) -> u64 {
    if p <= 1 {
        0
    } else {
        (usize::BITS - (p - 1).leading_zeros()) as u64
    }
}
