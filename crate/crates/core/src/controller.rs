//! The meta-controller deciding, per turn, whether to consult the
//! deliberative policy.
//!
//! Two triggers: the exploration condition fires when the current cell has
//! been visited fewer than `tau * sqrt(ln T)` times, the confidence
//! condition when the fast policy's confidence is below `kappa`. Both are
//! strict inequalities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cognitive::DEFAULT_BINS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    #[default]
    Full,
    #[serde(rename = "no_EC")]
    NoEc,
    #[serde(rename = "no_CC")]
    NoCc,
    #[serde(rename = "random_p")]
    Random,
    S1Only,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 5] = [
        ControllerMode::Full,
        ControllerMode::Random,
        ControllerMode::NoEc,
        ControllerMode::NoCc,
        ControllerMode::S1Only,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Full => "full",
            ControllerMode::NoEc => "no_EC",
            ControllerMode::NoCc => "no_CC",
            ControllerMode::Random => "random_p",
            ControllerMode::S1Only => "s1_only",
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(ControllerMode::Full),
            "no_ec" => Ok(ControllerMode::NoEc),
            "no_cc" => Ok(ControllerMode::NoCc),
            "random" | "random_p" => Ok(ControllerMode::Random),
            "s1_only" | "s1" => Ok(ControllerMode::S1Only),
            other => Err(Error::Config(format!("unknown controller mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    ExplorationCondition,
    ConfidenceCondition,
    Both,
    None,
    Random,
    ForcedOff,
}

impl TriggerReason {
    pub const ALL: [TriggerReason; 6] = [
        TriggerReason::ExplorationCondition,
        TriggerReason::ConfidenceCondition,
        TriggerReason::Both,
        TriggerReason::None,
        TriggerReason::Random,
        TriggerReason::ForcedOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerReason::ExplorationCondition => "exploration_condition",
            TriggerReason::ConfidenceCondition => "confidence_condition",
            TriggerReason::Both => "both",
            TriggerReason::None => "none",
            TriggerReason::Random => "random",
            TriggerReason::ForcedOff => "forced_off",
        }
    }
}

impl fmt::Display for TriggerReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub tau: f64,
    pub kappa: f64,
    pub bins: u32,
    pub mode: ControllerMode,
    pub random_p: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            tau: 1.0,
            kappa: 0.7,
            bins: DEFAULT_BINS,
            mode: ControllerMode::Full,
            random_p: 0.10,
        }
    }
}

impl ControllerConfig {
    pub fn with_mode(mode: ControllerMode) -> Self {
        ControllerConfig {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tau > 0.0) {
            problems.push(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            problems.push(format!("kappa must be in (0, 1), got {}", self.kappa));
        }
        if self.bins == 0 {
            problems.push("bins must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.random_p) {
            problems.push(format!("random_p must be in [0, 1], got {}", self.random_p));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub use_s2: bool,
    pub reason: TriggerReason,
    pub n: u64,
    pub threshold: f64,
    pub p_s1: f64,
}

/// `sqrt(ln T / n)`; an unvisited cell gets `+inf`. `T` is real-valued so
/// callers can pass non-integral clocks.
pub fn exploration_bonus(n: u64, total: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (total.ln().max(0.0) / n as f64).sqrt()
}

/// `tau * sqrt(ln T)`, with `ln` floored at 0 so that `T = 1` gives 0.
pub fn exploration_threshold(total: u64, tau: f64) -> f64 {
    tau * (total.max(1) as f64).ln().max(0.0).sqrt()
}

/// Applies the switching rule. `n` is the number of earlier visits to the
/// current cell and `total` the global step count including this step.
/// An unvisited cell always satisfies the exploration condition.
pub fn should_activate_s2<R: Rng + ?Sized>(
    n: u64,
    total: u64,
    p_s1: f64,
    config: &ControllerConfig,
    rng: &mut R,
) -> TriggerDecision {
    decide(n, exploration_threshold(total, config.tau), p_s1, config, rng)
}

/// The switching rule against an explicit exploration threshold.
pub fn decide<R: Rng + ?Sized>(
    n: u64,
    threshold: f64,
    p_s1: f64,
    config: &ControllerConfig,
    rng: &mut R,
) -> TriggerDecision {
    let ec = n == 0 || (n as f64) < threshold;
    let cc = p_s1 < config.kappa;
    let (use_s2, reason) = match config.mode {
        ControllerMode::Full => match (ec, cc) {
            (true, true) => (true, TriggerReason::Both),
            (true, false) => (true, TriggerReason::ExplorationCondition),
            (false, true) => (true, TriggerReason::ConfidenceCondition),
            (false, false) => (false, TriggerReason::None),
        },
        ControllerMode::NoEc => {
            if cc {
                (true, TriggerReason::ConfidenceCondition)
            } else {
                (false, TriggerReason::None)
            }
        }
        ControllerMode::NoCc => {
            if ec {
                (true, TriggerReason::ExplorationCondition)
            } else {
                (false, TriggerReason::None)
            }
        }
        ControllerMode::Random => (rng.random_bool(config.random_p), TriggerReason::Random),
        ControllerMode::S1Only => (false, TriggerReason::ForcedOff),
    };
    TriggerDecision {
        use_s2,
        reason,
        n,
        threshold,
        p_s1,
    }
}
