//! Policy configuration.

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::scoring::ScoreParams;
use crate::{Error, Result};

/// Cache budget, either absolute or as a fraction of the final sequence
/// length of the replayed trace.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Budget {
    Absolute(usize),
    Ratio(f64),
}

impl Budget {
    /// Resolves to a token count. Ratios round up: `ceil(r * final_len)`.
    pub fn resolve(&self, final_len: usize) -> Result<usize> {
        match *self {
            Budget::Absolute(0) => Err(Error::config("budget must be at least 1")),
            Budget::Absolute(b) => Ok(b),
            Budget::Ratio(r) if !(r > 0.0 && r <= 1.0) => Err(Error::config(format!(
                "budget ratio must lie in (0, 1], got {r}"
            ))),
            Budget::Ratio(r) => {
                let b = libm::ceil(r * final_len as f64) as usize;
                Ok(b.max(1))
            }
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Absolute(b) => write!(f, "B={b}"),
            Budget::Ratio(r) => write!(f, "r={r}"),
        }
    }
}

/// Functional form of a monotone-decreasing score component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreVariant {
    #[default]
    Sigmoid,
    Exp,
    Tanh,
    Log,
    Inverse,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 5] = [
        ScoreVariant::Sigmoid,
        ScoreVariant::Exp,
        ScoreVariant::Tanh,
        ScoreVariant::Log,
        ScoreVariant::Inverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreVariant::Sigmoid => "sigmoid",
            ScoreVariant::Exp => "exp",
            ScoreVariant::Tanh => "tanh",
            ScoreVariant::Log => "log",
            ScoreVariant::Inverse => "inverse",
        }
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown score variant '{s}'")))
    }
}

/// How multi-head traces map onto policy state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HeadMode {
    /// Independent policy state per head.
    #[default]
    PerHead,
    /// One shared state fed the head-averaged attention row.
    MeanPool,
}

impl FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_head" | "per-head" => Ok(HeadMode::PerHead),
            "mean_pool" | "mean-pool" => Ok(HeadMode::MeanPool),
            _ => Err(Error::config(format!("unknown head mode '{s}'"))),
        }
    }
}

/// Ordering applied among tokens with equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieBreak {
    /// Larger timestamp, then larger index, is kept.
    #[default]
    NewerWins,
    /// Smaller timestamp, then smaller index, is kept.
    OlderWins,
}

/// The eviction policies available to replay and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    Full,
    Streaming,
    Tova,
    H2o,
    Raas,
    Lazy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Full,
        PolicyKind::Streaming,
        PolicyKind::Tova,
        PolicyKind::H2o,
        PolicyKind::Raas,
        PolicyKind::Lazy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Full => "full",
            PolicyKind::Streaming => "streaming",
            PolicyKind::Tova => "tova",
            PolicyKind::H2o => "h2o",
            PolicyKind::Raas => "raas",
            PolicyKind::Lazy => "lazy",
        }
    }

    /// Policies that keep a protected window of the `window` newest tokens.
    pub fn uses_window(self) -> bool {
        matches!(self, PolicyKind::Lazy | PolicyKind::H2o | PolicyKind::Raas)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown policy '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyConfig {
    pub budget: Budget,
    /// Observation window: decision interval for lagged eviction and the
    /// number of newest tokens every windowed policy protects.
    pub window: usize,
    /// Activation threshold; a token is activated when its attention is `>= alpha`.
    pub alpha: f64,
    pub score: ScoreParams,
    pub head_mode: HeadMode,
    pub tie_break: TieBreak,
    /// Attention-sink tokens kept by the streaming policy.
    pub n_sink: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            budget: Budget::Ratio(0.5),
            window: 25,
            alpha: 0.0005,
            score: ScoreParams::default(),
            head_mode: HeadMode::PerHead,
            tie_break: TieBreak::NewerWins,
            n_sink: 4,
        }
    }
}

impl PolicyConfig {
    /// Checks the configuration for `kind` against an already resolved budget.
    pub fn validate(&self, kind: PolicyKind, budget: usize) -> Result<()> {
        if budget == 0 {
            return Err(Error::config("budget must be at least 1"));
        }
        // alpha = 0 is accepted: every token activates on every step.
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if kind.uses_window() {
            if self.window == 0 {
                return Err(Error::config("window must be at least 1"));
            }
            if self.window >= budget {
                return Err(Error::config(format!(
                    "window ({}) must be smaller than the budget ({budget})",
                    self.window
                )));
            }
        }
        if kind == PolicyKind::Streaming && self.n_sink >= budget {
            return Err(Error::config(format!(
                "sink count ({}) must be smaller than the budget ({budget})",
                self.n_sink
            )));
        }
        Ok(())
    }
}
