//! The five proactivity levels and the dimensions that define them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("proactivity level must be between 1 and 5, got {0}")]
pub struct InvalidLevel(pub i64);

/// A proactivity level in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct ProactivityLevel(u8);

impl ProactivityLevel {
    pub const ALL: [ProactivityLevel; 5] = [
        ProactivityLevel(1),
        ProactivityLevel(2),
        ProactivityLevel(3),
        ProactivityLevel(4),
        ProactivityLevel(5),
    ];

    pub fn new(value: i64) -> Result<Self, InvalidLevel> {
        if (1..=5).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(InvalidLevel(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Levels 4 and 5 may open a conversation without a user request.
    pub fn assistant_initiates(self) -> bool {
        self.0 >= 4
    }
}

impl TryFrom<i64> for ProactivityLevel {
    type Error = InvalidLevel;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ProactivityLevel> for u8 {
    fn from(level: ProactivityLevel) -> u8 {
        level.0
    }
}

impl fmt::Display for ProactivityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ProactivityLevel {
    type Err = InvalidLevel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value: i64 = s.trim().parse().map_err(|_| InvalidLevel(0))?;
        Self::new(value)
    }
}

/// How strongly the assistant anticipates unstated needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assumption {
    None,
    Some,
    Strong,
}

/// How far the assistant may act without a direct command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Autonomy {
    None,
    ConfirmFirst,
    ActWithMinimalInput,
    ProposeThenConfirm,
    ActWithExplanation,
}

/// The control the driver keeps over the assistant's actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserControl {
    FullControl,
    ConfirmationRequired,
    MinimalInput,
    ConfirmBeforeExecute,
    InterveneToStop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub level: ProactivityLevel,
    pub assumption: Assumption,
    pub autonomy: Autonomy,
    pub user_control: UserControl,
    pub strategy_text: String,
    pub assistant_initiates: bool,
}
