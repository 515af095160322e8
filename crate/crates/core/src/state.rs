//! The five attention categories and their stable integer encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of attention categories the classifier predicts.
pub const NUM_STATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttentionState {
    HighAttention,
    StableAttention,
    DroppingAttention,
    CognitiveOverload,
    Distraction,
}

impl AttentionState {
    pub const ALL: [AttentionState; NUM_STATES] = [
        AttentionState::HighAttention,
        AttentionState::StableAttention,
        AttentionState::DroppingAttention,
        AttentionState::CognitiveOverload,
        AttentionState::Distraction,
    ];

    /// Integer code used in every file format (0..=4).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Enum name as it appears on the wire, e.g. `DroppingAttention`.
    pub fn name(self) -> &'static str {
        match self {
            AttentionState::HighAttention => "HighAttention",
            AttentionState::StableAttention => "StableAttention",
            AttentionState::DroppingAttention => "DroppingAttention",
            AttentionState::CognitiveOverload => "CognitiveOverload",
            AttentionState::Distraction => "Distraction",
        }
    }

    /// Snake-case identifier, used for directive ids and template keys.
    pub fn id(self) -> &'static str {
        match self {
            AttentionState::HighAttention => "high_attention",
            AttentionState::StableAttention => "stable_attention",
            AttentionState::DroppingAttention => "dropping_attention",
            AttentionState::CognitiveOverload => "cognitive_overload",
            AttentionState::Distraction => "distraction",
        }
    }
}

impl fmt::Display for AttentionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attention state `{0}`")]
pub struct UnknownState(pub String);

impl FromStr for AttentionState {
    type Err = UnknownState;

    /// Accepts the wire name, the snake-case id, or the integer code.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Self::from_index(i).ok_or_else(|| UnknownState(s.to_string()));
        }
        Self::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s) || st.id() == s)
            .ok_or_else(|| UnknownState(s.to_string()))
    }
}
