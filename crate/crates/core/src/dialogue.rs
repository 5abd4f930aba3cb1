//! Dialogue state: turns, histories and their prompt rendering.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::level::ProactivityLevel;

pub const DRIVER_LABEL: &str = "Driver";
pub const ASSISTANT_LABEL: &str = "IVCA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Assistant,
    System,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DialogueError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("a system turn may only open a dialogue")]
    MisplacedSystemTurn,
    #[error("turn {found} is out of sequence (expected index {expected})")]
    IndexGap { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

/// An ordered, value-semantic sequence of turns.
///
/// Appending never mutates the receiver; callers get a new history back so a
/// candidate exchange can be built up and committed only once it succeeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueHistory {
    pub session_id: String,
    pub turns: Vec<Turn>,
}

impl DialogueHistory {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn append_turn(&self, speaker: Speaker, text: &str) -> Result<Self, DialogueError> {
        self.append_turn_at(speaker, text, None)
    }

    pub fn append_turn_at(
        &self,
        speaker: Speaker,
        text: &str,
        timestamp: Option<DateTime<Utc>>,
    ) -> Result<Self, DialogueError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(DialogueError::EmptyUtterance);
        }
        if speaker == Speaker::System && !self.turns.is_empty() {
            return Err(DialogueError::MisplacedSystemTurn);
        }
        let mut next = self.clone();
        next.turns.push(Turn {
            speaker,
            text: trimmed.to_string(),
            index: self.turns.len(),
            timestamp,
        });
        Ok(next)
    }

    /// Checks the structural invariants; used after deserializing untrusted input.
    pub fn validate(&self) -> Result<(), DialogueError> {
        for (position, turn) in self.turns.iter().enumerate() {
            if turn.index != position {
                return Err(DialogueError::IndexGap {
                    expected: position,
                    found: turn.index,
                });
            }
            if turn.text.trim().is_empty() {
                return Err(DialogueError::EmptyUtterance);
            }
            if turn.speaker == Speaker::System && position != 0 {
                return Err(DialogueError::MisplacedSystemTurn);
            }
        }
        Ok(())
    }

    /// Turns a reader would see, skipping the optional opening System turn.
    pub fn visible_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker != Speaker::System)
    }

    pub fn first_speaker(&self) -> Option<Speaker> {
        self.visible_turns().next().map(|t| t.speaker)
    }

    pub fn last_turn(&self) -> Option<&Turn> {
        self.turns.last()
    }

    pub fn last_assistant_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Assistant)
            .map(|t| t.text.as_str())
    }

    pub fn render(&self) -> String {
        render_history(self)
    }
}

/// Renders a history one line per visible turn, `Driver: ...` / `IVCA: ...`.
///
/// Embedded line breaks are folded to spaces so the line count always equals
/// the number of non-System turns.
pub fn render_history(history: &DialogueHistory) -> String {
    history
        .visible_turns()
        .map(|turn| {
            let label = match turn.speaker {
                Speaker::User => DRIVER_LABEL,
                _ => ASSISTANT_LABEL,
            };
            format!("{label}: {}", single_line(&turn.text))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`render_history`] for well-formed input.
pub fn parse_rendered(text: &str) -> Option<Vec<(Speaker, String)>> {
    if text.is_empty() {
        return Some(Vec::new());
    }
    text.lines()
        .map(|line| {
            if let Some(rest) = line.strip_prefix("Driver: ") {
                Some((Speaker::User, rest.to_string()))
            } else {
                line.strip_prefix("IVCA: ")
                    .map(|rest| (Speaker::Assistant, rest.to_string()))
            }
        })
        .collect()
}

pub(crate) fn single_line(text: &str) -> String {
    text.split(['\n', '\r'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Persisted form of a conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub level: ProactivityLevel,
    pub turns: Vec<Turn>,
}

impl Transcript {
    pub fn new(level: ProactivityLevel, history: &DialogueHistory) -> Self {
        Self {
            session_id: history.session_id.clone(),
            level,
            turns: history.turns.clone(),
        }
    }

    pub fn history(&self) -> DialogueHistory {
        DialogueHistory {
            session_id: self.session_id.clone(),
            turns: self.turns.clone(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, TranscriptError> {
        let transcript: Self = serde_json::from_str(text)?;
        transcript.history().validate()?;
        Ok(transcript)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("malformed transcript: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid transcript: {0}")]
    Invalid(#[from] DialogueError),
}
