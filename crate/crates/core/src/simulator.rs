//! A model-driven driver for capability runs.
//!
//! The simulated driver only affirms, declines or clarifies, and signals the
//! end of a conversation with [`DONE_SENTINEL`], which never reaches a
//! stored transcript.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialogue::{DialogueHistory, Speaker, DRIVER_LABEL};
use crate::level::ProactivityLevel;
use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError};
use crate::proactivity::TaskContext;
use crate::react::{Engine, Input, ReactError, TraceRecord};

pub const DONE_SENTINEL: &str = "[DONE]";
pub const SIMULATOR_MARKER: &str = "You play the driver of a car talking with its in-vehicle assistant (IVCA).";

fn default_max_turns() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedUserGoal {
    pub id: String,
    pub level: ProactivityLevel,
    /// What the driver says first (levels 1 to 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opening_utterance: Option<String>,
    /// The situation that lets the assistant open (levels 4 and 5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiation_event: Option<String>,
    pub goal_description: String,
    #[serde(default)]
    pub success_keywords: Vec<String>,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid goal {id:?}: {message}")]
    InvalidGoal { id: String, message: String },
    #[error("duplicate goal id {0:?}")]
    DuplicateGoal(String),
    #[error("malformed goals file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("the simulated driver can only reply to an assistant turn")]
    NotDriversTurn,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl SimulatedUserGoal {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |message: &str| {
            Err(SimError::InvalidGoal {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        let present = |o: &Option<String>| o.as_deref().is_some_and(|s| !s.trim().is_empty());
        if self.id.trim().is_empty() {
            return bad("id is empty");
        }
        if self.goal_description.trim().is_empty() {
            return bad("goal_description is empty");
        }
        if self.max_turns == 0 {
            return bad("max_turns must be at least 1");
        }
        if self.level.assistant_initiates() {
            if self.opening_utterance.is_some() {
                return bad("levels 4 and 5 start with the assistant, not an opening utterance");
            }
            if !present(&self.initiation_event) {
                return bad("levels 4 and 5 need an initiation_event");
            }
        } else {
            if !present(&self.opening_utterance) {
                return bad("levels 1 to 3 need an opening_utterance");
            }
            if self.initiation_event.is_some() {
                return bad("only levels 4 and 5 take an initiation_event");
            }
        }
        Ok(())
    }

    pub fn task(&self) -> TaskContext {
        TaskContext {
            goal_description: self.goal_description.clone(),
            success_keywords: self.success_keywords.clone(),
        }
    }

    fn first_input(&self) -> Input {
        match (&self.opening_utterance, &self.initiation_event) {
            (Some(text), _) => Input::Utterance(text.clone()),
            (None, Some(event)) => Input::Initiation(event.clone()),
            (None, None) => unreachable!("validated goals have an opening"),
        }
    }
}

/// Parses a JSON array of goals, validating each and rejecting duplicate ids.
pub fn parse_goals(text: &str) -> Result<Vec<SimulatedUserGoal>, SimError> {
    let goals: Vec<SimulatedUserGoal> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    for g in &goals {
        g.validate()?;
        if !seen.insert(g.id.as_str()) {
            return Err(SimError::DuplicateGoal(g.id.clone()));
        }
    }
    Ok(goals)
}

pub fn load_goals(path: &Path) -> Result<Vec<SimulatedUserGoal>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_goals(&text)
}

pub fn build_simulator_prompt(history: &DialogueHistory, goal: &SimulatedUserGoal) -> ChatRequest {
    let system = format!(
        "{SIMULATOR_MARKER}\n\
         Your goal: {}\n\
         Reply with one short spoken sentence as the driver. Stay on the topic of the conversation. \
         Affirm the assistant's help when it matches your goal, decline it when it does not, \
         and clarify when the assistant asks you something. \
         Once your goal is met, or you give up, end your reply with {DONE_SENTINEL}.",
        goal.goal_description
    );
    let user = format!("{}\n{DRIVER_LABEL}:", history.render());
    ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

/// Asks the simulator for the driver's next line. The sentinel, if any, is
/// left in place; see [`split_sentinel`].
pub fn simulate_user_turn(
    backend: &dyn ChatBackend,
    history: &DialogueHistory,
    goal: &SimulatedUserGoal,
) -> Result<String, SimError> {
    if history.last_turn().map(|t| t.speaker) != Some(Speaker::Assistant) {
        return Err(SimError::NotDriversTurn);
    }
    let response = backend.complete(&build_simulator_prompt(history, goal))?;
    let line = response
        .content
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let line = line
        .strip_prefix(DRIVER_LABEL)
        .and_then(|rest| rest.strip_prefix(':'))
        .unwrap_or(line);
    Ok(line.trim().trim_matches('"').trim().to_string())
}

/// Removes every sentinel and reports whether one was present.
pub fn split_sentinel(text: &str) -> (String, bool) {
    let done = text.contains(DONE_SENTINEL);
    let clean = text.replace(DONE_SENTINEL, " ");
    (clean.split_whitespace().collect::<Vec<_>>().join(" "), done)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    UserDone,
    MaxTurns,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub goal_id: String,
    pub level: ProactivityLevel,
    pub conversation: DialogueHistory,
    /// Visible turns, i.e. excluding the initiation record.
    pub turn_count: usize,
    pub terminated: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub traces: Vec<TraceRecord>,
}

#[derive(Debug, thiserror::Error)]
enum StepError {
    #[error(transparent)]
    React(#[from] ReactError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Plays one goal to completion. Failures end the dialogue with
/// [`Termination::Error`] and keep the turns committed so far.
pub fn run_dialogue(engine: &Engine, simulator: &dyn ChatBackend, goal: &SimulatedUserGoal) -> DialogueOutcome {
    let mut history = DialogueHistory::new(goal.id.clone());
    let mut traces = Vec::new();
    let result = drive(engine, simulator, goal, &mut history, &mut traces);
    let (terminated, error) = match result {
        Ok(t) => (t, None),
        Err(e) => {
            tracing::warn!(goal = %goal.id, error = %e, "dialogue failed");
            (Termination::Error, Some(e.to_string()))
        }
    };
    DialogueOutcome {
        goal_id: goal.id.clone(),
        level: goal.level,
        turn_count: history.visible_turns().count(),
        conversation: history,
        terminated,
        error,
        traces,
    }
}

fn drive(
    engine: &Engine,
    simulator: &dyn ChatBackend,
    goal: &SimulatedUserGoal,
    history: &mut DialogueHistory,
    traces: &mut Vec<TraceRecord>,
) -> Result<Termination, StepError> {
    goal.validate()?;
    let limit = 2 * goal.max_turns;
    let mut input = goal.first_input();
    loop {
        let response = engine.respond(goal.level, history, &input)?;
        traces.push(response.record(goal.level));
        *history = response.history;
        if history.visible_turns().count() + 2 > limit {
            return Ok(Termination::MaxTurns);
        }
        let (reply, done) = split_sentinel(&simulate_user_turn(simulator, history, goal)?);
        if done {
            if !reply.is_empty() {
                *history = history.append_turn(Speaker::User, &reply).map_err(ReactError::from)?;
            }
            return Ok(Termination::UserDone);
        }
        input = Input::Utterance(reply);
    }
}
