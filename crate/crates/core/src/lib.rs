//! Proactive in-vehicle conversational assistant engine.
//!
//! A driver utterance is rewritten into an explicit task request, answered by
//! a ReAct loop that consults a per-level proactivity strategy and a vehicle
//! knowledge base, then checked by a reflection pass before it is returned.
//! The same engine drives simulated dialogues and their evaluation.

pub mod config;
pub mod dialogue;
pub mod embedding;
pub mod eval;
pub mod knowledge;
pub mod level;
pub mod llm;
pub mod proactivity;
pub mod react;
pub mod rewriter;
pub mod simulator;

pub use config::EngineConfig;
pub use dialogue::{DialogueHistory, Speaker, Transcript, Turn};
pub use level::ProactivityLevel;
pub use react::{Engine, Input, ReActTrace};
pub use simulator::SimulatedUserGoal;
