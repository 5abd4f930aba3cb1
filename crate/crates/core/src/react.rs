//! Rewrite, ReAct and Reflect: the response pipeline.
//!
//! A driver utterance is rewritten, then answered through a loop of
//! `Thought:` / `Action:` steps whose observations come from the knowledge
//! store or the strategy catalog. The candidate answer is checked against the
//! session's strategy and regenerated a bounded number of times before the
//! exchange is committed to the history.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dialogue::{DialogueError, DialogueHistory, Speaker};
use crate::embedding::{Embedder, IndexError, VectorStore};
use crate::level::ProactivityLevel;
use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError, Retrying, RetryPolicy};
use crate::proactivity::StrategyCatalog;
use crate::rewriter::{RewriteBank, RewriteError, RewriteResult, Rewriter};

pub const REACT_MARKER: &str = "You are IVCA, an in-vehicle conversational assistant talking with a driver.";
pub const REFLECT_MARKER: &str = "You review replies of an in-vehicle assistant against its proactivity strategy.";
pub const OBSERVATION_STOP: &str = "Observation:";
pub const NO_RESULTS: &str = "NO_RESULTS";
pub const REASK: &str = "Your last output was malformed; follow the Action format.";

const ACTION_MANUAL: &str = "\
Work step by step. Each reply holds exactly one step in this layout:
Thought: your reasoning
Action: search[question] or get_proactivity_strategy[number]

search[question] looks up vehicle functions, surroundings and the driver's profile in the knowledge base.
get_proactivity_strategy[number] returns the behaviour rules for proactivity level 1 to 5.

Stop after the Action line; its result is appended for you. When you are ready to talk to the driver, reply instead with:
Thought: your reasoning
Final Answer: the words to say to the driver

Keep the final answer short and conversational, and follow the strategy below.";

#[derive(Debug, thiserror::Error)]
pub enum ReactError {
    #[error("cannot parse ReAct step: {0:?}")]
    UnparsableStep(String),
    #[error("invalid proactivity level in action: {0:?}")]
    InvalidLevel(String),
    #[error("strategy text is empty")]
    EmptyStrategy,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid engine setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Search,
    GetProactivityStrategy,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub argument: String,
}

impl Action {
    pub fn search(question: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Search,
            argument: question.into(),
        }
    }

    pub fn strategy(level: ProactivityLevel) -> Self {
        Self {
            kind: ActionKind::GetProactivityStrategy,
            argument: level.to_string(),
        }
    }

    pub fn finish(answer: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Finish,
            argument: answer.into(),
        }
    }

    pub fn is_finish(&self) -> bool {
        self.kind == ActionKind::Finish
    }

    /// The line the model is expected to produce for this action.
    pub fn render(&self) -> String {
        match self.kind {
            ActionKind::Search => format!("Action: search[{}]", self.argument),
            ActionKind::GetProactivityStrategy => {
                format!("Action: get_proactivity_strategy[{}]", self.argument)
            }
            ActionKind::Finish => format!("Final Answer: {}", self.argument),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedStep {
    pub thought: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReActStep {
    pub thought: String,
    pub action: Action,
    /// Present exactly when the action is not `Finish`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReActTrace {
    pub steps: Vec<ReActStep>,
    pub final_answer: String,
    pub reflect_attempts: usize,
    pub reflected_ok: bool,
    /// The step budget ran out and the final step was synthesized.
    pub truncated: bool,
}

static ACTION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^action\s*:\s*(search|get_proactivity_strategy)\s*\[(.*)\]$").expect("action regex")
});
static FINAL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^final\s+answer\s*:(.*)$").expect("final regex"));
static THOUGHT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^thought\s*:(.*)$").expect("thought regex"));

/// Parses one model step. Text after the action line is ignored.
pub fn parse_step(raw: &str) -> Result<ParsedStep, ReactError> {
    let unparsable = || ReactError::UnparsableStep(raw.to_string());
    let lines: Vec<&str> = raw.lines().map(str::trim).collect();
    let mut thought: Vec<&str> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if let Some(caps) = ACTION_LINE.captures(line) {
            let argument = caps[2].trim();
            let action = if caps[1].eq_ignore_ascii_case("search") {
                if argument.is_empty() {
                    return Err(unparsable());
                }
                Action::search(argument)
            } else {
                let level = argument
                    .parse::<i64>()
                    .ok()
                    .and_then(|n| ProactivityLevel::new(n).ok())
                    .ok_or_else(|| ReactError::InvalidLevel(argument.to_string()))?;
                Action::strategy(level)
            };
            return Ok(ParsedStep {
                thought: join_thought(&thought),
                action,
            });
        }
        if let Some(caps) = FINAL_LINE.captures(line) {
            let mut answer = vec![caps[1].trim()];
            answer.extend(lines[i + 1..].iter().copied());
            let answer = answer.join("\n").trim().to_string();
            if answer.is_empty() {
                return Err(unparsable());
            }
            return Ok(ParsedStep {
                thought: join_thought(&thought),
                action: Action::finish(answer),
            });
        }
        match THOUGHT_LINE.captures(line) {
            Some(caps) => thought.push(caps.get(1).map_or("", |m| m.as_str()).trim()),
            None => thought.push(line),
        }
    }
    Err(unparsable())
}

fn join_thought(lines: &[&str]) -> String {
    lines.join("\n").trim().to_string()
}

/// Inverse of [`parse_step`] for steps the engine itself produces.
pub fn render_step(thought: &str, action: &Action) -> String {
    if thought.is_empty() {
        action.render()
    } else {
        format!("Thought: {thought}\n{}", action.render())
    }
}

pub fn build_react_prompt(
    config: &EngineConfig,
    history: &DialogueHistory,
    question: &str,
    strategy_text: &str,
    prior_steps: &[ReActStep],
) -> Result<ChatRequest, ReactError> {
    if strategy_text.trim().is_empty() {
        return Err(ReactError::EmptyStrategy);
    }
    let system = format!("{REACT_MARKER}\n{ACTION_MANUAL}\n\nProactivity strategy:\n{strategy_text}");
    let rendered = history.render();
    let mut user = if rendered.is_empty() {
        "Conversation so far: (none)\n\n".to_string()
    } else {
        format!("Conversation so far:\n{rendered}\n\n")
    };
    user.push_str(&format!("Question: {question}\n"));
    for step in prior_steps {
        user.push_str(&render_step(&step.thought, &step.action));
        user.push('\n');
        if let Some(obs) = &step.observation {
            user.push_str(&format!("{OBSERVATION_STOP} {obs}\n"));
        }
    }
    user.push_str("Thought:");
    Ok(ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(user)])
        .with_temperature(config.temperature)
        .with_stop(OBSERVATION_STOP))
}

/// Read-only resources an action may consult.
pub struct ActionContext<'a> {
    pub store: &'a VectorStore,
    pub embedder: &'a dyn Embedder,
    pub catalog: &'a StrategyCatalog,
    pub retrieval_k: usize,
}

pub fn execute_action(action: &Action, ctx: &ActionContext<'_>) -> Result<String, ReactError> {
    match action.kind {
        ActionKind::Search => {
            if ctx.store.is_empty() {
                return Ok(NO_RESULTS.to_string());
            }
            let query = ctx.embedder.embed(&action.argument)?;
            let hits = ctx.store.top_k(&query, ctx.retrieval_k)?;
            Ok(hits
                .into_iter()
                .map(|h| h.payload_text)
                .collect::<Vec<_>>()
                .join("\n"))
        }
        ActionKind::GetProactivityStrategy => {
            let level: i64 = action
                .argument
                .trim()
                .parse()
                .map_err(|_| ReactError::InvalidLevel(action.argument.clone()))?;
            ctx.catalog
                .get_proactivity_strategy(level)
                .map(str::to_string)
                .map_err(|e| ReactError::InvalidLevel(e.0.to_string()))
        }
        ActionKind::Finish => Err(ReactError::InvalidInput(
            "a Finish action has no observation".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No { correction: Option<String> },
}

static CORRECTION_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(corrected(\s+(reply|response|answer))?|correction)\s*:").expect("correction regex")
});

/// Reads a reflection completion. Anything that is not a clear YES is a NO.
pub fn parse_verdict(content: &str) -> Verdict {
    let text = content.trim();
    let word_end = text
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(text.len());
    let first = &text[..word_end];
    if first.eq_ignore_ascii_case("yes") {
        return Verdict::Yes;
    }
    let correction = if let Some(m) = CORRECTION_LABEL.find(text) {
        Some(text[m.end()..].trim())
    } else if first.eq_ignore_ascii_case("no") {
        Some(text[word_end..].trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()))
    } else {
        None
    };
    Verdict::No {
        correction: correction
            .map(|c| c.trim().trim_matches('"').trim().to_string())
            .filter(|c| !c.is_empty()),
    }
}

pub fn build_reflect_prompt(
    config: &EngineConfig,
    history: &DialogueHistory,
    question: &str,
    strategy_text: &str,
    candidate: &str,
) -> ChatRequest {
    let system = format!(
        "{REFLECT_MARKER}\n\nStrategy:\n{strategy_text}\n\n\
         Answer YES if the reply follows the strategy. Otherwise answer NO and give a \
         corrected reply on the next line, starting with `Corrected:`."
    );
    let rendered = history.render();
    let user = format!(
        "Conversation so far:\n{}\n\nQuestion: {question}\nCandidate reply: {candidate}\n\n\
         Does this reply follow the strategy?",
        if rendered.is_empty() { "(none)" } else { &rendered }
    );
    ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(user)])
        .with_temperature(config.temperature)
}

/// What prompted a response: something the driver said, or a situation that
/// lets the assistant open the conversation (levels 4 and 5 only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Utterance(String),
    Initiation(String),
}

/// The question handed to the ReAct loop when the assistant speaks first.
pub fn initiation_question(event: &str) -> String {
    format!("No driver input yet. Situation: {event} Open the conversation with the driver.")
}

/// One audit record per response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub session_id: String,
    pub level: ProactivityLevel,
    pub rewrite_result: Option<RewriteResult>,
    pub steps: Vec<ReActStep>,
    pub final_answer: String,
    pub reflect_attempts: usize,
    pub reflected_ok: bool,
    pub truncated: bool,
}

impl TraceRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Appends records to a JSON-lines file, creating it if needed.
pub fn append_trace_log(path: &Path, records: &[TraceRecord]) -> std::io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&r.to_json_line());
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())
}

#[derive(Debug, Clone)]
pub struct Response {
    pub history: DialogueHistory,
    pub assistant_text: String,
    pub trace: ReActTrace,
    pub rewrite_result: Option<RewriteResult>,
}

impl Response {
    pub fn record(&self, level: ProactivityLevel) -> TraceRecord {
        TraceRecord {
            session_id: self.history.session_id.clone(),
            level,
            rewrite_result: self.rewrite_result.clone(),
            steps: self.trace.steps.clone(),
            final_answer: self.trace.final_answer.clone(),
            reflect_attempts: self.trace.reflect_attempts,
            reflected_ok: self.trace.reflected_ok,
            truncated: self.trace.truncated,
        }
    }
}

const FALLBACK_ANSWER: &str = "Sorry, I could not work that out.";

/// Shared, read-only pipeline state. Cheap to share across threads; each
/// call works on its own history value.
pub struct Engine {
    config: EngineConfig,
    backend: Arc<dyn ChatBackend>,
    embedder: Arc<dyn Embedder>,
    store: Arc<VectorStore>,
    catalog: StrategyCatalog,
    rewriter: Rewriter,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        backend: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
        store: Arc<VectorStore>,
        bank: Arc<RewriteBank>,
    ) -> Result<Self, ReactError> {
        Self::with_retry_policy(config, backend, embedder, store, bank, RetryPolicy::new(3))
    }

    pub fn with_retry_policy(
        config: EngineConfig,
        backend: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
        store: Arc<VectorStore>,
        bank: Arc<RewriteBank>,
        retry: RetryPolicy,
    ) -> Result<Self, ReactError> {
        config
            .validate()
            .map_err(|e| ReactError::Setup(e.to_string()))?;
        if store.dim() != embedder.dim() {
            return Err(ReactError::Setup(format!(
                "store dimension {} does not match embedder dimension {}",
                store.dim(),
                embedder.dim()
            )));
        }
        let backend: Arc<dyn ChatBackend> = Arc::new(Retrying::new(backend, retry));
        let rewriter = Rewriter::new(
            backend.clone(),
            embedder.clone(),
            bank,
            config.rewrite_shot_count,
            config.temperature,
        );
        Ok(Self {
            config,
            backend,
            embedder,
            store,
            catalog: StrategyCatalog::canonical(),
            rewriter,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn catalog(&self) -> &StrategyCatalog {
        &self.catalog
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    fn action_context(&self) -> ActionContext<'_> {
        ActionContext {
            store: &self.store,
            embedder: self.embedder.as_ref(),
            catalog: &self.catalog,
            retrieval_k: self.config.retrieval_k,
        }
    }

    /// One model step, with a single re-ask if the output does not parse.
    fn next_step(&self, request: ChatRequest) -> Result<ParsedStep, ReactError> {
        let first = self.backend.complete(&request)?;
        match parse_step(&first.content) {
            Ok(step) => Ok(step),
            Err(ReactError::UnparsableStep(_) | ReactError::InvalidLevel(_)) => {
                tracing::debug!(raw = %first.content, "malformed step, re-asking");
                let mut retry = request;
                retry.messages.push(ChatMessage::assistant(first.content));
                retry.messages.push(ChatMessage::user(REASK));
                let second = self.backend.complete(&retry)?;
                parse_step(&second.content)
            }
            Err(e) => Err(e),
        }
    }

    /// The ReAct loop before reflection. `history` excludes the current question.
    pub fn run_react(
        &self,
        level: ProactivityLevel,
        history: &DialogueHistory,
        question: &str,
    ) -> Result<ReActTrace, ReactError> {
        let strategy_text = self.catalog.text(level);
        let budget = self.config.max_react_steps;
        let mut steps: Vec<ReActStep> = Vec::with_capacity(budget);
        let mut last_thought = String::new();
        for step_no in 1..=budget {
            let request = build_react_prompt(&self.config, history, question, strategy_text, &steps)?;
            let ParsedStep { thought, action } = self.next_step(request)?;
            if !thought.is_empty() {
                last_thought.clone_from(&thought);
            }
            if action.is_finish() {
                let final_answer = action.argument.clone();
                steps.push(ReActStep { thought, action, observation: None });
                return Ok(ReActTrace {
                    steps,
                    final_answer,
                    reflect_attempts: 0,
                    reflected_ok: false,
                    truncated: false,
                });
            }
            if step_no == budget {
                let answer = if last_thought.is_empty() {
                    FALLBACK_ANSWER.to_string()
                } else {
                    last_thought.clone()
                };
                tracing::warn!(budget, "ReAct step budget exhausted");
                steps.push(ReActStep {
                    thought,
                    action: Action::finish(answer.clone()),
                    observation: None,
                });
                return Ok(ReActTrace {
                    steps,
                    final_answer: answer,
                    reflect_attempts: 0,
                    reflected_ok: false,
                    truncated: true,
                });
            }
            let observation = execute_action(&action, &self.action_context())?;
            steps.push(ReActStep {
                thought,
                action,
                observation: Some(observation),
            });
        }
        unreachable!("config validation guarantees at least one step")
    }

    /// Checks the candidate answer against the strategy, regenerating on NO.
    pub fn reflect(
        &self,
        mut trace: ReActTrace,
        strategy_text: &str,
        history: &DialogueHistory,
        question: &str,
    ) -> Result<ReActTrace, ReactError> {
        for _ in 0..=self.config.max_reflect_retries {
            let request = build_reflect_prompt(
                &self.config,
                history,
                question,
                strategy_text,
                &trace.final_answer,
            );
            let response = self.backend.complete(&request)?;
            trace.reflect_attempts += 1;
            match parse_verdict(&response.content) {
                Verdict::Yes => {
                    trace.reflected_ok = true;
                    break;
                }
                Verdict::No { correction } => {
                    trace.reflected_ok = false;
                    if let Some(c) = correction {
                        trace.final_answer = c;
                    }
                }
            }
        }
        Ok(trace)
    }

    /// Full pipeline for one exchange. Returns the extended history; the
    /// caller's history is untouched on error.
    pub fn respond(
        &self,
        level: ProactivityLevel,
        history: &DialogueHistory,
        input: &Input,
    ) -> Result<Response, ReactError> {
        let (with_input, question, rewrite_result) = match input {
            Input::Utterance(text) => {
                if history.last_turn().is_some_and(|t| t.speaker == Speaker::User) {
                    return Err(ReactError::InvalidInput(
                        "the driver already has the floor".into(),
                    ));
                }
                let with_input = history.append_turn(Speaker::User, text)?;
                let rewrite = self.rewriter.rewrite(text)?;
                (with_input, rewrite.rewritten.clone(), Some(rewrite))
            }
            Input::Initiation(event) => {
                if !level.assistant_initiates() {
                    return Err(ReactError::InvalidInput(format!(
                        "level {level} does not let the assistant speak first"
                    )));
                }
                if !history.is_empty() {
                    return Err(ReactError::InvalidInput(
                        "initiation is only possible on an empty session".into(),
                    ));
                }
                let with_input = history.append_turn(Speaker::System, event)?;
                (with_input, initiation_question(event.trim()), None)
            }
        };
        let strategy_text = self.catalog.text(level);
        let trace = self.run_react(level, history, &question)?;
        let trace = self.reflect(trace, strategy_text, history, &question)?;
        let committed = with_input.append_turn(Speaker::Assistant, &trace.final_answer)?;
        let assistant_text = committed
            .last_assistant_text()
            .expect("assistant turn just appended")
            .to_string();
        Ok(Response {
            history: committed,
            assistant_text,
            trace,
            rewrite_result,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::llm::{Reply, Rule, ScriptedBackend};
    use crate::rewriter::{RewritePair, REWRITE_MARKER};
    use std::time::Duration;

    fn level(n: i64) -> ProactivityLevel {
        ProactivityLevel::new(n).unwrap()
    }

    fn bank() -> Arc<RewriteBank> {
        let pairs = vec![RewritePair {
            id: "hot".into(),
            question: "I'm feeling hot.".into(),
            rewrites: vec!["Turn on the air conditioning.".into()],
        }];
        Arc::new(RewriteBank::new(pairs, &HashingEmbedder::default()).unwrap())
    }

    fn engine_with(backend: Arc<dyn ChatBackend>, config: EngineConfig) -> Engine {
        let embedder = Arc::new(HashingEmbedder::default());
        let store = Arc::new(VectorStore::new(embedder.dim()));
        Engine::with_retry_policy(
            config,
            backend,
            embedder,
            store,
            bank(),
            RetryPolicy::new(1).with_base_delay(Duration::ZERO),
        )
        .unwrap()
    }

    fn rules(react: Vec<Rule>, reflect: &str) -> Vec<Rule> {
        let mut all = vec![
            Rule::new(Reply::EchoAfter("Input: ".into())).system(REWRITE_MARKER),
            Rule::new(Reply::text(reflect)).system(REFLECT_MARKER),
        ];
        all.extend(react);
        all
    }

    #[test]
    fn parses_the_three_step_forms() {
        let s = parse_step("Thought: need KB.\nAction: search[activate fresh air circulation]").unwrap();
        assert_eq!(s.thought, "need KB.");
        assert_eq!(s.action, Action::search("activate fresh air circulation"));
        let s = parse_step("Action: get_proactivity_strategy[3]").unwrap();
        assert_eq!(s.action, Action::strategy(level(3)));
        let s = parse_step("Final Answer: I will activate the air conditioning for you.").unwrap();
        assert_eq!(s.action, Action::finish("I will activate the air conditioning for you."));
    }

    #[test]
    fn parser_is_lenient_about_case_and_space() {
        let s = parse_step("  THOUGHT:  hmm \n  action :  Search [ fog lights ]  \nObservation: fake").unwrap();
        assert_eq!(s.thought, "hmm");
        assert_eq!(s.action, Action::search("fog lights"));
    }

    #[test]
    fn parser_errors() {
        assert!(matches!(parse_step(""), Err(ReactError::UnparsableStep(_))));
        assert!(matches!(parse_step("Thought: only thinking"), Err(ReactError::UnparsableStep(_))));
        assert!(matches!(parse_step("Action: search[]"), Err(ReactError::UnparsableStep(_))));
        assert!(matches!(parse_step("Action: get_proactivity_strategy[9]"), Err(ReactError::InvalidLevel(a)) if a == "9"));
        assert!(matches!(parse_step("Action: get_proactivity_strategy[two]"), Err(ReactError::InvalidLevel(_))));
    }

    #[test]
    fn prompt_structure() {
        let config = EngineConfig::default();
        let h = DialogueHistory::new("s");
        let catalog = StrategyCatalog::canonical();
        let text = catalog.text(level(2));
        let req = build_react_prompt(&config, &h, "q", text, &[]).unwrap();
        assert!(req.last_content().ends_with("Thought:"));
        assert!(req.system_content().contains(text));
        assert_eq!(req.stop_sequences, vec![OBSERVATION_STOP.to_string()]);
        assert!(!req.system_content().contains(OBSERVATION_STOP));
        let steps = vec![
            ReActStep {
                thought: "a".into(),
                action: Action::strategy(level(2)),
                observation: Some("rules".into()),
            },
            ReActStep {
                thought: "b".into(),
                action: Action::search("x"),
                observation: Some("row".into()),
            },
        ];
        let req = build_react_prompt(&config, &h, "q", text, &steps).unwrap();
        let prompt: String = req.messages.iter().map(|m| m.content.as_str()).collect();
        assert_eq!(prompt.matches(OBSERVATION_STOP).count(), 2);
        assert!(matches!(
            build_react_prompt(&config, &h, "q", " ", &[]),
            Err(ReactError::EmptyStrategy)
        ));
    }

    #[test]
    fn empty_store_search_has_no_results() {
        let store = VectorStore::new(256);
        let catalog = StrategyCatalog::canonical();
        let ctx = ActionContext {
            store: &store,
            embedder: &HashingEmbedder::default(),
            catalog: &catalog,
            retrieval_k: 3,
        };
        assert_eq!(execute_action(&Action::search("x"), &ctx).unwrap(), NO_RESULTS);
        assert_eq!(
            execute_action(&Action::strategy(level(4)), &ctx).unwrap(),
            catalog.text(level(4))
        );
        assert!(execute_action(&Action::finish("x"), &ctx).is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("YES"), Verdict::Yes);
        assert_eq!(parse_verdict(" yes, it follows."), Verdict::Yes);
        assert_eq!(
            parse_verdict("NO\nCorrected: Shall I open the window?"),
            Verdict::No { correction: Some("Shall I open the window?".into()) }
        );
        assert_eq!(
            parse_verdict("No. Shall I open the window?"),
            Verdict::No { correction: Some("Shall I open the window?".into()) }
        );
        assert_eq!(parse_verdict("maybe"), Verdict::No { correction: None });
        assert_eq!(parse_verdict("yesterday"), Verdict::No { correction: None });
        assert_eq!(parse_verdict(""), Verdict::No { correction: None });
    }

    #[test]
    fn three_step_trace() {
        let backend = Arc::new(ScriptedBackend::queue([
            "Thought: check rules\nAction: get_proactivity_strategy[2]",
            "Thought: look up\nAction: search[air conditioning]",
            "Thought: ask\nFinal Answer: Shall I activate the air conditioning for you?",
        ]));
        let engine = engine_with(backend, EngineConfig::default());
        let trace = engine.run_react(level(2), &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!(trace.steps.len(), 3);
        assert!(trace.steps[2].action.is_finish());
        assert_eq!(trace.steps[1].observation.as_deref(), Some(NO_RESULTS));
        assert!(!trace.truncated);
    }

    #[test]
    fn immediate_finish_is_one_step() {
        let backend = Arc::new(ScriptedBackend::queue(["Final Answer: Sure."]));
        let engine = engine_with(backend, EngineConfig::default());
        let trace = engine.run_react(level(1), &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.final_answer, "Sure.");
    }

    #[test]
    fn budget_exhaustion_synthesizes_finish() {
        let backend = Arc::new(ScriptedBackend::matcher(vec![Rule::new(Reply::text(
            "Thought: still thinking\nAction: search[more]",
        ))]));
        let engine = engine_with(backend, EngineConfig::default());
        let trace = engine.run_react(level(1), &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!(trace.steps.len(), 6);
        assert!(trace.truncated);
        assert!(trace.steps.last().unwrap().action.is_finish());
        assert!(trace.steps.last().unwrap().observation.is_none());
        assert_eq!(trace.final_answer, "still thinking");
    }

    #[test]
    fn malformed_step_is_reasked_once() {
        let backend = Arc::new(ScriptedBackend::queue(["gibberish", "Final Answer: Sure."]));
        let engine = engine_with(backend.clone(), EngineConfig::default());
        let trace = engine.run_react(level(1), &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!(trace.final_answer, "Sure.");
        assert_eq!(backend.call_log()[1].last_content(), REASK);

        let backend = Arc::new(ScriptedBackend::queue(["gibberish", "more gibberish"]));
        let engine = engine_with(backend, EngineConfig::default());
        assert!(matches!(
            engine.run_react(level(1), &DialogueHistory::new("s"), "q"),
            Err(ReactError::UnparsableStep(_))
        ));
    }

    fn trace(answer: &str) -> ReActTrace {
        ReActTrace {
            steps: vec![ReActStep {
                thought: String::new(),
                action: Action::finish(answer),
                observation: None,
            }],
            final_answer: answer.into(),
            reflect_attempts: 0,
            reflected_ok: false,
            truncated: false,
        }
    }

    #[test]
    fn reflection_yes_keeps_answer() {
        let engine = engine_with(Arc::new(ScriptedBackend::queue(["YES"])), EngineConfig::default());
        let out = engine.reflect(trace("Sure."), "s", &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!((out.final_answer.as_str(), out.reflect_attempts, out.reflected_ok), ("Sure.", 1, true));
    }

    #[test]
    fn reflection_no_then_yes_replaces_answer() {
        let engine = engine_with(
            Arc::new(ScriptedBackend::queue(["NO\nCorrected: Shall I open it?", "YES"])),
            EngineConfig::default(),
        );
        let out = engine.reflect(trace("Opened."), "s", &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!((out.final_answer.as_str(), out.reflect_attempts, out.reflected_ok), ("Shall I open it?", 2, true));
    }

    #[test]
    fn reflection_all_no_keeps_last_correction() {
        let engine = engine_with(
            Arc::new(ScriptedBackend::queue(["NO\nCorrected: a", "NO\nCorrected: b", "NO\nCorrected: c"])),
            EngineConfig::default(),
        );
        let out = engine.reflect(trace("x"), "s", &DialogueHistory::new("s"), "q").unwrap();
        assert_eq!((out.final_answer.as_str(), out.reflect_attempts, out.reflected_ok), ("c", 3, false));
    }

    #[test]
    fn respond_appends_two_turns() {
        let backend = Arc::new(ScriptedBackend::matcher(rules(
            vec![Rule::new(Reply::text("Final Answer: Shall I activate the air conditioning for you?"))],
            "YES",
        )));
        let engine = engine_with(backend, EngineConfig::default());
        let h = DialogueHistory::new("s");
        let out = engine
            .respond(level(2), &h, &Input::Utterance("I'm feeling hot".into()))
            .unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.assistant_text, "Shall I activate the air conditioning for you?");
        assert_eq!(out.rewrite_result.unwrap().rewritten, "I'm feeling hot");
    }

    #[test]
    fn initiation_rules() {
        let backend = Arc::new(ScriptedBackend::matcher(rules(
            vec![Rule::new(Reply::text("Final Answer: I'm assisting in closing the car windows for you."))],
            "YES",
        )));
        let engine = engine_with(backend, EngineConfig::default());
        let h = DialogueHistory::new("s");
        let event = Input::Initiation("The car is entering a rainy area.".into());
        let out = engine.respond(level(5), &h, &event).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.history.first_speaker(), Some(Speaker::Assistant));
        assert!(out.rewrite_result.is_none());
        assert!(matches!(engine.respond(level(3), &h, &event), Err(ReactError::InvalidInput(_))));
        assert!(matches!(engine.respond(level(5), &out.history, &event), Err(ReactError::InvalidInput(_))));
    }

    #[test]
    fn failure_leaves_history_untouched() {
        let backend = Arc::new(ScriptedBackend::matcher(rules(
            vec![Rule::new(Reply::Unavailable("down".into()))],
            "YES",
        )));
        let engine = engine_with(backend, EngineConfig::default());
        let h = DialogueHistory::new("s").append_turn(Speaker::User, "hi").unwrap();
        let h = h.append_turn(Speaker::Assistant, "hello").unwrap();
        let before = h.clone();
        assert!(engine.respond(level(1), &h, &Input::Utterance("open it".into())).is_err());
        assert_eq!(h, before);
    }

    fn arb_action() -> impl proptest::strategy::Strategy<Value = Action> {
        use proptest::prelude::*;
        prop_oneof![
            "[a-z0-9][a-z0-9 '-]{0,30}[a-z0-9]".prop_map(Action::search),
            (1i64..=5).prop_map(|n| Action::strategy(level(n))),
            "[A-Z][A-Za-z0-9 ,.?']{0,60}".prop_map(|s| Action::finish(s.trim())),
        ]
    }

    proptest::proptest! {
        #[test]
        fn render_then_parse_is_identity(
            thought in "([A-Za-z][A-Za-z0-9 ,.']{0,40}[a-z.])?",
            action in arb_action(),
        ) {
            let parsed = parse_step(&render_step(&thought, &action)).unwrap();
            proptest::prop_assert_eq!(parsed, ParsedStep { thought, action });
        }
    }

    #[test]
    fn trace_record_round_trips() {
        let backend = Arc::new(ScriptedBackend::matcher(rules(
            vec![Rule::new(Reply::text("Final Answer: Sure."))],
            "YES",
        )));
        let engine = engine_with(backend, EngineConfig::default());
        let out = engine
            .respond(level(1), &DialogueHistory::new("s"), &Input::Utterance("Open the sunroof.".into()))
            .unwrap();
        let rec = out.record(level(1));
        assert_eq!(TraceRecord::from_json_line(&rec.to_json_line()).unwrap(), rec);
        assert!(rec.rewrite_result.clone().unwrap().prompt_text.contains(REWRITE_MARKER));

        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("traces.jsonl");
        append_trace_log(&log, std::slice::from_ref(&rec)).unwrap();
        append_trace_log(&log, &[rec.clone(), rec.clone()]).unwrap();
        let lines: Vec<_> = std::fs::read_to_string(&log).unwrap().lines().map(str::to_string).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| TraceRecord::from_json_line(l).unwrap() == rec));
    }
}
