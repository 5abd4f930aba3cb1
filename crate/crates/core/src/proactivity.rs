//! The five strategies, the `get_proactivity_strategy` payload, and judges
//! that score which level a finished conversation actually reached.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::{DialogueHistory, Speaker};
use crate::level::{Assumption, Autonomy, InvalidLevel, ProactivityLevel, StrategySpec, UserControl};
use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError};

/// Scoring rubric shared by the LLM judge prompt and human reviewers.
pub const RUBRIC: &str = include_str!("../../../docs/rubric.md");

pub const JUDGE_MARKER: &str = "You grade how proactive an in-vehicle assistant was.";

const LEVEL_TEXTS: [(&str, &str, &str, &str); 5] = [
    (
        "Make no assumptions about what the driver needs; passively receive instructions and carry out exactly what is asked.",
        "Take no action on your own initiative.",
        "The driver has full control. Nothing happens without an explicit instruction.",
        "Driver: Please turn on the air conditioner.\nIVCA: Sure.",
    ),
    (
        "Make tentative assumptions from the little the driver says. You may point out a likely issue or suggest a fix.",
        "Do not act yet: ask the driver to confirm before taking any proactive step.",
        "Confirmation is required before every action.",
        "Driver: I'm feeling hot.\nIVCA: Shall I activate the air conditioning for you?\nDriver: Go ahead.",
    ),
    (
        "Make the same tentative assumptions as level 2.",
        "Act on them: announce the action you are taking and execute it, asking only for minimal input such as a setting value.",
        "The driver supplies minimal input; you carry out the rest.",
        "Driver: I'm feeling hot.\nIVCA: I will activate the air conditioning for you. How about 25 degrees Celsius okay?\nDriver: Sounds good. Thanks",
    ),
    (
        "Make strong assumptions from the driver's history and preferences. You may open the conversation yourself with a personalized suggestion.",
        "Propose, then wait: execute only after the driver agrees.",
        "The driver confirms or adjusts every proposal before it is executed.",
        "IVCA: Would you like me to set the air conditioning to your preferred temperature of 25 degrees Celsius?\nDriver: Yes, that would be helpful.\nIVCA: The temperature has been set.",
    ),
    (
        "Make strong assumptions as in level 4. You may open the conversation yourself.",
        "Execute your assumption directly and briefly explain what you are doing.",
        "The driver can still intervene and tell you to stop.",
        "IVCA: You're in the car. I'll adjust the air conditioning to your preferred temperature of 25 degrees Celsius.\nDriver: No, thanks.",
    ),
];

const DIMENSIONS: [(Assumption, Autonomy, UserControl); 5] = [
    (Assumption::None, Autonomy::None, UserControl::FullControl),
    (Assumption::Some, Autonomy::ConfirmFirst, UserControl::ConfirmationRequired),
    (Assumption::Some, Autonomy::ActWithMinimalInput, UserControl::MinimalInput),
    (Assumption::Strong, Autonomy::ProposeThenConfirm, UserControl::ConfirmBeforeExecute),
    (Assumption::Strong, Autonomy::ActWithExplanation, UserControl::InterveneToStop),
];

/// The canonical five strategies, indexed by level.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCatalog {
    specs: BTreeMap<ProactivityLevel, StrategySpec>,
}

impl Default for StrategyCatalog {
    fn default() -> Self {
        Self::canonical()
    }
}

impl StrategyCatalog {
    pub fn canonical() -> Self {
        let specs = ProactivityLevel::ALL
            .iter()
            .zip(LEVEL_TEXTS.iter().zip(DIMENSIONS))
            .map(|(&level, ((assume, act, control, example), (assumption, autonomy, user_control)))| {
                let strategy_text = format!(
                    "Proactivity level {level}.\nAssumption: {assume}\nAutonomy: {act}\nUser control: {control}\nExample:\n{example}"
                );
                (
                    level,
                    StrategySpec {
                        level,
                        assumption,
                        autonomy,
                        user_control,
                        strategy_text,
                        assistant_initiates: level.assistant_initiates(),
                    },
                )
            })
            .collect();
        Self { specs }
    }

    pub fn spec(&self, level: ProactivityLevel) -> &StrategySpec {
        &self.specs[&level]
    }

    pub fn specs(&self) -> impl Iterator<Item = &StrategySpec> {
        self.specs.values()
    }

    pub fn text(&self, level: ProactivityLevel) -> &str {
        &self.spec(level).strategy_text
    }

    /// Payload of the `get_proactivity_strategy[n]` action.
    pub fn get_proactivity_strategy(&self, level: i64) -> Result<&str, InvalidLevel> {
        Ok(self.text(ProactivityLevel::new(level)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProactivityScore {
    /// 0 means the task was not completed; 1..=5 is the level reached.
    pub value: u8,
    pub rationale: String,
}

/// What the conversation was supposed to achieve.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskContext {
    pub goal_description: String,
    /// If non-empty, at least one must appear in an assistant turn for the
    /// task to count as completed.
    #[serde(default)]
    pub success_keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeKind {
    Keyword,
    LlmRubric,
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("conversation has no assistant turn")]
    EmptyConversation,
    #[error("judge reply has no score: {0:?}")]
    MalformedVerdict(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

pub trait Judge: Send + Sync {
    fn kind(&self) -> JudgeKind;

    fn score(
        &self,
        conversation: &DialogueHistory,
        task: &TaskContext,
    ) -> Result<ProactivityScore, JudgeError>;
}

/// Scores with `judge`, then enforces that only assistant-opened
/// conversations can reach levels 4 or 5.
pub fn judge_conversation(
    judge: &dyn Judge,
    conversation: &DialogueHistory,
    task: &TaskContext,
) -> Result<ProactivityScore, JudgeError> {
    if !conversation.turns.iter().any(|t| t.speaker == Speaker::Assistant) {
        return Err(JudgeError::EmptyConversation);
    }
    let mut score = judge.score(conversation, task)?;
    if score.value >= 4 && conversation.first_speaker() != Some(Speaker::Assistant) {
        score = ProactivityScore {
            value: 3,
            rationale: format!(
                "{} (capped at 3: the driver opened the conversation)",
                score.rationale
            ),
        };
    }
    Ok(score)
}

static REFUSAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(i can't|i cannot|i can not|i'm unable|i am unable|unable to|not able to|i don't know how)\b")
        .expect("refusal regex")
});

static CONFIRM_OPENER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(shall i|should i|would you like|do you want|do you need|would you prefer|are you interested|can i|may i|want me to)\b")
        .expect("confirm regex")
});

static EXECUTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(sure|done|okay|ok|of course|certainly|no problem|will do|all set|i will|i'll|i've|i have|i'm \w+ing|i am \w+ing|has been|have been|(is|are) now|now (on|off|open|closed|playing)|activated|turned (on|off)|adjusted|opened|closed|enabled|disabled|started|switched)\b",
    )
    .expect("execution regex")
});

static COMMAND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(please|could you|can you|would you|will you|i want to (listen|hear|call)|i'd like to (listen|hear|call)|turn|switch|open|close|adjust|activate|deactivate|set|play|start|stop|enable|disable|navigate|call|increase|decrease|raise|lower|lock|unlock|show|find|check|put|change|pause|resume|skip|dial|send|book|move|tune)\b",
    )
    .expect("command regex")
});

static GREETING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(hi|hey|hello|ok|okay)[,!.]?\s+").expect("greeting regex"));

fn normalize(text: &str) -> String {
    text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Confirm,
    Execute,
}

/// The first sentence in an assistant reply that either asks permission or
/// acts. Sentences doing neither are skipped.
fn first_move(reply: &str) -> Option<Move> {
    let text = normalize(reply);
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let sentence = text[start..i].trim();
            if let Some(m) = classify_sentence(sentence, c == '?') {
                return Some(m);
            }
            start = i + c.len_utf8();
        }
    }
    classify_sentence(text[start..].trim(), false)
}

fn classify_sentence(sentence: &str, question: bool) -> Option<Move> {
    if sentence.is_empty() {
        return None;
    }
    if question || CONFIRM_OPENER.is_match(sentence) {
        Some(Move::Confirm)
    } else if EXECUTION.is_match(sentence) {
        Some(Move::Execute)
    } else {
        None
    }
}

/// Whether the driver's utterance is a direct command rather than a state.
pub fn is_explicit_command(utterance: &str) -> bool {
    let text = normalize(utterance.trim());
    let text = GREETING.replace(&text, "");
    COMMAND.is_match(&text)
}

fn task_met(conversation: &DialogueHistory, task: &TaskContext) -> bool {
    let replies: Vec<String> = conversation
        .turns
        .iter()
        .filter(|t| t.speaker == Speaker::Assistant)
        .map(|t| normalize(&t.text))
        .collect();
    if replies.iter().all(|r| REFUSAL.is_match(r)) {
        return false;
    }
    task.success_keywords.is_empty()
        || task
            .success_keywords
            .iter()
            .any(|k| replies.iter().any(|r| r.contains(&normalize(k))))
}

/// Deterministic decision-tree judge:
/// task unmet → 0; assistant opened → 4 if it asked first, else 5;
/// explicit command answered without a confirmation question → 1;
/// otherwise 2 if the first reply asks before acting, else 3.
pub fn keyword_rubric(
    conversation: &DialogueHistory,
    task: &TaskContext,
) -> Result<ProactivityScore, JudgeError> {
    let first_reply = conversation
        .turns
        .iter()
        .find(|t| t.speaker == Speaker::Assistant)
        .ok_or(JudgeError::EmptyConversation)?;
    let score = |value: u8, why: &str| ProactivityScore {
        value,
        rationale: why.to_string(),
    };
    if !task_met(conversation, task) {
        return Ok(score(0, "task not completed"));
    }
    let first_move = first_move(&first_reply.text).unwrap_or(Move::Execute);
    if conversation.first_speaker() == Some(Speaker::Assistant) {
        return Ok(match first_move {
            Move::Confirm => score(4, "assistant opened and asked before executing"),
            Move::Execute => score(5, "assistant opened and executed with an explanation"),
        });
    }
    let opening = conversation
        .visible_turns()
        .next()
        .map(|t| t.text.as_str())
        .unwrap_or("");
    if is_explicit_command(opening) && !first_reply.text.contains('?') {
        return Ok(score(1, "explicit command carried out as given"));
    }
    Ok(match first_move {
        Move::Confirm => score(2, "inferred a need and asked for confirmation before acting"),
        Move::Execute => score(3, "inferred a need and acted with minimal driver input"),
    })
}

#[derive(Debug, Clone, Default)]
pub struct KeywordJudge;

impl Judge for KeywordJudge {
    fn kind(&self) -> JudgeKind {
        JudgeKind::Keyword
    }

    fn score(
        &self,
        conversation: &DialogueHistory,
        task: &TaskContext,
    ) -> Result<ProactivityScore, JudgeError> {
        keyword_rubric(conversation, task)
    }
}

static SCORE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)score\s*[:=]?\s*([0-5])\b").expect("score regex"));

/// Asks a chat model to apply [`RUBRIC`].
pub struct LlmRubricJudge {
    backend: Arc<dyn ChatBackend>,
}

impl LlmRubricJudge {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend }
    }

    pub fn build_request(conversation: &DialogueHistory, task: &TaskContext) -> ChatRequest {
        let system = format!(
            "{JUDGE_MARKER}\n\n{RUBRIC}\nReply with a line `Score: N` followed by one sentence of rationale."
        );
        let user = format!(
            "Driver goal: {}\n\nConversation:\n{}",
            task.goal_description,
            conversation.render()
        );
        ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(user)])
    }
}

pub fn parse_judge_reply(content: &str) -> Result<ProactivityScore, JudgeError> {
    let caps = SCORE_LINE
        .captures(content)
        .ok_or_else(|| JudgeError::MalformedVerdict(content.to_string()))?;
    let value: u8 = caps[1].parse().expect("regex guarantees a digit");
    let rest = content[caps.get(0).map_or(0, |m| m.end())..].trim();
    let rationale = if rest.is_empty() {
        format!("llm judge assigned {value}")
    } else {
        crate::dialogue::single_line(rest)
    };
    Ok(ProactivityScore { value, rationale })
}

impl Judge for LlmRubricJudge {
    fn kind(&self) -> JudgeKind {
        JudgeKind::LlmRubric
    }

    fn score(
        &self,
        conversation: &DialogueHistory,
        task: &TaskContext,
    ) -> Result<ProactivityScore, JudgeError> {
        let response = self
            .backend
            .complete(&Self::build_request(conversation, task))?;
        parse_judge_reply(&response.content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convo(turns: &[(Speaker, &str)]) -> DialogueHistory {
        turns.iter().fold(DialogueHistory::new("t"), |h, (s, text)| {
            h.append_turn(*s, text).unwrap()
        })
    }

    use Speaker::{Assistant as A, User as U};

    fn judge(turns: &[(Speaker, &str)]) -> u8 {
        judge_conversation(&KeywordJudge, &convo(turns), &TaskContext::default())
            .unwrap()
            .value
    }

    #[test]
    fn catalog_is_complete_and_injective() {
        let c = StrategyCatalog::canonical();
        let texts: std::collections::HashSet<_> =
            (1..=5).map(|l| c.get_proactivity_strategy(l).unwrap()).collect();
        assert_eq!(texts.len(), 5);
        assert!(c.get_proactivity_strategy(0).is_err());
        assert!(c.get_proactivity_strategy(6).is_err());
    }

    #[test]
    fn level_texts_carry_their_rules() {
        let c = StrategyCatalog::canonical();
        let l1 = c.get_proactivity_strategy(1).unwrap().to_lowercase();
        assert!(l1.contains("no assumptions") && l1.contains("passively receive"));
        let l2 = c.get_proactivity_strategy(2).unwrap().to_lowercase();
        assert!(l2.contains("confirm") && l2.contains("before taking any proactive step"));
        for spec in c.specs() {
            for part in ["Assumption:", "Autonomy:", "User control:", "Example:"] {
                assert!(spec.strategy_text.contains(part));
            }
        }
    }

    #[test]
    fn catalog_dimensions() {
        let c = StrategyCatalog::canonical();
        let specs: Vec<_> = c.specs().collect();
        assert_eq!(specs[0].assumption, Assumption::None);
        assert_eq!(specs[3].assumption, Assumption::Strong);
        assert_eq!(specs[4].assumption, Assumption::Strong);
        for s in &specs {
            assert_eq!(s.assistant_initiates, s.level.value() >= 4);
        }
        for pair in specs.windows(2) {
            assert!((pair[0].assumption, pair[0].autonomy) < (pair[1].assumption, pair[1].autonomy));
        }
    }

    #[test]
    fn refusal_scores_zero() {
        assert_eq!(judge(&[(U, "Open the sunroof."), (A, "Sorry, I can't help")]), 0);
    }

    #[test]
    fn missing_keyword_scores_zero() {
        let task = TaskContext {
            goal_description: "open the sunroof".into(),
            success_keywords: vec!["sunroof".into()],
        };
        let c = convo(&[(U, "Hi, open the sunroof."), (A, "Sure, the window is open.")]);
        assert_eq!(keyword_rubric(&c, &task).unwrap().value, 0);
    }

    #[test]
    fn confirm_then_act_swaps_with_act_then_confirm() {
        let asks_first = [
            (U, "I'm feeling hot."),
            (A, "Shall I activate the air conditioning? I can set it to 25 degrees."),
            (U, "Go ahead."),
            (A, "Done."),
        ];
        let acts_first = [
            (U, "I'm feeling hot."),
            (A, "I will activate the air conditioning. Shall I set it to 25 degrees?"),
            (U, "Go ahead."),
            (A, "Done."),
        ];
        assert_eq!(judge(&asks_first), 2);
        assert_eq!(judge(&acts_first), 3);
    }

    #[test]
    fn user_opened_conversation_never_scores_above_three() {
        struct Always5;
        impl Judge for Always5 {
            fn kind(&self) -> JudgeKind {
                JudgeKind::LlmRubric
            }
            fn score(&self, _: &DialogueHistory, _: &TaskContext) -> Result<ProactivityScore, JudgeError> {
                Ok(ProactivityScore { value: 5, rationale: "x".into() })
            }
        }
        let c = convo(&[(U, "Hi"), (A, "Hello")]);
        assert_eq!(judge_conversation(&Always5, &c, &TaskContext::default()).unwrap().value, 3);
    }

    #[test]
    fn empty_conversation_errors() {
        let c = convo(&[(U, "Hello?")]);
        assert!(matches!(
            judge_conversation(&KeywordJudge, &c, &TaskContext::default()),
            Err(JudgeError::EmptyConversation)
        ));
    }

    #[test]
    fn command_detection() {
        for cmd in [
            "Adjust the brightness of the head-up display.",
            "I want to listen to a piece of pop music.",
            "Could you help me turn on the fog lights?",
            "Hi, open the sunroof.",
            "Can you enable the parking assist system?",
        ] {
            assert!(is_explicit_command(cmd), "{cmd}");
        }
        for state in ["I'm feeling hot.", "I want to have a rest.", "The seat is a bit loose."] {
            assert!(!is_explicit_command(state), "{state}");
        }
    }

    #[test]
    fn judge_reply_parsing() {
        let s = parse_judge_reply("Score: 4\nThe assistant asked first.").unwrap();
        assert_eq!(s.value, 4);
        assert_eq!(s.rationale, "The assistant asked first.");
        assert!(parse_judge_reply("no idea").is_err());
    }

    #[test]
    fn keyword_judge_is_pure() {
        let c = convo(&[(U, "I'm feeling hot."), (A, "Shall I cool the cabin?")]);
        let a = keyword_rubric(&c, &TaskContext::default()).unwrap();
        let b = keyword_rubric(&c, &TaskContext::default()).unwrap();
        assert_eq!(a, b);
    }
}
