//! Batch evaluation: simulated dialogues, judging, majority aggregation and
//! the success and attainment rates per strategy level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::level::ProactivityLevel;
use crate::llm::ChatBackend;
use crate::proactivity::{judge_conversation, Judge, JudgeKind, ProactivityScore};
use crate::react::Engine;
use crate::simulator::{run_dialogue, DialogueOutcome, SimulatedUserGoal, Termination};

/// Scores 0 through 5.
pub const SCORES: [u8; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no retained labels to compute a rate over")]
    NoRetainedLabels,
    #[error("no goals to evaluate")]
    NoGoals,
    #[error("invalid evaluation setup: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTriple {
    pub dialogue_id: String,
    pub scores: [ProactivityScore; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub dialogue_id: String,
    /// `None` when all three annotators disagree and the dialogue is dropped.
    pub label: Option<u8>,
}

impl AggregatedLabel {
    pub fn retained(dialogue_id: impl Into<String>, label: u8) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            label: Some(label),
        }
    }
}

/// The value shared by at least two of the three scores.
pub fn majority(scores: [u8; 3]) -> Option<u8> {
    let [a, b, c] = scores;
    if a == b || a == c {
        Some(a)
    } else if b == c {
        Some(b)
    } else {
        None
    }
}

pub fn aggregate(triple: &AnnotationTriple) -> AggregatedLabel {
    let [a, b, c] = &triple.scores;
    AggregatedLabel {
        dialogue_id: triple.dialogue_id.clone(),
        label: majority([a.value, b.value, c.value]),
    }
}

fn retained(labels: &[AggregatedLabel]) -> impl Iterator<Item = u8> + '_ {
    labels.iter().filter_map(|l| l.label)
}

/// Percentage of retained labels equal to `n`; dropped dialogues count in
/// neither numerator nor denominator.
pub fn attainment_rate(labels: &[AggregatedLabel], n: u8) -> Result<f64, EvalError> {
    let total = retained(labels).count();
    if total == 0 {
        return Err(EvalError::NoRetainedLabels);
    }
    let hits = retained(labels).filter(|&l| l == n).count();
    Ok(100.0 * hits as f64 / total as f64)
}

/// Percentage of retained labels with a completed task (score at least 1).
pub fn success_rate(labels: &[AggregatedLabel]) -> Result<f64, EvalError> {
    Ok(100.0 - attainment_rate(labels, 0)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// Retained dialogues only.
    pub n_dialogues: usize,
    pub discarded: usize,
    pub success_rate_pct: f64,
    pub attainment_distribution: BTreeMap<u8, f64>,
}

impl LevelReport {
    pub fn from_labels(labels: &[AggregatedLabel]) -> Result<Self, EvalError> {
        let attainment_distribution = SCORES
            .iter()
            .map(|&n| attainment_rate(labels, n).map(|r| (n, r)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            n_dialogues: retained(labels).count(),
            discarded: labels.len() - retained(labels).count(),
            success_rate_pct: success_rate(labels)?,
            attainment_distribution,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueScore {
    pub goal_id: String,
    pub level: ProactivityLevel,
    pub terminated: Termination,
    pub turn_count: usize,
    pub scores: Vec<u8>,
    pub label: Option<u8>,
}

/// Deliberately free of timestamps and host details so that identical
/// inputs produce identical report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub backend: String,
    pub judge_count: usize,
    pub goal_count: usize,
    pub failed_dialogues: usize,
    pub judge_errors: usize,
    pub config: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Strategy levels with at least one retained dialogue.
    pub per_level: BTreeMap<ProactivityLevel, LevelReport>,
    pub overall_success_rate_pct: Option<f64>,
    pub discarded_count: usize,
    pub judge_kind: JudgeKind,
    pub run_metadata: RunMetadata,
    pub dialogues: Vec<DialogueScore>,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the per-level tables from scored dialogues.
    pub fn assemble(
        dialogues: Vec<DialogueScore>,
        judge_kind: JudgeKind,
        run_metadata: RunMetadata,
    ) -> Self {
        let mut by_level: BTreeMap<ProactivityLevel, Vec<AggregatedLabel>> = BTreeMap::new();
        for d in &dialogues {
            by_level.entry(d.level).or_default().push(AggregatedLabel {
                dialogue_id: d.goal_id.clone(),
                label: d.label,
            });
        }
        let per_level = by_level
            .iter()
            .filter_map(|(level, labels)| LevelReport::from_labels(labels).ok().map(|r| (*level, r)))
            .collect();
        let all: Vec<AggregatedLabel> = by_level.into_values().flatten().collect();
        Self {
            per_level,
            overall_success_rate_pct: success_rate(&all).ok(),
            discarded_count: all.iter().filter(|l| l.label.is_none()).count(),
            judge_kind,
            run_metadata,
            dialogues,
        }
    }
}

pub struct EvalConfig<'a> {
    pub goals: &'a [SimulatedUserGoal],
    pub engine: &'a Engine,
    pub simulator: Arc<dyn ChatBackend>,
    /// One judge, or three whose scores are majority-aggregated.
    pub judges: Vec<Arc<dyn Judge>>,
    pub workers: usize,
}

pub struct EvalRun {
    pub report: EvalReport,
    /// In goal order.
    pub outcomes: Vec<DialogueOutcome>,
}

fn score_outcome(outcome: &DialogueOutcome, goal: &SimulatedUserGoal, judges: &[Arc<dyn Judge>]) -> (Vec<u8>, usize) {
    if outcome.terminated == Termination::Error {
        return (vec![0; judges.len()], 0);
    }
    let task = goal.task();
    let mut errors = 0;
    let scores = judges
        .iter()
        .map(|j| match judge_conversation(j.as_ref(), &outcome.conversation, &task) {
            Ok(s) => s.value,
            Err(e) => {
                tracing::warn!(goal = %goal.id, error = %e, "judge failed; scoring 0");
                errors += 1;
                0
            }
        })
        .collect();
    (scores, errors)
}

/// A finished dialogue with its judge scores and judge error count.
type Scored = (DialogueOutcome, Vec<u8>, usize);

/// Runs every goal on a bounded worker pool and scores the results. Output
/// order follows goal order regardless of completion order.
pub fn run_evaluation(config: EvalConfig<'_>) -> Result<EvalRun, EvalError> {
    if config.goals.is_empty() {
        return Err(EvalError::NoGoals);
    }
    if !matches!(config.judges.len(), 1 | 3) {
        return Err(EvalError::Config(format!(
            "need 1 or 3 judges, got {}",
            config.judges.len()
        )));
    }
    if config.workers == 0 {
        return Err(EvalError::Config("workers must be at least 1".into()));
    }
    let judge_kind = config.judges[0].kind();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Scored>>> = Mutex::new(vec![None; config.goals.len()]);
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(config.goals.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(goal) = config.goals.get(i) else { break };
                let outcome = run_dialogue(config.engine, config.simulator.as_ref(), goal);
                let (scores, errors) = score_outcome(&outcome, goal, &config.judges);
                slots.lock().expect("no worker panics while holding the lock")[i] =
                    Some((outcome, scores, errors));
            });
        }
    });
    let mut outcomes = Vec::with_capacity(config.goals.len());
    let mut dialogues = Vec::with_capacity(config.goals.len());
    let mut judge_errors = 0;
    for slot in slots.into_inner().expect("workers finished") {
        let (outcome, scores, errors) = slot.expect("every goal was claimed by a worker");
        judge_errors += errors;
        let label = match scores.as_slice() {
            [only] => Some(*only),
            [a, b, c] => majority([*a, *b, *c]),
            _ => unreachable!("judge count checked above"),
        };
        dialogues.push(DialogueScore {
            goal_id: outcome.goal_id.clone(),
            level: outcome.level,
            terminated: outcome.terminated,
            turn_count: outcome.turn_count,
            scores,
            label,
        });
        outcomes.push(outcome);
    }
    let metadata = RunMetadata {
        backend: config.engine.backend_name().to_string(),
        judge_count: config.judges.len(),
        goal_count: config.goals.len(),
        failed_dialogues: outcomes
            .iter()
            .filter(|o| o.terminated == Termination::Error)
            .count(),
        judge_errors,
        config: config.engine.config().clone(),
    };
    Ok(EvalRun {
        report: EvalReport::assemble(dialogues, judge_kind, metadata),
        outcomes,
    })
}

/// Text table: one row per strategy level, one column per achieved score,
/// plus the success rate. The level's own score is bracketed.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Proactivity attainment (%) by strategy level, judge: {:?}", report.judge_kind);
    let _ = write!(out, "{:<6}", "Level");
    for n in SCORES {
        let _ = write!(out, "{:>9}", n);
    }
    let _ = writeln!(out, "{:>10}{:>6}", "Success", "N");
    for level in ProactivityLevel::ALL {
        let _ = write!(out, "{:<6}", format!("L{level}"));
        match report.per_level.get(&level) {
            Some(row) => {
                for n in SCORES {
                    let rate = row.attainment_distribution.get(&n).copied().unwrap_or(0.0);
                    let cell = if n == level.value() {
                        format!("[{rate:.1}]")
                    } else {
                        format!("{rate:.1}")
                    };
                    let _ = write!(out, "{cell:>9}");
                }
                let _ = writeln!(out, "{:>10.1}{:>6}", row.success_rate_pct, row.n_dialogues);
            }
            None => {
                for _ in SCORES {
                    let _ = write!(out, "{:>9}", "-");
                }
                let _ = writeln!(out, "{:>10}{:>6}", "-", 0);
            }
        }
    }
    let overall = report
        .overall_success_rate_pct
        .map_or_else(|| "-".to_string(), |r| format!("{r:.1}"));
    let _ = writeln!(
        out,
        "Overall success: {overall}%  discarded: {}  failed dialogues: {}",
        report.discarded_count, report.run_metadata.failed_dialogues
    );
    out
}
