//! Few-shot question rewriting with similarity-selected examples.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, IndexError, VectorStore};
use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError};

/// First line of the rewrite system prompt; also used by scripts to route requests.
pub const REWRITE_MARKER: &str = "You turn a driver's casual remark into an explicit in-vehicle task request.";

#[derive(Debug, thiserror::Error)]
pub enum RewriteError {
    #[error("rewrite example bank is empty")]
    EmptyBank,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid rewrite pair {id:?}: {message}")]
    InvalidPair { id: String, message: String },
    #[error("malformed rewrite bank: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewritePair {
    pub id: String,
    pub question: String,
    /// Acceptable explicit forms; the prompt shows the first.
    pub rewrites: Vec<String>,
}

impl RewritePair {
    fn validate(&self) -> Result<(), RewriteError> {
        let bad = |message: &str| RewriteError::InvalidPair {
            id: self.id.clone(),
            message: message.into(),
        };
        if self.question.trim().is_empty() {
            return Err(bad("question is empty"));
        }
        if self.rewrites.is_empty() || self.rewrites.iter().any(|r| r.trim().is_empty()) {
            return Err(bad("rewrites must be a non-empty list of non-empty strings"));
        }
        Ok(())
    }
}

pub fn parse_bank(text: &str) -> Result<Vec<RewritePair>, RewriteError> {
    let pairs: Vec<RewritePair> = serde_json::from_str(text)?;
    for p in &pairs {
        p.validate()?;
    }
    Ok(pairs)
}

pub fn load_bank(path: &Path) -> Result<Vec<RewritePair>, RewriteError> {
    let text = std::fs::read_to_string(path).map_err(|e| RewriteError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_bank(&text)
}

/// Example pairs with their questions pre-embedded.
pub struct RewriteBank {
    pairs: Vec<RewritePair>,
    index: VectorStore,
}

impl RewriteBank {
    pub fn new(pairs: Vec<RewritePair>, embedder: &dyn Embedder) -> Result<Self, RewriteError> {
        let mut index = VectorStore::new(embedder.dim());
        for pair in &pairs {
            pair.validate()?;
            index.add_entry(pair.id.clone(), pair.question.clone(), BTreeMap::new(), embedder)?;
        }
        Ok(Self { pairs, index })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[RewritePair] {
        &self.pairs
    }

    pub fn get(&self, id: &str) -> Option<&RewritePair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    /// The `min(k, len)` pairs whose questions are most similar to `question`.
    pub fn select_examples(
        &self,
        question: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<&RewritePair>, RewriteError> {
        if k == 0 {
            return Err(RewriteError::ZeroK);
        }
        if self.pairs.is_empty() {
            return Err(RewriteError::EmptyBank);
        }
        let query = embedder.embed(question)?;
        let hits = self.index.top_k(&query, k)?;
        Ok(hits
            .iter()
            .filter_map(|h| self.pairs.iter().find(|p| p.id == h.id))
            .collect())
    }
}

/// Builds the few-shot request. Examples whose question is identical to the
/// target are skipped so the target text appears exactly once.
pub fn build_rewrite_prompt(
    question: &str,
    examples: &[&RewritePair],
    temperature: f64,
) -> (ChatRequest, Vec<String>) {
    let question = question.trim();
    let mut system = String::from(REWRITE_MARKER);
    system.push_str(
        "\nState what the driver wants the car to do or tell them, as one short sentence. \
         Keep requests that are already explicit unchanged. Answer with the rewritten request only.",
    );
    let mut used = Vec::new();
    for ex in examples {
        if ex.question.trim() == question {
            continue;
        }
        system.push_str(&format!(
            "\n\nInput: {}\nOutput: {}",
            crate::dialogue::single_line(&ex.question),
            crate::dialogue::single_line(&ex.rewrites[0])
        ));
        used.push(ex.id.clone());
    }
    let request = ChatRequest::new(vec![
        ChatMessage::system(system),
        ChatMessage::user(format!("Input: {}\nOutput:", crate::dialogue::single_line(question))),
    ])
    .with_temperature(temperature);
    (request, used)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub original: String,
    pub rewritten: String,
    pub examples_used: Vec<String>,
    pub prompt_text: String,
}

/// First non-empty line of a completion, minus any echoed `Output:` label and quotes.
pub fn clean_completion(content: &str) -> Option<String> {
    let line = content.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .strip_prefix("Output:")
        .map(str::trim)
        .unwrap_or(line);
    let line = line.trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}').trim();
    (!line.is_empty()).then(|| line.to_string())
}

pub struct Rewriter {
    backend: Arc<dyn ChatBackend>,
    embedder: Arc<dyn Embedder>,
    bank: Arc<RewriteBank>,
    shot_count: usize,
    temperature: f64,
}

impl Rewriter {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
        bank: Arc<RewriteBank>,
        shot_count: usize,
        temperature: f64,
    ) -> Self {
        Self {
            backend,
            embedder,
            bank,
            shot_count,
            temperature,
        }
    }

    pub fn rewrite(&self, question: &str) -> Result<RewriteResult, RewriteError> {
        let original = question.trim();
        if original.is_empty() {
            return Err(RewriteError::EmptyQuestion);
        }
        let examples = if self.shot_count == 0 || self.bank.is_empty() {
            Vec::new()
        } else {
            self.bank
                .select_examples(original, self.shot_count, self.embedder.as_ref())?
        };
        let (request, examples_used) = build_rewrite_prompt(original, &examples, self.temperature);
        let prompt_text = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        let response = self.backend.complete(&request)?;
        let rewritten =
            clean_completion(&response.content).unwrap_or_else(|| original.to_string());
        Ok(RewriteResult {
            original: original.to_string(),
            rewritten,
            examples_used,
            prompt_text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::llm::{Reply, Rule, ScriptedBackend};

    fn pair(id: &str, q: &str, r: &[&str]) -> RewritePair {
        RewritePair {
            id: id.into(),
            question: q.into(),
            rewrites: r.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn bank() -> RewriteBank {
        RewriteBank::new(
            vec![
                pair("hot", "It's so hot", &["Please open the car window", "Please turn on the air conditioning"]),
                pair("smell", "The smell in the car is a bit pungent", &["Activate the car's fresh air circulation mode."]),
                pair("music", "I'm bored of this silence", &["Play some music"]),
                pair("dark", "It's getting dark in here", &["Turn on the interior lights"]),
            ],
            &HashingEmbedder::default(),
        )
        .unwrap()
    }

    #[test]
    fn verbatim_question_ranks_first() {
        let e = HashingEmbedder::default();
        let b = bank();
        let got = b.select_examples("I'm bored of this silence", 2, &e).unwrap();
        assert_eq!(got[0].id, "music");
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn oversized_k_returns_whole_bank() {
        let b = bank();
        let got = b
            .select_examples("hello", 10, &HashingEmbedder::default())
            .unwrap();
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn empty_bank_rejected() {
        let b = RewriteBank::new(vec![], &HashingEmbedder::default()).unwrap();
        assert!(matches!(
            b.select_examples("x", 1, &HashingEmbedder::default()),
            Err(RewriteError::EmptyBank)
        ));
    }

    #[test]
    fn zero_shot_prompt() {
        let (req, used) = build_rewrite_prompt("It's freezing", &[], 0.0);
        assert!(used.is_empty());
        let all: String = req.messages.iter().map(|m| m.content.clone()).collect();
        assert!(all.contains(REWRITE_MARKER));
        assert_eq!(all.matches("Input:").count(), 1);
        assert_eq!(all.matches("It's freezing").count(), 1);
    }

    #[test]
    fn three_shot_prompt_shows_first_rewrite() {
        let b = bank();
        let ex: Vec<_> = b.pairs().iter().take(3).collect();
        let (req, used) = build_rewrite_prompt("Brr, chilly", &ex, 0.0);
        assert_eq!(used.len(), 3);
        assert_eq!(req.system_content().matches("Input:").count(), 3);
        assert!(req
            .system_content()
            .contains("Input: It's so hot\nOutput: Please open the car window"));
        assert!(!req.system_content().contains("Please turn on the air conditioning"));
        assert!(req.last_content().ends_with("Input: Brr, chilly\nOutput:"));
    }

    fn rewriter(backend: ScriptedBackend, shots: usize) -> Rewriter {
        Rewriter::new(
            Arc::new(backend),
            Arc::new(HashingEmbedder::default()),
            Arc::new(bank()),
            shots,
            0.0,
        )
    }

    #[test]
    fn rewrite_uses_completion_first_line() {
        let r = rewriter(
            ScriptedBackend::queue(["Activate the car's fresh air circulation mode.\nBecause the air smells."]),
            3,
        );
        let out = r.rewrite("The smell in the car is a bit pungent").unwrap();
        assert_eq!(out.rewritten, "Activate the car's fresh air circulation mode.");
        assert_eq!(out.original, "The smell in the car is a bit pungent");
    }

    #[test]
    fn explicit_request_is_a_fixed_point_under_echo() {
        let echo = ScriptedBackend::matcher(vec![Rule::new(Reply::EchoAfter("Input: ".into()))]);
        let out = rewriter(echo, 3).rewrite("Please turn on the air conditioner").unwrap();
        assert_eq!(out.rewritten, "Please turn on the air conditioner");
    }

    #[test]
    fn blank_completion_falls_back_to_original() {
        let out = rewriter(ScriptedBackend::queue(["   \n  "]), 3)
            .rewrite("I'm feeling hot")
            .unwrap();
        assert_eq!(out.rewritten, "I'm feeling hot");
    }

    #[test]
    fn zero_shots_with_echo_is_identity() {
        let echo = ScriptedBackend::matcher(vec![Rule::new(Reply::EchoAfter("Input: ".into()))]);
        let r = rewriter(echo, 0);
        for q in ["It's so hot", "Turn on the fog lights", "I feel very hungry."] {
            let out = r.rewrite(q).unwrap();
            assert_eq!(out.rewritten, q);
            assert!(out.examples_used.is_empty());
        }
    }

    #[test]
    fn bank_file_validation() {
        assert!(parse_bank(r#"[{"id":"a","question":"q","rewrites":[]}]"#).is_err());
        assert!(parse_bank(r#"[{"id":"a","question":" ","rewrites":["x"]}]"#).is_err());
        assert_eq!(parse_bank(r#"[{"id":"a","question":"q","rewrites":["x"]}]"#).unwrap().len(), 1);
    }

    #[test]
    fn output_label_is_stripped() {
        assert_eq!(clean_completion("Output: \"Open the window\"").as_deref(), Some("Open the window"));
        assert_eq!(clean_completion("\n\n"), None);
    }
}
