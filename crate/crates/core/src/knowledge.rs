//! Scenario knowledge bases: one JSON document per scenario, rows of
//! field/value facts in the style of the In-Car dialogue dataset.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, IndexError, VectorStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFamily {
    InVehicleFunctions,
    EnvironmentalInformation,
    UserProfile,
}

impl ScenarioFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioFamily::InVehicleFunctions => "in_vehicle_functions",
            ScenarioFamily::EnvironmentalInformation => "environmental_information",
            ScenarioFamily::UserProfile => "user_profile",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("{source_name}: parse error at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{source_name}: row {row} has undeclared column {column:?}")]
    SchemaViolation {
        source_name: String,
        row: usize,
        column: String,
    },
    #[error("{source_name}: {message}")]
    Invalid { source_name: String, message: String },
    #[error("{source_name}: knowledge base has no rows")]
    EmptyKnowledgeBase { source_name: String },
    #[error("row {row_index} out of range ({rows} rows)")]
    IndexOutOfRange { row_index: usize, rows: usize },
    #[error("scenario {scenario:?} defined twice: {first} and {second}")]
    DuplicateScenario {
        scenario: String,
        first: String,
        second: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub scenario: String,
    pub family: ScenarioFamily,
    pub fields: Vec<String>,
    pub rows: Vec<BTreeMap<String, String>>,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeEntry {
    pub kb_scenario: String,
    pub row_index: usize,
    pub flattened_text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    scenario: String,
    family: ScenarioFamily,
    fields: Vec<String>,
    rows: Vec<BTreeMap<String, serde_json::Value>>,
}

fn scalar_to_string(value: serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        serde_json::Value::Null => Some(String::new()),
        _ => None,
    }
}

impl KnowledgeBase {
    fn source_name(&self) -> String {
        source_label(self.source.as_deref())
    }

    /// Parses and validates one knowledge-base document.
    pub fn from_json_str(text: &str, source: Option<&Path>) -> Result<Self, KbError> {
        let source_name = source_label(source);
        let file: KbFile = serde_json::from_str(text).map_err(|e| KbError::Parse {
            source_name: source_name.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let invalid = |message: &str| KbError::Invalid {
            source_name: source_name.clone(),
            message: message.to_string(),
        };
        if file.scenario.trim().is_empty() {
            return Err(invalid("scenario must be non-empty"));
        }
        if file.fields.is_empty() {
            return Err(invalid("at least one field must be declared"));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &file.fields {
            if f.trim().is_empty() || !seen.insert(f.as_str()) {
                return Err(invalid(&format!("field {f:?} is blank or repeated")));
            }
        }
        if file.rows.is_empty() {
            return Err(KbError::EmptyKnowledgeBase { source_name });
        }
        let mut rows = Vec::with_capacity(file.rows.len());
        for (row_index, raw) in file.rows.into_iter().enumerate() {
            let mut row = BTreeMap::new();
            for (column, value) in raw {
                if !file.fields.contains(&column) {
                    return Err(KbError::SchemaViolation {
                        source_name,
                        row: row_index,
                        column,
                    });
                }
                let value = scalar_to_string(value).ok_or_else(|| {
                    invalid(&format!("row {row_index} column {column:?} is not a scalar"))
                })?;
                row.insert(column, value);
            }
            if row.values().all(|v| v.trim().is_empty()) {
                return Err(invalid(&format!("row {row_index} has no values")));
            }
            rows.push(row);
        }
        Ok(Self {
            scenario: file.scenario,
            family: file.family,
            fields: file.fields,
            rows,
            source: source.map(Path::to_path_buf),
        })
    }

    pub fn flatten_row(&self, row_index: usize) -> Result<KnowledgeEntry, KbError> {
        let row = self.rows.get(row_index).ok_or(KbError::IndexOutOfRange {
            row_index,
            rows: self.rows.len(),
        })?;
        Ok(KnowledgeEntry {
            kb_scenario: self.scenario.clone(),
            row_index,
            flattened_text: flatten(&self.fields, row),
        })
    }
}

fn source_label(source: Option<&Path>) -> String {
    source
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<inline>".to_string())
}

/// `field: value; field: value` in declared order, skipping empty values.
/// Separators inside values are folded so the text splits back cleanly.
pub fn flatten(fields: &[String], row: &BTreeMap<String, String>) -> String {
    fields
        .iter()
        .filter_map(|f| {
            let value = row.get(f)?.trim();
            (!value.is_empty()).then(|| format!("{f}: {}", value.replace("; ", ", ")))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Splits flattened text back into `(field, value)` pairs.
pub fn parse_flattened(text: &str) -> Vec<(String, String)> {
    if text.is_empty() {
        return Vec::new();
    }
    text.split("; ")
        .filter_map(|part| {
            part.split_once(": ")
                .map(|(f, v)| (f.to_string(), v.to_string()))
        })
        .collect()
}

pub fn load_knowledge_base(path: &Path) -> Result<KnowledgeBase, KbError> {
    let text = std::fs::read_to_string(path).map_err(|e| KbError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    KnowledgeBase::from_json_str(&text, Some(path))
}

/// Loads every `*.json` file in `dir`, sorted by file name.
pub fn load_directory(dir: &Path) -> Result<Vec<KnowledgeBase>, KbError> {
    let io_err = |e: std::io::Error| KbError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_knowledge_base(p)).collect()
}

pub const META_SCENARIO: &str = "scenario";
pub const META_FAMILY: &str = "family";

/// One store entry per row, id `"{scenario}#{row_index}"`.
pub fn index_knowledge(
    kbs: &[KnowledgeBase],
    embedder: &dyn Embedder,
) -> Result<VectorStore, KbError> {
    let mut origins: HashMap<&str, String> = HashMap::new();
    for kb in kbs {
        if let Some(first) = origins.insert(&kb.scenario, kb.source_name()) {
            return Err(KbError::DuplicateScenario {
                scenario: kb.scenario.clone(),
                first,
                second: kb.source_name(),
            });
        }
    }
    let mut store = VectorStore::new(embedder.dim());
    for kb in kbs {
        for row_index in 0..kb.rows.len() {
            let entry = kb.flatten_row(row_index)?;
            let mut meta = BTreeMap::new();
            meta.insert(META_SCENARIO.to_string(), kb.scenario.clone());
            meta.insert(META_FAMILY.to_string(), kb.family.as_str().to_string());
            store.add_entry(
                entry_id(&kb.scenario, row_index),
                entry.flattened_text,
                meta,
                embedder,
            )?;
        }
    }
    Ok(store)
}

pub fn entry_id(scenario: &str, row_index: usize) -> String {
    format!("{scenario}#{row_index}")
}

/// Splits an entry id at its last `#`.
pub fn decode_entry_id(id: &str) -> Option<(&str, usize)> {
    let (scenario, row) = id.rsplit_once('#')?;
    Some((scenario, row.parse().ok()?))
}
