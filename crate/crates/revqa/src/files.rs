//! Reading and writing the on-disk formats.

use std::fs;
use std::path::{Path, PathBuf};

use revqa_core::agents::{Backend, ScriptTable, ScriptedBackend};
use revqa_core::engine::{BackendConfig, EngineConfig, Scenario};
use revqa_core::evalkit::{parse_dataset, DatasetFormat, QAExample};
use revqa_core::journal::{parse_ndjson, to_ndjson, JournalEntry};
use revqa_core::kstore::PredicateRegistry;
use revqa_core::retrieval::Document;
use serde::Deserialize;
use thiserror::Error;

use crate::http::{HttpBackend, HttpError};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error("{}: line {line}: {reason}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Http(#[from] HttpError),
}

fn parse_err(path: &Path, reason: impl ToString) -> FileError {
    FileError::Parse {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads and validates a config. A relative `backend.script` is resolved
/// against the config file's directory.
pub fn load_config(path: &Path) -> Result<EngineConfig, FileError> {
    let mut cfg = EngineConfig::from_json(&read_text(path)?).map_err(|e| parse_err(path, e))?;
    if let BackendConfig::Scripted { script: Some(s) } = &mut cfg.backend {
        let p = Path::new(s.as_str());
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *s = dir.join(p).to_string_lossy().into_owned();
            }
        }
    }
    Ok(cfg)
}

pub fn load_registry(path: &Path) -> Result<PredicateRegistry, FileError> {
    PredicateRegistry::from_json(&read_text(path)?).map_err(|e| parse_err(path, e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, FileError> {
    Scenario::from_json(&read_text(path)?).map_err(|e| parse_err(path, e))
}

pub fn load_script(path: &Path) -> Result<ScriptTable, FileError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))
}

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

/// Newline-delimited `{"id", "title", "text"}` records. Blank lines are
/// skipped; `title` may be omitted.
pub fn parse_corpus(path: &Path, text: &str) -> Result<Vec<Document>, FileError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusLine = serde_json::from_str(line).map_err(|e| FileError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        docs.push(Document::new(rec.id, rec.title, rec.text));
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, FileError> {
    parse_corpus(path, &read_text(path)?)
}

pub fn corpus_to_ndjson(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let line = serde_json::json!({"id": d.id, "title": d.title, "text": d.text});
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<QAExample>, FileError> {
    parse_dataset(&read_text(path)?, format).map_err(|e| parse_err(path, e))
}

pub fn load_journal(path: &Path) -> Result<Vec<JournalEntry>, FileError> {
    parse_ndjson(&read_text(path)?).map_err(|e| parse_err(path, e))
}

pub fn write_journal(path: &Path, entries: &[JournalEntry]) -> Result<(), FileError> {
    write_text(path, &to_ndjson(entries))
}

/// The backend a config asks for. `extra` (a scenario's own script) takes
/// precedence over the config's script file.
pub fn build_backend(
    cfg: &EngineConfig,
    extra: Option<&ScriptTable>,
) -> Result<Box<dyn Backend>, FileError> {
    match &cfg.backend {
        BackendConfig::Scripted { script } => {
            let mut table = extra.cloned().unwrap_or_default();
            if let Some(p) = script {
                table.merge(load_script(Path::new(p))?);
            }
            Ok(Box::new(ScriptedBackend::from_table(&table)))
        }
        BackendConfig::Http {
            base_url,
            model,
            timeout_secs,
        } => Ok(Box::new(HttpBackend::from_env(base_url, model, *timeout_secs)?)),
    }
}
