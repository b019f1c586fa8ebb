//! Bundle, corpus and template files.
//!
//! A corpus is JSON Lines, one record per line:
//!
//! ```text
//! {"text": "you will regret this", "labels": {"violence": 1}}
//! ```
//!
//! `labels` maps head names to 0 or 1; other fields are ignored and blank
//! lines are skipped. A template is TOML:
//!
//! ```toml
//! filler = ["the bus was late", "we had soup"]
//! [labels]
//! violence = ["i will hurt you", "break your legs"]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use llmguard_core::{LabeledExample, ModelBundle, TemplateSpec};
use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub fn load_bundle(path: &Path) -> Result<ModelBundle, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    ModelBundle::decode(&bytes).map_err(|source| DataError::Bundle { path: path.to_path_buf(), source })
}

pub fn save_bundle(path: &Path, bundle: &ModelBundle) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    fs::write(path, bundle.encode()).map_err(|e| DataError::io(path, e))
}

#[derive(Deserialize)]
struct Record {
    text: Option<String>,
    labels: Option<BTreeMap<String, i64>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    text: &'a str,
    labels: &'a BTreeMap<String, u8>,
}

/// Reads a JSON Lines corpus in file order.
pub fn load_corpus(path: &Path) -> Result<Vec<LabeledExample>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<LabeledExample>, DataError> {
    let mut corpus = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DataError::Line { path: path.to_path_buf(), line: i + 1, message };
        let record: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let text = record.text.ok_or_else(|| err("missing `text`".into()))?;
        let raw = record.labels.ok_or_else(|| err("missing `labels`".into()))?;
        let mut labels = BTreeMap::new();
        for (name, value) in raw {
            match u8::try_from(value) {
                Ok(v @ (0 | 1)) => labels.insert(name, v),
                _ => return Err(err(format!("label `{name}` has value {value}; labels must be 0 or 1"))),
            };
        }
        corpus.push(LabeledExample::new(text, labels).map_err(|e| err(e.to_string()))?);
    }
    Ok(corpus)
}

pub fn write_corpus(path: &Path, corpus: &[LabeledExample]) -> Result<(), DataError> {
    let mut out = Vec::new();
    for ex in corpus {
        serde_json::to_writer(&mut out, &RecordOut { text: &ex.text, labels: &ex.labels })
            .expect("serializing to memory cannot fail");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    file.write_all(&out).map_err(|e| DataError::io(path, e))
}

pub fn load_template(path: &Path) -> Result<TemplateSpec, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| DataError::Parse { path: path.to_path_buf(), message: e.to_string().trim_end().to_string() })
}
