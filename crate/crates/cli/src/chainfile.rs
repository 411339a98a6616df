//! Persisted chains: a versioned, model-tagged JSON document.

use std::io::Write;
use std::path::Path;

use monogp::bench::{FittedModel, Method};
use monogp::dgp::{DeepChain, DeepModel};
use monogp::monogp::MonoChain;
use serde::{Deserialize, Serialize};

use crate::data::{create, InputCoding};
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Payload {
    Mono(MonoChain),
    Deep(DeepChain),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub format_version: u64,
    pub model: Method,
    pub coding: InputCoding,
    /// Names of the input columns and the response, as read at fit time.
    pub columns: Vec<String>,
    pub chain: Payload,
}

fn payload_model(p: &Payload) -> Method {
    match p {
        Payload::Mono(_) => Method::MonoGp,
        Payload::Deep(c) => match c.model {
            DeepModel::Gp => Method::Gp,
            DeepModel::MwDgp => Method::MwDgp,
            DeepModel::Dgp => Method::Dgp,
        },
    }
}

impl ChainFile {
    pub fn new(model: FittedModel, coding: InputCoding, columns: Vec<String>) -> Self {
        let chain = match model {
            FittedModel::Mono(c) => Payload::Mono(c),
            FittedModel::Deep(c) => Payload::Deep(c),
        };
        ChainFile { format_version: FORMAT_VERSION, model: payload_model(&chain), coding, columns, chain }
    }

    pub fn model(&self) -> FittedModel {
        match &self.chain {
            Payload::Mono(c) => FittedModel::Mono(c.clone()),
            Payload::Deep(c) => FittedModel::Deep(c.clone()),
        }
    }

    pub fn retained(&self) -> usize {
        match &self.chain {
            Payload::Mono(c) => c.draws.len(),
            Payload::Deep(c) => c.draws.len(),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, self).map_err(|e| CliError::ChainFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        w.flush().map_err(|e| CliError::io(path, e))
    }

    /// Loads a chain file, rejecting other format versions and files whose
    /// model tag disagrees with their contents.
    pub fn load(path: &Path) -> CliResult<Self> {
        let bad = |message: String| CliError::ChainFile { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| bad("missing format_version".into()))?;
        if found != FORMAT_VERSION {
            return Err(CliError::VersionMismatch { path: path.to_path_buf(), found, expected: FORMAT_VERSION });
        }
        let file: ChainFile = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        let actual = payload_model(&file.chain);
        if actual != file.model {
            return Err(bad(format!("model tag '{}' does not match a {} chain", file.model, actual)));
        }
        if file.coding.dim() != file.columns.len().saturating_sub(1) {
            return Err(bad("input coding does not match the column list".into()));
        }
        Ok(file)
    }
}
