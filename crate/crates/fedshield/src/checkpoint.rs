//! Controller checkpoints as JSON.
//!
//! The document is `{"format": "fedshield-agent", "version": 1, "agent": ...}`
//! where `agent` holds the controller kind, its exploration step counter and
//! its parameters (for the DQN: online and target networks as flat parameter
//! arrays in layer order W then b, optimizer moments and the replay buffer).

use std::path::{Path, PathBuf};

use fedshield_core::agents::Agent;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "fedshield-agent";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected format `{FORMAT}` version {VERSION}, found `{format}` version {version}")]
    Format { path: PathBuf, format: String, version: u32 },
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    agent: Agent,
}

pub fn save_agent(path: &Path, agent: &Agent) -> Result<(), CheckpointError> {
    let doc = Document {
        format: FORMAT.into(),
        version: VERSION,
        agent: agent.clone(),
    };
    let text = serde_json::to_string(&doc).map_err(|source| CheckpointError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_agent(path: &Path) -> Result<Agent, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: Document = serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(CheckpointError::Format {
            path: path.to_path_buf(),
            format: doc.format,
            version: doc.version,
        });
    }
    Ok(doc.agent)
}
