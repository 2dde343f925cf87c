use std::path::Path;

use panel_hd::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Envelope written around every JSON artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    /// Fingerprint of the (transformed) panel the artifact was computed on.
    pub data_hash: String,
    pub payload: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(kind: &str, config_hash: &str, data_hash: &str, payload: T) -> Self {
        Self {
            kind: kind.into(),
            version: panel_hd::VERSION.into(),
            config_hash: config_hash.into(),
            data_hash: data_hash.into(),
            payload,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Reads an artifact and checks its kind and data fingerprint.
pub fn read<T: DeserializeOwned>(path: &Path, kind: &str, data_hash: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let art: Artifact<T> = serde_json::from_str(&text)?;
    if art.kind != kind {
        return Err(Error::ArtifactMismatch(format!(
            "{} holds a `{}` artifact, expected `{kind}`",
            path.display(),
            art.kind
        )));
    }
    if art.data_hash != data_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} was computed on different data (hash {}, current {data_hash})",
            path.display(),
            art.data_hash
        )));
    }
    Ok(art.payload)
}
