use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Record of one stage run. Inputs and outputs are keyed by logical name and
/// identified by content hash, so the manifest does not depend on where the
/// files live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub run_id: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub partial: bool,
    pub stats: BTreeMap<String, Value>,
}

impl Manifest {
    /// The run id hashes the command, the resolved config and the input hashes.
    pub fn new(command: &str, config: Value, seed: u64, inputs: BTreeMap<String, String>) -> Self {
        let config_text = config.to_string();
        let config_sha256 = sha256_hex(config_text.as_bytes());
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\0");
        h.update(config_text.as_bytes());
        for (k, v) in &inputs {
            h.update([0]);
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
        }
        Manifest {
            command: command.to_string(),
            run_id: hex::encode(h.finalize()),
            config_sha256,
            seed,
            config,
            inputs,
            outputs: BTreeMap::new(),
            partial: false,
            stats: BTreeMap::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.command)
    }

    /// Hashes an output file already written to `dir`.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<(), CliError> {
        self.outputs
            .insert(name.to_string(), sha256_file(&dir.join(name))?);
        Ok(())
    }

    pub fn stat(&mut self, key: &str, v: impl Into<Value>) {
        self.stats.insert(key.to_string(), v.into());
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        s.push('\n');
        std::fs::write(dir.join(self.file_name()), s)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn run_id_tracks_inputs() {
        let a = Manifest::new(
            "rank",
            json!({"seed": 1}),
            1,
            BTreeMap::from([("x".into(), "00".into())]),
        );
        let b = Manifest::new(
            "rank",
            json!({"seed": 1}),
            1,
            BTreeMap::from([("x".into(), "00".into())]),
        );
        let c = Manifest::new(
            "rank",
            json!({"seed": 1}),
            1,
            BTreeMap::from([("x".into(), "01".into())]),
        );
        let d = Manifest::new(
            "extract",
            json!({"seed": 1}),
            1,
            BTreeMap::from([("x".into(), "00".into())]),
        );
        assert_eq!(a.run_id, b.run_id);
        assert_ne!(a.run_id, c.run_id);
        assert_ne!(a.run_id, d.run_id);
        assert_eq!(a.file_name(), "rank.manifest.json");
    }
}
