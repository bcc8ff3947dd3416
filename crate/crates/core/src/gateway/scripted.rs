//! Table-driven replay backend, cassette files and a recording wrapper.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GatewayError, GenerationRequest, TextGenBackend};

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One recorded prompt/response pair, keyed by the prompt's SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub prompt_sha256: String,
    pub response: String,
}

fn fixture_err(path: &Path, msg: impl Into<String>) -> GatewayError {
    GatewayError::Fixture {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn read_cassette(path: &Path) -> Result<Vec<CassetteEntry>, GatewayError> {
    let f = fs::File::open(path).map_err(|e| fixture_err(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| fixture_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: CassetteEntry = serde_json::from_str(&line)
            .map_err(|e| fixture_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Writes entries sorted by hash, one JSON object per line.
pub fn write_cassette(path: &Path, entries: &BTreeMap<String, String>) -> Result<(), GatewayError> {
    let mut buf = Vec::new();
    for (k, v) in entries {
        let e = CassetteEntry {
            prompt_sha256: k.clone(),
            response: v.clone(),
        };
        serde_json::to_writer(&mut buf, &e).expect("cassette entry serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| fixture_err(path, e.to_string()))?;
    f.write_all(&buf)
        .map_err(|e| fixture_err(path, e.to_string()))
}

/// Returns the recorded response for an exact prompt, or `NoRecording`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    table: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, P, R>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, R)>,
        P: AsRef<str>,
        R: Into<String>,
    {
        let mut s = Self::new();
        for (p, r) in pairs {
            s.insert(p.as_ref(), r);
        }
        s
    }

    pub fn from_cassette(path: &Path) -> Result<Self, GatewayError> {
        let table = read_cassette(path)?
            .into_iter()
            .map(|e| (e.prompt_sha256, e.response))
            .collect();
        Ok(ScriptedBackend { table })
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.table.insert(prompt_sha256(prompt), response.into());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl TextGenBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let sha = prompt_sha256(&req.prompt);
        self.table
            .get(&sha)
            .cloned()
            .ok_or(GatewayError::NoRecording { sha256: sha })
    }
}

/// Backend defined by a closure; `None` means no response is known.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnBackend { id: id.into(), f }
    }
}

impl<F> TextGenBackend for FnBackend<F>
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        (self.f)(&req.prompt).ok_or_else(|| GatewayError::NoRecording {
            sha256: prompt_sha256(&req.prompt),
        })
    }
}

/// Passes calls through to an inner backend and keeps every successful
/// response so the session can be saved as a cassette.
pub struct RecordingBackend {
    inner: Arc<dyn TextGenBackend>,
    log: Mutex<BTreeMap<String, String>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn TextGenBackend>) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        write_cassette(path, &self.log.lock().expect("log lock"))
    }

    /// Like [`save`](Self::save), but keeps entries already in the file.
    /// Responses from this session win on conflict.
    pub fn save_merged(&self, path: &Path) -> Result<(), GatewayError> {
        let mut all: BTreeMap<String, String> = if path.exists() {
            read_cassette(path)?
                .into_iter()
                .map(|e| (e.prompt_sha256, e.response))
                .collect()
        } else {
            BTreeMap::new()
        };
        all.extend(
            self.log
                .lock()
                .expect("log lock")
                .iter()
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        write_cassette(path, &all)
    }
}

impl TextGenBackend for RecordingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let out = self.inner.generate(req)?;
        self.log
            .lock()
            .expect("log lock")
            .insert(prompt_sha256(&req.prompt), out.clone());
        Ok(out)
    }
}
