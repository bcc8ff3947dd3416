//! Run configuration: a TOML file merged under command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::{CliError, CommonArgs};
use crate::corpus::{DomainCategory, Layer};
use crate::extraction::ExtractionMode;
use crate::gateway::{
    EmbedBackend, Gateway, HashBackend, LiveBackend, LiveConfig, PromptSet, RecordingBackend,
    ScriptedBackend, TextGenBackend,
};
use crate::personalization::UtilityMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Scripted,
    Hash,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileBackend {
    pub kind: Option<BackendKind>,
    pub cassette: Option<PathBuf>,
    pub live: Option<LiveConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileStage {
    pub mode: Option<String>,
    pub layers: Option<String>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub domain: Option<String>,
    pub seed: Option<u64>,
    pub max_inflight: Option<usize>,
    pub users_per_query: Option<usize>,
    pub prompts: Option<PathBuf>,
    pub backend: FileBackend,
    pub extraction: FileStage,
    pub utility: FileStage,
}

impl FileConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut c: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.backend.cassette, &mut c.prompts]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

/// Which stage is asking, so `--mode` lands on the right setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Extract,
    ClassifyUtility,
    GenProfiles,
    Rank,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::ClassifyUtility => "classify-utility",
            Stage::GenProfiles => "gen-profiles",
            Stage::Rank => "rank",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Fully resolved settings. The serialized form goes into manifests, so it
/// holds no filesystem paths.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub domain: DomainCategory,
    pub backend: BackendKind,
    pub seed: u64,
    pub extraction_mode: ExtractionMode,
    pub utility_mode: UtilityMode,
    pub layers: Vec<Layer>,
    pub max_inflight: usize,
    pub users_per_query: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub live: Option<LiveConfig>,
    #[serde(skip)]
    pub cassette: Option<PathBuf>,
    #[serde(skip)]
    pub record: Option<PathBuf>,
    #[serde(skip)]
    pub prompts: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, stage: Stage) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let domain_s = args
            .domain
            .clone()
            .or(file.domain)
            .ok_or_else(|| CliError::Config("no domain given (--domain or config)".into()))?;
        let domain: DomainCategory = domain_s
            .parse()
            .map_err(|_| CliError::Config(format!("unknown domain {domain_s:?}")))?;

        let mut ext_mode = file.extraction.mode.clone();
        let mut util_mode = file.utility.mode.clone();
        if let Some(m) = &args.mode {
            match stage {
                Stage::Extract => ext_mode = Some(m.clone()),
                Stage::ClassifyUtility => util_mode = Some(m.clone()),
                _ => {
                    return Err(CliError::Config(format!(
                        "--mode has no effect on {}",
                        stage.name()
                    )))
                }
            }
        }
        let extraction_mode: ExtractionMode = ext_mode
            .as_deref()
            .unwrap_or("dynamic")
            .parse()
            .map_err(|e| CliError::Config(format!("extraction mode: {e}")))?;
        let utility_mode: UtilityMode = util_mode
            .as_deref()
            .unwrap_or("dynamic")
            .parse()
            .map_err(|e| CliError::Config(format!("utility mode: {e}")))?;
        let layers_s = args
            .layers
            .clone()
            .or(file.extraction.layers)
            .unwrap_or_else(|| "primary".into());
        let layers = Layer::parse_set(&layers_s).ok_or_else(|| {
            CliError::Config(format!(
                "layers must be primary or primary+secondary, got {layers_s:?}"
            ))
        })?;

        let backend = args
            .backend
            .or(file.backend.kind)
            .unwrap_or(BackendKind::Hash);
        let cassette = args.cassette.clone().or(file.backend.cassette);
        if backend == BackendKind::Scripted && cassette.is_none() {
            return Err(CliError::Config(
                "the scripted backend needs a cassette (--cassette or backend.cassette)".into(),
            ));
        }
        let max_inflight = args.max_inflight.or(file.max_inflight).unwrap_or(4);
        if max_inflight == 0 {
            return Err(CliError::Config("--max-inflight must be at least 1".into()));
        }
        let users_per_query = file.users_per_query.unwrap_or(10);
        Ok(RunConfig {
            domain,
            backend,
            seed: args.seed.or(file.seed).unwrap_or(0),
            extraction_mode,
            utility_mode,
            layers,
            max_inflight,
            users_per_query,
            live: (backend == BackendKind::Live).then(|| file.backend.live.unwrap_or_default()),
            cassette,
            record: args.record.clone(),
            prompts: args.prompts.clone().or(file.prompts),
        })
    }

    pub fn prompt_set(&self) -> Result<PromptSet, CliError> {
        let root = self.prompts.clone().unwrap_or_else(PromptSet::default_root);
        PromptSet::load(&root, self.domain).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Builds the gateway. Scripted and hash runs embed with the seeded hash
    /// embedder. With `record` set, the text backend is wrapped so its
    /// exchanges can be saved as a cassette afterwards. `text` replaces the
    /// configured text backend when given.
    pub fn gateway(
        &self,
        text: Option<Arc<dyn TextGenBackend>>,
    ) -> Result<(Gateway, Option<Arc<RecordingBackend>>), CliError> {
        let hash = Arc::new(HashBackend::new(self.seed));
        let (configured, embed): (Arc<dyn TextGenBackend>, Arc<dyn EmbedBackend>) =
            match self.backend {
                BackendKind::Hash => (hash.clone(), hash),
                BackendKind::Scripted => {
                    let path = self.cassette.as_ref().expect("checked in resolve");
                    let s = ScriptedBackend::from_cassette(path)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    (Arc::new(s), hash)
                }
                BackendKind::Live => {
                    let live = Arc::new(LiveBackend::new(self.live.clone().unwrap_or_default()));
                    (live.clone(), live)
                }
            };
        let text = text.unwrap_or(configured);
        let (text, recorder) = match &self.record {
            Some(_) => {
                let r = Arc::new(RecordingBackend::new(text));
                (r.clone() as Arc<dyn TextGenBackend>, Some(r))
            }
            None => (text, None),
        };
        let gw = Gateway::new(text, embed, self.max_inflight)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((gw, recorder))
    }
}
