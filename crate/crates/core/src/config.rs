//! Pipeline configuration: a TOML file plus `LONGDOC_*` environment overrides.
//!
//! An override names a key path with `__` between levels, so
//! `LONGDOC_RETRIEVAL__K=5` sets `retrieval.k` and
//! `LONGDOC_RETRIEVAL__LONG_CONTEXT__STRATEGY=chunked` sets the strategy.
//! Values are read as TOML literals when they parse as one and as plain
//! strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::lexical::{LexicalAttention, LexicalEmbedder};
use crate::backend::scripted::ScriptedFixture;
use crate::backend::{AttentionBackend, EmbeddingBackend, PromptTemplate};
use crate::corpus::SegmentationConfig;
use crate::entity::{CapitalizedSpanRecognizer, Recognizer};
use crate::error::{Error, Result};
use crate::retrieve::{RetrievalSettings, Retriever, ViewMode};

pub const ENV_PREFIX: &str = "LONGDOC_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttentionSpec {
    Lexical {
        #[serde(default = "default_lexical_model")]
        model_id: String,
        #[serde(default = "default_layers")]
        num_layers: usize,
        #[serde(default = "default_heads")]
        num_heads: usize,
        #[serde(default = "default_window")]
        window_limit: usize,
        #[serde(default)]
        template: PromptTemplate,
    },
    Scripted {
        fixture: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Lexical {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Scripted {
        fixture: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RecognizerSpec {
    #[default]
    Capitalized,
}

fn default_lexical_model() -> String {
    "lexical".into()
}
fn default_layers() -> usize {
    16
}
fn default_heads() -> usize {
    8
}
fn default_window() -> usize {
    4096
}
fn default_dim() -> usize {
    256
}
fn default_workers() -> usize {
    1
}

impl Default for AttentionSpec {
    fn default() -> Self {
        AttentionSpec::Lexical {
            model_id: default_lexical_model(),
            num_layers: default_layers(),
            num_heads: default_heads(),
            window_limit: default_window(),
            template: PromptTemplate::default(),
        }
    }
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Lexical { dim: default_dim() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub attention: AttentionSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub recognizer: RecognizerSpec,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub paths: DataPaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            attention: AttentionSpec::default(),
            embedding: EmbeddingSpec::default(),
            recognizer: RecognizerSpec::default(),
            retrieval: RetrievalSettings::default(),
            segmentation: SegmentationConfig::default(),
            paths: DataPaths::default(),
        }
    }
}

fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("override path is non-empty");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!(
                "override {} descends into non-table key {key}",
                path.join(".")
            ))
        })?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}

impl PipelineConfig {
    /// Reads a config file, applies process environment overrides, resolves
    /// relative paths against the file's directory and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base, std::env::vars())
    }

    pub fn from_toml_str(
        text: &str,
        base_dir: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut overrides: Vec<(Vec<String>, String)> = env
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
                (!path.iter().any(String::is_empty)).then_some((path, v))
            })
            .collect();
        overrides.sort();
        for (key_path, raw) in overrides {
            apply_override(&mut table, &key_path, parse_override(&raw))?;
        }
        let mut config: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let AttentionSpec::Scripted { fixture } = &mut self.attention {
            fix(fixture);
        }
        if let EmbeddingSpec::Scripted { fixture } = &mut self.embedding {
            fix(fixture);
        }
        if let Some(p) = &mut self.paths.dataset {
            fix(p);
        }
        if let Some(p) = &mut self.paths.output_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |p: &Path| Error::Config(format!("{} does not exist", p.display()));
        if let AttentionSpec::Scripted { fixture } = &self.attention {
            if !fixture.exists() {
                return Err(missing(fixture));
            }
        }
        if let EmbeddingSpec::Scripted { fixture } = &self.embedding {
            if !fixture.exists() {
                return Err(missing(fixture));
            }
        }
        if let Some(p) = &self.paths.dataset {
            if !p.exists() {
                return Err(missing(p));
            }
        }
        if let AttentionSpec::Lexical {
            num_layers,
            num_heads,
            ..
        } = &self.attention
        {
            if *num_layers == 0 || *num_heads == 0 {
                return Err(Error::Config(
                    "lexical backend needs at least one layer and head".into(),
                ));
            }
        }
        if let EmbeddingSpec::Lexical { dim: 0 } = self.embedding {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        let r = &self.retrieval;
        if r.view != ViewMode::EmbOnly && r.layers.is_empty() {
            return Err(Error::Config(
                "retrieval.layers must be non-empty when the attention view is enabled".into(),
            ));
        }
        if r.k == 0 {
            return Err(Error::Config("retrieval.k must be positive".into()));
        }
        if r.embed_batch_size == 0 {
            return Err(Error::Config(
                "retrieval.embed_batch_size must be positive".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    pub fn attention_backend(&self) -> Result<Box<dyn AttentionBackend>> {
        Ok(match &self.attention {
            AttentionSpec::Lexical {
                model_id,
                num_layers,
                num_heads,
                window_limit,
                template,
            } => Box::new(
                LexicalAttention::builder()
                    .model_id(model_id.clone())
                    .layers(*num_layers)
                    .heads(*num_heads)
                    .window(*window_limit)
                    .template(template.clone())
                    .build(),
            ),
            AttentionSpec::Scripted { fixture } => {
                Box::new(ScriptedFixture::load(fixture)?.attention_backend()?)
            }
        })
    }

    pub fn embedding_backend(&self) -> Result<Box<dyn EmbeddingBackend>> {
        Ok(match &self.embedding {
            EmbeddingSpec::Lexical { dim } => Box::new(LexicalEmbedder::new(*dim)),
            EmbeddingSpec::Scripted { fixture } => {
                Box::new(ScriptedFixture::load(fixture)?.embedding_backend()?)
            }
        })
    }

    pub fn recognizer(&self) -> Box<dyn Recognizer> {
        match self.recognizer {
            RecognizerSpec::Capitalized => Box::new(CapitalizedSpanRecognizer),
        }
    }

    /// Builds a fresh retriever; each worker thread owns one.
    pub fn build_retriever(&self) -> Result<Retriever> {
        let attention = self.attention_backend()?;
        if self.retrieval.view != ViewMode::EmbOnly {
            crate::backend::check_layers(attention.as_ref(), &self.retrieval.layers)?;
        }
        Ok(Retriever {
            attention,
            embedding: self.embedding_backend()?,
            recognizer: self.recognizer(),
            settings: self.retrieval.clone(),
        })
    }
}
