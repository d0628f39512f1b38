//! Loading precomputed embedding sets and first-word token sets.
//!
//! Corpus layout:
//!
//! ```text
//! <root>/<model>/<concept>__<attribute>/<replicate>/emb.json    header
//!                                                  /emb.f32     little-endian f32, row-major
//!                                                  /tokens.jsonl {image_id, token} per line
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ConceptAttribute, DomainError, ModelId, SetRef};
use crate::json::{self, JsonError};

pub const HEADER_FILE: &str = "emb.json";
pub const DATA_FILE: &str = "emb.f32";
pub const TOKENS_FILE: &str = "tokens.jsonl";

/// Prompt used for the unrelated-condition control.
pub const UNRELATED_PROMPT: &str = "Where is the Eiffel Tower?";

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data file has {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has norm {norm} but header claims l2_normalized")]
    NotNormalized { row: usize, norm: f64 },
    #[error("image {0:?} has no token record")]
    MissingImage(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl From<JsonError> for EmbedIoError {
    fn from(e: JsonError) -> Self {
        match e {
            JsonError::Io { path, source } => EmbedIoError::Io { path, source },
            other => EmbedIoError::Schema(other.to_string()),
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> EmbedIoError {
    EmbedIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    #[default]
    None,
    ConceptOnly,
    AttributeOnly,
    ConceptAndAttribute,
    Unrelated,
}

/// How the embeddings were conditioned upstream. Metadata only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct ConditioningSpec {
    pub kind: ConditioningKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered_prompt: Option<String>,
}

impl ConditioningSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn unrelated() -> Self {
        Self {
            kind: ConditioningKind::Unrelated,
            rendered_prompt: Some(UNRELATED_PROMPT.to_string()),
        }
    }

    /// Condition of `kind` with the standard question template filled in for
    /// `pair`.
    pub fn for_pair(kind: ConditioningKind, pair: &ConceptAttribute) -> Self {
        let prompt = match kind {
            ConditioningKind::None => None,
            ConditioningKind::ConceptOnly => Some(format!("What is the {}?", pair.concept)),
            ConditioningKind::AttributeOnly => Some(format!("What is the {}?", pair.attribute)),
            ConditioningKind::ConceptAndAttribute => Some(format!(
                "What is the {} of the {}?",
                pair.attribute, pair.concept
            )),
            ConditioningKind::Unrelated => Some(UNRELATED_PROMPT.to_string()),
        };
        Self {
            kind,
            rendered_prompt: prompt,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedIoError> {
        let has_prompt = self
            .rendered_prompt
            .as_deref()
            .is_some_and(|p| !p.trim().is_empty());
        match (self.kind, has_prompt) {
            (ConditioningKind::None, true) => Err(EmbedIoError::Schema(
                "conditioning kind none must not carry a prompt".into(),
            )),
            (ConditioningKind::None, false) | (_, true) => Ok(()),
            (kind, false) => Err(EmbedIoError::Schema(format!(
                "conditioning kind {kind:?} requires rendered_prompt"
            ))),
        }
    }

    /// Short label for reports, e.g. `attribute_only`.
    pub fn label(&self) -> String {
        serde_json::to_value(self.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

/// Sidecar header for an `emb.f32` data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub rows: usize,
    pub dim: usize,
    pub dtype: String,
    pub layout: String,
    pub l2_normalized: bool,
    pub model: String,
    pub concept: String,
    pub attribute: String,
    pub replicate: u32,
    pub image_ids: Vec<String>,
    pub conditioning: ConditioningSpec,
    pub embedder: String,
}

impl EmbeddingHeader {
    fn validate(&self) -> Result<(), EmbedIoError> {
        if self.dtype != "f32" {
            return Err(EmbedIoError::Schema(format!(
                "unsupported dtype {:?}",
                self.dtype
            )));
        }
        if self.layout != "row-major" {
            return Err(EmbedIoError::Schema(format!(
                "unsupported layout {:?}",
                self.layout
            )));
        }
        if self.dim == 0 {
            return Err(EmbedIoError::Schema("dim must be >= 1".into()));
        }
        if self.rows != self.image_ids.len() {
            return Err(EmbedIoError::Schema(format!(
                "rows = {} but {} image_ids",
                self.rows,
                self.image_ids.len()
            )));
        }
        self.conditioning.validate()
    }

    fn set_ref(&self) -> Result<SetRef, EmbedIoError> {
        let pair = ConceptAttribute::new(&self.concept, &self.attribute)?;
        let set = SetRef {
            model: ModelId::new(self.model.clone())?,
            pair,
            replicate: self.replicate,
            image_ids: self.image_ids.clone(),
        };
        set.validate(&[])?;
        Ok(set)
    }

    fn expected_bytes(&self) -> u64 {
        (self.rows as u64) * (self.dim as u64) * 4
    }
}

/// An `n x d` embedding matrix for one image set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub set_ref: SetRef,
    pub conditioning: ConditioningSpec,
    pub embedder_name: String,
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    pub l2_normalized: bool,
}

impl EmbeddingSet {
    /// Builds a validated set from row-major data.
    pub fn new(
        set_ref: SetRef,
        conditioning: ConditioningSpec,
        embedder_name: impl Into<String>,
        dim: usize,
        data: Vec<f32>,
        l2_normalized: bool,
    ) -> Result<Self, EmbedIoError> {
        let rows = set_ref.len();
        if dim == 0 {
            return Err(EmbedIoError::Schema("dim must be >= 1".into()));
        }
        if data.len() != rows * dim {
            return Err(EmbedIoError::SizeMismatch {
                expected: (rows * dim * 4) as u64,
                actual: (data.len() * 4) as u64,
            });
        }
        conditioning.validate()?;
        let set = Self {
            set_ref,
            conditioning,
            embedder_name: embedder_name.into(),
            rows,
            dim,
            data,
            l2_normalized,
        };
        set.check_values()?;
        Ok(set)
    }

    fn check_values(&self) -> Result<(), EmbedIoError> {
        if let Some(idx) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(EmbedIoError::NonFinite {
                row: idx / self.dim,
                col: idx % self.dim,
            });
        }
        if self.l2_normalized {
            for (i, row) in self.row_iter().enumerate() {
                let norm = row
                    .iter()
                    .map(|&x| (x as f64) * (x as f64))
                    .sum::<f64>()
                    .sqrt();
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(EmbedIoError::NotNormalized { row: i, norm });
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn header(&self) -> EmbeddingHeader {
        EmbeddingHeader {
            rows: self.rows,
            dim: self.dim,
            dtype: "f32".into(),
            layout: "row-major".into(),
            l2_normalized: self.l2_normalized,
            model: self.set_ref.model.0.clone(),
            concept: self.set_ref.pair.concept.clone(),
            attribute: self.set_ref.pair.attribute.clone(),
            replicate: self.set_ref.replicate,
            image_ids: self.set_ref.image_ids.clone(),
            conditioning: self.conditioning.clone(),
            embedder: self.embedder_name.clone(),
        }
    }

    pub fn data_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }
}

pub fn read_header(path: &Path) -> Result<EmbeddingHeader, EmbedIoError> {
    let header: EmbeddingHeader = json::read_json(path)?;
    header.validate()?;
    Ok(header)
}

pub fn load_embedding_set(
    header_path: &Path,
    data_path: &Path,
) -> Result<EmbeddingSet, EmbedIoError> {
    let header = read_header(header_path)?;
    let bytes = fs::read(data_path).map_err(|e| io_err(data_path, e))?;
    if bytes.len() as u64 != header.expected_bytes() {
        return Err(EmbedIoError::SizeMismatch {
            expected: header.expected_bytes(),
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let set_ref = header.set_ref()?;
    EmbeddingSet::new(
        set_ref,
        header.conditioning,
        header.embedder,
        header.dim,
        data,
        header.l2_normalized,
    )
}

/// Writes `emb.json` and `emb.f32` into `dir`, creating it if needed.
pub fn write_embedding_set(set: &EmbeddingSet, dir: &Path) -> Result<(), EmbedIoError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    json::write_json(&dir.join(HEADER_FILE), &set.header())?;
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, set.data_bytes()).map_err(|e| io_err(&data_path, e))
}

/// Directory for a set under the corpus root.
pub fn set_dir(root: &Path, set_ref: &SetRef) -> PathBuf {
    root.join(set_ref.model.as_str())
        .join(set_ref.pair.dir_name())
        .join(set_ref.replicate.to_string())
}

/// One first-word token per image.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub set_ref: SetRef,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRecord {
    pub image_id: String,
    pub token: String,
}

fn read_token_records(path: &Path) -> Result<Vec<TokenRecord>, EmbedIoError> {
    Ok(json::read_jsonl(path)?)
}

/// Loads tokens for `set_ref`, ordered to match its image ids.
pub fn load_token_set(path: &Path, set_ref: &SetRef) -> Result<TokenSet, EmbedIoError> {
    let mut by_id: BTreeMap<String, String> = BTreeMap::new();
    for rec in read_token_records(path)? {
        if by_id.insert(rec.image_id.clone(), rec.token).is_some() {
            return Err(EmbedIoError::Schema(format!(
                "duplicate token record for image {:?}",
                rec.image_id
            )));
        }
    }
    let mut tokens = Vec::with_capacity(set_ref.len());
    for id in &set_ref.image_ids {
        match by_id.remove(id) {
            Some(t) => tokens.push(t),
            None => return Err(EmbedIoError::MissingImage(id.clone())),
        }
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(EmbedIoError::Schema(format!(
            "token record for image {extra:?} which is not in the set"
        )));
    }
    Ok(TokenSet {
        set_ref: set_ref.clone(),
        tokens,
    })
}

pub fn write_token_set(tokens: &TokenSet, dir: &Path) -> Result<(), EmbedIoError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let records: Vec<TokenRecord> = tokens
        .set_ref
        .image_ids
        .iter()
        .zip(&tokens.tokens)
        .map(|(id, t)| TokenRecord {
            image_id: id.clone(),
            token: t.clone(),
        })
        .collect();
    json::write_jsonl(&dir.join(TOKENS_FILE), &records)?;
    Ok(())
}

/// A set discovered by [`scan_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub set_ref: SetRef,
    pub dir: PathBuf,
    pub has_embeddings: bool,
    pub has_tokens: bool,
}

impl CorpusEntry {
    pub fn load_embeddings(&self) -> Result<EmbeddingSet, EmbedIoError> {
        load_embedding_set(&self.dir.join(HEADER_FILE), &self.dir.join(DATA_FILE))
    }

    pub fn load_tokens(&self) -> Result<TokenSet, EmbedIoError> {
        load_token_set(&self.dir.join(TOKENS_FILE), &self.set_ref)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusScan {
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<String>,
}

fn sorted_subdirs(dir: &Path, warnings: &mut Vec<String>) -> Vec<(String, PathBuf)> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) => {
            warnings.push(format!("{}: {e}", dir.display()));
            return Vec::new();
        }
    };
    let mut out: Vec<(String, PathBuf)> = rd
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(|n| (n.to_string(), e.path())))
        .collect();
    out.sort();
    out
}

fn scan_replicate(
    model: &str,
    pair: &ConceptAttribute,
    replicate: u32,
    dir: &Path,
) -> Result<CorpusEntry, String> {
    let header_path = dir.join(HEADER_FILE);
    let data_path = dir.join(DATA_FILE);
    let tokens_path = dir.join(TOKENS_FILE);
    let has_tokens = tokens_path.is_file();

    if header_path.is_file() {
        let header = read_header(&header_path).map_err(|e| e.to_string())?;
        let set_ref = header.set_ref().map_err(|e| e.to_string())?;
        if set_ref.model.as_str() != model
            || &set_ref.pair != pair
            || set_ref.replicate != replicate
        {
            return Err("header metadata disagrees with directory path".into());
        }
        let has_embeddings = match fs::metadata(&data_path) {
            Ok(meta) if meta.len() == header.expected_bytes() => true,
            Ok(meta) => {
                return Err(format!(
                    "{DATA_FILE} has {} bytes, header implies {}",
                    meta.len(),
                    header.expected_bytes()
                ))
            }
            Err(_) => false,
        };
        if !has_embeddings && !has_tokens {
            return Err(format!("no {DATA_FILE} or {TOKENS_FILE}"));
        }
        return Ok(CorpusEntry {
            set_ref,
            dir: dir.to_path_buf(),
            has_embeddings,
            has_tokens,
        });
    }

    if has_tokens {
        let records = read_token_records(&tokens_path).map_err(|e| e.to_string())?;
        let set_ref = SetRef {
            model: ModelId(model.to_string()),
            pair: pair.clone(),
            replicate,
            image_ids: records.into_iter().map(|r| r.image_id).collect(),
        };
        set_ref.validate(&[]).map_err(|e| e.to_string())?;
        return Ok(CorpusEntry {
            set_ref,
            dir: dir.to_path_buf(),
            has_embeddings: false,
            has_tokens: true,
        });
    }
    Err(format!("no {HEADER_FILE} or {TOKENS_FILE}"))
}

/// Enumerates every set under `root`, sorted by (model, pair, replicate).
/// Malformed directories become warnings.
pub fn scan_corpus(root: &Path) -> CorpusScan {
    let mut scan = CorpusScan::default();
    for (model, model_dir) in sorted_subdirs(root, &mut scan.warnings) {
        for (pair_name, pair_dir) in sorted_subdirs(&model_dir, &mut scan.warnings) {
            let pair = match pair_name
                .split_once("__")
                .map(|(c, a)| ConceptAttribute::new(c, a))
            {
                Some(Ok(p)) => p,
                _ => {
                    scan.warnings.push(format!(
                        "{}: expected <concept>__<attribute> directory name",
                        pair_dir.display()
                    ));
                    continue;
                }
            };
            let mut reps: Vec<(u32, PathBuf)> = Vec::new();
            for (rep_name, rep_dir) in sorted_subdirs(&pair_dir, &mut scan.warnings) {
                match rep_name.parse::<u32>() {
                    Ok(r) => reps.push((r, rep_dir)),
                    Err(_) => scan.warnings.push(format!(
                        "{}: replicate directory must be an integer",
                        rep_dir.display()
                    )),
                }
            }
            reps.sort();
            for (rep, rep_dir) in reps {
                match scan_replicate(&model, &pair, rep, &rep_dir) {
                    Ok(entry) => scan.entries.push(entry),
                    Err(msg) => scan.warnings.push(format!("{}: {msg}", rep_dir.display())),
                }
            }
        }
    }
    scan
}
