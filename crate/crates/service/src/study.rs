//! Study manifests as submitted by clients and as persisted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use divbench_core::annotations::TemplateVariant;
use divbench_core::{ConceptAttribute, ModelId, RunConfig, SetRef};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    /// Show each (task, rater) assignment with a seeded left/right swap.
    #[serde(default = "yes")]
    pub side_randomization: bool,
    #[serde(default)]
    pub template: TemplateVariant,
    /// Defaults to true exactly for the count template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_counts: Option<bool>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            side_randomization: true,
            template: TemplateVariant::Count,
            require_counts: None,
        }
    }
}

impl StudyConfig {
    pub fn counts_required(&self) -> bool {
        self.require_counts
            .unwrap_or(self.template == TemplateVariant::Count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideManifest {
    pub model: ModelId,
    #[serde(default)]
    pub replicate: u32,
    pub image_urls: Vec<String>,
    /// Stable image identifiers; the URLs are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ids: Option<Vec<String>>,
}

impl SideManifest {
    pub fn set_ref(&self, pair: &ConceptAttribute) -> SetRef {
        SetRef {
            model: self.model.clone(),
            pair: pair.clone(),
            replicate: self.replicate,
            image_ids: self
                .image_ids
                .clone()
                .unwrap_or_else(|| self.image_urls.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub pair: ConceptAttribute,
    pub left: SideManifest,
    pub right: SideManifest,
}

/// Body of `POST /v1/studies`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateStudy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub config: StudyConfig,
    pub tasks: Vec<TaskManifest>,
}

impl CreateStudy {
    /// Hash of the request with the idempotency key removed.
    pub fn body_hash(&self) -> String {
        let mut bare = self.clone();
        bare.idempotency_key = None;
        let bytes = serde_json::to_vec(&bare).expect("manifest serializes");
        hex(&Sha256::digest(&bytes))
    }

    /// Schema checks that need no service state.
    pub fn validate(&self) -> Result<(), String> {
        self.config.run.validate().map_err(|e| e.to_string())?;
        if self.tasks.is_empty() {
            return Err("manifest has no tasks".into());
        }
        if let Some(id) = &self.study_id {
            check_id("study_id", id)?;
        }
        let size = self.config.run.set_size;
        let mut ids = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            t.pair.validate().map_err(|e| format!("task {i}: {e}"))?;
            if let Some(id) = &t.task_id {
                check_id("task_id", id)?;
                if !ids.insert(id.as_str()) {
                    return Err(format!("duplicate task_id {id:?}"));
                }
            }
            for (side, m) in [("left", &t.left), ("right", &t.right)] {
                if m.model.0.trim().is_empty() {
                    return Err(format!("task {i}: {side} model is empty"));
                }
                if m.image_urls.len() != size {
                    return Err(format!(
                        "task {i}: {side} has {} image urls, set size is {size}",
                        m.image_urls.len()
                    ));
                }
                if let Some(ids) = &m.image_ids {
                    if ids.len() != size {
                        return Err(format!(
                            "task {i}: {side} has {} image ids, set size is {size}",
                            ids.len()
                        ));
                    }
                }
                m.set_ref(&t.pair)
                    .validate(&[])
                    .map_err(|e| format!("task {i}: {side}: {e}"))?;
            }
        }
        Ok(())
    }
}

fn check_id(field: &str, id: &str) -> Result<(), String> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.:".contains(c))
    {
        return Err(format!("{field} {id:?} must be non-empty [A-Za-z0-9-_.:]"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub pair: ConceptAttribute,
    pub left: SideManifest,
    pub right: SideManifest,
}

/// A study as persisted in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub config: StudyConfig,
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    pub body_hash: String,
}

impl StudyRecord {
    pub fn from_request(study_id: String, req: &CreateStudy) -> Self {
        let tasks = req
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| Task {
                task_id: t
                    .task_id
                    .clone()
                    .unwrap_or_else(|| format!("{study_id}-t{i:05}")),
                pair: t.pair.clone(),
                left: t.left.clone(),
                right: t.right.clone(),
            })
            .collect();
        Self {
            config: req.config.clone(),
            tasks,
            idempotency_key: req.idempotency_key.clone(),
            body_hash: req.body_hash(),
            study_id,
        }
    }

    /// Displayed-swap flag for one assignment; stable for a given
    /// (seed, study, task, rater).
    pub fn swap_flag(&self, task_id: &str, rater_id: &str) -> bool {
        if !self.config.side_randomization {
            return false;
        }
        seeded_hash(self.config.run.seed, &[&self.study_id, task_id, rater_id]) & 1 == 1
    }
}

/// SHA-256 over the seed and length-prefixed parts, first 8 bytes.
pub fn seeded_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
