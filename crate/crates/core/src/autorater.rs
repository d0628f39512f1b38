//! Autoraters: anything that turns one image set into a diversity score.
//! Implementations are registered by name and chosen at run time.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::embed_io::{ConditioningSpec, CorpusEntry, EmbedIoError};
use crate::json::{self, JsonError};
use crate::vendi::{unique_token_diversity, vendi_of_set, ScoreRecord, VendiError};

#[derive(Debug, Error)]
pub enum AutoraterError {
    #[error("unknown autorater {name:?}; known: {known}")]
    Unknown { name: String, known: String },
    #[error("autorater {0} needs option {1}")]
    MissingOption(&'static str, &'static str),
    #[error("{0}: no embeddings")]
    NoEmbeddings(String),
    #[error("{0}: no tokens")]
    NoTokens(String),
    #[error("no external score for {0}")]
    MissingScore(String),
    #[error(transparent)]
    Io(#[from] EmbedIoError),
    #[error(transparent)]
    Vendi(#[from] VendiError),
    #[error(transparent)]
    Json(#[from] JsonError),
}

pub trait Autorater: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, entry: &CorpusEntry) -> Result<ScoreRecord, AutoraterError>;
}

#[derive(Debug, Clone, Default)]
pub struct AutoraterOptions {
    /// Score file read by the `external` autorater.
    pub external_scores: Option<PathBuf>,
}

pub type AutoraterFactory =
    Arc<dyn Fn(&AutoraterOptions) -> Result<Box<dyn Autorater>, AutoraterError> + Send + Sync>;

#[derive(Clone, Default)]
pub struct AutoraterRegistry {
    factories: BTreeMap<String, AutoraterFactory>,
}

impl AutoraterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `vendi`, `unique-tokens`, `unique-tokens-exact` and `external`.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register("vendi", |_| Ok(Box::new(VendiRater)));
        r.register("unique-tokens", |_| {
            Ok(Box::new(UniqueTokens { case_fold: true }))
        });
        r.register("unique-tokens-exact", |_| {
            Ok(Box::new(UniqueTokens { case_fold: false }))
        });
        r.register("external", |o| {
            let path = o
                .external_scores
                .as_ref()
                .ok_or(AutoraterError::MissingOption("external", "external_scores"))?;
            Ok(Box::new(ExternalScores::load(path)?))
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&AutoraterOptions) -> Result<Box<dyn Autorater>, AutoraterError>
            + Send
            + Sync
            + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(
        &self,
        name: &str,
        options: &AutoraterOptions,
    ) -> Result<Box<dyn Autorater>, AutoraterError> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| AutoraterError::Unknown {
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        f(options)
    }
}

/// Vendi Score of the set's embeddings.
pub struct VendiRater;

impl Autorater for VendiRater {
    fn name(&self) -> &str {
        "vendi"
    }

    fn score(&self, entry: &CorpusEntry) -> Result<ScoreRecord, AutoraterError> {
        if !entry.has_embeddings {
            return Err(AutoraterError::NoEmbeddings(
                entry.dir.display().to_string(),
            ));
        }
        Ok(vendi_of_set(&entry.load_embeddings()?)?.to_record())
    }
}

/// Number of distinct tokens across the set's images.
pub struct UniqueTokens {
    pub case_fold: bool,
}

impl Autorater for UniqueTokens {
    fn name(&self) -> &str {
        if self.case_fold {
            "unique-tokens"
        } else {
            "unique-tokens-exact"
        }
    }

    fn score(&self, entry: &CorpusEntry) -> Result<ScoreRecord, AutoraterError> {
        if !entry.has_tokens {
            return Err(AutoraterError::NoTokens(entry.dir.display().to_string()));
        }
        let tokens = entry.load_tokens()?;
        Ok(ScoreRecord::for_set(
            &entry.set_ref,
            self.name().to_string(),
            ConditioningSpec::none(),
            unique_token_diversity(&tokens, self.case_fold) as f64,
        ))
    }
}

/// Scores produced elsewhere, looked up by set.
pub struct ExternalScores {
    by_set: BTreeMap<(String, String, String, u32), ScoreRecord>,
}

impl ExternalScores {
    pub fn load(path: &std::path::Path) -> Result<Self, AutoraterError> {
        Ok(Self::from_records(json::read_jsonl(path)?))
    }

    pub fn from_records(records: Vec<ScoreRecord>) -> Self {
        let by_set = records
            .into_iter()
            .map(|r| {
                (
                    (
                        r.model.clone(),
                        r.concept.clone(),
                        r.attribute.clone(),
                        r.replicate,
                    ),
                    r,
                )
            })
            .collect();
        Self { by_set }
    }
}

impl Autorater for ExternalScores {
    fn name(&self) -> &str {
        "external"
    }

    fn score(&self, entry: &CorpusEntry) -> Result<ScoreRecord, AutoraterError> {
        let s = &entry.set_ref;
        let key = (
            s.model.0.clone(),
            s.pair.concept.clone(),
            s.pair.attribute.clone(),
            s.replicate,
        );
        self.by_set.get(&key).cloned().ok_or_else(|| {
            AutoraterError::MissingScore(format!(
                "{} {} replicate {}",
                s.model, s.pair, s.replicate
            ))
        })
    }
}

/// Scores every entry in parallel, keeping input order. Failures are
/// returned alongside the entry directory.
pub fn score_corpus(
    rater: &dyn Autorater,
    entries: &[CorpusEntry],
) -> (Vec<ScoreRecord>, Vec<(PathBuf, AutoraterError)>) {
    let results: Vec<(PathBuf, Result<ScoreRecord, AutoraterError>)> = entries
        .par_iter()
        .map(|e| (e.dir.clone(), rater.score(e)))
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (dir, r) in results {
        match r {
            Ok(s) => scores.push(s),
            Err(e) => errors.push((dir, e)),
        }
    }
    (scores, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::scan_corpus;
    use crate::synth::{generate_embeddings, synth_pairs, SynthModelSpec};

    fn corpus(k: usize) -> (tempfile::TempDir, Vec<CorpusEntry>) {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthModelSpec {
            model: "m".into(),
            clusters_per_pair: k,
            noise_sigma: 0.0,
            dim: 16,
            seed: 5,
        };
        generate_embeddings(&spec, &synth_pairs(2), 2, 8, dir.path()).unwrap();
        let entries = scan_corpus(dir.path()).entries;
        (dir, entries)
    }

    #[test]
    fn registry_lists_and_rejects() {
        let reg = AutoraterRegistry::with_builtins();
        assert_eq!(
            reg.names(),
            vec!["external", "unique-tokens", "unique-tokens-exact", "vendi"]
        );
        assert!(matches!(
            reg.create("clip", &AutoraterOptions::default()),
            Err(AutoraterError::Unknown { .. })
        ));
        assert!(matches!(
            reg.create("external", &AutoraterOptions::default()),
            Err(AutoraterError::MissingOption(..))
        ));
    }

    #[test]
    fn builtin_scores_on_synthetic_corpus() {
        let (_dir, entries) = corpus(4);
        let reg = AutoraterRegistry::with_builtins();
        let vendi = reg.create("vendi", &AutoraterOptions::default()).unwrap();
        let (scores, errors) = score_corpus(vendi.as_ref(), &entries);
        assert!(errors.is_empty());
        assert_eq!(scores.len(), 4);
        assert!(scores
            .iter()
            .all(|s| (s.score - 4.0).abs() < 1e-5 && s.embedder == "synthetic"));

        let tokens = reg
            .create("unique-tokens", &AutoraterOptions::default())
            .unwrap();
        let (scores, _) = score_corpus(tokens.as_ref(), &entries);
        assert!(scores
            .iter()
            .all(|s| s.score == 4.0 && s.embedder == "unique-tokens"));
    }

    #[test]
    fn external_lookup() {
        let (dir, entries) = corpus(2);
        let mut rec = ScoreRecord::for_set(
            &entries[0].set_ref,
            "judge".into(),
            ConditioningSpec::none(),
            0.7,
        );
        let path = dir.path().join("ext.jsonl");
        json::write_jsonl(&path, [&rec]).unwrap();
        let reg = AutoraterRegistry::with_builtins();
        let ext = reg
            .create(
                "external",
                &AutoraterOptions {
                    external_scores: Some(path),
                },
            )
            .unwrap();
        let (scores, errors) = score_corpus(ext.as_ref(), &entries);
        rec.score = 0.7;
        assert_eq!(scores, vec![rec]);
        assert_eq!(errors.len(), 3);
    }

    #[test]
    fn custom_registration() {
        struct Constant;
        impl Autorater for Constant {
            fn name(&self) -> &str {
                "constant"
            }
            fn score(&self, entry: &CorpusEntry) -> Result<ScoreRecord, AutoraterError> {
                Ok(ScoreRecord::for_set(
                    &entry.set_ref,
                    "constant".into(),
                    ConditioningSpec::none(),
                    1.0,
                ))
            }
        }
        let mut reg = AutoraterRegistry::new();
        reg.register("constant", |_| Ok(Box::new(Constant)));
        let (_dir, entries) = corpus(1);
        let r = reg
            .create("constant", &AutoraterOptions::default())
            .unwrap();
        assert_eq!(r.name(), "constant");
        assert_eq!(score_corpus(r.as_ref(), &entries).0.len(), 4);
    }
}
