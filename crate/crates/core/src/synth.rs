//! Synthetic corpora with planted ground truth: clustered embedding sets
//! whose Vendi Score is known in closed form at zero noise, and rating
//! corpora drawn from a simple rater model around planted winners.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{RatingRecord, TemplateVariant, Verdict};
use crate::domain::{ConceptAttribute, ModelId, PairingPolicy, SetRef};
use crate::embed_io::{self, ConditioningSpec, EmbedIoError, EmbeddingSet, TokenSet};

pub const SYNTH_EMBEDDER: &str = "synthetic";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Io(#[from] EmbedIoError),
}

/// One synthetic model: every set it produces spreads its images over
/// `clusters_per_pair` orthonormal directions plus isotropic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModelSpec {
    pub model: ModelId,
    pub clusters_per_pair: usize,
    pub noise_sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl SynthModelSpec {
    pub fn validate(&self, set_size: usize) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadSpec(m));
        if self.clusters_per_pair == 0 {
            return bad("clusters_per_pair must be >= 1".into());
        }
        if self.clusters_per_pair > set_size {
            return bad(format!(
                "{} clusters exceed set size {set_size}",
                self.clusters_per_pair
            ));
        }
        if self.dim < self.clusters_per_pair {
            return bad(format!(
                "dim {} < {} clusters",
                self.dim, self.clusters_per_pair
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if set_size == 0 {
            return bad("set size must be >= 1".into());
        }
        Ok(())
    }
}

fn unit_rng(seed: u64, pair_index: usize, replicate: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((pair_index as u64) << 32) | replicate as u64);
    rng
}

/// `k` orthonormal vectors in R^d by Gram-Schmidt on Gaussian draws.
fn orthonormal_centers(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    while centers.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for c in &centers {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            centers.push(v);
        }
    }
    centers
}

/// Image ids for a synthetic set.
pub fn synth_image_ids(
    model: &ModelId,
    pair: &ConceptAttribute,
    replicate: u32,
    n: usize,
) -> Vec<String> {
    (0..n)
        .map(|i| format!("{}_{}_r{replicate}_{i}", model.as_str(), pair.dir_name()))
        .collect()
}

/// Row-major unit-norm rows in f64, before conversion to f32.
pub fn synth_rows(
    spec: &SynthModelSpec,
    pair_index: usize,
    replicate: u32,
    n: usize,
) -> Result<Vec<Vec<f64>>, SynthError> {
    spec.validate(n)?;
    let mut rng = unit_rng(spec.seed, pair_index, replicate);
    let centers = orthonormal_centers(&mut rng, spec.clusters_per_pair, spec.dim);
    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| SynthError::BadSpec(e.to_string()))?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<f64> = centers[i % centers.len()]
            .iter()
            .map(|c| c + noise.sample(&mut rng))
            .collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
        rows.push(row);
    }
    Ok(rows)
}

/// One synthetic set in memory. `pair_index` selects the PRNG stream.
pub fn synth_set(
    spec: &SynthModelSpec,
    pair: &ConceptAttribute,
    pair_index: usize,
    replicate: u32,
    n: usize,
) -> Result<EmbeddingSet, SynthError> {
    let rows = synth_rows(spec, pair_index, replicate, n)?;
    let data: Vec<f32> = rows.iter().flatten().map(|&x| x as f32).collect();
    let set_ref = SetRef {
        model: spec.model.clone(),
        pair: pair.clone(),
        replicate,
        image_ids: synth_image_ids(&spec.model, pair, replicate, n),
    };
    let normalized = EmbeddingSet::new(
        set_ref.clone(),
        ConditioningSpec::none(),
        SYNTH_EMBEDDER,
        spec.dim,
        data.clone(),
        true,
    );
    // f32 rounding can push a row's norm just past tolerance in huge dims.
    Ok(match normalized {
        Ok(s) => s,
        Err(EmbedIoError::NotNormalized { .. }) => EmbeddingSet::new(
            set_ref,
            ConditioningSpec::none(),
            SYNTH_EMBEDDER,
            spec.dim,
            data,
            false,
        )?,
        Err(e) => return Err(e.into()),
    })
}

/// Tokens naming each image's cluster, so distinct-token counts equal the
/// number of clusters used.
fn synth_tokens(set: &EmbeddingSet, k: usize) -> TokenSet {
    TokenSet {
        set_ref: set.set_ref.clone(),
        tokens: (0..set.rows()).map(|i| format!("value{}", i % k)).collect(),
    }
}

/// Writes every (pair, replicate) set of `spec` under `root` in the corpus
/// layout, with a token file alongside each embedding file. Returns the
/// sets in (pair, replicate) order.
pub fn generate_embeddings(
    spec: &SynthModelSpec,
    pairs: &[ConceptAttribute],
    replicates: u32,
    n: usize,
    root: &Path,
) -> Result<Vec<SetRef>, SynthError> {
    spec.validate(n)?;
    let units: Vec<(usize, u32)> = (0..pairs.len())
        .flat_map(|p| (0..replicates).map(move |r| (p, r)))
        .collect();
    units
        .par_iter()
        .map(|&(p, r)| {
            let set = synth_set(spec, &pairs[p], p, r, n)?;
            let dir = embed_io::set_dir(root, &set.set_ref);
            embed_io::write_embedding_set(&set, &dir)?;
            embed_io::write_token_set(&synth_tokens(&set, spec.clusters_per_pair), &dir)?;
            Ok(set.set_ref)
        })
        .collect()
}

/// A side-by-side comparison with a known correct verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedComparison {
    pub task_id: String,
    pub pair: ConceptAttribute,
    pub model_left: ModelId,
    pub model_right: ModelId,
    pub replicate: u32,
    pub right_replicate: u32,
    pub winner: Verdict,
}

/// Every model pair on every concept and replicate; the model with the
/// larger strength is the planted winner, equal strengths plant a tie.
/// Models are placed left in the order given.
pub fn plan_from_strengths(
    models: &[(ModelId, f64)],
    pairs: &[ConceptAttribute],
    replicates: u32,
    policy: PairingPolicy,
) -> Vec<PlantedComparison> {
    let mut out = Vec::new();
    for (i, (ml, sl)) in models.iter().enumerate() {
        for (mr, sr) in &models[i + 1..] {
            for pair in pairs {
                for r in 0..replicates {
                    let winner = match sl.partial_cmp(sr) {
                        Some(std::cmp::Ordering::Greater) => Verdict::LeftMoreDiverse,
                        Some(std::cmp::Ordering::Less) => Verdict::RightMoreDiverse,
                        _ => Verdict::EquallyDiverse,
                    };
                    out.push(PlantedComparison {
                        task_id: format!("task{:06}", out.len()),
                        pair: pair.clone(),
                        model_left: ml.clone(),
                        model_right: mr.clone(),
                        replicate: r,
                        right_replicate: policy.right_replicate(r, replicates),
                        winner,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSpec {
    pub study_id: String,
    pub raters: usize,
    /// Probability a rater reproduces the planted verdict, in [0.5, 1].
    pub fidelity: f64,
    pub set_size: usize,
    pub seed: u64,
}

/// A rater's verdict: the planted one with probability `fidelity`. A
/// planted winner is otherwise flipped to the other side; a planted tie
/// becomes either side with equal chance.
fn draw_verdict(rng: &mut ChaCha8Rng, planted: Verdict, fidelity: f64) -> Verdict {
    if rng.random_bool(fidelity) {
        return planted;
    }
    match planted {
        Verdict::LeftMoreDiverse | Verdict::RightMoreDiverse => planted.mirrored(),
        _ if rng.random_bool(0.5) => Verdict::LeftMoreDiverse,
        _ => Verdict::RightMoreDiverse,
    }
}

/// Counts in [1, set_size] that imply `verdict`.
fn draw_counts(rng: &mut ChaCha8Rng, verdict: Verdict, set_size: u32) -> Option<(u32, u32)> {
    match verdict {
        Verdict::EquallyDiverse => {
            let c = rng.random_range(1..=set_size);
            Some((c, c))
        }
        Verdict::LeftMoreDiverse | Verdict::RightMoreDiverse => {
            let hi = rng.random_range(2..=set_size);
            let lo = rng.random_range(1..hi);
            Some(if verdict == Verdict::LeftMoreDiverse {
                (hi, lo)
            } else {
                (lo, hi)
            })
        }
        Verdict::UnableToAnswer => None,
    }
}

/// Rating records for `plan`, one per (task, rater), in canonical frame.
pub fn generate_annotations(
    plan: &[PlantedComparison],
    spec: &AnnotationSpec,
) -> Result<Vec<RatingRecord>, SynthError> {
    if !(0.5..=1.0).contains(&spec.fidelity) {
        return Err(SynthError::BadSpec(format!(
            "fidelity {} outside [0.5, 1]",
            spec.fidelity
        )));
    }
    if spec.raters == 0 {
        return Err(SynthError::BadSpec("raters must be >= 1".into()));
    }
    if spec.set_size < 2 {
        return Err(SynthError::BadSpec("set size must be >= 2".into()));
    }
    let set_size = spec.set_size as u32;
    let mut out = Vec::with_capacity(plan.len() * spec.raters);
    for (t, task) in plan.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(t as u64);
        let set = |model: &ModelId, replicate: u32| SetRef {
            model: model.clone(),
            pair: task.pair.clone(),
            replicate,
            image_ids: synth_image_ids(model, &task.pair, replicate, spec.set_size),
        };
        for r in 0..spec.raters {
            let verdict = draw_verdict(&mut rng, task.winner, spec.fidelity);
            let counts = draw_counts(&mut rng, verdict, set_size);
            out.push(RatingRecord {
                task_id: task.task_id.clone(),
                study_id: spec.study_id.clone(),
                pair: task.pair.clone(),
                model_left: task.model_left.clone(),
                model_right: task.model_right.clone(),
                set_left: set(&task.model_left, task.replicate),
                set_right: set(&task.model_right, task.right_replicate),
                rater_id: format!("rater{r:02}"),
                count_left: counts.map(|c| c.0),
                count_right: counts.map(|c| c.1),
                verdict,
                elapsed_ms: rng.random_range(5_000..60_000),
                displayed_swap: false,
                template: Some(TemplateVariant::Count),
            });
        }
    }
    Ok(out)
}

/// Concept-attribute pairs `concept000/attribute`, ... for synthetic runs.
pub fn synth_pairs(count: usize) -> Vec<ConceptAttribute> {
    (0..count)
        .map(|i| ConceptAttribute::new(&format!("concept{i:03}"), "attribute").expect("non-empty"))
        .collect()
}
