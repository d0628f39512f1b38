//! Vendi Score: the exponential of the Shannon entropy of the eigenvalues of
//! `K / n`, where `K` is the cosine-similarity kernel of a set's embeddings.
//! Also the discrete unique-token count used for first-word autoraters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_value, SetRef};
use crate::embed_io::{ConditioningSpec, EmbeddingSet, TokenSet};
use crate::linalg::symmetric_eigenvalues;

const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-9;
/// Eigenvalues of `K / n` in `[-CLIP_WINDOW, 0)` are jitter and clipped to 0;
/// anything lower means the kernel is not PSD. Equivalent to a floor of
/// `-1e-8 * n` on the eigenvalues of `K` itself.
const CLIP_WINDOW: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VendiError {
    #[error("embedding row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("empty set")]
    Empty,
    #[error("kernel matrix is not valid: {0}")]
    InvalidKernel(String),
    #[error("kernel is not positive semidefinite: eigenvalue {0} of K/n")]
    NotPsd(f64),
}

/// Symmetric cosine-similarity kernel with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    /// Wraps an explicit row-major matrix after checking symmetry and the
    /// unit diagonal.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self, VendiError> {
        if n == 0 {
            return Err(VendiError::Empty);
        }
        if values.len() != n * n {
            return Err(VendiError::InvalidKernel(format!(
                "expected {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(VendiError::InvalidKernel(format!("non-finite entry {v}")));
        }
        for i in 0..n {
            if (values[i * n + i] - 1.0).abs() > DIAGONAL_TOL {
                return Err(VendiError::InvalidKernel(format!(
                    "diagonal entry {i} is {}",
                    values[i * n + i]
                )));
            }
            for j in 0..i {
                if (values[i * n + j] - values[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(VendiError::InvalidKernel(format!(
                        "asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Rows of `set` scaled to unit L2 norm, in f64.
pub fn unit_rows(set: &EmbeddingSet) -> Result<Vec<Vec<f64>>, VendiError> {
    let rows: Vec<Vec<f64>> = set
        .row_iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect();
    normalize_rows(&rows)
}

fn normalize_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<Vec<f64>>, VendiError> {
    if rows.is_empty() {
        return Err(VendiError::Empty);
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.as_ref();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(VendiError::ZeroNormRow(i));
            }
            Ok(row.iter().map(|x| x / norm).collect())
        })
        .collect()
}

pub fn cosine_kernel(set: &EmbeddingSet) -> Result<KernelMatrix, VendiError> {
    Ok(kernel_of_unit_rows(&unit_rows(set)?))
}

/// Cosine kernel of arbitrary f64 rows (normalized internally).
pub fn cosine_kernel_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<KernelMatrix, VendiError> {
    Ok(kernel_of_unit_rows(&normalize_rows(rows)?))
}

fn kernel_of_unit_rows(rows: &[Vec<f64>]) -> KernelMatrix {
    let n = rows.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            values[i * n + j] = dot;
            values[j * n + i] = dot;
        }
    }
    KernelMatrix { n, values }
}

/// Vendi Score of arbitrary f64 rows.
pub fn vendi_of_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<f64, VendiError> {
    Ok(vendi_score(&spectrum(&cosine_kernel_from_rows(rows)?)?))
}

/// Eigenvalues of `K / n`, descending, with jitter below zero clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub clipped: Vec<bool>,
}

impl Spectrum {
    /// Builds a spectrum from raw eigenvalues of `K / n`, applying the same
    /// clipping rule as [`spectrum`].
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self, VendiError> {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let mut clipped = vec![false; eigenvalues.len()];
        for (lam, flag) in eigenvalues.iter_mut().zip(clipped.iter_mut()) {
            if *lam < -CLIP_WINDOW {
                return Err(VendiError::NotPsd(*lam));
            }
            if *lam < 0.0 {
                *lam = 0.0;
                *flag = true;
            }
        }
        Ok(Self {
            eigenvalues,
            clipped,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .eigenvalues
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| l * l.ln())
            .sum::<f64>()
    }
}

pub fn spectrum(kernel: &KernelMatrix) -> Result<Spectrum, VendiError> {
    let n = kernel.n as f64;
    let scaled: Vec<f64> = kernel.values.iter().map(|v| v / n).collect();
    Spectrum::from_eigenvalues(symmetric_eigenvalues(&scaled, kernel.n))
}

/// `exp(entropy)` of the spectrum.
pub fn vendi_score(spec: &Spectrum) -> f64 {
    spec.entropy().exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VendiScore {
    pub value: f64,
    pub set_ref: SetRef,
    pub conditioning: ConditioningSpec,
    pub embedder_name: String,
}

impl VendiScore {
    pub fn to_record(&self) -> ScoreRecord {
        ScoreRecord::for_set(
            &self.set_ref,
            self.embedder_name.clone(),
            self.conditioning.clone(),
            self.value,
        )
    }
}

pub fn vendi_of_set(set: &EmbeddingSet) -> Result<VendiScore, VendiError> {
    let kernel = cosine_kernel(set)?;
    let spec = spectrum(&kernel)?;
    Ok(VendiScore {
        value: vendi_score(&spec),
        set_ref: set.set_ref.clone(),
        conditioning: set.conditioning.clone(),
        embedder_name: set.embedder_name.clone(),
    })
}

/// Number of distinct tokens after trimming and optional case-folding.
pub fn unique_token_diversity(tokens: &TokenSet, case_fold: bool) -> usize {
    tokens
        .tokens
        .iter()
        .map(|t| {
            if case_fold {
                normalize_value(t)
            } else {
                t.trim().to_string()
            }
        })
        .collect::<BTreeSet<_>>()
        .len()
}

/// One autorater score for one image set; a line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model: String,
    pub concept: String,
    pub attribute: String,
    pub replicate: u32,
    pub embedder: String,
    #[serde(default)]
    pub conditioning: ConditioningSpec,
    pub score: f64,
}

impl ScoreRecord {
    pub fn for_set(
        set: &SetRef,
        embedder: String,
        conditioning: ConditioningSpec,
        score: f64,
    ) -> Self {
        Self {
            model: set.model.0.clone(),
            concept: set.pair.concept.clone(),
            attribute: set.pair.attribute.clone(),
            replicate: set.replicate,
            embedder,
            conditioning,
            score,
        }
    }
}
