//! Pairwise model comparison: sign-test matrices from human verdicts,
//! Wilcoxon matrices from autorater scores, win rates, and the
//! concept-subsampling ablation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{aggregate_per_concept, AggregatedComparison, Verdict};
use crate::domain::{ConceptAttribute, ModelId};
use crate::stats::{
    binomial_two_sided, median, significance_from_test, wilcoxon_signed_rank, Outcome, StatsError,
    TestMethod,
};
use crate::vendi::ScoreRecord;

pub const FLAG_NO_DECISIVE: &str = "no_decisive_concepts";
pub const FLAG_ALL_ZERO: &str = "all_zero_differences";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("no input records")]
    NoData,
    #[error("score grids differ: {0}")]
    GridMismatch(String),
    #[error("duplicate score for {0}")]
    DuplicateScore(String),
    #[error("scores mix several autoraters: {0}")]
    MixedAutoraters(String),
    #[error("sample size {size} exceeds the {available} available concepts")]
    SizeTooLarge { size: usize, available: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub row: ModelId,
    pub col: ModelId,
    pub sign: Outcome,
    pub p: f64,
    pub wins_row: usize,
    pub wins_col: usize,
    pub ties: usize,
    /// Concepts entering the test.
    pub n: usize,
    pub method: Option<TestMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl ComparisonCell {
    fn mirrored(&self) -> Self {
        ComparisonCell {
            row: self.col.clone(),
            col: self.row.clone(),
            sign: self.sign.reversed(),
            p: self.p,
            wins_row: self.wins_col,
            wins_col: self.wins_row,
            ties: self.ties,
            n: self.n,
            method: self.method,
            flag: self.flag.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub test: String,
    pub alpha_level: f64,
    /// How per-set scores were reduced to one value per concept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_aggregate: Option<String>,
    pub models: Vec<ModelId>,
    /// Every ordered pair of distinct models, row-major in `models` order.
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonMatrix {
    pub fn cell(&self, row: &str, col: &str) -> Option<&ComparisonCell> {
        self.cells
            .iter()
            .find(|c| c.row.as_str() == row && c.col.as_str() == col)
    }

    pub fn sign(&self, row: &str, col: &str) -> Option<Outcome> {
        self.cell(row, col).map(|c| c.sign)
    }

    /// Text grid with `>`, `<`, `=` and `×` on the diagonal; row model
    /// compared against column model.
    pub fn render(&self) -> String {
        let width = self
            .models
            .iter()
            .map(|m| m.as_str().chars().count())
            .max()
            .unwrap_or(1)
            .max(1);
        let mut out = format!("{:width$}", "");
        for m in &self.models {
            out.push_str(&format!(" {:>width$}", m.as_str()));
        }
        out.push('\n');
        for r in &self.models {
            out.push_str(&format!("{:width$}", r.as_str()));
            for c in &self.models {
                let sym = if r == c {
                    '×'
                } else {
                    self.sign(r.as_str(), c.as_str())
                        .map_or('?', Outcome::symbol)
                };
                out.push_str(&format!(" {sym:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    /// Checks cell(a, b) and cell(b, a) are mirror images.
    pub fn is_antisymmetric(&self) -> bool {
        self.cells.iter().all(|c| {
            self.cell(c.col.as_str(), c.row.as_str()).is_some_and(|m| {
                m.sign == c.sign.reversed() && m.p == c.p && m.wins_row == c.wins_col
            })
        })
    }
}

/// Lays out mirrored cells for every ordered pair; `upper` holds one cell
/// per unordered pair `(i, j)`, `i < j`, in the same order as
/// [`unordered_pairs`].
fn assemble(models: &[ModelId], upper: Vec<ComparisonCell>) -> Vec<ComparisonCell> {
    let m = models.len();
    let mut by_pair: BTreeMap<(usize, usize), ComparisonCell> = BTreeMap::new();
    for ((i, j), cell) in unordered_pairs(m).into_iter().zip(upper) {
        by_pair.insert((j, i), cell.mirrored());
        by_pair.insert((i, j), cell);
    }
    by_pair.into_values().collect()
}

fn unordered_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect()
}

/// Sign-test matrix from aggregated human verdicts.
///
/// Verdicts are first reduced to one per (model pair, concept); per model
/// pair, concepts judged equal or unanswerable are dropped and the row
/// model's wins are tested against a fair coin.
pub fn rank_human(
    aggregated: &[AggregatedComparison],
    alpha_level: f64,
) -> Result<ComparisonMatrix, RankError> {
    if aggregated.is_empty() {
        return Err(RankError::NoData);
    }
    let models: Vec<ModelId> = aggregated
        .iter()
        .flat_map(|a| [a.model_left.clone(), a.model_right.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tallies: BTreeMap<(ModelId, ModelId), (usize, usize, usize)> = BTreeMap::new();
    for cv in aggregate_per_concept(aggregated) {
        let t = tallies.entry((cv.model_a, cv.model_b)).or_default();
        match cv.verdict {
            Verdict::LeftMoreDiverse => t.0 += 1,
            Verdict::RightMoreDiverse => t.1 += 1,
            Verdict::EquallyDiverse => t.2 += 1,
            Verdict::UnableToAnswer => {}
        }
    }
    let upper = unordered_pairs(models.len())
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (&models[i], &models[j]);
            let (wa, wb, ties) = tallies
                .get(&(a.clone(), b.clone()))
                .copied()
                .unwrap_or_default();
            let n = wa + wb;
            let mut cell = ComparisonCell {
                row: a.clone(),
                col: b.clone(),
                sign: Outcome::NotSignificant,
                p: 1.0,
                wins_row: wa,
                wins_col: wb,
                ties,
                n,
                method: None,
                flag: None,
            };
            if n == 0 {
                cell.flag = Some(FLAG_NO_DECISIVE.into());
            } else {
                let t = binomial_two_sided(wa as u64, n as u64, 0.5)?;
                let s = significance_from_test(&t, wa.cmp(&wb), alpha_level);
                cell.sign = s.outcome;
                cell.p = s.p_value;
                cell.method = Some(t.method);
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>, RankError>>()?;
    Ok(ComparisonMatrix {
        test: "binomial_two_sided".into(),
        alpha_level,
        concept_aggregate: Some("mode".into()),
        cells: assemble(&models, upper),
        models,
    })
}

type GridKey = (String, String, u32);

/// Scores of one autorater indexed by model then (concept, attribute,
/// replicate), with identical grids across models.
struct ScoreGrid {
    models: Vec<ModelId>,
    by_model: BTreeMap<ModelId, BTreeMap<GridKey, f64>>,
}

impl ScoreGrid {
    fn build(scores: &[ScoreRecord]) -> Result<Self, RankError> {
        let first = scores.first().ok_or(RankError::NoData)?;
        let ident = (first.embedder.as_str(), first.conditioning.label());
        if let Some(other) = scores
            .iter()
            .find(|s| s.embedder != ident.0 || s.conditioning.label() != ident.1)
        {
            return Err(RankError::MixedAutoraters(format!(
                "{}[{}] and {}[{}]",
                ident.0,
                ident.1,
                other.embedder,
                other.conditioning.label()
            )));
        }
        let mut by_model: BTreeMap<ModelId, BTreeMap<GridKey, f64>> = BTreeMap::new();
        for s in scores {
            let key = (s.concept.clone(), s.attribute.clone(), s.replicate);
            if by_model
                .entry(ModelId(s.model.clone()))
                .or_default()
                .insert(key, s.score)
                .is_some()
            {
                return Err(RankError::DuplicateScore(format!(
                    "{} {}/{} replicate {}",
                    s.model, s.concept, s.attribute, s.replicate
                )));
            }
        }
        let mut it = by_model.iter();
        let (m0, g0) = it.next().ok_or(RankError::NoData)?;
        for (m, g) in it {
            if let Some(k) = g0
                .keys()
                .find(|k| !g.contains_key(*k))
                .or_else(|| g.keys().find(|k| !g0.contains_key(*k)))
            {
                return Err(RankError::GridMismatch(format!(
                    "{}/{} replicate {} not scored for both {} and {}",
                    k.0, k.1, k.2, m0, m
                )));
            }
        }
        Ok(ScoreGrid {
            models: by_model.keys().cloned().collect(),
            by_model,
        })
    }

    /// Mean over replicates, per (concept, attribute).
    fn concept_means(&self, model: &ModelId) -> BTreeMap<(String, String), f64> {
        let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for ((c, a, _), v) in &self.by_model[model] {
            let e = acc.entry((c.clone(), a.clone())).or_default();
            e.0 += v;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect()
    }
}

/// Wilcoxon signed-rank matrix from one autorater's per-set scores.
///
/// Scores are averaged over replicates per concept; the direction of a
/// significant result is the sign of the median nonzero difference.
pub fn rank_auto(scores: &[ScoreRecord], alpha_level: f64) -> Result<ComparisonMatrix, RankError> {
    let grid = ScoreGrid::build(scores)?;
    let means: Vec<BTreeMap<(String, String), f64>> =
        grid.models.iter().map(|m| grid.concept_means(m)).collect();
    let upper = unordered_pairs(grid.models.len())
        .into_par_iter()
        .map(|(i, j)| {
            let diffs: Vec<f64> = means[i].iter().map(|(k, a)| a - means[j][k]).collect();
            let mut cell = ComparisonCell {
                row: grid.models[i].clone(),
                col: grid.models[j].clone(),
                sign: Outcome::NotSignificant,
                p: 1.0,
                wins_row: diffs.iter().filter(|d| **d > 0.0).count(),
                wins_col: diffs.iter().filter(|d| **d < 0.0).count(),
                ties: diffs.iter().filter(|d| **d == 0.0).count(),
                n: diffs.len(),
                method: None,
                flag: None,
            };
            match wilcoxon_signed_rank(&diffs) {
                Ok(t) => {
                    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
                    let dir = median(&nonzero).map_or(Ordering::Equal, |m| {
                        m.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
                    });
                    let s = significance_from_test(&t, dir, alpha_level);
                    cell.sign = s.outcome;
                    cell.p = s.p_value;
                    cell.method = Some(t.method);
                }
                Err(StatsError::AllZero) => cell.flag = Some(FLAG_ALL_ZERO.into()),
                Err(e) => return Err(RankError::Stats(e)),
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>, RankError>>()?;
    Ok(ComparisonMatrix {
        test: "wilcoxon_signed_rank".into(),
        alpha_level,
        concept_aggregate: Some("mean_over_replicates".into()),
        cells: assemble(&grid.models, upper),
        models: grid.models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateMatrix {
    pub models: Vec<ModelId>,
    /// `rates[i][j]`: how often model i outscored model j, ties at half
    /// credit, minus 0.5. The diagonal is 0.
    pub rates: Vec<Vec<f64>>,
    /// Matched comparisons per pair.
    pub n_comparisons: usize,
}

impl WinRateMatrix {
    pub fn rate(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.models.iter().position(|m| m.as_str() == row)?;
        let j = self.models.iter().position(|m| m.as_str() == col)?;
        Some(self.rates[i][j])
    }
}

/// Win rates over matched (concept, attribute, replicate) cells.
pub fn win_rate_matrix(scores: &[ScoreRecord]) -> Result<WinRateMatrix, RankError> {
    let grid = ScoreGrid::build(scores)?;
    let m = grid.models.len();
    let total = grid.by_model[&grid.models[0]].len();
    let mut rates = vec![vec![0.0; m]; m];
    for (i, j) in unordered_pairs(m) {
        let (gi, gj) = (
            &grid.by_model[&grid.models[i]],
            &grid.by_model[&grid.models[j]],
        );
        let (mut wins, mut losses) = (0i64, 0i64);
        for (k, a) in gi {
            match a.partial_cmp(&gj[k]) {
                Some(Ordering::Greater) => wins += 1,
                Some(Ordering::Less) => losses += 1,
                _ => {}
            }
        }
        // (wins + ties/2)/total - 1/2, written so that negation is exact.
        let r = (wins - losses) as f64 / (2 * total) as f64;
        rates[i][j] = r;
        rates[j][i] = -r;
    }
    Ok(WinRateMatrix {
        models: grid.models,
        rates,
        n_comparisons: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub size: usize,
    pub concepts: Vec<String>,
    pub matrix: ComparisonMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSequence {
    pub row: ModelId,
    pub col: ModelId,
    /// Outcome on the full concept set, then on each subsample in order.
    pub signs: String,
    pub contradiction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub alpha_level: f64,
    pub n_concepts: usize,
    pub sizes: Vec<usize>,
    pub full: ComparisonMatrix,
    pub runs: Vec<AblationRun>,
    pub sign_sequences: Vec<SignSequence>,
    /// Pairs whose sign flips between `>` and `<` across runs.
    pub contradictions: usize,
}

/// Reruns [`rank_human`] on random concept subsets.
///
/// One seeded permutation of the concepts is drawn and each size keeps a
/// prefix of it, so smaller subsets are nested in larger ones.
pub fn sufficiency_ablation(
    aggregated: &[AggregatedComparison],
    sizes: &[usize],
    seed: u64,
    alpha_level: f64,
) -> Result<AblationReport, RankError> {
    let full = rank_human(aggregated, alpha_level)?;
    let mut concepts: Vec<ConceptAttribute> = aggregated
        .iter()
        .map(|a| a.pair.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(&size) = sizes.iter().find(|&&s| s > concepts.len()) {
        return Err(RankError::SizeTooLarge {
            size,
            available: concepts.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    concepts.shuffle(&mut rng);

    let mut runs = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let keep: BTreeSet<&ConceptAttribute> = concepts[..size].iter().collect();
        let subset: Vec<AggregatedComparison> = aggregated
            .iter()
            .filter(|a| keep.contains(&a.pair))
            .cloned()
            .collect();
        let mut matrix = if subset.is_empty() {
            empty_like(&full)
        } else {
            rank_human(&subset, alpha_level)?
        };
        // Keep every model listed even if a subsample dropped one.
        if matrix.models != full.models {
            matrix = reindex(&matrix, &full);
        }
        let mut names: Vec<String> = keep.iter().map(|p| p.to_string()).collect();
        names.sort();
        runs.push(AblationRun {
            size,
            concepts: names,
            matrix,
        });
    }

    let sign_sequences: Vec<SignSequence> = unordered_pairs(full.models.len())
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (full.models[i].as_str(), full.models[j].as_str());
            let seq: Vec<Outcome> = std::iter::once(&full)
                .chain(runs.iter().map(|r| &r.matrix))
                .map(|m| m.sign(a, b).unwrap_or(Outcome::NotSignificant))
                .collect();
            SignSequence {
                row: full.models[i].clone(),
                col: full.models[j].clone(),
                signs: seq.iter().map(|o| o.symbol()).collect(),
                contradiction: seq.contains(&Outcome::Greater) && seq.contains(&Outcome::Less),
            }
        })
        .collect();
    Ok(AblationReport {
        seed,
        alpha_level,
        n_concepts: concepts.len(),
        sizes: sizes.to_vec(),
        contradictions: sign_sequences.iter().filter(|s| s.contradiction).count(),
        full,
        runs,
        sign_sequences,
    })
}

fn empty_cell(row: &ModelId, col: &ModelId) -> ComparisonCell {
    ComparisonCell {
        row: row.clone(),
        col: col.clone(),
        sign: Outcome::NotSignificant,
        p: 1.0,
        wins_row: 0,
        wins_col: 0,
        ties: 0,
        n: 0,
        method: None,
        flag: Some(FLAG_NO_DECISIVE.into()),
    }
}

fn empty_like(template: &ComparisonMatrix) -> ComparisonMatrix {
    reindex(
        &ComparisonMatrix {
            cells: Vec::new(),
            ..template.clone()
        },
        template,
    )
}

/// `m` laid out over `template`'s models; missing pairs become empty cells.
fn reindex(m: &ComparisonMatrix, template: &ComparisonMatrix) -> ComparisonMatrix {
    let cells = template
        .cells
        .iter()
        .map(|t| {
            m.cell(t.row.as_str(), t.col.as_str())
                .cloned()
                .unwrap_or_else(|| empty_cell(&t.row, &t.col))
        })
        .collect();
    ComparisonMatrix {
        models: template.models.clone(),
        cells,
        ..m.clone()
    }
}
