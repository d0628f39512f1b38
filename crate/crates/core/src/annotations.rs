//! Human side-by-side ratings: the record format, per-task mode
//! aggregation, count-based verdict inference, Krippendorff's alpha and the
//! count/verdict rank correlation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::domain::{ConceptAttribute, ModelId, SetRef};
use crate::stats::average_ranks;

/// Largest sample for which the correlation p-value is an exact
/// permutation test.
pub const CORRELATION_EXACT_MAX: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("count {count} outside [1, {set_size}]")]
    OutOfRange { count: u32, set_size: u32 },
    #[error("no records")]
    EmptyInput,
    #[error("records span several tasks ({0} and {1})")]
    MixedTasks(String, String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("constant input: {0}")]
    ConstantInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LeftMoreDiverse,
    RightMoreDiverse,
    EquallyDiverse,
    UnableToAnswer,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::LeftMoreDiverse,
        Verdict::RightMoreDiverse,
        Verdict::EquallyDiverse,
        Verdict::UnableToAnswer,
    ];

    /// The same judgment with sides exchanged.
    pub fn mirrored(self) -> Self {
        match self {
            Verdict::LeftMoreDiverse => Verdict::RightMoreDiverse,
            Verdict::RightMoreDiverse => Verdict::LeftMoreDiverse,
            v => v,
        }
    }

    pub fn is_decisive(self) -> bool {
        matches!(self, Verdict::LeftMoreDiverse | Verdict::RightMoreDiverse)
    }

    /// Ordinal code used for the correlation: right -1, equal 0, left +1.
    pub fn ordinal(self) -> Option<i32> {
        match self {
            Verdict::LeftMoreDiverse => Some(1),
            Verdict::EquallyDiverse => Some(0),
            Verdict::RightMoreDiverse => Some(-1),
            Verdict::UnableToAnswer => None,
        }
    }
}

/// Which annotation template a rating was collected with.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum TemplateVariant {
    WithoutAspect,
    Aspect,
    #[default]
    Count,
}

/// One rater's judgment of one side-by-side task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub task_id: String,
    pub study_id: String,
    pub pair: ConceptAttribute,
    pub model_left: ModelId,
    pub model_right: ModelId,
    pub set_left: SetRef,
    pub set_right: SetRef,
    pub rater_id: String,
    #[serde(default)]
    pub count_left: Option<u32>,
    #[serde(default)]
    pub count_right: Option<u32>,
    pub verdict: Verdict,
    #[serde(default)]
    pub elapsed_ms: u64,
    /// Counts and verdict are in the displayed frame when true.
    #[serde(default)]
    pub displayed_swap: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateVariant>,
}

impl RatingRecord {
    /// The record in the canonical left/right frame.
    pub fn canonical(&self) -> RatingRecord {
        let mut r = self.clone();
        if r.displayed_swap {
            std::mem::swap(&mut r.count_left, &mut r.count_right);
            r.verdict = r.verdict.mirrored();
            r.displayed_swap = false;
        }
        r
    }

    pub fn set_size(&self) -> u32 {
        self.set_left.len().max(self.set_right.len()) as u32
    }

    pub fn counts(&self) -> Option<(u32, u32)> {
        Some((self.count_left?, self.count_right?))
    }

    /// Checks count bounds against the set size; `require_counts` rejects
    /// records without counts.
    pub fn validate_counts(&self, require_counts: bool) -> Result<(), AnnotationError> {
        let set_size = self.set_size();
        for c in [self.count_left, self.count_right] {
            match c {
                Some(c) if c < 1 || c > set_size => {
                    return Err(AnnotationError::OutOfRange { count: c, set_size })
                }
                None if require_counts => {
                    return Err(AnnotationError::InsufficientData(
                        "counts are required".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Verdict implied by per-side distinct-value counts.
pub fn infer_verdict_from_counts(
    count_left: u32,
    count_right: u32,
    set_size: u32,
) -> Result<Verdict, AnnotationError> {
    for c in [count_left, count_right] {
        if c < 1 || c > set_size {
            return Err(AnnotationError::OutOfRange { count: c, set_size });
        }
    }
    Ok(match count_left.cmp(&count_right) {
        std::cmp::Ordering::Greater => Verdict::LeftMoreDiverse,
        std::cmp::Ordering::Less => Verdict::RightMoreDiverse,
        std::cmp::Ordering::Equal => Verdict::EquallyDiverse,
    })
}

/// Most frequent verdict with these tie rules: a tie that includes
/// `UnableToAnswer` and something else drops `UnableToAnswer`; any tie left
/// among the informative verdicts becomes `EquallyDiverse`.
pub fn mode_verdict(verdicts: &[Verdict]) -> Option<Verdict> {
    if verdicts.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<Verdict, usize> = BTreeMap::new();
    for v in verdicts {
        *counts.entry(*v).or_default() += 1;
    }
    let best = *counts.values().max()?;
    let mut tied: Vec<Verdict> = counts
        .into_iter()
        .filter(|&(_, c)| c == best)
        .map(|(v, _)| v)
        .collect();
    if tied.len() > 1 {
        tied.retain(|v| *v != Verdict::UnableToAnswer);
    }
    Some(if tied.len() == 1 {
        tied[0]
    } else {
        Verdict::EquallyDiverse
    })
}

/// Mode of integer values, ties to the smaller value.
fn mode_min(values: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let best = *counts.values().max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(v, _)| v)
}

/// Raters' verdicts on one task reduced to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedComparison {
    pub task_id: String,
    pub pair: ConceptAttribute,
    pub model_left: ModelId,
    pub model_right: ModelId,
    /// Replicate of the left set.
    pub replicate: u32,
    pub right_replicate: u32,
    pub verdict: Verdict,
    pub n_ratings: usize,
    /// Mode of each rater's larger count.
    pub modal_count: Option<u32>,
    /// Mode of each rater's absolute count difference.
    pub modal_gap: Option<u32>,
}

/// Mode aggregation over all ratings of one task, in the canonical frame.
pub fn aggregate_mode(records: &[RatingRecord]) -> Result<AggregatedComparison, AnnotationError> {
    let first = records.first().ok_or(AnnotationError::EmptyInput)?;
    if let Some(other) = records.iter().find(|r| r.task_id != first.task_id) {
        return Err(AnnotationError::MixedTasks(
            first.task_id.clone(),
            other.task_id.clone(),
        ));
    }
    let canon: Vec<RatingRecord> = records.iter().map(RatingRecord::canonical).collect();
    let verdicts: Vec<Verdict> = canon.iter().map(|r| r.verdict).collect();
    let counts: Vec<(u32, u32)> = canon.iter().filter_map(RatingRecord::counts).collect();
    Ok(AggregatedComparison {
        task_id: first.task_id.clone(),
        pair: first.pair.clone(),
        model_left: first.model_left.clone(),
        model_right: first.model_right.clone(),
        replicate: first.set_left.replicate,
        right_replicate: first.set_right.replicate,
        verdict: mode_verdict(&verdicts).ok_or(AnnotationError::EmptyInput)?,
        n_ratings: records.len(),
        modal_count: mode_min(counts.iter().map(|&(l, r)| l.max(r))),
        modal_gap: mode_min(counts.iter().map(|&(l, r)| l.abs_diff(r))),
    })
}

/// Groups records by task id and aggregates each task, in task-id order.
pub fn aggregate_all(records: &[RatingRecord]) -> Vec<AggregatedComparison> {
    let mut by_task: BTreeMap<&str, Vec<RatingRecord>> = BTreeMap::new();
    for r in records {
        by_task
            .entry(r.task_id.as_str())
            .or_default()
            .push(r.clone());
    }
    by_task
        .values()
        .filter_map(|rs| aggregate_mode(rs).ok())
        .collect()
}

/// One verdict per (model pair, concept) after the second aggregation.
/// Models are ordered so that `model_a < model_b`; `verdict` is from
/// `model_a`'s point of view (left = `model_a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVerdict {
    pub pair: ConceptAttribute,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub verdict: Verdict,
    pub n_comparisons: usize,
}

/// Mode over the comparisons of each (model pair, concept), with the same
/// tie rules as [`mode_verdict`].
pub fn aggregate_per_concept(aggregated: &[AggregatedComparison]) -> Vec<ConceptVerdict> {
    let mut groups: BTreeMap<(ModelId, ModelId, ConceptAttribute), Vec<Verdict>> = BTreeMap::new();
    for a in aggregated {
        let (ma, mb, v) = if a.model_left <= a.model_right {
            (a.model_left.clone(), a.model_right.clone(), a.verdict)
        } else {
            (
                a.model_right.clone(),
                a.model_left.clone(),
                a.verdict.mirrored(),
            )
        };
        groups.entry((ma, mb, a.pair.clone())).or_default().push(v);
    }
    groups
        .into_iter()
        .filter_map(|((model_a, model_b, pair), vs)| {
            Some(ConceptVerdict {
                verdict: mode_verdict(&vs)?,
                n_comparisons: vs.len(),
                pair,
                model_a,
                model_b,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLevel {
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: f64,
    /// Units with at least two ratings.
    pub n_units: usize,
    pub n_raters: usize,
    /// Ratings that entered the coincidence matrix.
    pub n_pairable: usize,
    pub level: AgreementLevel,
    /// Expected disagreement was zero (one category everywhere); alpha is
    /// reported as 1 by convention.
    pub degenerate: bool,
}

/// Nominal Krippendorff's alpha over units of category values, via the
/// coincidence matrix. Units with fewer than two values are ignored.
///
/// Returns `(alpha, pairable units, pairable values, degenerate)`.
pub fn alpha_nominal<C: Ord + Clone>(
    units: &[Vec<C>],
) -> Result<(f64, usize, usize, bool), AnnotationError> {
    let pairable: Vec<&Vec<C>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.len() < 2 {
        return Err(AnnotationError::InsufficientData(format!(
            "{} unit(s) with at least two ratings; need 2",
            pairable.len()
        )));
    }
    // o[c][k] summed; only totals are needed for nominal distance.
    let mut observed_disagreement = 0.0;
    let mut marginals: BTreeMap<C, f64> = BTreeMap::new();
    let mut n_total = 0.0;
    for unit in &pairable {
        let m = unit.len() as f64;
        let mut counts: BTreeMap<&C, f64> = BTreeMap::new();
        for v in unit.iter() {
            *counts.entry(v).or_default() += 1.0;
        }
        // Ordered pairs with different values: m^2 - sum(n_c^2).
        let same: f64 = counts.values().map(|c| c * c).sum();
        observed_disagreement += (m * m - same) / (m - 1.0);
        for (c, n) in counts {
            *marginals.entry(c.clone()).or_default() += n;
        }
        n_total += m;
    }
    let marg_sq: f64 = marginals.values().map(|n| n * n).sum();
    let expected_pairs = n_total * n_total - marg_sq;
    let n_pairable = n_total as usize;
    if expected_pairs == 0.0 {
        return Ok((1.0, pairable.len(), n_pairable, true));
    }
    let d_o = observed_disagreement / n_total;
    let d_e = expected_pairs / (n_total * (n_total - 1.0));
    Ok((1.0 - d_o / d_e, pairable.len(), n_pairable, false))
}

/// Krippendorff's alpha over raw verdicts, one unit per task.
pub fn krippendorff_alpha(records: &[RatingRecord]) -> Result<AgreementReport, AnnotationError> {
    let mut units: BTreeMap<&str, BTreeMap<&str, Verdict>> = BTreeMap::new();
    for r in records {
        units
            .entry(r.task_id.as_str())
            .or_default()
            .insert(r.rater_id.as_str(), r.canonical().verdict);
    }
    let raters: BTreeSet<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
    let values: Vec<Vec<Verdict>> = units
        .values()
        .map(|u| u.values().copied().collect())
        .collect();
    let (alpha, n_units, n_pairable, degenerate) = alpha_nominal(&values)?;
    Ok(AgreementReport {
        alpha,
        n_units,
        n_raters: raters.len(),
        n_pairable,
        level: AgreementLevel::Nominal,
        degenerate,
    })
}

/// Alpha computed separately for each unordered model pair.
pub fn alpha_by_model_pair(
    records: &[RatingRecord],
) -> BTreeMap<(ModelId, ModelId), Result<AgreementReport, AnnotationError>> {
    let mut groups: BTreeMap<(ModelId, ModelId), Vec<RatingRecord>> = BTreeMap::new();
    for r in records {
        let key = if r.model_left <= r.model_right {
            (r.model_left.clone(), r.model_right.clone())
        } else {
            (r.model_right.clone(), r.model_left.clone())
        };
        groups.entry(key).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, rs)| (k, krippendorff_alpha(&rs)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    TApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: String,
    pub p_method: PValueMethod,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnnotationError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(AnnotationError::InsufficientData(format!(
            "{} paired observations",
            x.len().min(y.len())
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(AnnotationError::ConstantInput(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

fn for_each_permutation(v: &mut [f64], k: usize, f: &mut impl FnMut(&[f64])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        for_each_permutation(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Two-sided p-value for a Spearman coefficient.
fn spearman_p(x: &[f64], y: &[f64], rho: f64) -> (f64, PValueMethod) {
    let n = x.len();
    if n <= CORRELATION_EXACT_MAX {
        let rx = average_ranks(x);
        let mut ry = average_ranks(y);
        let (mut hits, mut total) = (0u64, 0u64);
        let target = rho.abs() - 1e-12;
        for_each_permutation(&mut ry, 0, &mut |perm| {
            total += 1;
            if pearson(&rx, perm).abs() >= target {
                hits += 1;
            }
        });
        return (hits as f64 / total as f64, PValueMethod::ExactPermutation);
    }
    if rho.abs() >= 1.0 {
        return (0.0, PValueMethod::TApproximation);
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (
        (2.0 * dist.sf(t.abs())).min(1.0),
        PValueMethod::TApproximation,
    )
}

/// Rank correlation between the count difference (left − right) and the
/// ordinal verdict. Records without counts or with `UnableToAnswer` are
/// dropped.
pub fn count_verdict_correlation(
    records: &[RatingRecord],
) -> Result<CorrelationReport, AnnotationError> {
    let (x, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .map(RatingRecord::canonical)
        .filter_map(|r| {
            let (l, rr) = r.counts()?;
            let v = r.verdict.ordinal()?;
            Some((l as f64 - rr as f64, v as f64))
        })
        .unzip();
    if x.len() < 2 {
        return Err(AnnotationError::InsufficientData(format!(
            "{} usable records",
            x.len()
        )));
    }
    let rho = spearman(&x, &y)?;
    let (p_value, p_method) = spearman_p(&x, &y, rho);
    Ok(CorrelationReport {
        rho,
        p_value,
        n: x.len(),
        method: "spearman".into(),
        p_method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Verdict::{
        EquallyDiverse as E, LeftMoreDiverse as L, RightMoreDiverse as R, UnableToAnswer as U,
    };

    pub(crate) fn record(
        task: &str,
        rater: &str,
        verdict: Verdict,
        counts: Option<(u32, u32)>,
    ) -> RatingRecord {
        let pair = ConceptAttribute::new("apple", "color").unwrap();
        let set = |m: &str| SetRef {
            model: m.into(),
            pair: pair.clone(),
            replicate: 0,
            image_ids: (0..8).map(|i| format!("{m}{i}")).collect(),
        };
        RatingRecord {
            task_id: task.into(),
            study_id: "s".into(),
            pair: pair.clone(),
            model_left: "a".into(),
            model_right: "b".into(),
            set_left: set("a"),
            set_right: set("b"),
            rater_id: rater.into(),
            count_left: counts.map(|c| c.0),
            count_right: counts.map(|c| c.1),
            verdict,
            elapsed_ms: 1000,
            displayed_swap: false,
            template: None,
        }
    }

    fn task(verdicts: &[Verdict]) -> Vec<RatingRecord> {
        verdicts
            .iter()
            .enumerate()
            .map(|(i, v)| record("t", &format!("r{i}"), *v, None))
            .collect()
    }

    #[test]
    fn infer_examples() {
        assert_eq!(infer_verdict_from_counts(5, 3, 8).unwrap(), L);
        assert_eq!(infer_verdict_from_counts(4, 4, 8).unwrap(), E);
        assert_eq!(infer_verdict_from_counts(2, 7, 8).unwrap(), R);
        assert!(matches!(
            infer_verdict_from_counts(0, 3, 8),
            Err(AnnotationError::OutOfRange { .. })
        ));
        assert!(matches!(
            infer_verdict_from_counts(9, 3, 8),
            Err(AnnotationError::OutOfRange { .. })
        ));
    }

    #[test]
    fn mode_examples() {
        assert_eq!(aggregate_mode(&task(&[L, L, R, E, L])).unwrap().verdict, L);
        assert_eq!(aggregate_mode(&task(&[L, L, R, R, E])).unwrap().verdict, E);
        assert_eq!(aggregate_mode(&task(&[U, U, U])).unwrap().verdict, U);
    }

    #[test]
    fn mode_tie_rules() {
        assert_eq!(mode_verdict(&[U, U, L, L]), Some(L));
        assert_eq!(mode_verdict(&[U, R]), Some(R));
        assert_eq!(mode_verdict(&[L, E]), Some(E));
        assert_eq!(mode_verdict(&[L, R, U]), Some(E));
        assert_eq!(mode_verdict(&[]), None);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate_mode(&[]), Err(AnnotationError::EmptyInput));
        let mixed = vec![record("t1", "a", L, None), record("t2", "b", L, None)];
        assert!(matches!(
            aggregate_mode(&mixed),
            Err(AnnotationError::MixedTasks(..))
        ));
    }

    #[test]
    fn aggregate_uses_canonical_frame_and_counts() {
        let mut swapped = record("t", "r0", R, Some((2, 6)));
        swapped.displayed_swap = true;
        let recs = vec![
            swapped,
            record("t", "r1", L, Some((6, 2))),
            record("t", "r2", L, Some((7, 2))),
        ];
        let agg = aggregate_mode(&recs).unwrap();
        assert_eq!(agg.verdict, L);
        assert_eq!(agg.n_ratings, 3);
        assert_eq!(agg.modal_count, Some(6));
        assert_eq!(agg.modal_gap, Some(4));
    }

    #[test]
    fn per_concept_mode_orients_models() {
        let mk = |left: &str, right: &str, v: Verdict, t: &str| AggregatedComparison {
            task_id: t.into(),
            pair: ConceptAttribute::new("apple", "color").unwrap(),
            model_left: left.into(),
            model_right: right.into(),
            replicate: 0,
            right_replicate: 0,
            verdict: v,
            n_ratings: 5,
            modal_count: None,
            modal_gap: None,
        };
        let out = aggregate_per_concept(&[
            mk("b", "a", R, "1"),
            mk("a", "b", L, "2"),
            mk("a", "b", R, "3"),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].model_a.as_str(), "a");
        assert_eq!(out[0].verdict, L);
        assert_eq!(out[0].n_comparisons, 3);
    }

    /// Coincidence-matrix alpha computed entry by entry.
    fn alpha_oracle(units: &[Vec<u8>]) -> f64 {
        let cats: BTreeSet<u8> = units.iter().flatten().copied().collect();
        let cats: Vec<u8> = cats.into_iter().collect();
        let idx = |c: u8| cats.iter().position(|&x| x == c).unwrap();
        let k = cats.len();
        let mut o = vec![vec![0.0; k]; k];
        for u in units.iter().filter(|u| u.len() >= 2) {
            let m = u.len() as f64;
            for i in 0..u.len() {
                for j in 0..u.len() {
                    if i != j {
                        o[idx(u[i])][idx(u[j])] += 1.0 / (m - 1.0);
                    }
                }
            }
        }
        let nc: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
        let n: f64 = nc.iter().sum();
        let mut d_o = 0.0;
        let mut d_e = 0.0;
        for c in 0..k {
            for kk in 0..k {
                if c != kk {
                    d_o += o[c][kk];
                    d_e += nc[c] * nc[kk];
                }
            }
        }
        1.0 - (n - 1.0) * d_o / d_e
    }

    #[test]
    fn alpha_examples() {
        let perfect = vec![vec![L, L], vec![R, R], vec![E, E]];
        let (a, ..) = alpha_nominal(&perfect).unwrap();
        assert_eq!(a, 1.0);

        let (a, ..) = alpha_nominal(&[vec!['a', 'a'], vec!['a', 'b']]).unwrap();
        assert_eq!(a, 0.0);

        let (a, ..) = alpha_nominal(&[vec!['a', 'b'], vec!['b', 'a']]).unwrap();
        assert!(a < 0.0);
        assert!((a - alpha_oracle(&[vec![0, 1], vec![1, 0]])).abs() < 1e-12);
        assert!((a + 0.5).abs() < 1e-12);
    }

    #[test]
    fn alpha_insufficient_and_degenerate() {
        assert!(matches!(
            alpha_nominal(&[vec![L, L]]),
            Err(AnnotationError::InsufficientData(_))
        ));
        assert!(matches!(
            alpha_nominal(&[vec![L, L], vec![R]]),
            Err(AnnotationError::InsufficientData(_))
        ));
        let (a, _, _, degenerate) = alpha_nominal(&[vec![L, L], vec![L, L, L]]).unwrap();
        assert_eq!(a, 1.0);
        assert!(degenerate);
    }

    #[test]
    fn krippendorff_from_records_deswaps() {
        let mut recs = Vec::new();
        for (t, v) in [("t1", L), ("t2", R)] {
            recs.push(record(t, "x", v, None));
            let mut swapped = record(t, "y", v.mirrored(), None);
            swapped.displayed_swap = true;
            recs.push(swapped);
        }
        let rep = krippendorff_alpha(&recs).unwrap();
        assert_eq!(rep.alpha, 1.0);
        assert_eq!((rep.n_units, rep.n_raters, rep.n_pairable), (2, 2, 4));
        assert!(!rep.degenerate);
    }

    #[test]
    fn correlation_examples() {
        let mk = |d: i32, v: Verdict| {
            let (l, r) = if d >= 0 {
                (1 + d as u32, 1)
            } else {
                (1, 1 + (-d) as u32)
            };
            record("t", "r", v, Some((l, r)))
        };
        let rep = count_verdict_correlation(&[mk(-2, R), mk(0, E), mk(3, L)]).unwrap();
        assert!((rep.rho - 1.0).abs() < 1e-12);
        assert_eq!(rep.p_method, PValueMethod::ExactPermutation);
        // Only the identity and its mirror reach |rho| = 1 among 3! orders.
        assert!((rep.p_value - 2.0 / 6.0).abs() < 1e-12);

        let err = count_verdict_correlation(&[mk(1, L), mk(2, L), mk(3, L)]).unwrap_err();
        assert!(matches!(err, AnnotationError::ConstantInput(_)));

        let rep = count_verdict_correlation(&[mk(3, R), mk(-3, L)]).unwrap();
        assert!((rep.rho + 1.0).abs() < 1e-12);

        assert!(matches!(
            count_verdict_correlation(&[mk(1, L)]),
            Err(AnnotationError::InsufficientData(_))
        ));
    }

    #[test]
    fn correlation_large_sample_uses_t() {
        let recs: Vec<RatingRecord> = (0..40)
            .map(|i| {
                let d = (i % 7) - 3;
                let v = if d > 0 {
                    L
                } else if d < 0 {
                    R
                } else {
                    E
                };
                let v = if i % 11 == 0 { E } else { v };
                let (l, r) = if d >= 0 {
                    (1 + d as u32, 1)
                } else {
                    (1, 1 + (-d) as u32)
                };
                record("t", "r", v, Some((l, r)))
            })
            .collect();
        let rep = count_verdict_correlation(&recs).unwrap();
        assert_eq!(rep.p_method, PValueMethod::TApproximation);
        assert!(rep.rho > 0.8 && rep.p_value < 1e-6);
    }

    fn units_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
        proptest::collection::vec(proptest::collection::vec(0u8..4, 1..6), 2..15)
    }

    proptest! {
        #[test]
        fn alpha_matches_oracle(units in units_strategy()) {
            if let Ok((a, _, _, false)) = alpha_nominal(&units) {
                let o = alpha_oracle(&units);
                prop_assert!((a - o).abs() < 1e-9, "{a} vs {o}");
                prop_assert!(a <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn alpha_invariant_under_relabeling(units in units_strategy(), perm in Just([0u8, 1, 2, 3]).prop_shuffle()) {
            let relabeled: Vec<Vec<u8>> = units.iter().map(|u| u.iter().map(|&c| perm[c as usize]).collect()).collect();
            prop_assert_eq!(alpha_nominal(&units).ok(), alpha_nominal(&relabeled).ok());
        }

        #[test]
        fn mode_is_permutation_invariant(vs in proptest::collection::vec(0usize..4, 1..9), seed in any::<u64>()) {
            let verdicts: Vec<Verdict> = vs.iter().map(|&i| Verdict::ALL[i]).collect();
            let mut shuffled = verdicts.clone();
            for i in (1..shuffled.len()).rev() {
                let j = (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            prop_assert_eq!(mode_verdict(&verdicts), mode_verdict(&shuffled));
        }
    }
}
