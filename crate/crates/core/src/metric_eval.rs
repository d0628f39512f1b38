//! Autorater scores checked against human verdicts: directional accuracy,
//! count-gap strata, equal-diversity AUC, golden-set validation and count
//! histograms.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AggregatedComparison, RatingRecord, TemplateVariant, Verdict};
use crate::domain::ConceptAttribute;
use crate::embed_io::ConditioningSpec;
use crate::stats::{roc_auc, StatsError};
use crate::vendi::ScoreRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no human comparison could be joined to a score pair")]
    JoinFailure,
    #[error("no comparisons left in stratum {0:?}")]
    EmptyStratum(Stratum),
    #[error("need both equal and unequal comparisons")]
    OneClassOnly,
    #[error("unknown golden subset tag {0:?}")]
    UnknownSubsetTag(String),
    #[error("duplicate score for {0}")]
    DuplicateScore(String),
    #[error("scores mix several autoraters: {0}")]
    MixedAutoraters(String),
    #[error(transparent)]
    Stats(StatsError),
}

impl From<StatsError> for EvalError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::OneClassOnly => EvalError::OneClassOnly,
            other => EvalError::Stats(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    All,
    GapGreaterThan(u32),
}

impl Stratum {
    /// `None` and `Some(0)` both select every comparison.
    pub fn from_min_gap(min_gap: Option<u32>) -> Self {
        match min_gap {
            None | Some(0) => Stratum::All,
            Some(k) => Stratum::GapGreaterThan(k),
        }
    }

    fn admits(self, modal_gap: Option<u32>) -> bool {
        match self {
            Stratum::All => true,
            Stratum::GapGreaterThan(k) => modal_gap.is_some_and(|g| g > k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub embedder_name: String,
    pub conditioning: ConditioningSpec,
    pub stratum: Stratum,
    pub accuracy: f64,
    pub n_pairs: usize,
    pub n_correct: usize,
    pub n_excluded_equal: usize,
    pub n_excluded_unable: usize,
    /// Joined decisive comparisons outside the stratum.
    pub n_excluded_gap: usize,
    /// Equal scores; counted as incorrect.
    pub n_score_ties: usize,
    /// Decisive comparisons with no score on one side.
    pub n_unjoined: usize,
}

type ScoreKey = (String, String, String, u32);

/// One autorater's scores keyed by (model, concept, attribute, replicate).
struct ScoreIndex {
    embedder: String,
    conditioning: ConditioningSpec,
    map: BTreeMap<ScoreKey, f64>,
}

impl ScoreIndex {
    fn build(scores: &[ScoreRecord]) -> Result<Self, EvalError> {
        let first = scores.first().ok_or(EvalError::JoinFailure)?;
        let mut map = BTreeMap::new();
        for s in scores {
            if s.embedder != first.embedder || s.conditioning.label() != first.conditioning.label()
            {
                return Err(EvalError::MixedAutoraters(format!(
                    "{}[{}] and {}[{}]",
                    first.embedder,
                    first.conditioning.label(),
                    s.embedder,
                    s.conditioning.label()
                )));
            }
            let key = (
                s.model.clone(),
                s.concept.clone(),
                s.attribute.clone(),
                s.replicate,
            );
            if map.insert(key, s.score).is_some() {
                return Err(EvalError::DuplicateScore(format!(
                    "{} {}/{} replicate {}",
                    s.model, s.concept, s.attribute, s.replicate
                )));
            }
        }
        Ok(ScoreIndex {
            embedder: first.embedder.clone(),
            conditioning: first.conditioning.clone(),
            map,
        })
    }

    fn get(&self, model: &str, pair: &ConceptAttribute, replicate: u32) -> Option<f64> {
        self.map
            .get(&(
                model.to_string(),
                pair.concept.clone(),
                pair.attribute.clone(),
                replicate,
            ))
            .copied()
    }

    /// (left score, right score) for an aggregated comparison.
    fn join(&self, a: &AggregatedComparison) -> Option<(f64, f64)> {
        Some((
            self.get(a.model_left.as_str(), &a.pair, a.replicate)?,
            self.get(a.model_right.as_str(), &a.pair, a.right_replicate)?,
        ))
    }
}

/// Fraction of decisive human comparisons whose higher-scored set is the
/// one humans judged more diverse. Scores must come from one autorater.
pub fn autorater_accuracy(
    human: &[AggregatedComparison],
    scores: &[ScoreRecord],
    min_gap: Option<u32>,
) -> Result<AccuracyReport, EvalError> {
    let index = ScoreIndex::build(scores)?;
    let stratum = Stratum::from_min_gap(min_gap);
    let mut rep = AccuracyReport {
        embedder_name: index.embedder.clone(),
        conditioning: index.conditioning.clone(),
        stratum,
        accuracy: 0.0,
        n_pairs: 0,
        n_correct: 0,
        n_excluded_equal: 0,
        n_excluded_unable: 0,
        n_excluded_gap: 0,
        n_score_ties: 0,
        n_unjoined: 0,
    };
    let mut joined_any = false;
    for a in human {
        let joined = index.join(a);
        joined_any |= joined.is_some();
        match a.verdict {
            Verdict::EquallyDiverse => {
                rep.n_excluded_equal += 1;
                continue;
            }
            Verdict::UnableToAnswer => {
                rep.n_excluded_unable += 1;
                continue;
            }
            _ => {}
        }
        let Some((sl, sr)) = joined else {
            rep.n_unjoined += 1;
            continue;
        };
        if !stratum.admits(a.modal_gap) {
            rep.n_excluded_gap += 1;
            continue;
        }
        rep.n_pairs += 1;
        if sl == sr {
            rep.n_score_ties += 1;
        } else if (sl > sr) == (a.verdict == Verdict::LeftMoreDiverse) {
            rep.n_correct += 1;
        }
    }
    if !joined_any {
        return Err(EvalError::JoinFailure);
    }
    if rep.n_pairs == 0 {
        return Err(EvalError::EmptyStratum(stratum));
    }
    rep.accuracy = rep.n_correct as f64 / rep.n_pairs as f64;
    Ok(rep)
}

/// Splits a score file into one group per (embedder, conditioning), in
/// first-seen order.
pub fn split_by_autorater(scores: &[ScoreRecord]) -> Vec<Vec<ScoreRecord>> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<ScoreRecord>> = BTreeMap::new();
    for s in scores {
        let key = (s.embedder.clone(), s.conditioning.label());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(s.clone());
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).unwrap_or_default())
        .collect()
}

/// [`autorater_accuracy`] for every autorater present in `scores`.
pub fn accuracy_by_autorater(
    human: &[AggregatedComparison],
    scores: &[ScoreRecord],
    min_gap: Option<u32>,
) -> Vec<Result<AccuracyReport, EvalError>> {
    split_by_autorater(scores)
        .par_iter()
        .map(|group| autorater_accuracy(human, group, min_gap))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub embedder_name: String,
    pub conditioning: ConditioningSpec,
    pub auc: f64,
    pub n_equal: usize,
    pub n_unequal: usize,
}

/// How well the absolute score difference separates comparisons humans
/// judged unequal (positive class) from equal ones.
pub fn equal_detection_auc(
    human: &[AggregatedComparison],
    scores: &[ScoreRecord],
) -> Result<AucReport, EvalError> {
    let index = ScoreIndex::build(scores)?;
    let mut points = Vec::new();
    for a in human {
        if a.verdict == Verdict::UnableToAnswer {
            continue;
        }
        if let Some((l, r)) = index.join(a) {
            points.push(((l - r).abs(), a.verdict != Verdict::EquallyDiverse));
        }
    }
    if points.is_empty() {
        return Err(EvalError::JoinFailure);
    }
    let auc = roc_auc(&points)?;
    let n_unequal = points.iter().filter(|p| p.1).count();
    Ok(AucReport {
        embedder_name: index.embedder,
        conditioning: index.conditioning,
        auc,
        n_equal: points.len() - n_unequal,
        n_unequal,
    })
}

/// Kind of golden subset a model name stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetTag {
    /// Only the attribute varies.
    I,
    /// Only the concept varies.
    Ii,
    /// Both vary.
    Iii,
}

impl SubsetTag {
    /// Parses `i`, `ii`, `iii`, optionally prefixed with `golden:`,
    /// `golden-` or `golden_`.
    pub fn parse(name: &str) -> Result<Self, EvalError> {
        let lower = name.trim().to_lowercase();
        let bare = ["golden:", "golden-", "golden_"]
            .iter()
            .find_map(|p| lower.strip_prefix(p))
            .unwrap_or(&lower);
        match bare {
            "i" => Ok(SubsetTag::I),
            "ii" => Ok(SubsetTag::Ii),
            "iii" => Ok(SubsetTag::Iii),
            _ => Err(EvalError::UnknownSubsetTag(name.to_string())),
        }
    }

    pub fn golden_label(self) -> GoldenLabel {
        match self {
            SubsetTag::Ii => GoldenLabel::NonDiverse,
            SubsetTag::I | SubsetTag::Iii => GoldenLabel::Diverse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    FirstMoreDiverse,
    Equal,
}

/// Expected relation between two golden subsets; `pair: None` applies to
/// every concept-attribute pair without a more specific entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenExpectation {
    #[serde(default)]
    pub pair: Option<ConceptAttribute>,
    pub subset_a: SubsetTag,
    pub subset_b: SubsetTag,
    pub relation: Relation,
}

/// `(i) > (ii)`, `(iii) > (ii)`, `(ii) = (iii)` for every pair. The last two
/// contradict each other; pass an explicit table to pick one.
pub fn default_expectations() -> Vec<GoldenExpectation> {
    let e = |a, b, relation| GoldenExpectation {
        pair: None,
        subset_a: a,
        subset_b: b,
        relation,
    };
    vec![
        e(SubsetTag::I, SubsetTag::Ii, Relation::FirstMoreDiverse),
        e(SubsetTag::Iii, SubsetTag::Ii, Relation::FirstMoreDiverse),
        e(SubsetTag::Ii, SubsetTag::Iii, Relation::Equal),
    ]
}

/// Every expectation that applies to tags `(left, right)` on `pair`,
/// oriented as the verdict that would satisfy it. Pair-specific entries
/// shadow wildcards.
fn expected_verdicts(
    expectations: &[GoldenExpectation],
    pair: &ConceptAttribute,
    left: SubsetTag,
    right: SubsetTag,
) -> Vec<Verdict> {
    let orient = |e: &GoldenExpectation| -> Option<Verdict> {
        match e.relation {
            Relation::Equal
                if (e.subset_a, e.subset_b) == (left, right)
                    || (e.subset_a, e.subset_b) == (right, left) =>
            {
                Some(Verdict::EquallyDiverse)
            }
            Relation::FirstMoreDiverse if (e.subset_a, e.subset_b) == (left, right) => {
                Some(Verdict::LeftMoreDiverse)
            }
            Relation::FirstMoreDiverse if (e.subset_a, e.subset_b) == (right, left) => {
                Some(Verdict::RightMoreDiverse)
            }
            _ => None,
        }
    };
    let specific: Vec<Verdict> = expectations
        .iter()
        .filter(|e| e.pair.as_ref() == Some(pair))
        .filter_map(orient)
        .collect();
    if !specific.is_empty() {
        return specific;
    }
    expectations
        .iter()
        .filter(|e| e.pair.is_none())
        .filter_map(orient)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRow {
    pub template: Option<TemplateVariant>,
    pub set_size: u32,
    pub n: usize,
    pub n_matched: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenReport {
    pub rows: Vec<GoldenRow>,
    /// Comparisons for which no expectation applied.
    pub n_without_expectation: usize,
    /// Comparisons with more than one applicable, conflicting expectation.
    pub n_conflicting: usize,
}

/// Per-rater agreement with the expectation table, grouped by template
/// variant and set size. Every model name must be a subset tag.
pub fn golden_validate(
    records: &[RatingRecord],
    expectations: &[GoldenExpectation],
) -> Result<GoldenReport, EvalError> {
    let mut groups: BTreeMap<(Option<TemplateVariant>, u32), (usize, usize)> = BTreeMap::new();
    let (mut n_without, mut n_conflicting) = (0, 0);
    for r in records.iter().map(RatingRecord::canonical) {
        let left = SubsetTag::parse(r.model_left.as_str())?;
        let right = SubsetTag::parse(r.model_right.as_str())?;
        let expected = expected_verdicts(expectations, &r.pair, left, right);
        let Some(&want) = expected.first() else {
            n_without += 1;
            continue;
        };
        if expected.iter().any(|v| *v != want) {
            n_conflicting += 1;
            continue;
        }
        let g = groups.entry((r.template, r.set_size())).or_default();
        g.0 += 1;
        if r.verdict == want {
            g.1 += 1;
        }
    }
    Ok(GoldenReport {
        rows: groups
            .into_iter()
            .map(|((template, set_size), (n, n_matched))| GoldenRow {
                template,
                set_size,
                n,
                n_matched,
                accuracy: n_matched as f64 / n as f64,
            })
            .collect(),
        n_without_expectation: n_without,
        n_conflicting,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenScoreReport {
    pub embedder_name: String,
    pub conditioning: ConditioningSpec,
    pub n: usize,
    pub n_matched: usize,
    pub accuracy: Option<f64>,
    /// Equal-relation expectations are not scored for autoraters.
    pub n_skipped_equal: usize,
}

/// Autorater version of [`golden_validate`]: for each strict expectation,
/// the first subset's set must score higher on the same pair and replicate.
pub fn golden_validate_scores(
    scores: &[ScoreRecord],
    expectations: &[GoldenExpectation],
) -> Result<GoldenScoreReport, EvalError> {
    let index = ScoreIndex::build(scores)?;
    // (concept, attribute, replicate) -> tag -> score
    let mut cells: BTreeMap<(String, String, u32), BTreeMap<SubsetTag, f64>> = BTreeMap::new();
    for ((model, concept, attribute, replicate), s) in &index.map {
        let tag = SubsetTag::parse(model)?;
        cells
            .entry((concept.clone(), attribute.clone(), *replicate))
            .or_default()
            .insert(tag, *s);
    }
    let (mut n, mut n_matched, mut n_skipped_equal) = (0, 0, 0);
    for ((concept, attribute, _), tags) in &cells {
        let pair = ConceptAttribute::new(concept, attribute)
            .map_err(|e| EvalError::UnknownSubsetTag(e.to_string()))?;
        let tag_list: Vec<SubsetTag> = tags.keys().copied().collect();
        for (i, &a) in tag_list.iter().enumerate() {
            for &b in &tag_list[i + 1..] {
                for want in expected_verdicts(expectations, &pair, a, b) {
                    let (sa, sb) = (tags[&a], tags[&b]);
                    match want {
                        Verdict::EquallyDiverse => n_skipped_equal += 1,
                        Verdict::LeftMoreDiverse => {
                            n += 1;
                            n_matched += usize::from(sa > sb);
                        }
                        _ => {
                            n += 1;
                            n_matched += usize::from(sb > sa);
                        }
                    }
                }
            }
        }
    }
    Ok(GoldenScoreReport {
        embedder_name: index.embedder,
        conditioning: index.conditioning,
        n,
        n_matched,
        accuracy: (n > 0).then(|| n_matched as f64 / n as f64),
        n_skipped_equal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldenLabel {
    Diverse,
    NonDiverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub label: GoldenLabel,
    pub set_size: u32,
    /// `bins[c - 1]` counts answers equal to `c`.
    pub bins: Vec<u64>,
    pub n: u64,
    /// Most frequent count; ties go to the smaller count.
    pub mode: Option<u32>,
}

/// Histogram of the per-side counts given to sets whose subset tag carries
/// `label`. Sides without a parseable tag or without a count are skipped.
pub fn count_distribution(records: &[RatingRecord], label: GoldenLabel) -> CountHistogram {
    let set_size = records
        .iter()
        .map(RatingRecord::set_size)
        .max()
        .unwrap_or(0);
    let mut bins = vec![0u64; set_size as usize];
    for r in records.iter().map(RatingRecord::canonical) {
        for (model, count) in [
            (&r.model_left, r.count_left),
            (&r.model_right, r.count_right),
        ] {
            let labeled = SubsetTag::parse(model.as_str()).is_ok_and(|t| t.golden_label() == label);
            if let (true, Some(c)) = (labeled, count) {
                if c >= 1 && c <= set_size {
                    bins[c as usize - 1] += 1;
                }
            }
        }
    }
    let n = bins.iter().sum();
    let best = bins.iter().copied().max().unwrap_or(0);
    let mode = (best > 0).then(|| bins.iter().position(|&b| b == best).unwrap() as u32 + 1);
    CountHistogram {
        label,
        set_size,
        bins,
        n,
        mode,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SetRef;
    use proptest::prelude::*;

    use Verdict::{
        EquallyDiverse as E, LeftMoreDiverse as L, RightMoreDiverse as R, UnableToAnswer as U,
    };

    fn pair() -> ConceptAttribute {
        ConceptAttribute::new("apple", "color").unwrap()
    }

    fn cmp(i: u32, v: Verdict, gap: Option<u32>) -> AggregatedComparison {
        AggregatedComparison {
            task_id: format!("t{i}"),
            pair: pair(),
            model_left: "a".into(),
            model_right: "b".into(),
            replicate: i,
            right_replicate: i,
            verdict: v,
            n_ratings: 5,
            modal_count: None,
            modal_gap: gap,
        }
    }

    fn score(model: &str, replicate: u32, s: f64) -> ScoreRecord {
        ScoreRecord {
            model: model.into(),
            concept: "apple".into(),
            attribute: "color".into(),
            replicate,
            embedder: "e".into(),
            conditioning: ConditioningSpec::none(),
            score: s,
        }
    }

    fn scored(pairs: &[(f64, f64)]) -> Vec<ScoreRecord> {
        pairs
            .iter()
            .enumerate()
            .flat_map(|(i, &(l, r))| [score("a", i as u32, l), score("b", i as u32, r)])
            .collect()
    }

    #[test]
    fn accuracy_examples() {
        let rep = autorater_accuracy(
            &[cmp(0, L, None), cmp(1, R, None)],
            &scored(&[(2.0, 1.0), (1.5, 1.8)]),
            None,
        )
        .unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.stratum, Stratum::All);

        let rep = autorater_accuracy(&[cmp(0, L, None)], &scored(&[(1.0, 1.0)]), None).unwrap();
        assert_eq!(rep.accuracy, 0.0);
        assert_eq!(rep.n_score_ties, 1);

        let rep = autorater_accuracy(
            &[cmp(0, L, None), cmp(1, R, None), cmp(2, E, None)],
            &scored(&[(2.0, 1.0), (2.0, 1.0), (9.0, 1.0)]),
            None,
        )
        .unwrap();
        assert_eq!(rep.accuracy, 0.5);
        assert_eq!((rep.n_pairs, rep.n_excluded_equal), (2, 1));
    }

    #[test]
    fn accuracy_gap_stratum() {
        let human = [
            cmp(0, L, Some(5)),
            cmp(1, R, Some(2)),
            cmp(2, L, Some(4)),
            cmp(3, L, None),
        ];
        let scores = scored(&[(2.0, 1.0), (2.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let rep = autorater_accuracy(&human, &scores, Some(4)).unwrap();
        assert_eq!(rep.stratum, Stratum::GapGreaterThan(4));
        assert_eq!((rep.n_pairs, rep.n_excluded_gap, rep.accuracy), (1, 3, 1.0));

        let all = autorater_accuracy(&human, &scores, None).unwrap();
        assert_eq!(autorater_accuracy(&human, &scores, Some(0)).unwrap(), all);
        assert_eq!(all.n_pairs, 4);

        assert!(matches!(
            autorater_accuracy(&human, &scores, Some(8)),
            Err(EvalError::EmptyStratum(Stratum::GapGreaterThan(8)))
        ));
    }

    #[test]
    fn accuracy_join_failure_and_unable() {
        let scores = vec![score("x", 0, 1.0), score("y", 0, 2.0)];
        assert_eq!(
            autorater_accuracy(&[cmp(0, L, None)], &scores, None),
            Err(EvalError::JoinFailure)
        );
        let rep = autorater_accuracy(
            &[cmp(0, L, None), cmp(1, U, None), cmp(5, L, None)],
            &scored(&[(2.0, 1.0), (1.0, 1.0)]),
            None,
        )
        .unwrap();
        assert_eq!(
            (rep.n_excluded_unable, rep.n_unjoined, rep.n_pairs),
            (1, 1, 1)
        );
    }

    #[test]
    fn per_autorater_split() {
        let mut s = scored(&[(2.0, 1.0)]);
        let mut other = scored(&[(1.0, 2.0)]);
        other.iter_mut().for_each(|r| r.embedder = "f".into());
        s.extend(other);
        let reps = accuracy_by_autorater(&[cmp(0, L, None)], &s, None);
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[0].as_ref().unwrap().accuracy, 1.0);
        assert_eq!(reps[1].as_ref().unwrap().accuracy, 0.0);
        assert!(matches!(
            autorater_accuracy(&[cmp(0, L, None)], &s, None),
            Err(EvalError::MixedAutoraters(_))
        ));
    }

    fn auc_of(equals: &[f64], unequals: &[f64]) -> Result<f64, EvalError> {
        let mut human = Vec::new();
        let mut pairs = Vec::new();
        for (i, d) in equals.iter().enumerate() {
            human.push(cmp(i as u32, E, None));
            pairs.push((1.0 + d, 1.0));
        }
        for (j, d) in unequals.iter().enumerate() {
            human.push(cmp(
                (equals.len() + j) as u32,
                if j % 2 == 0 { L } else { R },
                None,
            ));
            pairs.push((1.0, 1.0 + d));
        }
        equal_detection_auc(&human, &scored(&pairs)).map(|r| r.auc)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_of(&[0.01, 0.02], &[0.9, 1.1]).unwrap(), 1.0);
        assert_eq!(auc_of(&[0.5, 0.5], &[0.5]).unwrap(), 0.5);
        assert!((auc_of(&[0.5], &[0.4, 0.6]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(auc_of(&[], &[0.3]), Err(EvalError::OneClassOnly));
    }

    fn golden(
        left: &str,
        right: &str,
        v: Verdict,
        template: Option<TemplateVariant>,
        size: usize,
    ) -> RatingRecord {
        let set = |m: &str| SetRef {
            model: m.into(),
            pair: pair(),
            replicate: 0,
            image_ids: (0..size).map(|i| format!("{m}{i}")).collect(),
        };
        RatingRecord {
            task_id: format!("{left}{right}"),
            study_id: "g".into(),
            pair: pair(),
            model_left: left.into(),
            model_right: right.into(),
            set_left: set(left),
            set_right: set(right),
            rater_id: "r".into(),
            count_left: None,
            count_right: None,
            verdict: v,
            elapsed_ms: 0,
            displayed_swap: false,
            template,
        }
    }

    #[test]
    fn subset_tags() {
        assert_eq!(SubsetTag::parse("golden:iii").unwrap(), SubsetTag::Iii);
        assert_eq!(SubsetTag::parse("II").unwrap(), SubsetTag::Ii);
        assert_eq!(SubsetTag::parse("golden-i").unwrap(), SubsetTag::I);
        assert!(matches!(
            SubsetTag::parse("iv"),
            Err(EvalError::UnknownSubsetTag(_))
        ));
    }

    #[test]
    fn golden_examples() {
        let t = Some(TemplateVariant::Count);
        let recs = vec![
            golden("i", "ii", L, t, 8),
            golden("ii", "iii", R, t, 8),
            golden("ii", "i", R, t, 8),
        ];
        let strict: Vec<GoldenExpectation> = default_expectations().into_iter().take(2).collect();
        let rep = golden_validate(&recs, &strict).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].accuracy, 1.0);

        let recs = vec![golden("i", "ii", E, t, 8)];
        assert_eq!(
            golden_validate(&recs, &strict).unwrap().rows[0].accuracy,
            0.0
        );

        // The default table disagrees with itself on (ii, iii).
        let rep =
            golden_validate(&[golden("ii", "iii", R, t, 8)], &default_expectations()).unwrap();
        assert_eq!(rep.n_conflicting, 1);

        assert!(matches!(
            golden_validate(&[golden("x", "ii", L, t, 8)], &strict),
            Err(EvalError::UnknownSubsetTag(_))
        ));
    }

    #[test]
    fn golden_groups_by_template_and_size() {
        let recs = vec![
            golden("i", "ii", L, Some(TemplateVariant::Aspect), 4),
            golden("i", "ii", R, Some(TemplateVariant::Aspect), 8),
            golden("i", "ii", L, Some(TemplateVariant::WithoutAspect), 8),
            golden("i", "ii", L, None, 8),
        ];
        let rep = golden_validate(&recs, &default_expectations()).unwrap();
        let keys: Vec<(Option<TemplateVariant>, u32, f64)> = rep
            .rows
            .iter()
            .map(|r| (r.template, r.set_size, r.accuracy))
            .collect();
        assert_eq!(
            keys,
            vec![
                (None, 8, 1.0),
                (Some(TemplateVariant::WithoutAspect), 8, 1.0),
                (Some(TemplateVariant::Aspect), 4, 1.0),
                (Some(TemplateVariant::Aspect), 8, 0.0),
            ]
        );
    }

    #[test]
    fn golden_pair_specific_entries_shadow_wildcards() {
        let mut exp = default_expectations();
        exp.push(GoldenExpectation {
            pair: Some(pair()),
            subset_a: SubsetTag::Ii,
            subset_b: SubsetTag::I,
            relation: Relation::FirstMoreDiverse,
        });
        let rep = golden_validate(&[golden("ii", "i", L, None, 8)], &exp).unwrap();
        assert_eq!(rep.rows[0].accuracy, 1.0);
    }

    #[test]
    fn golden_scores() {
        let s = vec![
            score("golden:i", 0, 3.0),
            score("golden:ii", 0, 1.0),
            score("golden:iii", 0, 2.5),
        ];
        let rep = golden_validate_scores(&s, &default_expectations()).unwrap();
        assert_eq!((rep.n, rep.n_matched, rep.n_skipped_equal), (2, 2, 1));
        assert_eq!(rep.accuracy, Some(1.0));
    }

    #[test]
    fn count_histograms() {
        let with_counts = |l: &str, r: &str, cl, cr| {
            let mut g = golden(l, r, L, None, 8);
            g.count_left = Some(cl);
            g.count_right = Some(cr);
            g
        };
        let diverse = vec![with_counts("i", "ii", 8, 1), with_counts("iii", "ii", 8, 1)];
        let h = count_distribution(&diverse, GoldenLabel::Diverse);
        assert_eq!((h.mode, h.n, h.bins.len()), (Some(8), 2, 8));

        let nd = vec![
            with_counts("i", "ii", 8, 1),
            with_counts("i", "ii", 8, 1),
            with_counts("i", "ii", 8, 1),
            with_counts("i", "ii", 8, 2),
        ];
        assert_eq!(
            count_distribution(&nd, GoldenLabel::NonDiverse).mode,
            Some(1)
        );

        let h = count_distribution(&[], GoldenLabel::Diverse);
        assert!(h.bins.is_empty());
        assert_eq!(h.mode, None);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_side_swap(vals in proptest::collection::vec((0usize..3, 0.0f64..5.0, 0.0f64..5.0), 2..30)) {
            let human: Vec<AggregatedComparison> = vals.iter().enumerate().map(|(i, (v, _, _))| cmp(i as u32, [L, R, E][*v], None)).collect();
            let pairs: Vec<(f64, f64)> = vals.iter().map(|(_, l, r)| (*l, *r)).collect();
            let swapped_human: Vec<AggregatedComparison> = human.iter().map(|a| {
                let mut b = a.clone();
                b.verdict = b.verdict.mirrored();
                b
            }).collect();
            let swapped_pairs: Vec<(f64, f64)> = pairs.iter().map(|&(l, r)| (r, l)).collect();
            let a = equal_detection_auc(&human, &scored(&pairs)).map(|r| r.auc);
            let b = equal_detection_auc(&swapped_human, &scored(&swapped_pairs)).map(|r| r.auc);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn all_equal_table_with_equal_verdicts_is_perfect(tags in proptest::collection::vec((0usize..3, 0usize..3), 1..20)) {
            let names = ["i", "ii", "iii"];
            let table: Vec<GoldenExpectation> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| GoldenExpectation {
                pair: None,
                subset_a: [SubsetTag::I, SubsetTag::Ii, SubsetTag::Iii][a],
                subset_b: [SubsetTag::I, SubsetTag::Ii, SubsetTag::Iii][b],
                relation: Relation::Equal,
            }).collect();
            let recs: Vec<RatingRecord> = tags.iter().map(|&(a, b)| golden(names[a], names[b], E, None, 8)).collect();
            let rep = golden_validate(&recs, &table).unwrap();
            prop_assert!(rep.rows.iter().all(|r| r.accuracy == 1.0));
        }
    }
}
