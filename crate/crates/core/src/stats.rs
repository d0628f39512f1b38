//! Hypothesis tests and ROC AUC used by ranking and autorater evaluation.
//!
//! - exact two-sided binomial test ("outcomes at most as likely" convention)
//! - Wilcoxon signed-rank test, exact for up to 20 nonzero differences and
//!   normal-approximate (continuity and tie corrected) above that
//! - Mann-Whitney ROC AUC with average ranks for ties

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest number of nonzero differences for which the Wilcoxon null
/// distribution is computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Relative slack when deciding that an outcome is "at most as likely" as
/// the observed one.
const LIKELIHOOD_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("all differences are zero")]
    AllZero,
    #[error("need at least one positive and one negative label")]
    OneClassOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    BinomialExact,
    WilcoxonExact,
    WilcoxonNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Trials actually used, after dropping ties or zeros.
    pub n_effective: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "=")]
    NotSignificant,
}

impl Outcome {
    pub fn symbol(self) -> char {
        match self {
            Outcome::Greater => '>',
            Outcome::Less => '<',
            Outcome::NotSignificant => '=',
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Outcome::Greater => Outcome::Less,
            Outcome::Less => Outcome::Greater,
            Outcome::NotSignificant => Outcome::NotSignificant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub outcome: Outcome,
    pub p_value: f64,
    pub alpha_level: f64,
}

/// Maps a test result and the observed direction to `>`, `<` or `=`.
///
/// `direction` is `Greater` when the row/first side won.
pub fn significance_from_test(
    t: &TestResult,
    direction: Ordering,
    alpha_level: f64,
) -> Significance {
    let outcome = if t.p_value < alpha_level {
        match direction {
            Ordering::Greater => Outcome::Greater,
            Ordering::Less => Outcome::Less,
            Ordering::Equal => Outcome::NotSignificant,
        }
    } else {
        Outcome::NotSignificant
    };
    Significance {
        outcome,
        p_value: t.p_value,
        alpha_level,
    }
}

fn ln_binom_pmf(i: u64, n: u64, p: f64) -> f64 {
    let ln_choose =
        ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0);
    let a = if i == 0 { 0.0 } else { i as f64 * p.ln() };
    let b = if i == n {
        0.0
    } else {
        (n - i) as f64 * (1.0 - p).ln()
    };
    ln_choose + a + b
}

/// Exact binomial coefficient, when it fits in a u128.
fn choose_exact(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c.checked_mul((n - j) as u128)? / (j as u128 + 1);
    }
    Some(c)
}

fn binom_pmf(i: u64, n: u64, p: f64) -> f64 {
    if n <= 120 {
        if let Some(c) = choose_exact(n, i) {
            return c as f64 * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
        }
    }
    ln_binom_pmf(i, n, p).exp()
}

/// Exact two-sided binomial test of `k` successes in `n` trials against
/// success probability `p0`.
///
/// The p-value sums the probability of every outcome no more likely than
/// the observed one. Likelihoods are compared in log space; the summed
/// masses use exact binomial coefficients where they fit.
pub fn binomial_two_sided(k: u64, n: u64, p0: f64) -> Result<TestResult, StatsError> {
    if n == 0 {
        return Err(StatsError::BadInput("n must be >= 1".into()));
    }
    if k > n {
        return Err(StatsError::BadInput(format!("k = {k} exceeds n = {n}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::BadInput(format!("p0 = {p0} must be in (0, 1)")));
    }
    let observed = ln_binom_pmf(k, n, p0);
    let cutoff = observed + LIKELIHOOD_SLACK.ln_1p();
    let p: f64 = (0..=n)
        .filter(|&i| ln_binom_pmf(i, n, p0) <= cutoff)
        .map(|i| binom_pmf(i, n, p0))
        .sum();
    Ok(TestResult {
        statistic: k as f64,
        p_value: p.min(1.0),
        method: TestMethod::BinomialExact,
        n_effective: n as usize,
    })
}

/// Average (mid) ranks, 1-based, of `values`. Ties share the mean of the
/// positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Sizes of groups of equal values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Wilcoxon signed-rank test on paired differences.
///
/// Exact zeros are dropped. `statistic` is W+, the rank sum of the positive
/// differences. With at most [`WILCOXON_EXACT_MAX`] remaining differences
/// the p-value comes from the exact null distribution of W+ over all sign
/// assignments, otherwise from the normal approximation.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult, StatsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::BadInput("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let m = nonzero.len();
    if m == 0 {
        return Err(StatsError::AllZero);
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let (p_value, method) = if m <= WILCOXON_EXACT_MAX {
        (wilcoxon_exact_p(&ranks, w_plus), TestMethod::WilcoxonExact)
    } else {
        (wilcoxon_normal_p(&abs, w_plus), TestMethod::WilcoxonNormal)
    };
    Ok(TestResult {
        statistic: w_plus,
        p_value,
        method,
        n_effective: m,
    })
}

/// Exact two-sided p-value. Average ranks are multiples of 1/2, so the null
/// distribution of 2·W+ is built over integers by counting sign
/// assignments subset-sum style.
fn wilcoxon_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w2 = (2.0 * w_plus).round() as usize;
    let upper: u64 = counts[w2..].iter().sum();
    let lower: u64 = counts[..=w2].iter().sum();
    let denom = (1u64 << ranks.len()) as f64;
    (2.0 * upper.min(lower) as f64 / denom).min(1.0)
}

fn wilcoxon_normal_p(abs: &[f64], w_plus: f64) -> f64 {
    let m = abs.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    let tie_adj: f64 = tie_groups(abs)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_adj;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// ROC AUC as the Mann-Whitney probability that a positive outranks a
/// negative, ties counting half.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64, StatsError> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(StatsError::BadInput("non-finite score".into()));
    }
    let n_pos = scores.iter().filter(|(_, l)| *l).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::OneClassOnly);
    }
    let values: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    let ranks = average_ranks(&values);
    let rank_sum: f64 = ranks
        .iter()
        .zip(scores)
        .filter(|(_, (_, l))| *l)
        .map(|(r, _)| r)
        .sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}
