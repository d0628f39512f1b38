//! Shared vocabulary: concept/attribute pairs, value spaces, image-set
//! references and the finite-value coverage predicate.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("{field} must be non-empty")]
    Empty { field: &'static str },
    #[error("duplicate value {0:?} in value space")]
    DuplicateValue(String),
    #[error("duplicate image id {0:?} in set")]
    DuplicateImage(String),
    #[error("label {0:?} is not in the attribute value space")]
    UnknownLabel(String),
    #[error("image set is for {set} but value space is for {space}")]
    MismatchedPair { set: String, space: String },
    #[error("set size {size} is not one of the configured sizes {allowed:?}")]
    BadSetSize { size: usize, allowed: Vec<usize> },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Trim and case-fold a value for comparison.
pub fn normalize_value(v: &str) -> String {
    v.trim().to_lowercase()
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    FoodAndDrink,
    Nature,
    HumanMade,
    #[default]
    Other,
}

/// A (concept, attribute) pair; the unit of evaluation.
///
/// Equality, ordering and hashing use only `(concept, attribute)`, the
/// uniqueness key within a prompt set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptAttribute {
    pub concept: String,
    pub attribute: String,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub prompt_text: String,
}

impl ConceptAttribute {
    pub fn new(concept: &str, attribute: &str) -> Result<Self, DomainError> {
        let concept = concept.trim();
        let attribute = attribute.trim();
        if concept.is_empty() {
            return Err(DomainError::Empty { field: "concept" });
        }
        if attribute.is_empty() {
            return Err(DomainError::Empty { field: "attribute" });
        }
        Ok(Self {
            concept: concept.to_string(),
            attribute: attribute.to_string(),
            category: Category::Other,
            prompt_text: format!("An image of {concept}"),
        })
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt_text = prompt.into();
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.concept.trim().is_empty() {
            return Err(DomainError::Empty { field: "concept" });
        }
        if self.attribute.trim().is_empty() {
            return Err(DomainError::Empty { field: "attribute" });
        }
        Ok(())
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.concept, &self.attribute)
    }

    /// Directory name used by the corpus layout, `<concept>__<attribute>`.
    pub fn dir_name(&self) -> String {
        format!("{}__{}", self.concept, self.attribute)
    }
}

impl PartialEq for ConceptAttribute {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for ConceptAttribute {}

impl PartialOrd for ConceptAttribute {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConceptAttribute {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl std::hash::Hash for ConceptAttribute {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl fmt::Display for ConceptAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.concept, self.attribute)
    }
}

/// The finite set of values an attribute can take for a concept.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeValueSpace {
    pair: ConceptAttribute,
    values: BTreeSet<String>,
}

impl AttributeValueSpace {
    pub fn new<I, S>(pair: ConceptAttribute, values: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for v in values {
            let norm = normalize_value(v.as_ref());
            if norm.is_empty() {
                return Err(DomainError::Empty { field: "value" });
            }
            if !set.insert(norm) {
                return Err(DomainError::DuplicateValue(v.as_ref().to_string()));
            }
        }
        if set.is_empty() {
            return Err(DomainError::Empty { field: "values" });
        }
        Ok(Self { pair, values: set })
    }

    pub fn pair(&self) -> &ConceptAttribute {
        &self.pair
    }

    /// Normalized values.
    pub fn values(&self) -> &BTreeSet<String> {
        &self.values
    }

    pub fn contains(&self, label: &str) -> bool {
        self.values.contains(&normalize_value(label))
    }
}

/// Attribute value labels for the images of one set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub pair: ConceptAttribute,
    pub labels: Vec<String>,
}

impl LabeledImageSet {
    pub fn new<I, S>(pair: ConceptAttribute, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            pair,
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Checks that every label belongs to `space`.
    pub fn validate_against(&self, space: &AttributeValueSpace) -> Result<(), DomainError> {
        check_pair(self, space)?;
        match self.labels.iter().find(|l| !space.contains(l)) {
            Some(l) => Err(DomainError::UnknownLabel(l.clone())),
            None => Ok(()),
        }
    }
}

fn check_pair(set: &LabeledImageSet, space: &AttributeValueSpace) -> Result<(), DomainError> {
    if set.pair != space.pair {
        return Err(DomainError::MismatchedPair {
            set: set.pair.to_string(),
            space: space.pair.to_string(),
        });
    }
    Ok(())
}

fn covered(set: &LabeledImageSet, space: &AttributeValueSpace) -> usize {
    let seen: BTreeSet<String> = set.labels.iter().map(|l| normalize_value(l)).collect();
    space.values.iter().filter(|v| seen.contains(*v)).count()
}

/// True iff every value of the space appears at least once in the set.
pub fn is_perfectly_diverse(
    set: &LabeledImageSet,
    space: &AttributeValueSpace,
) -> Result<bool, DomainError> {
    check_pair(set, space)?;
    Ok(covered(set, space) == space.values.len())
}

/// Fraction of the value space covered by the set's labels.
pub fn coverage_fraction(
    set: &LabeledImageSet,
    space: &AttributeValueSpace,
) -> Result<f64, DomainError> {
    check_pair(set, space)?;
    Ok(covered(set, space) as f64 / space.values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Result<Self, DomainError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(DomainError::Empty { field: "model" });
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Set sizes accepted unless configured otherwise.
pub const DEFAULT_SET_SIZES: [usize; 2] = [4, 8];
pub const DEFAULT_SET_SIZE: usize = 8;

/// Protocol settings shared by the command line and the annotation
/// service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub alpha_level: f64,
    pub set_size: usize,
    pub raters_per_task: usize,
    pub replicates: u32,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha_level: 0.05,
            set_size: DEFAULT_SET_SIZE,
            raters_per_task: 5,
            replicates: 10,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(DomainError::BadConfig(format!(
                "alpha_level {} outside (0, 1)",
                self.alpha_level
            )));
        }
        if self.set_size == 0 {
            return Err(DomainError::BadConfig("set_size must be >= 1".into()));
        }
        if self.raters_per_task == 0 {
            return Err(DomainError::BadConfig(
                "raters_per_task must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Identifies one generated image set: a model's replicate for a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetRef {
    pub model: ModelId,
    pub pair: ConceptAttribute,
    pub replicate: u32,
    pub image_ids: Vec<String>,
}

impl SetRef {
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    /// Checks id uniqueness and that the size is one of `allowed_sizes`
    /// (any size when `allowed_sizes` is empty).
    pub fn validate(&self, allowed_sizes: &[usize]) -> Result<(), DomainError> {
        self.pair.validate()?;
        if self.model.0.trim().is_empty() {
            return Err(DomainError::Empty { field: "model" });
        }
        let mut seen = BTreeSet::new();
        for id in &self.image_ids {
            if !seen.insert(id.as_str()) {
                return Err(DomainError::DuplicateImage(id.clone()));
            }
        }
        if !allowed_sizes.is_empty() && !allowed_sizes.contains(&self.len()) {
            return Err(DomainError::BadSetSize {
                size: self.len(),
                allowed: allowed_sizes.to_vec(),
            });
        }
        Ok(())
    }
}

/// How right-hand replicates are matched to left-hand replicates when
/// building side-by-side comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "offset")]
pub enum PairingPolicy {
    /// Replicate i against replicate i.
    #[default]
    SameIndex,
    /// Replicate i against replicate (i + offset) mod replicates.
    Rotated(u32),
}

impl PairingPolicy {
    pub fn right_replicate(self, left: u32, replicates: u32) -> u32 {
        match self {
            PairingPolicy::SameIndex => left,
            PairingPolicy::Rotated(off) => (left + off) % replicates.max(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn run_config_defaults_and_bounds() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.set_size, c.raters_per_task, c.replicates), (8, 5, 10));
        assert!(c.validate().is_ok());
        for bad in [
            r#"{"alpha_level": 1.0}"#,
            r#"{"alpha_level": 0}"#,
            r#"{"set_size": 0}"#,
            r#"{"raters_per_task": 0}"#,
        ] {
            let c: RunConfig = serde_json::from_str(bad).unwrap();
            assert!(
                matches!(c.validate(), Err(DomainError::BadConfig(_))),
                "{bad}"
            );
        }
    }

    fn apple_color() -> ConceptAttribute {
        ConceptAttribute::new("apple", "color").unwrap()
    }

    fn space(values: &[&str]) -> AttributeValueSpace {
        AttributeValueSpace::new(apple_color(), values.iter().copied()).unwrap()
    }

    #[test]
    fn perfect_diversity_examples() {
        let s = space(&["red", "green", "blue"]);
        let set = LabeledImageSet::new(apple_color(), ["red", "green", "blue"]);
        assert!(is_perfectly_diverse(&set, &s).unwrap());

        let s = space(&["red", "green"]);
        let set = LabeledImageSet::new(apple_color(), ["red", "red", "red"]);
        assert!(!is_perfectly_diverse(&set, &s).unwrap());

        let set = LabeledImageSet::new(apple_color(), ["Red", "GREEN"]);
        assert!(is_perfectly_diverse(&set, &s).unwrap());
    }

    #[test]
    fn coverage_examples() {
        let s = space(&["red", "green"]);
        let set = LabeledImageSet::new(apple_color(), ["red", "red"]);
        assert_eq!(coverage_fraction(&set, &s).unwrap(), 0.5);
        let set = LabeledImageSet::new(apple_color(), ["red", "green", "green"]);
        assert_eq!(coverage_fraction(&set, &s).unwrap(), 1.0);

        let s = space(&["red"]);
        let set = LabeledImageSet::new(apple_color(), Vec::<String>::new());
        assert_eq!(coverage_fraction(&set, &s).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_pair_is_an_error() {
        let s = space(&["red"]);
        let other = ConceptAttribute::new("pear", "color").unwrap();
        let set = LabeledImageSet::new(other, ["red"]);
        assert!(matches!(
            is_perfectly_diverse(&set, &s),
            Err(DomainError::MismatchedPair { .. })
        ));
        assert!(matches!(
            coverage_fraction(&set, &s),
            Err(DomainError::MismatchedPair { .. })
        ));
    }

    #[test]
    fn value_space_rejects_casefold_duplicates_and_empties() {
        assert!(matches!(
            AttributeValueSpace::new(apple_color(), ["Red", "red "]),
            Err(DomainError::DuplicateValue(_))
        ));
        assert!(AttributeValueSpace::new(apple_color(), Vec::<&str>::new()).is_err());
        assert!(AttributeValueSpace::new(apple_color(), ["  "]).is_err());
    }

    #[test]
    fn pair_rejects_blank_fields() {
        assert!(ConceptAttribute::new(" ", "color").is_err());
        assert!(ConceptAttribute::new("apple", "").is_err());
    }

    #[test]
    fn labels_outside_space_are_rejected() {
        let s = space(&["red", "green"]);
        let set = LabeledImageSet::new(apple_color(), ["red", "purple"]);
        assert_eq!(
            set.validate_against(&s),
            Err(DomainError::UnknownLabel("purple".into()))
        );
    }

    #[test]
    fn set_ref_validation() {
        let mut r = SetRef {
            model: "m".into(),
            pair: apple_color(),
            replicate: 0,
            image_ids: (0..8).map(|i| format!("img{i}")).collect(),
        };
        assert!(r.validate(&DEFAULT_SET_SIZES).is_ok());
        r.image_ids.pop();
        assert!(matches!(
            r.validate(&DEFAULT_SET_SIZES),
            Err(DomainError::BadSetSize { size: 7, .. })
        ));
        assert!(r.validate(&[]).is_ok());
        r.image_ids.push("img0".into());
        assert!(matches!(
            r.validate(&[]),
            Err(DomainError::DuplicateImage(_))
        ));
    }

    #[test]
    fn pairing_policy() {
        assert_eq!(PairingPolicy::SameIndex.right_replicate(3, 10), 3);
        assert_eq!(PairingPolicy::Rotated(2).right_replicate(9, 10), 1);
    }

    proptest! {
        #[test]
        fn perfect_iff_full_coverage(
            values in proptest::collection::btree_set("[a-e]", 1..5),
            labels in proptest::collection::vec("[a-g]", 0..10),
        ) {
            let s = AttributeValueSpace::new(apple_color(), values.iter()).unwrap();
            let set = LabeledImageSet::new(apple_color(), labels.clone());
            let perfect = is_perfectly_diverse(&set, &s).unwrap();
            let cov = coverage_fraction(&set, &s).unwrap();
            prop_assert_eq!(perfect, cov == 1.0);
        }

        #[test]
        fn coverage_monotone_under_additions(
            values in proptest::collection::btree_set("[a-e]", 1..5),
            labels in proptest::collection::vec("[a-g]", 0..10),
            extra in "[a-g]",
        ) {
            let s = AttributeValueSpace::new(apple_color(), values.iter()).unwrap();
            let before = coverage_fraction(&LabeledImageSet::new(apple_color(), labels.clone()), &s).unwrap();
            let mut more = labels;
            more.push(extra);
            let after = coverage_fraction(&LabeledImageSet::new(apple_color(), more), &s).unwrap();
            prop_assert!(after >= before);
        }
    }
}
