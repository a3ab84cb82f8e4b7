//! Attributes, conjunctive rules, evidence and class priors.
//!
//! A rule base is read from a JSON document of the form
//!
//! ```text
//! {"attributes": ["F1", "F2", "F3"],
//!  "classes": ["x", "xbar"],
//!  "priors": {"x": 0.5, "xbar": 0.5},
//!  "rules": [{"id": "r1", "lhs": {"F1": true}, "marginals": {"x": 0.5, "xbar": 0.3}}]}
//! ```
//!
//! Each rule stores `p(lhs | class)` for every class it knows about. The
//! normalization constraint is not a rule; the constraint module appends it.
//! Evidence is a total assignment `{"F1": true, "F2": false, ...}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of class priors.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleBaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}` in attribute list")]
    DuplicateAttribute(String),
    #[error("rule `{rule}` mentions attribute `{attribute}` more than once")]
    DuplicateLiteral { rule: String, attribute: String },
    #[error("rule `{0}` has an empty left-hand side")]
    EmptyLhs(String),
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
    #[error("rule `{rule}` has marginal {value} for class `{class}` outside [0, 1]")]
    MarginalOutOfRange {
        rule: String,
        class: String,
        value: f64,
    },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("at least one attribute is required")]
    NoAttributes,
    #[error("missing prior for class `{0}`")]
    MissingPrior(String),
    #[error("prior for class `{class}` is invalid: {value}")]
    InvalidPrior { class: String, value: f64 },
    #[error("priors sum to {0}, expected 1")]
    PriorSum(f64),
    #[error("evidence assigns attribute `{0}` more than once")]
    DuplicateEvidence(String),
    #[error("evidence does not assign attribute `{0}`")]
    PartialEvidence(String),
    #[error("evidence has {got} values, attribute space has {expected}")]
    EvidenceLength { expected: usize, got: usize },
}

impl From<serde_json::Error> for RuleBaseError {
    fn from(err: serde_json::Error) -> Self {
        RuleBaseError::Syntax {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Ordered binary attributes `F1..Fn`. The position of a name is its bit
/// position for the lifetime of the space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl AttributeSpace {
    pub fn new<I, S>(names: I) -> Result<Self, RuleBaseError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(RuleBaseError::NoAttributes);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(RuleBaseError::DuplicateAttribute(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, attribute: usize) -> &str {
        &self.names[attribute]
    }

    pub fn position(&self, name: &str) -> Result<usize, RuleBaseError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| RuleBaseError::UnknownAttribute(name.to_string()))
    }
}

/// `F_attribute = polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub attribute: usize,
    pub polarity: bool,
}

impl Literal {
    pub fn new(attribute: usize, polarity: bool) -> Self {
        Self {
            attribute,
            polarity,
        }
    }
}

/// A conjunctive rule `lhs => class` carrying `p(lhs | class)` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    id: String,
    lhs: Vec<Literal>,
    marginals: BTreeMap<String, f64>,
}

impl Rule {
    /// Builds a rule; literals are sorted by attribute and validated.
    pub fn new(
        id: impl Into<String>,
        mut lhs: Vec<Literal>,
        marginals: BTreeMap<String, f64>,
    ) -> Result<Self, RuleBaseError> {
        let id = id.into();
        if lhs.is_empty() {
            return Err(RuleBaseError::EmptyLhs(id));
        }
        lhs.sort();
        for pair in lhs.windows(2) {
            if pair[0].attribute == pair[1].attribute {
                return Err(RuleBaseError::DuplicateLiteral {
                    rule: id,
                    attribute: format!("#{}", pair[0].attribute),
                });
            }
        }
        for (class, &value) in &marginals {
            if !(0.0..=1.0).contains(&value) {
                return Err(RuleBaseError::MarginalOutOfRange {
                    rule: id,
                    class: class.clone(),
                    value,
                });
            }
        }
        Ok(Self { id, lhs, marginals })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Literals sorted by attribute index.
    pub fn lhs(&self) -> &[Literal] {
        &self.lhs
    }

    pub fn marginals(&self) -> &BTreeMap<String, f64> {
        &self.marginals
    }

    pub fn marginal(&self, class: &str) -> Option<f64> {
        self.marginals.get(class).copied()
    }

    pub fn fires(&self, evidence: &Evidence) -> bool {
        self.lhs
            .iter()
            .all(|lit| evidence.value(lit.attribute) == lit.polarity)
    }

    fn max_attribute(&self) -> usize {
        self.lhs.last().map_or(0, |lit| lit.attribute)
    }
}

/// A total assignment of every attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Evidence {
    values: Vec<bool>,
}

impl Evidence {
    pub fn new(space: &AttributeSpace, values: Vec<bool>) -> Result<Self, RuleBaseError> {
        if values.len() != space.len() {
            return Err(RuleBaseError::EvidenceLength {
                expected: space.len(),
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn value(&self, attribute: usize) -> bool {
        self.values[attribute]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Values of the output attribute and their priors, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    classes: Vec<String>,
    priors: Vec<f64>,
}

impl ClassModel {
    pub fn new(classes: Vec<String>, priors: Vec<f64>) -> Result<Self, RuleBaseError> {
        if classes.len() < 2 {
            return Err(RuleBaseError::TooFewClasses(classes.len()));
        }
        let mut seen = HashSet::new();
        for class in &classes {
            if !seen.insert(class.as_str()) {
                return Err(RuleBaseError::DuplicateClass(class.clone()));
            }
        }
        assert_eq!(classes.len(), priors.len(), "one prior per class");
        for (class, &p) in classes.iter().zip(&priors) {
            if !p.is_finite() || p < 0.0 {
                return Err(RuleBaseError::InvalidPrior {
                    class: class.clone(),
                    value: p,
                });
            }
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(RuleBaseError::PriorSum(total));
        }
        Ok(Self { classes, priors })
    }

    /// Uniform priors over `classes`.
    pub fn uniform(classes: Vec<String>) -> Result<Self, RuleBaseError> {
        let p = 1.0 / classes.len().max(1) as f64;
        let priors = vec![p; classes.len()];
        // 1/k summed k times may miss 1 by an ulp or two; well inside tolerance.
        Self::new(classes, priors)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn prior(&self, class: &str) -> Option<f64> {
        self.position(class).map(|i| self.priors[i])
    }

    pub fn position(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

/// A validated rule base.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    pub space: AttributeSpace,
    pub rules: Vec<Rule>,
    pub classes: ClassModel,
}

impl RuleBase {
    pub fn new(
        space: AttributeSpace,
        rules: Vec<Rule>,
        classes: ClassModel,
    ) -> Result<Self, RuleBaseError> {
        let mut ids = HashSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(RuleBaseError::DuplicateRuleId(rule.id.clone()));
            }
            if rule.max_attribute() >= space.len() {
                return Err(RuleBaseError::UnknownAttribute(format!(
                    "#{}",
                    rule.max_attribute()
                )));
            }
            for class in rule.marginals.keys() {
                if classes.position(class).is_none() {
                    return Err(RuleBaseError::UnknownClass(class.clone()));
                }
            }
        }
        Ok(Self {
            space,
            rules,
            classes,
        })
    }

    /// Resolves a rule entry (same shape as in the rule file) against this
    /// base's attributes and classes.
    pub fn parse_rule(&self, text: &str) -> Result<Rule, RuleBaseError> {
        let raw: RawRule = serde_json::from_str(text)?;
        self.resolve_rule(raw)
    }

    pub(crate) fn resolve_rule(&self, raw: RawRule) -> Result<Rule, RuleBaseError> {
        resolve_rule(&self.space, &self.classes, raw)
    }

    /// Parses evidence `{"F1": true, ...}`; every attribute must be assigned.
    pub fn parse_evidence(&self, text: &str) -> Result<Evidence, RuleBaseError> {
        parse_evidence(&self.space, text)
    }

    /// Serializes back to the rule-file format.
    pub fn to_json(&self) -> String {
        let raw = RawRuleBase {
            attributes: self.space.names.clone(),
            classes: self.classes.classes.clone(),
            priors: self
                .classes
                .classes
                .iter()
                .cloned()
                .zip(self.classes.priors.iter().copied())
                .collect(),
            rules: self.rules.iter().map(|r| self.raw_rule(r)).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("rule base serializes")
    }

    pub(crate) fn raw_rule(&self, rule: &Rule) -> RawRule {
        RawRule {
            id: rule.id.clone(),
            lhs: LhsEntries(
                rule.lhs
                    .iter()
                    .map(|lit| (self.space.name(lit.attribute).to_string(), lit.polarity))
                    .collect(),
            ),
            marginals: rule.marginals.clone(),
        }
    }
}

/// Parses and validates a rule file.
pub fn parse_rulebase(text: &str) -> Result<RuleBase, RuleBaseError> {
    let raw: RawRuleBase = serde_json::from_str(text)?;
    let space = AttributeSpace::new(raw.attributes)?;
    let mut priors = Vec::with_capacity(raw.classes.len());
    for class in &raw.classes {
        match raw.priors.get(class) {
            Some(&p) => priors.push(p),
            None => return Err(RuleBaseError::MissingPrior(class.clone())),
        }
    }
    if let Some(extra) = raw.priors.keys().find(|k| !raw.classes.contains(k)) {
        return Err(RuleBaseError::UnknownClass(extra.clone()));
    }
    let classes = ClassModel::new(raw.classes, priors)?;
    let rules = raw
        .rules
        .into_iter()
        .map(|r| resolve_rule(&space, &classes, r))
        .collect::<Result<Vec<_>, _>>()?;
    RuleBase::new(space, rules, classes)
}

/// Parses total evidence against `space`.
pub fn parse_evidence(space: &AttributeSpace, text: &str) -> Result<Evidence, RuleBaseError> {
    let entries: LhsEntries = serde_json::from_str(text)?;
    let mut values: Vec<Option<bool>> = vec![None; space.len()];
    for (name, value) in entries.0 {
        let pos = space.position(&name)?;
        if values[pos].replace(value).is_some() {
            return Err(RuleBaseError::DuplicateEvidence(name));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| RuleBaseError::PartialEvidence(space.name(i).to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Evidence::new(space, values)
}

/// Serializes evidence in the evidence-file format.
pub fn evidence_to_json(space: &AttributeSpace, evidence: &Evidence) -> String {
    let map: serde_json::Map<String, serde_json::Value> = space
        .names()
        .iter()
        .zip(evidence.values())
        .map(|(name, &v)| (name.clone(), serde_json::Value::Bool(v)))
        .collect();
    serde_json::to_string(&map).expect("evidence serializes")
}

/// Indices of the rules whose every literal holds under `evidence`, in input order.
pub fn firing_rules(rules: &[Rule], evidence: &Evidence) -> Vec<usize> {
    rules
        .iter()
        .enumerate()
        .filter(|(_, rule)| rule.fires(evidence))
        .map(|(i, _)| i)
        .collect()
}

fn resolve_rule(
    space: &AttributeSpace,
    classes: &ClassModel,
    raw: RawRule,
) -> Result<Rule, RuleBaseError> {
    let mut lhs = Vec::with_capacity(raw.lhs.0.len());
    let mut seen = HashSet::new();
    for (name, polarity) in raw.lhs.0 {
        let attribute = space.position(&name)?;
        if !seen.insert(attribute) {
            return Err(RuleBaseError::DuplicateLiteral {
                rule: raw.id,
                attribute: name,
            });
        }
        lhs.push(Literal::new(attribute, polarity));
    }
    for class in raw.marginals.keys() {
        if classes.position(class).is_none() {
            return Err(RuleBaseError::UnknownClass(class.clone()));
        }
    }
    Rule::new(raw.id, lhs, raw.marginals)
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRuleBase {
    attributes: Vec<String>,
    classes: Vec<String>,
    priors: BTreeMap<String, f64>,
    rules: Vec<RawRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawRule {
    id: String,
    lhs: LhsEntries,
    marginals: BTreeMap<String, f64>,
}

/// A JSON object of `name: bool` pairs kept in document order, duplicates
/// included, so that validation can reject repeated keys.
#[derive(Debug, Clone, Default)]
struct LhsEntries(Vec<(String, bool)>);

impl Serialize for LhsEntries {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LhsEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = LhsEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping attribute names to booleans")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, bool>()? {
                    entries.push((k, v));
                }
                Ok(LhsEntries(entries))
            }
        }

        deserializer
            .deserialize_map(EntriesVisitor)
            .map_err(de::Error::custom)
    }
}
