//! The inference engine.
//!
//! For one evidence the firing rules define `C`, `w` and a `b` per class;
//! `p(e | class) = wᵀ C⁻¹ b`. The engine keeps an explicit inverse so each
//! extra class costs O(r²) and a rule exchange costs O(r²) as well.
//! Posteriors follow from Bayes' rule, `p(k | e) ∝ p(e | k) p(k)`.
//!
//! The closed form does not force the implied joint distribution to be
//! nonnegative. For small `n` the engine can expand the solution over all
//! 2ⁿ cells, report negative entries, and repair them by pinning the most
//! negative cell to zero and re-solving.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{gram_row, ConstraintError, ConstraintSystem, ScalePolicy};
use crate::linalg::{
    self, dot, invert, LinalgError, MaintainedInverse, Matrix, SolveMethod, Tolerances, UpdateKind,
};
use crate::oracle::{MAX_EXPLICIT_ATTRIBUTES, NEGATIVITY_TOLERANCE};
use crate::rulebase::{ClassModel, Evidence, Rule, RuleBase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("no classes to classify")]
    NoClasses,
    #[error("every class has zero posterior mass")]
    AllPosteriorsZero,
    #[error("posterior undefined: both likelihoods are zero")]
    UndefinedPosterior,
    #[error("likelihood {0} is negative; resolve negativity first")]
    NegativeLikelihood(f64),
    #[error("prior {0} must lie strictly between 0 and 1")]
    InvalidPrior(f64),
    #[error("index {0} addresses the normalization row, which cannot be exchanged")]
    NormalizationRow(usize),
    #[error("rule index {index} out of range ({firing} rules fire)")]
    IndexOutOfRange { index: usize, firing: usize },
    #[error("rule `{0}` does not fire on the current evidence")]
    RuleDoesNotFire(String),
    #[error("evidence has {got} attributes, rule base has {expected}")]
    EvidenceMismatch { expected: usize, got: usize },
    #[error("{n} attributes exceed the explicit limit of {limit}")]
    ExplicitLimit { n: usize, limit: usize },
    #[error("clamping did not converge after {iterations} iterations (min cell {min:e}, residual {residual:e})")]
    ClampDiverged {
        iterations: usize,
        min: f64,
        residual: f64,
    },
}

/// Engine settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub tolerances: Tolerances,
    /// Largest `n` for which the 2ⁿ-cell expansion is attempted.
    pub n_limit: usize,
    pub scale: ScalePolicy,
    /// Expand and check cells during `classify` when `n ≤ n_limit`.
    pub check_nonnegativity: bool,
    /// Replace violated likelihoods by the clamp-and-resolve value in `classify`.
    pub clamp_negative: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            n_limit: MAX_EXPLICIT_ATTRIBUTES,
            scale: ScalePolicy::Raw,
            check_nonnegativity: true,
            clamp_negative: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonNegativity {
    Verified,
    Violated,
    Unchecked,
}

/// A cell with a negative implied probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellViolation {
    pub index: usize,
    pub value: f64,
    /// Attribute values of the cell, e.g. `F1=false,F2=false`.
    pub assignment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonNegativityReport {
    pub status: NonNegativity,
    pub min_cell: Option<f64>,
    pub violations: Vec<CellViolation>,
}

/// One class's likelihood with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Likelihood {
    pub value: f64,
    pub method: SolveMethod,
    /// `‖Cλ − b‖₂`; nonzero only for inconsistent constraints.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampOutcome {
    pub likelihood: f64,
    pub iterations: usize,
    pub cells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub nonnegativity: NonNegativity,
    pub min_cell: Option<f64>,
    pub clamp_iterations: usize,
    pub consistency_residual: f64,
    /// Likelihood fell outside [0, 1] before any flooring.
    pub out_of_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub solve_method: SolveMethod,
    /// `‖C‖₁‖C⁻¹‖₁`; absent on the pseudo-inverse path.
    pub condition_estimate: Option<f64>,
    pub rules_fired: usize,
    /// Classes whose negative likelihood was floored at zero.
    pub floored: Vec<String>,
    pub classes: BTreeMap<String, ClassDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub likelihoods: BTreeMap<String, f64>,
    pub posterior: BTreeMap<String, f64>,
    pub argmax: String,
    pub diagnostics: Diagnostics,
}

/// How a rule exchange was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapPath {
    Unchanged,
    RankOne,
    Refactored,
    /// The new matrix is singular; the engine now solves by pseudo-inverse.
    PseudoFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub path: SwapPath,
    pub likelihoods: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
enum Solver {
    Inverse(MaintainedInverse),
    Pseudo,
}

/// `p(x | e)` from the binary odds form of Bayes' rule.
pub fn posterior_odds(p_x: f64, like_x: f64, like_notx: f64) -> Result<f64, InferenceError> {
    if !(p_x > 0.0 && p_x < 1.0) {
        return Err(InferenceError::InvalidPrior(p_x));
    }
    for l in [like_x, like_notx] {
        if l < 0.0 {
            return Err(InferenceError::NegativeLikelihood(l));
        }
    }
    let num = like_x * p_x;
    let den = num + like_notx * (1.0 - p_x);
    if den == 0.0 {
        return Err(InferenceError::UndefinedPosterior);
    }
    Ok(num / den)
}

/// Builds an engine for `evidence` and classifies it.
pub fn classify(
    base: &RuleBase,
    evidence: &Evidence,
    config: &EngineConfig,
) -> Result<InferenceResult, InferenceError> {
    InferenceEngine::new(base, evidence, config)?.classify()
}

/// Solver state for one evidence. Single owner; exchanges mutate it.
#[derive(Debug, Clone)]
pub struct InferenceEngine {
    evidence: Evidence,
    classes: ClassModel,
    firing: Vec<Rule>,
    system: ConstraintSystem,
    solver: Solver,
    config: EngineConfig,
}

impl InferenceEngine {
    pub fn new(
        base: &RuleBase,
        evidence: &Evidence,
        config: &EngineConfig,
    ) -> Result<Self, InferenceError> {
        if evidence.len() != base.space.len() {
            return Err(InferenceError::EvidenceMismatch {
                expected: base.space.len(),
                got: evidence.len(),
            });
        }
        let firing = base
            .rules
            .iter()
            .filter(|rule| rule.fires(evidence))
            .cloned()
            .collect();
        Self::from_firing(firing, evidence.clone(), base.classes.clone(), config)
    }

    /// Uses `firing` as given; every rule must fire on `evidence`.
    pub fn from_firing(
        firing: Vec<Rule>,
        evidence: Evidence,
        classes: ClassModel,
        config: &EngineConfig,
    ) -> Result<Self, InferenceError> {
        if let Some(rule) = firing.iter().find(|r| !r.fires(&evidence)) {
            return Err(InferenceError::RuleDoesNotFire(rule.id().to_string()));
        }
        let system =
            ConstraintSystem::build(&firing, evidence.len(), classes.classes(), config.scale)?;
        let solver = match invert(system.c(), &config.tolerances) {
            Ok(inv) => Solver::Inverse(inv),
            Err(LinalgError::Singular) => Solver::Pseudo,
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            evidence,
            classes,
            firing,
            system,
            solver,
            config: *config,
        })
    }

    pub fn n(&self) -> usize {
        self.evidence.len()
    }

    pub fn firing(&self) -> &[Rule] {
        &self.firing
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn solve_method(&self) -> SolveMethod {
        match self.solver {
            Solver::Inverse(_) => SolveMethod::Factorization,
            Solver::Pseudo => SolveMethod::PseudoInverse,
        }
    }

    pub fn condition_estimate(&self) -> Option<f64> {
        match &self.solver {
            Solver::Inverse(inv) => Some(inv.condition_estimate()),
            Solver::Pseudo => None,
        }
    }

    /// The maintained inverse, when `C` is nonsingular.
    pub fn maintained_inverse(&self) -> Option<&MaintainedInverse> {
        match &self.solver {
            Solver::Inverse(inv) => Some(inv),
            Solver::Pseudo => None,
        }
    }

    fn b(&self, class: &str) -> Result<&[f64], InferenceError> {
        self.system
            .b(class)
            .ok_or_else(|| InferenceError::UnknownClass(class.to_string()))
    }

    /// `λ` solving `Cλ = b(class)` (least squares when singular).
    pub fn lambda(&self, class: &str) -> Result<Vec<f64>, InferenceError> {
        let b = self.b(class)?;
        Ok(match &self.solver {
            Solver::Inverse(inv) => inv.solve(b)?,
            Solver::Pseudo => linalg::pseudo_solve(self.system.c(), b, &self.config.tolerances)?,
        })
    }

    /// `p(e | class) = wᵀλ`. Not clipped to [0, 1].
    pub fn likelihood(&self, class: &str) -> Result<Likelihood, InferenceError> {
        let lambda = self.lambda(class)?;
        let b = self.b(class)?;
        let residual = self
            .system
            .c()
            .mul_vec(&lambda)
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        Ok(Likelihood {
            value: dot(self.system.w(), &lambda) * self.system.output_factor(),
            method: self.solve_method(),
            residual,
        })
    }

    /// Likelihood of every class, keyed by class name.
    pub fn likelihoods(&self) -> Result<BTreeMap<String, f64>, InferenceError> {
        self.classes
            .classes()
            .iter()
            .map(|c| Ok((c.clone(), self.likelihood(c)?.value)))
            .collect()
    }

    /// Cell masks: bit `n−1−a` set for each attribute `a` in the lhs; the
    /// normalization row has mask 0.
    fn masks(&self) -> Vec<u32> {
        let n = self.n();
        self.firing
            .iter()
            .map(|rule| {
                rule.lhs()
                    .iter()
                    .fold(0u32, |m, lit| m | 1 << (n - 1 - lit.attribute))
            })
            .chain(std::iter::once(0))
            .collect()
    }

    fn check_explicit(&self) -> Result<(), InferenceError> {
        let limit = self.config.n_limit.min(MAX_EXPLICIT_ATTRIBUTES);
        if self.n() > limit {
            Err(InferenceError::ExplicitLimit { n: self.n(), limit })
        } else {
            Ok(())
        }
    }

    /// `ẑ = Aᵀλ` over all 2ⁿ cells, in the oracle's cell order.
    pub fn explicit_solution(&self, class: &str) -> Result<Vec<f64>, InferenceError> {
        self.check_explicit()?;
        let lambda = self.lambda(class)?;
        let factor = self.system.output_factor();
        let masks = self.masks();
        Ok((0..1u32 << self.n())
            .map(|cell| {
                masks
                    .iter()
                    .zip(&lambda)
                    .filter(|(m, _)| cell & **m == **m)
                    .map(|(_, l)| l)
                    .sum::<f64>()
                    * factor
            })
            .collect())
    }

    fn describe_cell(&self, cell: usize) -> String {
        let n = self.n();
        (0..n)
            .map(|a| {
                let matches = cell >> (n - 1 - a) & 1 == 1;
                let value = self.evidence.value(a) == matches;
                format!("F{}={}", a + 1, value)
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Reports cells of `ẑ` below `−1e-12`, or `Unchecked` when `n` is over
    /// the explicit limit.
    pub fn verify_nonnegativity(&self, class: &str) -> Result<NonNegativityReport, InferenceError> {
        if self.check_explicit().is_err() {
            self.b(class)?;
            return Ok(NonNegativityReport {
                status: NonNegativity::Unchecked,
                min_cell: None,
                violations: Vec::new(),
            });
        }
        let z = self.explicit_solution(class)?;
        let min = z.iter().copied().fold(f64::INFINITY, f64::min);
        let violations: Vec<CellViolation> = z
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < -NEGATIVITY_TOLERANCE)
            .map(|(index, &value)| CellViolation {
                index,
                value,
                assignment: self.describe_cell(index),
            })
            .collect();
        Ok(NonNegativityReport {
            status: if violations.is_empty() {
                NonNegativity::Verified
            } else {
                NonNegativity::Violated
            },
            min_cell: Some(min),
            violations,
        })
    }

    /// Pins the most negative cell to zero and re-solves until every cell is
    /// at least `−1e-12`, at most 2ⁿ times.
    pub fn clamp_resolve(&self, class: &str) -> Result<ClampOutcome, InferenceError> {
        self.check_explicit()?;
        let n = self.n();
        let mut cells = self.explicit_solution(class)?;
        let masks = self.masks();
        let b = self.b(class)?.to_vec();
        let mut clamped: Vec<u32> = Vec::new();
        let cap = 1usize << n;
        loop {
            let (worst, min) =
                cells
                    .iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                    );
            if min >= -NEGATIVITY_TOLERANCE {
                return Ok(ClampOutcome {
                    likelihood: *cells.last().expect("nonempty"),
                    iterations: clamped.len(),
                    cells,
                });
            }
            if clamped.len() >= cap {
                let (c, bb) = augmented_system(n, &masks, &clamped, &b);
                let lambda = linalg::solve_spd(&c, &bb, &self.config.tolerances)?.lambda;
                let residual = c
                    .mul_vec(&lambda)
                    .iter()
                    .zip(&bb)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                return Err(InferenceError::ClampDiverged {
                    iterations: clamped.len(),
                    min,
                    residual,
                });
            }
            clamped.push(worst as u32);
            let (c, bb) = augmented_system(n, &masks, &clamped, &b);
            let lambda = linalg::solve_spd(&c, &bb, &self.config.tolerances)?.lambda;
            let r = masks.len();
            cells = (0..1u32 << n)
                .map(|cell| {
                    let rules: f64 = masks
                        .iter()
                        .zip(&lambda[..r])
                        .filter(|(m, _)| cell & **m == **m)
                        .map(|(_, l)| l)
                        .sum();
                    let pins: f64 = clamped
                        .iter()
                        .zip(&lambda[r..])
                        .filter(|(k, _)| **k == cell)
                        .map(|(_, l)| l)
                        .sum();
                    rules + pins
                })
                .collect();
        }
    }

    /// Replaces firing rule `index` with `rule` and refreshes every class's
    /// likelihood in O(r²) when `C` stays nonsingular.
    pub fn swap_rule(&mut self, index: usize, rule: Rule) -> Result<SwapOutcome, InferenceError> {
        let firing = self.firing.len();
        if index == firing {
            return Err(InferenceError::NormalizationRow(index));
        }
        if index > firing {
            return Err(InferenceError::IndexOutOfRange { index, firing });
        }
        if !rule.fires(&self.evidence) {
            return Err(InferenceError::RuleDoesNotFire(rule.id().to_string()));
        }
        let row = gram_row(&self.firing, index, &rule, self.n(), self.config.scale)?;
        self.system.replace_row(index, &row, &rule)?;
        self.firing[index] = rule;

        let path = match &mut self.solver {
            Solver::Inverse(inv) => match inv.swap_row_col(index, &row) {
                Ok(UpdateKind::Unchanged) => SwapPath::Unchanged,
                Ok(UpdateKind::RankOne) => SwapPath::RankOne,
                Ok(UpdateKind::Refactored) => SwapPath::Refactored,
                Err(LinalgError::SingularUpdate { .. }) => {
                    self.solver = Solver::Pseudo;
                    SwapPath::PseudoFallback
                }
                Err(e) => return Err(e.into()),
            },
            Solver::Pseudo => match invert(self.system.c(), &self.config.tolerances) {
                Ok(inv) => {
                    self.solver = Solver::Inverse(inv);
                    SwapPath::Refactored
                }
                Err(LinalgError::Singular) => SwapPath::PseudoFallback,
                Err(e) => return Err(e.into()),
            },
        };
        Ok(SwapOutcome {
            path,
            likelihoods: self.likelihoods()?,
        })
    }

    /// Likelihood and posterior for every class; negative likelihoods are
    /// floored at zero before normalization.
    pub fn classify(&self) -> Result<InferenceResult, InferenceError> {
        if self.classes.is_empty() {
            return Err(InferenceError::NoClasses);
        }
        let mut likelihoods = BTreeMap::new();
        let mut class_diag = BTreeMap::new();
        let mut floored = Vec::new();
        let mut scores = Vec::with_capacity(self.classes.len());
        let check = self.config.check_nonnegativity && self.check_explicit().is_ok();

        for (class, &prior) in self.classes.classes().iter().zip(self.classes.priors()) {
            let like = self.likelihood(class)?;
            let mut value = like.value;
            let mut diag = ClassDiagnostics {
                nonnegativity: NonNegativity::Unchecked,
                min_cell: None,
                clamp_iterations: 0,
                consistency_residual: like.residual,
                out_of_range: !(0.0..=1.0).contains(&value),
            };
            if check {
                let report = self.verify_nonnegativity(class)?;
                diag.nonnegativity = report.status;
                diag.min_cell = report.min_cell;
                if self.config.clamp_negative && report.status == NonNegativity::Violated {
                    let clamp = self.clamp_resolve(class)?;
                    diag.clamp_iterations = clamp.iterations;
                    value = clamp.likelihood;
                }
            }
            likelihoods.insert(class.clone(), value);
            if value < 0.0 {
                floored.push(class.clone());
            }
            scores.push(value.max(0.0) * prior);
            class_diag.insert(class.clone(), diag);
        }

        let total: f64 = scores.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(InferenceError::AllPosteriorsZero);
        }
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let posterior = self
            .classes
            .classes()
            .iter()
            .zip(&scores)
            .map(|(c, s)| (c.clone(), s / total))
            .collect();
        Ok(InferenceResult {
            likelihoods,
            posterior,
            argmax: self.classes.classes()[best].clone(),
            diagnostics: Diagnostics {
                solve_method: self.solve_method(),
                condition_estimate: self.condition_estimate(),
                rules_fired: self.firing.len(),
                floored,
                classes: class_diag,
            },
        })
    }
}

/// Gram matrix and right-hand side of the rule rows, the normalization row
/// and one unit row per pinned cell. Raw counts.
fn augmented_system(n: usize, masks: &[u32], pinned: &[u32], b: &[f64]) -> (Matrix, Vec<f64>) {
    let r = masks.len();
    let dim = r + pinned.len();
    let mut c = Matrix::zeros(dim);
    for i in 0..r {
        for j in 0..r {
            let free = n - (masks[i] | masks[j]).count_ones() as usize;
            c[(i, j)] = 2f64.powi(free as i32);
        }
        for (p, &cell) in pinned.iter().enumerate() {
            let v = if cell & masks[i] == masks[i] {
                1.0
            } else {
                0.0
            };
            c[(i, r + p)] = v;
            c[(r + p, i)] = v;
        }
    }
    for (p, &cp) in pinned.iter().enumerate() {
        for (q, &cq) in pinned.iter().enumerate() {
            c[(r + p, r + q)] = if cp == cq { 1.0 } else { 0.0 };
        }
    }
    let mut bb = b.to_vec();
    bb.resize(dim, 0.0);
    (c, bb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulebase::{parse_rulebase, AttributeSpace, Literal};

    fn base(attrs: usize, rules: &[(&[usize], f64, f64)]) -> RuleBase {
        let space = AttributeSpace::new((1..=attrs).map(|i| format!("F{i}"))).unwrap();
        let rules = rules
            .iter()
            .enumerate()
            .map(|(k, (lhs, x, xbar))| {
                Rule::new(
                    format!("r{k}"),
                    lhs.iter().map(|&a| Literal::new(a, true)).collect(),
                    BTreeMap::from([("x".to_string(), *x), ("xbar".to_string(), *xbar)]),
                )
                .unwrap()
            })
            .collect();
        let classes = ClassModel::new(vec!["x".into(), "xbar".into()], vec![0.5, 0.5]).unwrap();
        RuleBase::new(space, rules, classes).unwrap()
    }

    fn all_true(rb: &RuleBase) -> Evidence {
        Evidence::new(&rb.space, vec![true; rb.space.len()]).unwrap()
    }

    #[test]
    fn worked_example_likelihood() {
        let rb = base(3, &[(&[0], 0.5, 0.5), (&[0, 2], 0.25, 0.25)]);
        let engine = InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        let like = engine.likelihood("x").unwrap();
        assert!((like.value - 0.125).abs() < 1e-15);
        assert_eq!(like.method, SolveMethod::Factorization);
        let report = engine.verify_nonnegativity("x").unwrap();
        assert_eq!(report.status, NonNegativity::Verified);
        assert!(report.min_cell.unwrap().abs() < 0.125 + 1e-12);
    }

    #[test]
    fn normalization_only_is_two_to_minus_n() {
        for n in 1..=16 {
            let rb = base(n, &[]);
            let engine =
                InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
            assert_eq!(
                engine.likelihood("x").unwrap().value,
                2f64.powi(-(n as i32))
            );
        }
    }

    #[test]
    fn full_evidence_rule_pins_likelihood() {
        let rb = base(3, &[(&[0, 1, 2], 0.37, 0.1)]);
        let engine = InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        assert!((engine.likelihood("x").unwrap().value - 0.37).abs() < 1e-15);
    }

    #[test]
    fn odds_form() {
        assert_eq!(posterior_odds(0.5, 0.3, 0.3).unwrap(), 0.5);
        assert_eq!(posterior_odds(0.2, 0.3, 0.0).unwrap(), 1.0);
        assert!((posterior_odds(0.5, 0.8, 0.2).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(
            posterior_odds(0.5, 0.0, 0.0).unwrap_err(),
            InferenceError::UndefinedPosterior
        );
        assert!(matches!(
            posterior_odds(0.5, -0.1, 0.2),
            Err(InferenceError::NegativeLikelihood(_))
        ));
    }

    #[test]
    fn binary_classify_matches_odds() {
        let mut rb = base(3, &[(&[0], 0.5, 0.3), (&[0, 2], 0.25, 0.2)]);
        rb.classes = ClassModel::new(vec!["x".into(), "xbar".into()], vec![0.25, 0.75]).unwrap();
        let engine = InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        let result = engine.classify().unwrap();
        let lx = result.likelihoods["x"];
        let lnx = result.likelihoods["xbar"];
        assert_eq!(
            result.posterior["x"],
            posterior_odds(0.25, lx, lnx).unwrap()
        );
    }

    #[test]
    fn symmetric_classes_give_uniform_posterior() {
        let rb = base(3, &[(&[0], 0.4, 0.4), (&[1, 2], 0.2, 0.2)]);
        let result = classify(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        assert_eq!(result.posterior["x"], 0.5);
        assert_eq!(result.posterior["xbar"], 0.5);
        assert_eq!(result.argmax, "x");
    }

    fn negative_engine() -> InferenceEngine {
        let rb = base(2, &[(&[0], 0.9, 0.5), (&[1], 0.9, 0.5)]);
        InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap()
    }

    #[test]
    fn detects_negative_cell() {
        let engine = negative_engine();
        let report = engine.verify_nonnegativity("x").unwrap();
        assert_eq!(report.status, NonNegativity::Violated);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].index, 0);
        assert_eq!(report.violations[0].assignment, "F1=false,F2=false");
        assert!((report.violations[0].value + 0.15).abs() < 1e-12);
    }

    #[test]
    fn clamp_fixes_negative_cell() {
        let out = negative_engine().clamp_resolve("x").unwrap();
        assert_eq!(out.iterations, 1);
        for (v, e) in out.cells.iter().zip([0.0, 0.1, 0.1, 0.8]) {
            assert!((v - e).abs() < 1e-12, "{:?}", out.cells);
        }
        assert!((out.likelihood - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_noop_when_nonnegative() {
        let engine = negative_engine();
        let out = engine.clamp_resolve("xbar").unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.likelihood, engine.likelihood("xbar").unwrap().value);
    }

    #[test]
    fn over_limit_is_unchecked() {
        let rb = base(25, &[(&[0], 0.5, 0.5)]);
        let engine = InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        let report = engine.verify_nonnegativity("x").unwrap();
        assert_eq!(report.status, NonNegativity::Unchecked);
        assert!(matches!(
            engine.clamp_resolve("x"),
            Err(InferenceError::ExplicitLimit { n: 25, .. })
        ));
    }

    #[test]
    fn swap_matches_rebuild() {
        let rb = base(3, &[(&[0], 0.5, 0.5), (&[0, 2], 0.25, 0.25)]);
        let ev = all_true(&rb);
        let mut engine = InferenceEngine::new(&rb, &ev, &EngineConfig::default()).unwrap();
        let new_rule = Rule::new(
            "r2b",
            vec![Literal::new(2, true)],
            BTreeMap::from([("x".to_string(), 0.6), ("xbar".to_string(), 0.5)]),
        )
        .unwrap();
        let out = engine.swap_rule(1, new_rule.clone()).unwrap();
        assert_eq!(out.path, SwapPath::RankOne);
        let rebuilt = InferenceEngine::from_firing(
            vec![rb.rules[0].clone(), new_rule],
            ev,
            rb.classes.clone(),
            &EngineConfig::default(),
        )
        .unwrap();
        for (class, value) in &out.likelihoods {
            let fresh = rebuilt.likelihood(class).unwrap().value;
            assert!((value - fresh).abs() <= 1e-8 * fresh.abs().max(1.0));
        }
    }

    #[test]
    fn swap_guards() {
        let rb = base(3, &[(&[0], 0.5, 0.5), (&[0, 2], 0.25, 0.25)]);
        let mut engine =
            InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        let same = rb.rules[1].clone();
        let before = engine.likelihoods().unwrap();
        let out = engine.swap_rule(1, same.clone()).unwrap();
        assert_eq!(out.path, SwapPath::Unchanged);
        assert_eq!(out.likelihoods, before);
        assert_eq!(
            engine.swap_rule(2, same.clone()).unwrap_err(),
            InferenceError::NormalizationRow(2)
        );
        let off = Rule::new("off", vec![Literal::new(1, false)], BTreeMap::new()).unwrap();
        assert_eq!(
            engine.swap_rule(0, off).unwrap_err(),
            InferenceError::RuleDoesNotFire("off".into())
        );
        // Duplicate of rule 1 at position 0 makes C singular.
        let out = engine.swap_rule(0, same).unwrap();
        assert_eq!(out.path, SwapPath::PseudoFallback);
        assert_eq!(engine.solve_method(), SolveMethod::PseudoInverse);
        assert!((out.likelihoods["x"] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn normalized_scale_agrees_with_raw() {
        let rb = parse_rulebase(
            r#"{"attributes": ["F1", "F2", "F3", "F4"], "classes": ["x", "y"],
                "priors": {"x": 0.5, "y": 0.5},
                "rules": [{"id": "a", "lhs": {"F1": true}, "marginals": {"x": 0.6, "y": 0.3}},
                          {"id": "b", "lhs": {"F1": true, "F4": false}, "marginals": {"x": 0.2, "y": 0.1}}]}"#,
        )
        .unwrap();
        let ev = rb
            .parse_evidence(r#"{"F1": true, "F2": false, "F3": true, "F4": false}"#)
            .unwrap();
        let raw = InferenceEngine::new(&rb, &ev, &EngineConfig::default()).unwrap();
        let cfg = EngineConfig {
            scale: ScalePolicy::Normalized,
            ..EngineConfig::default()
        };
        let norm = InferenceEngine::new(&rb, &ev, &cfg).unwrap();
        for c in ["x", "y"] {
            let a = raw.likelihood(c).unwrap().value;
            let b = norm.likelihood(c).unwrap().value;
            assert!((a - b).abs() <= 1e-14);
        }
        assert_eq!(raw.explicit_solution("x").unwrap().len(), 16);
    }

    #[test]
    fn all_zero_posterior_rejected() {
        let rb = base(2, &[(&[0, 1], 0.0, 0.0)]);
        let engine = InferenceEngine::new(&rb, &all_true(&rb), &EngineConfig::default()).unwrap();
        assert_eq!(
            engine.classify().unwrap_err(),
            InferenceError::AllPosteriorsZero
        );
    }
}
