//! Exponential-space ground truth.
//!
//! Materializes `A` (r × 2ⁿ) and solves for the minimum-norm `z` from the
//! explicit product `A Aᵀ` with nalgebra, never touching the closed-form
//! Gram entries or the hand-written factorizations. Cell index `k` has bit
//! `n − 1 − a` set iff attribute `a` equals its evidence value, so the last
//! cell is the evidence itself and index 0 is its complement everywhere.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::rulebase::{AttributeSpace, ClassModel, Evidence, Literal, Rule, RuleBase};

/// Largest `n` for which `A` is materialized (~1M cells).
pub const MAX_EXPLICIT_ATTRIBUTES: usize = 20;

/// Entries below this are negative for clamping purposes.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0} attributes exceed the explicit limit of {MAX_EXPLICIT_ATTRIBUTES}")]
    TooManyAttributes(usize),
    #[error("distribution has negative entry {value} at cell {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("distribution sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("length {0} is not a power of two")]
    BadLength(usize),
    #[error("clamping did not converge after {iterations} iterations (min entry {min})")]
    ClampDiverged { iterations: usize, min: f64 },
    #[error("A has {rows} rows but b has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
}

/// A length-2ⁿ vector over joint assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitDistribution {
    values: Vec<f64>,
}

impl ExplicitDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self, OracleError> {
        if !values.len().is_power_of_two() {
            return Err(OracleError::BadLength(values.len()));
        }
        Ok(Self { values })
    }

    pub fn equiprobable(n: usize) -> Self {
        let l = 1usize << n;
        Self {
            values: vec![1.0 / l as f64; l],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, v)| if v < best.1 { (i, v) } else { best },
            )
    }

    /// The full-evidence cell, `p(e | class)`.
    pub fn last(&self) -> f64 {
        *self.values.last().expect("nonempty")
    }

    /// `Σ z ln z` with `0 ln 0 = 0`, after checking this is a distribution.
    /// `Σ z ln(scale·z)`, validating nonnegativity and normalization.
    fn z_log_scaled_z(&self, scale: f64) -> Result<f64, OracleError> {
        let mut sum = 0.0;
        let mut acc = 0.0;
        for (index, &value) in self.values.iter().enumerate() {
            if value < 0.0 {
                return Err(OracleError::NegativeEntry { index, value });
            }
            sum += value;
            if value > 0.0 {
                acc += value * (scale * value).ln();
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OracleError::NotNormalized(sum));
        }
        Ok(acc)
    }

    /// Discrimination information from the equiprobable distribution,
    /// `n ln 2 + Σ z ln z`, summed as `Σ z ln(2ⁿ z)` so that the
    /// equiprobable distribution gives exactly zero.
    pub fn information_measure(&self) -> Result<f64, OracleError> {
        self.z_log_scaled_z(self.values.len() as f64)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> Result<f64, OracleError> {
        Ok(-self.z_log_scaled_z(1.0)?)
    }
}

fn covers(rule: &Rule, n: usize, cell: usize) -> bool {
    rule.lhs()
        .iter()
        .all(|lit| cell >> (n - 1 - lit.attribute) & 1 == 1)
}

/// `A` for rules firing on one evidence, normalization row last.
pub fn materialize_a(firing: &[Rule], n: usize) -> Result<DMatrix<f64>, OracleError> {
    if n > MAX_EXPLICIT_ATTRIBUTES {
        return Err(OracleError::TooManyAttributes(n));
    }
    let l = 1usize << n;
    let r = firing.len() + 1;
    Ok(DMatrix::from_fn(r, l, |i, k| {
        if i == r - 1 || covers(&firing[i], n, k) {
            1.0
        } else {
            0.0
        }
    }))
}

/// `A Aᵀ` by explicit multiplication.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a * a.transpose()
}

/// `ẑ = A† b = Aᵀ (A Aᵀ)† b`: least squares, minimum Euclidean norm.
///
/// `A Aᵀ` is formed by explicit multiplication and pseudo-inverted through
/// nalgebra's symmetric eigen-decomposition, dropping eigenvalues below
/// `1e-10` of the largest. nalgebra's SVD is not used: on these 0/1
/// rank-deficient matrices it occasionally returns factors that do not
/// reconstruct `A`.
pub fn min_norm_solution(a: &DMatrix<f64>, b: &[f64]) -> Result<ExplicitDistribution, OracleError> {
    if a.nrows() != b.len() {
        return Err(OracleError::DimensionMismatch {
            rows: a.nrows(),
            len: b.len(),
        });
    }
    let eigen = SymmetricEigen::new(gram(a));
    let top = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let eps = (1e-10 * top).max(f64::MIN_POSITIVE);
    let mut coeffs = eigen.eigenvectors.transpose() * DVector::from_column_slice(b);
    for (c, &v) in coeffs.iter_mut().zip(eigen.eigenvalues.iter()) {
        *c = if v > eps { *c / v } else { 0.0 };
    }
    let z = a.transpose() * (&eigen.eigenvectors * coeffs);
    ExplicitDistribution::new(z.iter().copied().collect())
}

/// `sᵀ A† b`: the full-evidence entry of the minimum-norm solution.
pub fn exact_inference(a: &DMatrix<f64>, b: &[f64]) -> Result<f64, OracleError> {
    Ok(min_norm_solution(a, b)?.last())
}

/// Reference clamp loop: pin the most negative entry to zero by appending a
/// unit row to `A` (with `b = 0`) and re-solve until nothing is negative.
/// Returns the final solution and the number of clamps.
pub fn clamp_resolve_explicit(
    a: &DMatrix<f64>,
    b: &[f64],
) -> Result<(ExplicitDistribution, usize), OracleError> {
    let l = a.ncols();
    let mut a = a.clone();
    let mut b = b.to_vec();
    let mut z = min_norm_solution(&a, &b)?;
    let mut iterations = 0;
    loop {
        let (cell, min) = z.min();
        if min >= -NEGATIVITY_TOLERANCE {
            return Ok((z, iterations));
        }
        if iterations >= l {
            return Err(OracleError::ClampDiverged { iterations, min });
        }
        let rows = a.nrows();
        a = a.insert_row(rows, 0.0);
        a[(rows, cell)] = 1.0;
        b.push(0.0);
        iterations += 1;
        z = min_norm_solution(&a, &b)?;
    }
}

/// A random rule base whose rules all fire on `evidence` and whose marginals
/// are consistent: they come from random distributions over the 2ⁿ cells.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub base: RuleBase,
    pub evidence: Evidence,
}

/// Draws `n ∈ 1..=n_max` attributes and `rules ∈ 0..=r_max` firing rules
/// for classes `x` and `xbar`. With `duplicate`, one rule is repeated.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n_max: usize,
    r_max: usize,
    duplicate: bool,
) -> RandomInstance {
    assert!((1..=MAX_EXPLICIT_ATTRIBUTES).contains(&n_max));
    let n = rng.random_range(1..=n_max);
    let count = rng.random_range(0..=r_max);
    let space = AttributeSpace::new((1..=n).map(|i| format!("F{i}"))).expect("distinct names");
    let values: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let evidence = Evidence::new(&space, values).expect("length matches");

    let classes = ["x", "xbar"];
    let truths: Vec<Vec<f64>> = classes
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..1usize << n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect();

    let mut rules = Vec::with_capacity(count + 1);
    for i in 0..count {
        let size = rng.random_range(1..=n);
        let mut attrs: Vec<usize> = (0..n).collect();
        for k in 0..size {
            let j = rng.random_range(k..n);
            attrs.swap(k, j);
        }
        attrs.truncate(size);
        let lhs: Vec<Literal> = attrs
            .iter()
            .map(|&a| Literal::new(a, evidence.value(a)))
            .collect();
        let probe = Rule::new("probe", lhs.clone(), BTreeMap::new()).expect("valid lhs");
        let marginals = classes
            .iter()
            .zip(&truths)
            .map(|(class, truth)| {
                let mass: f64 = truth
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| covers(&probe, n, *k))
                    .map(|(_, p)| p)
                    .sum();
                (class.to_string(), mass.min(1.0))
            })
            .collect();
        rules.push(Rule::new(format!("r{i}"), lhs, marginals).expect("valid rule"));
    }
    if duplicate && !rules.is_empty() {
        let pick = rng.random_range(0..rules.len());
        let copy = &rules[pick];
        let dup = Rule::new(
            format!("{}-dup", copy.id()),
            copy.lhs().to_vec(),
            copy.marginals().clone(),
        )
        .expect("valid rule");
        rules.push(dup);
    }
    let classes = ClassModel::new(
        classes.iter().map(|c| c.to_string()).collect(),
        vec![0.5, 0.5],
    )
    .expect("valid classes");
    RandomInstance {
        base: RuleBase::new(space, rules, classes).expect("valid base"),
        evidence,
    }
}
