//! The constraint system `A z = b` in Gram form.
//!
//! Each firing rule contributes a row `α_i` of `A` whose ones mark the joint
//! assignments matching its left-hand side; the normalization row of all ones
//! is always last. `C = A Aᵀ` is assembled from overlap counts alone:
//!
//! ```text
//! C[i][j] = 2^(n − |lhs_i| − |lhs_j| + |lhs_i ∩ lhs_j|)
//! ```
//!
//! the number of assignments satisfying both rules. No 2ⁿ-long vector is ever
//! built.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rulebase::Rule;

/// Largest attribute count accepted; `2^n` must stay inside `f64` range.
pub const MAX_ATTRIBUTES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error(
        "rules `{first}` and `{second}` disagree on attribute #{attribute}; they cannot both fire"
    )]
    InconsistentFiring {
        first: String,
        second: String,
        attribute: usize,
    },
    #[error("rule `{rule}` has no marginal for class `{class}`")]
    MissingMarginal { rule: String, class: String },
    #[error("{0} attributes exceed the supported maximum of {MAX_ATTRIBUTES}")]
    TooManyAttributes(usize),
    #[error("rule `{rule}` has {size} literals but only {n} attributes exist")]
    LhsTooLarge { rule: String, size: usize, n: usize },
}

/// Whether `C` holds raw counts or counts divided by `2ⁿ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePolicy {
    #[default]
    Raw,
    /// `C / 2ⁿ`; `λ` grows by `2ⁿ` and the likelihood is rescaled on output.
    Normalized,
}

/// Pairwise shared-attribute counts of the firing rules plus the
/// normalization row (last, zero against everything).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapCounts {
    r: usize,
    m: Vec<u32>,
}

impl OverlapCounts {
    /// Number of constraints including the normalization row.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.m[i * self.r + j]
    }
}

/// Number of attributes shared by two sorted left-hand sides. Shared
/// attributes must carry the same value.
fn overlap(a: &Rule, b: &Rule) -> Result<u32, ConstraintError> {
    let (x, y) = (a.lhs(), b.lhs());
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        match x[i].attribute.cmp(&y[j].attribute) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if x[i].polarity != y[j].polarity {
                    return Err(ConstraintError::InconsistentFiring {
                        first: a.id().to_string(),
                        second: b.id().to_string(),
                        attribute: x[i].attribute,
                    });
                }
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(count)
}

/// Overlap counts for rules that all fire on one evidence. O(r² · max lhs).
pub fn overlap_counts(firing: &[Rule]) -> Result<OverlapCounts, ConstraintError> {
    let r = firing.len() + 1;
    let mut m = vec![0u32; r * r];
    for (i, a) in firing.iter().enumerate() {
        m[i * r + i] = a.lhs().len() as u32;
        for (j, b) in firing.iter().enumerate().skip(i + 1) {
            let o = overlap(a, b)?;
            m[i * r + j] = o;
            m[j * r + i] = o;
        }
    }
    Ok(OverlapCounts { r, m })
}

fn check_n(n: usize) -> Result<(), ConstraintError> {
    if n > MAX_ATTRIBUTES {
        Err(ConstraintError::TooManyAttributes(n))
    } else {
        Ok(())
    }
}

fn shift(n: usize, scale: ScalePolicy) -> i32 {
    match scale {
        ScalePolicy::Raw => 0,
        ScalePolicy::Normalized => n as i32,
    }
}

fn gram_entry(n: usize, mii: u32, mjj: u32, mij: u32, shift: i32) -> f64 {
    let e = n as i32 - mii as i32 - mjj as i32 + mij as i32 - shift;
    2f64.powi(e)
}

/// `C` from overlap counts: exact powers of two.
pub fn build_c(
    counts: &OverlapCounts,
    n: usize,
    scale: ScalePolicy,
) -> Result<Matrix, ConstraintError> {
    check_n(n)?;
    let r = counts.r();
    let s = shift(n, scale);
    let mut c = Matrix::zeros(r);
    for i in 0..r {
        let mii = counts.get(i, i);
        if mii as usize > n {
            return Err(ConstraintError::LhsTooLarge {
                rule: format!("#{i}"),
                size: mii as usize,
                n,
            });
        }
        for j in 0..r {
            c[(i, j)] = gram_entry(n, mii, counts.get(j, j), counts.get(i, j), s);
        }
    }
    Ok(c)
}

/// `b` for `class`: each rule's marginal, then 1 for normalization.
pub fn build_b(firing: &[Rule], class: &str) -> Result<Vec<f64>, ConstraintError> {
    let mut b = firing
        .iter()
        .map(|rule| {
            rule.marginal(class)
                .ok_or_else(|| ConstraintError::MissingMarginal {
                    rule: rule.id().to_string(),
                    class: class.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    b.push(1.0);
    Ok(b)
}

/// The last column of `A`: every firing rule and the normalization row
/// cover the cell where all attributes match the evidence.
pub fn build_w(r: usize) -> Vec<f64> {
    vec![1.0; r]
}

/// Row `index` of `C` after replacing firing rule `index` with `candidate`.
/// O(r · lhs).
pub fn gram_row(
    firing: &[Rule],
    index: usize,
    candidate: &Rule,
    n: usize,
    scale: ScalePolicy,
) -> Result<Vec<f64>, ConstraintError> {
    check_n(n)?;
    let s = shift(n, scale);
    let size = candidate.lhs().len() as u32;
    if size as usize > n {
        return Err(ConstraintError::LhsTooLarge {
            rule: candidate.id().to_string(),
            size: size as usize,
            n,
        });
    }
    let mut row = Vec::with_capacity(firing.len() + 1);
    for (j, other) in firing.iter().enumerate() {
        let (mjj, mij) = if j == index {
            (size, size)
        } else {
            (other.lhs().len() as u32, overlap(candidate, other)?)
        };
        row.push(gram_entry(n, size, mjj, mij, s));
    }
    row.push(gram_entry(n, size, 0, 0, s));
    Ok(row)
}

/// `C`, per-class `b`, and `w` for one set of firing rules.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    n: usize,
    c: Matrix,
    b: BTreeMap<String, Vec<f64>>,
    w: Vec<f64>,
    scale: ScalePolicy,
}

impl ConstraintSystem {
    pub fn build(
        firing: &[Rule],
        n: usize,
        classes: &[String],
        scale: ScalePolicy,
    ) -> Result<Self, ConstraintError> {
        let counts = overlap_counts(firing)?;
        let c = build_c(&counts, n, scale)?;
        let b = classes
            .iter()
            .map(|class| Ok((class.clone(), build_b(firing, class)?)))
            .collect::<Result<BTreeMap<_, _>, ConstraintError>>()?;
        Ok(Self {
            n,
            c,
            b,
            w: build_w(counts.r()),
            scale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Constraint count, normalization row included.
    pub fn r(&self) -> usize {
        self.c.dim()
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn b(&self, class: &str) -> Option<&[f64]> {
        self.b.get(class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.b.keys().map(String::as_str)
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn scale(&self) -> ScalePolicy {
        self.scale
    }

    /// Factor that turns `wᵀλ` into a likelihood: 1, or `2⁻ⁿ` when normalized.
    pub fn output_factor(&self) -> f64 {
        2f64.powi(-shift(self.n, self.scale))
    }

    /// Replaces row/column `index` of `C` and the `b` entries for every class.
    pub(crate) fn replace_row(
        &mut self,
        index: usize,
        row: &[f64],
        rule: &Rule,
    ) -> Result<(), ConstraintError> {
        let mut updates = Vec::with_capacity(self.b.len());
        for class in self.b.keys() {
            let value = rule
                .marginal(class)
                .ok_or_else(|| ConstraintError::MissingMarginal {
                    rule: rule.id().to_string(),
                    class: class.clone(),
                })?;
            updates.push(value);
        }
        for (b, value) in self.b.values_mut().zip(updates) {
            b[index] = value;
        }
        self.c.set_row_col(index, row);
        Ok(())
    }

    /// CSV dump: `C` rows, then one `b` row per class, then `w`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let fmt_row = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for (i, row) in self.c.rows().enumerate() {
            let _ = writeln!(out, "C,{i},{}", fmt_row(row));
        }
        for (class, b) in &self.b {
            let _ = writeln!(out, "b,{class},{}", fmt_row(b));
        }
        let _ = writeln!(out, "w,,{}", fmt_row(&self.w));
        out
    }
}
