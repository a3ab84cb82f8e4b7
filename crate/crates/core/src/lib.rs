//! Bayesian probabilities from marginal constraints in polynomial time.
//!
//! Firing conjunctive rules constrain the unknown conditional distribution
//! `z` over all 2ⁿ joint assignments (`A z = b`). The minimum-norm solution
//! of those constraints gives `p(e | class) = wᵀ C⁻¹ b` with `C = A Aᵀ`
//! computed from rule overlaps alone, so the cost is O(r³) in the number
//! of firing rules and independent of 2ⁿ.
//!
//! - [`rulebase`]: attributes, rules, evidence, priors, file parsing.
//! - [`constraint`]: `C`, `b`, `w` from overlap counts.
//! - [`linalg`]: symmetric solves, pseudo-inverse, O(r²) row/column exchange.
//! - [`inference`]: the engine, posteriors, negativity checks and clamping.
//! - [`oracle`]: explicit 2ⁿ-cell reference used for verification.
//! - [`experiments`]: the entropy/norm sign-agreement study and the noisy
//!   LED digit benchmark.

pub mod constraint;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod oracle;
pub mod rulebase;

pub use constraint::{ConstraintSystem, ScalePolicy};
pub use inference::{classify, posterior_odds, EngineConfig, InferenceEngine, InferenceResult};
pub use linalg::Tolerances;
pub use rulebase::{parse_rulebase, Evidence, Rule, RuleBase};
