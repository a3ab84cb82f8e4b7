#![allow(dead_code)]

use std::collections::BTreeMap;

use marginfer::rulebase::{AttributeSpace, ClassModel, Evidence, Literal, Rule};
use rand::Rng;

pub const CLASSES: [&str; 2] = ["x", "xbar"];

/// Random firing rules over a fixed evidence with marginals taken from two
/// hidden distributions, so every generated rule set is consistent.
pub struct RuleGenerator {
    pub n: usize,
    pub space: AttributeSpace,
    pub evidence: Evidence,
    truths: Vec<Vec<f64>>,
    next_id: usize,
}

impl RuleGenerator {
    pub fn new<R: Rng>(rng: &mut R, n: usize) -> Self {
        let space = AttributeSpace::new((1..=n).map(|i| format!("F{i}"))).unwrap();
        let evidence = Evidence::new(&space, (0..n).map(|_| rng.random()).collect()).unwrap();
        let truths = CLASSES
            .iter()
            .map(|_| {
                let raw: Vec<f64> = (0..1usize << n).map(|_| rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect();
        Self {
            n,
            space,
            evidence,
            truths,
            next_id: 0,
        }
    }

    pub fn classes(&self) -> ClassModel {
        ClassModel::new(
            CLASSES.iter().map(|c| c.to_string()).collect(),
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    pub fn rule_with<R: Rng>(&mut self, rng: &mut R, max_size: usize) -> Rule {
        let n = self.n;
        let size = rng.random_range(1..=max_size.min(n));
        let mut attrs: Vec<usize> = (0..n).collect();
        for k in 0..size {
            let j = rng.random_range(k..n);
            attrs.swap(k, j);
        }
        attrs.truncate(size);
        let mask = attrs.iter().fold(0usize, |m, &a| m | 1 << (n - 1 - a));
        let marginals: BTreeMap<String, f64> = CLASSES
            .iter()
            .zip(&self.truths)
            .map(|(c, t)| {
                let mass: f64 = t
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k & mask == mask)
                    .map(|(_, p)| p)
                    .sum();
                (c.to_string(), mass.min(1.0))
            })
            .collect();
        let lhs = attrs
            .iter()
            .map(|&a| Literal::new(a, self.evidence.value(a)))
            .collect();
        self.next_id += 1;
        Rule::new(format!("g{}", self.next_id), lhs, marginals).unwrap()
    }

    pub fn rule<R: Rng>(&mut self, rng: &mut R) -> Rule {
        self.rule_with(rng, self.n)
    }
}

/// Relative difference with the equiprobable cell value `2⁻ⁿ` as the floor
/// of the scale.
pub fn rel_diff(a: f64, b: f64, n: usize) -> f64 {
    (a - b).abs() / b.abs().max(2f64.powi(-(n as i32)))
}
