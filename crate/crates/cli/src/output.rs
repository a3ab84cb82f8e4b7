use std::fmt::Write as _;

use marginfer::experiments::{AgreementReport, LedBenchmarkReport};
use marginfer::InferenceResult;

use crate::config::Format;
use crate::{OracleCheckReport, SwapStepReport};

pub enum Report {
    Infer(InferenceResult),
    Swap(Vec<SwapStepReport>),
    OracleCheck(OracleCheckReport),
    Agreement(AgreementReport),
    Led(LedBenchmarkReport),
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = match self {
                    Report::Infer(r) => serde_json::to_string_pretty(r),
                    Report::Swap(r) => serde_json::to_string_pretty(r),
                    Report::OracleCheck(r) => serde_json::to_string_pretty(r),
                    Report::Agreement(r) => serde_json::to_string_pretty(r),
                    Report::Led(r) => serde_json::to_string_pretty(r),
                }
                .expect("reports serialize");
                s.push('\n');
                s
            }
            Format::Csv => self.csv(),
            Format::Text => self.text(),
        }
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Infer(r) => {
                out.push_str(
                    "class,likelihood,posterior,nonnegativity,clamp_iterations,residual\n",
                );
                for (class, like) in &r.likelihoods {
                    let d = &r.diagnostics.classes[class];
                    let _ = writeln!(
                        out,
                        "{class},{like},{},{:?},{},{}",
                        r.posterior[class],
                        d.nonnegativity,
                        d.clamp_iterations,
                        d.consistency_residual
                    );
                }
            }
            Report::Swap(steps) => {
                out.push_str("step,index,rule,path,class,likelihood,rebuild_delta\n");
                for s in steps {
                    for (class, like) in &s.likelihoods {
                        let delta = s.rebuild_delta.map(|d| d.to_string()).unwrap_or_default();
                        let _ = writeln!(
                            out,
                            "{},{},{},{:?},{class},{like},{delta}",
                            s.step, s.index, s.rule, s.path
                        );
                    }
                }
            }
            Report::OracleCheck(r) => {
                out.push_str("trials,n_max,r_max,duplicates,seed,max_abs_delta,pseudo_inverse_instances,pass\n");
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.trials,
                    r.n_max,
                    r.r_max,
                    r.duplicates,
                    r.seed,
                    r.max_abs_delta,
                    r.pseudo_inverse_instances,
                    r.pass
                );
            }
            Report::Agreement(r) => {
                out.push_str("l,trials,agreements,agreement,seed\n");
                for rec in &r.records {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        rec.l, rec.trials, rec.agreements, rec.agreement, r.seed
                    );
                }
                let _ = writeln!(out, "pooled,,,{},{}", r.pooled, r.seed);
            }
            Report::Led(r) => {
                out.push_str("true_digit");
                for d in 0..r.confusion.len() {
                    let _ = write!(out, ",pred_{d}");
                }
                out.push('\n');
                for (d, row) in r.confusion.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                    let _ = writeln!(out, "{d},{}", cells.join(","));
                }
                let _ = writeln!(
                    out,
                    "# noise_p={},trials={},accuracy={},bayes_optimal={},seed={}",
                    r.noise_p, r.trials, r.accuracy, r.bayes_optimal, r.seed
                );
            }
        }
        out
    }

    fn text(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Infer(r) => {
                let _ = writeln!(out, "argmax: {}", r.argmax);
                for (class, like) in &r.likelihoods {
                    let _ = writeln!(
                        out,
                        "  {class}: p(e|{class}) = {like:.12}  posterior = {:.12}",
                        r.posterior[class]
                    );
                }
                let d = &r.diagnostics;
                let _ = writeln!(
                    out,
                    "rules fired: {}, method: {:?}, condition: {}",
                    d.rules_fired,
                    d.solve_method,
                    d.condition_estimate
                        .map_or("n/a".into(), |c| format!("{c:.3e}"))
                );
                if !d.floored.is_empty() {
                    let _ = writeln!(out, "floored at zero: {}", d.floored.join(", "));
                }
            }
            Report::Swap(steps) => {
                for s in steps {
                    let _ = write!(
                        out,
                        "step {} index {} <- {} ({:?})",
                        s.step, s.index, s.rule, s.path
                    );
                    if let Some(d) = s.rebuild_delta {
                        let _ = write!(out, " rebuild delta {d:.3e}");
                    }
                    out.push('\n');
                    for (class, like) in &s.likelihoods {
                        let _ = writeln!(out, "  {class}: {like:.12}");
                    }
                }
            }
            Report::OracleCheck(r) => {
                let _ = writeln!(
                    out,
                    "{} trials (n <= {}, r <= {}{}): max |delta| = {:.3e}, pseudo-inverse cases {} -> {}",
                    r.trials,
                    r.n_max,
                    r.r_max,
                    if r.duplicates { ", duplicates" } else { "" },
                    r.max_abs_delta,
                    r.pseudo_inverse_instances,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            Report::Agreement(r) => {
                for rec in &r.records {
                    let _ = writeln!(
                        out,
                        "l = {:>6}: {:.4} ({} / {})",
                        rec.l, rec.agreement, rec.agreements, rec.trials
                    );
                }
                let _ = writeln!(out, "pooled agreement: {:.4} (seed {})", r.pooled, r.seed);
            }
            Report::Led(r) => {
                let _ = writeln!(
                    out,
                    "noise {}: accuracy {:.4} ± {:.4} over {} trials; Bayes optimum {:.4} (seed {})",
                    r.noise_p, r.accuracy, r.std_error, r.trials, r.bayes_optimal, r.seed
                );
            }
        }
        out
    }
}
