//! `marginfer` command-line front-end.
//!
//! Exit codes: 0 success, 1 unreadable or invalid input, 2 numerical failure.

mod config;
mod output;

use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use marginfer::experiments::{self, LedOptions, SegmentTable};
use marginfer::inference::{InferenceEngine, InferenceError, SwapPath};
use marginfer::oracle::{self, materialize_a};
use marginfer::rulebase::{self, RuleBase};

use crate::config::{Config, Format};
use crate::output::Report;

#[derive(Debug, Parser)]
#[command(
    name = "marginfer",
    version,
    about = "Bayesian probabilities from marginal constraints"
)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON config file (tolerances, n_limit, seed, format).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Also print C, b and w as CSV.
    #[arg(long, global = true)]
    dump_system: bool,
    /// Compare incremental updates against full rebuilds.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Likelihoods and posterior for one evidence.
    Infer {
        rules: String,
        evidence: String,
        /// Repair negative implied probabilities before computing the posterior.
        #[arg(long)]
        clamp: bool,
    },
    /// Apply a JSON script of rule exchanges.
    Swap {
        rules: String,
        evidence: String,
        script: String,
    },
    /// Compare the closed form with the explicit reference on random instances.
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        r: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Duplicate one rule per instance to force singular systems.
        #[arg(long)]
        duplicates: bool,
    },
    /// Sign agreement of information measure and norm on random distributions.
    StudyAgreement {
        /// Distribution lengths (powers of two); default 4..16384.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Noisy seven-segment digit benchmark.
    BenchLed {
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 50_000)]
        trials: u64,
        /// Estimate rule marginals from N samples per digit.
        #[arg(long)]
        estimate_from_samples: Option<usize>,
    },
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<InferenceError> for Failure {
    fn from(err: InferenceError) -> Self {
        match err {
            InferenceError::NormalizationRow(_)
            | InferenceError::IndexOutOfRange { .. }
            | InferenceError::RuleDoesNotFire(_)
            | InferenceError::UnknownClass(_)
            | InferenceError::EvidenceMismatch { .. }
            | InferenceError::Constraint(_) => Failure::Input(err.to_string()),
            _ => Failure::Numerical(err.to_string()),
        }
    }
}

fn read(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{path}: {e}")))
}

fn load(rules: &str, evidence: &str) -> Result<(RuleBase, rulebase::Evidence), Failure> {
    let base = rulebase::parse_rulebase(&read(rules)?)
        .map_err(|e| Failure::Input(format!("{rules}: {e}")))?;
    let ev = base
        .parse_evidence(&read(evidence)?)
        .map_err(|e| Failure::Input(format!("{evidence}: {e}")))?;
    Ok((base, ev))
}

#[derive(Debug, Deserialize)]
struct SwapStep {
    index: usize,
    rule: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct SwapStepReport {
    pub step: usize,
    pub index: usize,
    pub rule: String,
    pub path: SwapPath,
    pub likelihoods: std::collections::BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rebuild_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct OracleCheckReport {
    pub trials: u64,
    pub n_max: usize,
    pub r_max: usize,
    pub duplicates: bool,
    pub seed: u64,
    pub max_abs_delta: f64,
    pub pseudo_inverse_instances: u64,
    pub pass: bool,
}

pub const ORACLE_TOLERANCE: f64 = 1e-9;

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::from_json(&read(path)?).map_err(Failure::Input)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(format) = cli.format {
        config.format = format;
    }
    let engine_cfg = config.engine();

    let report = match cli.command {
        Command::Infer {
            rules,
            evidence,
            clamp,
        } => {
            let (base, ev) = load(&rules, &evidence)?;
            let cfg = marginfer::EngineConfig {
                clamp_negative: clamp,
                ..engine_cfg
            };
            let engine = InferenceEngine::new(&base, &ev, &cfg)?;
            if cli.dump_system {
                print!("{}", engine.system().to_csv());
            }
            Report::Infer(engine.classify()?)
        }
        Command::Swap {
            rules,
            evidence,
            script,
        } => {
            let (base, ev) = load(&rules, &evidence)?;
            let steps: Vec<SwapStep> = serde_json::from_str(&read(&script)?)
                .map_err(|e| Failure::Input(format!("{script}: {e}")))?;
            let mut engine = InferenceEngine::new(&base, &ev, &engine_cfg)?;
            let mut out = Vec::with_capacity(steps.len());
            for (step, SwapStep { index, rule }) in steps.into_iter().enumerate() {
                let rule = base
                    .parse_rule(&rule.to_string())
                    .map_err(|e| Failure::Input(format!("{script} step {step}: {e}")))?;
                let id = rule.id().to_string();
                let outcome = engine.swap_rule(index, rule)?;
                let rebuild_delta = if cli.verify {
                    let fresh = InferenceEngine::from_firing(
                        engine.firing().to_vec(),
                        ev.clone(),
                        base.classes.clone(),
                        &engine_cfg,
                    )?;
                    let fresh = fresh.likelihoods()?;
                    Some(
                        outcome
                            .likelihoods
                            .iter()
                            .map(|(c, v)| (v - fresh[c]).abs())
                            .fold(0.0, f64::max),
                    )
                } else {
                    None
                };
                out.push(SwapStepReport {
                    step,
                    index,
                    rule: id,
                    path: outcome.path,
                    likelihoods: outcome.likelihoods,
                    rebuild_delta,
                });
            }
            if cli.dump_system {
                print!("{}", engine.system().to_csv());
            }
            Report::Swap(out)
        }
        Command::OracleCheck {
            n,
            r,
            trials,
            duplicates,
        } => {
            if !(1..=oracle::MAX_EXPLICIT_ATTRIBUTES).contains(&n) {
                return Err(Failure::Input(format!(
                    "--n must be in 1..={}",
                    oracle::MAX_EXPLICIT_ATTRIBUTES
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut worst = 0.0f64;
            let mut pseudo = 0;
            for _ in 0..trials {
                let inst = oracle::random_instance(&mut rng, n, r, duplicates);
                let engine = InferenceEngine::new(&inst.base, &inst.evidence, &engine_cfg)?;
                if engine.solve_method() == marginfer::linalg::SolveMethod::PseudoInverse {
                    pseudo += 1;
                }
                let a = materialize_a(engine.firing(), engine.n())
                    .map_err(|e| Failure::Input(e.to_string()))?;
                for class in inst.base.classes.classes() {
                    let fast = engine.likelihood(class)?.value;
                    let b = engine.system().b(class).expect("class present");
                    let exact = oracle::exact_inference(&a, b)
                        .map_err(|e| Failure::Numerical(e.to_string()))?;
                    worst = worst.max((fast - exact).abs());
                }
            }
            let report = OracleCheckReport {
                trials,
                n_max: n,
                r_max: r,
                duplicates,
                seed: config.seed,
                max_abs_delta: worst,
                pseudo_inverse_instances: pseudo,
                pass: worst <= ORACLE_TOLERANCE,
            };
            let pass = report.pass;
            print!("{}", Report::OracleCheck(report).render(config.format));
            return if pass {
                Ok(())
            } else {
                Err(Failure::Numerical(format!(
                    "oracle mismatch {worst:e} exceeds {ORACLE_TOLERANCE:e}"
                )))
            };
        }
        Command::StudyAgreement { lengths, trials } => {
            let lengths = if lengths.is_empty() {
                experiments::default_agreement_lengths()
            } else {
                lengths
            };
            Report::Agreement(
                experiments::agreement_study(&lengths, trials, config.seed)
                    .map_err(|e| Failure::Input(e.to_string()))?,
            )
        }
        Command::BenchLed {
            noise,
            trials,
            estimate_from_samples,
        } => {
            let options = LedOptions {
                table: config.segments.unwrap_or_else(SegmentTable::default),
                estimate_from_samples,
                engine: marginfer::EngineConfig {
                    check_nonnegativity: false,
                    ..engine_cfg
                },
            };
            Report::Led(
                experiments::led_benchmark(trials, noise, config.seed, &options).map_err(|e| {
                    match e {
                        experiments::ExperimentError::Inference(e) => Failure::from(e),
                        other => Failure::Input(other.to_string()),
                    }
                })?,
            )
        }
    };
    print!("{}", report.render(config.format));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
