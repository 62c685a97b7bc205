//! Synthesis methods and the evaluation report.

use std::fmt;
use std::str::FromStr;

use aigen_core::decoder::{generate, DecodeError, DecodeMode, Policy};
use aigen_core::trajectory::{encode, DEFAULT_MAX_DEPTH};
use aigen_core::{synthesize_mcts, Aig, EquivSpec, SearchConfig, UniformPolicy};
use aigen_neural::PolicyModel;
use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Greedy,
    Mcts { steps: usize, rollouts: usize },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Greedy => write!(f, "greedy"),
            Method::Mcts { steps, rollouts } => write!(f, "mcts(S={steps},R={rollouts})"),
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    /// `greedy` or `mcts:S:R`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["greedy"] => Ok(Method::Greedy),
            ["mcts", steps, rollouts] => Ok(Method::Mcts {
                steps: steps.parse()?,
                rollouts: rollouts.parse::<usize>()?.max(1),
            }),
            _ => bail!("unknown method `{s}` (expected greedy or mcts:S:R)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("decoding failed: {0}")]
    Decode(#[from] DecodeError),
    #[error("synthesized circuit differs from its spec at output {output}, row {row}")]
    Verification { output: usize, row: usize },
    #[error("{0}")]
    Model(String),
}

/// Where next-token scores come from.
#[derive(Clone, Copy)]
pub enum PolicySource<'a> {
    Uniform,
    Neural(&'a PolicyModel),
}

/// Re-synthesizes `source`; the result is always checked against the source's tables.
pub fn synthesize(
    source: &Aig,
    policy: PolicySource<'_>,
    method: Method,
    max_len: usize,
    seed: u64,
) -> Result<Aig, SynthError> {
    let spec = EquivSpec::from_aig(source)?;
    let aig = match policy {
        PolicySource::Uniform => run_method(&UniformPolicy, &spec, method, max_len, seed)?,
        PolicySource::Neural(model) => {
            let context = encode(source).map_err(|e| SynthError::Model(e.to_string()))?;
            let p = model
                .policy_for(&context)
                .map_err(|e| SynthError::Model(e.to_string()))?;
            run_method(&p, &spec, method, max_len, seed)?
        }
    };
    if let Some((output, row)) = spec.first_mismatch(&aig) {
        return Err(SynthError::Verification { output, row });
    }
    Ok(aig)
}

fn run_method<P: Policy>(
    policy: &P,
    spec: &EquivSpec,
    method: Method,
    max_len: usize,
    seed: u64,
) -> Result<Aig, DecodeError> {
    match method {
        Method::Greedy => Ok(generate(policy, spec, max_len, DecodeMode::Greedy)?.aig),
        Method::Mcts { steps, rollouts } => {
            let cfg = SearchConfig::new(steps, rollouts, seed);
            Ok(synthesize_mcts(policy, spec, &cfg, max_len)?.aig)
        }
    }
}

/// Checks that a policy model can drive decoding for this signature.
pub fn check_model_signature(model: &PolicyModel, n_inputs: usize, n_outputs: usize) -> Result<()> {
    let cfg = model.config();
    if cfg.n_inputs() != n_inputs || cfg.poscode_width != 2 * DEFAULT_MAX_DEPTH + n_outputs {
        return Err(anyhow!(
            "checkpoint is for {} inputs and poscode width {}, circuit has {n_inputs} inputs and {n_outputs} outputs",
            cfg.n_inputs(),
            cfg.poscode_width
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub better: usize,
    pub equal: usize,
    pub worse: usize,
    /// Not completed within the length budget, or otherwise failed; excluded from the mean.
    pub failures: usize,
    pub mean_ands: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub set_size: usize,
    pub baseline: String,
    pub baseline_mean_ands: f64,
    pub original_mean_ands: f64,
    pub max_len: usize,
    pub seed: u64,
    pub rows: Vec<MethodRow>,
    pub environment: Environment,
}

impl EvalReport {
    /// Table-style text rendering.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} circuits; original mean #AND {:.3}; baseline ({}) mean #AND {:.3}\n",
            self.set_size, self.original_mean_ands, self.baseline, self.baseline_mean_ands
        );
        s.push_str(&format!(
            "{:<22} {:>7} {:>7} {:>7} {:>8} {:>10}\n",
            "method", "better", "equal", "worse", "failed", "mean #AND"
        ));
        for r in &self.rows {
            let mean = r.mean_ands.map_or("-".to_string(), |m| format!("{m:.3}"));
            let flag = if r.failures > 0 { "*" } else { "" };
            s.push_str(&format!(
                "{:<22} {:>7} {:>7} {:>7} {:>8} {:>10}{flag}\n",
                r.method, r.better, r.equal, r.worse, r.failures, mean
            ));
        }
        if self.rows.iter().any(|r| r.failures > 0) {
            s.push_str("* failed circuits are not counted in the mean\n");
        }
        s
    }
}

pub struct EvalItem {
    pub source: Aig,
    pub baseline_ands: usize,
}

pub struct EvalSetup<'a> {
    pub policy: PolicySource<'a>,
    pub methods: Vec<Method>,
    pub max_len: usize,
    pub seed: u64,
    pub baseline: String,
    pub workers: usize,
}

pub fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs every method on every item. Per-item failures are counted, never fatal,
/// except a verification failure, which means the decoder is broken.
pub fn evaluate(items: &[EvalItem], setup: &EvalSetup<'_>) -> Result<EvalReport> {
    let n = items.len().max(1) as f64;
    let mut rows = Vec::new();
    for &method in &setup.methods {
        let results: Vec<Result<usize, SynthError>> = items
            .par_iter()
            .enumerate()
            .map(|(i, it)| {
                synthesize(
                    &it.source,
                    setup.policy,
                    method,
                    setup.max_len,
                    item_seed(setup.seed, i),
                )
                .map(|a| a.count_ands())
            })
            .collect();
        let mut row = MethodRow {
            method: method.to_string(),
            better: 0,
            equal: 0,
            worse: 0,
            failures: 0,
            mean_ands: None,
        };
        let mut sum = 0usize;
        for (it, r) in items.iter().zip(results) {
            match r {
                Ok(a) => {
                    sum += a;
                    match a.cmp(&it.baseline_ands) {
                        std::cmp::Ordering::Less => row.better += 1,
                        std::cmp::Ordering::Equal => row.equal += 1,
                        std::cmp::Ordering::Greater => row.worse += 1,
                    }
                }
                Err(e @ SynthError::Verification { .. }) => return Err(e.into()),
                Err(_) => row.failures += 1,
            }
        }
        let ok = items.len() - row.failures;
        row.mean_ands = (ok > 0).then(|| sum as f64 / ok as f64);
        rows.push(row);
    }
    Ok(EvalReport {
        set_size: items.len(),
        baseline: setup.baseline.clone(),
        baseline_mean_ands: items.iter().map(|i| i.baseline_ands as f64).sum::<f64>() / n,
        original_mean_ands: items.iter().map(|i| i.source.count_ands() as f64).sum::<f64>() / n,
        max_len: setup.max_len,
        seed: setup.seed,
        rows,
        environment: Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            workers: setup.workers,
        },
    })
}
