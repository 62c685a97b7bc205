//! Runs an external synthesizer on a circuit and accepts only verified results.

use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use aigen_core::aiger::{parse_aag, write_aag};
use aigen_core::{Aig, EquivSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("command template `{template}` must contain {{in}} and {{out}}")]
    Template { template: String },
    #[error("could not run `{template}`: {source}")]
    Spawn { template: String, source: std::io::Error },
    #[error("`{template}` exited with {status}: {stderr}")]
    Failed {
        template: String,
        status: String,
        stderr: String,
    },
    #[error("`{template}` timed out after {secs} s")]
    Timeout { template: String, secs: f64 },
    #[error("output of `{template}` is not valid AIGER: {reason}")]
    Unparseable { template: String, reason: String },
    #[error("output of `{template}` differs from its input at output {output}, row {row}")]
    NotEquivalent {
        template: String,
        output: usize,
        row: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct ExternalTool {
    /// Shell command with `{in}` and `{out}` placeholders.
    pub template: String,
    pub timeout: Duration,
}

impl ExternalTool {
    pub fn new(template: impl Into<String>, timeout: Duration) -> Result<Self, BridgeError> {
        let template = template.into();
        if !template.contains("{in}") || !template.contains("{out}") {
            return Err(BridgeError::Template { template });
        }
        Ok(ExternalTool { template, timeout })
    }

    pub fn run(&self, input: &Aig) -> Result<Aig, BridgeError> {
        let dir = tempfile::tempdir()?;
        let (inp, outp) = (dir.path().join("in.aag"), dir.path().join("out.aag"));
        std::fs::write(&inp, write_aag(input))?;
        let cmd = self
            .template
            .replace("{in}", &shell_quote(&inp.to_string_lossy()))
            .replace("{out}", &shell_quote(&outp.to_string_lossy()));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                template: self.template.clone(),
                source,
            })?;
        let start = Instant::now();
        let status = loop {
            if let Some(s) = child.try_wait()? {
                break s;
            }
            if start.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BridgeError::Timeout {
                    template: self.template.clone(),
                    secs: self.timeout.as_secs_f64(),
                });
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut e) = child.stderr.take() {
                use std::io::Read;
                let _ = e.read_to_string(&mut stderr);
            }
            return Err(BridgeError::Failed {
                template: self.template.clone(),
                status: status.to_string(),
                stderr: stderr.trim().to_string(),
            });
        }
        let text = std::fs::read_to_string(&outp).map_err(|e| BridgeError::Unparseable {
            template: self.template.clone(),
            reason: e.to_string(),
        })?;
        let out = parse_aag(&text).map_err(|e| BridgeError::Unparseable {
            template: self.template.clone(),
            reason: e.to_string(),
        })?;
        let spec = EquivSpec::from_aig(input).map_err(|e| BridgeError::Unparseable {
            template: self.template.clone(),
            reason: e.to_string(),
        })?;
        if out.n_inputs() != input.n_inputs() || out.n_outputs() != input.n_outputs() {
            return Err(BridgeError::Unparseable {
                template: self.template.clone(),
                reason: format!(
                    "signature {}/{} differs from input {}/{}",
                    out.n_inputs(),
                    out.n_outputs(),
                    input.n_inputs(),
                    input.n_outputs()
                ),
            });
        }
        if let Some((output, row)) = spec.first_mismatch(&out) {
            return Err(BridgeError::NotEquivalent {
                template: self.template.clone(),
                output,
                row,
            });
        }
        Ok(out)
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}
