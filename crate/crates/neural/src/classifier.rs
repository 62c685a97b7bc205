//! Encoder-only truth-table classifier: reads a circuit trajectory and
//! predicts each of the 2^N truth-table bits.

use aigen_core::aig::random_tree_aig;
use aigen_core::trajectory::{encode_with_depth, to_model_inputs, Trajectory};
use aigen_core::Aig;
use rand::Rng;

use crate::graph::{Graph, Var};
use crate::model::{Arch, Builder, ClassifierHead, Encoder, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Mat;
use crate::NeuralError;

#[derive(Clone, Debug, PartialEq)]
pub struct TtExample {
    pub tokens: Vec<usize>,
    pub poscodes: Mat,
    /// One 0/1 target per truth-table row.
    pub targets: Vec<f64>,
}

impl TtExample {
    /// Example for the single output of `aig`.
    pub fn from_aig(aig: &Aig, max_depth: usize) -> Result<Self, NeuralError> {
        let traj = encode_with_depth(aig, max_depth)?;
        let table = aig
            .eval_truth_tables()
            .map_err(|e| NeuralError::Input(e.to_string()))?
            .remove(0);
        let (tokens, poscodes) = sequence_inputs(&traj, max_depth)?;
        Ok(TtExample {
            tokens,
            poscodes,
            targets: table.to_bits().into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        })
    }

    /// Random tree circuit of depth at most `max_depth`.
    pub fn sample<R: Rng>(n_inputs: usize, max_depth: usize, rng: &mut R) -> Self {
        let aig = random_tree_aig(n_inputs, max_depth, rng);
        Self::from_aig(&aig, max_depth).expect("tree depth is bounded")
    }

    /// Copy with `extra` PAD positions appended.
    pub fn padded(&self, extra: usize) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.extend(std::iter::repeat_n(0, extra));
        let w = self.poscodes.cols();
        let mut data = self.poscodes.data().to_vec();
        data.extend(std::iter::repeat_n(0.0, extra * w));
        TtExample {
            tokens,
            poscodes: Mat::from_vec(self.tokens.len() + extra, w, data),
            targets: self.targets.clone(),
        }
    }
}

/// Unpadded token ids and poscode rows of a trajectory.
pub fn sequence_inputs(traj: &Trajectory, max_depth: usize) -> Result<(Vec<usize>, Mat), NeuralError> {
    let mi = to_model_inputs(traj, traj.len(), max_depth)?;
    Ok((mi.token_ids, Mat::from_vec(traj.len(), mi.poscode_width, mi.poscodes)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TtAccuracy {
    /// Fraction of correctly predicted truth-table bits.
    pub per_bit: f64,
    /// Fraction of examples with every bit correct.
    pub exact: f64,
}

#[derive(Clone, Debug)]
pub struct TtClassifier {
    cfg: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    head: ClassifierHead,
}

impl TtClassifier {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        Self::build(cfg, Builder::fresh(seed))
    }

    /// Rebinds a parameter store (e.g. from a checkpoint) to this architecture.
    pub fn from_params(cfg: ModelConfig, params: &ParamStore) -> Result<Self, NeuralError> {
        Self::build(cfg, Builder::bind(params))
    }

    fn build(cfg: ModelConfig, mut bld: Builder) -> Result<Self, NeuralError> {
        cfg.validate()?;
        if cfg.arch != Arch::EncoderOnly {
            return Err(NeuralError::Config("classifier needs an encoder-only config".into()));
        }
        let encoder = Encoder::new(&mut bld, "enc", &cfg)?;
        let head = ClassifierHead::new(&mut bld, &cfg)?;
        Ok(TtClassifier {
            params: bld.finish()?,
            cfg,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn logits_var(&self, g: &mut Graph, tokens: &[usize], poscodes: &Mat) -> Result<Var, NeuralError> {
        if tokens.len() > self.cfg.max_len {
            return Err(NeuralError::Input(format!(
                "sequence of {} exceeds max_len {}",
                tokens.len(),
                self.cfg.max_len
            )));
        }
        let (hidden, _) = self.encoder.forward(g, tokens, poscodes)?;
        let live: Vec<bool> = tokens.iter().map(|&t| t != 0).collect();
        Ok(self.head.forward(g, hidden, &live))
    }

    pub fn logits(&self, tokens: &[usize], poscodes: &Mat) -> Result<Vec<f64>, NeuralError> {
        let mut g = Graph::new(&self.params);
        let out = self.logits_var(&mut g, tokens, poscodes)?;
        g.check_finite()?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn loss(&self, g: &mut Graph, ex: &TtExample) -> Result<Var, NeuralError> {
        if ex.targets.len() != self.cfg.n_labels {
            return Err(NeuralError::Input(format!(
                "{} targets for {} labels",
                ex.targets.len(),
                self.cfg.n_labels
            )));
        }
        let logits = self.logits_var(g, &ex.tokens, &ex.poscodes)?;
        Ok(g.bce_with_logits(logits, &ex.targets))
    }

    pub fn evaluate(&self, examples: &[TtExample]) -> Result<TtAccuracy, NeuralError> {
        let (mut bits, mut total, mut exact) = (0usize, 0usize, 0usize);
        for ex in examples {
            let logits = self.logits(&ex.tokens, &ex.poscodes)?;
            let right = logits
                .iter()
                .zip(&ex.targets)
                .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
                .count();
            bits += right;
            total += ex.targets.len();
            exact += usize::from(right == ex.targets.len());
        }
        Ok(TtAccuracy {
            per_bit: bits as f64 / total.max(1) as f64,
            exact: exact as f64 / examples.len().max(1) as f64,
        })
    }
}
