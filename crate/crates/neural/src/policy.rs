//! Encoder-decoder next-gate policy.
//!
//! The encoder reads the trajectory of the circuit to re-synthesize. At
//! decoder step `t` the input is the previous token (PAD at the start) plus
//! the positional code of the slot being predicted, so the model knows where
//! in the tree the next gate goes.

use aigen_core::decoder::{DecodeError, DecodeState, EquivSpec, Policy};
use aigen_core::trajectory::{decode_trajectory, Trajectory};
use aigen_core::Token;

use crate::classifier::sequence_inputs;
use crate::graph::{Graph, Mask, Var};
use crate::model::{Arch, Builder, Decoder, Encoder, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Mat;
use crate::NeuralError;

/// One teacher-forcing pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyExample {
    pub context_ids: Vec<usize>,
    pub context_pos: Mat,
    pub decoder_ids: Vec<usize>,
    pub decoder_pos: Mat,
    pub targets: Vec<usize>,
    /// Feasible tokens at every step, as bit sets over the vocabulary.
    pub allowed: Vec<u64>,
}

impl PolicyExample {
    /// `target` must compute the same function as `context`.
    pub fn new(context: &Trajectory, target: &Trajectory, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        let depth = max_depth_of(cfg, context.n_outputs)?;
        let (context_ids, context_pos) = sequence_inputs(context, depth)?;
        let aig = decode_trajectory(target, true)?;
        let spec = EquivSpec::from_aig(&aig).map_err(|e| NeuralError::Input(e.to_string()))?;
        let reference = decode_trajectory(context, true)?;
        if spec.first_mismatch(&reference).is_some() {
            return Err(NeuralError::Input(
                "target and context compute different functions".into(),
            ));
        }
        let mut state = DecodeState::for_spec(&spec).with_max_depth(depth);
        let mut decoder_ids = Vec::with_capacity(target.len());
        let mut targets = Vec::with_capacity(target.len());
        let mut allowed = Vec::with_capacity(target.len());
        let mut rows = Vec::with_capacity(target.len() * cfg.poscode_width);
        let mut prev = Token::PAD;
        for item in &target.items {
            decoder_ids.push(prev.id());
            rows.extend(position_row(&state, cfg.poscode_width, depth));
            allowed.push(state.feasible_choices(&spec).bits());
            targets.push(item.token.id());
            state
                .step(item.token, &spec)
                .map_err(|e| NeuralError::Input(format!("target replay: {e}")))?;
            prev = item.token;
        }
        Ok(PolicyExample {
            context_ids,
            context_pos,
            decoder_pos: Mat::from_vec(decoder_ids.len(), cfg.poscode_width, rows),
            decoder_ids,
            targets,
            allowed,
        })
    }
}

fn max_depth_of(cfg: &ModelConfig, n_outputs: usize) -> Result<usize, NeuralError> {
    if cfg.poscode_width < n_outputs || !(cfg.poscode_width - n_outputs).is_multiple_of(2) {
        return Err(NeuralError::Input(format!(
            "poscode width {} does not fit {n_outputs} outputs",
            cfg.poscode_width
        )));
    }
    Ok((cfg.poscode_width - n_outputs) / 2)
}

/// Poscode of the slot the next token will fill; zeros when only EOS can follow.
fn position_row(state: &DecodeState, width: usize, depth: usize) -> Vec<f64> {
    match state.next_position() {
        Some(p) => p.to_bits(depth, state.n_outputs()).into_iter().map(f64::from).collect(),
        None => vec![0.0; width],
    }
}

#[derive(Clone, Debug)]
pub struct PolicyModel {
    cfg: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl PolicyModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        Self::build(cfg, Builder::fresh(seed))
    }

    pub fn from_params(cfg: ModelConfig, params: &ParamStore) -> Result<Self, NeuralError> {
        Self::build(cfg, Builder::bind(params))
    }

    fn build(cfg: ModelConfig, mut bld: Builder) -> Result<Self, NeuralError> {
        cfg.validate()?;
        if cfg.arch != Arch::EncoderDecoder {
            return Err(NeuralError::Config("policy needs an encoder-decoder config".into()));
        }
        let encoder = Encoder::new(&mut bld, "enc", &cfg)?;
        let decoder = Decoder::new(&mut bld, "dec", &cfg)?;
        Ok(PolicyModel {
            params: bld.finish()?,
            cfg,
            encoder,
            decoder,
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

    fn check_len(&self, n: usize) -> Result<(), NeuralError> {
        if n > self.cfg.max_len {
            return Err(NeuralError::Input(format!(
                "sequence of {n} exceeds max_len {}",
                self.cfg.max_len
            )));
        }
        Ok(())
    }

    /// Logits (`prefix_len x vocab`) for every decoder position.
    pub fn logits_var(
        &self,
        g: &mut Graph,
        context_ids: &[usize],
        context_pos: &Mat,
        decoder_ids: &[usize],
        decoder_pos: &Mat,
    ) -> Result<Var, NeuralError> {
        self.check_len(context_ids.len())?;
        self.check_len(decoder_ids.len())?;
        let (memory, mask) = self.encoder.forward(g, context_ids, context_pos)?;
        self.decoder.forward(g, decoder_ids, decoder_pos, memory, &mask)
    }

    /// Mean cross-entropy, normalized over the feasible tokens of each step when `masked`.
    pub fn loss(&self, g: &mut Graph, ex: &PolicyExample, masked: bool) -> Result<Var, NeuralError> {
        let logits = self.logits_var(g, &ex.context_ids, &ex.context_pos, &ex.decoder_ids, &ex.decoder_pos)?;
        let targets: Vec<Option<usize>> = ex.targets.iter().map(|&t| Some(t)).collect();
        Ok(g.cross_entropy(logits, &targets, masked.then_some(ex.allowed.as_slice())))
    }

    /// Teacher-forced accuracy of the masked argmax: (correct, total).
    pub fn token_accuracy(&self, ex: &PolicyExample) -> Result<(usize, usize), NeuralError> {
        let mut g = Graph::new(&self.params);
        let logits = self.logits_var(
            &mut g,
            &ex.context_ids,
            &ex.context_pos,
            &ex.decoder_ids,
            &ex.decoder_pos,
        )?;
        g.check_finite()?;
        let l = g.value(logits);
        let mut correct = 0;
        for (i, &t) in ex.targets.iter().enumerate() {
            let row = l.row(i);
            let best = (0..row.len())
                .filter(|&j| (ex.allowed[i] >> j) & 1 == 1)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)));
            correct += usize::from(best == Some(t));
        }
        Ok((correct, ex.targets.len()))
    }

    /// Policy conditioned on the circuit `context`.
    pub fn policy_for(&self, context: &Trajectory) -> Result<NeuralPolicy<'_>, NeuralError> {
        let depth = max_depth_of(&self.cfg, context.n_outputs)?;
        let (ids, pos) = sequence_inputs(context, depth)?;
        self.check_len(ids.len())?;
        let mut g = Graph::new(&self.params);
        let (memory, mask) = self.encoder.forward(&mut g, &ids, &pos)?;
        g.check_finite()?;
        Ok(NeuralPolicy {
            model: self,
            memory: g.value(memory).clone(),
            mask,
            depth,
        })
    }
}

/// A trained policy bound to one source circuit; encoder output is computed once.
pub struct NeuralPolicy<'m> {
    model: &'m PolicyModel,
    memory: Mat,
    mask: Mask,
    depth: usize,
}

impl NeuralPolicy<'_> {
    pub fn max_depth(&self) -> usize {
        self.depth
    }

    fn try_scores(&self, state: &DecodeState) -> Result<Vec<f64>, NeuralError> {
        let cfg = &self.model.cfg;
        if state.vocab().size() != cfg.vocab_size {
            return Err(NeuralError::Input(format!(
                "state vocabulary {} does not match model vocabulary {}",
                state.vocab().size(),
                cfg.vocab_size
            )));
        }
        if state.max_depth() != self.depth || state.n_outputs() + 2 * self.depth != cfg.poscode_width {
            return Err(NeuralError::Input(format!(
                "state depth {} with {} outputs does not fit poscode width {}",
                state.max_depth(),
                state.n_outputs(),
                cfg.poscode_width
            )));
        }
        let items = state.items();
        let n = items.len() + 1;
        self.model.check_len(n)?;
        let mut ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n * cfg.poscode_width);
        ids.push(Token::PAD.id());
        for item in items {
            ids.push(item.token.id());
            match &item.pos {
                Some(p) => rows.extend(p.to_bits(self.depth, state.n_outputs()).into_iter().map(f64::from)),
                None => rows.extend(std::iter::repeat_n(0.0, cfg.poscode_width)),
            }
        }
        rows.extend(position_row(state, cfg.poscode_width, self.depth));
        let pos = Mat::from_vec(n, cfg.poscode_width, rows);
        let mut g = Graph::new(&self.model.params);
        let memory = g.constant(self.memory.clone());
        let logits = self.model.decoder.forward(&mut g, &ids, &pos, memory, &self.mask)?;
        g.check_finite()?;
        Ok(g.value(logits).row(n - 1).to_vec())
    }
}

impl Policy for NeuralPolicy<'_> {
    fn scores(&self, state: &DecodeState) -> Result<Vec<f64>, DecodeError> {
        self.try_scores(state).map_err(|e| DecodeError::Policy(e.to_string()))
    }
}
