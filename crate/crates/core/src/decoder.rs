//! Gate-by-gate circuit construction with equivalence-preserving masking.
//!
//! [`DecodeState`] consumes one trajectory token at a time. Gate tokens open
//! a new AND whose inputs arrive later; input tokens fill the next free slot
//! of the innermost open gate, after which every fully specified gate is
//! closed and hashed into the circuit built so far (isomorphic gates merge).
//!
//! Before each token the masking pass evaluates the output under construction
//! with three-valued logic (`0 ∧ ? = 0`) against the target truth table and
//! rules out any candidate that already contradicts a row.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aig::{Aig, Lit, PartialTruthTable, TruthTable};
use crate::search::step_reward;
use crate::trajectory::{PosCode, Slot, Token, TokenKind, TrajItem, Trajectory, Vocab, DEFAULT_MAX_DEPTH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("token {token} is not a valid choice here")]
    InvalidToken { token: u16 },
    #[error("construction already finished")]
    Finished,
    #[error("positional stack deeper than {max_depth}")]
    DepthOverflow { max_depth: usize },
    #[error("no complete circuit within {max_len} tokens")]
    LengthExceeded { max_len: usize },
    #[error("every token is masked")]
    DeadEnd,
    #[error("generated circuit differs from the specification at output {output}, row {row}")]
    NotEquivalent { output: usize, row: usize },
    #[error(
        "specification has {spec_inputs} inputs and {spec_outputs} outputs, decoder expects {inputs} and {outputs}"
    )]
    SpecMismatch {
        spec_inputs: usize,
        spec_outputs: usize,
        inputs: usize,
        outputs: usize,
    },
    #[error("invalid specification: {0}")]
    BadSpec(String),
    #[error("policy failed: {0}")]
    Policy(String),
}

/// Target function: one complete truth table per output.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EquivSpec {
    n_inputs: usize,
    tables: Vec<TruthTable>,
}

impl EquivSpec {
    pub fn new(n_inputs: usize, tables: Vec<TruthTable>) -> Result<Self, DecodeError> {
        if tables.is_empty() {
            return Err(DecodeError::BadSpec("no outputs".into()));
        }
        if let Some(t) = tables.iter().find(|t| t.n_vars() != n_inputs) {
            return Err(DecodeError::BadSpec(format!(
                "table over {} inputs in a {n_inputs}-input specification",
                t.n_vars()
            )));
        }
        Ok(EquivSpec { n_inputs, tables })
    }

    pub fn from_aig(aig: &Aig) -> Result<Self, DecodeError> {
        let tables = aig
            .eval_truth_tables()
            .map_err(|e| DecodeError::BadSpec(e.to_string()))?;
        Self::new(aig.n_inputs(), tables)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[TruthTable] {
        &self.tables
    }

    /// First `(output, row)` where `aig` disagrees.
    pub fn first_mismatch(&self, aig: &Aig) -> Option<(usize, usize)> {
        let got = aig.eval_truth_tables().ok()?;
        self.tables
            .iter()
            .zip(&got)
            .enumerate()
            .find_map(|(k, (want, got))| want.first_difference(got).map(|row| (k, row)))
    }
}

/// Bit set over the token vocabulary (at most 64 ids).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TokenMask(u64);

impl TokenMask {
    pub fn empty() -> Self {
        TokenMask(0)
    }

    pub fn only(token: Token) -> Self {
        TokenMask(1 << token.0)
    }

    pub fn insert(&mut self, token: Token) {
        self.0 |= 1 << token.0;
    }

    pub fn remove(&mut self, token: Token) {
        self.0 &= !(1 << token.0);
    }

    pub fn contains(&self, token: Token) -> bool {
        token.0 < 64 && self.0 >> token.0 & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = Token> + '_ {
        let bits = self.0;
        (0..64u16).filter(move |i| bits >> i & 1 == 1).map(Token)
    }

    pub fn bits(&self) -> u64 {
        self.0
    }
}

impl std::fmt::Debug for TokenMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter().map(|t| t.0)).finish()
    }
}

#[derive(Clone, Debug)]
struct OpenGate {
    inverted: bool,
    /// Resolved fanin literals; a slot whose child is still open stays `None`.
    inputs: [Option<Lit>; 2],
    /// How many slots have been handed a token (resolved or still open).
    assigned: usize,
    /// Slot of the parent this gate occupies; `None` for an output root.
    slot: Option<Slot>,
    pos: PosCode,
}

/// Result of feeding one token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub reward: i64,
    pub merges: usize,
}

/// Construction state: open-gate stack, finished outputs and the circuit so far.
#[derive(Clone, Debug)]
pub struct DecodeState {
    vocab: Vocab,
    n_outputs: usize,
    max_depth: usize,
    merge: bool,
    aig: Aig,
    /// Truth table per node of `aig`, kept in step with it.
    tables: Vec<TruthTable>,
    path: Vec<OpenGate>,
    outputs: Vec<Lit>,
    items: Vec<TrajItem>,
    reward: i64,
    merges_last_step: usize,
    finished: bool,
}

impl DecodeState {
    pub fn new(n_inputs: usize, n_outputs: usize) -> Self {
        let aig = Aig::new(n_inputs);
        let tables = aig.node_tables().expect("decoder supports at most 16 inputs");
        DecodeState {
            vocab: Vocab::new(n_inputs),
            n_outputs,
            max_depth: DEFAULT_MAX_DEPTH,
            merge: true,
            aig,
            tables,
            path: Vec::new(),
            outputs: Vec::new(),
            items: Vec::new(),
            reward: 0,
            merges_last_step: 0,
            finished: false,
        }
    }

    pub fn for_spec(spec: &EquivSpec) -> Self {
        Self::new(spec.n_inputs(), spec.n_outputs())
    }

    pub fn with_merge(mut self, merge: bool) -> Self {
        self.merge = merge;
        self
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn n_inputs(&self) -> usize {
        self.vocab.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn path_is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn path_depth(&self) -> usize {
        self.path.len()
    }

    pub fn completed_outputs(&self) -> &[Lit] {
        &self.outputs
    }

    /// Cumulative reward; always `-(distinct AND gates created)`.
    pub fn reward(&self) -> i64 {
        self.reward
    }

    pub fn merges_last_step(&self) -> usize {
        self.merges_last_step
    }

    pub fn n_gates(&self) -> usize {
        self.aig.n_ands()
    }

    /// Tokens emitted so far (EOS included once finished).
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[TrajItem] {
        &self.items
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            n_inputs: self.n_inputs(),
            n_outputs: self.n_outputs,
            items: self.items.clone(),
        }
    }

    /// Circuit built so far, with the completed outputs attached.
    pub fn to_aig(&self) -> Aig {
        let mut aig = self.aig.clone();
        for &o in &self.outputs {
            aig.add_output(o).expect("output literal exists");
        }
        aig
    }

    /// Position the next token will occupy; `None` when only EOS (or nothing) can follow.
    pub fn next_position(&self) -> Option<PosCode> {
        if self.finished {
            return None;
        }
        match self.path.last() {
            None if self.outputs.len() < self.n_outputs => Some(PosCode::root(self.outputs.len())),
            None => None,
            Some(top) => top.pos.push(Slot::from_index(top.assigned), self.max_depth).ok(),
        }
    }

    /// Index of the output currently under construction (or next to start).
    pub fn current_output(&self) -> usize {
        self.outputs.len()
    }

    /// Applies a token following the construction rules only, without any
    /// equivalence check.
    pub fn apply_unchecked(&mut self, token: Token) -> Result<StepOutcome, DecodeError> {
        if self.finished {
            return Err(DecodeError::Finished);
        }
        let invalid = DecodeError::InvalidToken { token: token.0 };
        let kind = self.vocab.kind(token).ok_or(invalid.clone())?;
        let pos = match kind {
            TokenKind::Pad => return Err(invalid),
            TokenKind::Eos => {
                if !self.path.is_empty() || self.outputs.len() != self.n_outputs {
                    return Err(invalid);
                }
                self.finished = true;
                self.merges_last_step = 0;
                self.items.push(TrajItem { token, pos: None });
                return Ok(StepOutcome { reward: 0, merges: 0 });
            }
            _ => match self.path.last() {
                None if self.outputs.len() >= self.n_outputs => return Err(invalid),
                None => PosCode::root(self.outputs.len()),
                Some(top) => top
                    .pos
                    .push(Slot::from_index(top.assigned), self.max_depth)
                    .map_err(|_| DecodeError::DepthOverflow {
                        max_depth: self.max_depth,
                    })?,
            },
        };
        self.items.push(TrajItem {
            token,
            pos: Some(pos.clone()),
        });

        let mut merges = 0;
        match kind {
            TokenKind::And { inverted } => {
                let slot = self.path.last_mut().map(|top| {
                    let s = Slot::from_index(top.assigned);
                    top.assigned += 1;
                    s
                });
                self.path.push(OpenGate {
                    inverted,
                    inputs: [None, None],
                    assigned: 0,
                    slot,
                    pos,
                });
            }
            TokenKind::Input { index, inverted } => {
                let lit = Lit::new(index, inverted);
                match self.path.last_mut() {
                    None => self.outputs.push(lit),
                    Some(top) => {
                        top.inputs[top.assigned] = Some(lit);
                        top.assigned += 1;
                        merges = self.close_complete_gates();
                    }
                }
            }
            TokenKind::Pad | TokenKind::Eos => unreachable!(),
        }
        let reward = step_reward(kind, merges);
        self.reward += reward;
        self.merges_last_step = merges;
        Ok(StepOutcome { reward, merges })
    }

    /// Pops every fully specified gate off the stack, hashing it into the circuit.
    fn close_complete_gates(&mut self) -> usize {
        let mut merges = 0;
        while let Some(top) = self.path.last() {
            let (Some(a), Some(b)) = (top.inputs[0], top.inputs[1]) else {
                break;
            };
            let gate = self.path.pop().expect("non-empty");
            let existing = if self.merge { self.aig.lookup_and(a, b) } else { None };
            let node = match existing {
                Some(lit) => {
                    merges += 1;
                    lit
                }
                None => {
                    let lit = self.aig.add_and(a, b, false);
                    let t = self.lit_table(a).and(&self.lit_table(b));
                    self.tables.push(t);
                    lit
                }
            };
            let lit = node.invert_if(gate.inverted);
            match (self.path.last_mut(), gate.slot) {
                (Some(parent), Some(slot)) => parent.inputs[slot.index()] = Some(lit),
                _ => self.outputs.push(lit),
            }
        }
        merges
    }

    fn lit_table(&self, lit: Lit) -> TruthTable {
        self.tables[lit.node()].with_inversion(lit.is_inverted())
    }

    fn lit_partial(&self, lit: Lit) -> PartialTruthTable {
        PartialTruthTable::from(&self.lit_table(lit))
    }

    /// Three-valued table of the output under construction, with `candidate`
    /// (if any) installed in the next free slot.
    fn partial_with(&self, candidate: Option<&PartialTruthTable>) -> PartialTruthTable {
        let n = self.n_inputs();
        let top = self.path.len().saturating_sub(1);
        let mut below: Option<PartialTruthTable> = None;
        for (depth, gate) in self.path.iter().enumerate().rev() {
            let mut ins = [PartialTruthTable::unknown(n), PartialTruthTable::unknown(n)];
            for (i, input) in gate.inputs.iter().enumerate() {
                if let Some(lit) = input {
                    ins[i] = self.lit_partial(*lit);
                }
            }
            if depth == top {
                if let Some(c) = candidate {
                    ins[gate.assigned] = c.clone();
                }
            } else {
                let child_slot = self.path[depth + 1].slot.expect("inner gate has a slot");
                ins[child_slot.index()] = below.take().expect("child evaluated first");
            }
            below = Some(ins[0].and(&ins[1]).with_inversion(gate.inverted));
        }
        match below {
            Some(t) => t,
            None => candidate.cloned().unwrap_or_else(|| PartialTruthTable::unknown(n)),
        }
    }

    /// Known part of the output currently under construction.
    pub fn partial_table(&self) -> PartialTruthTable {
        self.partial_with(None)
    }

    fn candidate_partial(&self, token: Token) -> Option<PartialTruthTable> {
        match self.vocab.kind(token)? {
            TokenKind::Input { index, inverted } => Some(self.lit_partial(Lit::new(index, inverted))),
            TokenKind::And { .. } => Some(PartialTruthTable::unknown(self.n_inputs())),
            _ => None,
        }
    }

    /// Scalar three-valued evaluation of the output under construction on one
    /// input row, with `candidate` tentatively placed in the next free slot.
    /// `None` means the value cannot be determined yet.
    pub fn partial_eval(&self, candidate: Option<Token>, row: usize) -> Option<bool> {
        let mut memo = HashMap::new();
        let cand = candidate.and_then(|t| self.vocab.kind(t));
        if self.path.is_empty() {
            return match cand {
                Some(TokenKind::Input { index, inverted }) => {
                    Some(self.eval_lit(Lit::new(index, inverted), row, &mut memo))
                }
                _ => None,
            };
        }
        self.eval_open(0, cand, row, &mut memo)
    }

    fn eval_open(
        &self,
        depth: usize,
        cand: Option<TokenKind>,
        row: usize,
        memo: &mut HashMap<usize, bool>,
    ) -> Option<bool> {
        let gate = &self.path[depth];
        let is_top = depth + 1 == self.path.len();
        let value_of = |i: usize, memo: &mut HashMap<usize, bool>| -> Option<bool> {
            if let Some(lit) = gate.inputs[i] {
                return Some(self.eval_lit(lit, row, memo));
            }
            if is_top {
                if i == gate.assigned {
                    return match cand {
                        Some(TokenKind::Input { index, inverted }) => {
                            Some(self.eval_lit(Lit::new(index, inverted), row, memo))
                        }
                        _ => None,
                    };
                }
                return None;
            }
            if self.path[depth + 1].slot.map(Slot::index) == Some(i) {
                return self.eval_open(depth + 1, cand, row, memo);
            }
            None
        };
        let i1 = value_of(0, memo);
        let i2 = value_of(1, memo);
        let and = match (i1, i2) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(a), Some(b)) => Some(a && b),
            _ => None,
        };
        and.map(|v| v ^ gate.inverted)
    }

    fn eval_lit(&self, lit: Lit, row: usize, memo: &mut HashMap<usize, bool>) -> bool {
        let node = lit.node();
        let v = if node == 0 {
            false
        } else if self.aig.is_input(node) {
            (row >> (node - 1)) & 1 == 1
        } else if let Some(&v) = memo.get(&node) {
            v
        } else {
            let [a, b] = self.aig.fanins(node).expect("and node");
            let v = self.eval_lit(a, row, memo) && self.eval_lit(b, row, memo);
            memo.insert(node, v);
            v
        };
        v ^ lit.is_inverted()
    }

    fn check_spec(&self, spec: &EquivSpec) -> Result<(), DecodeError> {
        if spec.n_inputs() != self.n_inputs() || spec.n_outputs() != self.n_outputs {
            return Err(DecodeError::SpecMismatch {
                spec_inputs: spec.n_inputs(),
                spec_outputs: spec.n_outputs(),
                inputs: self.n_inputs(),
                outputs: self.n_outputs,
            });
        }
        Ok(())
    }

    /// Candidates that do not contradict the target on any row.
    pub fn feasible_choices(&self, spec: &EquivSpec) -> TokenMask {
        self.choices(spec).0
    }

    /// Feasible candidates, narrowed to the completing inputs when the next
    /// token fills the last open slot of the current output and some input
    /// finishes it with exactly the target table.
    pub fn valid_choices(&self, spec: &EquivSpec) -> TokenMask {
        let (feasible, completing) = self.choices(spec);
        if completing.is_empty() {
            feasible
        } else {
            completing
        }
    }

    fn choices(&self, spec: &EquivSpec) -> (TokenMask, TokenMask) {
        let mut feasible = TokenMask::empty();
        let mut completing = TokenMask::empty();
        if self.finished || self.check_spec(spec).is_err() {
            return (feasible, completing);
        }
        if self.path.is_empty() && self.outputs.len() == self.n_outputs {
            return (TokenMask::only(Token::EOS), completing);
        }
        let target = &spec.tables()[self.outputs.len()];
        let last_slot = self.next_is_last_open_slot();
        let deferred = self.partial_with(None);
        // A gate's inputs sit one level deeper, so gates at the depth limit are structurally impossible.
        let room = self.next_position().is_some_and(|p| p.depth() < self.max_depth);
        let gate_ok = room && !deferred.contradicts(target);
        for token in self.vocab.candidates() {
            match self.vocab.kind(token) {
                Some(TokenKind::And { .. }) => {
                    if gate_ok {
                        feasible.insert(token);
                    }
                }
                Some(TokenKind::Input { .. }) => {
                    let cand = self.candidate_partial(token).expect("input token");
                    let root = self.partial_with(Some(&cand));
                    if !root.contradicts(target) {
                        feasible.insert(token);
                        if last_slot && root.is_complete() {
                            completing.insert(token);
                        }
                    }
                }
                _ => {}
            }
        }
        (feasible, completing)
    }

    /// True when filling the next slot closes every open gate of the current output.
    fn next_is_last_open_slot(&self) -> bool {
        let Some(top) = self.path.last() else {
            return false;
        };
        top.assigned == 1 && self.path[1..].iter().all(|g| g.slot == Some(Slot::Second))
    }

    /// Applies `token` after checking it cannot break equivalence with `spec`.
    pub fn step(&mut self, token: Token, spec: &EquivSpec) -> Result<StepOutcome, DecodeError> {
        self.check_spec(spec)?;
        if self.finished {
            return Err(DecodeError::Finished);
        }
        if !self.feasible_choices(spec).contains(token) {
            return Err(DecodeError::InvalidToken { token: token.0 });
        }
        self.apply_unchecked(token)
    }
}

/// Source of next-token scores, conditioned on the construction so far.
pub trait Policy {
    /// One finite score per vocabulary id (logits; higher is better).
    fn scores(&self, state: &DecodeState) -> Result<Vec<f64>, DecodeError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn scores(&self, state: &DecodeState) -> Result<Vec<f64>, DecodeError> {
        (**self).scores(state)
    }
}

/// Equal scores everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn scores(&self, state: &DecodeState) -> Result<Vec<f64>, DecodeError> {
        Ok(vec![0.0; state.vocab().size()])
    }
}

/// Softmax over the unmasked scores; masked ids get probability exactly zero.
pub fn masked_probs(scores: &[f64], mask: TokenMask) -> Result<Vec<f64>, DecodeError> {
    let mut probs = vec![0.0; scores.len()];
    let mut max = f64::NEG_INFINITY;
    for t in mask.iter() {
        let s = *scores
            .get(t.id())
            .ok_or_else(|| DecodeError::Policy(format!("no score for token {}", t.0)))?;
        if !s.is_finite() {
            return Err(DecodeError::Policy(format!("non-finite score for token {}", t.0)));
        }
        max = max.max(s);
    }
    if mask.is_empty() {
        return Ok(probs);
    }
    let mut total = 0.0;
    for t in mask.iter() {
        let e = (scores[t.id()] - max).exp();
        probs[t.id()] = e;
        total += e;
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Highest-scoring unmasked token; ties go to the lowest id.
pub fn greedy_token(scores: &[f64], mask: TokenMask) -> Option<Token> {
    let mut best: Option<(Token, f64)> = None;
    for t in mask.iter() {
        let s = scores.get(t.id()).copied().unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    best.map(|(t, _)| t)
}

pub fn sample_token<R: Rng>(probs: &[f64], rng: &mut R) -> Option<Token> {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut dart = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = Some(Token(i as u16));
        dart -= p;
        if dart < 0.0 {
            return last;
        }
    }
    last
}

#[derive(Clone, Copy, Debug)]
pub enum DecodeMode<'a> {
    Greedy,
    Sample {
        seed: u64,
    },
    /// Replay a fixed token stream, checking every token for feasibility.
    Forced(&'a [Token]),
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub aig: Aig,
    pub trajectory: Trajectory,
    pub reward: i64,
}

/// Runs the masked decoding loop until EOS.
pub fn generate<P: Policy + ?Sized>(
    policy: &P,
    spec: &EquivSpec,
    max_len: usize,
    mode: DecodeMode<'_>,
) -> Result<Generated, DecodeError> {
    let mut state = DecodeState::for_spec(spec);
    let mut rng = match mode {
        DecodeMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    while !state.is_finished() {
        if state.len() >= max_len {
            return Err(DecodeError::LengthExceeded { max_len });
        }
        let token = match mode {
            DecodeMode::Forced(tokens) => {
                let token = *tokens.get(state.len()).ok_or(DecodeError::LengthExceeded { max_len })?;
                state.step(token, spec)?;
                continue;
            }
            DecodeMode::Greedy => {
                let mask = state.valid_choices(spec);
                if mask.is_empty() {
                    return Err(DecodeError::DeadEnd);
                }
                let scores = policy.scores(&state)?;
                masked_probs(&scores, mask)?;
                greedy_token(&scores, mask).ok_or(DecodeError::DeadEnd)?
            }
            DecodeMode::Sample { .. } => {
                let mask = state.valid_choices(spec);
                if mask.is_empty() {
                    return Err(DecodeError::DeadEnd);
                }
                let probs = masked_probs(&policy.scores(&state)?, mask)?;
                sample_token(&probs, rng.as_mut().expect("sampling rng")).ok_or(DecodeError::DeadEnd)?
            }
        };
        state.step(token, spec)?;
    }
    finish(state, spec)
}

/// Verifies a finished state against `spec` and packages the result.
pub fn finish(state: DecodeState, spec: &EquivSpec) -> Result<Generated, DecodeError> {
    let aig = state.to_aig();
    if let Some((output, row)) = spec.first_mismatch(&aig) {
        return Err(DecodeError::NotEquivalent { output, row });
    }
    Ok(Generated {
        aig,
        trajectory: state.trajectory(),
        reward: state.reward(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::encode;

    fn spec(n: usize, tables: &[&str]) -> EquivSpec {
        EquivSpec::new(n, tables.iter().map(|s| TruthTable::parse(n, s).unwrap()).collect()).unwrap()
    }

    #[test]
    fn partial_eval_x1_and_unknown() {
        let v = Vocab::new(3);
        let mut st = DecodeState::new(3, 1);
        st.apply_unchecked(v.and(false)).unwrap();
        st.apply_unchecked(v.input(1, false)).unwrap();
        assert_eq!(st.partial_eval(None, 0b000), Some(false));
        assert_eq!(st.partial_eval(None, 0b001), None);
        assert_eq!(st.partial_eval(None, 0b101), None);
        assert_eq!(st.partial_table().to_string(), "0?0?0?0?");
        // Candidate x2 completes the gate.
        assert_eq!(st.partial_eval(Some(v.input(2, false)), 0b011), Some(true));
        assert_eq!(st.partial_eval(Some(v.input(2, false)), 0b001), Some(false));
    }

    #[test]
    fn identity_spec_root_choices() {
        let s = spec(1, &["01"]);
        let st = DecodeState::for_spec(&s);
        let v = st.vocab();
        let mask = st.valid_choices(&s);
        assert!(mask.contains(v.input(1, false)));
        assert!(!mask.contains(v.input(1, true)));
        assert!(mask.contains(v.and(false)));
        assert!(mask.contains(v.and(true)));
        assert!(!mask.contains(Token::EOS));
        assert!(!mask.contains(Token::PAD));
    }

    #[test]
    fn all_outputs_done_only_eos() {
        let s = spec(1, &["01"]);
        let mut st = DecodeState::for_spec(&s);
        st.step(Token(2), &s).unwrap();
        assert_eq!(st.valid_choices(&s), TokenMask::only(Token::EOS));
        st.step(Token::EOS, &s).unwrap();
        assert!(st.valid_choices(&s).is_empty());
        assert_eq!(st.reward(), 0);
    }

    #[test]
    fn fig4_mask() {
        let s = spec(3, &["00000001"]);
        let mut st = DecodeState::for_spec(&s);
        let v = st.vocab();
        for t in [v.and(false), v.and(false), v.input(1, false), v.input(2, false)] {
            assert!(st.valid_choices(&s).contains(t));
            st.step(t, &s).unwrap();
        }
        assert_eq!(st.valid_choices(&s), TokenMask::only(v.input(3, false)));
        // Without the completion preference the gates stay feasible.
        let feasible = st.feasible_choices(&s);
        assert!(feasible.contains(v.and(false)) && feasible.contains(v.input(3, false)));
        assert!(!feasible.contains(v.input(1, false)));
    }

    #[test]
    fn step_rejects_infeasible() {
        let s = spec(1, &["01"]);
        let mut st = DecodeState::for_spec(&s);
        assert_eq!(st.step(Token(3), &s), Err(DecodeError::InvalidToken { token: 3 }));
        assert_eq!(st.step(Token::EOS, &s), Err(DecodeError::InvalidToken { token: 1 }));
    }

    #[test]
    fn fig2_replay_reward() {
        let mut aig = Aig::new(3);
        let x = |i| Lit::new(i, false);
        let a1 = aig.add_and(x(1), x(2), true);
        let a2 = aig.add_and(x(2), x(3), true);
        let o = aig.add_and(a1, a2, true);
        aig.add_output(o).unwrap();
        let s = EquivSpec::from_aig(&aig).unwrap();
        let tokens = encode(&aig).unwrap().tokens();
        let g = generate(&UniformPolicy, &s, 100, DecodeMode::Forced(&tokens)).unwrap();
        assert_eq!(g.reward, -3);
        assert_eq!(g.aig.count_ands(), 3);
    }

    #[test]
    fn shared_cone_merges() {
        // Two outputs that are both x1 ∧ x2.
        let s = spec(2, &["0001", "0001"]);
        let mut st = DecodeState::for_spec(&s);
        let v = st.vocab();
        let mut rewards = Vec::new();
        for t in [v.and(false), v.input(1, false), v.input(2, false)] {
            rewards.push(st.step(t, &s).unwrap().reward);
        }
        for t in [v.and(false), v.input(2, false), v.input(1, false), Token::EOS] {
            rewards.push(st.step(t, &s).unwrap().reward);
        }
        assert_eq!(rewards, vec![-1, 0, 0, -1, 0, 1, 0]);
        assert_eq!(st.reward(), -1);
        assert_eq!(st.to_aig().count_ands(), 1);
        assert_eq!(st.completed_outputs()[0], st.completed_outputs()[1]);
    }

    #[test]
    fn inverted_gate_merges_with_plain() {
        let s = spec(2, &["0001", "1110"]);
        let tokens = {
            let v = Vocab::new(2);
            vec![
                v.and(false),
                v.input(1, false),
                v.input(2, false),
                v.and(true),
                v.input(1, false),
                v.input(2, false),
                Token::EOS,
            ]
        };
        let g = generate(&UniformPolicy, &s, 100, DecodeMode::Forced(&tokens)).unwrap();
        assert_eq!(g.reward, -1);
        assert_eq!(g.aig.count_ands(), 1);
    }

    #[test]
    fn greedy_identity() {
        let s = spec(1, &["01"]);
        let g = generate(&UniformPolicy, &s, 10, DecodeMode::Greedy).unwrap();
        assert_eq!(g.trajectory.tokens(), vec![Token(2), Token::EOS]);
        assert_eq!(g.reward, 0);
    }

    #[test]
    fn length_exceeded() {
        struct AlwaysAnd;
        impl Policy for AlwaysAnd {
            fn scores(&self, state: &DecodeState) -> Result<Vec<f64>, DecodeError> {
                let mut s = vec![0.0; state.vocab().size()];
                s[state.vocab().and(false).id()] = 10.0;
                Ok(s)
            }
        }
        let s = spec(2, &["0110"]);
        assert_eq!(
            generate(&AlwaysAnd, &s, 20, DecodeMode::Greedy).unwrap_err(),
            DecodeError::LengthExceeded { max_len: 20 }
        );
    }

    #[test]
    fn masked_probs_zero_and_renormalized() {
        let mut mask = TokenMask::empty();
        mask.insert(Token(2));
        mask.insert(Token(4));
        let p = masked_probs(&[5.0, 5.0, 0.0, 9.0, 0.0], mask).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.5, 0.0, 0.5]);
        assert!(masked_probs(&[0.0, 0.0, f64::NAN], TokenMask::only(Token(2))).is_err());
        assert_eq!(greedy_token(&[0.0, 0.0, 1.0, 3.0, 1.0], mask), Some(Token(2)));
    }

    #[test]
    fn spec_mismatch() {
        let s = spec(2, &["0001"]);
        let mut st = DecodeState::new(3, 1);
        assert!(matches!(st.step(Token(2), &s), Err(DecodeError::SpecMismatch { .. })));
    }
}
