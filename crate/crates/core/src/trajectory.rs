//! Memory-less depth-first trajectory encoding of AIGs.
//!
//! Every output is walked depth first, first fanin before second, without
//! marking visited nodes, so a node with fanout `f` shows up `f` times. Edge
//! inversions are folded into the child's token. Each emitted token carries a
//! [`PosCode`]: the stack of child-slot choices from its output, plus a one-hot
//! naming that output.

use std::fmt;

use thiserror::Error;

use crate::aig::{Aig, Lit};
use crate::decoder::{DecodeError, DecodeState};

/// Default maximum depth of a positional stack.
pub const DEFAULT_MAX_DEPTH: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("positional stack deeper than {max_depth}")]
    DepthOverflow { max_depth: usize },
    #[error("output {output} is a constant, which has no token")]
    ConstantOutput { output: usize },
    #[error("trajectory has {len} items, limit is {max_len}")]
    LengthOverflow { len: usize, max_len: usize },
    #[error("trajectory ends before every gate received both inputs")]
    PrematureEos,
    #[error("token at position {position} follows EOS")]
    TokenAfterEos { position: usize },
    #[error("trajectory is not terminated by EOS")]
    MissingEos,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Token ids: 0 = PAD, 1 = EOS, `2i` / `2i+1` = `x_i` / `!x_i`, then `∧` and `!∧`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Token(pub u16);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TokenKind {
    Pad,
    Eos,
    Input { index: usize, inverted: bool },
    And { inverted: bool },
}

impl Token {
    pub const PAD: Token = Token(0);
    pub const EOS: Token = Token(1);

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

/// Token alphabet for circuits with a fixed number of inputs (`2N + 4` ids).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Vocab {
    n_inputs: usize,
}

impl Vocab {
    pub fn new(n_inputs: usize) -> Self {
        Vocab { n_inputs }
    }

    pub fn n_inputs(self) -> usize {
        self.n_inputs
    }

    pub fn size(self) -> usize {
        2 * self.n_inputs + 4
    }

    pub fn input(self, index: usize, inverted: bool) -> Token {
        debug_assert!(index >= 1 && index <= self.n_inputs);
        Token((2 * index + inverted as usize) as u16)
    }

    pub fn and(self, inverted: bool) -> Token {
        Token((2 * self.n_inputs + 2 + inverted as usize) as u16)
    }

    /// Token naming a literal seen through an edge. `None` for the constant.
    pub fn literal(self, aig: &Aig, lit: Lit) -> Option<Token> {
        if aig.is_input(lit.node()) {
            Some(self.input(lit.node(), lit.is_inverted()))
        } else if aig.is_and(lit.node()) {
            Some(self.and(lit.is_inverted()))
        } else {
            None
        }
    }

    pub fn kind(self, token: Token) -> Option<TokenKind> {
        let id = token.id();
        match id {
            0 => Some(TokenKind::Pad),
            1 => Some(TokenKind::Eos),
            _ if id < 2 * self.n_inputs + 2 => Some(TokenKind::Input {
                index: id / 2,
                inverted: id % 2 == 1,
            }),
            _ if id < self.size() => Some(TokenKind::And { inverted: id % 2 == 1 }),
            _ => None,
        }
    }

    /// Candidate order of the masking pass: `x_1, !x_1, ..., x_N, !x_N, ∧, !∧`.
    pub fn candidates(self) -> impl Iterator<Item = Token> {
        (2..self.size() as u16).map(Token)
    }

    pub fn name(self, token: Token) -> String {
        match self.kind(token) {
            Some(TokenKind::Pad) => "PAD".into(),
            Some(TokenKind::Eos) => "EOS".into(),
            Some(TokenKind::Input { index, inverted }) => {
                format!("{}x{index}", if inverted { "!" } else { "" })
            }
            Some(TokenKind::And { inverted }) => if inverted { "!AND" } else { "AND" }.into(),
            None => format!("?{}", token.0),
        }
    }
}

/// Which fanin of the parent gate a node sits in.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Slot {
    First,
    Second,
}

impl Slot {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Slot::First
        } else {
            Slot::Second
        }
    }

    pub fn index(self) -> usize {
        match self {
            Slot::First => 0,
            Slot::Second => 1,
        }
    }

    fn bits(self) -> [u8; 2] {
        match self {
            Slot::First => [1, 0],
            Slot::Second => [0, 1],
        }
    }
}

/// Tree position: output index plus slot choices from that output down.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PosCode {
    output: usize,
    /// Root-first; the most recently pushed slot is last.
    path: Vec<Slot>,
}

impl PosCode {
    pub fn root(output: usize) -> Self {
        PosCode {
            output,
            path: Vec::new(),
        }
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.path
    }

    pub fn push(&self, slot: Slot, max_depth: usize) -> Result<PosCode, TrajectoryError> {
        if self.path.len() >= max_depth {
            return Err(TrajectoryError::DepthOverflow { max_depth });
        }
        let mut path = self.path.clone();
        path.push(slot);
        Ok(PosCode {
            output: self.output,
            path,
        })
    }

    /// Position of the parent gate (the top pair removed).
    pub fn parent(&self) -> Option<PosCode> {
        let mut path = self.path.clone();
        path.pop().map(|_| PosCode {
            output: self.output,
            path,
        })
    }

    /// `[pairs, most recent first | zero padding | one-hot output]`, width `2 * max_depth + n_outputs`.
    pub fn to_bits(&self, max_depth: usize, n_outputs: usize) -> Vec<u8> {
        let mut bits = vec![0u8; 2 * max_depth + n_outputs];
        for (k, slot) in self.path.iter().rev().enumerate() {
            bits[2 * k..2 * k + 2].copy_from_slice(&slot.bits());
        }
        bits[2 * max_depth + self.output] = 1;
        bits
    }
}

impl fmt::Display for PosCode {
    /// The slot pairs only, most recent first (`[0110]` style without brackets).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for slot in self.path.iter().rev() {
            let [a, b] = slot.bits();
            write!(f, "{a}{b}")?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TrajItem {
    pub token: Token,
    /// `None` only for EOS.
    pub pos: Option<PosCode>,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Trajectory {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub items: Vec<TrajItem>,
}

impl Trajectory {
    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.n_inputs)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.items.iter().map(|i| i.token).collect()
    }

    pub fn is_terminated(&self) -> bool {
        self.items.last().is_some_and(|i| i.token == Token::EOS)
    }

    /// Human-readable one-line-per-token listing.
    pub fn render(&self) -> String {
        let vocab = self.vocab();
        let mut out = String::new();
        for (i, item) in self.items.iter().enumerate() {
            let pos = match &item.pos {
                Some(p) => format!("o{} [{}]", p.output() + 1, p),
                None => "-".into(),
            };
            out.push_str(&format!("{:>4}  {:<5} {}\n", i + 1, vocab.name(item.token), pos));
        }
        out
    }
}

/// Number of items `encode` would produce (including EOS), without building it.
pub fn trajectory_len(aig: &Aig) -> usize {
    let mut sizes = vec![1usize; aig.n_nodes()];
    for (i, fanins) in aig.ands().iter().enumerate() {
        let node = aig.first_and_index() + i;
        sizes[node] = 1usize
            .saturating_add(sizes[fanins[0].node()])
            .saturating_add(sizes[fanins[1].node()]);
    }
    aig.outputs()
        .iter()
        .fold(1usize, |acc, o| acc.saturating_add(sizes[o.node()]))
}

pub fn encode(aig: &Aig) -> Result<Trajectory, TrajectoryError> {
    encode_with_depth(aig, DEFAULT_MAX_DEPTH)
}

pub fn encode_with_depth(aig: &Aig, max_depth: usize) -> Result<Trajectory, TrajectoryError> {
    let vocab = Vocab::new(aig.n_inputs());
    let mut items = Vec::new();
    for (k, &out) in aig.outputs().iter().enumerate() {
        let mut stack = vec![(out, PosCode::root(k))];
        while let Some((lit, pos)) = stack.pop() {
            let token = vocab
                .literal(aig, lit)
                .ok_or(TrajectoryError::ConstantOutput { output: k })?;
            if let Some([a, b]) = aig.fanins(lit.node()) {
                // Second fanin pushed first so the first fanin is visited first.
                stack.push((b, pos.push(Slot::Second, max_depth)?));
                stack.push((a, pos.push(Slot::First, max_depth)?));
            }
            items.push(TrajItem { token, pos: Some(pos) });
        }
    }
    items.push(TrajItem {
        token: Token::EOS,
        pos: None,
    });
    Ok(Trajectory {
        n_inputs: aig.n_inputs(),
        n_outputs: aig.n_outputs(),
        items,
    })
}

/// Rebuilds a circuit by replaying a trajectory as a forced token stream.
pub fn decode_trajectory(traj: &Trajectory, merge: bool) -> Result<Aig, TrajectoryError> {
    let mut state = DecodeState::new(traj.n_inputs, traj.n_outputs).with_merge(merge);
    for (position, item) in traj.items.iter().enumerate() {
        if state.is_finished() {
            return Err(TrajectoryError::TokenAfterEos { position });
        }
        if item.token == Token::EOS && !state.path_is_empty() {
            return Err(TrajectoryError::PrematureEos);
        }
        state.apply_unchecked(item.token)?;
    }
    if !state.is_finished() {
        return Err(TrajectoryError::MissingEos);
    }
    Ok(state.to_aig())
}

/// Fixed-shape model inputs: token ids padded with PAD and a poscode bit matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInputs {
    pub token_ids: Vec<usize>,
    /// Row-major `max_len x (2 * max_depth + n_outputs)`.
    pub poscodes: Vec<f64>,
    pub poscode_width: usize,
    pub live: usize,
}

pub fn to_model_inputs(traj: &Trajectory, max_len: usize, max_depth: usize) -> Result<ModelInputs, TrajectoryError> {
    if traj.len() > max_len {
        return Err(TrajectoryError::LengthOverflow {
            len: traj.len(),
            max_len,
        });
    }
    let width = 2 * max_depth + traj.n_outputs;
    let mut token_ids = vec![Token::PAD.id(); max_len];
    let mut poscodes = vec![0.0; max_len * width];
    for (t, item) in traj.items.iter().enumerate() {
        token_ids[t] = item.token.id();
        if let Some(pos) = &item.pos {
            if pos.depth() > max_depth {
                return Err(TrajectoryError::DepthOverflow { max_depth });
            }
            for (j, b) in pos.to_bits(max_depth, traj.n_outputs).into_iter().enumerate() {
                poscodes[t * width + j] = b as f64;
            }
        }
    }
    Ok(ModelInputs {
        token_ids,
        poscodes,
        poscode_width: width,
        live: traj.len(),
    })
}
