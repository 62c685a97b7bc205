//! Generative logic synthesis over And-Inverter Graphs.
//!
//! * [`aig`]: AIG data structure, structural hashing, truth tables, random circuits.
//! * [`aiger`]: ASCII AIGER reader/writer.
//! * [`trajectory`]: memory-less depth-first token encoding with tree positions.
//! * [`decoder`]: token-by-token construction with equivalence-preserving masks.
//! * [`search`]: Monte-Carlo Tree Search minimizing AND count.

pub mod aig;
pub mod aiger;
pub mod decoder;
pub mod search;
pub mod trajectory;

pub use aig::{Aig, AigError, Lit, PartialTruthTable, TruthTable};
pub use decoder::{
    generate, DecodeError, DecodeMode, DecodeState, EquivSpec, Generated, Policy, TokenMask, UniformPolicy,
};
pub use search::{mcts_decide, synthesize_mcts, SearchConfig, Synthesized};
pub use trajectory::{decode_trajectory, encode, PosCode, Token, TokenKind, Trajectory, Vocab};
