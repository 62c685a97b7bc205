//! And-Inverter Graphs with structural hashing and bit-parallel truth tables.
//!
//! Node index 0 is the constant-false node, indices `1..=n_inputs` are the
//! primary inputs and every following index is a two-input AND node. A
//! [`Lit`] is a node index plus an inversion flag, packed the same way AIGER
//! packs literals (`2 * node + inverted`).

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest input count the bit-parallel evaluator accepts (2^16 rows).
pub const MAX_EVAL_INPUTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AigError {
    #[error("input index {index} out of range 1..={n_inputs}")]
    InputOutOfRange { index: usize, n_inputs: usize },
    #[error("literal references node {node}, but only {n_nodes} nodes exist")]
    DanglingLiteral { node: usize, n_nodes: usize },
    #[error("{n_inputs} inputs exceed the truth-table budget of {max}")]
    TooManyInputs { n_inputs: usize, max: usize },
    #[error("circuit has no outputs")]
    NoOutputs,
    #[error("batch mixes signatures ({expected_inputs}, {expected_outputs}) and ({inputs}, {outputs})")]
    MixedSignatures {
        expected_inputs: usize,
        expected_outputs: usize,
        inputs: usize,
        outputs: usize,
    },
    #[error("random generation gave up after {attempts} attempts")]
    GenerationFailed { attempts: usize },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Lit(u32);

impl Lit {
    pub const FALSE: Lit = Lit(0);
    pub const TRUE: Lit = Lit(1);

    pub fn new(node: usize, inverted: bool) -> Self {
        Lit((node as u32) << 1 | inverted as u32)
    }

    pub fn from_code(code: u32) -> Self {
        Lit(code)
    }

    pub fn code(self) -> u32 {
        self.0
    }

    pub fn node(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_inverted(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn positive(self) -> Self {
        Lit(self.0 & !1)
    }

    pub fn invert_if(self, flag: bool) -> Self {
        Lit(self.0 ^ flag as u32)
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inverted() {
            write!(f, "!n{}", self.node())
        } else {
            write!(f, "n{}", self.node())
        }
    }
}

/// Combinational AIG. Nodes are append-only; fanins always point to lower indices.
#[derive(Clone, Debug)]
pub struct Aig {
    n_inputs: usize,
    ands: Vec<[Lit; 2]>,
    outputs: Vec<Lit>,
    strash: HashMap<(Lit, Lit), usize>,
}

impl PartialEq for Aig {
    fn eq(&self, other: &Self) -> bool {
        self.n_inputs == other.n_inputs && self.ands == other.ands && self.outputs == other.outputs
    }
}

impl Eq for Aig {}

fn canonical(a: Lit, b: Lit) -> (Lit, Lit) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Aig {
    pub fn new(n_inputs: usize) -> Self {
        Aig {
            n_inputs,
            ands: Vec::new(),
            outputs: Vec::new(),
            strash: HashMap::new(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Total node count including the constant and the inputs.
    pub fn n_nodes(&self) -> usize {
        1 + self.n_inputs + self.ands.len()
    }

    /// Number of AND nodes stored, reachable or not.
    pub fn n_ands(&self) -> usize {
        self.ands.len()
    }

    pub fn outputs(&self) -> &[Lit] {
        &self.outputs
    }

    pub fn ands(&self) -> &[[Lit; 2]] {
        &self.ands
    }

    pub fn first_and_index(&self) -> usize {
        1 + self.n_inputs
    }

    pub fn is_input(&self, node: usize) -> bool {
        (1..=self.n_inputs).contains(&node)
    }

    pub fn is_and(&self, node: usize) -> bool {
        node >= self.first_and_index() && node < self.n_nodes()
    }

    /// Fanins of an AND node, in stored order.
    pub fn fanins(&self, node: usize) -> Option<[Lit; 2]> {
        node.checked_sub(self.first_and_index())
            .and_then(|i| self.ands.get(i).copied())
    }

    pub fn input_literal(&self, index: usize, inverted: bool) -> Result<Lit, AigError> {
        input_literal(self.n_inputs, index, inverted)
    }

    fn check_lit(&self, lit: Lit) -> Result<(), AigError> {
        if lit.node() >= self.n_nodes() {
            return Err(AigError::DanglingLiteral {
                node: lit.node(),
                n_nodes: self.n_nodes(),
            });
        }
        Ok(())
    }

    /// Existing AND node with the same (unordered) fanin pair, if any.
    pub fn lookup_and(&self, a: Lit, b: Lit) -> Option<Lit> {
        self.strash.get(&canonical(a, b)).map(|&node| Lit::new(node, false))
    }

    /// Adds `a ∧ b`. With `merge` set, an isomorphic node is reused instead.
    /// No constant or idempotence folding is done.
    pub fn add_and(&mut self, a: Lit, b: Lit, merge: bool) -> Lit {
        self.try_add_and(a, b, merge)
            .expect("add_and: fanin literal references a missing node")
    }

    pub fn try_add_and(&mut self, a: Lit, b: Lit, merge: bool) -> Result<Lit, AigError> {
        self.check_lit(a)?;
        self.check_lit(b)?;
        let key = canonical(a, b);
        if merge {
            if let Some(&node) = self.strash.get(&key) {
                return Ok(Lit::new(node, false));
            }
        }
        let node = self.n_nodes();
        self.ands.push([a, b]);
        self.strash.entry(key).or_insert(node);
        Ok(Lit::new(node, false))
    }

    pub fn add_output(&mut self, lit: Lit) -> Result<(), AigError> {
        self.check_lit(lit)?;
        self.outputs.push(lit);
        Ok(())
    }

    /// Marks every node in the transitive fanin of the outputs.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack: Vec<usize> = self.outputs.iter().map(|l| l.node()).collect();
        while let Some(node) = stack.pop() {
            if std::mem::replace(&mut seen[node], true) {
                continue;
            }
            if let Some(fanins) = self.fanins(node) {
                stack.extend(fanins.iter().map(|l| l.node()));
            }
        }
        seen
    }

    /// Number of AND nodes reachable from any output.
    pub fn count_ands(&self) -> usize {
        let seen = self.reachable();
        seen[self.first_and_index()..].iter().filter(|&&s| s).count()
    }

    /// Copy without unreachable AND nodes; surviving nodes keep their relative order.
    pub fn cleanup(&self) -> Aig {
        let seen = self.reachable();
        let mut out = Aig::new(self.n_inputs);
        let mut map: Vec<Lit> = (0..self.first_and_index()).map(|n| Lit::new(n, false)).collect();
        for (i, fanins) in self.ands.iter().enumerate() {
            let node = self.first_and_index() + i;
            if !seen[node] {
                map.push(Lit::FALSE);
                continue;
            }
            let a = remap(&map, fanins[0]);
            let b = remap(&map, fanins[1]);
            map.push(out.add_and(a, b, false));
        }
        for &o in &self.outputs {
            out.outputs.push(remap(&map, o));
        }
        out
    }

    /// Truth table of every node (index-aligned with node indices).
    pub fn node_tables(&self) -> Result<Vec<TruthTable>, AigError> {
        if self.n_inputs > MAX_EVAL_INPUTS {
            return Err(AigError::TooManyInputs {
                n_inputs: self.n_inputs,
                max: MAX_EVAL_INPUTS,
            });
        }
        let mut tables = Vec::with_capacity(self.n_nodes());
        tables.push(TruthTable::zeros(self.n_inputs));
        for i in 1..=self.n_inputs {
            tables.push(TruthTable::var(self.n_inputs, i));
        }
        for fanins in &self.ands {
            let a = tables[fanins[0].node()].with_inversion(fanins[0].is_inverted());
            let b = tables[fanins[1].node()].with_inversion(fanins[1].is_inverted());
            tables.push(a.and(&b));
        }
        Ok(tables)
    }

    /// One exact truth table per output.
    pub fn eval_truth_tables(&self) -> Result<Vec<TruthTable>, AigError> {
        let tables = self.node_tables()?;
        Ok(self
            .outputs
            .iter()
            .map(|o| tables[o.node()].with_inversion(o.is_inverted()))
            .collect())
    }
}

fn remap(map: &[Lit], lit: Lit) -> Lit {
    map[lit.node()].invert_if(lit.is_inverted())
}

pub fn input_literal(n_inputs: usize, index: usize, inverted: bool) -> Result<Lit, AigError> {
    if index == 0 || index > n_inputs {
        return Err(AigError::InputOutOfRange { index, n_inputs });
    }
    Ok(Lit::new(index, inverted))
}

/// Complete truth table over `n_vars` inputs, packed 64 rows per word.
///
/// Row `i` assigns input `x_{j+1}` the value of bit `j` of `i`; the string
/// form lists row 0 first, so `x_1` over three inputs reads `01010101`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TruthTable {
    n_vars: usize,
    words: Vec<u64>,
}

pub(crate) fn n_words(n_vars: usize) -> usize {
    (1usize << n_vars).div_ceil(64)
}

pub(crate) fn tail_mask(n_vars: usize) -> u64 {
    if n_vars >= 6 {
        u64::MAX
    } else {
        (1u64 << (1 << n_vars)) - 1
    }
}

impl TruthTable {
    pub fn zeros(n_vars: usize) -> Self {
        TruthTable {
            n_vars,
            words: vec![0; n_words(n_vars)],
        }
    }

    pub fn ones(n_vars: usize) -> Self {
        let mut t = TruthTable {
            n_vars,
            words: vec![u64::MAX; n_words(n_vars)],
        };
        t.mask_tail();
        t
    }

    /// Table of input `x_var` (1-based).
    pub fn var(n_vars: usize, var: usize) -> Self {
        assert!(var >= 1 && var <= n_vars);
        let j = var - 1;
        let mut t = Self::zeros(n_vars);
        if j < 6 {
            const PATTERNS: [u64; 6] = [
                0xAAAA_AAAA_AAAA_AAAA,
                0xCCCC_CCCC_CCCC_CCCC,
                0xF0F0_F0F0_F0F0_F0F0,
                0xFF00_FF00_FF00_FF00,
                0xFFFF_0000_FFFF_0000,
                0xFFFF_FFFF_0000_0000,
            ];
            t.words.iter_mut().for_each(|w| *w = PATTERNS[j]);
        } else {
            let period = 1usize << (j - 6);
            for (w, word) in t.words.iter_mut().enumerate() {
                if (w / period) % 2 == 1 {
                    *word = u64::MAX;
                }
            }
        }
        t.mask_tail();
        t
    }

    pub fn from_bits(n_vars: usize, bits: &[bool]) -> Self {
        assert_eq!(bits.len(), 1 << n_vars);
        let mut t = Self::zeros(n_vars);
        for (i, &b) in bits.iter().enumerate() {
            t.set(i, b);
        }
        t
    }

    pub fn parse(n_vars: usize, s: &str) -> Option<Self> {
        if s.len() != 1 << n_vars {
            return None;
        }
        let mut t = Self::zeros(n_vars);
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => t.set(i, true),
                _ => return None,
            }
        }
        Some(t)
    }

    fn mask_tail(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.n_vars);
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        1 << self.n_vars
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, row: usize) -> bool {
        (self.words[row / 64] >> (row % 64)) & 1 == 1
    }

    pub fn set(&mut self, row: usize, value: bool) {
        let bit = 1u64 << (row % 64);
        if value {
            self.words[row / 64] |= bit;
        } else {
            self.words[row / 64] &= !bit;
        }
    }

    pub fn not(&self) -> Self {
        let mut t = TruthTable {
            n_vars: self.n_vars,
            words: self.words.iter().map(|w| !w).collect(),
        };
        t.mask_tail();
        t
    }

    pub fn with_inversion(&self, inverted: bool) -> Self {
        if inverted {
            self.not()
        } else {
            self.clone()
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        TruthTable {
            n_vars: self.n_vars,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Whether the function actually depends on input `x_var` (1-based).
    pub fn depends_on(&self, var: usize) -> bool {
        let j = var - 1;
        (0..self.n_rows())
            .filter(|row| row & (1 << j) == 0)
            .any(|row| self.get(row) != self.get(row | (1 << j)))
    }

    pub fn is_constant(&self) -> bool {
        let c = self.count_ones();
        c == 0 || c == self.n_rows()
    }

    /// First row where the two tables differ.
    pub fn first_difference(&self, other: &Self) -> Option<usize> {
        (0..self.n_rows()).find(|&r| self.get(r) != other.get(r))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.n_rows()).map(|r| self.get(r)).collect()
    }
}

impl fmt::Display for TruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..self.n_rows() {
            f.write_str(if self.get(row) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for TruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruthTable({self})")
    }
}

/// Three-valued truth table: each row is 0, 1 or unknown.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PartialTruthTable {
    n_vars: usize,
    known: Vec<u64>,
    value: Vec<u64>,
}

impl PartialTruthTable {
    pub fn unknown(n_vars: usize) -> Self {
        PartialTruthTable {
            n_vars,
            known: vec![0; n_words(n_vars)],
            value: vec![0; n_words(n_vars)],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn get(&self, row: usize) -> Option<bool> {
        let bit = 1u64 << (row % 64);
        if self.known[row / 64] & bit == 0 {
            None
        } else {
            Some(self.value[row / 64] & bit != 0)
        }
    }

    pub fn is_complete(&self) -> bool {
        let mask = tail_mask(self.n_vars);
        let last = self.known.len() - 1;
        self.known
            .iter()
            .enumerate()
            .all(|(i, &k)| k == if i == last { mask } else { u64::MAX })
    }

    pub fn to_complete(&self) -> Option<TruthTable> {
        self.is_complete().then(|| TruthTable {
            n_vars: self.n_vars,
            words: self.value.clone(),
        })
    }

    pub fn not(&self) -> Self {
        PartialTruthTable {
            n_vars: self.n_vars,
            known: self.known.clone(),
            value: self.value.iter().zip(&self.known).map(|(v, k)| !v & k).collect(),
        }
    }

    pub fn with_inversion(&self, inverted: bool) -> Self {
        if inverted {
            self.not()
        } else {
            self.clone()
        }
    }

    /// Three-valued AND: a known 0 on either side forces 0.
    pub fn and(&self, other: &Self) -> Self {
        let mut known = Vec::with_capacity(self.known.len());
        let mut value = Vec::with_capacity(self.known.len());
        for i in 0..self.known.len() {
            let zero_a = self.known[i] & !self.value[i];
            let zero_b = other.known[i] & !other.value[i];
            let one = self.value[i] & other.value[i];
            known.push(zero_a | zero_b | one);
            value.push(one);
        }
        PartialTruthTable {
            n_vars: self.n_vars,
            known,
            value,
        }
    }

    /// True when some known row disagrees with `target`.
    pub fn contradicts(&self, target: &TruthTable) -> bool {
        self.known
            .iter()
            .zip(&self.value)
            .zip(target.words())
            .any(|((k, v), t)| k & (v ^ t) != 0)
    }
}

impl From<&TruthTable> for PartialTruthTable {
    fn from(t: &TruthTable) -> Self {
        let mut known = vec![u64::MAX; t.words.len()];
        *known.last_mut().unwrap() &= tail_mask(t.n_vars);
        PartialTruthTable {
            n_vars: t.n_vars,
            known,
            value: t.words.clone(),
        }
    }
}

impl fmt::Display for PartialTruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..1usize << self.n_vars {
            f.write_str(match self.get(row) {
                Some(true) => "1",
                Some(false) => "0",
                None => "?",
            })?;
        }
        Ok(())
    }
}

impl fmt::Debug for PartialTruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartialTruthTable({self})")
    }
}

/// Concatenated output tables; equal keys mean equal functions.
pub fn function_key(aig: &Aig) -> Result<Vec<TruthTable>, AigError> {
    aig.eval_truth_tables()
}

/// Keeps the first circuit of every distinct function.
pub fn dedup_by_truth_table(batch: Vec<Aig>) -> Result<Vec<Aig>, AigError> {
    let Some(first) = batch.first() else {
        return Ok(batch);
    };
    let (ni, no) = (first.n_inputs(), first.n_outputs());
    for aig in &batch {
        if aig.n_inputs() != ni || aig.n_outputs() != no {
            return Err(AigError::MixedSignatures {
                expected_inputs: ni,
                expected_outputs: no,
                inputs: aig.n_inputs(),
                outputs: aig.n_outputs(),
            });
        }
    }
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for aig in batch {
        if seen.insert(function_key(&aig)?) {
            kept.push(aig);
        }
    }
    Ok(kept)
}

/// Knobs of the random circuit generator. Recorded in dataset manifests.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub min_ands: usize,
    pub max_ands: usize,
    /// Probability that a fanin is drawn from the most recent few nodes.
    pub recent_bias: f64,
    pub recent_window: usize,
    /// Probability that a fanin is drawn from nodes without fanout yet.
    pub frontier_bias: f64,
    pub invert_prob: f64,
    pub retry_cap: usize,
}

impl GeneratorParams {
    pub fn for_signature(n_inputs: usize, n_outputs: usize) -> Self {
        let base = n_inputs.max(2);
        GeneratorParams {
            // Covering every input needs at least n_inputs - n_outputs gates.
            min_ands: (base / 2 + n_outputs).max(n_inputs.saturating_sub(n_outputs)).max(1),
            max_ands: 3 * base + 2 * n_outputs,
            recent_bias: 0.5,
            recent_window: 4,
            frontier_bias: 0.5,
            invert_prob: 0.5,
            retry_cap: 100_000,
        }
    }
}

/// Random AIG whose every input is in the functional support of some output,
/// with no constant outputs and a trajectory length within `max_traj_len`.
pub fn random_aig(n_inputs: usize, n_outputs: usize, max_traj_len: usize, seed: u64) -> Result<Aig, AigError> {
    let params = GeneratorParams::for_signature(n_inputs, n_outputs);
    random_aig_with(n_inputs, n_outputs, max_traj_len, seed, &params)
}

pub fn random_aig_with(
    n_inputs: usize,
    n_outputs: usize,
    max_traj_len: usize,
    seed: u64,
    params: &GeneratorParams,
) -> Result<Aig, AigError> {
    if n_outputs == 0 {
        return Err(AigError::NoOutputs);
    }
    if n_inputs > MAX_EVAL_INPUTS {
        return Err(AigError::TooManyInputs {
            n_inputs,
            max: MAX_EVAL_INPUTS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_ands_hi = params.max_ands.max(params.min_ands);
    for attempt in 0..params.retry_cap {
        // Shrink the size range when large circuits keep overflowing the length cap.
        if attempt > 0 && attempt % 200 == 0 && n_ands_hi > params.min_ands {
            n_ands_hi -= 1;
        }
        let n_ands = rng.gen_range(params.min_ands.min(n_ands_hi)..=n_ands_hi);
        let candidate = sample_candidate(n_inputs, n_outputs, n_ands, params, &mut rng);
        if accept(&candidate, max_traj_len) {
            return Ok(candidate);
        }
    }
    Err(AigError::GenerationFailed {
        attempts: params.retry_cap,
    })
}

fn sample_candidate(
    n_inputs: usize,
    n_outputs: usize,
    n_ands: usize,
    params: &GeneratorParams,
    rng: &mut ChaCha8Rng,
) -> Aig {
    let mut aig = Aig::new(n_inputs);
    let mut frontier: Vec<usize> = (1..=n_inputs).collect();
    let pick = |aig: &Aig, frontier: &[usize], rng: &mut ChaCha8Rng| -> usize {
        let n = aig.n_nodes();
        if !frontier.is_empty() && rng.gen_bool(params.frontier_bias) {
            frontier[rng.gen_range(0..frontier.len())]
        } else if aig.n_ands() > 0 && rng.gen_bool(params.recent_bias) {
            let window = params.recent_window.min(aig.n_ands());
            n - 1 - rng.gen_range(0..window)
        } else {
            rng.gen_range(1..n)
        }
    };
    let mut budget = 64 * n_ands + 64;
    while aig.n_ands() < n_ands && budget > 0 {
        budget -= 1;
        let a = pick(&aig, &frontier, rng);
        let mut b = pick(&aig, &frontier, rng);
        for _ in 0..8 {
            if b != a {
                break;
            }
            b = pick(&aig, &frontier, rng);
        }
        let la = Lit::new(a, rng.gen_bool(params.invert_prob));
        let lb = Lit::new(b, rng.gen_bool(params.invert_prob));
        if aig.lookup_and(la, lb).is_some() {
            continue;
        }
        let lit = aig.add_and(la, lb, true);
        frontier.retain(|&f| f != a && f != b);
        frontier.push(lit.node());
    }
    // The last node drives the first output; further outputs come from the newest nodes.
    let last = aig.n_nodes() - 1;
    let mut used = vec![last];
    aig.outputs.push(Lit::new(last, rng.gen_bool(params.invert_prob)));
    frontier.retain(|&f| f != last && aig.is_and(f));
    while aig.outputs.len() < n_outputs {
        if let Some(node) = frontier.pop() {
            used.push(node);
            aig.outputs.push(Lit::new(node, rng.gen_bool(params.invert_prob)));
            continue;
        }
        let lo = (aig.first_and_index()).max(last.saturating_sub(n_ands / 2 + 1));
        let mut node = rng.gen_range(lo..=last);
        if used.contains(&node) {
            node = rng.gen_range(1..=last);
        }
        used.push(node);
        aig.outputs.push(Lit::new(node, rng.gen_bool(params.invert_prob)));
    }
    aig.cleanup()
}

fn accept(aig: &Aig, max_traj_len: usize) -> bool {
    if crate::trajectory::trajectory_len(aig) > max_traj_len {
        return false;
    }
    let Ok(tables) = aig.eval_truth_tables() else {
        return false;
    };
    tables.iter().all(|t| !t.is_constant()) && (1..=aig.n_inputs()).all(|v| tables.iter().any(|t| t.depends_on(v)))
}

/// Random single-output tree-shaped AIG of bounded depth; used for the
/// truth-table classification task. Shared subtrees are merged by hashing.
pub fn random_tree_aig<R: Rng>(n_inputs: usize, max_depth: usize, rng: &mut R) -> Aig {
    fn build<R: Rng>(aig: &mut Aig, depth_left: usize, rng: &mut R, root: bool) -> Lit {
        let gate = depth_left > 0 && (root || rng.gen_bool(0.75));
        if !gate {
            let i = rng.gen_range(1..=aig.n_inputs());
            return Lit::new(i, rng.gen_bool(0.5));
        }
        let a = build(aig, depth_left - 1, rng, false);
        let b = build(aig, depth_left - 1, rng, false);
        aig.add_and(a, b, true).invert_if(rng.gen_bool(0.5))
    }
    let mut aig = Aig::new(n_inputs);
    let out = build(&mut aig, max_depth, rng, max_depth > 0);
    aig.outputs.push(out);
    aig.cleanup()
}
