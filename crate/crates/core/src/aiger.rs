//! ASCII AIGER (`aag`) reader and writer for combinational circuits.
//!
//! Reference: <https://fmv.jku.at/aiger/FORMAT.aiger>. Latches are rejected.
//! Variables are renumbered on read: inputs become nodes `1..=I` in listed
//! order and AND gates follow in listed order.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::aig::{Aig, Lit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AigerError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: latches are not supported (L = {count})")]
    Latches { line: usize, count: usize },
    #[error("line {line}: expected {expected}, found end of input")]
    UnexpectedEnd { line: usize, expected: String },
    #[error("line {line}: invalid {what}: {text:?}")]
    InvalidLine {
        line: usize,
        what: &'static str,
        text: String,
    },
    #[error("line {line}: literal {literal} refers to an undefined variable")]
    DanglingLiteral { line: usize, literal: u32 },
    #[error("line {line}: AND gate uses variable {var} before it is defined")]
    NonTopological { line: usize, var: u32 },
    #[error("line {line}: variable {var} defined twice")]
    Redefined { line: usize, var: u32 },
    #[error("line {line}: variable {var} exceeds maximum index {max}")]
    VariableOutOfRange { line: usize, var: u32, max: u32 },
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, expected: &str) -> Result<(usize, &'a str), AigerError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(AigerError::UnexpectedEnd {
                line: self.last + 1,
                expected: expected.to_string(),
            }),
        }
    }
}

fn parse_fields<const K: usize>(line: usize, text: &str, what: &'static str) -> Result<[u32; K], AigerError> {
    let bad = || AigerError::InvalidLine {
        line,
        what,
        text: text.to_string(),
    };
    let mut out = [0u32; K];
    let mut it = text.split_ascii_whitespace();
    for slot in out.iter_mut() {
        *slot = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    }
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(out)
}

/// Parses an ASCII AIGER document.
pub fn parse_aag(text: &str) -> Result<Aig, AigerError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (hl, header) = lines.next_line("header")?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("aag") {
        return Err(AigerError::MalformedHeader {
            line: hl,
            reason: "expected 'aag M I L O A'".into(),
        });
    }
    let counts: Vec<usize> = parts
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| AigerError::MalformedHeader {
            line: hl,
            reason: "counts must be non-negative integers".into(),
        })?;
    let [m, i, l, o, a] = <[usize; 5]>::try_from(counts.as_slice()).map_err(|_| AigerError::MalformedHeader {
        line: hl,
        reason: format!("expected 5 counts, found {}", counts.len()),
    })?;
    if l != 0 {
        return Err(AigerError::Latches { line: hl, count: l });
    }
    if m != i + a {
        return Err(AigerError::MalformedHeader {
            line: hl,
            reason: format!("M = {m} but I + A = {}", i + a),
        });
    }
    if o == 0 {
        return Err(AigerError::MalformedHeader {
            line: hl,
            reason: "no outputs".into(),
        });
    }
    let max_var = m as u32;

    let mut aig = Aig::new(i);
    let mut var_map: HashMap<u32, Lit> = HashMap::new();
    var_map.insert(0, Lit::FALSE);

    for k in 0..i {
        let (ln, text) = lines.next_line("input line")?;
        let [lit] = parse_fields::<1>(ln, text, "input")?;
        if lit < 2 || lit % 2 == 1 {
            return Err(AigerError::InvalidLine {
                line: ln,
                what: "input literal",
                text: text.into(),
            });
        }
        let var = lit / 2;
        if var > max_var {
            return Err(AigerError::VariableOutOfRange {
                line: ln,
                var,
                max: max_var,
            });
        }
        if var_map.insert(var, Lit::new(k + 1, false)).is_some() {
            return Err(AigerError::Redefined { line: ln, var });
        }
    }

    let mut outputs = Vec::with_capacity(o);
    for _ in 0..o {
        let (ln, text) = lines.next_line("output line")?;
        let [lit] = parse_fields::<1>(ln, text, "output")?;
        if lit / 2 > max_var {
            return Err(AigerError::VariableOutOfRange {
                line: ln,
                var: lit / 2,
                max: max_var,
            });
        }
        outputs.push((ln, lit));
    }

    for _ in 0..a {
        let (ln, text) = lines.next_line("AND gate line")?;
        let [lhs, rhs0, rhs1] = parse_fields::<3>(ln, text, "AND gate")?;
        if lhs < 2 || lhs % 2 == 1 {
            return Err(AigerError::InvalidLine {
                line: ln,
                what: "AND gate output literal",
                text: text.into(),
            });
        }
        let var = lhs / 2;
        if var > max_var {
            return Err(AigerError::VariableOutOfRange {
                line: ln,
                var,
                max: max_var,
            });
        }
        if var_map.contains_key(&var) {
            return Err(AigerError::Redefined { line: ln, var });
        }
        let mut fanins = [Lit::FALSE; 2];
        for (slot, rhs) in fanins.iter_mut().zip([rhs0, rhs1]) {
            if rhs / 2 > max_var {
                return Err(AigerError::VariableOutOfRange {
                    line: ln,
                    var: rhs / 2,
                    max: max_var,
                });
            }
            let base = var_map
                .get(&(rhs / 2))
                .ok_or(AigerError::NonTopological { line: ln, var: rhs / 2 })?;
            *slot = base.invert_if(rhs % 2 == 1);
        }
        let lit = aig.add_and(fanins[0], fanins[1], false);
        var_map.insert(var, lit);
    }

    for (ln, lit) in outputs {
        let base = var_map
            .get(&(lit / 2))
            .ok_or(AigerError::DanglingLiteral { line: ln, literal: lit })?;
        aig.add_output(base.invert_if(lit % 2 == 1))
            .expect("mapped literal exists");
    }

    // Optional symbol table and comment section.
    for (idx, text) in lines.inner.by_ref() {
        let ln = idx + 1;
        if text == "c" {
            break;
        }
        let valid_symbol = matches!(text.chars().next(), Some('i' | 'o'))
            && text[1..]
                .split_once(' ')
                .is_some_and(|(n, _)| n.parse::<usize>().is_ok());
        if !valid_symbol && !text.trim().is_empty() {
            return Err(AigerError::InvalidLine {
                line: ln,
                what: "symbol",
                text: text.into(),
            });
        }
    }
    Ok(aig)
}

/// Serializes in node-index order; node `n` becomes variable `n`.
pub fn write_aag(aig: &Aig) -> String {
    write_aag_with(aig, false)
}

/// Like [`write_aag`], optionally appending `x<i>` / `y<k>` symbol names.
pub fn write_aag_with(aig: &Aig, symbols: bool) -> String {
    let n = aig.n_inputs();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "aag {} {} 0 {} {}",
        n + aig.n_ands(),
        n,
        aig.n_outputs(),
        aig.n_ands()
    );
    for i in 1..=n {
        let _ = writeln!(out, "{}", 2 * i);
    }
    for o in aig.outputs() {
        let _ = writeln!(out, "{}", o.code());
    }
    for (k, [a, b]) in aig.ands().iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", 2 * (aig.first_and_index() + k), a.code(), b.code());
    }
    if symbols {
        for i in 0..n {
            let _ = writeln!(out, "i{i} x{}", i + 1);
        }
        for k in 0..aig.n_outputs() {
            let _ = writeln!(out, "o{k} y{}", k + 1);
        }
    }
    out
}
