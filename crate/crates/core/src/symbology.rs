//! EAN-13 digit sequences, check digits and the 95-module bar encoding.
//!
//! Digits are addressed 1-based from the left (`digit(1)` is the leading
//! digit, `digit(13)` the check digit). The leading digit is never drawn as
//! bars: it selects the L/G parity of the six left-half digits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of digits in an EAN-13 sequence.
pub const LEN: usize = 13;
/// Number of modules in an EAN-13 bar pattern.
pub const MODULES: usize = 95;
/// Modules per encoded digit.
pub const CELL: usize = 7;

pub const START_GUARD: [u8; 3] = [1, 0, 1];
pub const CENTER_GUARD: [u8; 5] = [0, 1, 0, 1, 0];
pub const END_GUARD: [u8; 3] = [1, 0, 1];

/// Checksum weights indexed by 0-based position; `weights[12]` is the check
/// digit and carries weight 1, alternating 1,3 leftward.
pub const CHECKSUM_WEIGHTS: [u32; LEN] = [1, 3, 1, 3, 1, 3, 1, 3, 1, 3, 1, 3, 1];

/// Odd-parity left-half codes.
pub const L_CODES: [[u8; CELL]; 10] = [
    [0, 0, 0, 1, 1, 0, 1],
    [0, 0, 1, 1, 0, 0, 1],
    [0, 0, 1, 0, 0, 1, 1],
    [0, 1, 1, 1, 1, 0, 1],
    [0, 1, 0, 0, 0, 1, 1],
    [0, 1, 1, 0, 0, 0, 1],
    [0, 1, 0, 1, 1, 1, 1],
    [0, 1, 1, 1, 0, 1, 1],
    [0, 1, 1, 0, 1, 1, 1],
    [0, 0, 0, 1, 0, 1, 1],
];

/// Even-parity left-half codes.
pub const G_CODES: [[u8; CELL]; 10] = [
    [0, 1, 0, 0, 1, 1, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [0, 0, 1, 1, 0, 1, 1],
    [0, 1, 0, 0, 0, 0, 1],
    [0, 0, 1, 1, 1, 0, 1],
    [0, 1, 1, 1, 0, 0, 1],
    [0, 0, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 0, 1],
    [0, 0, 0, 1, 0, 0, 1],
    [0, 0, 1, 0, 1, 1, 1],
];

/// Right-half codes.
pub const R_CODES: [[u8; CELL]; 10] = [
    [1, 1, 1, 0, 0, 1, 0],
    [1, 1, 0, 0, 1, 1, 0],
    [1, 1, 0, 1, 1, 0, 0],
    [1, 0, 0, 0, 0, 1, 0],
    [1, 0, 1, 1, 1, 0, 0],
    [1, 0, 0, 1, 1, 1, 0],
    [1, 0, 1, 0, 0, 0, 0],
    [1, 0, 0, 0, 1, 0, 0],
    [1, 0, 0, 1, 0, 0, 0],
    [1, 1, 1, 0, 1, 0, 0],
];

/// Parity of the six left-half digits, selected by the leading digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    /// Odd parity (L code).
    Odd,
    /// Even parity (G code).
    Even,
}

use Parity::{Even as G, Odd as O};

/// Left-half parity pattern for each leading digit.
pub const PARITY_PATTERNS: [[Parity; 6]; 10] = [
    [O, O, O, O, O, O],
    [O, O, G, O, G, G],
    [O, O, G, G, O, G],
    [O, O, G, G, G, O],
    [O, G, O, O, G, G],
    [O, G, G, O, O, G],
    [O, G, G, G, O, O],
    [O, G, O, G, O, G],
    [O, G, O, G, G, O],
    [O, G, G, O, G, O],
];

/// Module offset of the first module of encoded cell `cell` (0..12).
pub const fn cell_offset(cell: usize) -> usize {
    if cell < 6 {
        3 + CELL * cell
    } else {
        50 + CELL * (cell - 6)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymbologyError {
    #[error("expected {expected} symbols, got {got}")]
    InvalidLength { expected: usize, got: usize },
    #[error("invalid symbol {0:?}")]
    InvalidSymbol(char),
    #[error("digit value {0} out of range")]
    DigitOutOfRange(u8),
    #[error("malformed bar pattern: {0}")]
    MalformedPattern(String),
}

/// A 13-digit EAN-13 value. Checksum validity is a predicate, not an
/// invariant: model outputs routinely produce invalid sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DigitSequence([u8; LEN]);

impl DigitSequence {
    pub fn new(digits: [u8; LEN]) -> Result<Self, SymbologyError> {
        if let Some(&d) = digits.iter().find(|&&d| d > 9) {
            return Err(SymbologyError::DigitOutOfRange(d));
        }
        Ok(Self(digits))
    }

    pub fn from_slice(digits: &[u8]) -> Result<Self, SymbologyError> {
        let arr: [u8; LEN] = digits
            .try_into()
            .map_err(|_| SymbologyError::InvalidLength { expected: LEN, got: digits.len() })?;
        Self::new(arr)
    }

    /// Builds a sequence from a 12-digit prefix, appending its check digit.
    pub fn with_check_digit(prefix: &[u8; 12]) -> Result<Self, SymbologyError> {
        let mut digits = [0u8; LEN];
        digits[..12].copy_from_slice(prefix);
        digits[12] = compute_check_digit(prefix);
        Self::new(digits)
    }

    /// Digit at 1-based position `pos` (1..=13).
    pub fn digit(&self, pos: usize) -> u8 {
        assert!((1..=LEN).contains(&pos), "digit position {pos} out of 1..=13");
        self.0[pos - 1]
    }

    pub fn digits(&self) -> &[u8; LEN] {
        &self.0
    }

    /// Copy with the digit at 1-based `pos` replaced.
    pub fn with_digit(&self, pos: usize, value: u8) -> Self {
        assert!((1..=LEN).contains(&pos) && value <= 9);
        let mut d = self.0;
        d[pos - 1] = value;
        Self(d)
    }

    pub fn is_valid(&self) -> bool {
        validate_checksum(self)
    }
}

impl fmt::Display for DigitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for DigitSequence {
    type Err = SymbologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != LEN {
            return Err(SymbologyError::InvalidLength { expected: LEN, got: chars.len() });
        }
        let mut digits = [0u8; LEN];
        for (slot, c) in digits.iter_mut().zip(chars) {
            *slot = c.to_digit(10).ok_or(SymbologyError::InvalidSymbol(c))? as u8;
        }
        Ok(Self(digits))
    }
}

impl Serialize for DigitSequence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DigitSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn weighted_sum(digits: &[u8]) -> u32 {
    // Weights alternate 1,3 leftward from the last digit of `digits`.
    digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| d as u32 * if i % 2 == 0 { 1 } else { 3 })
        .sum()
}

/// True iff the weighted digit sum is divisible by 10.
pub fn validate_checksum(seq: &DigitSequence) -> bool {
    weighted_sum(&seq.0) % 10 == 0
}

/// The unique last digit that makes `prefix` followed by it checksum-valid.
pub fn compute_check_digit(prefix: &[u8; 12]) -> u8 {
    // The appended digit takes weight 1, so every prefix digit shifts one
    // position left of where `weighted_sum` would place it.
    let partial: u32 = prefix
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| d as u32 * if i % 2 == 0 { 3 } else { 1 })
        .sum();
    ((10 - partial % 10) % 10) as u8
}

/// The 95-module stripe pattern; `true` is a dark module.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BarPattern([bool; MODULES]);

impl BarPattern {
    pub fn from_modules(modules: [bool; MODULES]) -> Self {
        Self(modules)
    }

    pub fn modules(&self) -> &[bool; MODULES] {
        &self.0
    }

    /// Run lengths of alternating colors, starting with the color of module 1.
    pub fn runs(&self) -> Vec<(bool, usize)> {
        let mut runs: Vec<(bool, usize)> = Vec::new();
        for &m in &self.0 {
            match runs.last_mut() {
                Some((c, n)) if *c == m => *n += 1,
                _ => runs.push((m, 1)),
            }
        }
        runs
    }
}

impl fmt::Display for BarPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &m in &self.0 {
            f.write_str(if m { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BarPattern {
    type Err = SymbologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != MODULES {
            return Err(SymbologyError::InvalidLength { expected: MODULES, got: chars.len() });
        }
        let mut modules = [false; MODULES];
        for (slot, c) in modules.iter_mut().zip(chars) {
            *slot = match c {
                '0' => false,
                '1' => true,
                other => return Err(SymbologyError::InvalidSymbol(other)),
            };
        }
        Ok(Self(modules))
    }
}

fn put(modules: &mut [bool; MODULES], offset: usize, bits: &[u8]) {
    for (slot, &b) in modules[offset..offset + bits.len()].iter_mut().zip(bits) {
        *slot = b == 1;
    }
}

/// Encodes any 13 digits (checksum validity is not required).
pub fn encode(seq: &DigitSequence) -> BarPattern {
    let mut modules = [false; MODULES];
    put(&mut modules, 0, &START_GUARD);
    put(&mut modules, 45, &CENTER_GUARD);
    put(&mut modules, 92, &END_GUARD);

    let parity = &PARITY_PATTERNS[seq.0[0] as usize];
    for cell in 0..12 {
        let d = seq.0[cell + 1] as usize;
        let code = if cell < 6 {
            match parity[cell] {
                Parity::Odd => &L_CODES[d],
                Parity::Even => &G_CODES[d],
            }
        } else {
            &R_CODES[d]
        };
        put(&mut modules, cell_offset(cell), code);
    }
    BarPattern(modules)
}

fn matches(modules: &[bool], bits: &[u8]) -> bool {
    modules.iter().zip(bits).all(|(&m, &b)| m == (b == 1))
}

/// Exact inverse of [`encode`].
pub fn decode_exact(pat: &BarPattern) -> Result<DigitSequence, SymbologyError> {
    let m = &pat.0;
    if !matches(&m[0..3], &START_GUARD) {
        return Err(SymbologyError::MalformedPattern("start guard".into()));
    }
    if !matches(&m[45..50], &CENTER_GUARD) {
        return Err(SymbologyError::MalformedPattern("center guard".into()));
    }
    if !matches(&m[92..95], &END_GUARD) {
        return Err(SymbologyError::MalformedPattern("end guard".into()));
    }

    let mut digits = [0u8; LEN];
    let mut parity = [Parity::Odd; 6];
    for cell in 0..12 {
        let off = cell_offset(cell);
        let bits = &m[off..off + CELL];
        let found = if cell < 6 {
            L_CODES
                .iter()
                .position(|c| matches(bits, c))
                .map(|d| (d, Parity::Odd))
                .or_else(|| G_CODES.iter().position(|c| matches(bits, c)).map(|d| (d, Parity::Even)))
        } else {
            R_CODES.iter().position(|c| matches(bits, c)).map(|d| (d, Parity::Odd))
        };
        let (d, p) = found
            .ok_or_else(|| SymbologyError::MalformedPattern(format!("digit cell {} matches no code", cell + 2)))?;
        digits[cell + 1] = d as u8;
        if cell < 6 {
            parity[cell] = p;
        }
    }
    let first = PARITY_PATTERNS
        .iter()
        .position(|p| *p == parity)
        .ok_or_else(|| SymbologyError::MalformedPattern("left-half parity pattern".into()))?;
    digits[0] = first as u8;
    Ok(DigitSequence(digits))
}
