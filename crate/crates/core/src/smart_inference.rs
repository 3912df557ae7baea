//! Checksum-constrained decoding over per-digit probabilities.
//!
//! [`mpa`] flips the `max_iter` least confident digits (smallest top-1/top-2
//! probability gap) to their second-best value, orders the `2^max_iter`
//! combinations by joint probability and returns the first one that passes
//! the EAN-13 checksum. [`mpa_aug`] retries on 90/180/270 degree rotations
//! until something decodes; [`mpa_aug_vote`] pools every valid candidate
//! from all four orientations and takes the most frequent sequence.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{rotate_exact, Image, Rotation};
use crate::soft_decoder::{softmax_rows, top_two, LogitMatrix, LogitSource, ProbMatrix};
use crate::symbology::{validate_checksum, DigitSequence, LEN};

/// Values considered per digit.
pub const VALUES_PER_DIGIT: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SiError {
    #[error("max_iter {0} exceeds the {LEN} digit positions")]
    MaxIterTooLarge(usize),
}

/// How candidates are generated and ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOrder {
    /// All `2^max_iter` combinations, tested by descending joint probability,
    /// starting with the unmodified readout.
    #[default]
    JointProbability,
    /// Compatibility order: only single flips of the
    /// initial readout are generated, the initial readout itself is never
    /// tested, and earlier flips are re-tested on every iteration.
    SingleFlips,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiConfig {
    pub max_iter: usize,
    pub voting: bool,
    pub search: SearchOrder,
}

impl SiConfig {
    pub fn new(max_iter: usize, voting: bool) -> Result<Self, SiError> {
        if max_iter > LEN {
            return Err(SiError::MaxIterTooLarge(max_iter));
        }
        Ok(Self { max_iter, voting, search: SearchOrder::JointProbability })
    }

    pub fn with_search(mut self, search: SearchOrder) -> Self {
        self.search = search;
        self
    }

    /// `max_iter = 3`, the best setting without augmentation.
    pub fn plain_default() -> Self {
        Self::new(3, false).unwrap()
    }

    /// `max_iter = 1`, the best setting with augmentation.
    pub fn augmented_default() -> Self {
        Self::new(1, false).unwrap()
    }
}

/// A digit position (1-based) and its top-1 minus top-2 probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    pub position: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sequence: DigitSequence,
    /// 1-based positions holding their second-best value.
    pub flipped_positions: Vec<usize>,
    /// Sum over digits of log P(D_i = chosen_i | X).
    pub log_joint: f64,
}

/// A checksum-valid candidate and its 0-based place in test order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub rank: usize,
    pub candidate: Candidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SiOutcome {
    Decoded(DigitSequence),
    NoResult,
}

impl SiOutcome {
    pub fn sequence(&self) -> Option<&DigitSequence> {
        match self {
            SiOutcome::Decoded(s) => Some(s),
            SiOutcome::NoResult => None,
        }
    }
}

/// Where a decoded sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub orientation: Rotation,
    pub candidate_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiResult {
    pub outcome: SiOutcome,
    pub provenance: Option<Provenance>,
    /// Pool count of the winner (voting only).
    pub vote_count: Option<usize>,
    /// Logit matrices requested from the source.
    pub source_calls: usize,
    /// Checksum tests performed.
    pub candidates_tested: usize,
}

impl SiResult {
    fn no_result(source_calls: usize, candidates_tested: usize) -> Self {
        Self { outcome: SiOutcome::NoResult, provenance: None, vote_count: None, source_calls, candidates_tested }
    }

    pub fn sequence(&self) -> Option<&DigitSequence> {
        self.outcome.sequence()
    }
}

/// Per-row argmax; ties go to the smaller digit.
pub fn greedy_decode(lm: &LogitMatrix) -> DigitSequence {
    let mut digits = [0u8; LEN];
    for (d, row) in digits.iter_mut().zip(lm.rows()) {
        *d = top_two(row).0 as u8;
    }
    DigitSequence::new(digits).expect("argmax is a digit")
}

/// Gap entries sorted ascending by gap; equal gaps keep the lower position first.
pub fn gap_list(probs: &ProbMatrix) -> Vec<GapEntry> {
    let mut list: Vec<GapEntry> =
        probs.gaps().iter().enumerate().map(|(i, &gap)| GapEntry { position: i + 1, gap }).collect();
    list.sort_by(|a, b| a.gap.total_cmp(&b.gap).then(a.position.cmp(&b.position)));
    list
}

fn log_softmax_rows(lm: &LogitMatrix) -> [[f64; 10]; LEN] {
    let mut out = [[0.0; 10]; LEN];
    for (dst, row) in out.iter_mut().zip(lm.rows()) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (d, v) in dst.iter_mut().zip(row) {
            *d = v - lse;
        }
    }
    out
}

struct Readout {
    top1: [usize; LEN],
    top2: [usize; LEN],
    log_probs: [[f64; 10]; LEN],
    gaps: Vec<GapEntry>,
}

impl Readout {
    fn new(lm: &LogitMatrix) -> Self {
        let probs = softmax_rows(lm);
        let mut top1 = [0; LEN];
        let mut top2 = [0; LEN];
        for (i, row) in probs.rows().iter().enumerate() {
            (top1[i], top2[i]) = top_two(row);
        }
        Self { top1, top2, log_probs: log_softmax_rows(lm), gaps: gap_list(&probs) }
    }

    fn candidate(&self, flipped: &[usize]) -> Candidate {
        let mut digits = [0u8; LEN];
        let mut log_joint = 0.0;
        for i in 0..LEN {
            let v = if flipped.contains(&(i + 1)) { self.top2[i] } else { self.top1[i] };
            digits[i] = v as u8;
            log_joint += self.log_probs[i][v];
        }
        Candidate {
            sequence: DigitSequence::new(digits).expect("digit values"),
            flipped_positions: flipped.to_vec(),
            log_joint,
        }
    }
}

/// Every combination of top-1/top-2 values over the `max_iter` smallest-gap
/// positions, in test order: descending joint probability, ties by the
/// flip mask with bit `j` for the `j`-th smallest gap.
pub fn enumerate_candidates(lm: &LogitMatrix, max_iter: usize) -> Vec<Candidate> {
    let readout = Readout::new(lm);
    let selected: Vec<usize> = readout.gaps.iter().take(max_iter.min(LEN)).map(|g| g.position).collect();
    let mut all: Vec<(u32, Candidate)> = (0u32..1 << selected.len())
        .map(|mask| {
            let flipped: Vec<usize> =
                selected.iter().enumerate().filter(|(j, _)| mask & (1 << j) != 0).map(|(_, &p)| p).collect();
            (mask, readout.candidate(&flipped))
        })
        .collect();
    all.sort_by(|a, b| b.1.log_joint.total_cmp(&a.1.log_joint).then(a.0.cmp(&b.0)));
    debug_assert_eq!(all[0].0, 0, "unmodified readout must have maximal joint probability");
    all.into_iter().map(|(_, c)| c).collect()
}

/// Outcome of one checksum search over a single logit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MpaSearch {
    /// Valid candidates in test order; at most one unless voting.
    pub valid: Vec<RankedCandidate>,
    pub tested: usize,
}

pub fn mpa_search(lm: &LogitMatrix, cfg: &SiConfig) -> MpaSearch {
    match cfg.search {
        SearchOrder::JointProbability => {
            let mut valid = Vec::new();
            let mut tested = 0;
            for (rank, candidate) in enumerate_candidates(lm, cfg.max_iter).into_iter().enumerate() {
                tested += 1;
                if validate_checksum(&candidate.sequence) {
                    valid.push(RankedCandidate { rank, candidate });
                    if !cfg.voting {
                        break;
                    }
                }
            }
            MpaSearch { valid, tested }
        }
        SearchOrder::SingleFlips => single_flip_search(lm, cfg),
    }
}

fn single_flip_search(lm: &LogitMatrix, cfg: &SiConfig) -> MpaSearch {
    let readout = Readout::new(lm);
    // combination_list only ever holds the initial readout
    let mut new_combinations: Vec<Candidate> = Vec::new();
    let mut voting = Vec::new();
    let mut tested = 0;
    for (iter, gap) in readout.gaps.iter().enumerate() {
        if iter + 1 > cfg.max_iter {
            return MpaSearch { valid: if cfg.voting { voting } else { Vec::new() }, tested };
        }
        new_combinations.push(readout.candidate(&[gap.position]));
        for (rank, c) in new_combinations.iter().enumerate() {
            tested += 1;
            if validate_checksum(&c.sequence) {
                let hit = RankedCandidate { rank, candidate: c.clone() };
                if cfg.voting {
                    voting.push(hit);
                } else {
                    return MpaSearch { valid: vec![hit], tested };
                }
            }
        }
    }
    MpaSearch { valid: Vec::new(), tested }
}

/// Checksum-constrained decode of one logit matrix.
pub fn mpa(lm: &LogitMatrix, cfg: &SiConfig) -> SiResult {
    let search = mpa_search(lm, &SiConfig { voting: false, ..*cfg });
    match search.valid.into_iter().next() {
        Some(hit) => SiResult {
            outcome: SiOutcome::Decoded(hit.candidate.sequence),
            provenance: Some(Provenance { orientation: Rotation::R0, candidate_rank: hit.rank }),
            vote_count: None,
            source_calls: 0,
            candidates_tested: search.tested,
        },
        None => SiResult::no_result(0, search.tested),
    }
}

/// Fast-track augmentation over any per-orientation logit provider.
pub fn mpa_aug_with(mut logits_for: impl FnMut(Rotation) -> LogitMatrix, cfg: &SiConfig) -> SiResult {
    let mut tested = 0;
    for (k, rot) in Rotation::ALL.into_iter().enumerate() {
        let mut r = mpa(&logits_for(rot), cfg);
        tested += r.candidates_tested;
        if let Some(p) = r.provenance.as_mut() {
            p.orientation = rot;
            r.source_calls = k + 1;
            r.candidates_tested = tested;
            return r;
        }
    }
    SiResult::no_result(Rotation::ALL.len(), tested)
}

/// Tries the image as given, then rotated 90, 180 and 270 degrees; the first
/// orientation that decodes wins.
pub fn mpa_aug(src: &impl LogitSource, img: &Image, cfg: &SiConfig) -> SiResult {
    mpa_aug_with(|rot| src.logits(&rotate_exact(img, rot)), cfg)
}

/// Voting over all four orientations with a per-orientation logit provider.
pub fn mpa_aug_vote_with(mut logits_for: impl FnMut(Rotation) -> LogitMatrix, cfg: &SiConfig) -> SiResult {
    let voting_cfg = SiConfig { voting: true, ..*cfg };
    let mut pool: Vec<(Rotation, RankedCandidate)> = Vec::new();
    let mut tested = 0;
    for rot in Rotation::ALL {
        let search = mpa_search(&logits_for(rot), &voting_cfg);
        tested += search.tested;
        pool.extend(search.valid.into_iter().map(|c| (rot, c)));
    }
    let calls = Rotation::ALL.len();
    if pool.is_empty() {
        return SiResult::no_result(calls, tested);
    }

    struct Group {
        count: usize,
        log_joint: f64,
        first: (Rotation, usize),
    }
    // pool is already in (orientation, rank) order, so `first` is the earliest hit
    let mut order: Vec<DigitSequence> = Vec::new();
    let mut groups: HashMap<DigitSequence, Group> = HashMap::new();
    for (rot, hit) in &pool {
        let g = groups.entry(hit.candidate.sequence).or_insert_with(|| {
            order.push(hit.candidate.sequence);
            Group { count: 0, log_joint: 0.0, first: (*rot, hit.rank) }
        });
        g.count += 1;
        g.log_joint += hit.candidate.log_joint;
    }
    let winner = order
        .iter()
        .max_by(|a, b| {
            let (ga, gb) = (&groups[*a], &groups[*b]);
            ga.count
                .cmp(&gb.count)
                .then(ga.log_joint.total_cmp(&gb.log_joint))
                .then(gb.first.cmp(&ga.first))
        })
        .expect("non-empty pool");
    let g = &groups[winner];
    SiResult {
        outcome: SiOutcome::Decoded(*winner),
        provenance: Some(Provenance { orientation: g.first.0, candidate_rank: g.first.1 }),
        vote_count: Some(g.count),
        source_calls: calls,
        candidates_tested: tested,
    }
}

/// Pools checksum-valid candidates from all four orientations and returns the
/// most frequent sequence; ties go to the larger summed log joint
/// probability, then to the earliest orientation.
pub fn mpa_aug_vote(src: &impl LogitSource, img: &Image, cfg: &SiConfig) -> SiResult {
    mpa_aug_vote_with(|rot| src.logits(&rotate_exact(img, rot)), cfg)
}
