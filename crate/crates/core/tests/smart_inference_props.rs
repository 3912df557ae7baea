use proptest::prelude::*;

use smartbar::imaging::Rotation;
use smartbar::smart_inference::{
    enumerate_candidates, greedy_decode, mpa, mpa_aug_vote_with, mpa_aug_with, SearchOrder, SiConfig,
};
use smartbar::soft_decoder::LogitMatrix;
use smartbar::symbology::{validate_checksum, DigitSequence};

fn matrix() -> impl Strategy<Value = LogitMatrix> {
    prop::array::uniform13(prop::array::uniform10(-4.0f64..4.0)).prop_map(LogitMatrix)
}

/// Logits peaked on a valid sequence, so searches often succeed.
fn peaked() -> impl Strategy<Value = LogitMatrix> {
    (prop::array::uniform12(0u8..10), matrix(), prop::array::uniform13(0.0f64..3.0)).prop_map(|(p, mut m, sharp)| {
        let truth = DigitSequence::with_check_digit(&p).unwrap();
        for (i, row) in m.0.iter_mut().enumerate() {
            row[truth.digit(i + 1) as usize] += sharp[i];
        }
        m
    })
}

fn any_matrix() -> impl Strategy<Value = LogitMatrix> {
    prop_oneof![matrix(), peaked()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decoded_outputs_pass_checksum(m in any_matrix(), rotated in prop::array::uniform3(any_matrix()), max in 0usize..=5, literal in any::<bool>()) {
        let search = if literal { SearchOrder::SingleFlips } else { SearchOrder::JointProbability };
        let cfg = SiConfig::new(max, false).unwrap().with_search(search);
        let views = |r: Rotation| match r {
            Rotation::R0 => m,
            Rotation::R90 => rotated[0],
            Rotation::R180 => rotated[1],
            Rotation::R270 => rotated[2],
        };
        for r in [mpa(&m, &cfg), mpa_aug_with(views, &cfg), mpa_aug_vote_with(views, &cfg)] {
            if let Some(s) = r.sequence() {
                prop_assert!(validate_checksum(s));
            }
        }
    }

    #[test]
    fn candidate_bound_and_greedy_first(m in any_matrix(), max in 0usize..=6) {
        let cands = enumerate_candidates(&m, max);
        prop_assert_eq!(cands.len(), 1 << max);
        prop_assert_eq!(cands[0].sequence, greedy_decode(&m));
        prop_assert!(cands[0].flipped_positions.is_empty());
        for c in &cands {
            prop_assert!(c.log_joint <= cands[0].log_joint);
        }
        let r = mpa(&m, &SiConfig::new(max, false).unwrap());
        prop_assert!(r.candidates_tested <= 1 << max);
        if max == 0 {
            prop_assert_eq!(r.candidates_tested, 1);
            let g = greedy_decode(&m);
            prop_assert_eq!(r.sequence().copied(), validate_checksum(&g).then_some(g));
        }
    }

    #[test]
    fn more_iterations_never_lose_a_decode(m in any_matrix(), max in 0usize..=5) {
        let a = mpa(&m, &SiConfig::new(max, false).unwrap());
        let b = mpa(&m, &SiConfig::new(max + 1, false).unwrap());
        if a.sequence().is_some() {
            prop_assert!(b.sequence().is_some());
        }
    }

    #[test]
    fn fast_track_stops_at_upright_decode(m in peaked(), other in matrix()) {
        let cfg = SiConfig::new(2, false).unwrap();
        let plain = mpa(&m, &cfg);
        let mut calls = 0;
        let aug = mpa_aug_with(|r| { calls += 1; if r == Rotation::R0 { m } else { other } }, &cfg);
        if plain.sequence().is_some() {
            prop_assert_eq!(aug.sequence(), plain.sequence());
            prop_assert_eq!(calls, 1);
        }
    }
}
