mod common;

use common::*;
use proptest::prelude::*;
use vrcsim::shadows::{ShadowError, ShadowKind, ShadowState};

proptest! {
    #[test]
    fn random_schedules_match_the_oracle(events in prop::collection::vec((0u8..3, any::<prop::sample::Index>()), 0..300)) {
        let mut p = ShadowPair::default();
        for (k, ix) in events {
            let e = match k {
                0 => ShadowEvent::Cast,
                1 => ShadowEvent::Register,
                _ if p.unresolved() > 0 => ShadowEvent::Resolve(ix.index(p.unresolved())),
                _ => ShadowEvent::Register,
            };
            p.apply(e);
            prop_assert!(p.mismatches().is_empty(), "after {:?}", e);
        }
    }
}

#[test]
fn exhaustive_schedules_up_to_eight_events() {
    // The full length-10 sweep runs in the acceptance target.
    assert_eq!(exhaustive_shadow_schedules(8).unwrap(), 9_749);
}

#[test]
fn long_random_schedules() {
    for seed in 0..2 {
        random_shadow_schedule(15_000, seed).unwrap();
    }
}

#[test]
fn capacity_and_misuse_errors() {
    let mut s = ShadowState::new(1, 1);
    let a = s.cast(ShadowKind::C, 0).unwrap();
    assert_eq!(s.cast(ShadowKind::D, 1), Err(ShadowError::SbFull));
    assert_eq!(s.register_load(2), Ok(false));
    assert_eq!(s.register_load(3), Err(ShadowError::RqFull));
    s.resolve(a).unwrap();
    assert_eq!(s.resolve(a), Err(ShadowError::DoubleResolve(a)));
    assert_eq!(s.resolve(99), Err(ShadowError::Unknown(99)));
    assert_eq!(s.poll_unshadowed(), vec![2]);
    assert_eq!(s.register_load(4), Ok(true));
}

#[test]
fn squash_drops_younger_casts_and_loads() {
    let mut s = ShadowState::unbounded();
    let a = s.cast(ShadowKind::C, 10).unwrap();
    s.register_load(11).unwrap();
    s.cast(ShadowKind::E, 12).unwrap();
    s.register_load(13).unwrap();
    s.squash_from(12);
    assert_eq!(s.sb_len(), 1);
    assert_eq!(s.rq_len(), 1);
    s.resolve(a).unwrap();
    assert_eq!(s.poll_unshadowed(), vec![11]);
    assert!(!s.any_live());
}
