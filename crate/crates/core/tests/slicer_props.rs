mod common;

use common::*;
use proptest::prelude::*;
use vrcsim::slicer::{annotate, build_slice, emit_annotations, load_annotations, replay_slice, Operand, SliceError};
use vrcsim::trace::{gen_synthetic, Kind, Pattern, SyntheticWorkloadSpec, Trace};

fn stores(t: &Trace) -> impl Iterator<Item = u64> + '_ {
    t.instructions.iter().filter(|i| i.kind == Kind::Store).map(|i| i.seq)
}

proptest! {
    #[test]
    fn slices_replay_to_the_stored_value(ops in prop::collection::vec(raw_op(), 1..150), max_len in 1usize..20) {
        let t = build_trace(&ops);
        for s in stores(&t) {
            if let Ok(slice) = build_slice(&t, s, max_len).unwrap() {
                prop_assert!(slice.len() <= max_len);
                prop_assert_eq!(replay_slice(&slice).unwrap(), t.instructions[s as usize].mem.unwrap().value);
                for (at, ins) in slice.instrs.iter().enumerate() {
                    for o in &ins.srcs {
                        if let Operand::Temp(k) = o {
                            prop_assert!((*k as usize) < at, "temp {} read at {}", k, at);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn generated_slices_replay(seed in any::<u64>(), f in 0.0f64..=1.0) {
        let spec = SyntheticWorkloadSpec::new(Pattern::ComputeStoreLoad, 2000, seed).with_recomputable(f);
        let t = gen_synthetic(&spec).unwrap();
        for s in stores(&t).take(40) {
            if let Ok(slice) = build_slice(&t, s, 100).unwrap() {
                prop_assert_eq!(replay_slice(&slice).unwrap(), slice.root_value);
            }
        }
    }

    #[test]
    fn annotations_round_trip(seed in 0u64..500) {
        let t = gen_synthetic(&SyntheticWorkloadSpec::new(Pattern::Mixed, 2000, seed)).unwrap();
        let (ann, _) = annotate(&t, 100);
        prop_assert_eq!(load_annotations(&emit_annotations(&ann)).unwrap(), ann);
    }
}

#[test]
fn shorter_bound_never_raises_coverage() {
    let t =
        gen_synthetic(&SyntheticWorkloadSpec::new(Pattern::ComputeStoreLoad, 5000, 2).with_recomputable(1.0)).unwrap();
    let (_, full) = annotate(&t, 100);
    let (_, short) = annotate(&t, 1);
    assert!(full.covered_loads > 0);
    assert!(
        short.covered_loads < full.covered_loads,
        "{} vs {}",
        short.covered_loads,
        full.covered_loads
    );
    assert!(short.max_len <= 1);
}

#[test]
fn build_slice_rejects_bad_requests() {
    let t = build_trace(&[RawOp::Branch {
        src: 1,
        taken: true,
        mispredicted: false,
    }]);
    assert_eq!(build_slice(&t, 0, 10), Err(SliceError::NotAStore(0)));
    assert_eq!(build_slice(&t, 5, 10), Err(SliceError::OutOfRange(5)));
    assert_eq!(build_slice(&t, 0, 0), Err(SliceError::ZeroMaxLen));
}

#[test]
fn mul_add_slice_has_latency_five() {
    let t = recompute_locality_trace(0);
    let (ann, stats) = annotate(&t, 100);
    let shape = ann.slice_for_pc(PC_FIRST_USE).expect("load annotated");
    assert_eq!(shape.latency(), 5);
    assert_eq!(stats.max_len, 2);
}

#[test]
fn annotation_parse_errors_name_the_line() {
    let t = gen_synthetic(&SyntheticWorkloadSpec::new(Pattern::ComputeStoreLoad, 2000, 1)).unwrap();
    let mut text = emit_annotations(&annotate(&t, 100).0);
    text.push_str("garbage here\n");
    let err = load_annotations(&text).unwrap_err().to_string();
    assert!(err.contains(&text.lines().count().to_string()), "{err}");
}
