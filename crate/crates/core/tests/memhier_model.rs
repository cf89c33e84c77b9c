//! The cache hierarchy against a plain two-level inclusive write-back LRU
//! model, on accesses spaced far enough apart that every fill completes first.

use proptest::prelude::*;
use vrcsim::audit::log_is_complete;
use vrcsim::memhier::{CacheConfig, Cause, Level, Lookup, MemHierState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hit {
    L1,
    L2,
    Memory,
}

/// Sets hold (line, dirty) with the most recently used first.
struct Naive {
    l1: Vec<Vec<(u64, bool)>>,
    l2: Vec<Vec<(u64, bool)>>,
    l1_ways: usize,
    l2_ways: usize,
    writebacks: u64,
}

impl Naive {
    fn new(c: &CacheConfig) -> Self {
        let sets = |bytes: u64, ways: usize| (bytes / 64 / ways as u64) as usize;
        Naive {
            l1: vec![Vec::new(); sets(c.l1_bytes, c.l1_ways)],
            l2: vec![Vec::new(); sets(c.l2_bytes, c.l2_ways)],
            l1_ways: c.l1_ways,
            l2_ways: c.l2_ways,
            writebacks: 0,
        }
    }

    fn access(&mut self, line: u64, store: bool) -> Hit {
        let n1 = self.l1.len() as u64;
        let n2 = self.l2.len() as u64;
        let s1 = (line % n1) as usize;
        if let Some(i) = self.l1[s1].iter().position(|e| e.0 == line) {
            let mut e = self.l1[s1].remove(i);
            e.1 |= store;
            self.l1[s1].insert(0, e);
            return Hit::L1;
        }
        let s2 = (line % n2) as usize;
        let hit = if let Some(i) = self.l2[s2].iter().position(|e| e.0 == line) {
            let e = self.l2[s2].remove(i);
            self.l2[s2].insert(0, e);
            Hit::L2
        } else {
            if self.l2[s2].len() == self.l2_ways {
                let (victim, dirty) = self.l2[s2].pop().unwrap();
                self.writebacks += dirty as u64;
                let v1 = (victim % n1) as usize;
                if let Some(i) = self.l1[v1].iter().position(|e| e.0 == victim) {
                    let (_, d) = self.l1[v1].remove(i);
                    self.writebacks += d as u64;
                }
            }
            self.l2[s2].insert(0, (line, false));
            Hit::Memory
        };
        if self.l1[s1].len() == self.l1_ways {
            let (victim, dirty) = self.l1[s1].pop().unwrap();
            if dirty {
                self.writebacks += 1;
                let v2 = (victim % n2) as usize;
                if let Some(e) = self.l2[v2].iter_mut().find(|e| e.0 == victim) {
                    e.1 = true;
                }
            }
        }
        self.l1[s1].insert(0, (line, store));
        hit
    }
}

fn small() -> CacheConfig {
    CacheConfig {
        l1_bytes: 1024,
        l1_ways: 2,
        l2_bytes: 4096,
        l2_ways: 4,
        ..CacheConfig::default()
    }
}

fn check(cfg: CacheConfig, accesses: &[(u64, bool)]) -> Result<(), TestCaseError> {
    let mut mh = MemHierState::new(cfg.clone());
    let mut naive = Naive::new(&cfg);
    for (i, &(line, store)) in accesses.iter().enumerate() {
        let now = 1000 * (i as u64 + 1);
        mh.tick(now);
        let addr = line * 64 + (i as u64 % 8) * 8;
        let expected = naive.access(line, store);
        let got = match mh.lookup(addr) {
            Lookup::L1Hit => Hit::L1,
            Lookup::L1Miss { l2_hit: true } => Hit::L2,
            Lookup::L1Miss { l2_hit: false } => Hit::Memory,
            Lookup::MshrHit { .. } => panic!("fills are complete between accesses"),
        };
        prop_assert_eq!(got, expected, "access {} to line {}", i, line);
        let cause = Cause::committed(i as u64);
        if store {
            mh.access_store(addr, now, i as u64, cause).unwrap();
        } else {
            mh.access_load(addr, now, false, i as u64, cause).unwrap();
        }
    }
    mh.tick(u64::MAX / 2);
    let a = mh.arrays();
    for (lvl, ours, theirs) in [(Level::L1, &a.l1, &naive.l1), (Level::L2, &a.l2, &naive.l2)] {
        for (s, (x, y)) in ours.iter().zip(theirs).enumerate() {
            let x: Vec<(u64, bool)> = x.iter().map(|l| (l.tag, l.dirty)).collect();
            prop_assert_eq!(&x, y, "{:?} set {}", lvl, s);
        }
    }
    prop_assert_eq!(mh.counters().writebacks, naive.writebacks);
    prop_assert!(log_is_complete(&cfg, mh.log(), &mh.snapshot_digest()));
    Ok(())
}

proptest! {
    #[test]
    fn small_hierarchy_matches_lru_model(acc in prop::collection::vec((0u64..96, any::<bool>()), 1..400)) {
        check(small(), &acc)?;
    }

    #[test]
    fn default_hierarchy_matches_lru_model(acc in prop::collection::vec((0u64..4096, prop::bool::weighted(0.3)), 1..300)) {
        // Strided lines so a few sets see real pressure.
        let acc: Vec<(u64, bool)> = acc.into_iter().map(|(l, s)| ((l % 24) * 64 + l / 1024, s)).collect();
        check(CacheConfig::default(), &acc)?;
    }
}

#[test]
fn deferred_hit_leaves_lru_alone_until_applied() {
    let cfg = small();
    let mut mh = MemHierState::new(cfg.clone());
    // Two lines in set 0, loaded in order: line 8 ends up MRU.
    for (i, line) in [0u64, 8].into_iter().enumerate() {
        let now = 1000 * (i as u64 + 1);
        mh.tick(now);
        mh.access_load(line * 64, now, false, i as u64, Cause::committed(i as u64))
            .unwrap();
    }
    mh.tick(5000);
    let before = mh.snapshot_digest();
    let spec = Cause {
        seq: 9,
        speculative: true,
        probe: false,
    };
    mh.access_load(0, 5000, true, 9, spec).unwrap();
    assert_eq!(mh.snapshot_digest(), before);
    assert!(mh.log().iter().all(|m| !m.cause.speculative));
    mh.apply_deferred(9, 6000, 9);
    assert_eq!(mh.arrays().set(Level::L1, 0)[0].tag, 0);
    assert_ne!(mh.snapshot_digest(), before);
}

#[test]
fn squashed_hit_never_touches_state() {
    let mut mh = MemHierState::new(small());
    mh.access_load(0, 1, false, 0, Cause::committed(0)).unwrap();
    mh.access_load(8 * 64, 1, false, 1, Cause::committed(1)).unwrap();
    mh.tick(10_000);
    let before = mh.snapshot_digest();
    let log_len = mh.log().len();
    mh.access_load(
        0,
        10_000,
        true,
        7,
        Cause {
            seq: 7,
            speculative: true,
            probe: true,
        },
    )
    .unwrap();
    mh.squash_deferred(7);
    mh.apply_deferred(7, 10_001, 7);
    assert_eq!(mh.snapshot_digest(), before);
    assert_eq!(mh.log().len(), log_len);
}
