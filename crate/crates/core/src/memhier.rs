//! Two-level inclusive write-back cache hierarchy with MSHRs.
//!
//! Every change to a tag array, replacement stack, dirty bit or MSHR history
//! goes through [`Arrays::apply`] and is appended to the mutation log in the
//! same call, so replaying the log rebuilds the exact final state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::trace::LINE_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub line_bytes: u64,
    pub l1_bytes: u64,
    pub l1_ways: usize,
    pub l1_latency: u64,
    pub l2_bytes: u64,
    pub l2_ways: usize,
    pub l2_latency: u64,
    pub mem_latency: u64,
    pub mshrs: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            line_bytes: LINE_BYTES,
            l1_bytes: 32 << 10,
            l1_ways: 8,
            l1_latency: 2,
            l2_bytes: 1 << 20,
            l2_ways: 16,
            l2_latency: 20,
            mem_latency: 150,
            mshrs: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.line_bytes != LINE_BYTES {
            return bad(format!("line size must be {LINE_BYTES} bytes"));
        }
        for (name, bytes, ways) in [("l1", self.l1_bytes, self.l1_ways), ("l2", self.l2_bytes, self.l2_ways)] {
            if ways == 0 || !bytes.is_power_of_two() || bytes < self.line_bytes * ways as u64 {
                return bad(format!(
                    "{name}: {bytes} bytes / {ways} ways is not a power-of-two multiple of the line size"
                ));
            }
            if !(bytes / self.line_bytes / ways as u64).is_power_of_two() {
                return bad(format!("{name}: set count must be a power of two"));
            }
        }
        if self.mshrs == 0 {
            return bad("at least one MSHR per level is required".into());
        }
        Ok(())
    }

    pub fn l1_sets(&self) -> usize {
        (self.l1_bytes / self.line_bytes) as usize / self.l1_ways
    }

    pub fn l2_sets(&self) -> usize {
        (self.l2_bytes / self.line_bytes) as usize / self.l2_ways
    }

    pub fn l2_hit_latency(&self) -> u64 {
        self.l1_latency + self.l2_latency
    }

    pub fn memory_latency(&self) -> u64 {
        self.l1_latency + self.l2_latency + self.mem_latency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    L1Tag,
    L1Lru,
    L1Dirty,
    L2Tag,
    L2Lru,
    L2Dirty,
    L1Mshr,
    L2Mshr,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::L1Tag => "L1_TAG",
            Structure::L1Lru => "L1_LRU",
            Structure::L1Dirty => "L1_DIRTY",
            Structure::L2Tag => "L2_TAG",
            Structure::L2Lru => "L2_LRU",
            Structure::L2Dirty => "L2_DIRTY",
            Structure::L1Mshr => "L1_MSHR",
            Structure::L2Mshr => "L2_MSHR",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Structure::L1Tag,
            Structure::L1Lru,
            Structure::L1Dirty,
            Structure::L2Tag,
            Structure::L2Lru,
            Structure::L2Dirty,
            Structure::L1Mshr,
            Structure::L2Mshr,
        ]
        .into_iter()
        .find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MutOp {
    /// Line installed at the MRU position.
    Insert,
    /// Line removed.
    Evict,
    /// Line moved to the MRU position.
    Touch,
    SetDirty,
    /// MSHR allocated for the line.
    Alloc,
}

impl MutOp {
    pub fn name(self) -> &'static str {
        match self {
            MutOp::Insert => "INSERT",
            MutOp::Evict => "EVICT",
            MutOp::Touch => "TOUCH",
            MutOp::SetDirty => "SET_DIRTY",
            MutOp::Alloc => "ALLOC",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [MutOp::Insert, MutOp::Evict, MutOp::Touch, MutOp::SetDirty, MutOp::Alloc]
            .into_iter()
            .find(|x| x.name() == s)
    }
}

/// Who caused a mutation. `seq` is the trace sequence number, or the probe
/// slot for injected wrong-path loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cause {
    pub seq: u64,
    pub speculative: bool,
    pub probe: bool,
}

impl Cause {
    pub fn committed(seq: u64) -> Self {
        Cause {
            seq,
            speculative: false,
            probe: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mutation {
    pub cycle: u64,
    pub structure: Structure,
    pub op: MutOp,
    /// Line address (byte address divided by the line size).
    pub line: u64,
    pub cause: Cause,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "M cycle={} struct={} op={} line={:#x} seq={} spec={} probe={}",
            self.cycle,
            self.structure.name(),
            self.op.name(),
            self.line,
            self.cause.seq,
            self.cause.speculative as u8,
            self.cause.probe as u8
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Line {
    pub tag: u64,
    pub dirty: bool,
}

/// The externally observable hierarchy state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrays {
    /// Per set, lines in MRU-first order. Tags are full line addresses.
    pub l1: Vec<Vec<Line>>,
    pub l2: Vec<Vec<Line>>,
    pub mshr_history: Vec<(Level, u64)>,
}

impl Arrays {
    pub fn new(cfg: &CacheConfig) -> Self {
        Arrays {
            l1: vec![Vec::with_capacity(cfg.l1_ways); cfg.l1_sets()],
            l2: vec![Vec::with_capacity(cfg.l2_ways); cfg.l2_sets()],
            mshr_history: Vec::new(),
        }
    }

    fn set_mut(&mut self, level: Level, line: u64) -> &mut Vec<Line> {
        let sets = match level {
            Level::L1 => &mut self.l1,
            Level::L2 => &mut self.l2,
        };
        let n = sets.len() as u64;
        &mut sets[(line % n) as usize]
    }

    pub fn set(&self, level: Level, line: u64) -> &[Line] {
        let sets = match level {
            Level::L1 => &self.l1,
            Level::L2 => &self.l2,
        };
        &sets[(line % sets.len() as u64) as usize]
    }

    pub fn contains(&self, level: Level, line: u64) -> bool {
        self.set(level, line).iter().any(|l| l.tag == line)
    }

    /// Applies one mutation. This is the only writer of the arrays.
    pub fn apply(&mut self, m: &Mutation) {
        let (level, kind) = match m.structure {
            Structure::L1Tag => (Level::L1, 0),
            Structure::L1Lru => (Level::L1, 1),
            Structure::L1Dirty => (Level::L1, 2),
            Structure::L2Tag => (Level::L2, 0),
            Structure::L2Lru => (Level::L2, 1),
            Structure::L2Dirty => (Level::L2, 2),
            Structure::L1Mshr => (Level::L1, 3),
            Structure::L2Mshr => (Level::L2, 3),
        };
        if kind == 3 {
            self.mshr_history.push((level, m.line));
            return;
        }
        let set = self.set_mut(level, m.line);
        let pos = set.iter().position(|l| l.tag == m.line);
        match (m.op, pos) {
            (MutOp::Insert, None) => set.insert(
                0,
                Line {
                    tag: m.line,
                    dirty: false,
                },
            ),
            (MutOp::Evict, Some(i)) => {
                set.remove(i);
            }
            (MutOp::Touch, Some(i)) => {
                let l = set.remove(i);
                set.insert(0, l);
            }
            (MutOp::SetDirty, Some(i)) => set[i].dirty = true,
            (op, pos) => debug_assert!(false, "inapplicable {op:?} (present={}) for {m}", pos.is_some()),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, sets) in [(b"L1", &self.l1), (b"L2", &self.l2)] {
            h.update(name);
            for (i, set) in sets.iter().enumerate() {
                if set.is_empty() {
                    continue;
                }
                h.update((i as u64).to_le_bytes());
                h.update((set.len() as u64).to_le_bytes());
                for l in set {
                    h.update(l.tag.to_le_bytes());
                    h.update([l.dirty as u8]);
                }
            }
        }
        h.update(b"MSHR");
        for (level, line) in &self.mshr_history {
            h.update([*level as u8]);
            h.update(line.to_le_bytes());
        }
        h.finalize().into()
    }
}

pub fn hex_digest(d: &[u8; 32]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lookup {
    L1Hit,
    MshrHit { ready: u64 },
    L1Miss { l2_hit: bool },
}

impl Lookup {
    pub fn is_l1_miss(self) -> bool {
        matches!(self, Lookup::L1Miss { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOutcome {
    pub lookup: Lookup,
    /// Cycle at which the value is available.
    pub ready: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no free MSHR")]
pub struct MshrFull;

#[derive(Debug, Clone, Default)]
struct Mshr {
    ready: u64,
    waiters: Vec<u64>,
    dirty_on_fill: bool,
    cause: Option<Cause>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemCounters {
    pub l1_accesses: u64,
    pub l1_hits: u64,
    pub mshr_hits: u64,
    pub l1_misses: u64,
    pub l2_accesses: u64,
    pub l2_hits: u64,
    pub mem_accesses: u64,
    pub writebacks: u64,
    pub deferred_enqueued: u64,
    pub deferred_applied: u64,
    pub deferred_squashed: u64,
}

#[derive(Debug, Clone)]
pub struct MemHierState {
    cfg: CacheConfig,
    arrays: Arrays,
    l1_mshrs: BTreeMap<u64, Mshr>,
    l2_mshrs: BTreeMap<u64, Mshr>,
    /// Deferred replacement updates: (load uid, line), in enqueue order.
    deferred: Vec<(u64, u64, Cause)>,
    log: Vec<Mutation>,
    counters: MemCounters,
    next_fill: u64,
}

impl MemHierState {
    pub fn new(cfg: CacheConfig) -> Self {
        MemHierState {
            arrays: Arrays::new(&cfg),
            cfg,
            l1_mshrs: BTreeMap::new(),
            l2_mshrs: BTreeMap::new(),
            deferred: Vec::new(),
            log: Vec::new(),
            counters: MemCounters::default(),
            next_fill: u64::MAX,
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn arrays(&self) -> &Arrays {
        &self.arrays
    }

    pub fn log(&self) -> &[Mutation] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<Mutation> {
        std::mem::take(&mut self.log)
    }

    pub fn counters(&self) -> &MemCounters {
        &self.counters
    }

    pub fn snapshot_digest(&self) -> [u8; 32] {
        self.arrays.digest()
    }

    pub fn line_of(&self, addr: u64) -> u64 {
        addr / self.cfg.line_bytes
    }

    fn mutate(&mut self, cycle: u64, structure: Structure, op: MutOp, line: u64, cause: Cause) {
        let m = Mutation {
            cycle,
            structure,
            op,
            line,
            cause,
        };
        self.arrays.apply(&m);
        self.log.push(m);
    }

    pub fn lookup(&self, addr: u64) -> Lookup {
        let line = self.line_of(addr);
        if self.arrays.contains(Level::L1, line) {
            Lookup::L1Hit
        } else if let Some(m) = self.l1_mshrs.get(&line) {
            Lookup::MshrHit { ready: m.ready }
        } else {
            Lookup::L1Miss {
                l2_hit: self.arrays.contains(Level::L2, line),
            }
        }
    }

    pub fn mshr_available(&self, addr: u64) -> bool {
        let line = self.line_of(addr);
        if self.l1_mshrs.contains_key(&line) || self.arrays.contains(Level::L1, line) {
            return true;
        }
        self.l1_mshrs.len() < self.cfg.mshrs
            && (self.arrays.contains(Level::L2, line)
                || self.l2_mshrs.contains_key(&line)
                || self.l2_mshrs.len() < self.cfg.mshrs)
    }

    /// Earliest pending fill cycle, if any.
    pub fn next_event(&self) -> Option<u64> {
        (self.next_fill != u64::MAX).then_some(self.next_fill)
    }

    fn recompute_next_fill(&mut self) {
        self.next_fill = self
            .l1_mshrs
            .values()
            .chain(self.l2_mshrs.values())
            .map(|m| m.ready)
            .min()
            .unwrap_or(u64::MAX);
    }

    /// Performs a load access. With `defer_replacement`, a hit's replacement
    /// update is queued under `uid` instead of applied. The caller must not
    /// request a miss with `defer_replacement` set.
    pub fn access_load(
        &mut self,
        addr: u64,
        now: u64,
        defer_replacement: bool,
        uid: u64,
        cause: Cause,
    ) -> Result<LoadOutcome, MshrFull> {
        let line = self.line_of(addr);
        let lookup = self.lookup(addr);
        match lookup {
            Lookup::L1Hit => {
                self.counters.l1_accesses += 1;
                self.counters.l1_hits += 1;
                if defer_replacement {
                    self.deferred.push((uid, line, cause));
                    self.counters.deferred_enqueued += 1;
                } else if self.arrays.set(Level::L1, line)[0].tag != line {
                    self.mutate(now, Structure::L1Lru, MutOp::Touch, line, cause);
                }
                Ok(LoadOutcome {
                    lookup,
                    ready: now + self.cfg.l1_latency,
                })
            }
            Lookup::MshrHit { ready } => {
                self.counters.l1_accesses += 1;
                self.counters.mshr_hits += 1;
                let m = self.l1_mshrs.get_mut(&line).expect("mshr present");
                m.waiters.push(uid);
                if defer_replacement {
                    self.deferred.push((uid, line, cause));
                    self.counters.deferred_enqueued += 1;
                }
                Ok(LoadOutcome {
                    lookup,
                    ready: ready.max(now + self.cfg.l1_latency),
                })
            }
            Lookup::L1Miss { .. } => {
                debug_assert!(!defer_replacement, "misses are never deferred");
                let ready = self.allocate_miss(line, now, uid, false, cause)?;
                Ok(LoadOutcome { lookup, ready })
            }
        }
    }

    fn allocate_miss(&mut self, line: u64, now: u64, uid: u64, dirty: bool, cause: Cause) -> Result<u64, MshrFull> {
        let l2_resident = self.arrays.contains(Level::L2, line);
        let l2_pending = self.l2_mshrs.get(&line).map(|m| m.ready);
        if self.l1_mshrs.len() >= self.cfg.mshrs
            || (!l2_resident && l2_pending.is_none() && self.l2_mshrs.len() >= self.cfg.mshrs)
        {
            return Err(MshrFull);
        }
        self.counters.l1_accesses += 1;
        self.counters.l1_misses += 1;
        self.counters.l2_accesses += 1;
        let ready = if l2_resident {
            self.counters.l2_hits += 1;
            if self.arrays.set(Level::L2, line)[0].tag != line {
                self.mutate(now, Structure::L2Lru, MutOp::Touch, line, cause);
            }
            now + self.cfg.l2_hit_latency()
        } else if let Some(r) = l2_pending {
            r.max(now + self.cfg.l2_hit_latency())
        } else {
            self.counters.mem_accesses += 1;
            let ready = now + self.cfg.memory_latency();
            self.mutate(now, Structure::L2Mshr, MutOp::Alloc, line, cause);
            self.l2_mshrs.insert(
                line,
                Mshr {
                    ready,
                    waiters: vec![uid],
                    dirty_on_fill: false,
                    cause: Some(cause),
                },
            );
            ready
        };
        self.mutate(now, Structure::L1Mshr, MutOp::Alloc, line, cause);
        self.l1_mshrs.insert(
            line,
            Mshr {
                ready,
                waiters: vec![uid],
                dirty_on_fill: dirty,
                cause: Some(cause),
            },
        );
        self.next_fill = self.next_fill.min(ready);
        Ok(ready)
    }

    /// Performs a committed store: write-allocate, write-back.
    pub fn access_store(&mut self, addr: u64, now: u64, uid: u64, cause: Cause) -> Result<u64, MshrFull> {
        let line = self.line_of(addr);
        match self.lookup(addr) {
            Lookup::L1Hit => {
                self.counters.l1_accesses += 1;
                self.counters.l1_hits += 1;
                if self.arrays.set(Level::L1, line)[0].tag != line {
                    self.mutate(now, Structure::L1Lru, MutOp::Touch, line, cause);
                }
                if !self.arrays.set(Level::L1, line)[0].dirty {
                    self.mutate(now, Structure::L1Dirty, MutOp::SetDirty, line, cause);
                }
                Ok(now + self.cfg.l1_latency)
            }
            Lookup::MshrHit { ready } => {
                self.counters.l1_accesses += 1;
                self.counters.mshr_hits += 1;
                let m = self.l1_mshrs.get_mut(&line).expect("mshr present");
                m.dirty_on_fill = true;
                m.waiters.push(uid);
                Ok(ready)
            }
            Lookup::L1Miss { .. } => self.allocate_miss(line, now, uid, true, cause),
        }
    }

    /// Which loads are coalesced on the pending fill of `addr`'s line.
    pub fn mshr_waiters(&self, addr: u64) -> Option<&[u64]> {
        self.l1_mshrs.get(&self.line_of(addr)).map(|m| m.waiters.as_slice())
    }

    fn install(&mut self, level: Level, line: u64, now: u64, dirty: bool, cause: Cause) {
        let (ways, tag_s, dirty_s) = match level {
            Level::L1 => (self.cfg.l1_ways, Structure::L1Tag, Structure::L1Dirty),
            Level::L2 => (self.cfg.l2_ways, Structure::L2Tag, Structure::L2Dirty),
        };
        if self.arrays.contains(level, line) {
            if dirty && !self.arrays.set(level, line).iter().any(|l| l.tag == line && l.dirty) {
                self.mutate(now, dirty_s, MutOp::SetDirty, line, cause);
            }
            return;
        }
        if self.arrays.set(level, line).len() >= ways {
            let victim = *self.arrays.set(level, line).last().expect("full set");
            self.mutate(now, tag_s, MutOp::Evict, victim.tag, cause);
            match level {
                Level::L1 if victim.dirty => {
                    self.counters.writebacks += 1;
                    if self.arrays.contains(Level::L2, victim.tag)
                        && !self
                            .arrays
                            .set(Level::L2, victim.tag)
                            .iter()
                            .any(|l| l.tag == victim.tag && l.dirty)
                    {
                        self.mutate(now, Structure::L2Dirty, MutOp::SetDirty, victim.tag, cause);
                    }
                }
                Level::L1 => {}
                Level::L2 => {
                    if victim.dirty {
                        self.counters.writebacks += 1;
                    }
                    // Inclusion: the L1 copy goes too.
                    if self.arrays.contains(Level::L1, victim.tag) {
                        if self
                            .arrays
                            .set(Level::L1, victim.tag)
                            .iter()
                            .any(|l| l.tag == victim.tag && l.dirty)
                        {
                            self.counters.writebacks += 1;
                        }
                        self.mutate(now, Structure::L1Tag, MutOp::Evict, victim.tag, cause);
                    }
                }
            }
        }
        self.mutate(now, tag_s, MutOp::Insert, line, cause);
        if dirty {
            self.mutate(now, dirty_s, MutOp::SetDirty, line, cause);
        }
    }

    /// Completes every fill due by `now`: L2 fills before L1 fills.
    pub fn tick(&mut self, now: u64) {
        if self.next_fill > now {
            return;
        }
        let due: Vec<u64> = self
            .l2_mshrs
            .iter()
            .filter(|(_, m)| m.ready <= now)
            .map(|(&l, _)| l)
            .collect();
        for line in due {
            let m = self.l2_mshrs.remove(&line).expect("due mshr");
            let cause = m.cause.expect("mshr cause");
            self.install(Level::L2, line, m.ready, false, cause);
        }
        let mut due: Vec<(u64, u64)> = self
            .l1_mshrs
            .iter()
            .filter(|(_, m)| m.ready <= now)
            .map(|(&l, m)| (m.ready, l))
            .collect();
        due.sort_unstable();
        for (_, line) in due {
            let m = self.l1_mshrs.remove(&line).expect("due mshr");
            let cause = m.cause.expect("mshr cause");
            if !self.arrays.contains(Level::L2, line) {
                self.install(Level::L2, line, m.ready, false, cause);
            }
            self.install(Level::L1, line, m.ready, m.dirty_on_fill, cause);
        }
        self.recompute_next_fill();
    }

    /// Applies the deferred replacement updates queued for `uid`, in order.
    pub fn apply_deferred(&mut self, uid: u64, now: u64, seq: u64) {
        let mut i = 0;
        while i < self.deferred.len() {
            if self.deferred[i].0 != uid {
                i += 1;
                continue;
            }
            let (_, line, _) = self.deferred.remove(i);
            self.counters.deferred_applied += 1;
            let set = self.arrays.set(Level::L1, line);
            if set.iter().any(|l| l.tag == line) && set[0].tag != line {
                self.mutate(now, Structure::L1Lru, MutOp::Touch, line, Cause::committed(seq));
            }
        }
    }

    /// Drops the deferred updates queued for `uid` without touching the arrays.
    pub fn squash_deferred(&mut self, uid: u64) {
        let before = self.deferred.len();
        self.deferred.retain(|d| d.0 != uid);
        self.counters.deferred_squashed += (before - self.deferred.len()) as u64;
    }

    pub fn deferred_len(&self) -> usize {
        self.deferred.len()
    }

    pub fn mshrs_in_use(&self) -> (usize, usize) {
        (self.l1_mshrs.len(), self.l2_mshrs.len())
    }
}

/// Rebuilds the observable state from a mutation log.
pub fn replay_log(cfg: &CacheConfig, log: &[Mutation]) -> Arrays {
    let mut a = Arrays::new(cfg);
    for m in log {
        a.apply(m);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: Cause = Cause {
        seq: 0,
        speculative: false,
        probe: false,
    };

    fn settle(m: &mut MemHierState, now: u64) -> u64 {
        let t = m.next_event().unwrap_or(now).max(now);
        m.tick(t);
        t
    }

    #[test]
    fn cold_miss_then_hit() {
        let mut m = MemHierState::new(CacheConfig::default());
        assert_eq!(m.lookup(0x1000), Lookup::L1Miss { l2_hit: false });
        let o = m.access_load(0x1000, 10, false, 1, C).unwrap();
        assert_eq!(o.ready, 10 + 2 + 20 + 150);
        assert!(matches!(m.lookup(0x1008), Lookup::MshrHit { ready: 182 }));
        m.tick(182);
        assert_eq!(m.lookup(0x1000), Lookup::L1Hit);
        assert_eq!(m.access_load(0x1000, 200, false, 2, C).unwrap().ready, 202);
    }

    #[test]
    fn l2_hit_latency() {
        let cfg = CacheConfig::default();
        let mut m = MemHierState::new(cfg.clone());
        m.access_load(0x0, 0, false, 1, C).unwrap();
        m.tick(172);
        // Evict from L1 only: nine lines in one L1 set, distinct L2 sets.
        let stride = cfg.l1_bytes / cfg.l1_ways as u64;
        let mut now = 200;
        for k in 1..=8 {
            m.access_load(k * stride, now, false, 10 + k, C).unwrap();
            now = settle(&mut m, now) + 1;
        }
        assert_eq!(m.lookup(0x0), Lookup::L1Miss { l2_hit: true });
        assert_eq!(m.access_load(0x0, now, false, 99, C).unwrap().ready, now + 22);
    }

    #[test]
    fn coalesced_load_shares_mshr() {
        let mut m = MemHierState::new(CacheConfig::default());
        m.access_load(0x40, 0, false, 1, C).unwrap();
        let before = m.mshrs_in_use();
        let o = m.access_load(0x48, 5, false, 2, C).unwrap();
        assert_eq!(o.ready, 172);
        assert_eq!(m.mshrs_in_use(), before);
        assert_eq!(m.mshr_waiters(0x40), Some(&[1, 2][..]));
    }

    #[test]
    fn speculative_hit_is_deferred_then_applied() {
        let mut m = MemHierState::new(CacheConfig::default());
        let stride = 32 * 1024 / 8;
        for k in 0..2 {
            m.access_load(k * stride, 0, false, k, C).unwrap();
        }
        m.tick(1000);
        let before = m.snapshot_digest();
        let log_len = m.log().len();
        // Line 0 is LRU; a deferred hit leaves the arrays untouched.
        m.access_load(0, 1001, true, 7, C).unwrap();
        assert_eq!(m.snapshot_digest(), before);
        assert_eq!(m.log().len(), log_len);
        assert_eq!(m.deferred_len(), 1);
        m.apply_deferred(7, 1010, 0);
        assert_eq!(m.arrays().set(Level::L1, 0)[0].tag, 0);
    }

    #[test]
    fn squashed_deferred_hit_leaves_no_trace() {
        let mut m = MemHierState::new(CacheConfig::default());
        m.access_load(0, 0, false, 0, C).unwrap();
        m.access_load(4096, 0, false, 1, C).unwrap();
        m.tick(1000);
        let before = m.snapshot_digest();
        m.access_load(0, 1001, true, 7, C).unwrap();
        m.squash_deferred(7);
        m.apply_deferred(7, 1002, 0);
        assert_eq!(m.snapshot_digest(), before);
    }

    #[test]
    fn committed_store_sets_dirty() {
        let mut m = MemHierState::new(CacheConfig::default());
        m.access_load(0x80, 0, false, 0, C).unwrap();
        m.tick(500);
        m.access_store(0x80, 501, 1, C).unwrap();
        assert!(m.arrays().set(Level::L1, 2)[0].dirty);
    }

    #[test]
    fn store_miss_allocates() {
        let mut m = MemHierState::new(CacheConfig::default());
        m.access_store(0x80, 0, 1, C).unwrap();
        assert_eq!(m.mshrs_in_use(), (1, 1));
        m.tick(1000);
        assert!(m.arrays().set(Level::L1, 2)[0].dirty);
    }

    #[test]
    fn mshr_exhaustion() {
        let cfg = CacheConfig {
            mshrs: 2,
            ..CacheConfig::default()
        };
        let mut m = MemHierState::new(cfg);
        m.access_load(0x0, 0, false, 0, C).unwrap();
        m.access_load(0x40, 0, false, 1, C).unwrap();
        assert!(!m.mshr_available(0x80));
        assert_eq!(m.access_load(0x80, 0, false, 2, C), Err(MshrFull));
    }

    #[test]
    fn digests() {
        let a = MemHierState::new(CacheConfig::default());
        let mut b = MemHierState::new(CacheConfig::default());
        assert_eq!(a.snapshot_digest(), b.snapshot_digest());
        b.access_load(0, 0, false, 0, C).unwrap();
        assert_ne!(a.snapshot_digest(), b.snapshot_digest());
    }

    #[test]
    fn log_replay_reproduces_state() {
        let cfg = CacheConfig {
            l1_bytes: 1024,
            l1_ways: 2,
            l2_bytes: 4096,
            l2_ways: 4,
            ..CacheConfig::default()
        };
        let mut m = MemHierState::new(cfg.clone());
        let mut now = 0;
        for k in 0..200u64 {
            let addr = (k * 7919 % 97) * 64;
            if k % 3 == 0 {
                let _ = m.access_store(addr, now, k, C);
            } else {
                let _ = m.access_load(addr, now, false, k, C);
            }
            now += 5;
            m.tick(now);
        }
        m.tick(u64::MAX / 2);
        assert_eq!(replay_log(&cfg, m.log()).digest(), m.snapshot_digest());
    }
}
