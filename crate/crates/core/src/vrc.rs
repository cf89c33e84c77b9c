//! Value recomputation engine.
//!
//! A shadowed load that misses in L1 may, if its pc is annotated and the
//! producer instance for its address is still valid, regenerate its value by
//! running the slice on a private scratch file instead of touching memory.
//!
//! Instances are registered when their producer store commits and are keyed
//! by the store's address. Any other committed store that overlaps the
//! address invalidates the instance. History inputs are checkpointed into
//! `hist` when their leaf load commits and freed once every instance that
//! names them has retired.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::memhier::Lookup;
use crate::slicer::{AnnotationTable, Operand, SliceShape};
use crate::trace::{size_mask, AluOp, ArithFault, Reg};

/// 22 KiB of 8-byte entries.
pub const DEFAULT_HIST_CAPACITY: usize = 22 * 1024 / 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrcConfig {
    pub hist_capacity: usize,
    /// Pending recomputations waiting for the engine.
    pub queue_depth: usize,
    /// Clamp on the modeled latency of every slice.
    pub max_latency: Option<u64>,
    /// Signature bits for lossy store-tag matching; `None` matches exactly.
    pub signature_bits: Option<u32>,
}

impl Default for VrcConfig {
    fn default() -> Self {
        VrcConfig {
            hist_capacity: DEFAULT_HIST_CAPACITY,
            queue_depth: 16,
            max_latency: None,
            signature_bits: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RcmpDecision {
    PerformLoad,
    WaitMshr,
    Recompute(u32),
    Delay,
}

/// Why a shadowed miss was not recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DelayReason {
    NotAnnotated,
    NoInstance,
    HistMissing,
    QueueFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecOutcome {
    Ok,
    Overflow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrcCounters {
    /// Shadowed L1 misses seen by the decision logic.
    pub shadowed_misses: u64,
    pub recompute_decisions: u64,
    pub delay_not_annotated: u64,
    pub delay_no_instance: u64,
    pub delay_hist_missing: u64,
    pub delay_queue_full: u64,
    pub completed: u64,
    pub exc_fallbacks: u64,
    pub cancelled: u64,
    pub squashed: u64,
    /// Sum of modeled latencies over completed slices.
    pub latency_sum: u64,
    pub slice_instrs: u64,
    pub sfile_accesses: u64,
    pub ibuff_accesses: u64,
    pub hist_reads: u64,
    pub hist_writes: u64,
    pub hist_overflows: u64,
    pub hist_peak: u64,
    pub instances_registered: u64,
    pub invalidations: u64,
    pub bulk_resets: u64,
    pub engine_busy_cycles: u64,
}

/// Functional units the engine may claim in the current cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuSlots {
    pub alu: usize,
    pub mul: usize,
}

impl FuSlots {
    pub fn claim(&mut self, op: AluOp) -> bool {
        let slot = if op.uses_multiplier() {
            &mut self.mul
        } else {
            &mut self.alu
        };
        if *slot == 0 {
            return false;
        }
        *slot -= 1;
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Instance {
    slice_id: u32,
    size: u8,
    keys: Vec<u64>,
    uses_left: u32,
}

#[derive(Debug, Clone)]
struct Job {
    uid: u64,
    slice_id: u32,
    hist: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Active {
    job: Job,
    cursor: usize,
    temps: Vec<u64>,
    /// Cycle at which the next instruction may start.
    next_start: u64,
    started: u64,
}

/// A finished recomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Done {
    pub uid: u64,
    pub result: Result<u64, ArithFault>,
    /// Cycle at which the value is in the destination register.
    pub ready: u64,
    pub latency: u64,
}

#[derive(Debug, Clone)]
pub struct VrcState {
    cfg: VrcConfig,
    ann: AnnotationTable,
    /// Outstanding references to each checkpoint key.
    key_refs: HashMap<u64, u32>,
    hist: HashMap<u64, u64>,
    live: HashMap<u64, Instance>,
    signature: Vec<u64>,
    sig_len: usize,
    queue: VecDeque<Job>,
    active: Option<Active>,
    /// The engine cannot start another slice before this cycle.
    free_at: u64,
    counters: VrcCounters,
}

impl VrcState {
    pub fn new(ann: AnnotationTable, cfg: VrcConfig) -> Self {
        let sig_len = cfg.signature_bits.map_or(0, |b| 1usize << b.min(24));
        VrcState {
            key_refs: ann.key_refcounts(),
            ann,
            hist: HashMap::new(),
            live: HashMap::new(),
            signature: vec![0; sig_len.div_ceil(64)],
            sig_len,
            queue: VecDeque::new(),
            active: None,
            free_at: 0,
            counters: VrcCounters::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &VrcConfig {
        &self.cfg
    }

    pub fn annotations(&self) -> &AnnotationTable {
        &self.ann
    }

    pub fn counters(&self) -> &VrcCounters {
        &self.counters
    }

    pub fn hist_len(&self) -> usize {
        self.hist.len()
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some() || !self.queue.is_empty()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Earliest cycle at which `step` can make progress.
    pub fn next_event(&self) -> Option<u64> {
        match &self.active {
            Some(a) => Some(a.next_start),
            None if !self.queue.is_empty() => Some(self.free_at),
            None => None,
        }
    }

    fn shape(&self, id: u32) -> Option<&SliceShape> {
        self.ann.slices.get(&id)
    }

    /// Modeled latency of a slice after the configured clamp.
    pub fn modeled_latency(&self, id: u32) -> u64 {
        let l = self.shape(id).map_or(1, SliceShape::latency);
        self.cfg.max_latency.map_or(l, |m| l.min(m))
    }

    fn check(&self, pc: u64, addr: u64, size: u8) -> Result<(u32, Vec<u64>), DelayReason> {
        let Some(&id) = self.ann.rcmp.get(&pc) else {
            return Err(DelayReason::NotAnnotated);
        };
        let inst = match self.live.get(&addr) {
            Some(i) if i.slice_id == id && i.size == size => i,
            _ => return Err(DelayReason::NoInstance),
        };
        let mut vals = Vec::with_capacity(inst.keys.len());
        for k in &inst.keys {
            match self.hist.get(k) {
                Some(&v) => vals.push(v),
                None => return Err(DelayReason::HistMissing),
            }
        }
        if self.queue.len() >= self.cfg.queue_depth {
            return Err(DelayReason::QueueFull);
        }
        Ok((id, vals))
    }

    /// Decides how a load that is ready to access memory proceeds.
    pub fn rcmp_decide(&mut self, pc: u64, addr: u64, size: u8, shadowed: bool, lk: Lookup) -> RcmpDecision {
        if !shadowed {
            return RcmpDecision::PerformLoad;
        }
        match lk {
            Lookup::L1Hit => RcmpDecision::PerformLoad,
            Lookup::MshrHit { .. } => RcmpDecision::WaitMshr,
            Lookup::L1Miss { .. } => {
                self.counters.shadowed_misses += 1;
                match self.check(pc, addr, size) {
                    Ok((id, _)) => {
                        self.counters.recompute_decisions += 1;
                        RcmpDecision::Recompute(id)
                    }
                    Err(r) => {
                        match r {
                            DelayReason::NotAnnotated => self.counters.delay_not_annotated += 1,
                            DelayReason::NoInstance => self.counters.delay_no_instance += 1,
                            DelayReason::HistMissing => self.counters.delay_hist_missing += 1,
                            DelayReason::QueueFull => self.counters.delay_queue_full += 1,
                        }
                        RcmpDecision::Delay
                    }
                }
            }
        }
    }

    /// Queues a recomputation for load `uid` reading `addr`. The caller must
    /// have obtained `Recompute` for the same load in this cycle.
    pub fn start(&mut self, uid: u64, pc: u64, addr: u64, size: u8) -> Result<(), DelayReason> {
        let (slice_id, hist) = self.check(pc, addr, size)?;
        self.counters.hist_reads += hist.len() as u64;
        self.queue.push_back(Job { uid, slice_id, hist });
        Ok(())
    }

    /// Removes a queued (not yet running) recomputation. Returns whether it was found.
    pub fn cancel(&mut self, uid: u64) -> bool {
        let before = self.queue.len();
        self.queue.retain(|j| j.uid != uid);
        let hit = self.queue.len() != before;
        if hit {
            self.counters.cancelled += 1;
        }
        hit
    }

    pub fn is_queued(&self, uid: u64) -> bool {
        self.queue.iter().any(|j| j.uid == uid)
    }

    pub fn is_active(&self, uid: u64) -> bool {
        self.active.as_ref().is_some_and(|a| a.job.uid == uid)
    }

    /// Drops every queued or running recomputation for loads at or after `first`.
    pub fn squash_from(&mut self, first: u64) {
        let before = self.queue.len();
        self.queue.retain(|j| j.uid < first);
        self.counters.squashed += (before - self.queue.len()) as u64;
        if self.active.as_ref().is_some_and(|a| a.job.uid >= first) {
            self.active = None;
            self.counters.squashed += 1;
        }
    }

    /// Drops the recomputation for exactly `uid`, queued or running.
    pub fn abort(&mut self, uid: u64) {
        self.queue.retain(|j| j.uid != uid);
        if self.is_active(uid) {
            self.active = None;
        }
    }

    /// Advances the engine by one cycle. Slice instructions run one at a
    /// time, each claiming a unit from `fu` when it starts. With a latency
    /// clamp the whole slice is evaluated at once and delivered after the
    /// clamped latency.
    pub fn step(&mut self, now: u64, fu: &mut FuSlots, read_reg: impl Fn(Reg) -> u64) -> Option<Done> {
        if self.active.is_none() {
            if now < self.free_at {
                return None;
            }
            let job = self.queue.pop_front()?;
            self.active = Some(Active {
                job,
                cursor: 0,
                temps: Vec::new(),
                next_start: now,
                started: now,
            });
        }
        let a = self.active.as_mut().expect("active");
        if now < a.next_start {
            self.counters.engine_busy_cycles += 1;
            return None;
        }
        let shape = self.ann.slices.get(&a.job.slice_id).expect("slice of a started job");
        let clamp = self.cfg.max_latency;
        if !fu.claim(shape.instrs[a.cursor].op) {
            return None;
        }
        self.counters.engine_busy_cycles += 1;
        let burst = if clamp.is_some() { shape.instrs.len() } else { 1 };
        let mut lat = 0;
        for _ in 0..burst {
            let ins = &shape.instrs[a.cursor];
            self.counters.ibuff_accesses += 1;
            self.counters.slice_instrs += 1;
            let mut ops: smallvec::SmallVec<[u64; 3]> = smallvec::SmallVec::new();
            for &o in &ins.srcs {
                ops.push(match o {
                    Operand::Const(v) => v,
                    Operand::LiveReg(r) => read_reg(r),
                    Operand::Hist(k) => a.job.hist[k as usize],
                    Operand::Temp(t) => {
                        self.counters.sfile_accesses += 1;
                        a.temps[t as usize]
                    }
                });
            }
            lat += ins.op.latency();
            a.cursor += 1;
            match ins.op.eval(&ops) {
                Ok(v) => {
                    self.counters.sfile_accesses += 1;
                    a.temps.push(v);
                }
                Err(f) => {
                    let uid = a.job.uid;
                    self.active = None;
                    self.free_at = now + 1;
                    self.counters.exc_fallbacks += 1;
                    return Some(Done {
                        uid,
                        result: Err(f),
                        ready: now + 1,
                        latency: 0,
                    });
                }
            }
        }
        a.next_start = now + lat;
        if a.cursor < shape.instrs.len() {
            return None;
        }
        let v = *a.temps.last().expect("non-empty slice") & size_mask(shape.size);
        let uid = a.job.uid;
        let started = a.started;
        let full = now + lat + 1 - started;
        let latency = clamp.map_or(full, |m| full.min(m.max(1)));
        self.active = None;
        self.free_at = started + latency - 1;
        self.counters.completed += 1;
        self.counters.latency_sum += latency;
        Some(Done {
            uid,
            result: Ok(v),
            ready: started + latency,
            latency,
        })
    }

    /// REC: checkpoints the value committed at `seq` into the history table.
    pub fn on_commit_rec(&mut self, seq: u64, value: u64) -> Option<RecOutcome> {
        let recs = self.ann.rec.get(&seq)?;
        let mut out = RecOutcome::Ok;
        for &(key, _) in recs {
            if self.key_refs.get(&key).copied().unwrap_or(0) == 0 {
                continue;
            }
            if !self.hist.contains_key(&key) && self.hist.len() >= self.cfg.hist_capacity {
                self.counters.hist_overflows += 1;
                out = RecOutcome::Overflow;
                continue;
            }
            self.counters.hist_writes += 1;
            self.hist.insert(key, value);
        }
        self.counters.hist_peak = self.counters.hist_peak.max(self.hist.len() as u64);
        Some(out)
    }

    /// Inserts or overwrites one history entry directly.
    pub fn rec_checkpoint(&mut self, key: u64, value: u64) -> RecOutcome {
        if !self.hist.contains_key(&key) && self.hist.len() >= self.cfg.hist_capacity {
            self.counters.hist_overflows += 1;
            return RecOutcome::Overflow;
        }
        self.counters.hist_writes += 1;
        self.hist.insert(key, value);
        self.counters.hist_peak = self.counters.hist_peak.max(self.hist.len() as u64);
        RecOutcome::Ok
    }

    fn release(&mut self, inst: Instance) {
        for k in inst.keys {
            if let Some(r) = self.key_refs.get_mut(&k) {
                *r = r.saturating_sub(1);
                if *r == 0 {
                    self.key_refs.remove(&k);
                    self.hist.remove(&k);
                }
            }
        }
    }

    fn sig_bits(&self, addr: u64) -> [usize; 2] {
        let n = self.sig_len;
        let h = (addr >> 3).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        [(h >> 40) as usize % n, (h >> 13) as usize % n]
    }

    fn sig_insert(&mut self, addr: u64) {
        if self.signature.is_empty() {
            return;
        }
        for b in self.sig_bits(addr) {
            self.signature[b / 64] |= 1 << (b % 64);
        }
    }

    fn sig_hit(&self, addr: u64, size: u8) -> bool {
        let first = addr & !7;
        let last = (addr + size as u64 - 1) & !7;
        let mut a = first;
        loop {
            if self
                .sig_bits(a)
                .iter()
                .all(|&b| self.signature[b / 64] & (1 << (b % 64)) != 0)
            {
                return true;
            }
            if a >= last {
                return false;
            }
            a += 8;
        }
    }

    /// Invalidates every registered instance that `addr..addr+size` overlaps.
    pub fn invalidate_on_store(&mut self, addr: u64, size: u8) {
        if !self.signature.is_empty() {
            if !self.live.is_empty() && self.sig_hit(addr, size) {
                self.counters.bulk_resets += 1;
                let all: Vec<Instance> = self.live.drain().map(|(_, i)| i).collect();
                self.counters.invalidations += all.len() as u64;
                for i in all {
                    self.release(i);
                }
                self.signature.iter_mut().for_each(|w| *w = 0);
            }
            return;
        }
        let end = addr + size as u64;
        for a in addr.saturating_sub(7)..end {
            let hit = self.live.get(&a).is_some_and(|i| a + i.size as u64 > addr);
            if hit {
                let i = self.live.remove(&a).expect("present");
                self.counters.invalidations += 1;
                self.release(i);
            }
        }
    }

    /// Called for every committed store: invalidates overlapping instances
    /// and registers the instance this store produces, if any.
    pub fn on_store_commit(&mut self, seq: u64, addr: u64, size: u8) {
        self.invalidate_on_store(addr, size);
        let Some(p) = self.ann.instances.get(&seq) else {
            return;
        };
        if p.addr != addr || p.size != size || !self.ann.slices.contains_key(&p.slice_id) {
            return;
        }
        let inst = Instance {
            slice_id: p.slice_id,
            size,
            keys: p.keys.clone(),
            uses_left: p.uses.max(1),
        };
        self.counters.instances_registered += 1;
        self.sig_insert(addr);
        if let Some(old) = self.live.insert(addr, inst) {
            self.release(old);
        }
    }

    /// Called when an annotated load commits: consumes one use of the
    /// instance it read.
    pub fn on_load_commit(&mut self, pc: u64, addr: u64) {
        let Some(&id) = self.ann.rcmp.get(&pc) else {
            return;
        };
        let done = match self.live.get_mut(&addr) {
            Some(i) if i.slice_id == id => {
                i.uses_left = i.uses_left.saturating_sub(1);
                i.uses_left == 0
            }
            _ => false,
        };
        if done {
            let i = self.live.remove(&addr).expect("present");
            self.release(i);
        }
    }

    pub fn live_instances(&self) -> usize {
        self.live.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicer::{SliceInstance, SliceInstr};
    use smallvec::smallvec;

    fn table(instrs: Vec<SliceInstr>, keys: Vec<u64>) -> AnnotationTable {
        let mut t = AnnotationTable::default();
        t.slices.insert(
            0,
            SliceShape {
                slice_id: 0,
                tag: 0x40,
                size: 8,
                immutable: true,
                instrs,
            },
        );
        t.rcmp.insert(0x80, 0);
        t.instances.insert(
            5,
            SliceInstance {
                slice_id: 0,
                addr: 0x1000,
                size: 8,
                keys: keys.clone(),
                uses: 1,
            },
        );
        for k in keys {
            t.rec.insert(k, vec![(k, 0)]);
        }
        t
    }

    fn mul_add() -> Vec<SliceInstr> {
        vec![
            SliceInstr {
                op: AluOp::Mul,
                srcs: smallvec![Operand::Hist(0), Operand::Const(3)],
            },
            SliceInstr {
                op: AluOp::Add,
                srcs: smallvec![Operand::Temp(0), Operand::LiveReg(2)],
            },
        ]
    }

    const MISS: Lookup = Lookup::L1Miss { l2_hit: false };

    fn wide() -> FuSlots {
        FuSlots { alu: 4, mul: 1 }
    }

    #[test]
    fn unshadowed_and_hits_perform() {
        let mut v = VrcState::new(AnnotationTable::default(), VrcConfig::default());
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, false, MISS), RcmpDecision::PerformLoad);
        assert_eq!(
            v.rcmp_decide(0x80, 0x1000, 8, true, Lookup::L1Hit),
            RcmpDecision::PerformLoad
        );
        assert_eq!(
            v.rcmp_decide(0x80, 0x1000, 8, true, Lookup::MshrHit { ready: 9 }),
            RcmpDecision::WaitMshr
        );
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, true, MISS), RcmpDecision::Delay);
    }

    #[test]
    fn mul_add_takes_five_cycles() {
        let mut v = VrcState::new(table(mul_add(), vec![1]), VrcConfig::default());
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, true, MISS), RcmpDecision::Recompute(0));
        v.start(9, 0x80, 0x1000, 8).unwrap();
        let mut done = None;
        for now in 100..110 {
            if let Some(d) = v.step(now, &mut wide(), |_| 4) {
                done = Some(d);
                break;
            }
        }
        let d = done.unwrap();
        assert_eq!(d.result, Ok(25));
        assert_eq!(d.ready, 105);
        assert_eq!(d.latency, 5);
    }

    #[test]
    fn clamp_limits_latency() {
        let cfg = VrcConfig {
            max_latency: Some(2),
            ..VrcConfig::default()
        };
        let mut v = VrcState::new(table(mul_add(), vec![1]), cfg);
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        v.start(9, 0x80, 0x1000, 8).unwrap();
        let d = (0..10).find_map(|n| v.step(n, &mut wide(), |_| 4)).unwrap();
        assert_eq!(d.ready, 2);
    }

    #[test]
    fn foreign_store_invalidates() {
        let mut v = VrcState::new(table(mul_add(), vec![1]), VrcConfig::default());
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        v.on_store_commit(6, 0x1004, 4);
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, true, MISS), RcmpDecision::Delay);
        assert_eq!(v.counters().delay_no_instance, 1);
        // Its checkpoint is no longer referenced.
        assert_eq!(v.hist_len(), 0);
    }

    #[test]
    fn unrelated_store_keeps_instance() {
        let mut v = VrcState::new(table(mul_add(), vec![1]), VrcConfig::default());
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        v.on_store_commit(6, 0x1008, 8);
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, true, MISS), RcmpDecision::Recompute(0));
    }

    #[test]
    fn lossy_signature_resets_everything() {
        let cfg = VrcConfig {
            signature_bits: Some(1),
            ..VrcConfig::default()
        };
        let mut v = VrcState::new(table(mul_add(), vec![1]), cfg);
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        // With two signature bits every address aliases.
        v.on_store_commit(6, 0x9_0000, 8);
        assert_eq!(v.counters().bulk_resets, 1);
        assert_eq!(v.live_instances(), 0);
    }

    #[test]
    fn hist_overflow_delays() {
        let cfg = VrcConfig {
            hist_capacity: 0,
            ..VrcConfig::default()
        };
        let mut v = VrcState::new(table(mul_add(), vec![1]), cfg);
        assert_eq!(v.on_commit_rec(1, 7), Some(RecOutcome::Overflow));
        v.on_store_commit(5, 0x1000, 8);
        assert_eq!(v.rcmp_decide(0x80, 0x1000, 8, true, MISS), RcmpDecision::Delay);
        assert_eq!(v.counters().delay_hist_missing, 1);
    }

    #[test]
    fn rec_checkpoint_overwrites() {
        let mut v = VrcState::new(AnnotationTable::default(), VrcConfig::default());
        assert_eq!(v.rec_checkpoint(3, 1), RecOutcome::Ok);
        assert_eq!(v.rec_checkpoint(3, 2), RecOutcome::Ok);
        assert_eq!(v.hist_len(), 1);
    }

    #[test]
    fn fault_falls_back() {
        let instrs = vec![SliceInstr {
            op: AluOp::Shl,
            srcs: smallvec![Operand::Const(1), Operand::Hist(0)],
        }];
        let mut v = VrcState::new(table(instrs, vec![1]), VrcConfig::default());
        v.on_commit_rec(1, 70);
        v.on_store_commit(5, 0x1000, 8);
        v.start(9, 0x80, 0x1000, 8).unwrap();
        let d = v.step(0, &mut wide(), |_| 0).unwrap();
        assert!(d.result.is_err());
        assert_eq!(v.counters().exc_fallbacks, 1);
    }

    #[test]
    fn queue_is_bounded_and_cancellable() {
        let cfg = VrcConfig {
            queue_depth: 1,
            ..VrcConfig::default()
        };
        let mut v = VrcState::new(table(mul_add(), vec![1]), cfg);
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        v.start(9, 0x80, 0x1000, 8).unwrap();
        assert_eq!(v.start(10, 0x80, 0x1000, 8), Err(DelayReason::QueueFull));
        assert!(v.cancel(9));
        assert!(!v.is_busy());
    }

    #[test]
    fn last_use_frees_history() {
        let mut v = VrcState::new(table(mul_add(), vec![1]), VrcConfig::default());
        v.on_commit_rec(1, 7);
        v.on_store_commit(5, 0x1000, 8);
        assert_eq!(v.hist_len(), 1);
        v.on_load_commit(0x80, 0x1000);
        assert_eq!(v.hist_len(), 0);
        assert_eq!(v.live_instances(), 0);
    }
}
