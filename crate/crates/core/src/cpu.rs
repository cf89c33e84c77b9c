//! Cycle-stepped out-of-order core.
//!
//! Each cycle runs, in order: cache fills, timed events (results, shadow
//! resolutions, branch resolution, validations), the recomputation engine,
//! unshadowing, commit, issue (oldest first) and dispatch. Cycles in which
//! nothing can happen are skipped.
//!
//! Values are real: ALU ops evaluate their operands, loads read a memory image
//! seeded from the trace, stores write it at commit. Addresses and branch
//! outcomes come from the trace.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::memhier::{CacheConfig, Cause, LoadOutcome, Lookup, MemCounters, MemHierState, MshrFull, Mutation};
use crate::shadows::{SbId, ShadowKind, ShadowState, ShadowStats};
use crate::slicer::AnnotationTable;
use crate::trace::{size_mask, AluOp, BranchInfo, Kind, MemAccess, Reg, StoreData, Trace};
use crate::vp::{VpConfig, VpCounters, VpLookup, VpState};
use crate::vrc::{Done, FuSlots, RcmpDecision, VrcConfig, VrcCounters, VrcState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    Baseline,
    Dom,
    Vp,
    Vrc,
    Vrc2,
    OracleVp,
    OracleVrc,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::Baseline,
        Policy::Dom,
        Policy::Vp,
        Policy::Vrc,
        Policy::Vrc2,
        Policy::OracleVp,
        Policy::OracleVrc,
    ];

    pub const SECURE: [Policy; 6] = [
        Policy::Dom,
        Policy::Vp,
        Policy::Vrc,
        Policy::Vrc2,
        Policy::OracleVp,
        Policy::OracleVrc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Baseline => "BASELINE",
            Policy::Dom => "DOM",
            Policy::Vp => "VP",
            Policy::Vrc => "VRC",
            Policy::Vrc2 => "VRC2",
            Policy::OracleVp => "ORACLE_VP",
            Policy::OracleVrc => "ORACLE_VRC",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let n = s.trim().to_ascii_uppercase().replace('-', "_");
        Policy::ALL.into_iter().find(|p| p.name() == n)
    }

    pub fn is_secure(self) -> bool {
        self != Policy::Baseline
    }

    pub fn predicts(self) -> bool {
        matches!(self, Policy::Vp | Policy::OracleVp)
    }

    pub fn needs_annotations(self) -> bool {
        matches!(self, Policy::Vrc | Policy::Vrc2)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Consistency {
    Tso,
    Rc,
}

impl Consistency {
    pub fn name(self) -> &'static str {
        match self {
            Consistency::Tso => "tso",
            Consistency::Rc => "rc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tso" => Some(Consistency::Tso),
            "rc" => Some(Consistency::Rc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub width: usize,
    pub rob: usize,
    pub iq: usize,
    pub lq: usize,
    pub sq: usize,
    pub alus: usize,
    pub muls: usize,
    pub ls_ports: usize,
    pub redirect_penalty: u64,
    pub consistency: Consistency,
    pub policy: Policy,
    /// Latency of oracle predictions and oracle recomputations.
    pub oracle_latency: u64,
    /// Cycles without a commit before the run is declared deadlocked.
    pub deadlock_cycles: u64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig {
            width: 8,
            rob: 192,
            iq: 64,
            lq: 48,
            sq: 32,
            alus: 4,
            muls: 1,
            ls_ports: 2,
            redirect_penalty: 12,
            consistency: Consistency::Tso,
            policy: Policy::Dom,
            oracle_latency: 2,
            deadlock_cycles: 100_000,
        }
    }
}

impl CoreConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("width", self.width),
            ("rob", self.rob),
            ("iq", self.iq),
            ("lq", self.lq),
            ("sq", self.sq),
            ("alus", self.alus),
            ("muls", self.muls),
            ("ls_ports", self.ls_ports),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.rob < self.iq {
            return Err(format!("rob ({}) must be at least iq ({})", self.rob, self.iq));
        }
        if self.oracle_latency == 0 {
            return Err("oracle_latency must be at least 1".into());
        }
        Ok(())
    }
}

/// Everything a run needs besides the trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub core: CoreConfig,
    pub cache: CacheConfig,
    pub vp: VpConfig,
    pub vrc: VrcConfig,
}

impl SimConfig {
    pub fn with_policy(&self, p: Policy) -> Self {
        let mut c = self.clone();
        c.core.policy = p;
        c
    }

    pub fn validate(&self) -> Result<(), String> {
        self.core.validate()?;
        self.cache.validate().map_err(|e| e.to_string())?;
        self.vp.validate()?;
        if self.vrc.queue_depth == 0 {
            return Err("vrc queue depth must be at least 1".into());
        }
        Ok(())
    }
}

/// Slice latency cap of the VRC2 policy.
pub const VRC2_MAX_LATENCY: u64 = 2;

/// Sequence numbers of injected probe loads start here.
pub const PROBE_SEQ_BASE: u64 = 1 << 63;
/// Program counter of the first probe load.
pub const PROBE_PC: u64 = 0xFFFF_0000;

/// Wrong-path loads injected after a mispredicted branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub branch: u64,
    pub loads: Vec<u64>,
}

impl ProbeSpec {
    /// Parses `branch=<seq>,loads=<hex,...>`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let rest = s.strip_prefix("branch=").ok_or("probe spec must start with branch=")?;
        let (b, loads) = rest.split_once(",loads=").ok_or("probe spec needs ,loads=")?;
        let branch = crate::trace::format_int(b).ok_or_else(|| format!("bad branch seq `{b}`"))?;
        let loads = loads
            .split(',')
            .filter(|x| !x.is_empty())
            .map(|a| crate::trace::format_int(a).ok_or_else(|| format!("bad probe address `{a}`")))
            .collect::<Result<Vec<_>, _>>()?;
        if loads.is_empty() {
            return Err("probe spec needs at least one load".into());
        }
        Ok(ProbeSpec { branch, loads })
    }
}

impl fmt::Display for ProbeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "branch={},loads=", self.branch)?;
        for (i, a) in self.loads.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a:#x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy {0} needs slice annotations")]
    MissingAnnotations(Policy),
    #[error("probe site {0} is not a mispredicted branch")]
    BadProbeSite(u64),
    #[error("deadlock at cycle {cycle}: {dump}")]
    Deadlock { cycle: u64, dump: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreCounters {
    pub loads: u64,
    pub stores: u64,
    pub branches: u64,
    pub alu_ops: u64,
    pub mul_ops: u64,
    pub forwarded: u64,
    /// Shadowed loads that found their line absent from L1 and its MSHRs.
    pub shadowed_l1_misses: u64,
    pub delayed: u64,
    pub predicted: u64,
    pub vp_correct: u64,
    pub vp_wrong: u64,
    pub validations: u64,
    pub replayed: u64,
    pub recompute_decisions: u64,
    pub recomputed: u64,
    pub recompute_fallbacks: u64,
    pub recompute_cancelled: u64,
    pub unsound_recomputations: u64,
    /// Committed loads whose value came through an L1 lookup or a recomputation.
    pub l1_lookups: u64,
    pub l1_misses: u64,
    pub alu_faults: u64,
    pub probes_dispatched: u64,
    pub probes_squashed: u64,
    pub active_cycles: u64,
}

/// Per-instruction timing of a committed instruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub dispatch: u64,
    /// Cycle of the access, recomputation or prediction that produced the value.
    pub issue: u64,
    pub complete: u64,
    pub commit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recomputation {
    pub seq: u64,
    pub value: u64,
    pub traced: u64,
    pub latency: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: Policy,
    pub cycles: u64,
    pub committed: u64,
    /// What each trace instruction committed, indexed by seq.
    pub committed_values: Vec<Option<u64>>,
    pub timing: Vec<Timing>,
    pub counters: CoreCounters,
    pub mem: MemCounters,
    pub vp: VpCounters,
    pub vrc: VrcCounters,
    pub shadows: ShadowStats,
    pub digest: [u8; 32],
    pub log: Vec<Mutation>,
    /// (seq, completion cycle) of every validation, in completion order.
    pub validations: Vec<(u64, u64)>,
    pub recomputations: Vec<Recomputation>,
    pub probe: Option<ProbeSpec>,
}

impl RunResult {
    pub fn ipc(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.committed as f64 / self.cycles as f64
        }
    }

    pub fn l1_miss_ratio(&self) -> f64 {
        if self.counters.l1_lookups == 0 {
            0.0
        } else {
            self.counters.l1_misses as f64 / self.counters.l1_lookups as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Src {
    Val(u64),
    Rob(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum St {
    /// Waiting to issue (in the IQ, or eligible to reissue).
    Waiting,
    /// Branch executing or store address being generated.
    Issued,
    Delayed,
    Predicted,
    Recomputing,
    Validating,
    Done,
}

#[derive(Debug, Clone)]
struct Entry {
    order: u64,
    gen: u64,
    seq: u64,
    probe: bool,
    kind: Kind,
    pc: u64,
    op: Option<AluOp>,
    imm: Option<i64>,
    dst: Option<Reg>,
    srcs: SmallVec<[Src; 3]>,
    data: Option<Src>,
    mem: Option<MemAccess>,
    br: Option<BranchInfo>,
    st: St,
    issued_once: bool,
    unshadowed: bool,
    addr_known: bool,
    e_sb: Option<SbId>,
    m_sb: Option<SbId>,
    c_sb: Option<SbId>,
    d_sb: Option<SbId>,
    vp_lookup: Option<Box<VpLookup>>,
    predicted: Option<u64>,
    actual: u64,
    /// Whether the value-producing lookup missed in L1.
    decisive: Option<bool>,
    dispatch: u64,
    issue: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EvKind {
    Wake,
    Resolve(SbId),
    StoreAddr,
    BranchResolve,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    cycle: u64,
    order: u64,
    gen: u64,
    kind: EvKind,
}

struct Fu {
    slots: FuSlots,
    ls: usize,
    issued: usize,
}

const PRF_RING: usize = 1024;

struct Sim<'a> {
    cfg: SimConfig,
    policy: Policy,
    trace: &'a Trace,
    probe: Option<&'a ProbeSpec>,
    now: u64,
    rob: VecDeque<Entry>,
    next_order: u64,
    next_gen: u64,
    prf: Vec<(u64, u64)>,
    rename: Vec<Option<u64>>,
    regs: Vec<u64>,
    mem: HashMap<u64, u8>,
    fetch: usize,
    blocked_on: Option<u64>,
    resume_at: u64,
    probe_queue: VecDeque<(usize, u64)>,
    first_probe: Option<u64>,
    /// Validations are serialized: at most one is in flight.
    validating: bool,
    iq: usize,
    lq: usize,
    sq: VecDeque<u64>,
    sb_cap: usize,
    cands: BTreeSet<u64>,
    events: BinaryHeap<Reverse<Event>>,
    shadows: ShadowState,
    mh: MemHierState,
    vp: Option<VpState>,
    vrc: Option<VrcState>,
    counters: CoreCounters,
    committed_values: Vec<Option<u64>>,
    timing: Vec<Timing>,
    validations: Vec<(u64, u64)>,
    recomputations: Vec<Recomputation>,
    committed: u64,
    last_commit: u64,
    scratch: Vec<u64>,
}

/// Memory contents the trace assumes before its first instruction: every
/// byte a load observes before any in-trace store writes it.
fn initial_image(t: &Trace) -> HashMap<u64, u8> {
    let mut written: HashSet<u64> = HashSet::new();
    let mut image = HashMap::new();
    for i in &t.instructions {
        let Some(m) = i.mem else { continue };
        for b in 0..m.size as u64 {
            match i.kind {
                Kind::Load if !written.contains(&(m.addr + b)) => {
                    image.entry(m.addr + b).or_insert((m.value >> (8 * b)) as u8);
                }
                Kind::Store => {
                    written.insert(m.addr + b);
                }
                _ => {}
            }
        }
    }
    image
}

impl<'a> Sim<'a> {
    fn new(
        trace: &'a Trace,
        ann: Option<&AnnotationTable>,
        cfg: &SimConfig,
        probe: Option<&'a ProbeSpec>,
    ) -> Result<Self, SimError> {
        cfg.validate().map_err(SimError::Config)?;
        let policy = cfg.core.policy;
        if policy.needs_annotations() && ann.is_none() {
            return Err(SimError::MissingAnnotations(policy));
        }
        if let Some(p) = probe {
            if !trace.get(p.branch).is_some_and(|b| b.is_mispredicted_branch()) {
                return Err(SimError::BadProbeSite(p.branch));
            }
        }
        let nregs = trace.header.arch_regs.max(1) as usize;
        let mut regs = vec![0; nregs];
        for &(r, v) in &trace.header.init_regs {
            if let Some(s) = regs.get_mut(r as usize) {
                *s = v;
            }
        }
        let mut vrc_cfg = cfg.vrc.clone();
        if policy == Policy::Vrc2 {
            vrc_cfg.max_latency = Some(VRC2_MAX_LATENCY);
        }
        let sb_cap = 2 * cfg.core.rob + 2;
        let shadows = if policy == Policy::Baseline {
            ShadowState::unbounded()
        } else {
            ShadowState::new(sb_cap, cfg.core.lq + 1)
        };
        Ok(Sim {
            policy,
            trace,
            probe,
            now: 0,
            rob: VecDeque::with_capacity(cfg.core.rob),
            next_order: 0,
            next_gen: 0,
            prf: vec![(0, u64::MAX); PRF_RING.max((4 * cfg.core.rob).next_power_of_two())],
            rename: vec![None; nregs],
            regs,
            mem: initial_image(trace),
            fetch: 0,
            blocked_on: None,
            resume_at: 0,
            probe_queue: VecDeque::new(),
            first_probe: None,
            validating: false,
            iq: 0,
            lq: 0,
            sq: VecDeque::new(),
            sb_cap: if policy == Policy::Baseline { usize::MAX } else { sb_cap },
            cands: BTreeSet::new(),
            events: BinaryHeap::new(),
            shadows,
            mh: MemHierState::new(cfg.cache.clone()),
            vp: (policy == Policy::Vp).then(|| VpState::new(cfg.vp.clone())),
            vrc: policy
                .needs_annotations()
                .then(|| VrcState::new(ann.cloned().unwrap_or_default(), vrc_cfg.clone())),
            counters: CoreCounters::default(),
            committed_values: vec![None; trace.len()],
            timing: vec![Timing::default(); trace.len()],
            validations: Vec::new(),
            recomputations: Vec::new(),
            committed: 0,
            last_commit: 0,
            scratch: Vec::new(),
            cfg: cfg.clone(),
        })
    }

    fn slot(&self, order: u64) -> usize {
        order as usize & (self.prf.len() - 1)
    }

    fn set_value(&mut self, order: u64, value: u64, ready: u64) {
        let s = self.slot(order);
        self.prf[s] = (value, ready);
        if ready > self.now && ready != u64::MAX {
            self.wake(ready);
        }
    }

    fn src_value(&self, s: Src) -> Option<u64> {
        match s {
            Src::Val(v) => Some(v),
            Src::Rob(o) => {
                let (v, r) = self.prf[self.slot(o)];
                (r <= self.now).then_some(v)
            }
        }
    }

    fn pos(&self, order: u64) -> Option<usize> {
        let head = self.rob.front()?.order;
        let i = order.checked_sub(head)? as usize;
        (i < self.rob.len()).then_some(i)
    }

    fn push_event(&mut self, cycle: u64, order: u64, gen: u64, kind: EvKind) {
        self.events.push(Reverse(Event {
            cycle,
            order,
            gen,
            kind,
        }));
    }

    fn wake(&mut self, cycle: u64) {
        self.push_event(cycle, u64::MAX, 0, EvKind::Wake);
    }

    fn resolve(&mut self, id: SbId) {
        self.shadows.resolve(id).expect("each shadow is resolved once");
    }

    fn cause(&self, e: &Entry) -> Cause {
        Cause {
            seq: e.seq,
            speculative: !e.unshadowed,
            probe: e.probe,
        }
    }

    fn read_mem(&self, addr: u64, size: u8) -> u64 {
        let mut v = 0u64;
        for b in 0..size as u64 {
            v |= (*self.mem.get(&(addr + b)).unwrap_or(&0) as u64) << (8 * b);
        }
        v
    }

    fn done(&self) -> bool {
        self.fetch >= self.trace.len() && self.rob.is_empty()
    }

    fn run(mut self) -> Result<RunResult, SimError> {
        while !self.done() {
            let progress = self.cycle()?;
            if self.done() {
                self.now += 1;
                break;
            }
            if self.now.saturating_sub(self.last_commit) >= self.cfg.core.deadlock_cycles {
                return Err(self.deadlock());
            }
            if progress {
                self.counters.active_cycles += 1;
                self.now += 1;
                continue;
            }
            let mut next = u64::MAX;
            if let Some(Reverse(e)) = self.events.peek() {
                next = next.min(e.cycle);
            }
            if let Some(c) = self.mh.next_event() {
                next = next.min(c);
            }
            if let Some(c) = self.vrc.as_ref().and_then(VrcState::next_event) {
                next = next.min(c);
            }
            if self.blocked_on.is_none() && self.fetch < self.trace.len() && self.resume_at > self.now {
                next = next.min(self.resume_at);
            }
            if next == u64::MAX {
                return Err(self.deadlock());
            }
            self.now = next.max(self.now + 1);
        }
        let digest = self.mh.snapshot_digest();
        Ok(RunResult {
            policy: self.policy,
            cycles: self.now,
            committed: self.committed,
            committed_values: self.committed_values,
            timing: self.timing,
            counters: self.counters,
            mem: *self.mh.counters(),
            vp: self.vp.as_ref().map(|v| *v.counters()).unwrap_or_default(),
            vrc: self.vrc.as_ref().map(|v| *v.counters()).unwrap_or_default(),
            shadows: *self.shadows.stats(),
            digest,
            log: self.mh.take_log(),
            validations: self.validations,
            recomputations: self.recomputations,
            probe: self.probe.cloned(),
        })
    }

    fn deadlock(&self) -> SimError {
        let head = self.rob.front().map_or("empty rob".to_string(), |e| {
            format!(
                "head seq={} kind={} state={:?} unshadowed={} addr_known={}",
                e.seq,
                e.kind.mnemonic(),
                e.st,
                e.unshadowed,
                e.addr_known
            )
        });
        SimError::Deadlock {
            cycle: self.now,
            dump: format!(
                "{head}; rob={} iq={} lq={} sq={} sb={} rq={} committed={}",
                self.rob.len(),
                self.iq,
                self.lq,
                self.sq.len(),
                self.shadows.sb_len(),
                self.shadows.rq_len(),
                self.committed
            ),
        }
    }

    fn cycle(&mut self) -> Result<bool, SimError> {
        let mut progress = false;
        if self.mh.next_event().is_some_and(|c| c <= self.now) {
            self.mh.tick(self.now);
            progress = true;
        }
        progress |= self.process_events();
        let mut fu = Fu {
            slots: FuSlots {
                alu: self.cfg.core.alus,
                mul: self.cfg.core.muls,
            },
            ls: self.cfg.core.ls_ports,
            issued: 0,
        };
        progress |= self.engine(&mut fu.slots);
        progress |= self.unshadow();
        progress |= self.commit();
        progress |= self.issue(&mut fu);
        progress |= self.dispatch();
        Ok(progress)
    }

    fn process_events(&mut self) -> bool {
        let mut any = false;
        while let Some(Reverse(ev)) = self.events.peek().copied() {
            if ev.cycle > self.now {
                break;
            }
            self.events.pop();
            any = true;
            if ev.kind == EvKind::Wake {
                continue;
            }
            let Some(i) = self.pos(ev.order) else { continue };
            if self.rob[i].gen != ev.gen {
                continue;
            }
            match ev.kind {
                EvKind::Wake => {}
                EvKind::Resolve(id) => self.resolve(id),
                EvKind::StoreAddr => {
                    let e = &mut self.rob[i];
                    e.addr_known = true;
                    e.st = St::Done;
                    let ids = [e.d_sb.take(), e.e_sb.take()];
                    for id in ids.into_iter().flatten() {
                        self.resolve(id);
                    }
                }
                EvKind::BranchResolve => self.resolve_branch(i),
                EvKind::Validation => self.finish_validation(i),
            }
        }
        any
    }

    fn resolve_branch(&mut self, i: usize) {
        let order = self.rob[i].order;
        if self.first_probe.is_some() && self.probe.is_some_and(|p| p.branch == self.rob[i].seq) {
            let first = self.first_probe.take().expect("checked");
            self.squash_from(first);
        }
        let i = self.pos(order).expect("branch survives its own squash");
        let e = &mut self.rob[i];
        e.st = St::Done;
        if let Some(id) = e.c_sb.take() {
            self.resolve(id);
        }
        if self.blocked_on == Some(order) {
            self.blocked_on = None;
            self.resume_at = self.now + self.cfg.core.redirect_penalty;
            self.wake(self.resume_at);
        }
    }

    /// Removes every entry at or after `first` (only probes are ever squashed).
    fn squash_from(&mut self, first: u64) {
        while self.rob.back().is_some_and(|e| e.order >= first) {
            let e = self.rob.pop_back().expect("non-empty");
            self.cands.remove(&e.order);
            if e.kind == Kind::Load {
                self.lq -= 1;
                self.mh.squash_deferred(e.order);
            }
            if e.kind == Kind::Store {
                self.sq.pop_back();
            }
            if !e.issued_once && e.kind != Kind::Nop {
                self.iq -= 1;
            }
            if e.probe {
                self.counters.probes_squashed += 1;
            }
        }
        self.probe_queue.clear();
        self.shadows.squash_from(first);
        if let Some(v) = self.vrc.as_mut() {
            v.squash_from(first);
        }
        self.next_order = first;
    }

    fn finish_validation(&mut self, i: usize) {
        let penalty = self.cfg.core.redirect_penalty;
        let now = self.now;
        let e = &mut self.rob[i];
        if e.st != St::Validating {
            return;
        }
        e.st = St::Done;
        self.validating = false;
        let order = e.order;
        let actual = e.actual;
        let seq = e.seq;
        let correct = e.predicted == Some(actual);
        if let Some(id) = e.m_sb.take() {
            self.resolve(id);
        }
        self.validations.push((seq, now));
        self.counters.validations += 1;
        if correct {
            self.counters.vp_correct += 1;
            if let Some(t) = self.timing.get_mut(seq as usize) {
                t.complete = now;
            }
            return;
        }
        self.counters.vp_wrong += 1;
        self.set_value(order, actual, now + penalty);
        if let Some(t) = self.timing.get_mut(seq as usize) {
            t.complete = now + penalty;
        }
        // Selective replay of every ALU op that consumed the wrong value.
        let mut tainted: HashSet<u64> = HashSet::from([order]);
        for j in i + 1..self.rob.len() {
            let e = &self.rob[j];
            if e.kind != Kind::Alu || !e.srcs.iter().any(|s| matches!(s, Src::Rob(o) if tainted.contains(o))) {
                continue;
            }
            let o = e.order;
            tainted.insert(o);
            if e.st == St::Done {
                self.rob[j].st = St::Waiting;
                let s = self.slot(o);
                self.prf[s].1 = u64::MAX;
                self.cands.insert(o);
                self.counters.replayed += 1;
            }
        }
    }

    fn engine(&mut self, fu: &mut FuSlots) -> bool {
        let Some(v) = self.vrc.as_mut() else { return false };
        let regs = &self.regs;
        let busy = v.is_busy();
        let done = v.step(self.now, fu, |r| regs.get(r as usize).copied().unwrap_or(0));
        if let Some(d) = done {
            self.recompute_done(d);
        }
        busy
    }

    fn recompute_done(&mut self, d: Done) {
        let Some(i) = self.pos(d.uid) else { return };
        if self.rob[i].st != St::Recomputing {
            return;
        }
        match d.result {
            Ok(v) => {
                let e = &mut self.rob[i];
                e.st = St::Done;
                e.decisive = Some(true);
                let (order, gen, seq) = (e.order, e.gen, e.seq);
                let m_sb = e.m_sb.take();
                let traced = self.trace.instructions[seq as usize].mem.map_or(0, |m| m.value);
                self.set_value(order, v, d.ready);
                if let Some(id) = m_sb {
                    self.push_event(d.ready, order, gen, EvKind::Resolve(id));
                }
                self.counters.recomputed += 1;
                if v != traced {
                    self.counters.unsound_recomputations += 1;
                }
                self.recomputations.push(Recomputation {
                    seq,
                    value: v,
                    traced,
                    latency: d.latency,
                });
                // The engine picks the job up the cycle after the decision.
                self.rob[i].issue = d.ready - d.latency;
                if let Some(t) = self.timing.get_mut(seq as usize) {
                    t.complete = d.ready;
                }
            }
            Err(_) => {
                self.counters.recompute_fallbacks += 1;
                let e = &mut self.rob[i];
                if e.unshadowed {
                    e.st = St::Waiting;
                    self.cands.insert(d.uid);
                } else {
                    e.st = St::Delayed;
                }
            }
        }
    }

    // Cancelling has side effects, so it stays out of a match guard.
    #[allow(clippy::collapsible_match)]
    fn unshadow(&mut self) -> bool {
        let mut buf = std::mem::take(&mut self.scratch);
        buf.clear();
        self.shadows.poll_into(&mut buf);
        let any = !buf.is_empty();
        for &o in &buf {
            let Some(i) = self.pos(o) else { continue };
            let seq = self.rob[i].seq;
            self.rob[i].unshadowed = true;
            self.mh.apply_deferred(o, self.now, seq);
            match self.rob[i].st {
                St::Delayed => {
                    self.rob[i].st = St::Waiting;
                    self.cands.insert(o);
                }
                St::Predicted => {
                    self.cands.insert(o);
                }
                St::Recomputing => {
                    if self.vrc.as_mut().is_some_and(|v| v.cancel(o)) {
                        self.counters.recompute_cancelled += 1;
                        self.rob[i].st = St::Waiting;
                        self.cands.insert(o);
                    }
                }
                _ => {}
            }
        }
        self.scratch = buf;
        any
    }

    fn commit(&mut self) -> bool {
        let mut n = 0;
        while n < self.cfg.core.width {
            let Some(e) = self.rob.front() else { break };
            let ready = match e.kind {
                Kind::Alu | Kind::Load | Kind::Nop => e.st == St::Done && self.prf[self.slot(e.order)].1 <= self.now,
                Kind::Branch => e.st == St::Done,
                Kind::Store => e.addr_known && (e.data.is_none() || self.src_value(e.data.expect("checked")).is_some()),
            };
            if !ready {
                break;
            }
            debug_assert!(!e.probe, "probes never commit");
            let value = match e.kind {
                Kind::Store => {
                    let m = e.mem.expect("store has mem");
                    let data = match e.data {
                        Some(s) => self.src_value(s).expect("checked"),
                        None => e.imm.map_or(0, |v| v as u64),
                    } & size_mask(m.size);
                    let cause = Cause::committed(e.seq);
                    if let Err(MshrFull) = self.mh.access_store(m.addr, self.now, e.order, cause) {
                        break;
                    }
                    for b in 0..m.size as u64 {
                        self.mem.insert(m.addr + b, (data >> (8 * b)) as u8);
                    }
                    if let Some(v) = self.vrc.as_mut() {
                        v.on_store_commit(e.seq, m.addr, m.size);
                    }
                    Some(data)
                }
                Kind::Alu | Kind::Load => e.dst.map(|_| self.prf[self.slot(e.order)].0),
                _ => None,
            };
            let e = self.rob.pop_front().expect("head");
            if let (Some(d), Some(v)) = (e.dst, value) {
                self.regs[d as usize] = v;
                if self.rename[d as usize] == Some(e.order) {
                    self.rename[d as usize] = None;
                }
            }
            match e.kind {
                Kind::Load => {
                    self.lq -= 1;
                    let m = e.mem.expect("load has mem");
                    let v = self.prf[self.slot(e.order)].0;
                    if let (Some(vp), Some(lk)) = (self.vp.as_mut(), e.vp_lookup.as_deref()) {
                        vp.train(lk, v);
                    }
                    if let Some(vrc) = self.vrc.as_mut() {
                        vrc.on_commit_rec(e.seq, v);
                        vrc.on_load_commit(e.pc, m.addr);
                    }
                    if let Some(miss) = e.decisive {
                        self.counters.l1_lookups += 1;
                        self.counters.l1_misses += miss as u64;
                    }
                }
                Kind::Store => {
                    self.sq.pop_front();
                }
                _ => {}
            }
            self.committed_values[e.seq as usize] = value;
            let produced = self.prf[self.slot(e.order)].1.min(self.now);
            let t = &mut self.timing[e.seq as usize];
            t.commit = self.now;
            t.dispatch = e.dispatch;
            t.issue = e.issue;
            if t.complete == 0 {
                t.complete = produced;
            }
            self.committed += 1;
            self.last_commit = self.now;
            n += 1;
        }
        n > 0
    }

    fn issue(&mut self, fu: &mut Fu) -> bool {
        let mut any = false;
        let mut cursor = Bound::Unbounded;
        while fu.issued < self.cfg.core.width {
            let Some(&o) = self.cands.range((cursor, Bound::Unbounded)).next() else {
                break;
            };
            cursor = Bound::Excluded(o);
            let Some(i) = self.pos(o) else {
                self.cands.remove(&o);
                continue;
            };
            let issued = match self.rob[i].kind {
                Kind::Alu => self.issue_alu(i, fu),
                Kind::Branch => self.issue_branch(i, fu),
                Kind::Store => self.issue_store(i, fu),
                Kind::Load => self.issue_load(i, fu),
                Kind::Nop => false,
            };
            if issued {
                any = true;
                fu.issued += 1;
            }
        }
        any
    }

    fn operands(&self, i: usize) -> Option<SmallVec<[u64; 4]>> {
        let e = &self.rob[i];
        let mut ops: SmallVec<[u64; 4]> = SmallVec::new();
        for &s in &e.srcs {
            ops.push(self.src_value(s)?);
        }
        Some(ops)
    }

    fn leave_iq(&mut self, i: usize) {
        let e = &mut self.rob[i];
        if !e.issued_once {
            e.issued_once = true;
            self.iq -= 1;
            if e.kind == Kind::Load {
                if let Some(id) = e.e_sb.take() {
                    self.resolve(id);
                }
            }
        }
    }

    fn issue_alu(&mut self, i: usize, fu: &mut Fu) -> bool {
        let Some(mut ops) = self.operands(i) else { return false };
        let op = self.rob[i].op.expect("alu op");
        if !fu.slots.claim(op) {
            return false;
        }
        if let Some(imm) = self.rob[i].imm {
            ops.push(imm as u64);
        }
        let v = if ops.len() == op.arity() {
            op.eval(&ops).unwrap_or_else(|_| {
                self.counters.alu_faults += 1;
                0
            })
        } else {
            self.counters.alu_faults += 1;
            0
        };
        if op.uses_multiplier() {
            self.counters.mul_ops += 1;
        } else {
            self.counters.alu_ops += 1;
        }
        let ready = self.now + op.latency();
        self.leave_iq(i);
        let e = &mut self.rob[i];
        e.st = St::Done;
        e.issue = self.now;
        let (order, gen, seq) = (e.order, e.gen, e.seq);
        let e_sb = e.e_sb.take();
        self.cands.remove(&order);
        self.set_value(order, v, ready);
        if let Some(id) = e_sb {
            self.push_event(ready, order, gen, EvKind::Resolve(id));
        }
        if let Some(t) = self.timing.get_mut(seq as usize) {
            t.complete = ready;
        }
        true
    }

    fn issue_branch(&mut self, i: usize, fu: &mut Fu) -> bool {
        if self.operands(i).is_none() || fu.slots.alu == 0 {
            return false;
        }
        fu.slots.alu -= 1;
        self.counters.alu_ops += 1;
        self.leave_iq(i);
        let e = &mut self.rob[i];
        e.st = St::Issued;
        e.issue = self.now;
        let (order, gen) = (e.order, e.gen);
        self.cands.remove(&order);
        self.push_event(self.now + 1, order, gen, EvKind::BranchResolve);
        true
    }

    fn issue_store(&mut self, i: usize, fu: &mut Fu) -> bool {
        if self.operands(i).is_none() || fu.ls == 0 {
            return false;
        }
        fu.ls -= 1;
        self.leave_iq(i);
        let e = &mut self.rob[i];
        e.st = St::Issued;
        e.issue = self.now;
        let (order, gen) = (e.order, e.gen);
        self.cands.remove(&order);
        self.push_event(self.now + 1, order, gen, EvKind::StoreAddr);
        true
    }

    /// The youngest older in-flight store overlapping a load, or `Err` if an
    /// older store's address is still unknown.
    fn older_store(&self, i: usize) -> Result<Option<usize>, ()> {
        let e = &self.rob[i];
        let m = e.mem.expect("load has mem");
        let mut found = None;
        for &so in self.sq.iter().rev() {
            if so > e.order {
                continue;
            }
            let j = self.pos(so).expect("in-flight store");
            let s = &self.rob[j];
            if !s.addr_known {
                return Err(());
            }
            if found.is_none() && s.mem.expect("store has mem").overlaps(m.addr, m.size) {
                found = Some(j);
            }
        }
        Ok(found)
    }

    fn access(&mut self, i: usize, defer: bool) -> Result<LoadOutcome, MshrFull> {
        let e = &self.rob[i];
        let addr = e.mem.expect("load has mem").addr;
        let cause = self.cause(e);
        self.mh.access_load(addr, self.now, defer, e.order, cause)
    }

    /// Binds a load's value from memory once its access is under way.
    fn complete_load(&mut self, i: usize, out: LoadOutcome) {
        let m = self.rob[i].mem.expect("load has mem");
        let value = if self.rob[i].probe {
            0
        } else {
            self.read_mem(m.addr, m.size)
        };
        let e = &mut self.rob[i];
        e.st = St::Done;
        e.issue = self.now;
        e.decisive = Some(!matches!(out.lookup, Lookup::L1Hit));
        let (order, gen, seq) = (e.order, e.gen, e.seq);
        let m_sb = e.m_sb.take();
        self.set_value(order, value, out.ready);
        if let Some(id) = m_sb {
            self.push_event(out.ready, order, gen, EvKind::Resolve(id));
        }
        if let Some(t) = self.timing.get_mut(seq as usize) {
            t.complete = out.ready;
        }
    }

    fn issue_load(&mut self, i: usize, fu: &mut Fu) -> bool {
        if fu.ls == 0 {
            return false;
        }
        let order = self.rob[i].order;
        let m = self.rob[i].mem.expect("load has mem");
        if self.rob[i].st == St::Predicted {
            // Validation: the real access of a predicted load, now unshadowed.
            if self.validating {
                return false;
            }
            let Ok(out) = self.access(i, false) else { return false };
            fu.ls -= 1;
            let actual = self.read_mem(m.addr, m.size);
            let e = &mut self.rob[i];
            e.st = St::Validating;
            self.validating = true;
            e.actual = actual;
            e.decisive = Some(!matches!(out.lookup, Lookup::L1Hit));
            let gen = e.gen;
            self.cands.remove(&order);
            self.push_event(out.ready, order, gen, EvKind::Validation);
            return true;
        }
        if self.operands(i).is_none() {
            return false;
        }
        if !self.rob[i].probe {
            match self.older_store(i) {
                Err(()) => return false,
                Ok(Some(j)) => {
                    let s = &self.rob[j];
                    let sm = s.mem.expect("store has mem");
                    let covers = sm.addr <= m.addr && m.end() <= sm.end();
                    let data = match s.data {
                        Some(src) => self.src_value(src),
                        None => s.imm.map(|v| v as u64),
                    };
                    let (true, Some(data)) = (covers, data) else {
                        return false;
                    };
                    fu.ls -= 1;
                    self.leave_iq(i);
                    let v = ((data & size_mask(sm.size)) >> (8 * (m.addr - sm.addr))) & size_mask(m.size);
                    self.counters.forwarded += 1;
                    let e = &mut self.rob[i];
                    e.st = St::Done;
                    e.issue = self.now;
                    let (gen, seq) = (e.gen, e.seq);
                    let m_sb = e.m_sb.take();
                    self.cands.remove(&order);
                    self.set_value(order, v, self.now + 1);
                    if let Some(id) = m_sb {
                        self.push_event(self.now + 1, order, gen, EvKind::Resolve(id));
                    }
                    if let Some(t) = self.timing.get_mut(seq as usize) {
                        t.complete = self.now + 1;
                    }
                    return true;
                }
                Ok(None) => {}
            }
        }
        let shadowed = !self.rob[i].unshadowed;
        if self.policy == Policy::Baseline || !shadowed {
            let Ok(out) = self.access(i, false) else { return false };
            fu.ls -= 1;
            self.leave_iq(i);
            self.cands.remove(&order);
            self.complete_load(i, out);
            return true;
        }
        let lk = self.mh.lookup(m.addr);
        let decision = match self.vrc.as_mut() {
            Some(v) => v.rcmp_decide(self.rob[i].pc, m.addr, m.size, true, lk),
            None => match lk {
                Lookup::L1Hit => RcmpDecision::PerformLoad,
                Lookup::MshrHit { .. } => RcmpDecision::WaitMshr,
                Lookup::L1Miss { .. } => RcmpDecision::Delay,
            },
        };
        if lk.is_l1_miss() {
            self.counters.shadowed_l1_misses += 1;
        }
        match decision {
            RcmpDecision::PerformLoad | RcmpDecision::WaitMshr => {
                let Ok(out) = self.access(i, true) else { return false };
                fu.ls -= 1;
                self.leave_iq(i);
                self.cands.remove(&order);
                self.complete_load(i, out);
            }
            RcmpDecision::Recompute(_) => {
                let pc = self.rob[i].pc;
                let started = self.vrc.as_mut().expect("vrc policy").start(order, pc, m.addr, m.size);
                fu.ls -= 1;
                self.leave_iq(i);
                self.cands.remove(&order);
                if started.is_ok() {
                    self.counters.recompute_decisions += 1;
                    let e = &mut self.rob[i];
                    e.st = St::Recomputing;
                    e.issue = self.now;
                } else {
                    self.counters.delayed += 1;
                    self.rob[i].st = St::Delayed;
                }
            }
            RcmpDecision::Delay => {
                fu.ls -= 1;
                self.leave_iq(i);
                self.cands.remove(&order);
                self.miss_under_shadow(i);
            }
        }
        true
    }

    /// A shadowed load that missed in L1 and was not recomputed.
    fn miss_under_shadow(&mut self, i: usize) {
        let now = self.now;
        let m = self.rob[i].mem.expect("load has mem");
        let probe = self.rob[i].probe;
        let oracle = self.cfg.core.oracle_latency;
        let prediction = match self.policy {
            Policy::Vp if !probe => self.rob[i].vp_lookup.as_ref().and_then(|l| l.confident()),
            Policy::OracleVp if !probe => Some(self.read_mem(m.addr, m.size)),
            Policy::OracleVrc if !probe => {
                let v = self.read_mem(m.addr, m.size);
                self.counters.recompute_decisions += 1;
                self.counters.recomputed += 1;
                let e = &mut self.rob[i];
                e.st = St::Done;
                e.issue = now;
                e.decisive = Some(true);
                let (order, gen, seq) = (e.order, e.gen, e.seq);
                let m_sb = e.m_sb.take();
                self.set_value(order, v, now + oracle);
                if let Some(id) = m_sb {
                    self.push_event(now + oracle, order, gen, EvKind::Resolve(id));
                }
                self.recomputations.push(Recomputation {
                    seq,
                    value: v,
                    traced: self.trace.instructions[seq as usize].mem.map_or(0, |m| m.value),
                    latency: oracle,
                });
                if let Some(t) = self.timing.get_mut(seq as usize) {
                    t.complete = now + oracle;
                }
                return;
            }
            _ => None,
        };
        match prediction {
            Some(p) => {
                let lat = if self.policy == Policy::Vp {
                    self.cfg.vp.latency
                } else {
                    oracle
                };
                self.counters.predicted += 1;
                let e = &mut self.rob[i];
                e.st = St::Predicted;
                e.predicted = Some(p);
                e.issue = now;
                let (order, m_sb) = (e.order, e.m_sb);
                if let Some(id) = m_sb {
                    if self.shadows.kind(id) == Some(ShadowKind::M) {
                        let _ = self.shadows.relabel(id, ShadowKind::VP);
                    }
                }
                self.set_value(order, p, now + lat);
            }
            None => {
                self.counters.delayed += 1;
                self.rob[i].st = St::Delayed;
            }
        }
    }

    fn dispatch(&mut self) -> bool {
        let mut n = 0;
        while n < self.cfg.core.width {
            let probe = self.probe_queue.front().copied();
            if probe.is_none()
                && (self.blocked_on.is_some() || self.now < self.resume_at || self.fetch >= self.trace.len())
            {
                break;
            }
            let kind = if probe.is_some() {
                Kind::Load
            } else {
                self.trace.instructions[self.fetch].kind
            };
            if self.rob.len() >= self.cfg.core.rob || (kind != Kind::Nop && self.iq >= self.cfg.core.iq) {
                break;
            }
            if kind == Kind::Load && (self.lq >= self.cfg.core.lq || self.shadows.rq_full()) {
                break;
            }
            if kind == Kind::Store && self.sq.len() >= self.cfg.core.sq {
                break;
            }
            if self.sb_cap != usize::MAX && self.shadows.sb_len() + 2 > self.sb_cap {
                break;
            }
            match probe {
                Some((k, addr)) => {
                    self.probe_queue.pop_front();
                    self.dispatch_probe(k, addr);
                }
                None => {
                    self.dispatch_inst(self.fetch);
                    self.fetch += 1;
                }
            }
            n += 1;
        }
        n > 0
    }

    fn new_entry(&mut self, seq: u64, kind: Kind, pc: u64) -> Entry {
        let order = self.next_order;
        self.next_order += 1;
        self.next_gen += 1;
        let s = self.slot(order);
        self.prf[s] = (0, u64::MAX);
        Entry {
            order,
            gen: self.next_gen,
            seq,
            probe: false,
            kind,
            pc,
            op: None,
            imm: None,
            dst: None,
            srcs: SmallVec::new(),
            data: None,
            mem: None,
            br: None,
            st: St::Waiting,
            issued_once: false,
            unshadowed: false,
            addr_known: false,
            e_sb: None,
            m_sb: None,
            c_sb: None,
            d_sb: None,
            vp_lookup: None,
            predicted: None,
            actual: 0,
            decisive: None,
            dispatch: self.now,
            issue: 0,
        }
    }

    fn src_of(&self, r: Reg) -> Src {
        match self.rename.get(r as usize).copied().flatten() {
            Some(o) => Src::Rob(o),
            None => Src::Val(self.regs.get(r as usize).copied().unwrap_or(0)),
        }
    }

    fn cast(&mut self, kind: ShadowKind, order: u64) -> SbId {
        self.shadows
            .cast(kind, order)
            .expect("dispatch checked shadow buffer space")
    }

    fn load_shadows(&mut self, e: &mut Entry, may_fault: bool) {
        e.unshadowed = self
            .shadows
            .register_load(e.order)
            .expect("dispatch checked release queue space");
        if may_fault {
            e.e_sb = Some(self.cast(ShadowKind::E, e.order));
        }
        let tso = self.cfg.core.consistency == Consistency::Tso;
        if tso || self.policy.predicts() {
            let k = if tso { ShadowKind::M } else { ShadowKind::VP };
            e.m_sb = Some(self.cast(k, e.order));
        }
    }

    fn dispatch_probe(&mut self, k: usize, addr: u64) {
        let mut e = self.new_entry(PROBE_SEQ_BASE + k as u64, Kind::Load, PROBE_PC + 4 * k as u64);
        e.probe = true;
        e.mem = Some(MemAccess {
            addr,
            size: 8,
            value: 0,
        });
        self.load_shadows(&mut e, false);
        self.counters.probes_dispatched += 1;
        self.lq += 1;
        self.iq += 1;
        self.cands.insert(e.order);
        self.rob.push_back(e);
    }

    fn dispatch_inst(&mut self, idx: usize) {
        let inst = &self.trace.instructions[idx];
        let mut e = self.new_entry(inst.seq, inst.kind, inst.pc);
        e.op = inst.alu_op;
        e.imm = inst.imm;
        e.mem = inst.mem;
        e.br = inst.br;
        match inst.kind {
            Kind::Alu | Kind::Branch | Kind::Load => {
                e.srcs = inst.srcs.iter().map(|&r| self.src_of(r)).collect();
            }
            Kind::Store => {
                e.srcs = inst.addr_srcs().iter().map(|&r| self.src_of(r)).collect();
                if let Some(StoreData::Reg(r)) = inst.store_data() {
                    e.data = Some(self.src_of(r));
                }
            }
            Kind::Nop => {}
        }
        if matches!(inst.kind, Kind::Alu | Kind::Load) {
            e.dst = inst.dst;
        }
        let order = e.order;
        match inst.kind {
            Kind::Alu => {
                if inst.may_fault {
                    e.e_sb = Some(self.cast(ShadowKind::E, order));
                }
            }
            Kind::Load => {
                self.counters.loads += 1;
                self.load_shadows(&mut e, inst.may_fault);
                if let Some(vp) = self.vp.as_mut() {
                    e.vp_lookup = Some(Box::new(vp.lookup(inst.pc)));
                }
                self.lq += 1;
            }
            Kind::Store => {
                self.counters.stores += 1;
                e.d_sb = Some(self.cast(ShadowKind::D, order));
                if inst.may_fault {
                    e.e_sb = Some(self.cast(ShadowKind::E, order));
                }
                self.sq.push_back(order);
            }
            Kind::Branch => {
                self.counters.branches += 1;
                e.c_sb = Some(self.cast(ShadowKind::C, order));
                let br = inst.br.expect("branch info");
                if let Some(vp) = self.vp.as_mut() {
                    vp.notify_branch(br.taken);
                }
                if !br.predicted_correctly {
                    self.blocked_on = Some(order);
                    if let Some(p) = self.probe.filter(|p| p.branch == inst.seq) {
                        self.first_probe = Some(self.next_order);
                        self.probe_queue = p.loads.iter().copied().enumerate().collect();
                    }
                }
            }
            Kind::Nop => {
                e.st = St::Done;
                let s = self.slot(order);
                self.prf[s] = (0, self.now);
            }
        }
        if let Some(d) = e.dst {
            if let Some(slot) = self.rename.get_mut(d as usize) {
                *slot = Some(order);
            }
        }
        if inst.kind != Kind::Nop {
            self.iq += 1;
            self.cands.insert(order);
        }
        self.rob.push_back(e);
    }
}

/// Simulates `trace` to completion under `cfg.core.policy`.
pub fn run(trace: &Trace, annotations: Option<&AnnotationTable>, cfg: &SimConfig) -> Result<RunResult, SimError> {
    Sim::new(trace, annotations, cfg, None)?.run()
}

/// Like [`run`], with wrong-path probe loads injected after a mispredicted branch.
pub fn inject_transient_probe(
    trace: &Trace,
    annotations: Option<&AnnotationTable>,
    cfg: &SimConfig,
    probe: &ProbeSpec,
) -> Result<RunResult, SimError> {
    Sim::new(trace, annotations, cfg, Some(probe))?.run()
}
