//! Backward recomputation slices.
//!
//! Starting from the producer of a stored value, the register def-use chain
//! is walked backwards. ALU producers become slice instructions; loads of
//! stored values are looked through to the storing instruction; loads of
//! never-stored memory become history inputs that are checkpointed when they
//! commit. Only ALU instructions ever appear in a slice.

mod format;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::trace::{size_mask, AluOp, ArithFault, Kind, Reg, StoreData, Trace};

pub use format::{emit_annotations, load_annotations, AnnotationParseError};

/// Default bound on slice length.
pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    Const(u64),
    /// Architectural register read when the slice runs.
    LiveReg(Reg),
    /// History input slot; bound per instance to a checkpoint key.
    Hist(u16),
    /// Result of an earlier slice instruction.
    Temp(u16),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Const(v) => write!(f, "c:{v:#x}"),
            Operand::LiveReg(r) => write!(f, "r:{r}"),
            Operand::Hist(k) => write!(f, "h:{k}"),
            Operand::Temp(t) => write!(f, "t:{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceInstr {
    pub op: AluOp,
    pub srcs: SmallVec<[Operand; 3]>,
}

impl SliceInstr {
    pub fn latency(&self) -> u64 {
        self.op.latency()
    }
}

/// A checkpointed input: the value of the load at `key` (its sequence number).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistInput {
    pub key: u64,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub slice_id: u32,
    pub instrs: Vec<SliceInstr>,
    pub producer_store_addr: u64,
    pub producer_store_size: u8,
    pub producer_store_seq: u64,
    pub producer_store_pc: u64,
    pub root_value: u64,
    /// Indexed by `Operand::Hist` slot.
    pub hist: Vec<HistInput>,
    /// Values of the `LiveReg` inputs when the slice was built.
    pub live: Vec<(Reg, u64)>,
    pub immutable: bool,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Cycles to run the slice sequentially and deliver its result.
    pub fn latency(&self) -> u64 {
        slice_latency(&self.instrs)
    }
}

/// Sum of per-instruction latencies plus one delivery cycle.
pub fn slice_latency(instrs: &[SliceInstr]) -> u64 {
    instrs.iter().map(SliceInstr::latency).sum::<u64>() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SliceFailure {
    TooLong,
    NoProducer,
    UnresolvableInput,
    NonAluProducer,
}

impl SliceFailure {
    pub const ALL: [SliceFailure; 4] = [
        SliceFailure::TooLong,
        SliceFailure::NoProducer,
        SliceFailure::UnresolvableInput,
        SliceFailure::NonAluProducer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SliceFailure::TooLong => "TOO_LONG",
            SliceFailure::NoProducer => "NO_PRODUCER",
            SliceFailure::UnresolvableInput => "UNRESOLVABLE_INPUT",
            SliceFailure::NonAluProducer => "NON_ALU_PRODUCER",
        }
    }
}

impl fmt::Display for SliceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("seq {0} is out of range")]
    OutOfRange(u64),
    #[error("seq {0} is not a store")]
    NotAStore(u64),
    #[error("max slice length must be at least 1")]
    ZeroMaxLen,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("slice operand {0} is unbound")]
    Unbound(Operand),
    #[error(transparent)]
    Fault(#[from] ArithFault),
    #[error("empty slice")]
    Empty,
}

/// Evaluates slice instructions in order. `input` supplies `LiveReg` and
/// `Hist` operand values; the last instruction's value is returned.
pub fn eval_instrs(instrs: &[SliceInstr], mut input: impl FnMut(Operand) -> Option<u64>) -> Result<u64, ReplayError> {
    let mut temps: Vec<u64> = Vec::with_capacity(instrs.len());
    for ins in instrs {
        let mut ops: SmallVec<[u64; 3]> = SmallVec::new();
        for &o in &ins.srcs {
            let v = match o {
                Operand::Const(v) => Some(v),
                Operand::Temp(t) => temps.get(t as usize).copied(),
                other => input(other),
            };
            ops.push(v.ok_or(ReplayError::Unbound(o))?);
        }
        temps.push(ins.op.eval(&ops)?);
    }
    temps.last().copied().ok_or(ReplayError::Empty)
}

/// Replays a slice over its recorded bindings.
pub fn replay_slice(s: &Slice) -> Result<u64, ReplayError> {
    let v = eval_instrs(&s.instrs, |o| match o {
        Operand::Hist(k) => s.hist.get(k as usize).map(|h| h.value),
        Operand::LiveReg(r) => s.live.iter().find(|(x, _)| *x == r).map(|(_, v)| *v),
        _ => None,
    })?;
    Ok(v & size_mask(s.producer_store_size))
}

/// Per-register definition sites and per-byte store sites of a trace.
pub struct TraceIndex<'t> {
    trace: &'t Trace,
    defs: Vec<Vec<u64>>,
    stores: HashMap<u64, Vec<u64>>,
    init: Vec<u64>,
}

impl<'t> TraceIndex<'t> {
    pub fn new(trace: &'t Trace) -> Self {
        let mut defs = vec![Vec::new(); trace.header.arch_regs as usize];
        let mut stores: HashMap<u64, Vec<u64>> = HashMap::new();
        for i in &trace.instructions {
            if let Some(d) = i.dst {
                if let Some(v) = defs.get_mut(d as usize) {
                    v.push(i.seq);
                }
            }
            if i.kind == Kind::Store {
                if let Some(m) = i.mem {
                    for b in m.addr..m.end() {
                        stores.entry(b).or_default().push(i.seq);
                    }
                }
            }
        }
        let mut init = vec![0; trace.header.arch_regs as usize];
        for &(r, v) in &trace.header.init_regs {
            if let Some(x) = init.get_mut(r as usize) {
                *x = v;
            }
        }
        TraceIndex {
            trace,
            defs,
            stores,
            init,
        }
    }

    pub fn last_def_before(&self, r: Reg, seq: u64) -> Option<u64> {
        let d = self.defs.get(r as usize)?;
        let n = d.partition_point(|&s| s < seq);
        n.checked_sub(1).map(|i| d[i])
    }

    fn defined_before(&self, r: Reg, seq: u64) -> bool {
        self.last_def_before(r, seq).is_some()
    }

    /// Most recent store before `seq` overlapping `[addr, addr + size)`.
    pub fn last_store_before(&self, addr: u64, size: u8, seq: u64) -> Option<u64> {
        (addr..addr + size as u64)
            .filter_map(|b| {
                let v = self.stores.get(&b)?;
                let n = v.partition_point(|&s| s < seq);
                n.checked_sub(1).map(|i| v[i])
            })
            .max()
    }

    /// Whether any store other than `except` before `seq` touches the range.
    pub fn other_store_before(&self, addr: u64, size: u8, seq: u64, except: u64) -> bool {
        (addr..addr + size as u64).any(|b| {
            self.stores
                .get(&b)
                .is_some_and(|v| v.iter().take_while(|&&s| s < seq).any(|&s| s != except))
        })
    }
}

struct Builder<'a, 't> {
    idx: &'a TraceIndex<'t>,
    at: u64,
    max_len: usize,
    instrs: Vec<SliceInstr>,
    memo: HashMap<u64, u16>,
    hist: Vec<HistInput>,
    hist_slot: HashMap<u64, u16>,
    live: Vec<(Reg, u64)>,
}

impl Builder<'_, '_> {
    /// Binding for the value register `r` holds just before `seq`.
    fn reg_operand(&mut self, r: Reg, seq: u64) -> Result<Operand, SliceFailure> {
        let Some(d) = self.idx.last_def_before(r, seq) else {
            // Live-in: usable only if nothing redefines it before the recomputation point.
            if self.idx.defined_before(r, self.at) {
                return Err(SliceFailure::UnresolvableInput);
            }
            if !self.live.iter().any(|(x, _)| *x == r) {
                self.live.push((r, self.idx.init[r as usize]));
            }
            return Ok(Operand::LiveReg(r));
        };
        let inst = &self.idx.trace.instructions[d as usize];
        match inst.kind {
            Kind::Alu => self.expand(d).map(Operand::Temp),
            Kind::Load => self.load_operand(d),
            _ => Err(SliceFailure::NonAluProducer),
        }
    }

    fn load_operand(&mut self, d: u64) -> Result<Operand, SliceFailure> {
        let inst = &self.idx.trace.instructions[d as usize];
        let m = inst.mem.ok_or(SliceFailure::UnresolvableInput)?;
        match self.idx.last_store_before(m.addr, m.size, d) {
            None => {
                let slot = match self.hist_slot.get(&d) {
                    Some(&s) => s,
                    None => {
                        let s = self.hist.len() as u16;
                        self.hist.push(HistInput { key: d, value: m.value });
                        self.hist_slot.insert(d, s);
                        s
                    }
                };
                Ok(Operand::Hist(slot))
            }
            Some(s) => {
                let st = &self.idx.trace.instructions[s as usize];
                let sm = st.mem.ok_or(SliceFailure::UnresolvableInput)?;
                if sm.addr != m.addr || sm.size != m.size {
                    return Err(SliceFailure::UnresolvableInput);
                }
                match st.store_data() {
                    Some(StoreData::Imm(_)) => Ok(Operand::Const(m.value)),
                    Some(StoreData::Reg(r)) if m.size == 8 => self.reg_operand(r, s),
                    _ => Err(SliceFailure::UnresolvableInput),
                }
            }
        }
    }

    fn expand(&mut self, seq: u64) -> Result<u16, SliceFailure> {
        if let Some(&t) = self.memo.get(&seq) {
            return Ok(t);
        }
        if self.instrs.len() >= self.max_len {
            return Err(SliceFailure::TooLong);
        }
        let inst = &self.idx.trace.instructions[seq as usize];
        let op = inst.alu_op.ok_or(SliceFailure::NonAluProducer)?;
        let mut srcs = SmallVec::new();
        for &r in &inst.srcs {
            srcs.push(self.reg_operand(r, seq)?);
        }
        if let Some(imm) = inst.imm {
            srcs.push(Operand::Const(imm as u64));
        }
        if self.instrs.len() >= self.max_len {
            return Err(SliceFailure::TooLong);
        }
        let t = self.instrs.len() as u16;
        self.instrs.push(SliceInstr { op, srcs });
        self.memo.insert(seq, t);
        Ok(t)
    }
}

/// Builds the slice recomputing the value stored at `store_seq`, assuming it
/// is recomputed at the end of the trace.
pub fn build_slice(t: &Trace, store_seq: u64, max_len: usize) -> Result<Result<Slice, SliceFailure>, SliceError> {
    let idx = TraceIndex::new(t);
    build_slice_at(&idx, store_seq, t.len() as u64, max_len)
}

/// Builds the slice recomputing the value stored at `store_seq` for a
/// recomputation at `at` (typically the consuming load).
pub fn build_slice_at(
    idx: &TraceIndex<'_>,
    store_seq: u64,
    at: u64,
    max_len: usize,
) -> Result<Result<Slice, SliceFailure>, SliceError> {
    if max_len == 0 {
        return Err(SliceError::ZeroMaxLen);
    }
    let st = idx.trace.get(store_seq).ok_or(SliceError::OutOfRange(store_seq))?;
    if st.kind != Kind::Store {
        return Err(SliceError::NotAStore(store_seq));
    }
    let m = st.mem.ok_or(SliceError::NotAStore(store_seq))?;
    let Some(StoreData::Reg(r)) = st.store_data() else {
        return Ok(Err(SliceFailure::NoProducer));
    };
    let mut b = Builder {
        idx,
        at,
        max_len,
        instrs: Vec::new(),
        memo: HashMap::new(),
        hist: Vec::new(),
        hist_slot: HashMap::new(),
        live: Vec::new(),
    };
    // The root must be an ALU op; a value that was merely loaded and stored
    // back has nothing to recompute.
    let root = match idx.last_def_before(r, store_seq) {
        None => return Ok(Err(SliceFailure::NoProducer)),
        Some(d) => d,
    };
    let root_inst = &idx.trace.instructions[root as usize];
    let res = match root_inst.kind {
        Kind::Alu => b.expand(root).map(|_| ()),
        Kind::Load => match b.load_operand(root) {
            Ok(Operand::Temp(_)) => Ok(()),
            Ok(_) => Err(SliceFailure::NoProducer),
            Err(e) => Err(e),
        },
        _ => Err(SliceFailure::NonAluProducer),
    };
    if let Err(f) = res {
        return Ok(Err(f));
    }
    let immutable = !idx.other_store_before(m.addr, m.size, at, store_seq);
    Ok(Ok(Slice {
        slice_id: 0,
        instrs: b.instrs,
        producer_store_addr: m.addr,
        producer_store_size: m.size,
        producer_store_seq: store_seq,
        producer_store_pc: st.pc,
        root_value: m.value,
        hist: b.hist,
        live: b.live,
        immutable,
    }))
}

/// Static slice shape shared by every instance of an annotated load pc.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceShape {
    pub slice_id: u32,
    /// Static pc of the producer store.
    pub tag: u64,
    pub size: u8,
    pub immutable: bool,
    pub instrs: Vec<SliceInstr>,
}

impl SliceShape {
    pub fn latency(&self) -> u64 {
        slice_latency(&self.instrs)
    }

    pub fn hist_slots(&self) -> usize {
        self.instrs
            .iter()
            .flat_map(|i| i.srcs.iter())
            .filter_map(|o| match o {
                Operand::Hist(k) => Some(*k as usize + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

/// One dynamic producer store whose value a slice can regenerate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceInstance {
    pub slice_id: u32,
    pub addr: u64,
    pub size: u8,
    /// Checkpoint key bound to each history slot.
    pub keys: Vec<u64>,
    /// Annotated loads that read this store.
    pub uses: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTable {
    pub slices: BTreeMap<u32, SliceShape>,
    /// RCMP sites: load pc to slice.
    pub rcmp: BTreeMap<u64, u32>,
    /// REC sites: producing seq to checkpoints (key, value).
    pub rec: BTreeMap<u64, Vec<(u64, u64)>>,
    /// Producer store seq to its instance binding.
    pub instances: BTreeMap<u64, SliceInstance>,
}

impl AnnotationTable {
    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice_for_pc(&self, pc: u64) -> Option<&SliceShape> {
        self.rcmp.get(&pc).and_then(|id| self.slices.get(id))
    }

    /// Number of live instances referencing each checkpoint key.
    pub fn key_refcounts(&self) -> HashMap<u64, u32> {
        let mut m: HashMap<u64, u32> = HashMap::new();
        for inst in self.instances.values() {
            for &k in &inst.keys {
                *m.entry(k).or_default() += 1;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub static_loads: usize,
    pub annotated_pcs: usize,
    pub dynamic_loads: u64,
    /// Loads that read bytes written by an earlier in-trace store.
    pub stored_value_loads: u64,
    pub covered_loads: u64,
    pub mean_len: f64,
    pub max_len: usize,
    pub const_operands: u64,
    pub live_reg_operands: u64,
    pub hist_operands: u64,
    pub temp_operands: u64,
    pub failures: BTreeMap<String, u64>,
    /// Instances rejected because their pc disagreed or was mutable.
    pub rejected_instances: u64,
}

impl SliceStats {
    /// Covered share of the loads that read an in-trace stored value.
    pub fn dynamic_coverage(&self) -> f64 {
        if self.stored_value_loads == 0 {
            0.0
        } else {
            self.covered_loads as f64 / self.stored_value_loads as f64
        }
    }

    pub fn all_loads_coverage(&self) -> f64 {
        if self.dynamic_loads == 0 {
            0.0
        } else {
            self.covered_loads as f64 / self.dynamic_loads as f64
        }
    }

    pub fn static_coverage(&self) -> f64 {
        if self.static_loads == 0 {
            0.0
        } else {
            self.annotated_pcs as f64 / self.static_loads as f64
        }
    }
}

struct PcEntry {
    load_seq: u64,
    outcome: Result<Slice, SliceFailure>,
}

/// Builds the annotation table for a trace. A load pc is annotated only if
/// every dynamic instance yields the same slice shape from the same store pc,
/// every instance is immutable, and every replay equals the traced value.
pub fn annotate(t: &Trace, max_len: usize) -> (AnnotationTable, SliceStats) {
    let idx = TraceIndex::new(t);
    let max_len = max_len.max(1);
    let mut per_pc: BTreeMap<u64, Vec<PcEntry>> = BTreeMap::new();
    let mut stats = SliceStats::default();
    for ld in t.loads() {
        stats.dynamic_loads += 1;
        let m = ld.mem.expect("validated load");
        let outcome = match idx.last_store_before(m.addr, m.size, ld.seq) {
            None => Err(SliceFailure::NoProducer),
            Some(s) => {
                stats.stored_value_loads += 1;
                let sm = t.instructions[s as usize].mem.expect("store has mem");
                if sm.addr != m.addr || sm.size != m.size {
                    Err(SliceFailure::UnresolvableInput)
                } else {
                    build_slice_at(&idx, s, ld.seq, max_len).expect("s is a store")
                }
            }
        };
        if let Err(f) = &outcome {
            *stats.failures.entry(f.name().to_string()).or_default() += 1;
        }
        per_pc.entry(ld.pc).or_default().push(PcEntry {
            load_seq: ld.seq,
            outcome,
        });
    }
    stats.static_loads = per_pc.len();

    let mut table = AnnotationTable::default();
    let mut total_len = 0usize;
    for (pc, entries) in per_pc {
        let Ok(first) = &entries[0].outcome else {
            continue;
        };
        let agrees = entries.iter().all(|e| match &e.outcome {
            Ok(s) => {
                s.instrs == first.instrs
                    && s.producer_store_pc == first.producer_store_pc
                    && s.producer_store_size == first.producer_store_size
                    && s.immutable
                    && replay_slice(s).ok() == Some(t.instructions[e.load_seq as usize].mem.map_or(0, |m| m.value))
            }
            Err(_) => false,
        });
        if !agrees {
            stats.rejected_instances += entries.iter().filter(|e| e.outcome.is_ok()).count() as u64;
            continue;
        }
        let id = table.slices.len() as u32;
        table.slices.insert(
            id,
            SliceShape {
                slice_id: id,
                tag: first.producer_store_pc,
                size: first.producer_store_size,
                immutable: true,
                instrs: first.instrs.clone(),
            },
        );
        table.rcmp.insert(pc, id);
        stats.annotated_pcs += 1;
        stats.max_len = stats.max_len.max(first.len());
        for ins in &first.instrs {
            for o in &ins.srcs {
                match o {
                    Operand::Const(_) => stats.const_operands += 1,
                    Operand::LiveReg(_) => stats.live_reg_operands += 1,
                    Operand::Hist(_) => stats.hist_operands += 1,
                    Operand::Temp(_) => stats.temp_operands += 1,
                }
            }
        }
        for e in &entries {
            let s = e.outcome.as_ref().expect("agreeing entries are slices");
            stats.covered_loads += 1;
            total_len += s.len();
            let inst = table
                .instances
                .entry(s.producer_store_seq)
                .or_insert_with(|| SliceInstance {
                    slice_id: id,
                    addr: s.producer_store_addr,
                    size: s.producer_store_size,
                    keys: s.hist.iter().map(|h| h.key).collect(),
                    uses: 0,
                });
            inst.uses += 1;
            for h in &s.hist {
                let rec = table.rec.entry(h.key).or_default();
                if !rec.iter().any(|(k, _)| *k == h.key) {
                    rec.push((h.key, h.value));
                }
            }
        }
    }
    if stats.covered_loads > 0 {
        stats.mean_len = total_len as f64 / stats.covered_loads as f64;
    }
    (table, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{MemAccess, TraceInstruction as I};

    fn mem(addr: u64, value: u64) -> MemAccess {
        MemAccess { addr, size: 8, value }
    }

    #[test]
    fn single_add_with_live_inputs() {
        let mut t = Trace::new(vec![
            I::alu(0, 0x0, AluOp::Add, 1, &[2, 3], None),
            I::store(1, 0x4, 1, &[], mem(0x100, 5)),
        ]);
        t.header.init_regs = vec![(2, 2), (3, 3)];
        let s = build_slice(&t, 1, 100).unwrap().unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.instrs[0].srcs.as_slice(), &[Operand::LiveReg(2), Operand::LiveReg(3)]);
        assert_eq!(replay_slice(&s), Ok(5));
    }

    #[test]
    fn stored_load_of_untraced_memory_has_no_producer() {
        let t = Trace::new(vec![
            I::load(0, 0x0, 1, &[], mem(0x200, 9)),
            I::store(1, 0x4, 1, &[], mem(0x100, 9)),
        ]);
        assert_eq!(build_slice(&t, 1, 100).unwrap(), Err(SliceFailure::NoProducer));
    }

    #[test]
    fn long_chain_is_too_long() {
        let mut v = vec![I::alu(0, 0, AluOp::Mov, 1, &[], Some(1))];
        for k in 1..150 {
            v.push(I::alu(k, 4 * k, AluOp::Add, 1, &[1], Some(1)));
        }
        let val = 150;
        v.push(I::store(150, 0x1000, 1, &[], mem(0x100, val)));
        let t = Trace::new(v);
        assert_eq!(build_slice(&t, 150, 100).unwrap(), Err(SliceFailure::TooLong));
        let s = build_slice(&t, 150, 150).unwrap().unwrap();
        assert_eq!(replay_slice(&s), Ok(val));
    }

    #[test]
    fn not_a_store() {
        let t = Trace::new(vec![I::alu(0, 0, AluOp::Mov, 1, &[], Some(1))]);
        assert_eq!(build_slice(&t, 0, 10), Err(SliceError::NotAStore(0)));
        assert_eq!(build_slice(&t, 5, 10), Err(SliceError::OutOfRange(5)));
    }

    #[test]
    fn const_slice_replays() {
        let s = Slice {
            slice_id: 0,
            instrs: vec![SliceInstr {
                op: AluOp::Add,
                srcs: [Operand::Const(2), Operand::Const(3)].into_iter().collect(),
            }],
            producer_store_addr: 0,
            producer_store_size: 8,
            producer_store_seq: 0,
            producer_store_pc: 0,
            root_value: 5,
            hist: vec![],
            live: vec![],
            immutable: true,
        };
        assert_eq!(replay_slice(&s), Ok(5));
    }

    #[test]
    fn overwritten_input_uses_history() {
        // i and j are loaded, summed, stored, then clobbered before the reload.
        let t = Trace::new(vec![
            I::load(0, 0x0, 1, &[], mem(0x800, 4)),
            I::load(1, 0x4, 2, &[], mem(0x808, 6)),
            I::alu(2, 0x8, AluOp::Add, 3, &[1, 2], None),
            I::store(3, 0xc, 3, &[], mem(0x100, 10)),
            I::alu(4, 0x10, AluOp::Mov, 1, &[], Some(0)),
            I::load(5, 0x14, 4, &[], mem(0x100, 10)),
        ]);
        let (table, stats) = annotate(&t, 100);
        assert_eq!(table.rcmp.len(), 1);
        let shape = table.slice_for_pc(0x14).unwrap();
        assert_eq!(shape.instrs[0].srcs.as_slice(), &[Operand::Hist(0), Operand::Hist(1)]);
        assert_eq!(table.instances[&3].keys, vec![0, 1]);
        assert_eq!(table.rec[&0], vec![(0, 4)]);
        assert_eq!(stats.dynamic_coverage(), 1.0);
    }

    #[test]
    fn mutable_location_is_not_annotated() {
        let t = Trace::new(vec![
            I::alu(0, 0x0, AluOp::Mov, 1, &[], Some(7)),
            I::store(1, 0x4, 1, &[], mem(0x100, 7)),
            I::alu(2, 0x8, AluOp::Mov, 2, &[], Some(8)),
            I::store(3, 0xc, 2, &[], mem(0x100, 8)),
            I::load(4, 0x10, 3, &[], mem(0x100, 8)),
        ]);
        let (table, _) = annotate(&t, 100);
        assert!(table.rcmp.is_empty());
        let s = build_slice_at(&TraceIndex::new(&t), 1, 4, 100).unwrap().unwrap();
        assert!(!s.immutable);
    }

    #[test]
    fn loads_through_memory_are_followed() {
        let t = Trace::new(vec![
            I::alu(0, 0x0, AluOp::Mov, 1, &[], Some(3)),
            I::store(1, 0x4, 1, &[], mem(0x100, 3)),
            I::load(2, 0x8, 2, &[], mem(0x100, 3)),
            I::alu(3, 0xc, AluOp::Mul, 3, &[2], Some(5)),
            I::store(4, 0x10, 3, &[], mem(0x200, 15)),
        ]);
        let s = build_slice(&t, 4, 100).unwrap().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(replay_slice(&s), Ok(15));
        assert!(s
            .instrs
            .iter()
            .all(|i| i.srcs.iter().all(|o| !matches!(o, Operand::Hist(_)))));
    }

    #[test]
    fn partial_overlap_is_unresolvable() {
        let t = Trace::new(vec![
            I::alu(0, 0x0, AluOp::Mov, 1, &[], Some(3)),
            I::store(
                1,
                0x4,
                1,
                &[],
                MemAccess {
                    addr: 0x100,
                    size: 4,
                    value: 3,
                },
            ),
            I::load(2, 0x8, 2, &[], mem(0x100, 3)),
        ]);
        let (_, stats) = annotate(&t, 100);
        assert_eq!(stats.failures.get("UNRESOLVABLE_INPUT"), Some(&1));
    }

    #[test]
    fn shared_producers_are_emitted_once() {
        let mut t = Trace::new(vec![
            I::alu(0, 0x0, AluOp::Add, 1, &[5], Some(1)),
            I::alu(1, 0x4, AluOp::Mul, 2, &[1, 1], None),
            I::store(2, 0x8, 2, &[], mem(0x100, 36)),
        ]);
        t.header.init_regs = vec![(5, 5)];
        let s = build_slice(&t, 2, 100).unwrap().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.latency(), 1 + 3 + 1);
        assert_eq!(replay_slice(&s), Ok(36));
    }
}
