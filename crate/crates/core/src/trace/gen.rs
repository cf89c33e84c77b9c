//! Seeded synthetic workload generator.
//!
//! Every pattern is emitted as a sequence of iterations. An iteration holds
//! the pattern's memory operations plus enough filler ALU ops and branches to
//! hit the requested load density. Values are computed while emitting, so the
//! output always replays cleanly.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{size_mask, AluOp, MemAccess, Reg, Trace, TraceHeader, TraceInstruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    PointerChase,
    Stream,
    ComputeStoreLoad,
    Mixed,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::PointerChase,
        Pattern::Stream,
        Pattern::ComputeStoreLoad,
        Pattern::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::PointerChase => "chase",
            Pattern::Stream => "stream",
            Pattern::ComputeStoreLoad => "compute",
            Pattern::Mixed => "mixed",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "chase" | "pointer_chase" | "pointer-chase" => Pattern::PointerChase,
            "stream" => Pattern::Stream,
            "compute" | "compute_store_load" | "compute-store-load" => Pattern::ComputeStoreLoad,
            "mixed" => Pattern::Mixed,
            _ => return None,
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorkloadSpec {
    pub pattern: Pattern,
    pub count: usize,
    /// Approximate fraction of instructions that are branches.
    pub branch_density: f64,
    /// Probability that a generated branch was mispredicted.
    pub mispredict_rate: f64,
    /// Approximate fraction of instructions that are loads.
    pub load_density: f64,
    /// Probability that a streamed element is written back.
    pub store_density: f64,
    pub working_set_bytes: u64,
    /// Fraction of stored-value loads whose value comes from an ALU-only chain.
    pub recomputable_fraction: f64,
    pub seed: u64,
}

impl SyntheticWorkloadSpec {
    pub fn new(pattern: Pattern, count: usize, seed: u64) -> Self {
        SyntheticWorkloadSpec {
            pattern,
            count,
            branch_density: 0.1,
            mispredict_rate: 0.05,
            load_density: 0.2,
            store_density: 0.5,
            working_set_bytes: 1 << 20,
            recomputable_fraction: 0.5,
            seed,
        }
    }

    pub fn with_recomputable(mut self, f: f64) -> Self {
        self.recomputable_fraction = f;
        self
    }

    /// The spec used for member `seed` of the standard 50-trace evaluation suite.
    pub fn suite(seed: u64) -> Self {
        const PATTERNS: [Pattern; 5] = [
            Pattern::Mixed,
            Pattern::ComputeStoreLoad,
            Pattern::Mixed,
            Pattern::Stream,
            Pattern::PointerChase,
        ];
        const FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
        let mut s = SyntheticWorkloadSpec::new(PATTERNS[(seed % 5) as usize], 10_000, seed);
        s.recomputable_fraction = FRACTIONS[(seed % 4) as usize];
        s.mispredict_rate = 0.04 + 0.02 * (seed % 3) as f64;
        s.working_set_bytes = 256 << (10 + seed % 3);
        s
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.count == 0 {
            return Err(GenError::ZeroCount);
        }
        for (name, v) in [
            ("branch_density", self.branch_density),
            ("mispredict_rate", self.mispredict_rate),
            ("load_density", self.load_density),
            ("store_density", self.store_density),
            ("recomputable_fraction", self.recomputable_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GenError::OutOfRange { name, value: v });
            }
        }
        if self.branch_density + self.load_density > 1.0 {
            return Err(GenError::Infeasible("branch and load densities sum above 1".into()));
        }
        if self.load_density == 0.0 {
            return Err(GenError::Infeasible(
                "every pattern needs loads; load density is 0".into(),
            ));
        }
        if self.working_set_bytes < 64 * 1024 {
            return Err(GenError::Infeasible(format!(
                "working set of {} bytes is below the 64 KiB minimum",
                self.working_set_bytes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("instruction count must be positive")]
    ZeroCount,
    #[error("{name}={value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("infeasible spec: {0}")]
    Infeasible(String),
}

// Address map. Regions sit far apart so they never share lines.
const CHASE_BASE: u64 = 0x1000_0000;
const STREAM_SRC: u64 = 0x2000_0000;
const STREAM_DST: u64 = 0x3000_0000;
const TABLE_BASE: u64 = 0x4000_0000;
const TABLE_WORDS: u64 = 32;
const OUT_BASE: u64 = 0x5000_0000;

/// Iterations between a stored value and the load that reads it back.
const CONSUMER_LAG: usize = 64;

// Register map.
const R_PTR: Reg = 1;
const R_CHASE_ACC: Reg = 2;
const R_STREAM_VAL: Reg = 4;
const R_STREAM_SUM: Reg = 5;
const R_STREAM_K: Reg = 6;
const R_INDEX: Reg = 8;
const R_TEMPLATE: Reg = 10; // three registers per template, four templates
const R_COPY: Reg = 22;
const R_CONSUMED: Reg = 24; // one per template, plus R_CONSUMED + 4 for copies
const R_CONSUMER_ACC: Reg = 28;
const R_FILLER: Reg = 40;
const FILLER_REGS: u8 = 8;

const PC_CHASE: u64 = 0x1000;
const PC_STREAM: u64 = 0x2000;
const PC_TEMPLATE: u64 = 0x3000; // 0x100 per template
const PC_COPY: u64 = 0x3800;
const PC_WARM: u64 = 0x3900;
const PC_FILLER: u64 = 0x4000;
const PC_BRANCH: u64 = 0x5000;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

struct Emitter {
    rng: ChaCha8Rng,
    seed: u64,
    limit: usize,
    insts: Vec<TraceInstruction>,
    regs: [u64; 64],
    init_regs: Vec<(Reg, u64)>,
    mem: HashMap<u64, u8>,
    /// Untraced initial memory, by 8-byte word. Words absent here hash the address.
    image: HashMap<u64, u64>,
    mispredict_rate: f64,
}

impl Emitter {
    fn full(&self) -> bool {
        self.insts.len() >= self.limit
    }

    fn seq(&self) -> u64 {
        self.insts.len() as u64
    }

    fn set_init(&mut self, r: Reg, v: u64) {
        self.regs[r as usize] = v;
        self.init_regs.push((r, v));
    }

    fn initial_byte(&self, addr: u64) -> u8 {
        let word = addr & !7;
        let v = match self.image.get(&word) {
            Some(&v) => v,
            None if (STREAM_SRC..STREAM_DST).contains(&addr) => (addr - STREAM_SRC) >> 12,
            None => splitmix(self.seed ^ word) & 0xFFFF,
        };
        (v >> (8 * (addr & 7))) as u8
    }

    fn read(&mut self, addr: u64, size: u8) -> u64 {
        let mut v = 0;
        for i in 0..size as u64 {
            let a = addr + i;
            let b = match self.mem.get(&a) {
                Some(&b) => b,
                None => {
                    let b = self.initial_byte(a);
                    self.mem.insert(a, b);
                    b
                }
            };
            v |= (b as u64) << (8 * i);
        }
        v
    }

    fn push(&mut self, inst: TraceInstruction) {
        if !self.full() {
            self.insts.push(inst);
        }
    }

    fn alu(&mut self, pc: u64, op: AluOp, dst: Reg, srcs: &[Reg], imm: Option<i64>) {
        let mut ops: smallvec::SmallVec<[u64; 4]> = srcs.iter().map(|&r| self.regs[r as usize]).collect();
        if let Some(i) = imm {
            ops.push(i as u64);
        }
        self.regs[dst as usize] = op.eval(&ops).expect("generator never emits faulting shifts");
        let inst = TraceInstruction::alu(self.seq(), pc, op, dst, srcs, imm);
        self.push(inst);
    }

    fn load(&mut self, pc: u64, dst: Reg, addr_srcs: &[Reg], addr: u64) {
        let value = self.read(addr, 8);
        self.regs[dst as usize] = value;
        let mut inst = TraceInstruction::load(self.seq(), pc, dst, addr_srcs, MemAccess { addr, size: 8, value });
        inst.may_fault = true;
        self.push(inst);
    }

    fn store(&mut self, pc: u64, data: Reg, addr_srcs: &[Reg], addr: u64) {
        let value = self.regs[data as usize] & size_mask(8);
        for i in 0..8u64 {
            self.mem.insert(addr + i, (value >> (8 * i)) as u8);
        }
        let inst = TraceInstruction::store(self.seq(), pc, data, addr_srcs, MemAccess { addr, size: 8, value });
        self.push(inst);
    }

    fn branch(&mut self, pc: u64, src: Reg) {
        let taken = self.regs[src as usize] & 1 == 1;
        let ok = !self.rng.gen_bool(self.mispredict_rate);
        let inst = TraceInstruction::branch(self.seq(), pc, &[src], taken, ok);
        self.push(inst);
    }

    fn filler(&mut self, branch_p: f64, extra_src: Reg) {
        if self.rng.gen_bool(branch_p) {
            let src = if self.rng.gen_bool(0.5) {
                extra_src
            } else {
                R_FILLER + self.rng.gen_range(0..FILLER_REGS)
            };
            let slot = self.rng.gen_range(0..16u64);
            self.branch(PC_BRANCH + slot * 4, src);
            return;
        }
        let dst = R_FILLER + self.rng.gen_range(0..FILLER_REGS);
        let a = R_FILLER + self.rng.gen_range(0..FILLER_REGS);
        let b = if self.rng.gen_bool(0.3) {
            extra_src
        } else {
            R_FILLER + self.rng.gen_range(0..FILLER_REGS)
        };
        let pc = PC_FILLER + self.rng.gen_range(0..32u64) * 4;
        let amount = self.rng.gen_range(0..8);
        let imm = self.rng.gen_range(1..64);
        match self.rng.gen_range(0..8) {
            0 => self.alu(pc, AluOp::Mul, dst, &[a, b], None),
            1 => self.alu(pc, AluOp::Shl, dst, &[a], Some(amount)),
            2 => self.alu(pc, AluOp::Xor, dst, &[a, b], None),
            3 => self.alu(pc, AluOp::Sub, dst, &[a, b], None),
            _ => self.alu(pc, AluOp::Add, dst, &[a], Some(imm)),
        }
    }
}

/// One ALU-only chain shape, combining its two input registers into `out`.
fn emit_template(e: &mut Emitter, t: usize, a: Reg, b: Reg, out: Reg) {
    let pc = PC_TEMPLATE + 0x100 * t as u64 + 0x10;
    match t {
        0 => e.alu(pc, AluOp::Add, out, &[a, b], None),
        1 => {
            e.alu(pc, AluOp::Mul, out, &[a], Some(3));
            e.alu(pc + 4, AluOp::Add, out, &[out, b], None);
        }
        2 => {
            e.alu(pc, AluOp::Xor, out, &[a, b], None);
            e.alu(pc + 4, AluOp::Shl, out, &[out], Some(2));
            e.alu(pc + 8, AluOp::Sub, out, &[out, a], None);
        }
        _ => {
            e.alu(pc, AluOp::Add, out, &[a], Some(17));
            e.alu(pc + 4, AluOp::Mul, out, &[out, b], None);
            e.alu(pc + 8, AluOp::Xor, out, &[out, a], None);
            e.alu(pc + 12, AluOp::Shr, out, &[out], Some(1));
            e.alu(pc + 16, AluOp::Add, out, &[out, b], None);
        }
    }
}

/// A stored value waiting to be read back.
struct Pending {
    addr: u64,
    /// Template index, or `None` for a plain copy.
    template: Option<usize>,
}

struct ComputeState {
    fifo: VecDeque<Pending>,
    produced: usize,
    recomputable: usize,
}

impl ComputeState {
    fn new() -> Self {
        ComputeState {
            fifo: VecDeque::new(),
            produced: 0,
            recomputable: 0,
        }
    }

    /// Output slots alternate between two L1 sets 4 KiB apart, so a line is
    /// evicted from L1 well before its consumer runs. Slots are never reused,
    /// so no later store overwrites a value between production and consumption.
    fn slot_addr(&self, j: usize) -> u64 {
        let j = j as u64;
        OUT_BASE + (32 + (j & 1)) * 64 + (j >> 1) * 4096
    }
}

fn compute_iteration(e: &mut Emitter, st: &mut ComputeState, f: f64) -> usize {
    let j = st.produced;
    st.produced += 1;
    // Keeps the recomputable count at ceil(f * n) for every prefix.
    let want = ((j + 1) as f64 * f).ceil() as usize;
    let addr = st.slot_addr(j);
    let mut loads = 0;
    if want > st.recomputable {
        let t = st.recomputable % 4;
        st.recomputable += 1;
        let base = R_TEMPLATE + 3 * t as u8;
        let (a, b, out) = (base, base + 1, base + 2);
        let pc = PC_TEMPLATE + 0x100 * t as u64;
        let i1 = e.rng.gen_range(0..TABLE_WORDS);
        let i2 = e.rng.gen_range(0..TABLE_WORDS);
        e.load(pc, a, &[R_INDEX], TABLE_BASE + 8 * i1);
        e.load(pc + 4, b, &[R_INDEX], TABLE_BASE + 8 * i2);
        emit_template(e, t, a, b, out);
        e.store(pc + 0x40, out, &[R_INDEX], addr);
        st.fifo.push_back(Pending {
            addr,
            template: Some(t),
        });
        loads += 2;
    } else {
        let i = e.rng.gen_range(0..TABLE_WORDS);
        e.load(PC_COPY, R_COPY, &[R_INDEX], TABLE_BASE + 8 * i);
        e.store(PC_COPY + 4, R_COPY, &[R_INDEX], addr);
        st.fifo.push_back(Pending { addr, template: None });
        loads += 1;
    }
    if st.fifo.len() > CONSUMER_LAG {
        let p = st.fifo.pop_front().expect("non-empty");
        let (pc, dst) = match p.template {
            Some(t) => (PC_TEMPLATE + 0x100 * t as u64 + 0x80, R_CONSUMED + t as u8),
            None => (PC_COPY + 0x80, R_CONSUMED + 4),
        };
        e.load(pc, dst, &[R_INDEX], p.addr);
        e.alu(pc + 4, AluOp::Add, R_CONSUMER_ACC, &[R_CONSUMER_ACC, dst], None);
        loads += 1;
    }
    e.alu(PC_TEMPLATE - 4, AluOp::Add, R_INDEX, &[R_INDEX], Some(1));
    loads
}

fn chase_iteration(e: &mut Emitter) -> usize {
    e.load(PC_CHASE, R_PTR, &[R_PTR], e.regs[R_PTR as usize]);
    e.alu(PC_CHASE + 4, AluOp::Add, R_CHASE_ACC, &[R_CHASE_ACC, R_PTR], None);
    1
}

fn stream_iteration(e: &mut Emitter, elems: u64, store_p: f64) -> usize {
    let i = e.regs[R_INDEX as usize] % elems;
    e.load(PC_STREAM, R_STREAM_VAL, &[R_INDEX], STREAM_SRC + 8 * i);
    e.alu(
        PC_STREAM + 4,
        AluOp::Add,
        R_STREAM_SUM,
        &[R_STREAM_VAL, R_STREAM_K],
        None,
    );
    if e.rng.gen_bool(store_p) {
        e.store(PC_STREAM + 8, R_STREAM_SUM, &[R_INDEX], STREAM_DST + 8 * i);
    }
    e.alu(PC_STREAM + 12, AluOp::Add, R_INDEX, &[R_INDEX], Some(1));
    1
}

/// Generates a trace for `spec`. The output is a pure function of the spec.
pub fn gen_synthetic(spec: &SyntheticWorkloadSpec) -> Result<Trace, GenError> {
    spec.validate()?;
    let mut e = Emitter {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        seed: spec.seed,
        limit: spec.count,
        insts: Vec::with_capacity(spec.count),
        regs: [0; 64],
        init_regs: Vec::new(),
        mem: HashMap::new(),
        image: HashMap::new(),
        mispredict_rate: spec.mispredict_rate,
    };

    // Pointer-chase nodes form one random cycle, one node per line.
    let nodes = (spec.working_set_bytes / 64).max(2);
    if matches!(spec.pattern, Pattern::PointerChase | Pattern::Mixed) {
        let mut order: Vec<u64> = (0..nodes).collect();
        for i in (1..order.len()).rev() {
            let k = e.rng.gen_range(0..=i);
            order.swap(i, k);
        }
        for w in 0..order.len() {
            let from = CHASE_BASE + order[w] * 64;
            let to = CHASE_BASE + order[(w + 1) % order.len()] * 64;
            e.image.insert(from, to);
        }
        e.set_init(R_PTR, CHASE_BASE + order[0] * 64);
    }
    e.set_init(R_STREAM_K, 3);
    for r in 0..FILLER_REGS {
        let v = e.rng.gen_range(1..1000);
        e.set_init(R_FILLER + r, v);
    }

    // Touch each table line once, each load waiting on the previous one, so
    // the table is resident before compute iterations start.
    if matches!(spec.pattern, Pattern::ComputeStoreLoad | Pattern::Mixed) {
        for line in 0..TABLE_WORDS / 8 {
            e.load(PC_WARM, R_COPY, &[R_COPY], TABLE_BASE + 64 * line);
        }
        e.alu(PC_WARM + 4, AluOp::Mul, R_COPY, &[R_COPY], Some(0));
        e.alu(PC_WARM + 8, AluOp::Add, R_INDEX, &[R_INDEX, R_COPY], None);
    }

    let stream_elems = spec.working_set_bytes / 16;
    let mut compute = ComputeState::new();
    let store_p = spec.store_density;
    while !e.full() {
        let before = e.insts.len();
        let pattern = match spec.pattern {
            Pattern::Mixed => match e.rng.gen_range(0..4) {
                0 => Pattern::PointerChase,
                1 => Pattern::Stream,
                _ => Pattern::ComputeStoreLoad,
            },
            p => p,
        };
        let (loads, extra_src) = match pattern {
            Pattern::PointerChase => (chase_iteration(&mut e), R_CHASE_ACC),
            Pattern::Stream => (stream_iteration(&mut e, stream_elems, store_p), R_STREAM_SUM),
            _ => (
                compute_iteration(&mut e, &mut compute, spec.recomputable_fraction),
                R_CONSUMER_ACC,
            ),
        };
        let base = e.insts.len() - before;
        let total = ((loads as f64 / spec.load_density).round() as usize).max(base);
        let slots = total - base;
        if slots > 0 {
            let p = (spec.branch_density * total as f64 / slots as f64).min(1.0);
            for _ in 0..slots {
                e.filler(p, extra_src);
            }
        }
    }

    let header = TraceHeader {
        notes: vec![format!(
            "synthetic pattern={} count={} seed={} recomputable={}",
            spec.pattern, spec.count, spec.seed, spec.recomputable_fraction
        )],
        init_regs: e.init_regs,
        ..TraceHeader::default()
    };
    Ok(Trace {
        header,
        instructions: e.insts,
    })
}
