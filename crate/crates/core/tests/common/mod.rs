#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrcsim::shadows::{ShadowKind, ShadowOracle, ShadowState};
use vrcsim::trace::{AluOp, Kind, MemAccess, Trace, TraceInstruction as I};

fn alu(op: AluOp, v: &[u64]) -> u64 {
    let b = v.get(1).copied().unwrap_or(0);
    match op {
        AluOp::Add => v[0].wrapping_add(b),
        AluOp::Sub => v[0].wrapping_sub(b),
        AluOp::And => v[0] & b,
        AluOp::Or => v[0] | b,
        AluOp::Xor => v[0] ^ b,
        AluOp::Shl => v[0].checked_shl(b as u32).filter(|_| b < 64).expect("shift fault"),
        AluOp::Shr => v[0].checked_shr(b as u32).filter(|_| b < 64).expect("shift fault"),
        AluOp::Mul => v[0].wrapping_mul(b),
        AluOp::Mov => v[0],
        AluOp::Cmov => {
            if v[0] != 0 {
                v[1]
            } else {
                v[2]
            }
        }
    }
}

/// Straight-line interpreter over registers and a byte map, written
/// separately from the simulator's own replayer.
pub fn oracle_replay(t: &Trace) -> Vec<Option<u64>> {
    let mut regs: HashMap<u8, u64> = t.header.init_regs.iter().copied().collect();
    let mut mem: HashMap<u64, u8> = HashMap::new();
    let mut out = Vec::with_capacity(t.len());
    for inst in &t.instructions {
        let r = |regs: &HashMap<u8, u64>, x: u8| regs.get(&x).copied().unwrap_or(0);
        let v = match inst.kind {
            Kind::Alu => {
                let mut ops: Vec<u64> = inst.srcs.iter().map(|&s| r(&regs, s)).collect();
                ops.extend(inst.imm.map(|i| i as u64));
                let v = alu(inst.alu_op.unwrap(), &ops);
                inst.dst.map(|d| {
                    regs.insert(d, v);
                    v
                })
            }
            Kind::Load => {
                let m = inst.mem.unwrap();
                for b in 0..m.size as u64 {
                    mem.entry(m.addr + b).or_insert((m.value >> (8 * b)) as u8);
                }
                inst.dst.map(|d| {
                    regs.insert(d, m.value);
                    m.value
                })
            }
            Kind::Store => {
                let m = inst.mem.unwrap();
                let data = match (inst.imm, inst.srcs.first()) {
                    (Some(i), _) => i as u64,
                    (None, Some(&s)) => r(&regs, s),
                    (None, None) => 0,
                };
                let data = if m.size >= 8 {
                    data
                } else {
                    data & ((1u64 << (8 * m.size)) - 1)
                };
                for b in 0..m.size as u64 {
                    mem.insert(m.addr + b, (data >> (8 * b)) as u8);
                }
                Some(data)
            }
            Kind::Branch | Kind::Nop => None,
        };
        out.push(v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowEvent {
    Cast,
    Register,
    /// Resolves the n-th still-unresolved shadow, oldest first.
    Resolve(usize),
}

/// A tracker and the brute-force oracle fed the same events.
#[derive(Clone)]
pub struct ShadowPair {
    state: ShadowState,
    oracle: ShadowOracle,
    unresolved: Vec<(u64, usize)>,
    loads: Vec<u64>,
    released: BTreeSet<u64>,
}

impl Default for ShadowPair {
    fn default() -> Self {
        ShadowPair {
            state: ShadowState::unbounded(),
            oracle: ShadowOracle::new(),
            unresolved: Vec::new(),
            loads: Vec::new(),
            released: BTreeSet::new(),
        }
    }
}

impl ShadowPair {
    pub fn unresolved(&self) -> usize {
        self.unresolved.len()
    }

    pub fn apply(&mut self, e: ShadowEvent) {
        match e {
            ShadowEvent::Cast => {
                let id = self.state.cast(ShadowKind::C, 0).unwrap();
                let idx = self.oracle.cast();
                assert_eq!(id as usize, idx);
                self.unresolved.push((id, idx));
            }
            ShadowEvent::Register => {
                let load = self.loads.len() as u64;
                self.loads.push(load);
                self.oracle.register_load(load);
                if self.state.register_load(load).unwrap() {
                    self.released.insert(load);
                }
            }
            ShadowEvent::Resolve(n) => {
                let (id, idx) = self.unresolved.remove(n);
                self.state.resolve(id).unwrap();
                self.oracle.resolve(idx);
            }
        }
        self.released.extend(self.state.poll_unshadowed());
    }

    /// Loads on which the tracker and the oracle disagree.
    pub fn mismatches(&self) -> Vec<u64> {
        self.loads
            .iter()
            .copied()
            .filter(|&l| self.released.contains(&l) == self.oracle.is_shadowed(l))
            .collect()
    }
}

/// Walks every schedule of at most `max_len` events, checking after each
/// event. Returns the number of schedules visited, the empty one included.
pub fn exhaustive_shadow_schedules(max_len: usize) -> Result<u64, String> {
    fn walk(p: &ShadowPair, depth: usize, max_len: usize, path: &mut Vec<ShadowEvent>) -> Result<u64, String> {
        let mut n = 1;
        if depth == max_len {
            return Ok(n);
        }
        let mut next = vec![ShadowEvent::Cast, ShadowEvent::Register];
        next.extend((0..p.unresolved()).map(ShadowEvent::Resolve));
        for e in next {
            let mut q = p.clone();
            q.apply(e);
            path.push(e);
            let bad = q.mismatches();
            if !bad.is_empty() {
                return Err(format!("schedule {path:?}: loads {bad:?} disagree"));
            }
            n += walk(&q, depth + 1, max_len, path)?;
            path.pop();
        }
        Ok(n)
    }
    walk(&ShadowPair::default(), 0, max_len, &mut Vec::new())
}

/// A random schedule of `len` events checked after every event. Returns the
/// number of loads that were registered.
pub fn random_shadow_schedule(len: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ShadowPair::default();
    for step in 0..len {
        let u = p.unresolved();
        // Keep the live set bounded so resolves stay frequent.
        let e = match rng.gen_range(0..10) {
            0..=2 if u < 64 => ShadowEvent::Cast,
            0..=5 => ShadowEvent::Register,
            _ if u > 0 => ShadowEvent::Resolve(rng.gen_range(0..u)),
            _ => ShadowEvent::Cast,
        };
        p.apply(e);
        // Checking every load each step is quadratic; check the recent ones
        // every step and all of them periodically.
        let bad: Vec<u64> = if step % 1000 == 999 || step + 1 == len {
            p.mismatches()
        } else {
            let from = p.loads.len().saturating_sub(32);
            p.loads[from..]
                .iter()
                .copied()
                .filter(|&l| p.released.contains(&l) == p.oracle.is_shadowed(l))
                .collect()
        };
        if !bad.is_empty() {
            return Err(format!("seed {seed} step {step} ({e:?}): loads {bad:?} disagree"));
        }
    }
    Ok(p.loads.len())
}

pub const STORE_ADDR: u64 = 0x40_0000;
pub const SLOW_ADDR: u64 = 0x80_0000;
pub const EVICT_STRIDE: u64 = 64 * 64;
pub const PC_FIRST_USE: u64 = 0x2000;
pub const PC_LATER_USE: u64 = 0x3000;

/// A value computed by MUL then ADD is stored to `STORE_ADDR`, whose line is
/// then pushed out of L1 by conflicting loads. A load of that address sits
/// behind a branch waiting on a cold miss, and a second load of it comes
/// after the ROB has drained past the branch.
pub fn recompute_locality_trace(filler: usize) -> Trace {
    let mut v = Vec::new();
    let mut pc = 0x1000u64;
    let mut push = |v: &mut Vec<I>, mut i: I| {
        i.seq = v.len() as u64;
        i.pc = pc;
        pc += 4;
        v.push(i);
    };
    let x = 7u64;
    let stored = x.wrapping_mul(3).wrapping_add(5);
    let mut t = Trace::new(Vec::new());
    t.header.init_regs = vec![(1, x)];
    push(&mut v, I::alu(0, 0, AluOp::Mul, 2, &[1], Some(3)));
    push(&mut v, I::alu(0, 0, AluOp::Add, 2, &[2], Some(5)));
    push(
        &mut v,
        I::store(
            0,
            0,
            2,
            &[],
            MemAccess {
                addr: STORE_ADDR,
                size: 8,
                value: stored,
            },
        ),
    );
    // L1 is 8-way with 64 sets; sixteen more lines in the same set evict it
    // whatever order the fills land in.
    for k in 1..=16u64 {
        push(
            &mut v,
            I::load(
                0,
                0,
                10,
                &[],
                MemAccess {
                    addr: STORE_ADDR + k * EVICT_STRIDE,
                    size: 8,
                    value: k,
                },
            ),
        );
    }
    for k in 0..filler {
        push(
            &mut v,
            I::alu(0, 0, AluOp::Add, 20 + (k % 8) as u8, &[1], Some(k as i64)),
        );
    }
    push(
        &mut v,
        I::load(
            0,
            0,
            3,
            &[],
            MemAccess {
                addr: SLOW_ADDR,
                size: 8,
                value: 1,
            },
        ),
    );
    push(&mut v, I::branch(0, 0, &[3], true, true));
    let first = v.len();
    v.push(I::load(
        first as u64,
        PC_FIRST_USE,
        4,
        &[],
        MemAccess {
            addr: STORE_ADDR,
            size: 8,
            value: stored,
        },
    ));
    for k in 0..filler {
        push(
            &mut v,
            I::alu(0, 0, AluOp::Add, 20 + (k % 8) as u8, &[1], Some(k as i64)),
        );
    }
    let later = v.len();
    v.push(I::load(
        later as u64,
        PC_LATER_USE,
        5,
        &[],
        MemAccess {
            addr: STORE_ADDR,
            size: 8,
            value: stored,
        },
    ));
    t.instructions = v;
    t
}

/// Index of the first and the later load of the stored value.
pub fn locality_loads(t: &Trace) -> (u64, u64) {
    let find = |pc| t.instructions.iter().find(|i| i.pc == pc).unwrap().seq;
    (find(PC_FIRST_USE), find(PC_LATER_USE))
}

/// Two dependent multiplies feed a correctly predicted branch that shadows
/// a load to a cold line.
pub fn single_miss_trace() -> Trace {
    Trace::new(vec![
        I::alu(0, 0x0, AluOp::Mul, 1, &[1], Some(3)),
        I::alu(1, 0x4, AluOp::Mul, 1, &[1], Some(3)),
        I::branch(2, 0x8, &[1], true, true),
        I::load(
            3,
            0xc,
            2,
            &[],
            MemAccess {
                addr: 0x8000,
                size: 8,
                value: 9,
            },
        ),
    ])
}

/// One step of a random program; `build_trace` turns a list of these into a
/// self-consistent trace.
#[derive(Debug, Clone, Copy)]
pub enum RawOp {
    Alu {
        op: u8,
        dst: u8,
        a: u8,
        b: u8,
        imm: Option<i16>,
    },
    Load {
        dst: u8,
        slot: u8,
        wide: bool,
        fresh: u64,
    },
    Store {
        src: u8,
        slot: u8,
        wide: bool,
    },
    Branch {
        src: u8,
        taken: bool,
        mispredicted: bool,
    },
}

pub fn raw_op() -> impl proptest::strategy::Strategy<Value = RawOp> {
    use proptest::prelude::*;
    let reg = 1u8..8;
    prop_oneof![
        4 => (0u8..10, reg.clone(), reg.clone(), reg.clone(), proptest::option::of(any::<i16>()))
            .prop_map(|(op, dst, a, b, imm)| RawOp::Alu { op, dst, a, b, imm }),
        3 => (reg.clone(), 0u8..48, any::<bool>(), any::<u64>())
            .prop_map(|(dst, slot, wide, fresh)| RawOp::Load { dst, slot, wide, fresh }),
        2 => (reg.clone(), 0u8..48, any::<bool>()).prop_map(|(src, slot, wide)| RawOp::Store { src, slot, wide }),
        1 => (reg, any::<bool>(), proptest::bool::weighted(0.3))
            .prop_map(|(src, taken, mispredicted)| RawOp::Branch { src, taken, mispredicted }),
    ]
}

/// Slots spread over a few nearby lines and a few far ones, so random
/// programs see hits, misses and store-to-load forwarding.
fn slot_addr(slot: u8) -> u64 {
    const BASES: [u64; 4] = [0x1000, 0x9000, 0x4_0000, 0x8_0000];
    BASES[(slot % 4) as usize] + 8 * (slot / 4) as u64
}

pub fn build_trace(ops: &[RawOp]) -> Trace {
    let mut regs = [0u64; 8];
    for (r, v) in regs_init() {
        regs[r as usize] = v;
    }
    let mut mem: HashMap<u64, u8> = HashMap::new();
    let mut out = Vec::with_capacity(ops.len());
    for (i, op) in ops.iter().enumerate() {
        let seq = i as u64;
        let pc = 0x400 + 4 * (i as u64 % 64);
        let inst = match *op {
            RawOp::Alu { op, dst, a, b, imm } => {
                let op = AluOp::ALL[op as usize];
                let (srcs, imm): (Vec<u8>, Option<i64>) = match op {
                    AluOp::Mov => (vec![a], None),
                    AluOp::Cmov => (vec![a, b, dst], None),
                    // Register shift amounts could trap; keep them immediate.
                    AluOp::Shl | AluOp::Shr => (vec![a], Some(imm.unwrap_or(b as i16).rem_euclid(64) as i64)),
                    _ => match imm {
                        Some(k) => (vec![a], Some(k as i64)),
                        None => (vec![a, b], None),
                    },
                };
                let mut vals: Vec<u64> = srcs.iter().map(|&s| regs[s as usize]).collect();
                vals.extend(imm.map(|k| k as u64));
                regs[dst as usize] = alu(op, &vals);
                I::alu(seq, pc, op, dst, &srcs, imm)
            }
            RawOp::Load { dst, slot, wide, fresh } => {
                let size = if wide { 8 } else { 4 };
                let addr = slot_addr(slot);
                let mut value = 0u64;
                for b in 0..size as u64 {
                    let byte = *mem.entry(addr + b).or_insert((fresh >> (8 * b)) as u8);
                    value |= (byte as u64) << (8 * b);
                }
                regs[dst as usize] = value;
                I::load(seq, pc, dst, &[], MemAccess { addr, size, value })
            }
            RawOp::Store { src, slot, wide } => {
                let size = if wide { 8 } else { 4 };
                let addr = slot_addr(slot);
                let value = if wide {
                    regs[src as usize]
                } else {
                    regs[src as usize] & 0xFFFF_FFFF
                };
                for b in 0..size as u64 {
                    mem.insert(addr + b, (value >> (8 * b)) as u8);
                }
                I::store(seq, pc, src, &[], MemAccess { addr, size, value })
            }
            RawOp::Branch {
                src,
                taken,
                mispredicted,
            } => I::branch(seq, pc, &[src], taken, !mispredicted),
        };
        out.push(inst);
    }
    let mut t = Trace::new(out);
    t.header.init_regs = regs_init();
    t
}

fn regs_init() -> Vec<(u8, u64)> {
    (1u8..8)
        .map(|r| (r, (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect()
}
