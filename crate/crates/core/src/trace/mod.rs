//! Dynamic instruction traces.
//!
//! A trace is the correct-path dynamic instruction stream of a program,
//! annotated with the values every load and store observed and with the
//! outcome and prediction status of every branch. The simulator never
//! interprets an ISA; everything it needs is carried by the records.

mod format;
pub mod functional;
pub mod gen;

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub(crate) use format::parse_int as format_int;
pub use format::{emit_trace, parse_trace, TraceParseError};
pub use functional::{replay, FunctionalState};
pub use gen::{gen_synthetic, GenError, Pattern, SyntheticWorkloadSpec};

/// Size of a cache line in bytes. Trace accesses never straddle one.
pub const LINE_BYTES: u64 = 64;

/// Current trace format version.
pub const TRACE_VERSION: u32 = 1;

/// Default architectural register count.
pub const DEFAULT_ARCH_REGS: u8 = 64;

pub type Reg = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    Alu,
    Load,
    Store,
    Branch,
    Nop,
}

impl Kind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Kind::Alu => "ALU",
            Kind::Load => "LOAD",
            Kind::Store => "STORE",
            Kind::Branch => "BRANCH",
            Kind::Nop => "NOP",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Some(match s {
            "ALU" => Kind::Alu,
            "LOAD" => Kind::Load,
            "STORE" => Kind::Store,
            "BRANCH" => Kind::Branch,
            "NOP" => Kind::Nop,
            _ => return None,
        })
    }
}

/// Arithmetic shift amounts at or above the register width trap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("arithmetic fault: {op} with shift amount {amount}")]
pub struct ArithFault {
    pub op: AluOp,
    pub amount: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Mul,
    Mov,
    Cmov,
}

impl AluOp {
    pub const ALL: [AluOp; 10] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::And,
        AluOp::Or,
        AluOp::Xor,
        AluOp::Shl,
        AluOp::Shr,
        AluOp::Mul,
        AluOp::Mov,
        AluOp::Cmov,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "ADD",
            AluOp::Sub => "SUB",
            AluOp::And => "AND",
            AluOp::Or => "OR",
            AluOp::Xor => "XOR",
            AluOp::Shl => "SHL",
            AluOp::Shr => "SHR",
            AluOp::Mul => "MUL",
            AluOp::Mov => "MOV",
            AluOp::Cmov => "CMOV",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        AluOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    /// Number of value operands the op consumes (registers plus immediate).
    pub fn arity(self) -> usize {
        match self {
            AluOp::Mov => 1,
            AluOp::Cmov => 3,
            _ => 2,
        }
    }

    /// Execution latency in cycles.
    pub fn latency(self) -> u64 {
        match self {
            AluOp::Mul => 3,
            _ => 1,
        }
    }

    pub fn uses_multiplier(self) -> bool {
        matches!(self, AluOp::Mul)
    }

    /// Evaluates the op. `CMOV c, a, b` yields `a` when `c != 0`, else `b`.
    pub fn eval(self, operands: &[u64]) -> Result<u64, ArithFault> {
        debug_assert_eq!(operands.len(), self.arity());
        let a = operands[0];
        let b = operands.get(1).copied().unwrap_or(0);
        Ok(match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Shl | AluOp::Shr if b >= 64 => return Err(ArithFault { op: self, amount: b }),
            AluOp::Shl => a << b,
            AluOp::Shr => a >> b,
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::Mov => a,
            AluOp::Cmov => {
                if a != 0 {
                    b
                } else {
                    operands[2]
                }
            }
        })
    }
}

impl fmt::Display for AluOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemAccess {
    pub addr: u64,
    pub size: u8,
    pub value: u64,
}

impl MemAccess {
    pub fn end(&self) -> u64 {
        self.addr + self.size as u64
    }

    pub fn overlaps(&self, addr: u64, size: u8) -> bool {
        self.addr < addr + size as u64 && addr < self.end()
    }

    pub fn line(&self) -> u64 {
        self.addr / LINE_BYTES
    }

    pub fn crosses_line(&self) -> bool {
        self.addr / LINE_BYTES != (self.end() - 1) / LINE_BYTES
    }
}

/// Mask selecting the low `size` bytes of a value.
pub fn size_mask(size: u8) -> u64 {
    if size >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * size as u32)) - 1
    }
}

pub fn valid_size(size: u8) -> bool {
    matches!(size, 1 | 2 | 4 | 8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchInfo {
    pub taken: bool,
    pub predicted_correctly: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceInstruction {
    pub seq: u64,
    pub pc: u64,
    pub kind: Kind,
    pub dst: Option<Reg>,
    pub srcs: SmallVec<[Reg; 3]>,
    pub imm: Option<i64>,
    pub alu_op: Option<AluOp>,
    pub mem: Option<MemAccess>,
    pub br: Option<BranchInfo>,
    pub may_fault: bool,
}

impl TraceInstruction {
    pub fn new(seq: u64, pc: u64, kind: Kind) -> Self {
        TraceInstruction {
            seq,
            pc,
            kind,
            dst: None,
            srcs: SmallVec::new(),
            imm: None,
            alu_op: None,
            mem: None,
            br: None,
            may_fault: false,
        }
    }

    pub fn alu(seq: u64, pc: u64, op: AluOp, dst: Reg, srcs: &[Reg], imm: Option<i64>) -> Self {
        let mut i = TraceInstruction::new(seq, pc, Kind::Alu);
        i.alu_op = Some(op);
        i.dst = Some(dst);
        i.srcs = srcs.iter().copied().collect();
        i.imm = imm;
        i
    }

    pub fn load(seq: u64, pc: u64, dst: Reg, addr_srcs: &[Reg], mem: MemAccess) -> Self {
        let mut i = TraceInstruction::new(seq, pc, Kind::Load);
        i.dst = Some(dst);
        i.srcs = addr_srcs.iter().copied().collect();
        i.mem = Some(mem);
        i
    }

    /// A store of register `data` (followed by address registers).
    pub fn store(seq: u64, pc: u64, data: Reg, addr_srcs: &[Reg], mem: MemAccess) -> Self {
        let mut i = TraceInstruction::new(seq, pc, Kind::Store);
        i.srcs.push(data);
        i.srcs.extend(addr_srcs.iter().copied());
        i.mem = Some(mem);
        i
    }

    pub fn branch(seq: u64, pc: u64, srcs: &[Reg], taken: bool, predicted_correctly: bool) -> Self {
        let mut i = TraceInstruction::new(seq, pc, Kind::Branch);
        i.srcs = srcs.iter().copied().collect();
        i.br = Some(BranchInfo {
            taken,
            predicted_correctly,
        });
        i
    }

    /// Where a store's data comes from. An immediate, when present, is the
    /// data and every register is an address operand; otherwise the first
    /// register is the data.
    pub fn store_data(&self) -> Option<StoreData> {
        if self.kind != Kind::Store {
            return None;
        }
        match (self.imm, self.srcs.first()) {
            (Some(imm), _) => Some(StoreData::Imm(imm as u64)),
            (None, Some(&r)) => Some(StoreData::Reg(r)),
            (None, None) => None,
        }
    }

    /// Registers that feed the effective address of a load or store.
    pub fn addr_srcs(&self) -> &[Reg] {
        match self.kind {
            Kind::Load => &self.srcs,
            Kind::Store if self.imm.is_none() && !self.srcs.is_empty() => &self.srcs[1..],
            Kind::Store => &self.srcs,
            _ => &[],
        }
    }

    pub fn is_mispredicted_branch(&self) -> bool {
        matches!(self.br, Some(b) if !b.predicted_correctly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreData {
    Reg(Reg),
    Imm(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub arch_regs: u8,
    /// Free-form notes carried as leading comment lines.
    pub notes: Vec<String>,
    /// Register values at the first instruction; registers absent here start at zero.
    pub init_regs: Vec<(Reg, u64)>,
}

impl Default for TraceHeader {
    fn default() -> Self {
        TraceHeader {
            version: TRACE_VERSION,
            arch_regs: DEFAULT_ARCH_REGS,
            notes: Vec::new(),
            init_regs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub instructions: Vec<TraceInstruction>,
}

impl Trace {
    pub fn new(instructions: Vec<TraceInstruction>) -> Self {
        Trace {
            header: TraceHeader::default(),
            instructions,
        }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn get(&self, seq: u64) -> Option<&TraceInstruction> {
        self.instructions.get(seq as usize)
    }

    pub fn loads(&self) -> impl Iterator<Item = &TraceInstruction> {
        self.instructions.iter().filter(|i| i.kind == Kind::Load)
    }

    /// Cuts out `[skip, skip + limit)` and renumbers it from zero. The
    /// register state at the cut point becomes the window's initial state so
    /// the window replays to the same values.
    pub fn window(&self, skip: usize, limit: Option<usize>) -> Trace {
        let start = skip.min(self.len());
        let end = limit.map_or(self.len(), |l| start.saturating_add(l).min(self.len()));
        let mut state = FunctionalState::new(self);
        for inst in &self.instructions[..start] {
            // Values already validated; a fault here only loses that register.
            let _ = state.step(inst);
        }
        let mut header = self.header.clone();
        header.init_regs = state
            .regs()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(r, &v)| (r as Reg, v))
            .collect();
        let instructions = self.instructions[start..end]
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                let mut inst = inst.clone();
                inst.seq = i as u64;
                inst
            })
            .collect();
        Trace { header, instructions }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NonDenseSeq { index: usize, seq: u64 },
    ValueInconsistency { seq: u64, expected: u64, found: u64 },
    StoreDataMismatch { seq: u64, expected: u64, found: u64 },
    LineCrossing { seq: u64, addr: u64, size: u8 },
    Malformed { seq: u64, reason: String },
    ArithmeticFault { seq: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonDenseSeq { index, seq } => {
                write!(f, "non-dense seq at index {index}: found seq={seq}")
            }
            Violation::ValueInconsistency { seq, expected, found } => write!(
                f,
                "value inconsistency at seq={seq}: memory holds {expected:#x}, load observed {found:#x}"
            ),
            Violation::StoreDataMismatch { seq, expected, found } => write!(
                f,
                "store data mismatch at seq={seq}: register holds {expected:#x}, record says {found:#x}"
            ),
            Violation::LineCrossing { seq, addr, size } => {
                write!(f, "line crossing at seq={seq}: {addr:#x}+{size}")
            }
            Violation::Malformed { seq, reason } => write!(f, "malformed record at seq={seq}: {reason}"),
            Violation::ArithmeticFault { seq } => write!(f, "arithmetic fault at seq={seq}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural checks that do not depend on execution order.
fn shape_violation(inst: &TraceInstruction, arch_regs: u8) -> Option<String> {
    let reg_ok = |r: Reg| r < arch_regs;
    if inst.dst.is_some_and(|r| !reg_ok(r)) || inst.srcs.iter().any(|&r| !reg_ok(r)) {
        return Some("register id out of range".into());
    }
    if inst.srcs.len() > 3 {
        return Some("more than three source registers".into());
    }
    match inst.kind {
        Kind::Alu => {
            let Some(op) = inst.alu_op else {
                return Some("ALU record without op".into());
            };
            let n = inst.srcs.len() + inst.imm.is_some() as usize;
            if n != op.arity() {
                return Some(format!("{op} expects {} operands, has {n}", op.arity()));
            }
            if inst.dst.is_none() {
                return Some("ALU record without destination".into());
            }
        }
        Kind::Load | Kind::Store => {
            let Some(m) = inst.mem else {
                return Some("memory record without address".into());
            };
            if !valid_size(m.size) {
                return Some(format!("size {} not in {{1,2,4,8}}", m.size));
            }
            if m.value & !size_mask(m.size) != 0 {
                return Some("value wider than access size".into());
            }
            if inst.kind == Kind::Load && inst.dst.is_none() {
                return Some("load without destination".into());
            }
            if inst.kind == Kind::Store && inst.store_data().is_none() {
                return Some("store without data operand".into());
            }
        }
        Kind::Branch => {
            if inst.br.is_none() {
                return Some("branch without outcome".into());
            }
        }
        Kind::Nop => {}
    }
    None
}

/// Lists every violated trace invariant; an empty report means the trace is valid.
pub fn validate_trace(t: &Trace) -> ValidationReport {
    let mut violations = Vec::new();
    let mut state = FunctionalState::new(t);
    for (index, inst) in t.instructions.iter().enumerate() {
        if inst.seq != index as u64 {
            violations.push(Violation::NonDenseSeq { index, seq: inst.seq });
        }
        if let Some(reason) = shape_violation(inst, t.header.arch_regs) {
            violations.push(Violation::Malformed { seq: inst.seq, reason });
            continue;
        }
        if let Some(m) = inst.mem {
            if m.crosses_line() {
                violations.push(Violation::LineCrossing {
                    seq: inst.seq,
                    addr: m.addr,
                    size: m.size,
                });
                continue;
            }
        }
        match state.step(inst) {
            Ok(functional::StepOutcome::LoadMismatch { expected }) => violations.push(Violation::ValueInconsistency {
                seq: inst.seq,
                expected,
                found: inst.mem.map_or(0, |m| m.value),
            }),
            Ok(functional::StepOutcome::StoreMismatch { expected }) => violations.push(Violation::StoreDataMismatch {
                seq: inst.seq,
                expected,
                found: inst.mem.map_or(0, |m| m.value),
            }),
            Ok(functional::StepOutcome::Ok) => {}
            Err(_) => violations.push(Violation::ArithmeticFault { seq: inst.seq }),
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem(addr: u64, size: u8, value: u64) -> MemAccess {
        MemAccess { addr, size, value }
    }

    #[test]
    fn store_then_matching_load_is_valid() {
        let t = Trace::new(vec![
            TraceInstruction::alu(0, 0x0, AluOp::Mov, 1, &[], Some(7)),
            TraceInstruction::store(1, 0x4, 1, &[], mem(0x40, 8, 7)),
            TraceInstruction::load(2, 0x8, 2, &[], mem(0x40, 8, 7)),
        ]);
        assert!(validate_trace(&t).is_valid());
    }

    #[test]
    fn mismatching_load_value_is_reported() {
        let t = Trace::new(vec![
            TraceInstruction::alu(0, 0x0, AluOp::Mov, 1, &[], Some(7)),
            TraceInstruction::store(1, 0x4, 1, &[], mem(0x40, 8, 7)),
            TraceInstruction::load(2, 0x8, 2, &[], mem(0x40, 8, 8)),
        ]);
        let r = validate_trace(&t);
        assert_eq!(
            r.violations,
            vec![Violation::ValueInconsistency {
                seq: 2,
                expected: 7,
                found: 8
            }]
        );
        assert!(r.violations[0].to_string().contains("value inconsistency at seq=2"));
    }

    #[test]
    fn line_crossing_is_reported() {
        let t = Trace::new(vec![TraceInstruction::load(0, 0x0, 1, &[], mem(0x3C, 8, 0))]);
        let r = validate_trace(&t);
        assert!(matches!(
            r.violations.as_slice(),
            [Violation::LineCrossing {
                seq: 0,
                addr: 0x3C,
                size: 8
            }]
        ));
    }

    #[test]
    fn partial_overlap_checks_bytes() {
        // Byte store into the middle of an 8-byte word read back later.
        let t = Trace::new(vec![
            TraceInstruction::alu(0, 0x0, AluOp::Mov, 1, &[], Some(0xAB)),
            TraceInstruction::store(1, 0x4, 1, &[], mem(0x102, 1, 0xAB)),
            TraceInstruction::load(2, 0x8, 2, &[], mem(0x100, 8, 0x00AB_0000)),
            TraceInstruction::load(3, 0xc, 3, &[], mem(0x100, 8, 0x00AC_0000)),
        ]);
        let r = validate_trace(&t);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::ValueInconsistency { seq: 3, .. }));
    }

    #[test]
    fn untraced_memory_must_stay_consistent() {
        let t = Trace::new(vec![
            TraceInstruction::load(0, 0x0, 1, &[], mem(0x200, 8, 5)),
            TraceInstruction::load(1, 0x0, 1, &[], mem(0x200, 8, 6)),
        ]);
        assert_eq!(validate_trace(&t).violations.len(), 1);
    }

    #[test]
    fn store_data_must_match_register() {
        let t = Trace::new(vec![
            TraceInstruction::alu(0, 0x0, AluOp::Mov, 1, &[], Some(3)),
            TraceInstruction::store(1, 0x4, 1, &[], mem(0x40, 8, 4)),
        ]);
        assert!(matches!(
            validate_trace(&t).violations.as_slice(),
            [Violation::StoreDataMismatch {
                seq: 1,
                expected: 3,
                found: 4
            }]
        ));
    }

    #[test]
    fn sequence_gaps_are_reported() {
        let mut a = TraceInstruction::new(0, 0, Kind::Nop);
        a.seq = 1;
        let t = Trace::new(vec![a]);
        assert!(matches!(
            validate_trace(&t).violations.as_slice(),
            [Violation::NonDenseSeq { index: 0, seq: 1 }]
        ));
    }

    #[test]
    fn alu_semantics() {
        assert_eq!(AluOp::Add.eval(&[u64::MAX, 2]), Ok(1));
        assert_eq!(AluOp::Cmov.eval(&[1, 5, 6]), Ok(5));
        assert_eq!(AluOp::Cmov.eval(&[0, 5, 6]), Ok(6));
        assert_eq!(AluOp::Shr.eval(&[0x100, 4]), Ok(0x10));
        assert!(AluOp::Shl.eval(&[1, 64]).is_err());
    }

    #[test]
    fn window_carries_register_state() {
        let t = Trace::new(vec![
            TraceInstruction::alu(0, 0x0, AluOp::Mov, 1, &[], Some(9)),
            TraceInstruction::alu(1, 0x4, AluOp::Add, 2, &[1], Some(1)),
            TraceInstruction::store(2, 0x8, 2, &[], mem(0x40, 8, 10)),
        ]);
        let w = t.window(1, Some(5));
        assert_eq!(w.len(), 2);
        assert_eq!(w.instructions[0].seq, 0);
        assert_eq!(w.header.init_regs, vec![(1, 9)]);
        assert!(validate_trace(&w).is_valid());
    }
}
