//! In-order functional replay of a trace.
//!
//! This is the architectural reference: it tracks register values and a
//! byte-granular view of memory that is built up from stores and from the
//! values loads observed in untraced memory.

use std::collections::HashMap;

use super::{size_mask, ArithFault, Kind, StoreData, Trace, TraceInstruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    /// A load observed a value that disagrees with known memory bytes.
    LoadMismatch {
        expected: u64,
    },
    /// A store record's value disagrees with its data operand.
    StoreMismatch {
        expected: u64,
    },
}

#[derive(Debug, Clone)]
pub struct FunctionalState {
    regs: Vec<u64>,
    mem: HashMap<u64, u8>,
}

impl FunctionalState {
    pub fn new(trace: &Trace) -> Self {
        let mut regs = vec![0; trace.header.arch_regs as usize];
        for &(r, v) in &trace.header.init_regs {
            if let Some(slot) = regs.get_mut(r as usize) {
                *slot = v;
            }
        }
        FunctionalState {
            regs,
            mem: HashMap::new(),
        }
    }

    pub fn regs(&self) -> &[u64] {
        &self.regs
    }

    pub fn reg(&self, r: u8) -> u64 {
        self.regs.get(r as usize).copied().unwrap_or(0)
    }

    /// Operand values of an ALU instruction: registers, then the immediate.
    pub fn alu_operands(&self, inst: &TraceInstruction) -> smallvec::SmallVec<[u64; 4]> {
        let mut ops: smallvec::SmallVec<[u64; 4]> = inst.srcs.iter().map(|&r| self.reg(r)).collect();
        if let Some(imm) = inst.imm {
            ops.push(imm as u64);
        }
        ops
    }

    fn known_bytes(&self, addr: u64, size: u8) -> (u64, u64) {
        let mut value = 0u64;
        let mut known = 0u64;
        for i in 0..size as u64 {
            if let Some(&b) = self.mem.get(&(addr + i)) {
                value |= (b as u64) << (8 * i);
                known |= 0xFF << (8 * i);
            }
        }
        (value, known)
    }

    fn write_bytes(&mut self, addr: u64, size: u8, value: u64) {
        for i in 0..size as u64 {
            self.mem.insert(addr + i, (value >> (8 * i)) as u8);
        }
    }

    /// Value an instruction produces: the destination value for ALU ops and
    /// loads, the stored data for stores.
    pub fn step(&mut self, inst: &TraceInstruction) -> Result<StepOutcome, ArithFault> {
        let mut outcome = StepOutcome::Ok;
        match inst.kind {
            Kind::Alu => {
                let op = inst.alu_op.expect("validated ALU record");
                let v = op.eval(&self.alu_operands(inst))?;
                if let Some(d) = inst.dst {
                    self.regs[d as usize] = v;
                }
            }
            Kind::Load => {
                let m = inst.mem.expect("validated load record");
                let (known_value, known) = self.known_bytes(m.addr, m.size);
                if m.value & known != known_value {
                    outcome = StepOutcome::LoadMismatch {
                        expected: known_value | (m.value & !known & size_mask(m.size)),
                    };
                } else {
                    // Bytes never written in-trace come from initial memory.
                    self.write_bytes(m.addr, m.size, m.value);
                }
                if let Some(d) = inst.dst {
                    self.regs[d as usize] = m.value;
                }
            }
            Kind::Store => {
                let m = inst.mem.expect("validated store record");
                let data = match inst.store_data() {
                    Some(StoreData::Reg(r)) => self.reg(r),
                    Some(StoreData::Imm(v)) => v,
                    None => 0,
                } & size_mask(m.size);
                if data != m.value {
                    outcome = StepOutcome::StoreMismatch { expected: data };
                }
                self.write_bytes(m.addr, m.size, data);
            }
            Kind::Branch | Kind::Nop => {}
        }
        Ok(outcome)
    }

    /// The architectural value an instruction commits, if any.
    pub fn committed_value(&self, inst: &TraceInstruction) -> Option<u64> {
        match inst.kind {
            Kind::Alu | Kind::Load => inst.dst.map(|d| self.reg(d)),
            Kind::Store => {
                let m = inst.mem?;
                Some(self.known_bytes(m.addr, m.size).0)
            }
            _ => None,
        }
    }
}

/// Replays a trace in order and returns what each instruction commits.
pub fn replay(trace: &Trace) -> Result<Vec<Option<u64>>, ArithFault> {
    let mut state = FunctionalState::new(trace);
    let mut out = Vec::with_capacity(trace.len());
    for inst in &trace.instructions {
        state.step(inst)?;
        out.push(state.committed_value(inst));
    }
    Ok(out)
}
