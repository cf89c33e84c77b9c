//! Line-record text format for traces.
//!
//! ```text
//! # optional notes
//! H version=1 regs=64
//! V reg=r5 val=0x10
//! I seq=0 pc=0x400 kind=ALU dst=r1 srcs=r2,r3 op=ADD
//! I seq=1 pc=0x404 kind=STORE srcs=r1,r4 addr=0x100 size=8 val=0x5
//! I seq=2 pc=0x408 kind=BRANCH srcs=r1 br=T:miss fault=1
//! ```
//!
//! Fields appear in the fixed order `seq pc kind dst srcs imm op addr size
//! val br fault`; absent optional fields are omitted. `V` records give
//! non-zero initial register values.

use std::fmt::Write as _;

use smallvec::SmallVec;

use super::{valid_size, AluOp, BranchInfo, Kind, MemAccess, Reg, Trace, TraceHeader, TraceInstruction, TRACE_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceParseError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: version mismatch: expected {TRACE_VERSION}, found {found}")]
    VersionMismatch { line: usize, found: u32 },
    #[error("line {line}: field out of range: {field}={value}")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("missing header record")]
    MissingHeader,
}

const FIELD_ORDER: [&str; 12] = [
    "seq", "pc", "kind", "dst", "srcs", "imm", "op", "addr", "size", "val", "br", "fault",
];

pub(crate) fn parse_int(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

pub(crate) fn parse_signed(s: &str) -> Option<i64> {
    if let Some(rest) = s.strip_prefix('-') {
        parse_int(rest).and_then(|v| i64::try_from(v).ok()).map(|v| -v)
    } else {
        parse_int(s).map(|v| v as i64)
    }
}

pub(crate) fn parse_reg(s: &str) -> Option<u64> {
    s.strip_prefix('r').and_then(|n| n.parse().ok())
}

struct Cursor<'a> {
    line: usize,
    fields: Vec<(&'a str, &'a str)>,
}

impl<'a> Cursor<'a> {
    fn new(line: usize, tokens: impl Iterator<Item = &'a str>) -> Result<Self, TraceParseError> {
        let fields = tokens
            .map(|tok| {
                tok.split_once('=').ok_or_else(|| TraceParseError::Malformed {
                    line,
                    reason: format!("expected key=value, got `{tok}`"),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Cursor { line, fields })
    }

    fn malformed(&self, reason: impl Into<String>) -> TraceParseError {
        TraceParseError::Malformed {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn out_of_range(&self, field: &'static str, value: &str) -> TraceParseError {
        TraceParseError::OutOfRange {
            line: self.line,
            field,
            value: value.to_string(),
        }
    }

    fn check_order(&self) -> Result<(), TraceParseError> {
        let mut last = None;
        for (k, _) in &self.fields {
            let pos = FIELD_ORDER
                .iter()
                .position(|f| f == k)
                .ok_or_else(|| self.malformed(format!("unknown field `{k}`")))?;
            if last.is_some_and(|l| pos <= l) {
                return Err(self.malformed(format!("field `{k}` out of order")));
            }
            last = Some(pos);
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn require(&self, key: &'static str) -> Result<&'a str, TraceParseError> {
        self.get(key)
            .ok_or_else(|| self.malformed(format!("missing field `{key}`")))
    }

    fn int(&self, key: &'static str) -> Result<Option<u64>, TraceParseError> {
        self.get(key)
            .map(|v| parse_int(v).ok_or_else(|| self.malformed(format!("bad integer {key}={v}"))))
            .transpose()
    }

    fn reg(&self, key: &'static str, raw: &str, regs: u8) -> Result<Reg, TraceParseError> {
        let n = parse_reg(raw).ok_or_else(|| self.malformed(format!("bad register `{raw}`")))?;
        if n >= regs as u64 {
            return Err(self.out_of_range(key, raw));
        }
        Ok(n as Reg)
    }
}

fn parse_header(line: usize, tokens: std::str::SplitWhitespace<'_>) -> Result<TraceHeader, TraceParseError> {
    let mut version = None;
    let mut regs = None;
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| TraceParseError::Malformed {
            line,
            reason: format!("expected key=value, got `{tok}`"),
        })?;
        let n = parse_int(v).ok_or_else(|| TraceParseError::Malformed {
            line,
            reason: format!("bad integer {k}={v}"),
        })?;
        match k {
            "version" => version = Some(n),
            "regs" => regs = Some(n),
            _ => {
                return Err(TraceParseError::Malformed {
                    line,
                    reason: format!("unknown header field `{k}`"),
                })
            }
        }
    }
    let version = version.ok_or(TraceParseError::Malformed {
        line,
        reason: "header without version".into(),
    })?;
    if version != TRACE_VERSION as u64 {
        return Err(TraceParseError::VersionMismatch {
            line,
            found: version as u32,
        });
    }
    let regs = regs.unwrap_or(super::DEFAULT_ARCH_REGS as u64);
    if regs == 0 || regs > 255 {
        return Err(TraceParseError::OutOfRange {
            line,
            field: "regs",
            value: regs.to_string(),
        });
    }
    Ok(TraceHeader {
        version: TRACE_VERSION,
        arch_regs: regs as u8,
        notes: Vec::new(),
        init_regs: Vec::new(),
    })
}

fn parse_instruction(c: &Cursor<'_>, regs: u8) -> Result<TraceInstruction, TraceParseError> {
    c.check_order()?;
    let seq = c.int("seq")?.ok_or_else(|| c.malformed("missing field `seq`"))?;
    let pc = c.int("pc")?.ok_or_else(|| c.malformed("missing field `pc`"))?;
    let kind_raw = c.require("kind")?;
    let kind = Kind::from_mnemonic(kind_raw).ok_or_else(|| c.out_of_range("kind", kind_raw))?;
    let mut inst = TraceInstruction::new(seq, pc, kind);

    if let Some(d) = c.get("dst") {
        inst.dst = Some(c.reg("dst", d, regs)?);
    }
    if let Some(s) = c.get("srcs") {
        let srcs: SmallVec<[Reg; 3]> = s.split(',').map(|r| c.reg("srcs", r, regs)).collect::<Result<_, _>>()?;
        if srcs.len() > 3 {
            return Err(c.out_of_range("srcs", s));
        }
        inst.srcs = srcs;
    }
    if let Some(imm) = c.get("imm") {
        inst.imm = Some(parse_signed(imm).ok_or_else(|| c.malformed(format!("bad immediate `{imm}`")))?);
    }
    if let Some(op) = c.get("op") {
        inst.alu_op = Some(AluOp::from_mnemonic(op).ok_or_else(|| c.out_of_range("op", op))?);
    }

    let addr = c.int("addr")?;
    let size = c.int("size")?;
    let val = c.int("val")?;
    match kind {
        Kind::Load | Kind::Store => {
            let (Some(addr), Some(size), Some(value)) = (addr, size, val) else {
                return Err(c.malformed("memory record needs addr, size and val"));
            };
            if size > 8 || !valid_size(size as u8) {
                return Err(c.out_of_range("size", &size.to_string()));
            }
            let size = size as u8;
            if value & !super::size_mask(size) != 0 {
                return Err(c.out_of_range("val", &format!("{value:#x}")));
            }
            inst.mem = Some(MemAccess { addr, size, value });
        }
        _ if addr.is_some() || size.is_some() || val.is_some() => {
            return Err(c.malformed("memory fields on a non-memory record"))
        }
        _ => {}
    }

    match (kind, c.get("br")) {
        (Kind::Branch, Some(br)) => {
            let (t, p) = br.split_once(':').ok_or_else(|| c.out_of_range("br", br))?;
            let taken = match t {
                "T" => true,
                "N" => false,
                _ => return Err(c.out_of_range("br", br)),
            };
            let predicted_correctly = match p {
                "hit" => true,
                "miss" => false,
                _ => return Err(c.out_of_range("br", br)),
            };
            inst.br = Some(BranchInfo {
                taken,
                predicted_correctly,
            });
        }
        (Kind::Branch, None) => return Err(c.malformed("branch record needs br")),
        (_, Some(_)) => return Err(c.malformed("br on a non-branch record")),
        (_, None) => {}
    }

    inst.may_fault = match c.get("fault") {
        None | Some("0") => false,
        Some("1") => true,
        Some(f) => return Err(c.out_of_range("fault", f)),
    };

    match kind {
        Kind::Alu => {
            let op = inst.alu_op.ok_or_else(|| c.malformed("ALU record needs op"))?;
            let n = inst.srcs.len() + inst.imm.is_some() as usize;
            if n != op.arity() {
                return Err(c.malformed(format!("{op} expects {} operands, has {n}", op.arity())));
            }
            if inst.dst.is_none() {
                return Err(c.malformed("ALU record needs dst"));
            }
        }
        _ if inst.alu_op.is_some() => return Err(c.malformed("op on a non-ALU record")),
        Kind::Load if inst.dst.is_none() => return Err(c.malformed("load needs dst")),
        Kind::Store if inst.store_data().is_none() => return Err(c.malformed("store needs a data operand")),
        _ => {}
    }
    Ok(inst)
}

/// Parses the line-record trace format.
pub fn parse_trace(input: &str) -> Result<Trace, TraceParseError> {
    let mut header: Option<TraceHeader> = None;
    let mut notes = Vec::new();
    let mut instructions = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if header.is_none() {
                notes.push(comment.strip_prefix(' ').unwrap_or(comment).to_string());
            }
            continue;
        }
        let mut tokens = text.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        match (tag, header.as_mut()) {
            ("H", None) => header = Some(parse_header(line, tokens)?),
            ("H", Some(_)) => {
                return Err(TraceParseError::Malformed {
                    line,
                    reason: "duplicate header".into(),
                })
            }
            (_, None) => return Err(TraceParseError::MissingHeader),
            ("V", Some(h)) => {
                let c = Cursor::new(line, tokens)?;
                let reg = c.reg("reg", c.require("reg")?, h.arch_regs)?;
                let val = c.require("val")?;
                let val = parse_int(val).ok_or_else(|| c.malformed(format!("bad value `{val}`")))?;
                h.init_regs.push((reg, val));
            }
            ("I", Some(h)) => {
                let c = Cursor::new(line, tokens)?;
                instructions.push(parse_instruction(&c, h.arch_regs)?);
            }
            (other, Some(_)) => {
                return Err(TraceParseError::Malformed {
                    line,
                    reason: format!("unknown record type `{other}`"),
                })
            }
        }
    }
    let mut header = header.ok_or(TraceParseError::MissingHeader)?;
    header.notes = notes;
    Ok(Trace { header, instructions })
}

/// Serializes a trace; `parse_trace(&emit_trace(t)) == t`.
pub fn emit_trace(t: &Trace) -> String {
    let mut out = String::with_capacity(t.len() * 48 + 64);
    for note in &t.header.notes {
        let _ = writeln!(out, "# {note}");
    }
    let _ = writeln!(out, "H version={} regs={}", t.header.version, t.header.arch_regs);
    for (r, v) in &t.header.init_regs {
        let _ = writeln!(out, "V reg=r{r} val={v:#x}");
    }
    for i in &t.instructions {
        let _ = write!(out, "I seq={} pc={:#x} kind={}", i.seq, i.pc, i.kind.mnemonic());
        if let Some(d) = i.dst {
            let _ = write!(out, " dst=r{d}");
        }
        if !i.srcs.is_empty() {
            out.push_str(" srcs=");
            for (n, r) in i.srcs.iter().enumerate() {
                if n > 0 {
                    out.push(',');
                }
                let _ = write!(out, "r{r}");
            }
        }
        if let Some(imm) = i.imm {
            let _ = write!(out, " imm={imm}");
        }
        if let Some(op) = i.alu_op {
            let _ = write!(out, " op={op}");
        }
        if let Some(m) = i.mem {
            let _ = write!(out, " addr={:#x} size={} val={:#x}", m.addr, m.size, m.value);
        }
        if let Some(b) = i.br {
            let _ = write!(
                out,
                " br={}:{}",
                if b.taken { "T" } else { "N" },
                if b.predicted_correctly { "hit" } else { "miss" }
            );
        }
        if i.may_fault {
            out.push_str(" fault=1");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_alu_record() {
        let t = parse_trace("H version=1 regs=64\nI seq=0 pc=0x10 kind=ALU dst=r1 srcs=r2,r3 op=ADD\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.instructions[0].kind, Kind::Alu);
        assert_eq!(t.instructions[0].alu_op, Some(AluOp::Add));
        assert_eq!(t.instructions[0].srcs.as_slice(), &[2, 3]);
    }

    #[test]
    fn header_only() {
        let t = parse_trace("# hello\nH version=1 regs=32\n").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.header.arch_regs, 32);
        assert_eq!(t.header.notes, vec!["hello".to_string()]);
    }

    #[test]
    fn bad_size_is_out_of_range() {
        let err =
            parse_trace("H version=1 regs=64\nI seq=0 pc=0x0 kind=LOAD dst=r1 addr=0x40 size=3 val=0x0\n").unwrap_err();
        assert!(matches!(
            err,
            TraceParseError::OutOfRange {
                line: 2,
                field: "size",
                ..
            }
        ));
        assert!(err.to_string().contains("field out of range"));
    }

    #[test]
    fn version_mismatch() {
        assert!(matches!(
            parse_trace("H version=2 regs=64\n"),
            Err(TraceParseError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn register_out_of_range() {
        assert!(matches!(
            parse_trace("H version=1 regs=8\nI seq=0 pc=0x0 kind=ALU dst=r9 imm=1 op=MOV\n"),
            Err(TraceParseError::OutOfRange { field: "dst", .. })
        ));
    }

    #[test]
    fn malformed_line_number_is_reported() {
        let err = parse_trace("H version=1 regs=64\n\nI seq=0 pc=zz kind=NOP\n").unwrap_err();
        assert!(matches!(err, TraceParseError::Malformed { line: 3, .. }));
    }

    #[test]
    fn field_order_is_enforced() {
        assert!(parse_trace("H version=1\nI pc=0x0 seq=0 kind=NOP\n").is_err());
    }

    #[test]
    fn full_record_round_trip() {
        let src = "# n\nH version=1 regs=64\nV reg=r3 val=0x9\n\
                   I seq=0 pc=0x0 kind=STORE srcs=r1,r2 addr=0x100 size=4 val=0x9\n\
                   I seq=1 pc=0x4 kind=BRANCH srcs=r1 br=T:miss fault=1\n\
                   I seq=2 pc=0x8 kind=ALU dst=r4 srcs=r4 imm=-3 op=ADD\n";
        let t = parse_trace(src).unwrap();
        assert_eq!(t.header.init_regs, vec![(3, 9)]);
        assert_eq!(parse_trace(&emit_trace(&t)).unwrap(), t);
        assert_eq!(t.instructions[2].imm, Some(-3));
    }
}
