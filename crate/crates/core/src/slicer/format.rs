//! Annotation file format.
//!
//! ```text
//! A version=1
//! S slice_id=0 tag=0x3040 len=2 immutable=1 size=8
//!   MUL h:0 c:0x3
//!   ADD t:0 h:1
//! R pc=0x3080 slice=0
//! P store=57 slice=0 tag=0x50000800 size=8 keys=41,42 uses=1
//! C seq=41 key=41 val=0x1f
//! ```
//!
//! `S` records a slice shape (its `tag` is the producer store pc) followed by
//! one indented line per instruction. `R` maps a load pc to its slice, `P`
//! binds a dynamic producer store to a slice and its checkpoint keys, and `C`
//! lists a checkpoint taken when the instruction at `seq` commits. Records
//! are emitted in ascending key order.

use std::fmt::Write as _;

use smallvec::SmallVec;

use super::{AnnotationTable, Operand, SliceInstance, SliceInstr, SliceShape};
use crate::trace::AluOp;

const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing annotation header")]
    MissingHeader,
    #[error("annotation version {0} is not supported")]
    Version(u32),
    #[error("{what} references missing slice_id {id}")]
    MissingSlice { what: String, id: u32 },
}

fn malformed(line: usize, reason: impl Into<String>) -> AnnotationParseError {
    AnnotationParseError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn int(line: usize, s: &str) -> Result<u64, AnnotationParseError> {
    crate::trace::format_int(s).ok_or_else(|| malformed(line, format!("bad integer `{s}`")))
}

fn fields<'a>(
    line: usize,
    toks: impl Iterator<Item = &'a str>,
) -> Result<Vec<(&'a str, &'a str)>, AnnotationParseError> {
    toks.map(|t| {
        t.split_once('=')
            .ok_or_else(|| malformed(line, format!("expected key=value, got `{t}`")))
    })
    .collect()
}

fn field<'a>(line: usize, f: &[(&'a str, &'a str)], key: &str) -> Result<&'a str, AnnotationParseError> {
    f.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| malformed(line, format!("missing field `{key}`")))
}

fn operand(line: usize, s: &str) -> Result<Operand, AnnotationParseError> {
    let (kind, v) = s
        .split_once(':')
        .ok_or_else(|| malformed(line, format!("bad operand `{s}`")))?;
    let n = int(line, v)?;
    let small = |n: u64| u16::try_from(n).map_err(|_| malformed(line, format!("operand `{s}` out of range")));
    Ok(match kind {
        "c" => Operand::Const(n),
        "r" => Operand::LiveReg(u8::try_from(n).map_err(|_| malformed(line, format!("register `{s}` out of range")))?),
        "h" => Operand::Hist(small(n)?),
        "t" => Operand::Temp(small(n)?),
        _ => return Err(malformed(line, format!("bad operand kind `{kind}`"))),
    })
}

pub fn emit_annotations(a: &AnnotationTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "A version={VERSION}");
    for s in a.slices.values() {
        let _ = writeln!(
            out,
            "S slice_id={} tag={:#x} len={} immutable={} size={}",
            s.slice_id,
            s.tag,
            s.instrs.len(),
            s.immutable as u8,
            s.size
        );
        for i in &s.instrs {
            out.push_str("  ");
            out.push_str(i.op.mnemonic());
            for o in &i.srcs {
                let _ = write!(out, " {o}");
            }
            out.push('\n');
        }
    }
    for (pc, id) in &a.rcmp {
        let _ = writeln!(out, "R pc={pc:#x} slice={id}");
    }
    for (seq, p) in &a.instances {
        let keys: Vec<String> = p.keys.iter().map(u64::to_string).collect();
        let _ = write!(
            out,
            "P store={seq} slice={} tag={:#x} size={}",
            p.slice_id, p.addr, p.size
        );
        if !keys.is_empty() {
            let _ = write!(out, " keys={}", keys.join(","));
        }
        let _ = writeln!(out, " uses={}", p.uses);
    }
    for (seq, recs) in &a.rec {
        for (key, val) in recs {
            let _ = writeln!(out, "C seq={seq} key={key} val={val:#x}");
        }
    }
    out
}

pub fn load_annotations(input: &str) -> Result<AnnotationTable, AnnotationParseError> {
    let mut table = AnnotationTable::default();
    let mut header = false;
    let mut open: Option<(SliceShape, usize)> = None;

    fn close(
        table: &mut AnnotationTable,
        open: &mut Option<(SliceShape, usize)>,
        line: usize,
    ) -> Result<(), AnnotationParseError> {
        if let Some((s, len)) = open.take() {
            if s.instrs.len() != len {
                return Err(malformed(
                    line,
                    format!("slice {} declares len={len}, has {}", s.slice_id, s.instrs.len()),
                ));
            }
            table.slices.insert(s.slice_id, s);
        }
        Ok(())
    }

    for (n, raw) in input.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        if raw.starts_with(' ') || raw.starts_with('\t') {
            let Some((shape, _)) = open.as_mut() else {
                return Err(malformed(line, "instruction outside a slice"));
            };
            let mut toks = raw.split_whitespace();
            let op = toks.next().unwrap_or_default();
            let op = AluOp::from_mnemonic(op).ok_or_else(|| malformed(line, format!("unknown op `{op}`")))?;
            let srcs: SmallVec<[Operand; 3]> = toks.map(|t| operand(line, t)).collect::<Result<_, _>>()?;
            if srcs.len() != op.arity() {
                return Err(malformed(line, format!("{op} expects {} operands", op.arity())));
            }
            let pos = shape.instrs.len() as u16;
            if srcs.iter().any(|o| matches!(o, Operand::Temp(t) if *t >= pos)) {
                return Err(malformed(line, "temp operand does not refer to an earlier instruction"));
            }
            shape.instrs.push(SliceInstr { op, srcs });
            continue;
        }
        close(&mut table, &mut open, line)?;
        let mut toks = raw.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        let f = fields(line, toks)?;
        if !header {
            if tag != "A" {
                return Err(AnnotationParseError::MissingHeader);
            }
            let v = int(line, field(line, &f, "version")?)? as u32;
            if v != VERSION {
                return Err(AnnotationParseError::Version(v));
            }
            header = true;
            continue;
        }
        match tag {
            "S" => {
                let id = int(line, field(line, &f, "slice_id")?)? as u32;
                if table.slices.contains_key(&id) {
                    return Err(malformed(line, format!("duplicate slice_id {id}")));
                }
                let shape = SliceShape {
                    slice_id: id,
                    tag: int(line, field(line, &f, "tag")?)?,
                    size: int(line, field(line, &f, "size")?)? as u8,
                    immutable: int(line, field(line, &f, "immutable")?)? != 0,
                    instrs: Vec::new(),
                };
                let len = int(line, field(line, &f, "len")?)? as usize;
                open = Some((shape, len));
            }
            "R" => {
                let pc = int(line, field(line, &f, "pc")?)?;
                let id = int(line, field(line, &f, "slice")?)? as u32;
                if table.rcmp.insert(pc, id).is_some() {
                    return Err(malformed(line, format!("load pc {pc:#x} mapped twice")));
                }
            }
            "P" => {
                let seq = int(line, field(line, &f, "store")?)?;
                let keys = match f.iter().find(|(k, _)| *k == "keys") {
                    Some((_, v)) => v.split(',').map(|k| int(line, k)).collect::<Result<_, _>>()?,
                    None => Vec::new(),
                };
                table.instances.insert(
                    seq,
                    SliceInstance {
                        slice_id: int(line, field(line, &f, "slice")?)? as u32,
                        addr: int(line, field(line, &f, "tag")?)?,
                        size: int(line, field(line, &f, "size")?)? as u8,
                        keys,
                        uses: int(line, field(line, &f, "uses")?)? as u32,
                    },
                );
            }
            "C" => {
                let seq = int(line, field(line, &f, "seq")?)?;
                let key = int(line, field(line, &f, "key")?)?;
                let val = int(line, field(line, &f, "val")?)?;
                table.rec.entry(seq).or_default().push((key, val));
            }
            other => return Err(malformed(line, format!("unknown record `{other}`"))),
        }
    }
    close(&mut table, &mut open, input.lines().count())?;
    if !header {
        return Err(AnnotationParseError::MissingHeader);
    }
    for (pc, id) in &table.rcmp {
        if !table.slices.contains_key(id) {
            return Err(AnnotationParseError::MissingSlice {
                what: format!("load pc {pc:#x}"),
                id: *id,
            });
        }
    }
    for (seq, p) in &table.instances {
        let Some(s) = table.slices.get(&p.slice_id) else {
            return Err(AnnotationParseError::MissingSlice {
                what: format!("producer store {seq}"),
                id: p.slice_id,
            });
        };
        if p.keys.len() < s.hist_slots() {
            return Err(malformed(
                0,
                format!(
                    "producer store {seq} binds {} of {} history slots",
                    p.keys.len(),
                    s.hist_slots()
                ),
            ));
        }
    }
    Ok(table)
}
