//! Transient-invisibility checks over memory-hierarchy mutation logs.
//!
//! The observation model is the state of the cache arrays and MSHRs. A run is
//! invisible to an attacker when no record in its log was caused by a load
//! that was still speculative, and a probe run is indistinguishable from its
//! probe-free twin when both leave the same committed-cause log and digest.

use std::fmt;

use crate::cpu::RunResult;
use crate::memhier::{hex_digest, replay_log, CacheConfig, Cause, MutOp, Mutation, Structure};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Records caused by speculative instructions, in log order.
    Fail(Vec<Mutation>),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("PASS"),
            Verdict::Fail(v) => {
                write!(f, "FAIL ({} speculative mutations", v.len())?;
                if let Some(m) = v.first() {
                    write!(f, "; first: {m}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// PASS iff no record was caused by a speculative instruction.
pub fn assert_invisibility(log: &[Mutation]) -> Verdict {
    let bad: Vec<Mutation> = log.iter().filter(|m| m.cause.speculative).copied().collect();
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Position of the first differing record in the filtered logs, if the
    /// logs differ at all.
    pub index: Option<usize>,
    pub left: Option<Mutation>,
    pub right: Option<Mutation>,
    pub digests_differ: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Differential {
    Equal,
    Divergent(Divergence),
}

impl Differential {
    pub fn is_equal(&self) -> bool {
        matches!(self, Differential::Equal)
    }
}

impl fmt::Display for Differential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Differential::Equal => f.write_str("EQUAL"),
            Differential::Divergent(d) => {
                f.write_str("DIVERGENT")?;
                if let Some(i) = d.index {
                    let show = |m: &Option<Mutation>| m.map_or("<end of log>".to_string(), |m| m.to_string());
                    write!(f, " at record {i}: [{}] vs [{}]", show(&d.left), show(&d.right))?;
                }
                if d.digests_differ {
                    f.write_str(" (final digests differ)")?;
                }
                Ok(())
            }
        }
    }
}

/// Records an outside observer can attribute to the program itself: those
/// not caused by injected wrong-path loads.
pub fn committed_view(log: &[Mutation]) -> impl Iterator<Item = &Mutation> {
    log.iter().filter(|m| !m.cause.probe)
}

/// Compares the final hierarchy digests and the committed-cause logs,
/// including the cycle of every record.
pub fn differential_check(a: &RunResult, b: &RunResult) -> Differential {
    let digests_differ = a.digest != b.digest;
    let mut la = committed_view(&a.log);
    let mut lb = committed_view(&b.log);
    let mut index = 0;
    let first = loop {
        match (la.next(), lb.next()) {
            (None, None) => break None,
            (x, y) if x == y => index += 1,
            (x, y) => break Some((x.copied(), y.copied())),
        }
    };
    match first {
        None if !digests_differ => Differential::Equal,
        None => Differential::Divergent(Divergence {
            index: None,
            left: None,
            right: None,
            digests_differ,
        }),
        Some((left, right)) => Differential::Divergent(Divergence {
            index: Some(index),
            left,
            right,
            digests_differ,
        }),
    }
}

/// True when replaying `log` onto empty arrays reproduces `digest`.
pub fn log_is_complete(cfg: &CacheConfig, log: &[Mutation], digest: &[u8; 32]) -> bool {
    replay_log(cfg, log).digest() == *digest
}

/// One record per line, in log order.
pub fn export_log(log: &[Mutation]) -> String {
    let mut out = String::with_capacity(log.len() * 64);
    for m in log {
        out.push_str(&m.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("log line {line}: {reason}")]
pub struct LogParseError {
    pub line: usize,
    pub reason: String,
}

/// Parses the output of [`export_log`].
pub fn parse_log(text: &str) -> Result<Vec<Mutation>, LogParseError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |reason: String| LogParseError { line, reason };
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mut toks = raw.split_whitespace();
        if toks.next() != Some("M") {
            return Err(err("expected a record starting with M".into()));
        }
        let mut get = |key: &str| -> Result<&str, LogParseError> {
            let t = toks.next().ok_or_else(|| err(format!("missing field {key}")))?;
            t.strip_prefix(key)
                .and_then(|t| t.strip_prefix('='))
                .ok_or_else(|| err(format!("expected {key}=, got `{t}`")))
        };
        let num = |s: &str| crate::trace::format_int(s).ok_or_else(|| err(format!("bad number `{s}`")));
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err(format!("bad flag `{s}`"))),
        };
        let cycle = num(get("cycle")?)?;
        let st = get("struct")?;
        let structure = Structure::from_name(st).ok_or_else(|| err(format!("unknown structure `{st}`")))?;
        let op = get("op")?;
        let op = MutOp::from_name(op).ok_or_else(|| err(format!("unknown op `{op}`")))?;
        let line_addr = num(get("line")?)?;
        let seq = num(get("seq")?)?;
        let speculative = flag(get("spec")?)?;
        let probe = flag(get("probe")?)?;
        out.push(Mutation {
            cycle,
            structure,
            op,
            line: line_addr,
            cause: Cause {
                seq,
                speculative,
                probe,
            },
        });
    }
    Ok(out)
}

/// Short human-readable digest of a run's final hierarchy state.
pub fn digest_string(r: &RunResult) -> String {
    hex_digest(&r.digest)
}
