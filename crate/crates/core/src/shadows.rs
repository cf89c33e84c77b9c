//! Speculative shadow tracking.
//!
//! Shadow casters occupy a circular shadow buffer (SB) in dispatch order and
//! loads wait in a FIFO release queue (RQ), each tagged with the SB tail at
//! its dispatch. A load is unshadowed once the SB head has moved past its
//! tag. No associative search is needed: the RQ is drained from its head.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShadowKind {
    /// Exception: an older instruction may still fault.
    E,
    /// Control: an older branch is unresolved.
    C,
    /// Data: an older store has an unknown address.
    D,
    /// Memory ordering: an older load has not performed (TSO only).
    M,
    /// Value prediction: an older predicted load is unvalidated.
    VP,
}

impl ShadowKind {
    pub const ALL: [ShadowKind; 5] = [
        ShadowKind::E,
        ShadowKind::C,
        ShadowKind::D,
        ShadowKind::M,
        ShadowKind::VP,
    ];
}

impl fmt::Display for ShadowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type SbId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ShadowError {
    #[error("shadow buffer full")]
    SbFull,
    #[error("release queue full")]
    RqFull,
    #[error("unknown shadow id {0}")]
    Unknown(SbId),
    #[error("shadow {0} resolved twice")]
    DoubleResolve(SbId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SbEntry {
    id: SbId,
    kind: ShadowKind,
    resolved: bool,
    caster: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RqEntry {
    load: u64,
    sb_id: SbId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowStats {
    pub loads: u64,
    pub shadowed_loads: u64,
    /// Sum over loads of the unresolved shadows live at registration.
    pub shadow_sum: u64,
    pub casts: [u64; 5],
}

impl ShadowStats {
    pub fn shadowed_fraction(&self) -> f64 {
        if self.loads == 0 {
            0.0
        } else {
            self.shadowed_loads as f64 / self.loads as f64
        }
    }

    pub fn mean_shadows_per_load(&self) -> f64 {
        if self.loads == 0 {
            0.0
        } else {
            self.shadow_sum as f64 / self.loads as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShadowState {
    sb: VecDeque<SbEntry>,
    rq: VecDeque<RqEntry>,
    next_id: SbId,
    unresolved: usize,
    sb_capacity: usize,
    rq_capacity: usize,
    stats: ShadowStats,
}

impl ShadowState {
    pub fn new(sb_capacity: usize, rq_capacity: usize) -> Self {
        ShadowState {
            sb: VecDeque::new(),
            rq: VecDeque::new(),
            next_id: 0,
            unresolved: 0,
            sb_capacity,
            rq_capacity,
            stats: ShadowStats::default(),
        }
    }

    /// A tracker with no capacity limits, for runs that only observe shadows.
    pub fn unbounded() -> Self {
        ShadowState::new(usize::MAX, usize::MAX)
    }

    pub fn stats(&self) -> &ShadowStats {
        &self.stats
    }

    pub fn sb_len(&self) -> usize {
        self.sb.len()
    }

    pub fn rq_len(&self) -> usize {
        self.rq.len()
    }

    pub fn sb_full(&self) -> bool {
        self.sb.len() >= self.sb_capacity
    }

    pub fn rq_full(&self) -> bool {
        self.rq.len() >= self.rq_capacity
    }

    /// Id of the oldest unresolved entry; `SbId::MAX` when nothing is live.
    pub fn head(&self) -> SbId {
        self.sb.front().map_or(SbId::MAX, |e| e.id)
    }

    /// Whether any shadow is currently live.
    pub fn any_live(&self) -> bool {
        !self.sb.is_empty()
    }

    pub fn cast(&mut self, kind: ShadowKind, caster: u64) -> Result<SbId, ShadowError> {
        if self.sb_full() {
            return Err(ShadowError::SbFull);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.sb.push_back(SbEntry {
            id,
            kind,
            resolved: false,
            caster,
        });
        self.unresolved += 1;
        self.stats.casts[kind as usize] += 1;
        Ok(id)
    }

    /// Returns `true` when the load is unshadowed immediately.
    pub fn register_load(&mut self, load: u64) -> Result<bool, ShadowError> {
        self.stats.loads += 1;
        let Some(tail) = self.sb.back() else {
            return Ok(true);
        };
        if self.rq_full() {
            self.stats.loads -= 1;
            return Err(ShadowError::RqFull);
        }
        self.stats.shadowed_loads += 1;
        self.stats.shadow_sum += self.unresolved as u64;
        self.rq.push_back(RqEntry { load, sb_id: tail.id });
        Ok(false)
    }

    fn position(&self, id: SbId) -> Result<usize, ShadowError> {
        match self.sb.binary_search_by_key(&id, |e| e.id) {
            Ok(i) => Ok(i),
            Err(_) if id < self.next_id => Err(ShadowError::DoubleResolve(id)),
            Err(_) => Err(ShadowError::Unknown(id)),
        }
    }

    pub fn resolve(&mut self, id: SbId) -> Result<(), ShadowError> {
        let i = self.position(id)?;
        let e = &mut self.sb[i];
        if e.resolved {
            return Err(ShadowError::DoubleResolve(id));
        }
        e.resolved = true;
        self.unresolved -= 1;
        while self.sb.front().is_some_and(|e| e.resolved) {
            self.sb.pop_front();
        }
        Ok(())
    }

    pub fn is_resolved(&self, id: SbId) -> bool {
        match self.sb.binary_search_by_key(&id, |e| e.id) {
            Ok(i) => self.sb[i].resolved,
            Err(_) => id < self.next_id,
        }
    }

    pub fn kind(&self, id: SbId) -> Option<ShadowKind> {
        self.sb
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| self.sb[i].kind)
    }

    /// Changes the kind of a live entry (an M entry becomes VP once its load is predicted).
    pub fn relabel(&mut self, id: SbId, kind: ShadowKind) -> Result<(), ShadowError> {
        let i = self.position(id)?;
        let e = &mut self.sb[i];
        self.stats.casts[e.kind as usize] -= 1;
        self.stats.casts[kind as usize] += 1;
        e.kind = kind;
        Ok(())
    }

    /// Pops every load whose tag the head has passed, in dispatch order.
    pub fn poll_unshadowed(&mut self) -> Vec<u64> {
        let mut out = Vec::new();
        self.poll_into(&mut out);
        out
    }

    pub fn poll_into(&mut self, out: &mut Vec<u64>) {
        let head = self.head();
        while let Some(e) = self.rq.front() {
            if e.sb_id >= head {
                break;
            }
            out.push(e.load);
            self.rq.pop_front();
        }
    }

    /// Drops every SB entry cast by, and every RQ entry for, an instruction
    /// at or after `first` in dispatch order.
    pub fn squash_from(&mut self, first: u64) {
        while self.sb.back().is_some_and(|e| e.caster >= first) {
            if let Some(e) = self.sb.pop_back() {
                if !e.resolved {
                    self.unresolved -= 1;
                }
            }
        }
        while self.sb.back().is_some_and(|e| e.resolved) {
            self.sb.pop_back();
        }
        while self.rq.back().is_some_and(|e| e.load >= first) {
            self.rq.pop_back();
        }
    }
}

/// Brute-force reference: a load is shadowed iff any shadow cast before it
/// was registered is still unresolved.
#[derive(Debug, Clone, Default)]
pub struct ShadowOracle {
    resolved: Vec<bool>,
    loads: Vec<(u64, usize)>,
}

impl ShadowOracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of the new cast; it equals the SB id from a fresh
    /// `ShadowState` fed the same events.
    pub fn cast(&mut self) -> usize {
        self.resolved.push(false);
        self.resolved.len() - 1
    }

    pub fn resolve(&mut self, idx: usize) {
        self.resolved[idx] = true;
    }

    pub fn register_load(&mut self, load: u64) {
        self.loads.push((load, self.resolved.len()));
    }

    pub fn is_shadowed(&self, load: u64) -> bool {
        self.loads
            .iter()
            .find(|(l, _)| *l == load)
            .is_some_and(|&(_, n)| self.resolved[..n].iter().any(|r| !r))
    }
}
