//! Per-policy reports, the energy proxy, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cpu::{Policy, RunResult};

/// Relative, unitless energy weights per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub l1_access: f64,
    pub l2_access: f64,
    pub mem_access: f64,
    pub fu_op: f64,
    pub vp_lookup: f64,
    pub vp_update: f64,
    pub sfile_access: f64,
    pub ibuff_access: f64,
    pub hist_access: f64,
    pub static_per_cycle: f64,
    pub mem_idle_per_cycle: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            l1_access: 1.0,
            l2_access: 10.0,
            mem_access: 100.0,
            fu_op: 0.5,
            vp_lookup: 0.8,
            vp_update: 0.8,
            sfile_access: 0.2,
            ibuff_access: 0.2,
            hist_access: 0.6,
            static_per_cycle: 2.0,
            mem_idle_per_cycle: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WeightsError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

impl EnergyWeights {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "l1_access" => &mut self.l1_access,
            "l2_access" => &mut self.l2_access,
            "mem_access" => &mut self.mem_access,
            "fu_op" => &mut self.fu_op,
            "vp_lookup" => &mut self.vp_lookup,
            "vp_update" => &mut self.vp_update,
            "sfile_access" => &mut self.sfile_access,
            "ibuff_access" => &mut self.ibuff_access,
            "hist_access" => &mut self.hist_access,
            "static_per_cycle" => &mut self.static_per_cycle,
            "mem_idle_per_cycle" => &mut self.mem_idle_per_cycle,
            _ => return None,
        })
    }

    pub fn zero() -> Self {
        EnergyWeights {
            l1_access: 0.0,
            l2_access: 0.0,
            mem_access: 0.0,
            fu_op: 0.0,
            vp_lookup: 0.0,
            vp_update: 0.0,
            sfile_access: 0.0,
            ibuff_access: 0.0,
            hist_access: 0.0,
            static_per_cycle: 0.0,
            mem_idle_per_cycle: 0.0,
        }
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, WeightsError> {
        let mut w = EnergyWeights::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| WeightsError::Malformed { line: n + 1, reason };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let v: f64 = v.parse().map_err(|_| err(format!("bad number `{v}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("{k} must be a non-negative number")));
            }
            *w.slot(k).ok_or_else(|| err(format!("unknown weight `{k}`")))? = v;
        }
        Ok(w)
    }

    pub fn from_file(path: &Path) -> Result<Self, WeightsError> {
        let text = std::fs::read_to_string(path).map_err(|e| WeightsError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// Event counts the energy proxy weighs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyEvents {
    pub cycles: u64,
    pub l1_accesses: u64,
    pub l2_accesses: u64,
    pub mem_accesses: u64,
    pub fu_ops: u64,
    pub vp_lookups: u64,
    pub vp_updates: u64,
    pub sfile_accesses: u64,
    pub ibuff_accesses: u64,
    pub hist_accesses: u64,
}

impl EnergyEvents {
    pub fn of(r: &RunResult) -> Self {
        EnergyEvents {
            cycles: r.cycles,
            l1_accesses: r.mem.l1_accesses,
            l2_accesses: r.mem.l2_accesses,
            mem_accesses: r.mem.mem_accesses,
            fu_ops: r.counters.alu_ops + r.counters.mul_ops + r.vrc.slice_instrs,
            vp_lookups: r.vp.lookups,
            vp_updates: r.vp.updates,
            sfile_accesses: r.vrc.sfile_accesses,
            ibuff_accesses: r.vrc.ibuff_accesses,
            hist_accesses: r.vrc.hist_reads + r.vrc.hist_writes,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Core and cache dynamic energy: L1, L2 and functional units.
    pub dynamic: f64,
    /// Per-cycle leakage of the core and of the idle memory system.
    pub static_: f64,
    /// Off-chip memory accesses.
    pub memory: f64,
    /// Predictor tables and recomputation structures.
    pub overhead: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.dynamic + self.static_ + self.memory + self.overhead
    }
}

pub fn energy_proxy(e: &EnergyEvents, w: &EnergyWeights) -> EnergyBreakdown {
    let f = |n: u64, w: f64| n as f64 * w;
    EnergyBreakdown {
        dynamic: f(e.l1_accesses, w.l1_access) + f(e.l2_accesses, w.l2_access) + f(e.fu_ops, w.fu_op),
        static_: f(e.cycles, w.static_per_cycle + w.mem_idle_per_cycle),
        memory: f(e.mem_accesses, w.mem_access),
        overhead: f(e.vp_lookups, w.vp_lookup)
            + f(e.vp_updates, w.vp_update)
            + f(e.sfile_accesses, w.sfile_access)
            + f(e.ibuff_accesses, w.ibuff_access)
            + f(e.hist_accesses, w.hist_access),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: Policy,
    pub cycles: u64,
    pub committed: u64,
    pub ipc: f64,
    pub normalized_ipc: f64,
    pub shadowed_load_fraction: f64,
    pub mean_shadows_per_load: f64,
    pub l1_miss_ratio: f64,
    pub vp_coverage: f64,
    pub vrc_coverage: f64,
    pub mean_slice_latency: Option<f64>,
    pub energy: EnergyBreakdown,
    pub energy_total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("summarize needs a BASELINE run")]
    MissingBaseline,
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        (n as f64 / d as f64).min(1.0)
    }
}

pub fn report(r: &RunResult, baseline_ipc: f64, w: &EnergyWeights) -> MetricsReport {
    let c = &r.counters;
    let s = &r.shadows;
    let energy = energy_proxy(&EnergyEvents::of(r), w);
    let ipc = r.ipc();
    let mean_slice_latency = (!r.recomputations.is_empty())
        .then(|| r.recomputations.iter().map(|x| x.latency).sum::<u64>() as f64 / r.recomputations.len() as f64);
    MetricsReport {
        policy: r.policy,
        cycles: r.cycles,
        committed: r.committed,
        ipc,
        normalized_ipc: if baseline_ipc > 0.0 { ipc / baseline_ipc } else { 0.0 },
        shadowed_load_fraction: ratio(s.shadowed_loads, s.loads),
        mean_shadows_per_load: if s.loads == 0 {
            0.0
        } else {
            s.shadow_sum as f64 / s.loads as f64
        },
        l1_miss_ratio: r.l1_miss_ratio(),
        vp_coverage: ratio(c.predicted, c.shadowed_l1_misses),
        vrc_coverage: ratio(c.recompute_decisions, c.shadowed_l1_misses),
        mean_slice_latency,
        energy_total: energy.total(),
        energy,
    }
}

/// Reports for every run, normalized to the BASELINE run, in policy order.
pub fn summarize(runs: &BTreeMap<Policy, RunResult>, w: &EnergyWeights) -> Result<Vec<MetricsReport>, MetricsError> {
    let base = runs.get(&Policy::Baseline).ok_or(MetricsError::MissingBaseline)?;
    let base_ipc = base.ipc();
    Ok(Policy::ALL
        .iter()
        .filter_map(|p| runs.get(p))
        .map(|r| report(r, base_ipc, w))
        .collect())
}

pub const CSV_COLUMNS: [&str; 17] = [
    "policy",
    "cycles",
    "committed",
    "ipc",
    "normalized_ipc",
    "shadowed_load_fraction",
    "mean_shadows_per_load",
    "l1_miss_ratio",
    "vp_coverage",
    "vrc_coverage",
    "mean_slice_latency",
    "energy_total",
    "energy_dynamic",
    "energy_static",
    "energy_memory",
    "energy_overhead",
    "normalized_energy",
];

fn fields(r: &MetricsReport, base_energy: f64) -> Vec<String> {
    let f = |x: f64| format!("{x:.6}");
    vec![
        r.policy.name().to_string(),
        r.cycles.to_string(),
        r.committed.to_string(),
        f(r.ipc),
        f(r.normalized_ipc),
        f(r.shadowed_load_fraction),
        f(r.mean_shadows_per_load),
        f(r.l1_miss_ratio),
        f(r.vp_coverage),
        f(r.vrc_coverage),
        r.mean_slice_latency.map(f).unwrap_or_default(),
        f(r.energy_total),
        f(r.energy.dynamic),
        f(r.energy.static_),
        f(r.energy.memory),
        f(r.energy.overhead),
        f(if base_energy > 0.0 {
            r.energy_total / base_energy
        } else {
            0.0
        }),
    ]
}

fn base_energy(reports: &[MetricsReport]) -> f64 {
    reports
        .iter()
        .find(|r| r.policy == Policy::Baseline)
        .map_or(0.0, |r| r.energy_total)
}

pub fn to_csv(reports: &[MetricsReport]) -> String {
    let be = base_energy(reports);
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        out.push_str(&fields(r, be).join(","));
        out.push('\n');
    }
    out
}

pub fn to_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

/// Aligned plain-text comparison table.
pub fn to_table(reports: &[MetricsReport]) -> String {
    const COLS: [(&str, usize); 9] = [
        ("policy", 0),
        ("cycles", 1),
        ("ipc", 3),
        ("norm_ipc", 4),
        ("l1_miss", 7),
        ("vp_cov", 8),
        ("vrc_cov", 9),
        ("slice_lat", 10),
        ("norm_energy", 16),
    ];
    let be = base_energy(reports);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let f = fields(r, be);
            COLS.iter()
                .map(|&(_, i)| match f[i].as_str() {
                    "" => "-".to_string(),
                    s if i >= 3 => format!("{:.3}", s.parse::<f64>().unwrap_or(0.0)),
                    s => s.to_string(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = COLS
        .iter()
        .enumerate()
        .map(|(c, (h, _))| rows.iter().map(|r| r[c].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
    };
    line(&mut out, COLS.iter().map(|(h, _)| *h).collect());
    for r in &rows {
        line(&mut out, r.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_events_leave_only_static() {
        let e = EnergyEvents {
            cycles: 10,
            ..Default::default()
        };
        let b = energy_proxy(&e, &EnergyWeights::default());
        assert_eq!((b.dynamic, b.memory, b.overhead), (0.0, 0.0, 0.0));
        assert!(b.static_ > 0.0);
    }

    #[test]
    fn doubling_cycles_only_scales_static() {
        let e = EnergyEvents {
            cycles: 100,
            l1_accesses: 7,
            mem_accesses: 3,
            fu_ops: 11,
            hist_accesses: 2,
            ..Default::default()
        };
        let w = EnergyWeights::default();
        let a = energy_proxy(&e, &w);
        let b = energy_proxy(&EnergyEvents { cycles: 200, ..e }, &w);
        assert_eq!(b.static_, 2.0 * a.static_);
        assert_eq!((a.dynamic, a.memory, a.overhead), (b.dynamic, b.memory, b.overhead));
    }

    #[test]
    fn zero_weights_zero_total() {
        let e = EnergyEvents {
            cycles: 100,
            l1_accesses: 7,
            mem_accesses: 3,
            ..Default::default()
        };
        assert_eq!(energy_proxy(&e, &EnergyWeights::zero()).total(), 0.0);
    }

    #[test]
    fn weights_file_matches_defaults() {
        let text = include_str!("../config/energy_weights.conf");
        let w = EnergyWeights::parse(text).unwrap();
        assert_eq!(w, EnergyWeights::default());
        assert_eq!(w.mem_access, 100.0 * w.l1_access);
    }

    #[test]
    fn weights_parse_errors() {
        assert!(EnergyWeights::parse("bogus = 1").is_err());
        assert!(EnergyWeights::parse("l1_access = x").is_err());
        assert!(EnergyWeights::parse("l1_access = -1").is_err());
        assert_eq!(EnergyWeights::parse("l1_access = 2 # doubled").unwrap().l1_access, 2.0);
    }

    #[test]
    fn summarize_needs_baseline() {
        assert_eq!(
            summarize(&BTreeMap::new(), &EnergyWeights::default()),
            Err(MetricsError::MissingBaseline)
        );
    }
}
