//! Command-line harness: `gen`, `slice`, `compare`, `audit`.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `key = value` lines whose keys are the long flag names, then the flags.
//! Exit codes: 0 success, 1 usage, 2 input error, 3 audit failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{assert_invisibility, differential_check, export_log, Differential, Verdict};
use crate::cpu::{inject_transient_probe, run, Consistency, Policy, ProbeSpec, RunResult, SimConfig};
use crate::exec::{map_jobs, run_policies};
use crate::metrics::{summarize, to_csv, to_json, to_table, EnergyWeights};
use crate::slicer::{annotate, emit_annotations, load_annotations, AnnotationTable};
use crate::trace::{emit_trace, gen_synthetic, parse_trace, Kind, Pattern, SyntheticWorkloadSpec, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_AUDIT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
        }
    }
}

fn usage(s: impl Into<String>) -> CliError {
    CliError::Usage(s.into())
}

fn input(s: impl Into<String>) -> CliError {
    CliError::Input(s.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "vrcsim",
    version,
    about = "Out-of-order core simulator with Delay-on-Miss, value prediction and value recomputation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic trace.
    Gen(GenArgs),
    /// Build slice annotations for a trace.
    Slice(SliceArgs),
    /// Run policies on a trace and report metrics (BASELINE is always included).
    Compare(RunArgs),
    /// Run probe/no-probe pairs and check transient invisibility.
    Audit(RunArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// chase, stream, compute or mixed.
    #[arg(long, default_value = "mixed")]
    pub pattern: String,
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fraction of stored values produced by recomputable ALU chains.
    #[arg(long)]
    pub recomputable: Option<f64>,
    #[arg(long)]
    pub mispredict_rate: Option<f64>,
    #[arg(long)]
    pub working_set: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    #[arg(long)]
    pub skip: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Annotation output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    /// Trace file. Without it a synthetic trace is generated from --pattern, --count and --seed.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Annotation file. Built from the trace when absent and a VRC policy runs.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Policy to run; repeatable. Defaults to all seven.
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub skip: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mem_latency: Option<u64>,
    #[arg(long)]
    pub consistency: Option<String>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// branch=<seq>,loads=<hex,...>
    #[arg(long)]
    pub probe: Option<String>,
    #[arg(long)]
    pub pattern: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub energy_weights: Option<PathBuf>,
}

/// Fully resolved settings of a `compare` or `audit` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub trace: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub policies: Vec<Policy>,
    pub seed: u64,
    pub skip: usize,
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
    pub max_len: usize,
    pub probe: Option<ProbeSpec>,
    pub pattern: Pattern,
    pub count: usize,
    pub energy_weights: Option<PathBuf>,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trace: None,
            annotations: None,
            policies: Policy::ALL.to_vec(),
            seed: 1,
            skip: 0,
            limit: None,
            out: None,
            max_len: 100,
            probe: None,
            pattern: Pattern::Mixed,
            count: 10_000,
            energy_weights: None,
            sim: SimConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    let v = v.trim();
    let parsed = match v.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok().and_then(|n| n.to_string().parse().ok()),
        None => v.parse().ok(),
    };
    parsed.ok_or_else(|| usage(format!("{key}: bad value `{v}`")))
}

fn parse_policies(list: &[String]) -> Result<Vec<Policy>, CliError> {
    let mut out = Vec::new();
    for item in list {
        for name in item.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            out.push(Policy::from_name(name).ok_or_else(|| usage(format!("unknown policy `{name}`")))?);
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys are long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let k = key.trim().trim_start_matches("--").replace('_', "-");
        let v = value.trim();
        let c = &mut self.sim;
        match k.as_str() {
            "trace" => self.trace = Some(PathBuf::from(v)),
            "annotations" => self.annotations = Some(PathBuf::from(v)),
            "policy" | "policies" => self.policies = parse_policies(&[v.to_string()])?,
            "seed" => self.seed = parse_num(&k, v)?,
            "skip" => self.skip = parse_num(&k, v)?,
            "limit" => self.limit = Some(parse_num(&k, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "max-len" => self.max_len = parse_num(&k, v)?,
            "probe" => self.probe = Some(ProbeSpec::parse(v).map_err(usage)?),
            "pattern" => self.pattern = Pattern::from_name(v).ok_or_else(|| usage(format!("unknown pattern `{v}`")))?,
            "count" => self.count = parse_num(&k, v)?,
            "energy-weights" => self.energy_weights = Some(PathBuf::from(v)),
            "consistency" => {
                c.core.consistency = Consistency::from_name(v)
                    .ok_or_else(|| usage(format!("consistency must be tso or rc, got `{v}`")))?
            }
            "mem-latency" => c.cache.mem_latency = parse_num(&k, v)?,
            "width" => c.core.width = parse_num(&k, v)?,
            "rob" => c.core.rob = parse_num(&k, v)?,
            "iq" => c.core.iq = parse_num(&k, v)?,
            "lq" => c.core.lq = parse_num(&k, v)?,
            "sq" => c.core.sq = parse_num(&k, v)?,
            "alus" => c.core.alus = parse_num(&k, v)?,
            "muls" => c.core.muls = parse_num(&k, v)?,
            "ls-ports" => c.core.ls_ports = parse_num(&k, v)?,
            "redirect-penalty" => c.core.redirect_penalty = parse_num(&k, v)?,
            "l1-bytes" => c.cache.l1_bytes = parse_num(&k, v)?,
            "l1-ways" => c.cache.l1_ways = parse_num(&k, v)?,
            "l1-latency" => c.cache.l1_latency = parse_num(&k, v)?,
            "l2-bytes" => c.cache.l2_bytes = parse_num(&k, v)?,
            "l2-ways" => c.cache.l2_ways = parse_num(&k, v)?,
            "l2-latency" => c.cache.l2_latency = parse_num(&k, v)?,
            "mshrs" => c.cache.mshrs = parse_num(&k, v)?,
            "vp-latency" => c.vp.latency = parse_num(&k, v)?,
            "vp-entries" => c.vp.entries = parse_num(&k, v)?,
            "hist-capacity" => c.vrc.hist_capacity = parse_num(&k, v)?,
            "queue-depth" => c.vrc.queue_depth = parse_num(&k, v)?,
            "signature-bits" => c.vrc.signature_bits = Some(parse_num(&k, v)?),
            _ => return Err(usage(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_file_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the config file named by `--config`, then the flags.
    pub fn resolve(a: &RunArgs) -> Result<Self, CliError> {
        let mut c = ExperimentConfig::default();
        if let Some(p) = &a.config {
            let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            c.apply_file_text(&text)?;
        }
        let flags: [(&str, Option<String>); 12] = [
            ("trace", a.trace.as_ref().map(|p| p.display().to_string())),
            ("annotations", a.annotations.as_ref().map(|p| p.display().to_string())),
            ("seed", a.seed.map(|x| x.to_string())),
            ("skip", a.skip.map(|x| x.to_string())),
            ("limit", a.limit.map(|x| x.to_string())),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("mem-latency", a.mem_latency.map(|x| x.to_string())),
            ("consistency", a.consistency.clone()),
            ("max-len", a.max_len.map(|x| x.to_string())),
            ("probe", a.probe.clone()),
            ("pattern", a.pattern.clone()),
            ("count", a.count.map(|x| x.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        if let Some(p) = &a.energy_weights {
            c.energy_weights = Some(p.clone());
        }
        if !a.policies.is_empty() {
            c.policies = parse_policies(&a.policies)?;
        }
        c.sim.validate().map_err(usage)?;
        Ok(c)
    }

    pub fn load_trace(&self) -> Result<Trace, CliError> {
        let t = match &self.trace {
            Some(p) => read_trace(p)?,
            None => {
                let spec = SyntheticWorkloadSpec::new(self.pattern, self.count, self.seed);
                gen_synthetic(&spec).map_err(|e| usage(e.to_string()))?
            }
        };
        Ok(if self.skip > 0 || self.limit.is_some() {
            t.window(self.skip, self.limit)
        } else {
            t
        })
    }

    pub fn load_annotations(&self, t: &Trace) -> Result<AnnotationTable, CliError> {
        match &self.annotations {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
                load_annotations(&text).map_err(|e| input(format!("{}: {e}", p.display())))
            }
            None => Ok(annotate(t, self.max_len).0),
        }
    }

    pub fn weights(&self) -> Result<EnergyWeights, CliError> {
        match &self.energy_weights {
            Some(p) => EnergyWeights::from_file(p).map_err(|e| input(e.to_string())),
            None => Ok(EnergyWeights::default()),
        }
    }

    fn sim_for_run(&self) -> SimConfig {
        let mut s = self.sim.clone();
        s.vp.seed ^= self.seed;
        s
    }
}

fn read_trace(p: &Path) -> Result<Trace, CliError> {
    let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
    parse_trace(&text).map_err(|e| input(format!("{}: {e}", p.display())))
}

fn write_file(p: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(p, text).map_err(|e| input(format!("{}: {e}", p.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| input(format!("write failed: {e}")))
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pattern = Pattern::from_name(&a.pattern).ok_or_else(|| usage(format!("unknown pattern `{}`", a.pattern)))?;
    let mut spec = SyntheticWorkloadSpec::new(pattern, a.count, a.seed);
    if let Some(f) = a.recomputable {
        spec.recomputable_fraction = f;
    }
    if let Some(m) = a.mispredict_rate {
        spec.mispredict_rate = m;
    }
    if let Some(w) = a.working_set {
        spec.working_set_bytes = w;
    }
    let t = gen_synthetic(&spec).map_err(|e| usage(e.to_string()))?;
    let text = emit_trace(&t);
    match &a.out {
        Some(p) => write_file(p, &text),
        None => emit(out, &text),
    }
}

pub fn cmd_slice(a: &SliceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if a.max_len == 0 {
        return Err(usage("--max-len must be at least 1"));
    }
    let mut t = read_trace(&a.trace)?;
    if a.skip.is_some() || a.limit.is_some() {
        t = t.window(a.skip.unwrap_or(0), a.limit);
    }
    let (ann, stats) = annotate(&t, a.max_len);
    let text = emit_annotations(&ann);
    let summary = format!(
        "loads={} stored_value_loads={} covered_loads={} annotated_pcs={} static_coverage={:.4} dynamic_coverage={:.4} mean_len={:.2} max_len={}\n",
        stats.dynamic_loads,
        stats.stored_value_loads,
        stats.covered_loads,
        stats.annotated_pcs,
        stats.static_coverage(),
        stats.dynamic_coverage(),
        stats.mean_len,
        stats.max_len
    );
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            emit(out, &summary)
        }
        None => {
            emit(out, &text)?;
            emit(err, &summary)
        }
    }
}

fn with_baseline(ps: &[Policy]) -> Vec<Policy> {
    let mut v = ps.to_vec();
    v.push(Policy::Baseline);
    v.sort();
    v.dedup();
    v
}

fn needs_annotations(ps: &[Policy]) -> bool {
    ps.iter().any(|p| p.needs_annotations())
}

pub fn cmd_compare(c: &ExperimentConfig, out: &mut dyn Write) -> Result<BTreeMap<Policy, RunResult>, CliError> {
    let t = c.load_trace()?;
    let policies = with_baseline(&c.policies);
    let ann = if needs_annotations(&policies) {
        Some(c.load_annotations(&t)?)
    } else {
        None
    };
    let weights = c.weights()?;
    let runs = run_policies(&t, ann.as_ref(), &c.sim_for_run(), &policies).map_err(|e| input(e.to_string()))?;
    let reports = summarize(&runs, &weights).map_err(|e| input(e.to_string()))?;
    let table = to_table(&reports);
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("metrics.csv"), &to_csv(&reports))?;
        write_file(&dir.join("metrics.json"), &to_json(&reports))?;
        write_file(&dir.join("table.txt"), &table)?;
    }
    emit(out, &table)?;
    Ok(runs)
}

/// Mispredicted branches that wait on a load (directly or through one ALU
/// op), so wrong-path loads have time to issue before the branch resolves.
/// Sites from the middle third of the trace come first.
pub fn probe_sites(t: &Trace) -> Vec<u64> {
    let mut writer: Vec<Option<usize>> = vec![None; t.header.arch_regs.max(1) as usize];
    let fed_by_load = |w: &[Option<usize>], r: u8| -> bool {
        w.get(r as usize)
            .copied()
            .flatten()
            .is_some_and(|i| t.instructions[i].kind == Kind::Load)
    };
    let mut late = Vec::new();
    let mut other = Vec::new();
    for (i, inst) in t.instructions.iter().enumerate() {
        if inst.is_mispredicted_branch() {
            let slow = inst.srcs.iter().any(|&r| {
                fed_by_load(&writer, r)
                    || writer.get(r as usize).copied().flatten().is_some_and(|j| {
                        let p = &t.instructions[j];
                        p.kind == Kind::Alu && p.srcs.iter().any(|&q| fed_by_load(&writer, q))
                    })
            });
            if slow {
                late.push(inst.seq)
            } else {
                other.push(inst.seq)
            }
        }
        if let Some(d) = inst.dst {
            if let Some(w) = writer.get_mut(d as usize) {
                *w = Some(i);
            }
        }
    }
    let mid = t.len() as u64 / 3;
    let (mut a, b): (Vec<u64>, Vec<u64>) = late.into_iter().partition(|&s| s >= mid);
    a.extend(b);
    a.extend(other);
    a
}

/// A line-aligned address range the trace never touches.
pub fn untouched_base(t: &Trace) -> u64 {
    let top = t
        .instructions
        .iter()
        .filter_map(|i| i.mem.map(|m| m.end()))
        .max()
        .unwrap_or(0);
    (top + 0x10_0000) & !0xFFFF
}

/// The first probe site, probed with two lines the trace never touches.
pub fn default_probe(t: &Trace) -> Option<ProbeSpec> {
    let branch = *probe_sites(t).first()?;
    let base = untouched_base(t);
    Some(ProbeSpec {
        branch,
        loads: vec![base, base + 0x1040],
    })
}

#[derive(Debug, Clone)]
pub struct AuditRow {
    pub policy: Policy,
    pub differential: Differential,
    pub invisibility: Verdict,
    pub probes_dispatched: u64,
}

impl AuditRow {
    /// Secure policies must be both indistinguishable and invisible.
    pub fn failed(&self) -> bool {
        self.policy.is_secure() && !(self.differential.is_equal() && self.invisibility.passed())
    }
}

pub fn audit_rows(
    t: &Trace,
    ann: Option<&AnnotationTable>,
    sim: &SimConfig,
    policies: &[Policy],
    probe: &ProbeSpec,
) -> Result<Vec<(AuditRow, RunResult)>, CliError> {
    let results = map_jobs(policies, |&p| {
        let cfg = sim.with_policy(p);
        let plain = run(t, ann, &cfg)?;
        let probed = inject_transient_probe(t, ann, &cfg, probe)?;
        Ok::<_, crate::cpu::SimError>((
            AuditRow {
                policy: p,
                differential: differential_check(&plain, &probed),
                invisibility: assert_invisibility(&probed.log),
                probes_dispatched: probed.counters.probes_dispatched,
            },
            probed,
        ))
    });
    results
        .into_iter()
        .map(|r| r.map_err(|e| input(e.to_string())))
        .collect()
}

/// Returns the exit code: [`EXIT_AUDIT`] if any secure policy fails.
pub fn cmd_audit(c: &ExperimentConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let t = c.load_trace()?;
    if !t.instructions.iter().any(|i| i.kind == Kind::Branch) {
        return Err(input("trace has no branches to probe"));
    }
    let probe = match &c.probe {
        Some(p) => p.clone(),
        None => default_probe(&t).ok_or_else(|| input("trace has no mispredicted branch to probe"))?,
    };
    let policies = with_baseline(&c.policies);
    let ann = if needs_annotations(&policies) {
        Some(c.load_annotations(&t)?)
    } else {
        None
    };
    let rows = audit_rows(&t, ann.as_ref(), &c.sim_for_run(), &policies, &probe)?;
    let mut text = format!("probe {probe}\n");
    let mut code = EXIT_OK;
    for (row, probed) in &rows {
        let status = if !row.policy.is_secure() {
            "expected-leaky"
        } else if row.failed() {
            code = EXIT_AUDIT;
            "FAIL"
        } else {
            "ok"
        };
        let _ = writeln!(
            text,
            "{:<10}  differential={}  invisibility={}  probes={}  {status}",
            row.policy.name(),
            row.differential,
            row.invisibility,
            row.probes_dispatched
        );
        if let Some(dir) = &c.out {
            std::fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
            write_file(
                &dir.join(format!("log_{}.txt", row.policy.name())),
                &export_log(&probed.log),
            )?;
        }
    }
    emit(out, &text)?;
    Ok(code)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a, out).map(|_| EXIT_OK),
        Cmd::Slice(a) => cmd_slice(a, out, err).map(|_| EXIT_OK),
        Cmd::Compare(a) => ExperimentConfig::resolve(a).and_then(|c| cmd_compare(&c, out).map(|_| EXIT_OK)),
        Cmd::Audit(a) => ExperimentConfig::resolve(a).and_then(|c| cmd_audit(&c, out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
