//! Trace-driven out-of-order core and cache hierarchy simulator for studying
//! speculative-load defenses.
//!
//! A run replays a committed-path trace ([`trace`]) through a cycle-level core
//! ([`cpu`]) under one [`cpu::Policy`]: an unprotected baseline, Delay-on-Miss,
//! value prediction ([`vp`]), or value recomputation ([`vrc`]) driven by
//! backward slices that [`slicer`] extracts offline. Shadow tracking lives in
//! [`shadows`], the cache arrays and their mutation log in [`memhier`].
//! [`audit`] checks that wrong-path loads leave no trace in the hierarchy,
//! [`metrics`] turns runs into IPC, coverage and energy figures, and [`cli`]
//! wires it all into the `vrcsim` binary.
//!
//! ```
//! use vrcsim::cpu::{run, Policy, SimConfig};
//! use vrcsim::slicer::annotate;
//! use vrcsim::trace::{gen_synthetic, Pattern, SyntheticWorkloadSpec};
//!
//! let t = gen_synthetic(&SyntheticWorkloadSpec::new(Pattern::ComputeStoreLoad, 2000, 1)).unwrap();
//! let (ann, _) = annotate(&t, 100);
//! let dom = run(&t, Some(&ann), &SimConfig::default().with_policy(Policy::Dom)).unwrap();
//! let vrc = run(&t, Some(&ann), &SimConfig::default().with_policy(Policy::Vrc)).unwrap();
//! assert_eq!(dom.committed_values, vrc.committed_values);
//! assert!(vrc.cycles <= dom.cycles);
//! ```

pub mod audit;
pub mod cli;
pub mod cpu;
pub mod exec;
pub mod memhier;
pub mod metrics;
pub mod shadows;
pub mod slicer;
pub mod trace;
pub mod vp;
pub mod vrc;
