//! Runs independent simulations, in parallel when the `parallel` feature is on.
//!
//! Every simulation owns all of its state, so results do not depend on the
//! execution mode or on thread scheduling.

use std::collections::BTreeMap;

use crate::cpu::{self, Policy, RunResult, SimConfig, SimError};
use crate::slicer::AnnotationTable;
use crate::trace::Trace;

/// Applies `f` to every item, preserving order.
pub fn map_jobs<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always sequential, whatever the feature set.
pub fn map_jobs_sequential<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

fn collect(
    policies: &[Policy],
    results: Vec<Result<RunResult, SimError>>,
) -> Result<BTreeMap<Policy, RunResult>, SimError> {
    policies
        .iter()
        .copied()
        .zip(results)
        .map(|(p, r)| r.map(|r| (p, r)))
        .collect()
}

fn dedup(policies: &[Policy]) -> Vec<Policy> {
    let mut v = policies.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Simulates `trace` under each policy.
pub fn run_policies(
    trace: &Trace,
    ann: Option<&AnnotationTable>,
    cfg: &SimConfig,
    policies: &[Policy],
) -> Result<BTreeMap<Policy, RunResult>, SimError> {
    let ps = dedup(policies);
    let results = map_jobs(&ps, |&p| cpu::run(trace, ann, &cfg.with_policy(p)));
    collect(&ps, results)
}

pub fn run_policies_sequential(
    trace: &Trace,
    ann: Option<&AnnotationTable>,
    cfg: &SimConfig,
    policies: &[Policy],
) -> Result<BTreeMap<Policy, RunResult>, SimError> {
    let ps = dedup(policies);
    let results = map_jobs_sequential(&ps, |&p| cpu::run(trace, ann, &cfg.with_policy(p)));
    collect(&ps, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::gen::{gen_synthetic, Pattern, SyntheticWorkloadSpec};

    #[test]
    fn modes_agree() {
        let t = gen_synthetic(&SyntheticWorkloadSpec::new(Pattern::Mixed, 2000, 4)).unwrap();
        let (ann, _) = crate::slicer::annotate(&t, 100);
        let cfg = SimConfig::default();
        let a = run_policies(&t, Some(&ann), &cfg, &Policy::ALL).unwrap();
        let b = run_policies_sequential(&t, Some(&ann), &cfg, &Policy::ALL).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
    }
}
