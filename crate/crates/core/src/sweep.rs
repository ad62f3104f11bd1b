//! Seed sweeps: run the same experiment over many seeds and collect results.
//!
//! With the `parallel` feature the seeds fan out over the rayon pool;
//! without it, or with [`Execution::Sequential`], they run in order on the
//! calling thread. Results are always returned in seed order, so both modes
//! produce identical output.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::consensus::{check_safety, simulate, FaultSchedule, SafetyViolation, Scenario, SimError, Workload};
use crate::types::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when compiled with `parallel`; otherwise sequential.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub fn map_seeds<T, F>(seeds: Range<u64>, mode: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Execution::Parallel => seeds.into_par_iter().map(f).collect(),
        _ => seeds.map(f).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub authorities: usize,
    pub faulty: usize,
    pub schedules: u64,
    pub base_seed: u64,
    pub max_rounds: u64,
    pub workload: Workload,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            authorities: 4,
            faulty: 1,
            schedules: 100,
            base_seed: 0,
            max_rounds: 24,
            workload: Workload {
                count: 24,
                per_round: 2,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub seed: u64,
    pub faults: FaultSchedule,
    pub safety: Result<(), SafetyViolation>,
    /// Honest nodes agree on the entire chain after settling.
    pub honest_converged: bool,
    pub committed_txs: usize,
    pub trace_digest: Digest,
}

/// Random fault schedules with at most `faulty` misbehaving authorities;
/// safety is checked on every run.
pub fn safety_sweep(cfg: &SweepConfig, mode: Execution) -> Result<Vec<SweepOutcome>, SimError> {
    let runs = map_seeds(cfg.base_seed..cfg.base_seed + cfg.schedules, mode, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fa17);
        let faults = FaultSchedule::random(cfg.authorities, cfg.faulty, cfg.max_rounds, &mut rng);
        let scenario = Scenario {
            authorities: cfg.authorities,
            faults: faults.clone(),
            seed,
            max_rounds: cfg.max_rounds,
            workload: cfg.workload,
            ..Scenario::default()
        };
        let trace = simulate(&scenario)?;
        let honest: Vec<_> = trace.nodes.iter().filter(|n| n.honest).collect();
        let honest_converged = honest
            .windows(2)
            .all(|w| w[0].block_hashes == w[1].block_hashes);
        Ok(SweepOutcome {
            seed,
            safety: check_safety(&trace),
            honest_converged,
            committed_txs: trace.committed.len(),
            trace_digest: crate::hash::keccak256(trace.render().as_bytes()),
            faults,
        })
    });
    runs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let cfg = SweepConfig {
            schedules: 6,
            max_rounds: 10,
            workload: Workload {
                count: 8,
                per_round: 1,
            },
            ..SweepConfig::default()
        };
        let a = safety_sweep(&cfg, Execution::Sequential).unwrap();
        let b = safety_sweep(&cfg, Execution::Parallel).unwrap();
        let da: Vec<_> = a.iter().map(|o| o.trace_digest).collect();
        let db: Vec<_> = b.iter().map(|o| o.trace_digest).collect();
        assert_eq!(da, db);
        assert!(a.iter().all(|o| o.safety.is_ok()));
    }

    #[test]
    fn map_seeds_preserves_order() {
        let v = map_seeds(0..100, Execution::Parallel, |s| s * 2);
        assert_eq!(v, (0..100).map(|s| s * 2).collect::<Vec<_>>());
    }
}
