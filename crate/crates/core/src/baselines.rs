//! The always-communicating baseline: a central server runs one UCRL2
//! instance over `M` environment interfaces, processing agents round-robin
//! within each step. Every interaction is a communication, so the round
//! count is `M·T`. At `M = 1` this is standard UCRL2, and its trace
//! coincides with dist-UCRL's under matched seeds.
//!
//! Strictly single-threaded by construction; the baseline is defined by
//! sequential processing.

use serde::{Deserialize, Serialize};

use crate::confidence::{build_plausible_set, VisitationCounts};
use crate::coordinator::{sync_epsilon, SyncLedger, SyncOptions};
use crate::error::{ensure, Error, Result};
use crate::evi::extended_value_iteration;
use crate::mdp::{MdpModel, Policy};
use crate::seeding;
use crate::trace::{check_trace, Algorithm, EpochRecord, ExperimentTrace, RunMeta, StepColumns};

/// Server time `(i, t)`: agent `i` (0-based) within step `t ≥ 1`.
/// Interactions are processed in linearized order `M·(t−1) + i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerTime {
    pub agent: usize,
    pub step: u64,
}

impl ServerTime {
    pub fn start() -> Self {
        ServerTime { agent: 0, step: 1 }
    }

    /// 1-based position in the interaction sequence.
    pub fn linearized(&self, m: usize) -> u64 {
        m as u64 * (self.step - 1) + self.agent as u64 + 1
    }

    /// The next server time under the wrap rule: increment the agent,
    /// wrapping to `(0, t+1)` past the last agent.
    pub fn successor(&self, m: usize) -> Self {
        if self.agent + 1 < m {
            ServerTime {
                agent: self.agent + 1,
                step: self.step,
            }
        } else {
            ServerTime {
                agent: 0,
                step: self.step + 1,
            }
        }
    }

    pub fn predecessor(&self, m: usize) -> Self {
        if self.agent > 0 {
            ServerTime {
                agent: self.agent - 1,
                step: self.step,
            }
        } else {
            ServerTime {
                agent: m - 1,
                step: self.step - 1,
            }
        }
    }
}

/// Runs mod-UCRL2 and emits the common trace schema. Epoch breaks may occur
/// mid-step at arbitrary server times; the ledger stores linearized server
/// times as epoch starts since several epochs can begin within one step.
pub fn mod_ucrl2_run(mdp: &MdpModel, meta: RunMeta, opts: &SyncOptions) -> Result<ExperimentTrace> {
    let started = std::time::Instant::now();
    let m = meta.n_agents;
    let horizon = meta.horizon;
    ensure!(m >= 1 && horizon >= 1, "need M ≥ 1 and T ≥ 1");
    ensure!(
        meta.algo != Algorithm::Ucrl2 || m == 1,
        "ucrl2 requires M = 1, got {m}"
    );
    ensure!(
        meta.n_states == mdp.n_states() && meta.n_actions == mdp.n_actions(),
        "meta dims do not match the model"
    );
    let s_dim = mdp.n_states();
    let a_dim = mdp.n_actions();
    let sa = s_dim * a_dim;

    // The agents are interfaces only: position plus an environment stream
    // derived exactly as in dist-UCRL, so head-to-head comparisons share
    // environment randomness where the step sequences align.
    let mut states = vec![0usize; m];
    let mut rngs: Vec<_> = (0..m)
        .map(|i| seeding::stream(meta.seed, seeding::PURPOSE_ENV, i as u64))
        .collect();

    let mut counts = VisitationCounts::zeros(s_dim, a_dim);
    let mut nu = vec![0u64; sa];
    let mut n_at_epoch = vec![0u64; sa];
    let mut ledger = SyncLedger::default();
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let rows = horizon as usize * m;
    let mut steps = StepColumns {
        rewards: Vec::with_capacity(rows),
        epochs: Vec::with_capacity(rows),
        rounds_cum: Vec::with_capacity(rows),
    };
    let mut policy = Policy::new(vec![0; s_dim]);
    let mut epoch_pending = true; // recompute before the very first interaction
    let mut break_pair: Vec<(usize, usize)> = Vec::new();

    let mut now = ServerTime::start();
    while now.step <= horizon {
        if epoch_pending {
            // Close the previous epoch record, if any.
            if let Some(last) = epochs.last_mut() {
                last.nu_total = nu.clone();
                last.triggers = break_pair.clone();
            }
            for (pair, &v) in nu.iter().enumerate() {
                n_at_epoch[pair] += v;
            }
            nu.iter_mut().for_each(|v| *v = 0);
            break_pair.clear();
            let set = build_plausible_set(&counts, now.step, m, opts.clip_optimistic_reward)?;
            let epsilon = opts
                .epsilon_override
                .unwrap_or_else(|| sync_epsilon(m, now.step));
            let result = extended_value_iteration(&set, epsilon, opts.evi_max_iters)?;
            if !result.converged {
                return Err(Error::Diverged {
                    what: "extended value iteration",
                    iterations: result.iterations,
                    last_span: f64::NAN,
                });
            }
            policy = result.policy;
            ledger.record_mod_round(now.linearized(m), n_at_epoch.clone())?;
            epochs.push(EpochRecord {
                t_start: now.step,
                start_agent: now.agent,
                n: n_at_epoch.clone(),
                nu_total: Vec::new(),
                policy: policy.action_of.clone(),
                triggers: Vec::new(),
            });
            epoch_pending = false;
        }

        let i = now.agent;
        let s = states[i];
        let a = policy.action(s);
        let (next, reward) = mdp.step(s, a, &mut rngs[i])?;
        states[i] = next;
        counts.record(s, a, next, reward);
        let pair = s * a_dim + a;
        nu[pair] += 1;
        steps.rewards.push(reward);
        steps.epochs.push(epochs.len() as u32);
        steps.rounds_cum.push(now.linearized(m));
        debug_assert!(nu[pair] <= n_at_epoch[pair].max(1));
        if nu[pair] >= n_at_epoch[pair].max(1) {
            epoch_pending = true;
            break_pair.push((s, a));
        }
        now = now.successor(m);
    }
    // Close the final epoch record at the horizon.
    if let Some(last) = epochs.last_mut() {
        last.nu_total = nu.clone();
        last.triggers = break_pair.clone();
    }

    let final_cum_reward: f64 = steps.rewards.iter().sum();
    let trace = ExperimentTrace {
        comm_rounds: m as u64 * horizon,
        meta,
        epochs,
        ledger,
        final_cum_reward,
        steps,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    check_trace(&trace, &trace.steps)?;
    Ok(trace)
}

/// Standard UCRL2: the baseline at `M = 1`.
pub fn ucrl2_run(mdp: &MdpModel, mut meta: RunMeta, opts: &SyncOptions) -> Result<ExperimentTrace> {
    ensure!(meta.n_agents == 1, "ucrl2 requires M = 1, got {}", meta.n_agents);
    meta.algo = Algorithm::Ucrl2;
    mod_ucrl2_run(mdp, meta, opts)
}

impl SyncLedger {
    /// Ledger entry for a baseline epoch: starts are linearized server
    /// times, which stay strictly increasing even when several epochs begin
    /// within one step.
    fn record_mod_round(&mut self, linearized: u64, n_snapshot: Vec<u64>) -> Result<()> {
        if let Some(&last) = self.epoch_starts.last() {
            ensure!(linearized > last, "epoch starts must increase");
        }
        self.epoch_starts.push(linearized);
        self.n_snapshots.push(n_snapshot);
        Ok(())
    }
}
