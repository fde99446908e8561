//! Central coordinator: count aggregation, plausible-set construction, EVI
//! invocation, policy broadcast, and communication-round accounting.
//!
//! The same [`CoordinatorCore`] backs both execution modes: the in-process
//! channel calls it directly, and the TCP server drives it behind a socket.

use serde::{Deserialize, Serialize};

use crate::confidence::{aggregate, build_plausible_set, VisitationCounts};
use crate::error::{ensure, Error, Result};
use crate::evi::{extended_value_iteration, EviResult};
use crate::mdp::Policy;
use crate::transport::{SyncMessage, TransportError};

/// Knobs that shape a synchronization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncOptions {
    /// EVI accuracy; `None` means the schedule `ε = 1/√(M·t)`.
    pub epsilon_override: Option<f64>,
    /// Clip optimistic rewards at 1 (off by default: the update rule adds
    /// the radius unclipped).
    pub clip_optimistic_reward: bool,
    pub evi_max_iters: usize,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            epsilon_override: None,
            clip_optimistic_reward: false,
            evi_max_iters: 2_000_000,
        }
    }
}

/// The ε schedule used at a barrier at time `t` with `m` agents.
pub fn sync_epsilon(m: usize, t: u64) -> f64 {
    1.0 / ((m as f64 * t as f64).sqrt())
}

/// One synchronization: aggregates per-agent counters, builds the plausible
/// set at time `t`, and runs EVI at `ε = 1/√(M·t)` (or the override).
/// Deterministic given `(counts, t, dims)`.
///
/// Returns the new policy and the aggregate visit counts `N(s,a)`.
pub fn synchronize(
    per_agent_counts: &[VisitationCounts],
    t: u64,
    m: usize,
    opts: &SyncOptions,
) -> Result<(Policy, Vec<u64>, EviResult)> {
    ensure!(t >= 1, "synchronize requires t ≥ 1, got {t}");
    ensure!(
        per_agent_counts.len() == m,
        "expected {m} counter sets, got {}",
        per_agent_counts.len()
    );
    let global = aggregate(per_agent_counts)?;
    let set = build_plausible_set(&global, t, m, opts.clip_optimistic_reward)?;
    let epsilon = opts.epsilon_override.unwrap_or_else(|| sync_epsilon(m, t));
    let result = extended_value_iteration(&set, epsilon, opts.evi_max_iters)?;
    if !result.converged {
        return Err(Error::Diverged {
            what: "extended value iteration",
            iterations: result.iterations,
            last_span: f64::NAN,
        });
    }
    Ok((result.policy.clone(), global.visit_counts(), result))
}

/// Theorem-style bound on dist-UCRL communication rounds up to step `T`:
/// `⌈1 + 2·M·A·S + M·A·S·log₂(M·T)⌉`. Requires `T ≥ S·A/M`.
pub fn epoch_bound(m: usize, s: usize, a: usize, t_horizon: u64) -> Result<u64> {
    ensure!(
        (m as u64) * t_horizon >= (s * a) as u64,
        "epoch_bound requires T ≥ SA/M (got M={m}, S={s}, A={a}, T={t_horizon})"
    );
    let mas = (m * a * s) as f64;
    let bound = 1.0 + 2.0 * mas + mas * (m as f64 * t_horizon as f64).log2();
    Ok(bound.ceil() as u64)
}

/// The tighter appendix-form of the same bound, with `log₂(MT/SA)`.
/// Reported alongside the main bound; traces are checked against the looser
/// form above.
pub fn epoch_bound_tight(m: usize, s: usize, a: usize, t_horizon: u64) -> Result<u64> {
    ensure!(
        (m as u64) * t_horizon >= (s * a) as u64,
        "epoch_bound_tight requires T ≥ SA/M (got M={m}, S={s}, A={a}, T={t_horizon})"
    );
    let mas = (m * a * s) as f64;
    let ratio = (m as f64 * t_horizon as f64) / ((s * a) as f64);
    let bound = 1.0 + 2.0 * mas + mas * ratio.log2();
    Ok(bound.ceil() as u64)
}

/// Epoch-count bound for the always-communicating baseline:
/// `1 + S·A + S·A·log₂(M·T/(S·A))`.
pub fn mod_ucrl2_epoch_bound(m: usize, s: usize, a: usize, t_horizon: u64) -> Result<u64> {
    ensure!(
        (m as u64) * t_horizon >= (s * a) as u64,
        "mod_ucrl2_epoch_bound requires MT ≥ SA"
    );
    let sa = (s * a) as f64;
    let ratio = (m as f64 * t_horizon as f64) / sa;
    Ok((1.0 + sa + sa * ratio.log2()).ceil() as u64)
}

/// Round accounting kept by the run driver: one entry per completed
/// synchronization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncLedger {
    /// Times `t_k` at which each epoch started (`t₁ = 1`).
    pub epoch_starts: Vec<u64>,
    /// Aggregate `N_k(s,a)` snapshot at each barrier, flat `[s][a]`.
    pub n_snapshots: Vec<Vec<u64>>,
    /// Encoded bytes moved through the channel in both directions.
    pub bytes_exchanged: u64,
}

impl SyncLedger {
    /// Completed synchronization rounds.
    pub fn rounds(&self) -> u64 {
        self.epoch_starts.len() as u64
    }

    pub fn record_round(&mut self, t: u64, n_snapshot: Vec<u64>) -> Result<()> {
        if let Some(&last) = self.epoch_starts.last() {
            ensure!(t > last, "epoch starts must be strictly increasing ({t} after {last})");
        } else {
            ensure!(t == 1, "the first synchronization must happen at t = 1, got {t}");
        }
        self.epoch_starts.push(t);
        self.n_snapshots.push(n_snapshot);
        Ok(())
    }
}

/// Barrier-handling state shared by the in-process channel and the TCP
/// server. The core is the only mutator of its round counter; it processes
/// one barrier at a time.
pub struct CoordinatorCore {
    n_states: usize,
    n_actions: usize,
    n_agents: usize,
    opts: SyncOptions,
    epoch: u64,
    last_time: Option<u64>,
}

impl CoordinatorCore {
    pub fn new(n_states: usize, n_actions: usize, n_agents: usize, opts: SyncOptions) -> Self {
        CoordinatorCore {
            n_states,
            n_actions,
            n_agents,
            opts,
            epoch: 0,
            last_time: None,
        }
    }

    /// Handles one barrier: validates the round's messages, synchronizes,
    /// and produces the policy broadcast.
    pub fn handle_round(
        &mut self,
        requests: &[SyncMessage],
        uploads: &[SyncMessage],
    ) -> std::result::Result<SyncMessage, TransportError> {
        if requests.is_empty() {
            return Err(TransportError::Protocol(
                "a barrier needs at least one sync_request".into(),
            ));
        }
        let mut t = 0u64;
        for msg in requests {
            match msg {
                SyncMessage::SyncRequest { time, .. } => t = t.max(*time),
                other => {
                    return Err(TransportError::Protocol(format!(
                        "expected sync_request, got {other:?}"
                    )))
                }
            }
        }
        if t < 1 {
            return Err(TransportError::Protocol("barrier time must be ≥ 1".into()));
        }
        if let Some(last) = self.last_time {
            if t <= last {
                return Err(TransportError::Protocol(format!(
                    "barrier time {t} not after previous barrier {last}"
                )));
            }
        }
        if uploads.len() != self.n_agents {
            return Err(TransportError::Protocol(format!(
                "expected {} uploads, got {}",
                self.n_agents,
                uploads.len()
            )));
        }
        let mut per_agent: Vec<Option<VisitationCounts>> = vec![None; self.n_agents];
        for msg in uploads {
            match msg {
                SyncMessage::CountsUpload {
                    agent_id,
                    states,
                    actions,
                    transition_counts,
                    reward_sums,
                } => {
                    let id = *agent_id as usize;
                    if *states as usize != self.n_states || *actions as usize != self.n_actions {
                        return Err(TransportError::Schema(format!(
                            "upload dims ({states},{actions}) do not match coordinator ({},{})",
                            self.n_states, self.n_actions
                        )));
                    }
                    if id >= self.n_agents || per_agent[id].is_some() {
                        return Err(TransportError::Protocol(format!(
                            "duplicate or out-of-range agent id {id}"
                        )));
                    }
                    let counts = VisitationCounts::from_parts(
                        self.n_states,
                        self.n_actions,
                        transition_counts.iter().map(|&c| c as u64).collect(),
                        reward_sums.clone(),
                    )
                    .map_err(|e| TransportError::Schema(e.to_string()))?;
                    per_agent[id] = Some(counts);
                }
                other => {
                    return Err(TransportError::Protocol(format!(
                        "expected counts_upload, got {other:?}"
                    )))
                }
            }
        }
        let per_agent: Vec<VisitationCounts> = per_agent.into_iter().map(|c| c.unwrap()).collect();
        let (policy, n_global, _) = synchronize(&per_agent, t, self.n_agents, &self.opts)
            .map_err(|e| TransportError::Coordinator(e.to_string()))?;
        self.epoch += 1;
        self.last_time = Some(t);
        Ok(SyncMessage::PolicyBroadcast {
            epoch: self.epoch,
            states: self.n_states as u64,
            actions: self.n_actions as u64,
            policy: policy.action_of.iter().map(|&a| a as u64).collect(),
            n_global: n_global.iter().map(|&n| n as i64).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_is_exact() {
        assert_eq!(sync_epsilon(4, 25), 1.0 / 10.0);
        let m = 16;
        let t = 20_000;
        assert_eq!(sync_epsilon(m, t), 1.0 / ((m as f64 * t as f64).sqrt()));
    }

    #[test]
    fn cold_start_synchronize_returns_zero_counts_and_a_policy() {
        let counts = vec![VisitationCounts::zeros(3, 2); 4];
        let (policy, n, _) = synchronize(&counts, 1, 4, &SyncOptions::default()).unwrap();
        assert_eq!(policy.n_states(), 3);
        assert!(n.iter().all(|&x| x == 0));
    }

    #[test]
    fn epoch_bound_matches_hand_evaluations() {
        assert_eq!(epoch_bound(1, 1, 1, 1).unwrap(), 3);
        assert_eq!(epoch_bound(4, 6, 2, 100_000).unwrap(), 991);
    }

    #[test]
    fn epoch_bound_is_monotone_in_each_argument() {
        let base = epoch_bound(2, 4, 3, 1000).unwrap();
        assert!(epoch_bound(4, 4, 3, 1000).unwrap() > base);
        assert!(epoch_bound(2, 8, 3, 1000).unwrap() > base);
        assert!(epoch_bound(2, 4, 6, 1000).unwrap() > base);
        assert!(epoch_bound(2, 4, 3, 4000).unwrap() > base);
    }

    #[test]
    fn epoch_bound_rejects_too_small_horizons() {
        assert!(epoch_bound(1, 10, 10, 5).is_err());
    }

    #[test]
    fn ledger_enforces_increasing_epoch_starts() {
        let mut ledger = SyncLedger::default();
        assert!(ledger.record_round(2, vec![]).is_err());
        ledger.record_round(1, vec![]).unwrap();
        assert!(ledger.record_round(1, vec![]).is_err());
        ledger.record_round(5, vec![]).unwrap();
        assert_eq!(ledger.rounds(), 2);
    }

    #[test]
    fn synchronize_is_deterministic() {
        let mut counts = VisitationCounts::zeros(3, 2);
        for i in 0..50 {
            counts.record(i % 3, i % 2, (i + 1) % 3, f64::from(u32::from(i % 2 == 0)));
        }
        let all = vec![counts; 2];
        let a = synchronize(&all, 17, 2, &SyncOptions::default()).unwrap();
        let b = synchronize(&all, 17, 2, &SyncOptions::default()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
