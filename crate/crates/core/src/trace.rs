//! Experiment traces: the per-step log every analysis runs on, the
//! per-epoch ledger facts, and the invariant checks that `verify` re-runs
//! on disk artifacts.
//!
//! A run produces two files: a step CSV (`t,agent_id,reward,epoch,
//! sync_rounds_cum`, one row per agent per step) and a trace JSON carrying
//! the epoch-level facts needed to re-check the synchronization invariants.
//! Both are byte-stable for a fixed `(config, seed)`; wall time is kept out
//! of the JSON on purpose.

use serde::{Deserialize, Serialize};

use crate::coordinator::{epoch_bound, mod_ucrl2_epoch_bound, SyncLedger};
use crate::error::{ensure, Error, Result};

/// Which algorithm produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DistUcrl,
    ModUcrl2,
    Ucrl2,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::DistUcrl => "dist_ucrl",
            Algorithm::ModUcrl2 => "mod_ucrl2",
            Algorithm::Ucrl2 => "ucrl2",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist_ucrl" => Ok(Algorithm::DistUcrl),
            "mod_ucrl2" => Ok(Algorithm::ModUcrl2),
            "ucrl2" => Ok(Algorithm::Ucrl2),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected dist_ucrl, mod_ucrl2, or ucrl2"
            ))),
        }
    }
}

/// Run identity and environment facts carried by every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub env: String,
    pub algo: Algorithm,
    pub n_agents: usize,
    pub horizon: u64,
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    /// Optimal gain of the true model, used for regret.
    pub rho_star: f64,
    /// FNV-1a hash of the canonical config JSON, hex.
    pub config_hash: String,
}

/// Column-oriented per-step log, one entry per `(t, agent)` row in t-major,
/// agent-minor order: index `(t−1)·M + i` is agent `i` at step `t`. The
/// baseline's epochs can break mid-step, so epoch and round counters are
/// kept per row rather than per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepColumns {
    pub rewards: Vec<f64>,
    /// Epoch index (1-based) the row's interaction ran under.
    pub epochs: Vec<u32>,
    /// Cumulative communication rounds at the row's interaction.
    pub rounds_cum: Vec<u64>,
}

/// Epoch-level facts recorded at each barrier (and for the final partial
/// epoch at the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global time the epoch started at.
    pub t_start: u64,
    /// For the round-robin baseline: the agent index the epoch started at
    /// (0 for dist-UCRL, whose epochs start on step boundaries).
    #[serde(default)]
    pub start_agent: usize,
    /// Aggregate `N_k(s,a)` at the epoch's opening barrier, flat `[s][a]`.
    pub n: Vec<u64>,
    /// Total epoch visits `Σ_i ν_{i,k}(s,a)` when the epoch closed.
    pub nu_total: Vec<u64>,
    /// The policy played through the epoch.
    pub policy: Vec<usize>,
    /// Pairs whose trigger fired to close this epoch (empty for the final
    /// partial epoch).
    pub triggers: Vec<(usize, usize)>,
}

/// Everything a run leaves behind, in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrace {
    pub meta: RunMeta,
    pub epochs: Vec<EpochRecord>,
    pub ledger: SyncLedger,
    /// Communication rounds: barrier count for dist-UCRL, `M·T` for the
    /// always-communicating baseline.
    pub comm_rounds: u64,
    pub final_cum_reward: f64,
    /// Step columns; omitted from the JSON artifact (the step CSV is the
    /// authoritative per-step record).
    #[serde(skip)]
    pub steps: StepColumns,
    /// Measured wall time; excluded from serialized artifacts so they stay
    /// byte-stable across reruns.
    #[serde(skip)]
    pub wall_ms: u64,
}

impl ExperimentTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad trace json: {e}")))
    }

    /// Total regret at the horizon: `ρ*·M·T − Σ rewards`.
    pub fn final_regret(&self) -> f64 {
        self.meta.rho_star * self.meta.n_agents as f64 * self.meta.horizon as f64
            - self.final_cum_reward
    }
}

/// Step CSV header, fixed column order.
pub const STEP_CSV_HEADER: &str = "t,agent_id,reward,epoch,sync_rounds_cum";

/// Writes the step CSV for a trace.
pub fn write_steps_csv<W: std::io::Write>(trace: &ExperimentTrace, out: &mut W) -> Result<()> {
    let m = trace.meta.n_agents;
    let t_horizon = trace.meta.horizon as usize;
    ensure!(
        trace.steps.rewards.len() == m * t_horizon,
        "trace has {} reward entries, expected {}",
        trace.steps.rewards.len(),
        m * t_horizon
    );
    let mut buf = String::with_capacity(64);
    writeln!(out, "{STEP_CSV_HEADER}")?;
    for t in 0..t_horizon {
        for i in 0..m {
            let row = t * m + i;
            buf.clear();
            use std::fmt::Write as _;
            let _ = write!(
                buf,
                "{},{},{},{},{}",
                t + 1,
                i,
                trace.steps.rewards[row],
                trace.steps.epochs[row],
                trace.steps.rounds_cum[row]
            );
            writeln!(out, "{buf}")?;
        }
    }
    Ok(())
}

/// Parses a step CSV produced by [`write_steps_csv`] back into columns.
pub fn read_steps_csv(text: &str, m: usize, horizon: u64) -> Result<StepColumns> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty step csv".into()))?;
    ensure!(header == STEP_CSV_HEADER, "unexpected step csv header {header:?}");
    let t_horizon = horizon as usize;
    let mut cols = StepColumns {
        rewards: Vec::with_capacity(m * t_horizon),
        epochs: Vec::with_capacity(m * t_horizon),
        rounds_cum: Vec::with_capacity(m * t_horizon),
    };
    for (row, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let mut field = || {
            parts
                .next()
                .ok_or_else(|| Error::Config(format!("step csv row {row}: missing field")))
        };
        let t: usize = field()?.parse().map_err(|e| Error::Config(format!("row {row}: {e}")))?;
        let agent: usize = field()?.parse().map_err(|e| Error::Config(format!("row {row}: {e}")))?;
        let reward: f64 = field()?.parse().map_err(|e| Error::Config(format!("row {row}: {e}")))?;
        let epoch: u32 = field()?.parse().map_err(|e| Error::Config(format!("row {row}: {e}")))?;
        let rounds: u64 = field()?.parse().map_err(|e| Error::Config(format!("row {row}: {e}")))?;
        ensure!(
            t == row / m + 1 && agent == row % m,
            "step csv row {row} out of order: got (t={t}, agent={agent})"
        );
        cols.rewards.push(reward);
        cols.epochs.push(epoch);
        cols.rounds_cum.push(rounds);
        ensure!(parts.next().is_none(), "step csv row {row}: too many fields");
    }
    ensure!(
        cols.rewards.len() == m * t_horizon,
        "step csv has {} data rows, expected {}",
        cols.rewards.len(),
        m * t_horizon
    );
    Ok(cols)
}

/// Re-asserts every trace invariant. Runs automatically after every run and
/// again from disk artifacts via the `verify` subcommand.
///
/// Checks, per trace:
/// - step-column shape, rewards in `[0,1]`, nondecreasing round counter,
///   epoch column consistent with the recorded epoch starts;
/// - aggregate-count consistency `N_{k+1} = N_k + Σ_i ν_{i,k}`;
/// - the per-epoch visit bound `Σ_i ν_{i,k}(s,a) ≤ max{1, N_k(s,a)} + M − 1`
///   (the `max{1,·}` floor covers first visits to a fresh pair, where all
///   `M` agents can legitimately land in the same step);
/// - the growth factor `N_{k+1}(s,a) ≥ N_k(s,a)·(1 + 1/M)` on every pair
///   that triggered a round with `N_k(s,a) > 0`;
/// - the communication-round bound for the algorithm in question, when the
///   horizon satisfies its hypothesis;
/// - reward/regret consistency between the step columns and the recorded
///   totals.
pub fn check_trace(trace: &ExperimentTrace, steps: &StepColumns) -> Result<()> {
    let m = trace.meta.n_agents;
    let horizon = trace.meta.horizon;
    let t_horizon = horizon as usize;
    let sa = trace.meta.n_states * trace.meta.n_actions;

    ensure_inv(
        steps.rewards.len() == m * t_horizon
            && steps.epochs.len() == m * t_horizon
            && steps.rounds_cum.len() == m * t_horizon,
        || format!("step columns have wrong shape for M={m}, T={horizon}"),
    )?;
    ensure_inv(
        steps.rewards.iter().all(|&r| (0.0..=1.0).contains(&r)),
        || "a reward lies outside [0,1]".to_string(),
    )?;
    ensure_inv(
        steps.rounds_cum.windows(2).all(|w| w[0] <= w[1]),
        || "sync round counter decreases".to_string(),
    )?;
    ensure_inv(
        steps.epochs.windows(2).all(|w| w[0] <= w[1]),
        || "epoch index decreases".to_string(),
    )?;

    let total: f64 = steps.rewards.iter().sum();
    ensure_inv(
        (total - trace.final_cum_reward).abs() <= 1e-6 * (1.0 + total.abs()),
        || {
            format!(
                "cumulative reward mismatch: steps give {total}, trace records {}",
                trace.final_cum_reward
            )
        },
    )?;

    // Ledger shape.
    ensure_inv(
        trace.ledger.rounds() == trace.ledger.epoch_starts.len() as u64,
        || "ledger round count disagrees with epoch starts".to_string(),
    )?;
    match trace.meta.algo {
        Algorithm::DistUcrl => {
            ensure_inv(trace.ledger.epoch_starts.first() == Some(&1), || {
                "the first synchronization must happen at t = 1".to_string()
            })?;
            ensure_inv(
                trace.comm_rounds == trace.ledger.rounds(),
                || "dist-UCRL communication rounds must equal barrier count".to_string(),
            )?;
        }
        Algorithm::ModUcrl2 | Algorithm::Ucrl2 => {
            ensure_inv(
                trace.comm_rounds == m as u64 * horizon,
                || "baseline communication rounds must equal M·T".to_string(),
            )?;
        }
    }
    ensure_inv(
        trace.ledger.epoch_starts.windows(2).all(|w| w[0] < w[1]),
        || "epoch starts must be strictly increasing".to_string(),
    )?;

    // Epoch-level invariants.
    ensure_inv(!trace.epochs.is_empty(), || "trace records no epochs".to_string())?;
    for (k, epoch) in trace.epochs.iter().enumerate() {
        ensure_inv(
            epoch.n.len() == sa && epoch.nu_total.len() == sa,
            || format!("epoch {k} count matrices have wrong shape"),
        )?;
        ensure_inv(
            epoch.policy.len() == trace.meta.n_states,
            || format!("epoch {k} policy has wrong length"),
        )?;
        let closing_barrier = k + 1 < trace.epochs.len();
        for pair in 0..sa {
            let bound = epoch.n[pair].max(1) + m as u64 - 1;
            ensure_inv(epoch.nu_total[pair] <= bound, || {
                format!(
                    "epoch {k} pair {pair}: Σν = {} exceeds max(1,N)+M−1 = {bound}",
                    epoch.nu_total[pair]
                )
            })?;
        }
        if closing_barrier {
            let next = &trace.epochs[k + 1];
            for pair in 0..sa {
                ensure_inv(
                    next.n[pair] == epoch.n[pair] + epoch.nu_total[pair],
                    || format!("epoch {k} pair {pair}: N_{{k+1}} ≠ N_k + Σν_k"),
                )?;
            }
            for &(s, a) in &epoch.triggers {
                let pair = s * trace.meta.n_actions + a;
                let n_k = epoch.n[pair];
                if n_k > 0 {
                    // N_{k+1} ≥ N_k(1+1/M) ⟺ M·N_{k+1} ≥ (M+1)·N_k, exactly.
                    ensure_inv(
                        m as u64 * next.n[pair] >= (m as u64 + 1) * n_k,
                        || {
                            format!(
                                "triggering pair ({s},{a}) at epoch {k}: N grew {} → {}, below the (1+1/M) factor",
                                n_k, next.n[pair]
                            )
                        },
                    )?;
                }
            }
        }
    }

    // Communication-round bounds.
    match trace.meta.algo {
        Algorithm::DistUcrl => {
            if m as u64 * horizon >= sa as u64 {
                let bound = epoch_bound(m, trace.meta.n_states, trace.meta.n_actions, horizon)?;
                ensure_inv(trace.ledger.rounds() <= bound, || {
                    format!(
                        "observed {} sync rounds exceed the bound {bound}",
                        trace.ledger.rounds()
                    )
                })?;
            }
        }
        Algorithm::ModUcrl2 | Algorithm::Ucrl2 => {
            if m as u64 * horizon >= sa as u64 {
                let bound =
                    mod_ucrl2_epoch_bound(m, trace.meta.n_states, trace.meta.n_actions, horizon)?;
                ensure_inv((trace.epochs.len() as u64) <= bound, || {
                    format!("observed {} epochs exceed the bound {bound}", trace.epochs.len())
                })?;
            }
        }
    }
    Ok(())
}

fn ensure_inv(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invariant(msg()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace() -> ExperimentTrace {
        ExperimentTrace {
            meta: RunMeta {
                env: "riverswim6".into(),
                algo: Algorithm::DistUcrl,
                n_agents: 2,
                horizon: 2,
                seed: 0,
                n_states: 1,
                n_actions: 1,
                rho_star: 1.0,
                config_hash: "00".into(),
            },
            epochs: vec![
                EpochRecord {
                    t_start: 1,
                    start_agent: 0,
                    n: vec![0],
                    nu_total: vec![2],
                    policy: vec![0],
                    triggers: vec![(0, 0)],
                },
                EpochRecord {
                    t_start: 2,
                    start_agent: 0,
                    n: vec![2],
                    nu_total: vec![2],
                    policy: vec![0],
                    triggers: vec![],
                },
            ],
            ledger: SyncLedger {
                epoch_starts: vec![1, 2],
                n_snapshots: vec![vec![0], vec![2]],
                bytes_exchanged: 10,
            },
            comm_rounds: 2,
            final_cum_reward: 3.0,
            steps: StepColumns {
                rewards: vec![1.0, 1.0, 0.0, 1.0],
                epochs: vec![1, 1, 2, 2],
                rounds_cum: vec![1, 1, 2, 2],
            },
            wall_ms: 0,
        }
    }

    #[test]
    fn healthy_trace_passes() {
        let trace = tiny_trace();
        check_trace(&trace, &trace.steps).unwrap();
    }

    #[test]
    fn reward_out_of_range_is_flagged() {
        let mut trace = tiny_trace();
        trace.steps.rewards[0] = 1.5;
        trace.final_cum_reward = 3.5;
        assert!(matches!(
            check_trace(&trace.clone(), &trace.steps),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn epoch_count_consistency_is_enforced() {
        let mut trace = tiny_trace();
        trace.epochs[1].n = vec![3];
        assert!(check_trace(&trace.clone(), &trace.steps).is_err());
    }

    #[test]
    fn growth_factor_violations_are_flagged() {
        let mut trace = tiny_trace();
        // Pretend N_k = 4 at a triggering pair but N only grew by 0.
        trace.epochs[0].n = vec![4];
        trace.epochs[0].nu_total = vec![0];
        trace.epochs[1].n = vec![4];
        trace.epochs[1].nu_total = vec![0];
        assert!(check_trace(&trace.clone(), &trace.steps).is_err());
    }

    #[test]
    fn steps_csv_round_trips() {
        let trace = tiny_trace();
        let mut buf = Vec::new();
        write_steps_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cols = read_steps_csv(&text, 2, 2).unwrap();
        assert_eq!(cols, trace.steps);
    }

    #[test]
    fn trace_json_round_trips_without_steps() {
        let trace = tiny_trace();
        let doc = ExperimentTrace::from_json(&trace.to_json()).unwrap();
        assert_eq!(doc.meta, trace.meta);
        assert_eq!(doc.epochs, trace.epochs);
        assert!(doc.steps.rewards.is_empty());
    }
}
