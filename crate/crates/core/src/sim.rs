//! Lockstep dist-UCRL run driver.
//!
//! All `M` agents complete step `t` before any synchronization check; a
//! trigger raised during step `t` takes effect at the barrier between `t`
//! and `t+1`, and the new epoch starts at `t+1`. Simultaneous requests in
//! one step coalesce into a single round. A request raised during the final
//! step has no following step, so no barrier runs for it.
//!
//! The driver is transport-agnostic: every barrier goes through a
//! [`SyncChannel`], which is either the deterministic in-process channel or
//! a TCP client against a coordinator server.

use crate::agent::{should_request_sync, AgentState};
use crate::coordinator::{SyncLedger, SyncOptions};
use crate::error::{ensure, Error, Result};
use crate::mdp::{MdpModel, Policy};
use crate::trace::{check_trace, EpochRecord, ExperimentTrace, RunMeta, StepColumns};
use crate::transport::{InprocChannel, SyncChannel, SyncMessage};
use crate::coordinator::CoordinatorCore;

/// Runs dist-UCRL in-process with a fresh coordinator.
pub fn run_dist_ucrl(
    mdp: &MdpModel,
    meta: RunMeta,
    opts: &SyncOptions,
    record_fixture: bool,
) -> Result<ExperimentTrace> {
    let core = CoordinatorCore::new(mdp.n_states(), mdp.n_actions(), meta.n_agents, *opts);
    let mut channel = InprocChannel::new(core, meta.n_agents, record_fixture);
    run_dist_ucrl_over(mdp, meta, &mut channel)
}

/// Runs dist-UCRL over an arbitrary synchronization channel.
pub fn run_dist_ucrl_over(
    mdp: &MdpModel,
    meta: RunMeta,
    channel: &mut dyn SyncChannel,
) -> Result<ExperimentTrace> {
    let started = std::time::Instant::now();
    let m = meta.n_agents;
    let horizon = meta.horizon;
    ensure!(m >= 1, "need at least one agent");
    ensure!(horizon >= 1, "need a positive horizon");
    ensure!(
        meta.n_states == mdp.n_states() && meta.n_actions == mdp.n_actions(),
        "meta dims ({}, {}) do not match the model ({}, {})",
        meta.n_states,
        meta.n_actions,
        mdp.n_states(),
        mdp.n_actions()
    );
    let s_dim = mdp.n_states();
    let a_dim = mdp.n_actions();
    let sa = s_dim * a_dim;

    let mut agents: Vec<AgentState> =
        (0..m).map(|i| AgentState::new(i, mdp, m, meta.seed)).collect();
    let mut ledger = SyncLedger::default();
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let rows = (horizon as usize) * m;
    let mut steps = StepColumns {
        rewards: Vec::with_capacity(rows),
        epochs: Vec::with_capacity(rows),
        rounds_cum: Vec::with_capacity(rows),
    };

    // Initial barrier at t₁ = 1, requested by agent 0 by convention.
    barrier(1, &[0], &mut agents, channel, &mut ledger, &mut epochs, s_dim, a_dim)?;

    for t in 1..=horizon {
        let mut requesters: Vec<usize> = Vec::new();
        let epoch_idx = ledger.rounds() as u32;
        for (i, agent) in agents.iter_mut().enumerate() {
            let out = agent.step(mdp)?;
            steps.rewards.push(out.reward);
            steps.epochs.push(epoch_idx);
            steps.rounds_cum.push(ledger.rounds());
            if out.sync_requested {
                requesters.push(i);
            }
        }
        if !requesters.is_empty() && t < horizon {
            close_epoch(&agents, epochs.last_mut().expect("an epoch is open"), sa, a_dim, m);
            barrier(t + 1, &requesters, &mut agents, channel, &mut ledger, &mut epochs, s_dim, a_dim)?;
        }
    }
    close_epoch(&agents, epochs.last_mut().expect("an epoch is open"), sa, a_dim, m);

    ledger.bytes_exchanged = channel.bytes_exchanged();
    let final_cum_reward: f64 = steps.rewards.iter().sum();
    let trace = ExperimentTrace {
        comm_rounds: ledger.rounds(),
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

/// Fills the closing facts of the epoch record: total epoch visits and the
/// pairs whose trigger fired.
fn close_epoch(agents: &[AgentState], record: &mut EpochRecord, sa: usize, a_dim: usize, m: usize) {
    let mut nu_total = vec![0u64; sa];
    let mut triggers = Vec::new();
    for pair in 0..sa {
        let mut fired = false;
        for agent in agents {
            nu_total[pair] += agent.nu()[pair];
            if should_request_sync(agent.nu()[pair], agent.n_ref()[pair], m) {
                fired = true;
            }
        }
        if fired {
            triggers.push((pair / a_dim, pair % a_dim));
        }
    }
    record.nu_total = nu_total;
    record.triggers = triggers;
}

/// One synchronization barrier at global time `t`.
#[allow(clippy::too_many_arguments)]
fn barrier(
    t: u64,
    requesters: &[usize],
    agents: &mut [AgentState],
    channel: &mut dyn SyncChannel,
    ledger: &mut SyncLedger,
    epochs: &mut Vec<EpochRecord>,
    s_dim: usize,
    a_dim: usize,
) -> Result<()> {
    let requests: Vec<SyncMessage> = requesters
        .iter()
        .map(|&i| SyncMessage::SyncRequest {
            agent_id: i as u64,
            time: t,
        })
        .collect();
    let uploads: Vec<SyncMessage> = agents
        .iter()
        .map(|agent| SyncMessage::CountsUpload {
            agent_id: agent.agent_id as u64,
            states: s_dim as u64,
            actions: a_dim as u64,
            transition_counts: agent
                .lifetime_counts()
                .transition_counts()
                .iter()
                .map(|&c| c as i64)
                .collect(),
            reward_sums: agent.lifetime_counts().reward_sums().to_vec(),
        })
        .collect();
    let replies = channel.exchange(&requests, &uploads)?;
    ensure!(
        replies.len() == agents.len(),
        "expected {} broadcasts, got {}",
        agents.len(),
        replies.len()
    );
    let (policy, n_global, epoch) = match &replies[0] {
        SyncMessage::PolicyBroadcast {
            epoch,
            policy,
            n_global,
            ..
        } => (
            Policy::new(policy.iter().map(|&a| a as usize).collect()),
            n_global.iter().map(|&n| n as u64).collect::<Vec<u64>>(),
            *epoch,
        ),
        other => {
            return Err(Error::invariant(format!(
                "barrier reply was not a policy broadcast: {other:?}"
            )))
        }
    };
    for reply in &replies[1..] {
        ensure!(
            reply == &replies[0],
            "agents received differing policy broadcasts in one round"
        );
    }
    ensure!(
        epoch == ledger.rounds() + 1,
        "coordinator epoch {epoch} disagrees with local round count {}",
        ledger.rounds()
    );
    for agent in agents.iter_mut() {
        agent.apply_sync(policy.clone(), &n_global)?;
    }
    ledger.record_round(t, n_global.clone())?;
    epochs.push(EpochRecord {
        t_start: t,
        start_agent: 0,
        n: n_global,
        nu_total: Vec::new(),
        policy: policy.action_of,
        triggers: Vec::new(),
    });
    Ok(())
}
