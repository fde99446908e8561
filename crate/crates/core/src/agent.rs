//! The per-agent loop: act by the current policy, update local counters,
//! and raise the synchronization trigger.
//!
//! Between barriers an agent owns its state exclusively; the runtime moves
//! agents across worker threads but never shares them mutably. All agents
//! start in state 0 of the environment.

use rand_chacha::ChaCha8Rng;

use crate::confidence::VisitationCounts;
use crate::error::{ensure, Result};
use crate::mdp::{MdpModel, Policy};
use crate::seeding;

/// True when the epoch count `nu` for one pair has reached `max{1, n_ref}/M`
/// — the synchronization trigger. Evaluated in exact integer arithmetic.
pub fn should_request_sync(nu: u64, n_ref: u64, m: usize) -> bool {
    nu.saturating_mul(m as u64) >= n_ref.max(1)
}

/// What one environment step produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    /// True when some pair's epoch count reached the trigger during this
    /// step. The barrier acts on it between this step and the next.
    pub sync_requested: bool,
}

/// One dist-UCRL agent: current state, epoch counters, lifetime counters,
/// the last broadcast policy, and the snapshot of the global counts that
/// drives the trigger.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub agent_id: usize,
    pub current_state: usize,
    /// Per-epoch visit counts ν(s,a), flat `[s][a]`; zeroed at each sync.
    nu: Vec<u64>,
    /// The agent's lifetime transition and reward counters.
    lifetime: VisitationCounts,
    policy: Policy,
    /// Snapshot of the global N(s,a) from the last synchronization.
    n_ref: Vec<u64>,
    n_agents: usize,
    rng: ChaCha8Rng,
    sync_requested: bool,
}

impl AgentState {
    /// Fresh agent before the first synchronization. The placeholder policy
    /// is replaced at the initial barrier (`t₁ = 1`) before any step runs.
    pub fn new(agent_id: usize, mdp: &MdpModel, n_agents: usize, master_seed: u64) -> Self {
        let s_dim = mdp.n_states();
        let a_dim = mdp.n_actions();
        AgentState {
            agent_id,
            current_state: 0,
            nu: vec![0; s_dim * a_dim],
            lifetime: VisitationCounts::zeros(s_dim, a_dim),
            policy: Policy::new(vec![0; s_dim]),
            n_ref: vec![0; s_dim * a_dim],
            n_agents,
            rng: seeding::stream(master_seed, seeding::PURPOSE_ENV, agent_id as u64),
            sync_requested: false,
        }
    }

    pub fn lifetime_counts(&self) -> &VisitationCounts {
        &self.lifetime
    }

    pub fn nu(&self) -> &[u64] {
        &self.nu
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn n_ref(&self) -> &[u64] {
        &self.n_ref
    }

    /// Plays the current policy for one step: samples the environment,
    /// increments ν and the lifetime counters, and re-evaluates the trigger.
    pub fn step(&mut self, mdp: &MdpModel) -> Result<StepOutcome> {
        let s = self.current_state;
        let a = self.policy.action(s);
        let (next, reward) = mdp.step(s, a, &mut self.rng)?;
        let sa = s * mdp.n_actions() + a;
        self.nu[sa] += 1;
        self.lifetime.record(s, a, next, reward);
        if should_request_sync(self.nu[sa], self.n_ref[sa], self.n_agents) {
            self.sync_requested = true;
        }
        self.current_state = next;
        Ok(StepOutcome {
            state: s,
            action: a,
            next_state: next,
            reward,
            sync_requested: self.sync_requested,
        })
    }

    pub fn sync_requested(&self) -> bool {
        self.sync_requested
    }

    /// Installs the broadcast policy and global-count snapshot at a barrier
    /// and opens a fresh epoch (ν zeroed, request flag cleared). Lifetime
    /// counters are preserved.
    pub fn apply_sync(&mut self, policy: Policy, n_global: &[u64]) -> Result<()> {
        ensure!(
            policy.n_states() == self.lifetime.n_states(),
            "policy has {} states, agent expects {}",
            policy.n_states(),
            self.lifetime.n_states()
        );
        ensure!(
            n_global.len() == self.n_ref.len(),
            "n_global has {} entries, agent expects {}",
            n_global.len(),
            self.n_ref.len()
        );
        self.policy = policy;
        self.n_ref.copy_from_slice(n_global);
        self.nu.iter_mut().for_each(|v| *v = 0);
        self.sync_requested = false;
        Ok(())
    }
}
