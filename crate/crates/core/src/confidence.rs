//! Empirical model estimation and the confidence radii defining the
//! plausible-MDP set.
//!
//! At a synchronization at global time `t` with `N(s,a)` pooled samples per
//! pair, the plausible set is centered on the empirical kernel and rewards
//! with radii
//!
//! ```text
//! reward:     √( 7·ln(2·M·S·A·t) / (2·max{1, N(s,a)}) )
//! transition: √( 14·S·ln(2·M·A·t) /   max{1, N(s,a)}  )
//! ```
//!
//! All logarithms here are natural logarithms. The radii use the global
//! elapsed per-agent time `t`, not the pooled sample count `M·t`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Per-agent (or pooled) visitation counters: transition counts
/// `C(s,a,s')`, reward sums `R(s,a)`, and the derived visit counts
/// `N(s,a) = Σ_{s'} C(s,a,s')`.
///
/// Single-writer between synchronizations; aggregation happens only at the
/// coordinator barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitationCounts {
    n_states: usize,
    n_actions: usize,
    transition_counts: Vec<u64>,
    reward_sums: Vec<f64>,
}

impl VisitationCounts {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        VisitationCounts {
            n_states,
            n_actions,
            transition_counts: vec![0; n_states * n_actions * n_states],
            reward_sums: vec![0.0; n_states * n_actions],
        }
    }

    /// Rebuilds counters from flat arrays (wire uploads).
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        transition_counts: Vec<u64>,
        reward_sums: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            transition_counts.len() == n_states * n_actions * n_states,
            "transition_counts has {} entries, expected {}",
            transition_counts.len(),
            n_states * n_actions * n_states
        );
        ensure!(
            reward_sums.len() == n_states * n_actions,
            "reward_sums has {} entries, expected {}",
            reward_sums.len(),
            n_states * n_actions
        );
        Ok(VisitationCounts {
            n_states,
            n_actions,
            transition_counts,
            reward_sums,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition_counts(&self) -> &[u64] {
        &self.transition_counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    /// Records one observed transition `(s,a) → s'` with reward `r`.
    pub fn record(&mut self, s: usize, a: usize, s_next: usize, reward: f64) {
        self.transition_counts[(s * self.n_actions + a) * self.n_states + s_next] += 1;
        self.reward_sums[s * self.n_actions + a] += reward;
    }

    pub fn transition_count(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.transition_counts[(s * self.n_actions + a) * self.n_states + s_next]
    }

    pub fn reward_sum(&self, s: usize, a: usize) -> f64 {
        self.reward_sums[s * self.n_actions + a]
    }

    /// `N(s,a) = Σ_{s'} C(s,a,s')`.
    pub fn visit_count(&self, s: usize, a: usize) -> u64 {
        let base = (s * self.n_actions + a) * self.n_states;
        self.transition_counts[base..base + self.n_states].iter().sum()
    }

    /// All `N(s,a)` as a flat `[s][a]` matrix.
    pub fn visit_counts(&self) -> Vec<u64> {
        let mut n = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                n.push(self.visit_count(s, a));
            }
        }
        n
    }

    /// Total samples across all pairs.
    pub fn total(&self) -> u64 {
        self.transition_counts.iter().sum()
    }

    /// Adds `other` elementwise into `self`.
    pub fn add_assign(&mut self, other: &VisitationCounts) -> Result<()> {
        ensure!(
            self.n_states == other.n_states && self.n_actions == other.n_actions,
            "dimension mismatch: ({},{}) vs ({},{})",
            self.n_states,
            self.n_actions,
            other.n_states,
            other.n_actions
        );
        for (x, y) in self.transition_counts.iter_mut().zip(&other.transition_counts) {
            *x += y;
        }
        for (x, y) in self.reward_sums.iter_mut().zip(&other.reward_sums) {
            *x += y;
        }
        Ok(())
    }
}

/// Elementwise sum of per-agent counters.
pub fn aggregate(per_agent: &[VisitationCounts]) -> Result<VisitationCounts> {
    ensure!(!per_agent.is_empty(), "aggregate requires at least one counter set");
    let mut total = VisitationCounts::zeros(per_agent[0].n_states, per_agent[0].n_actions);
    for counts in per_agent {
        total.add_assign(counts)?;
    }
    Ok(total)
}

/// Reward confidence radius `√(7·ln(2MSAt) / (2·max{1,N}))`.
pub fn reward_radius(n_visits: u64, t: u64, m: usize, s: usize, a: usize) -> Result<f64> {
    ensure!(t >= 1, "time index must be ≥ 1, got {t}");
    let log_term = (2.0 * m as f64 * s as f64 * a as f64 * t as f64).ln();
    Ok((7.0 * log_term / (2.0 * n_visits.max(1) as f64)).sqrt())
}

/// Transition confidence radius `√(14·S·ln(2MAt) / max{1,N})`.
pub fn transition_radius(n_visits: u64, t: u64, m: usize, s: usize, a: usize) -> Result<f64> {
    ensure!(t >= 1, "time index must be ≥ 1, got {t}");
    let log_term = (2.0 * m as f64 * a as f64 * t as f64).ln();
    Ok((14.0 * s as f64 * log_term / n_visits.max(1) as f64).sqrt())
}

/// Empirical estimates plus per-pair radii: the data EVI optimizes over.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleSet {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    /// Global time index the radii were computed at.
    pub t: u64,
    /// Flat `[s][a][s']` empirical kernel; rows with `N = 0` are uniform.
    pub p_hat: Vec<f64>,
    /// Flat `[s][a]` empirical mean rewards.
    pub r_hat: Vec<f64>,
    /// Flat `[s][a]` optimistic rewards `r̂ + reward_radius`, not clipped at
    /// 1 unless requested.
    pub r_tilde: Vec<f64>,
    /// Flat `[s][a]` transition radii.
    pub d: Vec<f64>,
    /// Flat `[s][a]` visit counts the set was built from.
    pub n_visits: Vec<u64>,
}

impl PlausibleSet {
    pub fn p_hat_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.p_hat[base..base + self.n_states]
    }

    pub fn r_tilde_at(&self, s: usize, a: usize) -> f64 {
        self.r_tilde[s * self.n_actions + a]
    }

    pub fn d_at(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.n_actions + a]
    }
}

/// Builds the plausible set from pooled counts at time `t` for `m` agents.
///
/// Pairs with `N(s,a) = 0` get a uniform empirical row: the verbatim
/// `C/max{1,N}` division would give an all-zero, non-stochastic row, and the
/// cold-start radii (`≥ √(14·S·ln 4) > 2`) cover the whole simplex anyway.
/// `clip_optimistic_reward` clips `r̃` at 1 when set.
pub fn build_plausible_set(
    global: &VisitationCounts,
    t: u64,
    m: usize,
    clip_optimistic_reward: bool,
) -> Result<PlausibleSet> {
    ensure!(t >= 1, "time index must be ≥ 1, got {t}");
    ensure!(m >= 1, "agent count must be ≥ 1, got {m}");
    let s_dim = global.n_states();
    let a_dim = global.n_actions();
    let mut p_hat = vec![0.0f64; s_dim * a_dim * s_dim];
    let mut r_hat = vec![0.0f64; s_dim * a_dim];
    let mut r_tilde = vec![0.0f64; s_dim * a_dim];
    let mut d = vec![0.0f64; s_dim * a_dim];
    let mut n_visits = vec![0u64; s_dim * a_dim];
    for s in 0..s_dim {
        for a in 0..a_dim {
            let sa = s * a_dim + a;
            let n = global.visit_count(s, a);
            n_visits[sa] = n;
            let base = sa * s_dim;
            if n == 0 {
                let u = 1.0 / s_dim as f64;
                for sp in 0..s_dim {
                    p_hat[base + sp] = u;
                }
            } else {
                for sp in 0..s_dim {
                    p_hat[base + sp] = global.transition_count(s, a, sp) as f64 / n as f64;
                }
            }
            r_hat[sa] = global.reward_sum(s, a) / n.max(1) as f64;
            let mut rt = r_hat[sa] + reward_radius(n, t, m, s_dim, a_dim)?;
            if clip_optimistic_reward {
                rt = rt.min(1.0);
            }
            r_tilde[sa] = rt;
            d[sa] = transition_radius(n, t, m, s_dim, a_dim)?;
        }
    }
    Ok(PlausibleSet {
        n_states: s_dim,
        n_actions: a_dim,
        n_agents: m,
        t,
        p_hat,
        r_hat,
        r_tilde,
        d,
        n_visits,
    })
}
