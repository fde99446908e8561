//! Ground-truth tabular MDP representation and exact-analysis oracles.
//!
//! The model stores a row-stochastic transition kernel `P(s'|s,a)` and mean
//! rewards `r̄(s,a)` in `[0,1]`. Two solvers operate on the true model:
//! relative value iteration for the optimal gain `ρ*` and its bias vector,
//! and a hitting-time value iteration for the diameter
//! `D = max_{s'≠s} min_π E[T(s'|π,s)]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Tolerance for row-stochasticity checks at construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Reward distribution attached to each mean `r̄(s,a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardNoise {
    /// Reward is `Bernoulli(r̄(s,a))`: the maximal-variance distribution on
    /// `[0,1]` with the given mean.
    #[default]
    Bernoulli,
    /// Reward is exactly `r̄(s,a)` on every play.
    Deterministic,
}

/// A deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub action_of: Vec<usize>,
}

impl Policy {
    pub fn new(action_of: Vec<usize>) -> Self {
        Policy { action_of }
    }

    pub fn n_states(&self) -> usize {
        self.action_of.len()
    }

    pub fn action(&self, state: usize) -> usize {
        self.action_of[state]
    }
}

/// Optimal gain `ρ` together with a bias vector normalized to `min_s v(s) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
}

impl GainBias {
    /// `max v − min v`; with the normalization, simply `max v`.
    pub fn span(&self) -> f64 {
        let max = self.bias.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.bias.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Immutable tabular MDP: kernel, mean rewards, and reward noise model.
///
/// Shared read-only across concurrent agents; every agent owns its own
/// random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    n_states: usize,
    n_actions: usize,
    /// Flat `[s][a][s']` kernel, row-stochastic per `(s,a)`.
    transition: Vec<f64>,
    /// Flat `[s][a]` mean rewards in `[0,1]`.
    mean_reward: Vec<f64>,
    reward_noise: RewardNoise,
}

impl MdpModel {
    /// Validates and constructs a model. Every kernel row must sum to 1
    /// within `ROW_SUM_TOL` and every entry of `P` and `r̄` must lie in
    /// `[0,1]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        mean_reward: Vec<f64>,
        reward_noise: RewardNoise,
    ) -> Result<Self> {
        ensure!(n_states >= 1, "n_states must be positive");
        ensure!(n_actions >= 1, "n_actions must be positive");
        ensure!(
            transition.len() == n_states * n_actions * n_states,
            "transition tensor has {} entries, expected {}",
            transition.len(),
            n_states * n_actions * n_states
        );
        ensure!(
            mean_reward.len() == n_states * n_actions,
            "mean_reward matrix has {} entries, expected {}",
            mean_reward.len(),
            n_states * n_actions
        );
        for (i, &p) in transition.iter().enumerate() {
            ensure!(
                (0.0..=1.0).contains(&p),
                "transition entry {i} = {p} outside [0,1]"
            );
        }
        for (i, &r) in mean_reward.iter().enumerate() {
            ensure!(
                (0.0..=1.0).contains(&r),
                "mean reward entry {i} = {r} outside [0,1]"
            );
        }
        let model = MdpModel {
            n_states,
            n_actions,
            transition,
            mean_reward,
            reward_noise,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let sum: f64 = model.kernel_row(s, a).iter().sum();
                ensure!(
                    (sum - 1.0).abs() <= ROW_SUM_TOL,
                    "kernel row (s={s}, a={a}) sums to {sum}, not 1"
                );
            }
        }
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn reward_noise(&self) -> RewardNoise {
        self.reward_noise
    }

    /// The kernel row `P(·|s,a)`.
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.mean_reward[s * self.n_actions + a]
    }

    /// Plays `(s,a)` once: samples the next state from `P(·|s,a)` and the
    /// reward from the configured noise model with mean `r̄(s,a)`.
    ///
    /// Consumes exactly two draws from `rng` (transition, then reward) in
    /// every noise mode so traces replay bit-for-bit.
    pub fn step(&self, s: usize, a: usize, rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
        ensure!(s < self.n_states, "state {s} out of range [0,{})", self.n_states);
        ensure!(a < self.n_actions, "action {a} out of range [0,{})", self.n_actions);
        let u: f64 = rng.random();
        let row = self.kernel_row(s, a);
        let mut acc = 0.0;
        let mut next = self.n_states - 1;
        for (sp, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = sp;
                break;
            }
        }
        let v: f64 = rng.random();
        let mean = self.mean_reward(s, a);
        let reward = match self.reward_noise {
            RewardNoise::Bernoulli => {
                if v < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardNoise::Deterministic => mean,
        };
        Ok((next, reward))
    }
}

/// How relative value iteration pins down the free additive constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Subtract `min_s u(s)` every sweep.
    SubtractMin,
    /// Subtract `u(reference)` every sweep.
    Reference(usize),
}

const DEFAULT_GAIN_MAX_ITERS: usize = 10_000_000;

/// Optimal gain and bias of the true model by relative value iteration.
///
/// Sweeps `u ← max_a { r̄(s,a) + Σ_{s'} P(s'|s,a) u(s') }` and stops when the
/// span of the per-sweep difference drops below `tol`; the gain is reported
/// as `(max+min)/2` of the last difference vector. The returned bias is the
/// final utility vector shifted to `min_s v(s) = 0` and satisfies the
/// gain-bias Bellman relation within `tol`.
pub fn optimal_gain(mdp: &MdpModel, tol: f64) -> Result<GainBias> {
    let (gb, _) = relative_value_iteration(mdp, tol, DEFAULT_GAIN_MAX_ITERS, Normalization::SubtractMin)?;
    Ok(gb)
}

/// Greedy optimal policy extracted from the same relative value iteration.
/// Argmax ties break toward the lowest action index.
pub fn optimal_policy(mdp: &MdpModel, tol: f64) -> Result<Policy> {
    let (_, policy) = relative_value_iteration(mdp, tol, DEFAULT_GAIN_MAX_ITERS, Normalization::SubtractMin)?;
    Ok(policy)
}

/// Relative value iteration with an explicit normalization choice. The
/// per-sweep difference vector is shift-invariant, so the reported gain does
/// not depend on the normalization; the parameter exists so that tests can
/// assert exactly that.
pub fn relative_value_iteration(
    mdp: &MdpModel,
    tol: f64,
    max_iters: usize,
    norm: Normalization,
) -> Result<(GainBias, Policy)> {
    ensure!(tol > 0.0, "tol must be positive, got {tol}");
    if let Normalization::Reference(s) = norm {
        ensure!(s < mdp.n_states(), "reference state {s} out of range");
    }
    let n = mdp.n_states();
    let mut u = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut policy = vec![0usize; n];
    let mut last_span = f64::INFINITY;
    for _ in 0..max_iters {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..mdp.n_actions() {
                let q = mdp.mean_reward(s, a)
                    + dot(mdp.kernel_row(s, a), &u);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            policy[s] = best_a;
        }
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for s in 0..n {
            let d = next[s] - u[s];
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        last_span = dmax - dmin;
        if last_span < tol {
            let gain = 0.5 * (dmax + dmin);
            let min_u = next.iter().cloned().fold(f64::INFINITY, f64::min);
            let bias: Vec<f64> = next.iter().map(|v| v - min_u).collect();
            return Ok((GainBias { gain, bias }, Policy::new(policy)));
        }
        let shift = match norm {
            Normalization::SubtractMin => next.iter().cloned().fold(f64::INFINITY, f64::min),
            Normalization::Reference(s) => next[s],
        };
        for s in 0..n {
            u[s] = next[s] - shift;
        }
    }
    Err(Error::Diverged {
        what: "relative value iteration",
        iterations: max_iters,
        last_span,
    })
}

const DEFAULT_DIAMETER_MAX_ITERS: usize = 50_000_000;

/// Diameter of the MDP: `max_{s'≠s} min_π E[T(s'|π,s)]`, computed per
/// target state by value iteration on minimum expected hitting times
/// (`h(s') = 0`, `h(s) = 1 + min_a Σ P(·|s,a) h`).
///
/// Iterates from `h = 0` (monotone from below) and stops once a geometric
/// tail estimate of the remaining error falls under `tol`. A run past the
/// iteration cap reports `Error::Diverged`, which signals an effectively
/// infinite diameter.
pub fn diameter(mdp: &MdpModel, tol: f64) -> Result<f64> {
    diameter_capped(mdp, tol, DEFAULT_DIAMETER_MAX_ITERS)
}

pub fn diameter_capped(mdp: &MdpModel, tol: f64, max_iters: usize) -> Result<f64> {
    ensure!(tol > 0.0, "tol must be positive, got {tol}");
    let n = mdp.n_states();
    let mut worst = 0.0f64;
    for target in 0..n {
        let h = min_hitting_times(mdp, target, tol, max_iters)?;
        for (s, &hs) in h.iter().enumerate() {
            if s != target {
                worst = worst.max(hs);
            }
        }
    }
    Ok(worst)
}

/// Minimum expected hitting times to `target` from every state.
fn min_hitting_times(mdp: &MdpModel, target: usize, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let mut h = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut prev_diff = f64::INFINITY;
    let mut last_span = f64::INFINITY;
    for _ in 0..max_iters {
        for s in 0..n {
            if s == target {
                next[s] = 0.0;
                continue;
            }
            let mut best = f64::INFINITY;
            for a in 0..mdp.n_actions() {
                let v = 1.0 + dot(mdp.kernel_row(s, a), &h);
                best = best.min(v);
            }
            next[s] = best;
        }
        let mut diff = 0.0f64;
        for s in 0..n {
            diff = diff.max(next[s] - h[s]);
        }
        std::mem::swap(&mut h, &mut next);
        last_span = diff;
        // h_k increases monotonically toward the fixed point with
        // asymptotically geometric increments; stop once the extrapolated
        // tail diff·r/(1−r) is safely below tol.
        if diff < tol {
            let ratio = if prev_diff > 0.0 { diff / prev_diff } else { 0.0 };
            if ratio < 1.0 && diff * ratio / (1.0 - ratio) < 0.5 * tol {
                return Ok(h);
            }
        }
        prev_diff = diff;
    }
    Err(Error::Diverged {
        what: "hitting-time value iteration",
        iterations: max_iters,
        last_span,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
