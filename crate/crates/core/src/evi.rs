//! Extended value iteration: an ε-optimal policy for the optimistic MDP in
//! the plausible set.
//!
//! Each backup maximizes over actions and, inside each action, over the
//! ℓ1 ball of kernels around the empirical row. The inner maximization has
//! the classic closed form: move up to `d/2` extra mass onto the
//! highest-utility state, then drain mass from states in ascending utility
//! order until the row is a distribution again.

use serde::{Deserialize, Serialize};

use crate::confidence::PlausibleSet;
use crate::error::{ensure, Result};
use crate::mdp::Policy;

/// Tolerance for "is a distribution" checks on inner-max inputs.
const DISTRIBUTION_TOL: f64 = 1e-9;

/// Outcome of one extended value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EviResult {
    pub policy: Policy,
    /// Final utility vector (normalized to `min = 0`).
    pub utilities: Vec<f64>,
    /// `(max+min)/2` of the last per-sweep difference vector.
    pub gain_estimate: f64,
    pub iterations: usize,
    /// True when the difference span dropped below ε within the cap.
    pub converged: bool,
}

/// The distribution over next states maximizing `Σ q(s')·u(s')` subject to
/// `‖q − p̂‖₁ ≤ d` and `q` lying on the simplex.
///
/// Utility-sort ties break by ascending state index, which makes the result
/// deterministic for reproducible traces.
pub fn inner_max(p_hat_row: &[f64], d: f64, utilities: &[f64]) -> Result<Vec<f64>> {
    ensure!(d >= 0.0, "radius must be nonnegative, got {d}");
    ensure!(
        p_hat_row.len() == utilities.len(),
        "row has {} entries but utilities has {}",
        p_hat_row.len(),
        utilities.len()
    );
    let sum: f64 = p_hat_row.iter().sum();
    ensure!(
        (sum - 1.0).abs() <= DISTRIBUTION_TOL && p_hat_row.iter().all(|&p| p >= -DISTRIBUTION_TOL),
        "p_hat_row is not a distribution (sum {sum})"
    );
    let order = utility_order(utilities);
    let mut q = vec![0.0; p_hat_row.len()];
    inner_max_into(&mut q, p_hat_row, d, &order);
    Ok(q)
}

/// States sorted by descending utility, ties by ascending index.
fn utility_order(utilities: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&i, &j| {
        utilities[j]
            .partial_cmp(&utilities[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    order
}

/// Core of the inner maximization with a precomputed utility order
/// (`order[0]` is the highest-utility state). Shared by all `(s,a)` backups
/// of one sweep, which all see the same utility vector; writes into the
/// caller's scratch row to keep the hot loop allocation-free.
fn inner_max_into(q: &mut [f64], p_hat_row: &[f64], d: f64, order: &[usize]) {
    q.copy_from_slice(p_hat_row);
    let top = order[0];
    q[top] = (p_hat_row[top] + d / 2.0).min(1.0);
    let mut excess: f64 = q.iter().sum::<f64>() - 1.0;
    // Drain from the lowest-utility end of the order.
    for &s in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if s == top {
            continue;
        }
        let take = q[s].min(excess);
        q[s] -= take;
        excess -= take;
    }
}

/// Runs extended value iteration on `set` until the span of the per-sweep
/// difference drops below `epsilon`.
///
/// The greedy policy of the final backup is returned; argmax ties break by
/// ascending action index. Utilities are renormalized (`min = 0`) every
/// sweep, which leaves differences, spans, and argmaxes unchanged while
/// preventing unbounded growth on long runs. Hitting the iteration cap
/// returns `converged = false` and leaves the caller to decide.
pub fn extended_value_iteration(set: &PlausibleSet, epsilon: f64, max_iters: usize) -> Result<EviResult> {
    ensure!(epsilon > 0.0, "epsilon must be positive, got {epsilon}");
    let n = set.n_states;
    let n_actions = set.n_actions;
    let mut u = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut scratch = vec![0.0f64; n];
    let mut policy = vec![0usize; n];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let order = utility_order(&u);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..n_actions {
                inner_max_into(&mut scratch, set.p_hat_row(s, a), set.d_at(s, a), &order);
                let value = set.r_tilde_at(s, a)
                    + scratch.iter().zip(&u).map(|(qi, ui)| qi * ui).sum::<f64>();
                if value > best {
                    best = value;
                    best_a = a;
                }
            }
            next[s] = best;
            policy[s] = best_a;
        }
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for s in 0..n {
            let diff = next[s] - u[s];
            dmin = dmin.min(diff);
            dmax = dmax.max(diff);
        }
        let min_next = next.iter().cloned().fold(f64::INFINITY, f64::min);
        for s in 0..n {
            u[s] = next[s] - min_next;
        }
        if dmax - dmin < epsilon {
            return Ok(EviResult {
                policy: Policy::new(policy),
                utilities: u,
                gain_estimate: 0.5 * (dmax + dmin),
                iterations,
                converged: true,
            });
        }
    }
    Ok(EviResult {
        policy: Policy::new(policy),
        utilities: u,
        gain_estimate: f64::NAN,
        iterations,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::{build_plausible_set, VisitationCounts};

    #[test]
    fn zero_radius_returns_the_row_unchanged() {
        let row = [0.5, 0.3, 0.2];
        let q = inner_max(&row, 0.0, &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(q, row.to_vec());
    }

    #[test]
    fn full_radius_concentrates_on_argmax_utility() {
        let q = inner_max(&[0.5, 0.3, 0.2], 2.0, &[1.0, 5.0, 2.0]).unwrap();
        for (got, want) in q.iter().zip([0.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-15, "{q:?}");
        }
    }

    #[test]
    fn frozen_example_instance() {
        let q = inner_max(&[0.5, 0.3, 0.2], 0.4, &[3.0, 1.0, 2.0]).unwrap();
        for (got, want) in q.iter().zip([0.7, 0.1, 0.2]) {
            assert!((got - want).abs() < 1e-12, "{q:?}");
        }
    }

    #[test]
    fn output_is_a_distribution_within_the_ball() {
        let row = [0.25, 0.25, 0.25, 0.25];
        for d in [0.0, 0.1, 0.7, 1.3, 2.0, 5.0] {
            let q = inner_max(&row, d, &[0.1, 0.9, 0.4, 0.2]).unwrap();
            let sum: f64 = q.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(q.iter().all(|&p| p >= 0.0));
            let l1: f64 = q.iter().zip(&row).map(|(a, b)| (a - b).abs()).sum();
            assert!(l1 <= d + 1e-12);
        }
    }

    #[test]
    fn rejects_non_distribution_input() {
        assert!(inner_max(&[0.5, 0.4], 0.1, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn mass_never_moves_down_the_utility_order() {
        // Relative to p̂, a state may only gain mass if no higher-utility
        // state lost any; with this routine only the top state gains.
        let row = [0.2, 0.3, 0.1, 0.4];
        let u = [0.5, 2.0, 1.0, 0.1];
        let q = inner_max(&row, 0.6, &u).unwrap();
        for s in 0..4 {
            if q[s] > row[s] + 1e-15 {
                assert_eq!(s, 1, "only the top-utility state may gain mass");
            }
        }
    }

    #[test]
    fn single_state_set_returns_best_optimistic_reward() {
        let mut counts = VisitationCounts::zeros(1, 2);
        counts.record(0, 0, 0, 0.0);
        counts.record(0, 1, 0, 1.0);
        let set = build_plausible_set(&counts, 1, 1, false).unwrap();
        let res = extended_value_iteration(&set, 1e-9, 10_000).unwrap();
        assert!(res.converged);
        let best = set.r_tilde_at(0, 0).max(set.r_tilde_at(0, 1));
        assert!((res.gain_estimate - best).abs() < 1e-9);
        assert_eq!(res.policy.action(0), 1);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        // One observation breaks the cold-start symmetry so the first sweep
        // cannot already be stationary.
        let mut counts = VisitationCounts::zeros(4, 2);
        counts.record(0, 0, 1, 1.0);
        let set = build_plausible_set(&counts, 1, 1, false).unwrap();
        let res = extended_value_iteration(&set, 1e-14, 1).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }
}
