//! Independent oracles for integration tests. Everything here recomputes
//! results by a different route than the library: exact linear solves,
//! exhaustive policy enumeration, brute-force LP over orderings, and
//! graph search. None of it shares code with the implementation paths it
//! checks.

#![allow(dead_code)]

use distucrl::mdp::MdpModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting; returns None on a (near-)
/// singular system.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Long-run average reward of a deterministic policy, via the stationary
/// distribution of its induced chain (valid for unichain policies).
pub fn policy_gain_by_stationary_distribution(mdp: &MdpModel, policy: &[usize]) -> Option<f64> {
    let n = mdp.n_states();
    // Solve μᵀ(P − I) = 0 with Σμ = 1: rows are the balance equations with
    // the last one replaced by the normalization.
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        let row = mdp.kernel_row(s, policy[s]);
        for (sp, &p) in row.iter().enumerate() {
            a[sp][s] += p;
        }
        a[s][s] -= 1.0;
    }
    for s in 0..n {
        a[n - 1][s] = 1.0;
    }
    b[n - 1] = 1.0;
    let mu = solve_linear(a, b)?;
    if mu.iter().any(|&x| x < -1e-9) {
        return None;
    }
    Some(
        (0..n)
            .map(|s| mu[s].max(0.0) * mdp.mean_reward(s, policy[s]))
            .sum(),
    )
}

/// Enumerates all `A^S` deterministic policies.
pub fn all_policies(n_states: usize, n_actions: usize) -> Vec<Vec<usize>> {
    let total = n_actions.pow(n_states as u32);
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut policy = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            policy.push(code % n_actions);
            code /= n_actions;
        }
        out.push(policy);
    }
    out
}

/// Optimal gain by exhaustive policy enumeration (unichain MDPs).
pub fn optimal_gain_by_enumeration(mdp: &MdpModel) -> f64 {
    all_policies(mdp.n_states(), mdp.n_actions())
        .iter()
        .filter_map(|policy| policy_gain_by_stationary_distribution(mdp, policy))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Expected hitting times to `target` under a fixed policy, by exact linear
/// solve. `None` entries mean the target is unreachable (infinite time).
pub fn policy_hitting_times(mdp: &MdpModel, policy: &[usize], target: usize) -> Vec<Option<f64>> {
    let n = mdp.n_states();
    // Reachability of the target under the policy's positive-probability
    // edges, for each start state.
    let mut reaches = vec![false; n];
    reaches[target] = true;
    loop {
        let mut changed = false;
        for s in 0..n {
            if reaches[s] || s == target {
                continue;
            }
            let row = mdp.kernel_row(s, policy[s]);
            if row.iter().enumerate().any(|(sp, &p)| p > 0.0 && reaches[sp]) {
                reaches[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // E[T] is finite from s iff every state reachable from s without
    // passing the target also reaches the target.
    let mut finite = vec![false; n];
    for s in 0..n {
        if s == target {
            finite[s] = true;
            continue;
        }
        if !reaches[s] {
            continue;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![s];
        seen[s] = true;
        let mut ok = true;
        while let Some(v) = stack.pop() {
            if v == target {
                continue;
            }
            if !reaches[v] {
                ok = false;
                break;
            }
            let row = mdp.kernel_row(v, policy[v]);
            for (sp, &p) in row.iter().enumerate() {
                if p > 0.0 && !seen[sp] {
                    seen[sp] = true;
                    stack.push(sp);
                }
            }
        }
        finite[s] = ok;
    }
    // Solve (I − Q)h = 1 over the finite, non-target states.
    let idx: Vec<usize> = (0..n).filter(|&s| s != target && finite[s]).collect();
    let k = idx.len();
    let mut h = vec![None; n];
    h[target] = Some(0.0);
    if k > 0 {
        let mut a = vec![vec![0.0; k]; k];
        let b = vec![1.0; k];
        for (ri, &s) in idx.iter().enumerate() {
            let row = mdp.kernel_row(s, policy[s]);
            a[ri][ri] += 1.0;
            for (ci, &sp) in idx.iter().enumerate() {
                a[ri][ci] -= row[sp];
            }
        }
        if let Some(sol) = solve_linear(a, b) {
            for (ri, &s) in idx.iter().enumerate() {
                if sol[ri].is_finite() && sol[ri] >= 0.0 {
                    h[s] = Some(sol[ri]);
                }
            }
        }
    }
    h
}

/// Diameter by brute force: for every ordered pair, the minimum over all
/// policies of the exact expected hitting time; then the max over pairs.
pub fn diameter_by_enumeration(mdp: &MdpModel) -> f64 {
    let n = mdp.n_states();
    let policies = all_policies(n, mdp.n_actions());
    let mut best = vec![vec![f64::INFINITY; n]; n];
    for policy in &policies {
        for target in 0..n {
            let h = policy_hitting_times(mdp, policy, target);
            for s in 0..n {
                if s == target {
                    continue;
                }
                if let Some(value) = h[s] {
                    if value < best[s][target] {
                        best[s][target] = value;
                    }
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for s in 0..n {
        for target in 0..n {
            if s != target {
                worst = worst.max(best[s][target]);
            }
        }
    }
    worst
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, arr: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(arr.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, arr, out);
            if k % 2 == 0 {
                arr.swap(i, k - 1);
            } else {
                arr.swap(0, k - 1);
            }
        }
    }
    let mut arr: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut arr, &mut out);
    out
}

/// Brute-force LP oracle for the inner maximization: the optimum of
/// `max q·u` over `{q ∈ simplex, ‖q − p̂‖₁ ≤ d}` is attained by a
/// receive-then-drain filling for *some* ordering of the states; trying
/// every ordering and keeping the best is therefore exact.
pub fn lp_oracle_objective(p_hat: &[f64], d: f64, u: &[f64]) -> f64 {
    let n = p_hat.len();
    let mut best = f64::NEG_INFINITY;
    for order in permutations(n) {
        let receiver = order[0];
        let mut q = p_hat.to_vec();
        q[receiver] = (p_hat[receiver] + d / 2.0).min(1.0);
        let mut excess: f64 = q.iter().sum::<f64>() - 1.0;
        for &s in order.iter().skip(1).rev() {
            if excess <= 0.0 {
                break;
            }
            let take = q[s].min(excess);
            q[s] -= take;
            excess -= take;
        }
        let value: f64 = q.iter().zip(u).map(|(a, b)| a * b).sum();
        if value > best {
            best = value;
        }
    }
    best
}

/// Samples a dense random tabular MDP (Dirichlet(1) kernel rows, uniform
/// rewards); such models are irreducible and aperiodic with probability 1.
pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> MdpModel {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states)
            .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
            .collect();
        let sum: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= sum;
        }
        // Exact renormalization of the largest entry absorbs float error.
        let total: f64 = row.iter().sum();
        let argmax = (0..n_states)
            .max_by(|&i, &j| row[i].partial_cmp(&row[j]).unwrap())
            .unwrap();
        row[argmax] += 1.0 - total;
        transition.extend(row);
    }
    let mean_reward: Vec<f64> = (0..n_states * n_actions).map(|_| rng.random()).collect();
    MdpModel::new(
        n_states,
        n_actions,
        transition,
        mean_reward,
        distucrl::mdp::RewardNoise::Bernoulli,
    )
    .expect("random model is valid")
}

/// A plausible set that is exactly the true model: zero radii, true kernel,
/// true rewards. Feeding it to EVI reduces the extended backup to plain
/// value iteration on the model.
pub fn exact_plausible_set(mdp: &MdpModel) -> distucrl::confidence::PlausibleSet {
    let s_dim = mdp.n_states();
    let a_dim = mdp.n_actions();
    let mut p_hat = Vec::with_capacity(s_dim * a_dim * s_dim);
    let mut r = Vec::with_capacity(s_dim * a_dim);
    for s in 0..s_dim {
        for a in 0..a_dim {
            p_hat.extend_from_slice(mdp.kernel_row(s, a));
            r.push(mdp.mean_reward(s, a));
        }
    }
    distucrl::confidence::PlausibleSet {
        n_states: s_dim,
        n_actions: a_dim,
        n_agents: 1,
        t: 1,
        p_hat,
        r_hat: r.clone(),
        r_tilde: r,
        d: vec![0.0; s_dim * a_dim],
        n_visits: vec![1; s_dim * a_dim],
    }
}

/// Max-min shortest path length over the free-cell graph of the gridworld
/// under deterministic moves (blocked moves stay in place).
pub fn gridworld_bfs_diameter() -> f64 {
    let cells = distucrl::envs::gridworld_cells();
    let n = cells.len();
    let index_of = |r: isize, c: isize| -> Option<usize> {
        if r < 0 || c < 0 {
            return None;
        }
        cells.iter().position(|&cell| cell == (r as usize, c as usize))
    };
    let mut worst = 0usize;
    for start in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let (r, c) = cells[v];
            for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                if let Some(next) = index_of(r as isize + dr, c as isize + dc) {
                    if dist[next] == usize::MAX {
                        dist[next] = dist[v] + 1;
                        queue.push_back(next);
                    }
                }
            }
        }
        for &d in &dist {
            assert_ne!(d, usize::MAX, "free-cell graph must be connected");
            worst = worst.max(d);
        }
    }
    worst as f64
}
