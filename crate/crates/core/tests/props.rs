//! Property tests for the spec-level invariants: the inner maximization
//! stays on the simplex and inside its ℓ1 budget while matching the
//! brute-force LP oracle, count aggregation is associative and commutative,
//! the sum-of-roots inequality holds on hypothesis-satisfying sequences,
//! and the file codecs are inverses.

mod common;

use distucrl::confidence::{aggregate, VisitationCounts};
use distucrl::evi::inner_max;
use distucrl::harness::check_sum_of_roots;
use distucrl::trace::{read_steps_csv, write_steps_csv};
use proptest::prelude::*;

/// A random distribution over `n` states (normalized positive weights).
fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3..1.0f64, n).prop_map(|mut weights| {
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        let total: f64 = weights.iter().sum();
        weights[0] += 1.0 - total;
        weights
    })
}

proptest! {
    #[test]
    fn inner_max_stays_feasible_and_beats_the_center(
        n in 2usize..6,
        d in 0.0..3.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = distucrl::seeding::stream(seed, distucrl::seeding::PURPOSE_BOUNDS, 9);
        use rand::Rng;
        let mut weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        let total: f64 = weights.iter().sum();
        weights[0] += 1.0 - total;
        let utilities: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();

        let q = inner_max(&weights, d, &utilities).unwrap();
        let sum: f64 = q.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|&p| p >= 0.0));
        let l1: f64 = q.iter().zip(&weights).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(l1 <= d + 1e-12);
        let objective: f64 = q.iter().zip(&utilities).map(|(a, b)| a * b).sum();
        let center: f64 = weights.iter().zip(&utilities).map(|(a, b)| a * b).sum();
        prop_assert!(objective >= center - 1e-12);
    }

    #[test]
    fn inner_max_matches_the_lp_oracle(
        q in distribution(4),
        d in 0.0..2.5f64,
        u in prop::collection::vec(-5.0..5.0f64, 4),
    ) {
        let got = inner_max(&q, d, &u).unwrap();
        let objective: f64 = got.iter().zip(&u).map(|(a, b)| a * b).sum();
        let oracle = common::lp_oracle_objective(&q, d, &u);
        prop_assert!((objective - oracle).abs() < 1e-9, "{objective} vs {oracle}");
    }

    #[test]
    fn mass_only_moves_up_the_utility_order(
        q in distribution(5),
        d in 0.0..2.0f64,
        u in prop::collection::vec(0.0..1.0f64, 5),
    ) {
        let got = inner_max(&q, d, &u).unwrap();
        let top = (0..5).max_by(|&i, &j| u[i].partial_cmp(&u[j]).unwrap().then(j.cmp(&i))).unwrap();
        for s in 0..5 {
            if got[s] > q[s] + 1e-12 {
                prop_assert_eq!(s, top);
            }
        }
    }

    #[test]
    fn aggregation_is_associative_and_commutative(
        cells in prop::collection::vec((0usize..3, 0usize..2, 0usize..3, 0u8..2), 0..40),
        split in 1usize..3,
    ) {
        let mut parts = vec![VisitationCounts::zeros(3, 2); 3];
        for (i, &(s, a, sp, r)) in cells.iter().enumerate() {
            parts[(i + split) % 3].record(s, a, sp, f64::from(r));
        }
        let forward = aggregate(&parts).unwrap();
        let mut reversed_parts = parts.clone();
        reversed_parts.reverse();
        let reversed = aggregate(&reversed_parts).unwrap();
        prop_assert_eq!(&forward, &reversed);
        // Associativity: fold pairwise in a different grouping.
        let left = aggregate(&parts[0..2]).unwrap();
        let grouped = aggregate(&[left, parts[2].clone()]).unwrap();
        prop_assert_eq!(&forward, &grouped);
    }

    #[test]
    fn sum_of_roots_inequality_holds_for_valid_sequences(
        fractions in prop::collection::vec(0.0..1.0f64, 1..30),
    ) {
        // Build a nondecreasing sequence satisfying z_k ≤ max(1, Σ_{i<k} z_i).
        let mut z = Vec::with_capacity(fractions.len());
        let mut prefix = 0.0f64;
        let mut last = 0.0f64;
        for f in fractions {
            let cap = prefix.max(1.0);
            let zk = last + (cap - last).max(0.0) * f;
            z.push(zk);
            prefix += zk;
            last = zk;
        }
        prop_assert!(check_sum_of_roots(&z).unwrap());
    }

    #[test]
    fn steps_csv_parser_inverts_the_writer(
        m in 1usize..4,
        horizon in 1u64..20,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = distucrl::seeding::stream(seed, distucrl::seeding::PURPOSE_BOUNDS, 10);
        let rows = m * horizon as usize;
        let mut epoch = 1u32;
        let mut rounds = 1u64;
        let mut steps = distucrl::trace::StepColumns::default();
        for _ in 0..rows {
            steps.rewards.push(f64::from(rng.random::<u8>()) / 255.0);
            if rng.random::<f64>() < 0.1 {
                epoch += 1;
                rounds += 1;
            }
            steps.epochs.push(epoch);
            steps.rounds_cum.push(rounds);
        }
        let trace = distucrl::trace::ExperimentTrace {
            meta: distucrl::trace::RunMeta {
                env: "riverswim6".into(),
                algo: distucrl::trace::Algorithm::DistUcrl,
                n_agents: m,
                horizon,
                seed: 0,
                n_states: 6,
                n_actions: 2,
                rho_star: 0.0,
                config_hash: "0".into(),
            },
            epochs: vec![],
            ledger: Default::default(),
            comm_rounds: 0,
            final_cum_reward: steps.rewards.iter().sum(),
            steps: steps.clone(),
            wall_ms: 0,
        };
        let mut buf = Vec::new();
        write_steps_csv(&trace, &mut buf).unwrap();
        let parsed = read_steps_csv(std::str::from_utf8(&buf).unwrap(), m, horizon).unwrap();
        prop_assert_eq!(parsed, steps);
    }
}
