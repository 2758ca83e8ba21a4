//! Environment-level invariants and the spec'd validation behaviors.

use oppo_core::instances;
use oppo_core::mdp::{
    tabular_to_linear, FeatureMap, LinearMdp, RewardFunction, StochasticKernel, Violation,
};
use oppo_core::oracles;
use oppo_core::policy::Policy;
use oppo_core::seeding;
use proptest::prelude::*;
use rand::Rng;

fn random_kernel(seed: u64, s: usize, a: usize) -> StochasticKernel {
    let mut rng = seeding::rng_from(seed);
    let mut rows = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        let raw: Vec<f64> = (0..s).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        rows.extend(raw.into_iter().map(|v| v / sum));
    }
    StochasticKernel::from_flat(s, a, rows).unwrap()
}

#[test]
fn tabular_embedding_returns_original_rows_exactly() {
    let kernels: Vec<StochasticKernel> = (0..3).map(|h| random_kernel(h, 4, 2)).collect();
    let mdp = tabular_to_linear(&kernels, 0).unwrap();
    assert_eq!(mdp.feature_dim(), 4 * 4 * 2);
    for (step, kernel) in kernels.iter().enumerate() {
        for state in 0..4 {
            for action in 0..2 {
                let row = mdp.transition_distribution(step, state, action).unwrap();
                for (p, q) in row.iter().zip(kernel.row(state, action)) {
                    assert!((p - q).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn deterministic_chain_rows_are_one_hot() {
    let lock = instances::combination_lock(3, 2, 1.0, 3).unwrap();
    let row = lock
        .mdp
        .transition_distribution(0, 0, lock.combination[0])
        .unwrap();
    let expected: Vec<f64> = (0..5).map(|x| if x == 1 { 1.0 } else { 0.0 }).collect();
    assert_eq!(row, expected);
}

#[test]
fn mixture_transitions_blend_base_kernels() {
    let q1 = random_kernel(10, 3, 2);
    let q2 = random_kernel(11, 3, 2);
    let features = FeatureMap::mixture(vec![q1.clone(), q2.clone()]).unwrap();
    let theta = vec![vec![0.3, 0.7]; 2];
    let mdp = LinearMdp::new(features, theta, 0).unwrap();
    for step in 0..2 {
        for state in 0..3 {
            for action in 0..2 {
                let row = mdp.transition_distribution(step, state, action).unwrap();
                for (next, p) in row.iter().enumerate() {
                    let expected =
                        0.3 * q1.row(state, action)[next] + 0.7 * q2.row(state, action)[next];
                    assert!((p - expected).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn scaling_theta_breaks_row_sums_everywhere() {
    let mdp = instances::random_tabular(2, 3, 2, 1.0, 17).unwrap();
    let doubled: Vec<Vec<f64>> = (0..2)
        .map(|h| mdp.theta(h).iter().map(|v| 2.0 * v).collect())
        .collect();
    let broken = LinearMdp::new(mdp.features().clone(), doubled, 0).unwrap();
    let report = broken.validate(2, 0);
    let row_sum_violations: Vec<_> = report
        .violations
        .iter()
        .filter_map(|v| match v {
            Violation::RowSum { sum, .. } => Some(*sum),
            _ => None,
        })
        .collect();
    assert_eq!(row_sum_violations.len(), 2 * 3 * 2);
    for sum in row_sum_violations {
        assert!((sum - 2.0).abs() < 1e-9);
    }
}

#[test]
fn generator_instances_pass_validation() {
    for seed in 0..25u64 {
        let report = instances::random_tabular(3, 4, 3, 1.0, seed)
            .unwrap()
            .validate(3, seed);
        assert!(report.is_valid());
        let report = instances::random_linear(3, 4, 3, 4, 1.0, seed)
            .unwrap()
            .validate(3, seed);
        assert!(report.is_valid());
    }
}

#[test]
fn feature_expectation_spec_cases() {
    let mdp = instances::random_tabular(2, 3, 2, 1.0, 5).unwrap();
    let zeros = mdp.feature_expectation(1, 0, &[0.0; 3]);
    assert!(zeros.iter().all(|&v| v == 0.0));

    // Indicator of state 2 picks out the basis slice.
    let indicator = [0.0, 0.0, 1.0];
    let phi = mdp.feature_expectation(1, 1, &indicator);
    let (state, action, next) = (1, 1, 2);
    let slot = (state * mdp.num_actions() + action) * mdp.num_states() + next;
    for (i, v) in phi.iter().enumerate() {
        let expected = if i == slot { 1.0 } else { 0.0 };
        assert_eq!(*v, expected);
    }

    // V = 1: the row-sum identity gives <phi, theta_h> = 1.
    let ones = [1.0; 3];
    for step in 0..2 {
        for state in 0..3 {
            for action in 0..2 {
                let phi = mdp.feature_expectation(state, action, &ones);
                let ip: f64 = phi.iter().zip(mdp.theta(step)).map(|(a, b)| a * b).sum();
                assert!((ip - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn feature_expectation_inner_product_equals_bellman_backup() {
    for seed in 0..10u64 {
        let mdp = instances::random_linear(3, 4, 2, 3, 1.0, seed).unwrap();
        let mut rng = seeding::rng_from(seed + 100);
        let values: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..3.0)).collect();
        for step in 0..3 {
            for state in 0..4 {
                for action in 0..2 {
                    let phi = mdp.feature_expectation(state, action, &values);
                    let lhs: f64 = phi.iter().zip(mdp.theta(step)).map(|(a, b)| a * b).sum();
                    let row = mdp.transition_distribution(step, state, action).unwrap();
                    let rhs: f64 = row.iter().zip(&values).map(|(p, v)| p * v).sum();
                    assert!((lhs - rhs).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn same_seed_episodes_are_identical_and_deterministic_cases_ignore_seed() {
    let lock = instances::combination_lock(3, 2, 1.0, 9).unwrap();
    let mut actions = vec![0usize; 3 * lock.mdp.num_states()];
    for (step, &c) in lock.combination.iter().enumerate() {
        actions[step * lock.mdp.num_states() + step] = c;
    }
    let policy = Policy::deterministic(3, lock.mdp.num_states(), 2, &actions).unwrap();
    let mut a = seeding::rng_from(1);
    let mut b = seeding::rng_from(999);
    let ta = lock
        .mdp
        .run_episode(&policy, &lock.reward, 1, &mut a)
        .unwrap();
    let tb = lock
        .mdp
        .run_episode(&policy, &lock.reward, 1, &mut b)
        .unwrap();
    assert_eq!(ta.states, tb.states);
    assert_eq!(ta.states, vec![0, 1, 2, 3]);

    let mdp = instances::random_tabular(3, 3, 2, 1.0, 4).unwrap();
    let reward = RewardFunction::constant(3, 3, 2, 0.5).unwrap();
    let uniform = Policy::uniform(3, 3, 2);
    let run = |seed: u64| {
        let mut rng = seeding::rng_from(seed);
        mdp.run_episode(&uniform, &reward, 1, &mut rng).unwrap()
    };
    assert_eq!(run(42), run(42));
}

#[test]
fn empirical_visits_match_exact_occupancy_within_three_sigma() {
    // Two-state symmetric chain: every transition row is (1/2, 1/2).
    let rows = vec![0.5; 2 * 2 * 2];
    let kernel = StochasticKernel::from_flat(2, 2, rows).unwrap();
    let kernels = vec![kernel.clone(), kernel.clone(), kernel];
    let mdp = tabular_to_linear(&kernels, 0).unwrap();
    let policy = Policy::uniform(3, 2, 2);
    let reward = RewardFunction::constant(3, 2, 2, 0.0).unwrap();
    let occupancy = oracles::occupancy_states(&mdp, &policy).unwrap();

    let episodes = 10_000usize;
    let mut counts = [0usize; 3 * 2];
    for k in 0..episodes {
        let mut rng = seeding::rng_from(seeding::derive_seed(2024, &[k as u64]));
        let traj = mdp.run_episode(&policy, &reward, k + 1, &mut rng).unwrap();
        for step in 0..3 {
            counts[step * 2 + traj.states[step]] += 1;
        }
    }
    for step in 0..3 {
        for state in 0..2 {
            let p = occupancy.get(step, state);
            let freq = counts[step * 2 + state] as f64 / episodes as f64;
            let sigma = (p * (1.0 - p) / episodes as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-12,
                "step {step} state {state}: freq {freq} vs p {p}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_rows_are_distributions_on_generated_instances(seed in 0u64..1000) {
        let mdp = instances::random_linear(2, 3, 2, 3, 1.0, seed).unwrap();
        for step in 0..2 {
            for state in 0..3 {
                for action in 0..2 {
                    let row = mdp.transition_distribution(step, state, action).unwrap();
                    let sum: f64 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                    prop_assert!(row.iter().all(|&p| p >= 0.0));
                }
            }
        }
    }

    #[test]
    fn feature_expectation_is_linear_in_v(
        seed in 0u64..500,
        a_coef in -3.0f64..3.0,
        b_coef in -3.0f64..3.0,
        v1 in proptest::collection::vec(0.0f64..4.0, 4),
        v2 in proptest::collection::vec(0.0f64..4.0, 4),
    ) {
        let mdp = instances::random_linear(2, 4, 2, 3, 1.0, seed).unwrap();
        let mixed: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a_coef * x + b_coef * y).collect();
        for state in 0..4 {
            for action in 0..2 {
                let fe_mixed = mdp.feature_expectation(state, action, &mixed);
                let fe1 = mdp.feature_expectation(state, action, &v1);
                let fe2 = mdp.feature_expectation(state, action, &v2);
                for i in 0..3 {
                    let combo = a_coef * fe1[i] + b_coef * fe2[i];
                    prop_assert!((fe_mixed[i] - combo).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tabular_round_trip_is_identity(seed in 0u64..1000) {
        let kernels: Vec<StochasticKernel> =
            (0..2).map(|h| random_kernel(seed.wrapping_add(h), 3, 2)).collect();
        let mdp = tabular_to_linear(&kernels, 0).unwrap();
        for (step, kernel) in kernels.iter().enumerate() {
            for state in 0..3 {
                for action in 0..2 {
                    let row = mdp.transition_distribution(step, state, action).unwrap();
                    for (p, q) in row.iter().zip(kernel.row(state, action)) {
                        prop_assert!((p - q).abs() < 1e-15);
                    }
                }
            }
        }
    }
}

#[test]
fn tabular_embedding_dimension_is_s_squared_a() {
    // |S| = 2, |A| = 2, H = 1: d = 2^2 * 2 = 8.
    let rows = vec![0.5; 2 * 2 * 2];
    let kernel = StochasticKernel::from_flat(2, 2, rows).unwrap();
    let mdp = tabular_to_linear(&[kernel], 0).unwrap();
    assert_eq!(mdp.feature_dim(), 8);
}

#[test]
fn identity_transition_embedding_has_one_unit_entry_per_pair() {
    // P_h(x" | x, a) = 1{x" = x}: theta entries are 0/1 with exactly
    // |S| * |A| ones per step.
    let (s, a) = (3, 2);
    let mut rows = vec![0.0; s * a * s];
    for x in 0..s {
        for act in 0..a {
            rows[(x * a + act) * s + x] = 1.0;
        }
    }
    let kernel = StochasticKernel::from_flat(s, a, rows).unwrap();
    let mdp = tabular_to_linear(&[kernel.clone(), kernel], 0).unwrap();
    for step in 0..2 {
        let theta = mdp.theta(step);
        assert!(theta.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(theta.iter().filter(|&&v| v == 1.0).count(), s * a);
    }
}

#[test]
fn one_hot_mixture_weights_reproduce_the_selected_kernel() {
    let q0 = random_kernel(40, 3, 2);
    let q1 = random_kernel(41, 3, 2);
    let features = FeatureMap::mixture(vec![q0.clone(), q1.clone()]).unwrap();
    let theta = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let mdp = LinearMdp::new(features, theta, 0).unwrap();
    for state in 0..3 {
        for action in 0..2 {
            let row0 = mdp.transition_distribution(0, state, action).unwrap();
            for (p, q) in row0.iter().zip(q1.row(state, action)) {
                assert!((p - q).abs() < 1e-15);
            }
            let row1 = mdp.transition_distribution(1, state, action).unwrap();
            for (p, q) in row1.iter().zip(q0.row(state, action)) {
                assert!((p - q).abs() < 1e-15);
            }
        }
    }
}
