//! End-to-end episode-loop checks: evaluation formulas, the error
//! identities tying the learner to the implicit transition estimate, and
//! the pathwise regret decomposition.

#![allow(clippy::needless_range_loop)]

use oppo_core::agent::{Agent, AgentMode, HyperParams};
use oppo_core::eval::{evaluate_policy, BonusParams, RidgeAccumulator};
use oppo_core::instances;
use oppo_core::linalg::norm2;
use oppo_core::mdp::RewardFunction;
use oppo_core::oracles;
use oppo_core::policy::{Policy, StepSize};
use oppo_core::seeding;
use oppo_core::tables::StateActionTable;
use rand::Rng;

fn hyper(alpha: f64, c_beta: f64, episodes: usize) -> HyperParams {
    HyperParams {
        alpha: StepSize::new(alpha).unwrap(),
        lambda: 1.0,
        c_beta,
        zeta: 0.05,
        episodes,
    }
}

#[test]
fn first_episode_evaluation_has_zero_weights_and_norm_bonus() {
    let (h, s, a) = (3, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 50).unwrap();
    let mut rng = seeding::rng_from(51);
    let mut table = StateActionTable::zeros(h, s, a);
    for step in 0..h {
        for state in 0..s {
            for action in 0..a {
                table.set(step, state, action, rng.gen_range(0.0..1.0));
            }
        }
    }
    let reward = RewardFunction::from_table(table).unwrap();
    let policy = Policy::uniform(h, s, a);
    let accs: Vec<RidgeAccumulator> = (0..h)
        .map(|_| RidgeAccumulator::new(mdp.feature_dim(), 1.0).unwrap())
        .collect();
    let beta = 2.0;
    let (tables, diag) = evaluate_policy(
        &accs,
        &policy,
        &reward,
        &mdp,
        BonusParams::new(beta).unwrap(),
    )
    .unwrap();

    // Replay the backward pass with the empty-history closed forms.
    let mut expected_v = vec![0.0; s];
    for step in (0..h).rev() {
        assert!(diag.weights[step].iter().all(|&w| w == 0.0));
        let ceiling = (h - step) as f64;
        let mut new_v = vec![0.0; s];
        for state in 0..s {
            let mut value = 0.0;
            for action in 0..a {
                let phi = mdp.feature_expectation(state, action, &expected_v);
                let q_expected = (reward.get(step, state, action) + beta * norm2(&phi))
                    .min(ceiling)
                    .max(0.0);
                let got = tables.q().get(step, state, action);
                assert!((q_expected - got).abs() < 1e-12);
                value += policy.probs(step, state)[action] * got;
            }
            new_v[state] = value;
            assert!((tables.v().get(step, state) - value).abs() < 1e-12);
        }
        expected_v = new_v;
    }
}

#[test]
fn huge_bonus_saturates_q_at_the_clip_ceiling() {
    let (h, s, a) = (3, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 52).unwrap();
    let reward = RewardFunction::constant(h, s, a, 1.0).unwrap();
    let policy = Policy::uniform(h, s, a);
    let accs: Vec<RidgeAccumulator> = (0..h)
        .map(|_| RidgeAccumulator::new(mdp.feature_dim(), 1.0).unwrap())
        .collect();
    let (tables, _) = evaluate_policy(
        &accs,
        &policy,
        &reward,
        &mdp,
        BonusParams::new(1e9).unwrap(),
    )
    .unwrap();
    for step in 0..h {
        let ceiling = (h - step) as f64;
        for state in 0..s {
            for action in 0..a {
                // r = 1 keeps every entry at its ceiling even at step H
                // where the feature (and so the bonus) vanishes.
                assert_eq!(tables.q().get(step, state, action), ceiling);
            }
        }
    }
}

#[test]
fn shrinking_lambda_recovers_exact_backups_from_exact_targets() {
    let (h, s, a) = (2, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 53).unwrap();
    let mut rng = seeding::rng_from(54);
    let values: Vec<f64> = (0..s).map(|_| rng.gen_range(0.5..2.0)).collect();

    let step = 0;
    let mut previous_error = f64::INFINITY;
    for lambda in [1.0, 1e-2, 1e-4, 1e-6] {
        let mut acc = RidgeAccumulator::new(mdp.feature_dim(), lambda).unwrap();
        for state in 0..s {
            for action in 0..a {
                let phi = mdp.feature_expectation(state, action, &values);
                let row = mdp.transition_distribution(step, state, action).unwrap();
                let backup: f64 = row.iter().zip(&values).map(|(p, v)| p * v).sum();
                acc.rank_one_update(&phi, backup);
            }
        }
        let w = acc.solve_weights();
        let mut worst = 0.0f64;
        for state in 0..s {
            for action in 0..a {
                let phi = mdp.feature_expectation(state, action, &values);
                let row = mdp.transition_distribution(step, state, action).unwrap();
                let backup: f64 = row.iter().zip(&values).map(|(p, v)| p * v).sum();
                let predicted: f64 = phi.iter().zip(&w).map(|(x, y)| x * y).sum();
                worst = worst.max((predicted - backup).abs());
            }
        }
        assert!(worst < previous_error + 1e-15, "lambda {lambda}");
        previous_error = worst;
    }
    assert!(previous_error < 1e-5);
}

/// Drives one agent for `episodes` episodes and returns everything the
/// oracle-side checks need.
struct RunTrace {
    policies: Vec<Policy>,
    rewards: Vec<RewardFunction>,
    trajectories: Vec<oppo_core::mdp::Trajectory>,
    q_tables: Vec<StateActionTable>,
    v_tables: Vec<oppo_core::tables::StateTable>,
    raw_q: Vec<StateActionTable>,
    bonuses: Vec<StateActionTable>,
    visited_features: Vec<Vec<Vec<f64>>>,
}

fn drive(
    mdp: &oppo_core::mdp::LinearMdp,
    reward: &RewardFunction,
    mode: AgentMode,
    hyper: HyperParams,
    seed: u64,
) -> RunTrace {
    let episodes = hyper.episodes;
    let mut agent = Agent::new(mode, mdp, hyper).unwrap();
    let mut trace = RunTrace {
        policies: Vec::new(),
        rewards: Vec::new(),
        trajectories: Vec::new(),
        q_tables: Vec::new(),
        v_tables: Vec::new(),
        raw_q: Vec::new(),
        bonuses: Vec::new(),
        visited_features: vec![Vec::new(); mdp.horizon()],
    };
    for k in 1..=episodes {
        let policy = agent.begin_episode().clone();
        let mut rng = seeding::rng_from(seeding::derive_seed(seed, &[k as u64]));
        let traj = mdp.run_episode(&policy, reward, k, &mut rng).unwrap();
        let outcome = agent.end_episode(mdp, &traj, reward).unwrap();
        let diag = outcome.diagnostics.as_ref().unwrap();
        for step in 0..mdp.horizon() {
            trace.visited_features[step].push(
                diag.phi(step, traj.states[step], traj.actions[step])
                    .to_vec(),
            );
        }
        trace.policies.push(policy);
        trace.rewards.push(reward.clone());
        trace.q_tables.push(outcome.tables.q().clone());
        trace.v_tables.push(outcome.tables.v().clone());
        trace.raw_q.push(diag.q_raw.clone());
        trace.bonuses.push(diag.bonus.clone());
        trace.trajectories.push(traj);
    }
    trace
}

#[test]
fn decomposition_residual_vanishes_pathwise_on_an_oppo_run() {
    let (h, s, a) = (3, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 60).unwrap();
    let mut rng = seeding::rng_from(61);
    let mut table = StateActionTable::zeros(h, s, a);
    for step in 0..h {
        for state in 0..s {
            for action in 0..a {
                table.set(step, state, action, rng.gen_range(0.0..1.0));
            }
        }
    }
    let reward = RewardFunction::from_table(table).unwrap();
    let episodes = 40;
    let trace = drive(
        &mdp,
        &reward,
        AgentMode::Oppo,
        hyper(0.1, 1.0, episodes),
        62,
    );

    let optimal = oracles::hindsight_optimal_policy(&mdp, &trace.rewards).unwrap();
    let occupancy = oracles::occupancy_states(&mdp, &optimal).unwrap();
    let records = oracles::regret(&mdp, &trace.rewards, &trace.policies).unwrap();
    for k in 0..episodes {
        let data = oracles::EpisodeEvalData {
            policy: &trace.policies[k],
            q: &trace.q_tables[k],
            v: &trace.v_tables[k],
            trajectory: &trace.trajectories[k],
            reward: &trace.rewards[k],
        };
        let decomposition =
            oracles::decomposition_terms(&mdp, &optimal, &occupancy, &data).unwrap();
        assert!(
            decomposition.residual.abs() <= 1e-6,
            "episode {}: residual {}",
            k + 1,
            decomposition.residual
        );
        let sum =
            decomposition.policy_gap + decomposition.martingale + decomposition.prediction_gap;
        assert!((records[k].instantaneous - sum).abs() <= 1e-6);
        assert!(
            oracles::max_abs_martingale_diff(&decomposition.martingale_diffs)
                <= oracles::martingale_difference_bound(h)
        );
    }
}

#[test]
fn unclipped_error_identity_ties_learner_to_implicit_estimate() {
    let (h, s, a) = (3, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 70).unwrap();
    let reward = RewardFunction::constant(h, s, a, 0.7).unwrap();
    let episodes = 25;
    let lambda = 1.0;

    let mut agent = Agent::new(AgentMode::Oppo, &mdp, hyper(0.1, 1.0, episodes)).unwrap();
    for k in 1..=episodes {
        let policy = agent.begin_episode().clone();
        let mut rng = seeding::rng_from(seeding::derive_seed(71, &[k as u64]));
        let traj = mdp.run_episode(&policy, &reward, k, &mut rng).unwrap();
        let buffers: Vec<_> = (0..h).map(|step| agent.buffer(step).clone()).collect();
        let outcome = agent.end_episode(&mdp, &traj, &reward).unwrap();
        let diag = outcome.diagnostics.as_ref().unwrap();

        let table = oracles::prediction_error_table(
            &mdp,
            &reward,
            outcome.tables.q(),
            outcome.tables.v(),
            &diag.q_raw,
            &diag.bonus,
        )
        .unwrap();

        for step in 0..h {
            let values = outcome.tables.v().row(step + 1);
            let estimated =
                oracles::implicit_transition_apply(&mdp, &buffers[step], lambda, values).unwrap();
            for state in 0..s {
                for action in 0..a {
                    let row = mdp.transition_distribution(step, state, action).unwrap();
                    let true_backup: f64 = row.iter().zip(values).map(|(p, v)| p * v).sum();
                    // iota_raw = (P - Phat) V - Gamma, exactly.
                    let lhs = table.raw_error.get(step, state, action);
                    let rhs = true_backup
                        - estimated.get(0, state, action)
                        - diag.bonus.get(step, state, action);
                    assert!(
                        (lhs - rhs).abs() <= 1e-8,
                        "episode {k} step {step}: {lhs} vs {rhs}"
                    );
                    // Qbar - r - Gamma = Phat V, the cross-module route.
                    let stripped = diag.q_raw.get(step, state, action)
                        - reward.get(step, state, action)
                        - diag.bonus.get(step, state, action);
                    assert!((stripped - estimated.get(0, state, action)).abs() <= 1e-8);
                }
            }
        }
    }
}

#[test]
fn logged_feature_sequences_satisfy_the_elliptical_potential_bound() {
    let (h, s, a) = (3, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 80).unwrap();
    let reward = RewardFunction::constant(h, s, a, 0.9).unwrap();
    let trace = drive(&mdp, &reward, AgentMode::Oppo, hyper(0.05, 1.0, 60), 81);
    for step in 0..h {
        let (lhs, rhs) = oracles::elliptical_potential_check(
            mdp.feature_dim(),
            1.0,
            trace.visited_features[step]
                .iter()
                .map(|phi| phi.as_slice()),
        );
        assert!(lhs <= rhs + 1e-12, "step {step}: {lhs} > {rhs}");
    }
}

#[test]
fn greedy_without_bonus_stays_on_the_tie_path_and_earns_nothing_off_it() {
    // 20 lock seeds; the tie-broken deterministic path is all-zeros. Reward
    // tables are fully revealed, so the final digit of the combination is
    // read off `r_H` without ever visiting the goal; the agent therefore
    // earns reward exactly when the first H - 1 digits match its tie path,
    // and nothing otherwise.
    for lock_seed in 0..20u64 {
        let lock = instances::combination_lock(4, 2, 1.0, lock_seed).unwrap();
        let episodes = 50;
        let mut agent =
            Agent::new(AgentMode::GreedyLsvi, &lock.mdp, hyper(0.1, 0.0, episodes)).unwrap();
        let mut total_reward = 0.0;
        for k in 1..=episodes {
            let policy = agent.begin_episode().clone();
            let mut rng = seeding::rng_from(seeding::derive_seed(lock_seed, &[90, k as u64]));
            let traj = lock
                .mdp
                .run_episode(&policy, &lock.reward, k, &mut rng)
                .unwrap();
            total_reward += traj.rewards.iter().sum::<f64>();
            agent.end_episode(&lock.mdp, &traj, &lock.reward).unwrap();
        }
        let prefix_matches_tie_path = lock.combination[..lock.combination.len() - 1]
            .iter()
            .all(|&c| c == 0);
        if prefix_matches_tie_path {
            assert!(total_reward > 0.0, "seed {lock_seed}");
        } else {
            assert_eq!(total_reward, 0.0, "seed {lock_seed}");
        }
    }
}

#[test]
fn estimated_tables_respect_the_clip_range() {
    let (h, s, a) = (4, 4, 3);
    let mdp = instances::random_tabular(h, s, a, 0.5, 90).unwrap();
    let mut rng = seeding::rng_from(91);
    let mut table = StateActionTable::zeros(h, s, a);
    for step in 0..h {
        for state in 0..s {
            for action in 0..a {
                table.set(
                    step,
                    state,
                    action,
                    rand::Rng::gen_range(&mut rng, 0.0..1.0),
                );
            }
        }
    }
    let reward = oppo_core::mdp::RewardFunction::from_table(table).unwrap();
    let mut agent = Agent::new(AgentMode::Oppo, &mdp, hyper(0.1, 0.5, 60)).unwrap();
    for k in 1..=60 {
        let policy = agent.begin_episode().clone();
        let mut episode_rng = seeding::rng_from(seeding::derive_seed(92, &[k as u64]));
        let traj = mdp
            .run_episode(&policy, &reward, k, &mut episode_rng)
            .unwrap();
        let outcome = agent.end_episode(&mdp, &traj, &reward).unwrap();
        for step in 0..h {
            let ceiling = (h - step) as f64;
            for state in 0..s {
                let v = outcome.tables.v().get(step, state);
                assert!((0.0..=ceiling).contains(&v));
                for action in 0..a {
                    let q = outcome.tables.q().get(step, state, action);
                    assert!((0.0..=ceiling).contains(&q), "q = {q} vs ceiling {ceiling}");
                }
            }
        }
        assert!(outcome.tables.v().row(h).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn ending_an_episode_before_beginning_is_rejected() {
    let mdp = instances::random_tabular(3, 3, 2, 1.0, 95).unwrap();
    let reward = RewardFunction::constant(3, 3, 2, 0.5).unwrap();
    let mut agent = Agent::new(AgentMode::Oppo, &mdp, hyper(0.1, 1.0, 5)).unwrap();
    let policy = Policy::uniform(3, 3, 2);
    let mut rng = seeding::rng_from(1);
    let traj = mdp.run_episode(&policy, &reward, 1, &mut rng).unwrap();
    assert_eq!(
        agent.end_episode(&mdp, &traj, &reward).unwrap_err(),
        oppo_core::agent::AgentError::EpisodeNotBegun
    );
}
