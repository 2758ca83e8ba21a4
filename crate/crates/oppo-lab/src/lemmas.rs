//! The runnable lemma property suite: every module-level invariant, checked
//! against the exact oracles, with pass/fail and worst-case residuals per
//! property.

use anyhow::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use oppo_core::adversary::{next_reward, AdversaryKind, History};
use oppo_core::agent::{Agent, AgentMode, HyperParams};
use oppo_core::eval::{HistoryBuffer, RidgeAccumulator};
use oppo_core::instances;
use oppo_core::mdp::{LinearMdp, RewardFunction, Trajectory};
use oppo_core::oracles;
use oppo_core::policy::{
    improve_policy, kl_divergence, project_to_simplex, regularized_gain, Policy, StepSize,
};
use oppo_core::seeding;
use oppo_core::tables::{StateActionTable, StateTable};

/// Instance size bounds for randomized checks.
#[derive(Debug, Clone, Copy)]
pub struct SizeBounds {
    pub max_horizon: usize,
    pub max_states: usize,
    pub max_actions: usize,
}

impl Default for SizeBounds {
    fn default() -> Self {
        Self {
            max_horizon: 5,
            max_states: 6,
            max_actions: 4,
        }
    }
}

/// Outcome of one property check.
#[derive(Debug, Clone)]
pub struct PropertyResult {
    /// Short property name.
    pub name: &'static str,
    /// Hard identities fail the process; statistical rates only report.
    pub hard: bool,
    pub passed: bool,
    /// Residual / rate / counterexample description.
    pub detail: String,
}

/// All property results from one suite run.
#[derive(Debug, Clone, Default)]
pub struct LemmaReport {
    pub results: Vec<PropertyResult>,
}

impl LemmaReport {
    /// True when every hard identity passed.
    pub fn all_hard_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed || !r.hard)
    }

    /// One line per property.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let status = if r.passed { "pass" } else { "FAIL" };
            let kind = if r.hard { "hard" } else { "rate" };
            out.push_str(&format!(
                "[{status}] ({kind}) {:<32} {}\n",
                r.name, r.detail
            ));
        }
        out
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn exp_weights_row(prior: &[f64], q_row: &[f64], alpha: f64) -> Vec<f64> {
    let shifted: Vec<f64> = prior
        .iter()
        .zip(q_row)
        .map(|(p, q)| p.ln() + alpha * q)
        .collect();
    let max = shifted.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let weights: Vec<f64> = shifted.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

fn random_reward(rng: &mut ChaCha8Rng, h: usize, s: usize, a: usize) -> RewardFunction {
    let mut table = StateActionTable::zeros(h, s, a);
    for step in 0..h {
        for state in 0..s {
            for action in 0..a {
                table.set(step, state, action, rng.gen_range(0.0..1.0));
            }
        }
    }
    RewardFunction::from_table(table).expect("finite entries")
}

fn random_policy(rng: &mut ChaCha8Rng, h: usize, s: usize, a: usize) -> Policy {
    let logits: Vec<f64> = (0..h * s * a).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Policy::from_logits(h, s, a, logits).expect("finite logits")
}

/// Collected artifacts of one agent run, enough for the oracle checks.
struct Trace {
    mdp: LinearMdp,
    policies: Vec<Policy>,
    rewards: Vec<RewardFunction>,
    trajectories: Vec<Trajectory>,
    q_tables: Vec<StateActionTable>,
    v_tables: Vec<StateTable>,
    bonuses: Vec<StateActionTable>,
    raw_q: Vec<StateActionTable>,
    visited_features: Vec<Vec<Vec<f64>>>,
    buffers_before_last: Vec<HistoryBuffer>,
}

fn drive_agent(
    mdp: LinearMdp,
    reward_base: &RewardFunction,
    mode: AgentMode,
    hyper: HyperParams,
    master_seed: u64,
) -> Trace {
    let h = mdp.horizon();
    let mut agent = Agent::new(mode, &mdp, hyper).expect("agent");
    let mut trace = Trace {
        policies: Vec::new(),
        rewards: Vec::new(),
        trajectories: Vec::new(),
        q_tables: Vec::new(),
        v_tables: Vec::new(),
        bonuses: Vec::new(),
        raw_q: Vec::new(),
        visited_features: vec![Vec::new(); h],
        buffers_before_last: Vec::new(),
        mdp,
    };
    let mut history = History::new();
    for k in 1..=hyper.episodes {
        let mut adversary_rng =
            seeding::rng_from(seeding::derive_seed(master_seed, &[7, k as u64]));
        let reward = next_reward(
            &AdversaryKind::Fixed,
            &history,
            core::slice::from_ref(reward_base),
            &mut adversary_rng,
        )
        .expect("valid base");
        let policy = agent.begin_episode().clone();
        let mut rng = seeding::rng_from(seeding::derive_seed(master_seed, &[8, k as u64]));
        let trajectory = trace
            .mdp
            .run_episode(&policy, &reward, k, &mut rng)
            .expect("episode");
        if k == hyper.episodes {
            trace.buffers_before_last = (0..h).map(|step| agent.buffer(step).clone()).collect();
        }
        let outcome = agent
            .end_episode(&trace.mdp, &trajectory, &reward)
            .expect("evaluation");
        let diag = outcome.diagnostics.as_ref().expect("evaluating mode");
        for step in 0..h {
            trace.visited_features[step].push(
                diag.phi(step, trajectory.states[step], trajectory.actions[step])
                    .to_vec(),
            );
        }
        trace.policies.push(policy);
        trace.q_tables.push(outcome.tables.q().clone());
        trace.v_tables.push(outcome.tables.v().clone());
        trace.bonuses.push(diag.bonus.clone());
        trace.raw_q.push(diag.q_raw.clone());
        trace.rewards.push(reward.clone());
        trace.trajectories.push(trajectory.clone());
        history.push(trajectory, reward);
    }
    trace
}

fn check_performance_difference(report: &mut LemmaReport, seed_count: usize, sizes: SizeBounds) {
    let mut worst = 0.0f64;
    for seed in 0..seed_count as u64 {
        let mut rng = seeding::rng_from(seeding::derive_seed(1000, &[seed]));
        let h = rng.gen_range(1..=sizes.max_horizon);
        let s = rng.gen_range(2..=sizes.max_states);
        let a = rng.gen_range(2..=sizes.max_actions);
        let mdp = instances::random_tabular(h, s, a, 1.0, seed).expect("instance");
        let pi = random_policy(&mut rng, h, s, a);
        let pi_prime = random_policy(&mut rng, h, s, a);
        let reward = random_reward(&mut rng, h, s, a);

        let value = |policy: &Policy| {
            oracles::exact_policy_value(&mdp, policy, &reward)
                .expect("valid instance")
                .initial_value(&mdp)
        };
        let lhs = value(&pi_prime) - value(&pi);
        let q_pi = oracles::exact_policy_value(&mdp, &pi, &reward)
            .expect("valid")
            .q;
        let occupancy = oracles::occupancy_states(&mdp, &pi_prime).expect("valid");
        let mut rhs = 0.0;
        for step in 0..h {
            for state in 0..s {
                let mass = occupancy.get(step, state);
                for action in 0..a {
                    rhs += mass
                        * (pi_prime.probs(step, state)[action] - pi.probs(step, state)[action])
                        * q_pi.get(step, state, action);
                }
            }
        }
        worst = worst.max((lhs - rhs).abs());
    }
    report.results.push(PropertyResult {
        name: "performance-difference",
        hard: true,
        passed: worst <= 1e-9,
        detail: format!("worst |lhs - rhs| = {worst:.3e} over {seed_count} instances"),
    });
}

fn check_closed_form_optimality(report: &mut LemmaReport) {
    let mut rng = seeding::rng_from(2000);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=5usize);
        let horizon = rng.gen_range(1..=5usize) as f64;
        let alpha = (rng.gen_range(-2.5f64..0.7)).exp();
        let step = StepSize::new(alpha).expect("positive");
        let prior = random_distribution(&mut rng, n);
        let q_row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
        let closed = exp_weights_row(&prior, &q_row, alpha);
        let best = regularized_gain(&q_row, &closed, &prior, step).expect("support");
        for _ in 0..1000 {
            let scale = (rng.gen_range(-7.0f64..-1.0)).exp();
            let candidate: Vec<f64> = closed
                .iter()
                .map(|c| c + rng.gen_range(-scale..scale))
                .collect();
            let projected = project_to_simplex(&candidate);
            let value = regularized_gain(&q_row, &projected, &prior, step).expect("support");
            worst = worst.max(value - best);
        }
    }
    report.results.push(PropertyResult {
        name: "mirror-descent-closed-form",
        hard: true,
        passed: worst <= 1e-9,
        detail: format!("worst gain excess over closed form = {worst:.3e}"),
    });
}

fn check_one_step_descent(report: &mut LemmaReport) {
    let mut rng = seeding::rng_from(3000);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let h = rng.gen_range(1..=5usize) as f64;
        let n = rng.gen_range(2..=5usize);
        let alpha = (rng.gen_range(-3.0f64..1.0)).exp();
        let p_star = random_distribution(&mut rng, n);
        let p = random_distribution(&mut rng, n);
        let q_row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..h)).collect();
        let p_next = exp_weights_row(&p, &q_row, alpha);
        let gap: f64 = q_row
            .iter()
            .zip(p_star.iter().zip(&p))
            .map(|(q, (ps, pp))| q * (ps - pp))
            .sum();
        let bound = alpha * h * h / 2.0
            + (kl_divergence(&p_star, &p).expect("support")
                - kl_divergence(&p_star, &p_next).expect("support"))
                / alpha;
        worst = worst.max(gap - bound);
    }
    // Pinned corner: alpha = 1, H = 1, where the quadratic slack term
    // alone dominates small perturbations.
    let mut pinned_worst = f64::NEG_INFINITY;
    for _ in 0..1_000 {
        let n = rng.gen_range(2..=5usize);
        let p_star = random_distribution(&mut rng, n);
        let p = random_distribution(&mut rng, n);
        let q_row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p_next = exp_weights_row(&p, &q_row, 1.0);
        let gap: f64 = q_row
            .iter()
            .zip(p_star.iter().zip(&p))
            .map(|(q, (ps, pp))| q * (ps - pp))
            .sum();
        let bound = 0.5 + kl_divergence(&p_star, &p).expect("support")
            - kl_divergence(&p_star, &p_next).expect("support");
        pinned_worst = pinned_worst.max(gap - bound);
    }
    report.results.push(PropertyResult {
        name: "one-step-descent",
        hard: true,
        passed: worst <= 1e-9 && pinned_worst <= 1e-9,
        detail: format!(
            "worst margin = {worst:.3e} over 10000 draws; alpha=1, H=1 corner: {pinned_worst:.3e}"
        ),
    });
}

fn check_decomposition_and_elliptical(report: &mut LemmaReport) {
    let (h, s, a) = (4, 5, 3);
    let mdp = instances::random_tabular(h, s, a, 1.0, 4000).expect("instance");
    let mut rng = seeding::rng_from(4001);
    let reward = random_reward(&mut rng, h, s, a);
    let hyper = HyperParams {
        alpha: StepSize::auto(a, h, 200),
        lambda: 1.0,
        c_beta: 1.0,
        zeta: 0.05,
        episodes: 200,
    };
    let trace = drive_agent(mdp, &reward, AgentMode::Oppo, hyper, 4002);

    let optimal = oracles::hindsight_optimal_policy(&trace.mdp, &trace.rewards).expect("dp");
    let occupancy = oracles::occupancy_states(&trace.mdp, &optimal).expect("occupancy");
    let mut worst_residual = 0.0f64;
    let mut worst_diff = 0.0f64;
    for k in 0..trace.policies.len() {
        let data = oracles::EpisodeEvalData {
            policy: &trace.policies[k],
            q: &trace.q_tables[k],
            v: &trace.v_tables[k],
            trajectory: &trace.trajectories[k],
            reward: &trace.rewards[k],
        };
        let decomposition =
            oracles::decomposition_terms(&trace.mdp, &optimal, &occupancy, &data).expect("terms");
        worst_residual = worst_residual.max(decomposition.residual.abs());
        worst_diff = worst_diff.max(oracles::max_abs_martingale_diff(
            &decomposition.martingale_diffs,
        ));
    }
    let bound = oracles::martingale_difference_bound(h);
    report.results.push(PropertyResult {
        name: "regret-decomposition",
        hard: true,
        passed: worst_residual <= 1e-6 && worst_diff <= bound,
        detail: format!(
            "worst residual = {worst_residual:.3e}, max |D| = {worst_diff:.3} (bound {bound})"
        ),
    });

    let mut worst_gap = f64::NEG_INFINITY;
    let mut pairs = Vec::new();
    for step in 0..h {
        let (lhs, rhs) = oracles::elliptical_potential_check(
            trace.mdp.feature_dim(),
            1.0,
            trace.visited_features[step]
                .iter()
                .map(|phi| phi.as_slice()),
        );
        worst_gap = worst_gap.max(lhs - rhs);
        pairs.push((lhs, rhs));
    }
    let scalar =
        oracles::elliptical_potential_check(1, 1.0, [[1.0]; 3].iter().map(|p| p.as_slice()));
    let analytic_ok = (scalar.0 - 11.0 / 6.0).abs() < 1e-12
        && (scalar.1 - 2.0 * 4.0f64.ln()).abs() < 1e-12
        && scalar.0 <= scalar.1;
    report.results.push(PropertyResult {
        name: "elliptical-potential",
        hard: true,
        passed: worst_gap <= 1e-12 && analytic_ok,
        detail: format!(
            "worst lhs - rhs = {worst_gap:.3e}; scalar case ({:.4}, {:.4})",
            scalar.0, scalar.1
        ),
    });

    // Ridge optimality over the final accumulated histories.
    let mut worst_margin = f64::NEG_INFINITY;
    let mut check_rng = seeding::rng_from(4003);
    for step in 0..h {
        let buffer = &trace.buffers_before_last[step];
        let mut acc = RidgeAccumulator::new(trace.mdp.feature_dim(), 1.0).expect("acc");
        for i in 0..buffer.len() {
            acc.rank_one_update(buffer.feature(i), buffer.target(i));
        }
        let w = acc.solve_weights();
        let best = buffer.ridge_objective(&w, 1.0);
        for _ in 0..1000 {
            let candidate: Vec<f64> = w
                .iter()
                .map(|wi| wi + check_rng.gen_range(-0.3..0.3))
                .collect();
            worst_margin = worst_margin.max(best - buffer.ridge_objective(&candidate, 1.0));
        }
    }
    report.results.push(PropertyResult {
        name: "ridge-optimality",
        hard: true,
        passed: worst_margin <= 1e-9,
        detail: format!("worst objective margin = {worst_margin:.3e}"),
    });

    // Unclipped error identity at the final episode.
    let last = trace.policies.len() - 1;
    let lambda = 1.0;
    let mut worst_identity = 0.0f64;
    for step in 0..h {
        let values = trace.v_tables[last].row(step + 1);
        let estimated = oracles::implicit_transition_apply(
            &trace.mdp,
            &trace.buffers_before_last[step],
            lambda,
            values,
        )
        .expect("implicit estimate");
        for state in 0..s {
            for action in 0..a {
                let row = trace
                    .mdp
                    .transition_distribution(step, state, action)
                    .expect("valid");
                let true_backup: f64 = row.iter().zip(values).map(|(p, v)| p * v).sum();
                let raw_err = trace.rewards[last].get(step, state, action) + true_backup
                    - trace.raw_q[last].get(step, state, action);
                let expected = true_backup
                    - estimated.get(0, state, action)
                    - trace.bonuses[last].get(step, state, action);
                worst_identity = worst_identity.max((raw_err - expected).abs());
            }
        }
    }
    report.results.push(PropertyResult {
        name: "unclipped-error-identity",
        hard: true,
        passed: worst_identity <= 1e-8,
        detail: format!("worst |iota_raw - ((P - Phat)V - Gamma)| = {worst_identity:.3e}"),
    });
}

fn check_martingale_zero_mean(report: &mut LemmaReport) {
    let (h, s, a) = (4, 3, 2);
    let mdp = instances::random_tabular(h, s, a, 1.0, 4100).expect("instance");
    let mut rng = seeding::rng_from(4101);
    let reward = random_reward(&mut rng, h, s, a);
    let policy = Policy::uniform(h, s, a);
    let mut q = StateActionTable::zeros(h, s, a);
    for step in 0..h {
        for state in 0..s {
            for action in 0..a {
                q.set(step, state, action, rng.gen_range(0.0..(h - step) as f64));
            }
        }
    }
    let mut v = StateTable::zeros(h + 1, s);
    for step in 0..h {
        for state in 0..s {
            let mut value = 0.0;
            for action in 0..a {
                value += policy.probs(step, state)[action] * q.get(step, state, action);
            }
            v.set(step, state, value);
        }
    }
    let optimal =
        oracles::hindsight_optimal_policy(&mdp, core::slice::from_ref(&reward)).expect("dp");
    let occupancy = oracles::occupancy_states(&mdp, &optimal).expect("occupancy");

    let episodes = 1_300usize;
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 1..=episodes {
        let mut episode_rng = seeding::rng_from(seeding::derive_seed(4102, &[k as u64]));
        let trajectory = mdp
            .run_episode(&policy, &reward, k, &mut episode_rng)
            .expect("episode");
        let data = oracles::EpisodeEvalData {
            policy: &policy,
            q: &q,
            v: &v,
            trajectory: &trajectory,
            reward: &reward,
        };
        let decomposition =
            oracles::decomposition_terms(&mdp, &optimal, &occupancy, &data).expect("terms");
        for (d1, d2) in decomposition.martingale_diffs {
            sum += d1 + d2;
            count += 2;
        }
    }
    let mean = sum / count as f64;
    let bound = 3.0 * oracles::martingale_difference_bound(h) / (count as f64).sqrt();
    report.results.push(PropertyResult {
        name: "martingale-zero-mean",
        hard: true,
        passed: mean.abs() <= bound,
        detail: format!(
            "|mean D| = {:.3e} vs 3-sigma bound {bound:.3e} (N = {count})",
            mean.abs()
        ),
    });
}

fn check_optimism(report: &mut LemmaReport, seed_count: usize) {
    let (h, s, a) = (4, 5, 3);
    let episodes = 150usize;
    let run_violations = |c_beta: f64, master_seed: u64| -> (usize, usize, usize) {
        let mdp = instances::random_tabular(h, s, a, 1.0, master_seed).expect("instance");
        let mut rng = seeding::rng_from(seeding::derive_seed(master_seed, &[5]));
        let reward = random_reward(&mut rng, h, s, a);
        let hyper = HyperParams {
            alpha: StepSize::auto(a, h, episodes),
            lambda: 1.0,
            c_beta,
            zeta: 0.05,
            episodes,
        };
        let trace = drive_agent(mdp, &reward, AgentMode::Oppo, hyper, master_seed);
        let mut upper = 0;
        let mut lower = 0;
        let mut points = 0;
        for k in 0..episodes {
            let table = oracles::prediction_error_table(
                &trace.mdp,
                &trace.rewards[k],
                &trace.q_tables[k],
                &trace.v_tables[k],
                &trace.raw_q[k],
                &trace.bonuses[k],
            )
            .expect("errors");
            upper += table.optimism_violations();
            lower += table.lower_bound_violations();
            points += h * s * a;
        }
        (upper, lower, points)
    };

    let (upper_hi, lower_hi, _) = run_violations(10.0, 5000);
    report.results.push(PropertyResult {
        name: "optimism-high-beta",
        hard: true,
        passed: upper_hi == 0 && lower_hi == 0,
        detail: format!("c_beta=10: {upper_hi} upper / {lower_hi} lower violations"),
    });

    let seeds = seed_count.clamp(3, 20);
    let mut upper_total = 0usize;
    let mut lower_total = 0usize;
    let mut points_total = 0usize;
    for seed in 0..seeds as u64 {
        let (u, l, p) = run_violations(1.0, 5100 + seed);
        upper_total += u;
        lower_total += l;
        points_total += p;
    }
    let rate = upper_total as f64 / points_total as f64;
    report.results.push(PropertyResult {
        name: "optimism-rate",
        hard: false,
        passed: rate <= 0.05,
        detail: format!(
            "c_beta=1: upper rate {rate:.4} over {seeds} seeds ({lower_total} lower violations)"
        ),
    });
}

fn check_policy_invariants(report: &mut LemmaReport) {
    let mut rng = seeding::rng_from(6000);
    let (h, s, a) = (2, 3, 4);
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..200 {
        let prev = random_policy(&mut rng, h, s, a);
        let shift = rng.gen_range(-4.0..4.0);
        let alpha = StepSize::new(rng.gen_range(0.0..2.0)).expect("alpha");
        let mut q = StateActionTable::zeros(h, s, a);
        let mut q_shifted = StateActionTable::zeros(h, s, a);
        for step in 0..h {
            for state in 0..s {
                for action in 0..a {
                    let v: f64 = rng.gen_range(0.0..2.0);
                    q.set(step, state, action, v);
                    q_shifted.set(step, state, action, v + shift);
                }
            }
        }
        let improved = improve_policy(&prev, &q, alpha);
        let improved_shifted = improve_policy(&prev, &q_shifted, alpha);
        for step in 0..h {
            for state in 0..s {
                let sum: f64 = improved.probs(step, state).iter().sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                for (p, ps) in improved
                    .probs(step, state)
                    .iter()
                    .zip(improved_shifted.probs(step, state))
                {
                    worst_shift = worst_shift.max((p - ps).abs());
                }
            }
        }
    }
    report.results.push(PropertyResult {
        name: "policy-normalization-shift",
        hard: true,
        passed: worst_sum <= 1e-12 && worst_shift <= 1e-12,
        detail: format!("worst row-sum dev {worst_sum:.3e}, worst shift dev {worst_shift:.3e}"),
    });

    // Greedy limit: large alpha concentrates on the argmax set.
    let mut worst_mass = 1.0f64;
    for _ in 0..100 {
        let mut q = StateActionTable::zeros(h, s, a);
        for step in 0..h {
            for state in 0..s {
                for action in 0..a {
                    q.set(step, state, action, rng.gen_range(0..=300) as f64 * 0.01);
                }
            }
        }
        let improved = improve_policy(&Policy::uniform(h, s, a), &q, StepSize::new(1e4).unwrap());
        for step in 0..h {
            for state in 0..s {
                let row = q.row(step, state);
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mass: f64 = improved
                    .probs(step, state)
                    .iter()
                    .zip(row)
                    .filter(|(_, &qv)| qv >= max - 1e-12)
                    .map(|(p, _)| p)
                    .sum();
                worst_mass = worst_mass.min(mass);
            }
        }
    }
    report.results.push(PropertyResult {
        name: "greedy-limit",
        hard: true,
        passed: worst_mass >= 1.0 - 1e-3,
        detail: format!("min greedy-set mass at alpha=1e4: {worst_mass:.6}"),
    });
}

fn check_instance_validation(report: &mut LemmaReport, seed_count: usize) {
    let mut bad = 0usize;
    let count = seed_count.max(1);
    for seed in 0..count as u64 {
        if !instances::random_tabular(3, 4, 3, 1.0, seed)
            .expect("instance")
            .validate(4, seed)
            .is_valid()
        {
            bad += 1;
        }
        for dim in [2usize, 4, 8] {
            if !instances::random_linear(3, 4, 3, dim, 1.0, seed)
                .expect("instance")
                .validate(4, seed)
                .is_valid()
            {
                bad += 1;
            }
        }
    }
    report.results.push(PropertyResult {
        name: "instance-validation",
        hard: true,
        passed: bad == 0,
        detail: format!("{bad} invalid instances over {count} seeds x 4 generators"),
    });
}

fn check_adversary_obliviousness(report: &mut LemmaReport) {
    let mut rng = seeding::rng_from(7000);
    let bases = [
        random_reward(&mut rng, 2, 2, 2),
        random_reward(&mut rng, 2, 2, 2),
    ];
    let mut mismatch = 0usize;
    for kind in [
        AdversaryKind::Fixed,
        AdversaryKind::PeriodicSwitch { period: 3 },
    ] {
        for k in 1..=7usize {
            let mut history_a = History::new();
            let mut history_b = History::new();
            for j in 1..=k - 1 {
                let t_a =
                    Trajectory::new(j, vec![0; 3], vec![0; 2], vec![0.0; 2]).expect("lengths");
                let t_b =
                    Trajectory::new(j, vec![1; 3], vec![1; 2], vec![1.0; 2]).expect("lengths");
                history_a.push(t_a, bases[0].clone());
                history_b.push(t_b, bases[1].clone());
            }
            let mut rng_a = seeding::rng_from(1);
            let mut rng_b = seeding::rng_from(2);
            let r_a = next_reward(&kind, &history_a, &bases, &mut rng_a).expect("reward");
            let r_b = next_reward(&kind, &history_b, &bases, &mut rng_b).expect("reward");
            if r_a != r_b {
                mismatch += 1;
            }
        }
    }
    report.results.push(PropertyResult {
        name: "adversary-obliviousness",
        hard: true,
        passed: mismatch == 0,
        detail: format!("{mismatch} history-dependent outputs from oblivious schedules"),
    });
}

/// Runs the whole property suite.
pub fn check_lemmas(seed_count: usize, sizes: SizeBounds) -> Result<LemmaReport> {
    let mut report = LemmaReport::default();
    check_performance_difference(&mut report, seed_count, sizes);
    check_closed_form_optimality(&mut report);
    check_one_step_descent(&mut report);
    check_decomposition_and_elliptical(&mut report);
    check_martingale_zero_mean(&mut report);
    check_optimism(&mut report, seed_count);
    check_policy_invariants(&mut report);
    check_instance_validation(&mut report, seed_count.min(50));
    check_adversary_obliviousness(&mut report);
    Ok(report)
}
