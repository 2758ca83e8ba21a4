//! Exact ground-truth computations with full knowledge of the transition
//! kernel.
//!
//! These power regret measurement and every lemma-level property check:
//! exact Bellman backups, brute-force path enumeration, the hindsight
//! benchmark policy, the pathwise regret decomposition with its martingale
//! differences, model prediction errors, the implicitly estimated
//! transition operator, and the elliptical potential inequality.
//!
//! Nothing here estimates anything: the true kernel is always used, and
//! independent code paths are kept independent of the learner's (fresh
//! factorizations instead of maintained inverses, explicit path sums
//! instead of dynamic programming where the point is cross-checking).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::eval::HistoryBuffer;
use crate::linalg::{dot, DenseMatrix};
use crate::mdp::{LinearMdp, MdpError, RewardFunction, Trajectory};
use crate::num;
use crate::policy::Policy;
use crate::tables::{StateActionTable, StateTable};

/// Case bound for brute-force path enumeration: `(S A)^H` must stay below
/// this.
pub const PATH_ENUMERATION_LIMIT: u128 = 1_000_000;
/// Case bound for deterministic-policy enumeration: `A^(H S)` must stay
/// below this.
pub const POLICY_ENUMERATION_LIMIT: u128 = 1 << 20;
/// Optimism violations are counted beyond this slack.
pub const OPTIMISM_TOL: f64 = 1e-9;

/// Errors from oracle computations.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// Inconsistent shapes.
    Shape(&'static str),
    /// An enumeration would exceed its case bound.
    EnumerationBudget {
        /// The number of cases the call would visit.
        cases: u128,
        /// The configured bound.
        limit: u128,
    },
    /// The instance itself is invalid.
    Mdp(MdpError),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Shape(what) => write!(f, "shape mismatch: {what}"),
            OracleError::EnumerationBudget { cases, limit } => {
                write!(
                    f,
                    "enumeration over {cases} cases exceeds the {limit} limit"
                )
            }
            OracleError::Mdp(e) => write!(f, "invalid instance: {e}"),
        }
    }
}

impl core::error::Error for OracleError {}

impl From<MdpError> for OracleError {
    fn from(e: MdpError) -> Self {
        OracleError::Mdp(e)
    }
}

/// Exact `Q^pi` and `V^pi` tables for one policy and reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    /// `Q^pi_h(x, a)`.
    pub q: StateActionTable,
    /// `V^pi_h(x)` with `horizon + 1` rows; the last is identically zero.
    pub v: StateTable,
}

impl PolicyValue {
    /// The scalar `V^pi_1(x_1)`.
    pub fn initial_value(&self, mdp: &LinearMdp) -> f64 {
        self.v.get(0, mdp.initial_state())
    }
}

/// Exact policy evaluation by the backward Bellman recursion
/// `Q_h = r_h + P_h V_{h+1}`, `V_h = <Q_h, pi_h>`.
pub fn exact_policy_value(
    mdp: &LinearMdp,
    policy: &Policy,
    reward: &RewardFunction,
) -> Result<PolicyValue, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if policy.horizon() != h_len || policy.num_states() != s || policy.num_actions() != a {
        return Err(OracleError::Shape("policy dimensions"));
    }
    if reward.horizon() != h_len {
        return Err(OracleError::Shape("reward horizon"));
    }
    let mut q = StateActionTable::zeros(h_len, s, a);
    let mut v = StateTable::zeros(h_len + 1, s);
    for step in (0..h_len).rev() {
        for state in 0..s {
            for action in 0..a {
                let row = mdp.transition_distribution(step, state, action)?;
                let backup = dot(&row, v.row(step + 1));
                q.set(
                    step,
                    state,
                    action,
                    reward.get(step, state, action) + backup,
                );
            }
            let value = dot(q.row(step, state), policy.probs(step, state));
            v.set(step, state, value);
        }
    }
    Ok(PolicyValue { q, v })
}

/// `V^pi_1(x_1)` by explicit summation over every state-action path.
///
/// Deliberately shares no machinery with [`exact_policy_value`]: this is
/// the independent cross-check. Guarded by [`PATH_ENUMERATION_LIMIT`].
pub fn brute_force_value(
    mdp: &LinearMdp,
    policy: &Policy,
    reward: &RewardFunction,
) -> Result<f64, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let per_step = (s as u128).saturating_mul(a as u128);
    let cases = (0..h_len).try_fold(1u128, |acc, _| acc.checked_mul(per_step));
    match cases {
        Some(c) if c <= PATH_ENUMERATION_LIMIT => {}
        Some(c) => {
            return Err(OracleError::EnumerationBudget {
                cases: c,
                limit: PATH_ENUMERATION_LIMIT,
            })
        }
        None => {
            return Err(OracleError::EnumerationBudget {
                cases: u128::MAX,
                limit: PATH_ENUMERATION_LIMIT,
            })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        mdp: &LinearMdp,
        policy: &Policy,
        reward: &RewardFunction,
        step: usize,
        state: usize,
        prob: f64,
        collected: f64,
        total: &mut f64,
    ) -> Result<(), OracleError> {
        if step == mdp.horizon() {
            *total += prob * collected;
            return Ok(());
        }
        for action in 0..mdp.num_actions() {
            let p_action = policy.probs(step, state)[action];
            if p_action == 0.0 {
                continue;
            }
            let gained = collected + reward.get(step, state, action);
            let row = mdp.transition_distribution(step, state, action)?;
            for (next, &p_next) in row.iter().enumerate() {
                if p_next == 0.0 {
                    continue;
                }
                descend(
                    mdp,
                    policy,
                    reward,
                    step + 1,
                    next,
                    prob * p_action * p_next,
                    gained,
                    total,
                )?;
            }
        }
        Ok(())
    }

    let mut total = 0.0;
    descend(
        mdp,
        policy,
        reward,
        0,
        mdp.initial_state(),
        1.0,
        0.0,
        &mut total,
    )?;
    Ok(total)
}

/// Per-step state visitation probabilities of a policy under the true
/// kernel, by forward recursion from the fixed initial state.
pub fn occupancy_states(mdp: &LinearMdp, policy: &Policy) -> Result<StateTable, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if policy.horizon() != h_len || policy.num_states() != s || policy.num_actions() != a {
        return Err(OracleError::Shape("policy dimensions"));
    }
    let mut occ = StateTable::zeros(h_len, s);
    occ.set(0, mdp.initial_state(), 1.0);
    for step in 0..h_len.saturating_sub(1) {
        let mut next_row = vec![0.0; s];
        for state in 0..s {
            let mass = occ.get(step, state);
            if mass == 0.0 {
                continue;
            }
            for action in 0..a {
                let p_action = policy.probs(step, state)[action];
                if p_action == 0.0 {
                    continue;
                }
                let row = mdp.transition_distribution(step, state, action)?;
                let weight = mass * p_action;
                for (next, &p_next) in row.iter().enumerate() {
                    next_row[next] += weight * p_next;
                }
            }
        }
        for (state, &value) in next_row.iter().enumerate() {
            occ.set(step + 1, state, value);
        }
    }
    Ok(occ)
}

/// The globally optimal policy in hindsight for a realized reward sequence.
///
/// Total value across episodes is linear in the reward for a fixed policy,
/// so the maximizer is the greedy policy of the summed-reward MDP, found by
/// backward dynamic programming. Ties resolve to the lowest action index.
pub fn hindsight_optimal_policy(
    mdp: &LinearMdp,
    rewards: &[RewardFunction],
) -> Result<Policy, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if rewards.is_empty() {
        return Err(OracleError::Shape("no rewards"));
    }
    if rewards.iter().any(|r| r.horizon() != h_len) {
        return Err(OracleError::Shape("reward horizon"));
    }
    let mut summed = StateActionTable::zeros(h_len, s, a);
    for reward in rewards {
        for step in 0..h_len {
            for state in 0..s {
                for action in 0..a {
                    let v = summed.get(step, state, action) + reward.get(step, state, action);
                    summed.set(step, state, action, v);
                }
            }
        }
    }

    let mut actions = vec![0usize; h_len * s];
    let mut value = vec![0.0; s];
    for step in (0..h_len).rev() {
        let mut new_value = vec![0.0; s];
        for state in 0..s {
            let mut best_action = 0;
            let mut best_q = f64::NEG_INFINITY;
            for action in 0..a {
                let row = mdp.transition_distribution(step, state, action)?;
                let q = summed.get(step, state, action) + dot(&row, &value);
                if q > best_q {
                    best_q = q;
                    best_action = action;
                }
            }
            actions[step * s + state] = best_action;
            new_value[state] = best_q;
        }
        value = new_value;
    }
    Policy::deterministic(h_len, s, a, &actions).map_err(|_| OracleError::Shape("policy build"))
}

/// Best total value over all deterministic Markov policies, by exhaustive
/// enumeration. The independent oracle for [`hindsight_optimal_policy`];
/// guarded by [`POLICY_ENUMERATION_LIMIT`].
pub fn best_deterministic_value_by_enumeration(
    mdp: &LinearMdp,
    rewards: &[RewardFunction],
) -> Result<f64, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let slots = h_len * s;
    let cases = (0..slots).try_fold(1u128, |acc, _| acc.checked_mul(a as u128));
    match cases {
        Some(c) if c <= POLICY_ENUMERATION_LIMIT => {}
        _ => {
            return Err(OracleError::EnumerationBudget {
                cases: cases.unwrap_or(u128::MAX),
                limit: POLICY_ENUMERATION_LIMIT,
            })
        }
    }

    let mut assignment = vec![0usize; slots];
    let mut best = f64::NEG_INFINITY;
    loop {
        let policy = Policy::deterministic(h_len, s, a, &assignment)
            .map_err(|_| OracleError::Shape("policy build"))?;
        let mut total = 0.0;
        for reward in rewards {
            total += exact_policy_value(mdp, &policy, reward)?.initial_value(mdp);
        }
        best = best.max(total);

        // Odometer increment over base-A digits.
        let mut slot = 0;
        loop {
            if slot == slots {
                return Ok(best);
            }
            assignment[slot] += 1;
            if assignment[slot] < a {
                break;
            }
            assignment[slot] = 0;
            slot += 1;
        }
    }
}

/// Per-episode regret bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// `V^{pi*, k}_1(x_1)`.
    pub v_star: f64,
    /// `V^{pi^k, k}_1(x_1)`.
    pub v_executed: f64,
    /// `v_star - v_executed`.
    pub instantaneous: f64,
    /// Prefix sum of instantaneous regret.
    pub cumulative: f64,
    /// Decomposition terms; filled by [`decomposition_terms`], `None` as
    /// produced by [`regret`].
    pub terms: Option<EpisodeDecomposition>,
}

/// The three-term pathwise decomposition of one episode's regret.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDecomposition {
    /// Term (i): the improvement gap under the benchmark occupancy.
    pub policy_gap: f64,
    /// Term (ii): the summed martingale differences of the episode.
    pub martingale: f64,
    /// Term (iii): benchmark-vs-realized prediction error gap.
    pub prediction_gap: f64,
    /// `instantaneous - (i) - (ii) - (iii)`; an exact identity up to floats.
    pub residual: f64,
    /// The per-step martingale differences `(D_{k,h,1}, D_{k,h,2})`.
    pub martingale_diffs: Vec<(f64, f64)>,
}

/// Regret of a sequence of executed policies against the hindsight-optimal
/// policy, measured exactly.
pub fn regret(
    mdp: &LinearMdp,
    rewards: &[RewardFunction],
    executed: &[Policy],
) -> Result<Vec<RegretRecord>, OracleError> {
    if rewards.len() != executed.len() {
        return Err(OracleError::Shape("one policy per reward"));
    }
    let optimal = hindsight_optimal_policy(mdp, rewards)?;
    let mut records = Vec::with_capacity(rewards.len());
    let mut cumulative = 0.0;
    for (index, (reward, policy)) in rewards.iter().zip(executed).enumerate() {
        let v_star = exact_policy_value(mdp, &optimal, reward)?.initial_value(mdp);
        let v_executed = exact_policy_value(mdp, policy, reward)?.initial_value(mdp);
        let instantaneous = v_star - v_executed;
        cumulative += instantaneous;
        records.push(RegretRecord {
            episode: index + 1,
            v_star,
            v_executed,
            instantaneous,
            cumulative,
            terms: None,
        });
    }
    Ok(records)
}

/// Everything the decomposition needs from one executed episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeEvalData<'a> {
    /// The policy the agent executed.
    pub policy: &'a Policy,
    /// The agent's estimated `Q^k`.
    pub q: &'a StateActionTable,
    /// The agent's estimated `V^k` (`horizon + 1` rows).
    pub v: &'a StateTable,
    /// The realized trajectory.
    pub trajectory: &'a Trajectory,
    /// The episode's reward function.
    pub reward: &'a RewardFunction,
}

/// Splits one episode's regret into the improvement-gap, martingale, and
/// prediction-error terms, pathwise.
///
/// `optimal` and `optimal_occupancy` are the hindsight policy and its exact
/// state occupancy (they do not vary across episodes, so compute them once).
pub fn decomposition_terms(
    mdp: &LinearMdp,
    optimal: &Policy,
    optimal_occupancy: &StateTable,
    data: &EpisodeEvalData<'_>,
) -> Result<EpisodeDecomposition, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if data.q.horizon() != h_len || data.v.steps() != h_len + 1 {
        return Err(OracleError::Shape("estimate table shapes"));
    }
    if data.trajectory.horizon() != h_len {
        return Err(OracleError::Shape("trajectory horizon"));
    }

    let exec_value = exact_policy_value(mdp, data.policy, data.reward)?;
    let v_star = exact_policy_value(mdp, optimal, data.reward)?.initial_value(mdp);
    let v_executed = exec_value.initial_value(mdp);
    let instantaneous = v_star - v_executed;

    let iota = prediction_error(mdp, data.reward, data.q, data.v)?;

    let mut policy_gap = 0.0;
    let mut benchmark_error = 0.0;
    for step in 0..h_len {
        for state in 0..s {
            let mass = optimal_occupancy.get(step, state);
            if mass == 0.0 {
                continue;
            }
            let q_row = data.q.row(step, state);
            let star_row = optimal.probs(step, state);
            let exec_row = data.policy.probs(step, state);
            let iota_row = iota.row(step, state);
            let mut gap = 0.0;
            let mut err = 0.0;
            for action in 0..a {
                gap += (star_row[action] - exec_row[action]) * q_row[action];
                err += star_row[action] * iota_row[action];
            }
            policy_gap += mass * gap;
            benchmark_error += mass * err;
        }
    }

    let mut martingale = 0.0;
    let mut prediction_gap = 0.0;
    let mut martingale_diffs = Vec::with_capacity(h_len);
    for step in 0..h_len {
        let x = data.trajectory.states[step];
        let act = data.trajectory.actions[step];
        let x_next = data.trajectory.states[step + 1];

        // D_{k,h,1}: action-sampling noise in the Q-estimate gap.
        let mut expected_gap = 0.0;
        for action in 0..a {
            expected_gap += data.policy.probs(step, x)[action]
                * (data.q.get(step, x, action) - exec_value.q.get(step, x, action));
        }
        let d1 = expected_gap - (data.q.get(step, x, act) - exec_value.q.get(step, x, act));

        // D_{k,h,2}: next-state sampling noise in the V-estimate gap.
        let row = mdp.transition_distribution(step, x, act)?;
        let mut expected_next_gap = 0.0;
        for (next, &p) in row.iter().enumerate() {
            expected_next_gap +=
                p * (data.v.get(step + 1, next) - exec_value.v.get(step + 1, next));
        }
        let d2 =
            expected_next_gap - (data.v.get(step + 1, x_next) - exec_value.v.get(step + 1, x_next));

        martingale += d1 + d2;
        martingale_diffs.push((d1, d2));
        prediction_gap -= iota.get(step, x, act);
    }
    prediction_gap += benchmark_error;

    let residual = instantaneous - policy_gap - martingale - prediction_gap;
    Ok(EpisodeDecomposition {
        policy_gap,
        martingale,
        prediction_gap,
        residual,
        martingale_diffs,
    })
}

/// Model prediction error `iota_h = r_h + P_h V_{h+1} - Q_h` under the true
/// kernel.
pub fn prediction_error(
    mdp: &LinearMdp,
    reward: &RewardFunction,
    q: &StateActionTable,
    v: &StateTable,
) -> Result<StateActionTable, OracleError> {
    let (h_len, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if q.horizon() != h_len || v.steps() != h_len + 1 {
        return Err(OracleError::Shape("estimate table shapes"));
    }
    let mut iota = StateActionTable::zeros(h_len, s, a);
    for step in 0..h_len {
        for state in 0..s {
            for action in 0..a {
                let row = mdp.transition_distribution(step, state, action)?;
                let backup = dot(&row, v.row(step + 1));
                iota.set(
                    step,
                    state,
                    action,
                    reward.get(step, state, action) + backup - q.get(step, state, action),
                );
            }
        }
    }
    Ok(iota)
}

/// Prediction errors with their unclipped companion and the bonus table.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrorTable {
    /// `iota = r + P V - Q` (clipped `Q`).
    pub error: StateActionTable,
    /// `iota_raw = r + P V - Qbar` (unclipped estimate).
    pub raw_error: StateActionTable,
    /// The bonus `Gamma` used by the episode.
    pub bonus: StateActionTable,
}

impl PredictionErrorTable {
    /// Count of entries with `iota` above the optimism slack.
    pub fn optimism_violations(&self) -> usize {
        self.error
            .as_slice()
            .iter()
            .filter(|&&e| e > OPTIMISM_TOL)
            .count()
    }

    /// Count of entries with `iota < -2 Gamma - tol`.
    pub fn lower_bound_violations(&self) -> usize {
        self.error
            .as_slice()
            .iter()
            .zip(self.bonus.as_slice())
            .filter(|(&e, &g)| e < -2.0 * g - OPTIMISM_TOL)
            .count()
    }
}

/// Builds the full prediction-error table for one evaluated episode.
pub fn prediction_error_table(
    mdp: &LinearMdp,
    reward: &RewardFunction,
    q: &StateActionTable,
    v: &StateTable,
    q_raw: &StateActionTable,
    bonus: &StateActionTable,
) -> Result<PredictionErrorTable, OracleError> {
    let error = prediction_error(mdp, reward, q, v)?;
    let mut raw_error = error.clone();
    for step in 0..raw_error.horizon() {
        for state in 0..raw_error.num_states() {
            for action in 0..raw_error.num_actions() {
                let shifted = raw_error.get(step, state, action) + q.get(step, state, action)
                    - q_raw.get(step, state, action);
                raw_error.set(step, state, action, shifted);
            }
        }
    }
    Ok(PredictionErrorTable {
        error,
        raw_error,
        bonus: bonus.clone(),
    })
}

/// Applies the implicitly estimated transition operator of a step's history
/// to a value function: `(x, a) -> phi_V(x,a)^T Lambda^{-1} sum_tau phi^tau
/// v^tau`.
///
/// Rebuilt from the raw history with a fresh factorization, independent of
/// the learner's maintained inverse.
pub fn implicit_transition_apply(
    mdp: &LinearMdp,
    history: &HistoryBuffer,
    lambda: f64,
    values: &[f64],
) -> Result<StateActionTable, OracleError> {
    let (s, a, d) = (mdp.num_states(), mdp.num_actions(), mdp.feature_dim());
    if history.dim() != d {
        return Err(OracleError::Shape("history feature dimension"));
    }
    if values.len() != s {
        return Err(OracleError::Shape("value function length"));
    }
    let mut gram = DenseMatrix::scaled_identity(d, lambda);
    let mut target = vec![0.0; d];
    for i in 0..history.len() {
        let phi = history.feature(i);
        gram.add_scaled_outer(phi, 1.0);
        let v = history.target(i);
        for (t, &p) in target.iter_mut().zip(phi) {
            *t += v * p;
        }
    }
    let weights = gram
        .cholesky()
        .expect("lambda I + sum of outer products is positive definite")
        .solve(&target);

    let mut out = StateActionTable::zeros(1, s, a);
    let mut phi_v = vec![0.0; d];
    for state in 0..s {
        for action in 0..a {
            mdp.feature_expectation_into(state, action, values, &mut phi_v);
            out.set(0, state, action, dot(&phi_v, &weights));
        }
    }
    Ok(out)
}

/// Evaluates both sides of the elliptical potential inequality on a feature
/// sequence: `lhs = sum_j min(1, phi_j^T Lambda_j^{-1} phi_j)` with
/// `Lambda_j = lambda I + sum_{i<j} phi_i phi_i^T`, and
/// `rhs = 2 log(det Lambda_{t+1} / det Lambda_1)`.
///
/// Each quadratic form uses a fresh factorization of the running Gram
/// matrix.
pub fn elliptical_potential_check<'a, I>(dim: usize, lambda: f64, features: I) -> (f64, f64)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut gram = DenseMatrix::scaled_identity(dim, lambda);
    let base_log_det = gram
        .cholesky()
        .expect("lambda I is positive definite")
        .log_det();
    let mut lhs = 0.0;
    for phi in features {
        debug_assert_eq!(phi.len(), dim);
        let factor = gram
            .cholesky()
            .expect("running Gram stays positive definite");
        let solved = factor.solve(phi);
        let quad = dot(phi, &solved);
        lhs += quad.min(1.0);
        gram.add_scaled_outer(phi, 1.0);
    }
    let rhs = 2.0
        * (gram
            .cholesky()
            .expect("final Gram is positive definite")
            .log_det()
            - base_log_det);
    (lhs, rhs)
}

/// Convenience: absolute bound `2H` that every martingale difference must
/// respect.
pub fn martingale_difference_bound(horizon: usize) -> f64 {
    2.0 * horizon as f64
}

/// Max absolute value over both martingale difference streams.
pub fn max_abs_martingale_diff(diffs: &[(f64, f64)]) -> f64 {
    diffs
        .iter()
        .fold(0.0f64, |m, &(d1, d2)| m.max(num::abs(d1)).max(num::abs(d2)))
}
