//! Finite episodic linear MDPs.
//!
//! The transition kernel factors through a known feature map,
//! `P_h(x'|x,a) = psi(x,a,x')^T theta_h`, with per-step parameter vectors
//! `theta_h`. State and action spaces are finite and index-based, so the
//! feature integrals of the evaluation step become exact finite sums.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::linalg;
use crate::num;
use crate::policy::Policy;
use crate::seeding;
use crate::tables::StateActionTable;

/// Row sums may deviate from 1 by at most this much before an instance is
/// treated as invalid.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Transition entries this far below zero are float noise and get clamped;
/// anything lower is a hard error.
pub const NEGATIVE_ENTRY_TOL: f64 = 1e-12;
/// Slack for the `||theta_h||_2 <= sqrt(d)` bound.
pub const THETA_NORM_TOL: f64 = 1e-9;
/// Slack for the `||sum_x' psi(x,a,x') V(x')||_2 <= sqrt(d) H` bound.
pub const VALUE_IMAGE_NORM_TOL: f64 = 1e-9;

/// Errors from MDP construction and transition queries.
#[derive(Debug, Clone, PartialEq)]
pub enum MdpError {
    /// Inconsistent shapes or out-of-range indices at construction.
    Shape(&'static str),
    /// A non-finite number where a real was required.
    NonFinite(&'static str),
    /// A transition row whose sum is too far from 1.
    RowSum {
        /// Step index.
        step: usize,
        /// State index.
        state: usize,
        /// Action index.
        action: usize,
        /// Observed row sum.
        sum: f64,
    },
    /// A transition entry below the clamping tolerance.
    NegativeEntry {
        /// Step index.
        step: usize,
        /// State index.
        state: usize,
        /// Action index.
        action: usize,
        /// Next-state index.
        next_state: usize,
        /// Offending raw value.
        value: f64,
    },
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpError::Shape(what) => write!(f, "shape mismatch: {what}"),
            MdpError::NonFinite(what) => write!(f, "non-finite value: {what}"),
            MdpError::RowSum {
                step,
                state,
                action,
                sum,
            } => write!(
                f,
                "transition row (h={step}, x={state}, a={action}) sums to {sum}, not 1"
            ),
            MdpError::NegativeEntry {
                step,
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "transition entry (h={step}, x={state}, a={action}, x'={next_state}) is {value}"
            ),
        }
    }
}

impl core::error::Error for MdpError {}

/// Row-stochastic kernel: one probability row over next states per
/// state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticKernel {
    num_states: usize,
    num_actions: usize,
    rows: Vec<f64>,
}

impl StochasticKernel {
    /// Builds a kernel from a flat buffer indexed `(x * A + a) * S + x'`.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        rows: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if rows.len() != num_states * num_actions * num_states {
            return Err(MdpError::Shape("kernel buffer length"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite("kernel entry"));
        }
        Ok(Self {
            num_states,
            num_actions,
            rows,
        })
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Probability row for `(x, a)`.
    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let o = (state * self.num_actions + action) * self.num_states;
        &self.rows[o..o + self.num_states]
    }

    /// Flat backing slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// How `psi(x, a, x')` is represented.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    /// Canonical basis of `R^{S^2 A}`: `psi(x,a,x') = e_{(x,a,x')}`.
    Tabular,
    /// `psi(x,a,x') = (q_1(x'|x,a), ..., q_d(x'|x,a))` for `d` base kernels.
    Mixture {
        /// The base kernels `q_j`, one per feature coordinate.
        kernels: Vec<StochasticKernel>,
    },
    /// Fully tabulated values indexed `((x * A + a) * S + x') * d + i`.
    Explicit {
        /// Flat buffer of feature values.
        values: Vec<f64>,
    },
}

/// Known feature map of a linear MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    num_states: usize,
    num_actions: usize,
    kind: FeatureKind,
}

impl FeatureMap {
    /// Tabular embedding feature map with `d = S^2 A`.
    pub fn tabular(num_states: usize, num_actions: usize) -> Self {
        Self {
            dim: num_states * num_states * num_actions,
            num_states,
            num_actions,
            kind: FeatureKind::Tabular,
        }
    }

    /// Mixture feature map over `d` base kernels.
    pub fn mixture(kernels: Vec<StochasticKernel>) -> Result<Self, MdpError> {
        let first = kernels
            .first()
            .ok_or(MdpError::Shape("no mixture kernels"))?;
        let (s, a) = (first.num_states(), first.num_actions());
        if kernels
            .iter()
            .any(|k| k.num_states() != s || k.num_actions() != a)
        {
            return Err(MdpError::Shape("mixture kernel sizes"));
        }
        Ok(Self {
            dim: kernels.len(),
            num_states: s,
            num_actions: a,
            kind: FeatureKind::Mixture { kernels },
        })
    }

    /// Explicit feature map from a flat buffer indexed
    /// `((x * A + a) * S + x') * d + i`.
    pub fn explicit(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if values.len() != num_states * num_actions * num_states * dim {
            return Err(MdpError::Shape("explicit feature buffer length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite("feature entry"));
        }
        Ok(Self {
            dim,
            num_states,
            num_actions,
            kind: FeatureKind::Explicit { values },
        })
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of states the map is defined over.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions the map is defined over.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Representation kind.
    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    /// Writes `psi(x, a, x')` into `out`.
    pub fn eval_into(&self, state: usize, action: usize, next_state: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            FeatureKind::Tabular => {
                out.fill(0.0);
                let idx = (state * self.num_actions + action) * self.num_states + next_state;
                out[idx] = 1.0;
            }
            FeatureKind::Mixture { kernels } => {
                for (o, kernel) in out.iter_mut().zip(kernels) {
                    *o = kernel.row(state, action)[next_state];
                }
            }
            FeatureKind::Explicit { values } => {
                let o =
                    ((state * self.num_actions + action) * self.num_states + next_state) * self.dim;
                out.copy_from_slice(&values[o..o + self.dim]);
            }
        }
    }

    /// `psi(x, a, x')` as a fresh vector.
    pub fn eval(&self, state: usize, action: usize, next_state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(state, action, next_state, &mut out);
        out
    }
}

/// Per-step reward tables `r_h(x, a)`, nominally valued in `[0, 1]`.
///
/// Construction only requires finite entries; range conformance is checked
/// by [`crate::adversary::validate_reward`] so that out-of-range tables can
/// be inspected rather than rejected outright.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunction {
    table: StateActionTable,
}

impl RewardFunction {
    /// Wraps a table of finite reward values.
    pub fn from_table(table: StateActionTable) -> Result<Self, MdpError> {
        if table.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite("reward entry"));
        }
        Ok(Self { table })
    }

    /// Constant reward `value` at every `(h, x, a)`.
    pub fn constant(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        value: f64,
    ) -> Result<Self, MdpError> {
        Self::from_table(StateActionTable::filled(
            horizon,
            num_states,
            num_actions,
            value,
        ))
    }

    /// Reward at `(h, x, a)`.
    #[inline]
    pub fn get(&self, step: usize, state: usize, action: usize) -> f64 {
        self.table.get(step, state, action)
    }

    /// Underlying table.
    pub fn table(&self) -> &StateActionTable {
        &self.table
    }

    /// Number of steps.
    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }
}

/// One realized episode: states `x_1..x_{H+1}`, actions `a_1..a_H`, and the
/// rewards received along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// 1-based episode index `k`.
    pub episode: usize,
    /// Visited states, length `H + 1` (the last entry is the terminal marker).
    pub states: Vec<usize>,
    /// Taken actions, length `H`.
    pub actions: Vec<usize>,
    /// Realized rewards `r_h(x_h, a_h)`, length `H`.
    pub rewards: Vec<f64>,
}

impl Trajectory {
    /// Validates lengths and wraps the parts.
    pub fn new(
        episode: usize,
        states: Vec<usize>,
        actions: Vec<usize>,
        rewards: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if states.len() != actions.len() + 1 || rewards.len() != actions.len() {
            return Err(MdpError::Shape("trajectory lengths"));
        }
        Ok(Self {
            episode,
            states,
            actions,
            rewards,
        })
    }

    /// Episode horizon.
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Which probe produced a `ValueImageNorm` violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueProbe {
    /// `V(x') = H` for all states.
    ConstantHorizon,
    /// `V(x') = 0` for all states.
    Zero,
    /// The i-th random probe with entries uniform in `[0, H]`.
    Random(usize),
}

/// One violated instance invariant, with its location and magnitude.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `psi(x,a,x')^T theta_h` below the clamping tolerance.
    NegativeTransition {
        /// Step index.
        step: usize,
        /// State index.
        state: usize,
        /// Action index.
        action: usize,
        /// Next-state index.
        next_state: usize,
        /// Offending raw value.
        value: f64,
    },
    /// Transition row sum outside `[1 - tol, 1 + tol]`.
    RowSum {
        /// Step index.
        step: usize,
        /// State index.
        state: usize,
        /// Action index.
        action: usize,
        /// Observed row sum.
        sum: f64,
    },
    /// `||theta_h||_2` above `sqrt(d)` plus slack.
    ThetaNorm {
        /// Step index.
        step: usize,
        /// Observed norm.
        norm: f64,
        /// The bound `sqrt(d)`.
        bound: f64,
    },
    /// `||sum_x' psi(x,a,x') V(x')||_2` above `sqrt(d) H` plus slack.
    ValueImageNorm {
        /// State index.
        state: usize,
        /// Action index.
        action: usize,
        /// Which probe function `V` was used.
        probe: ValueProbe,
        /// Observed norm.
        norm: f64,
        /// The bound `sqrt(d) H`.
        bound: f64,
    },
}

impl Violation {
    /// How far past the tolerance the violation lies.
    pub fn magnitude(&self) -> f64 {
        match self {
            Violation::NegativeTransition { value, .. } => -value,
            Violation::RowSum { sum, .. } => num::abs(sum - 1.0),
            Violation::ThetaNorm { norm, bound, .. }
            | Violation::ValueImageNorm { norm, bound, .. } => norm - bound,
        }
    }
}

/// Outcome of checking a [`LinearMdp`] against its defining assumptions.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Every violated invariant, in scan order.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// True when no invariant was violated.
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Finite episodic linear MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp {
    horizon: usize,
    features: FeatureMap,
    theta: Vec<Vec<f64>>,
    initial_state: usize,
}

impl LinearMdp {
    /// Assembles an MDP; shapes are checked, the stochasticity invariants are
    /// not (use [`LinearMdp::validate`]).
    pub fn new(
        features: FeatureMap,
        theta: Vec<Vec<f64>>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let horizon = theta.len();
        if horizon == 0 {
            return Err(MdpError::Shape("empty horizon"));
        }
        if theta.iter().any(|t| t.len() != features.dim()) {
            return Err(MdpError::Shape("theta length vs feature dim"));
        }
        if theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite("theta entry"));
        }
        if initial_state >= features.num_states() {
            return Err(MdpError::Shape("initial state index"));
        }
        Ok(Self {
            horizon,
            features,
            theta,
            initial_state,
        })
    }

    /// Episode length `H`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.features.num_states()
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    /// Feature dimension `d`.
    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    /// The feature map.
    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Parameter vector `theta_h`.
    pub fn theta(&self, step: usize) -> &[f64] {
        &self.theta[step]
    }

    /// The fixed initial state `x_1`.
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Raw row `psi(x,a,.)^T theta_h` without clamping or renormalization.
    pub fn raw_transition_row(&self, step: usize, state: usize, action: usize) -> Vec<f64> {
        let s = self.num_states();
        let theta = &self.theta[step];
        let mut row = vec![0.0; s];
        match self.features.kind() {
            FeatureKind::Tabular => {
                let o = (state * self.num_actions() + action) * s;
                row.copy_from_slice(&theta[o..o + s]);
            }
            FeatureKind::Mixture { kernels } => {
                for (next, r) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, kernel) in kernels.iter().enumerate() {
                        acc += theta[j] * kernel.row(state, action)[next];
                    }
                    *r = acc;
                }
            }
            FeatureKind::Explicit { values } => {
                let d = self.feature_dim();
                for (next, r) in row.iter_mut().enumerate() {
                    let o = ((state * self.num_actions() + action) * s + next) * d;
                    *r = linalg::dot(&values[o..o + d], theta);
                }
            }
        }
        row
    }

    /// Transition distribution `P_h(.|x, a)`.
    ///
    /// Entries within [`NEGATIVE_ENTRY_TOL`] below zero are clamped and the
    /// row renormalized; a row sum further than [`ROW_SUM_TOL`] from 1 or a
    /// more negative entry signals an invalid instance and is rejected.
    pub fn transition_distribution(
        &self,
        step: usize,
        state: usize,
        action: usize,
    ) -> Result<Vec<f64>, MdpError> {
        let mut row = self.raw_transition_row(step, state, action);
        for (next, value) in row.iter_mut().enumerate() {
            if *value < -NEGATIVE_ENTRY_TOL {
                return Err(MdpError::NegativeEntry {
                    step,
                    state,
                    action,
                    next_state: next,
                    value: *value,
                });
            }
            if *value < 0.0 {
                *value = 0.0;
            }
        }
        let sum: f64 = row.iter().sum();
        if num::abs(sum - 1.0) > ROW_SUM_TOL {
            return Err(MdpError::RowSum {
                step,
                state,
                action,
                sum,
            });
        }
        for value in &mut row {
            *value /= sum;
        }
        Ok(row)
    }

    /// `sum_x' psi(x, a, x') V(x')`, the exact finite-space realization of
    /// the feature integral used by the evaluation step.
    pub fn feature_expectation_into(
        &self,
        state: usize,
        action: usize,
        values: &[f64],
        out: &mut [f64],
    ) {
        debug_assert_eq!(values.len(), self.num_states());
        debug_assert_eq!(out.len(), self.feature_dim());
        out.fill(0.0);
        match self.features.kind() {
            FeatureKind::Tabular => {
                let o = (state * self.num_actions() + action) * self.num_states();
                for (next, &v) in values.iter().enumerate() {
                    out[o + next] += v;
                }
            }
            FeatureKind::Mixture { kernels } => {
                for (j, kernel) in kernels.iter().enumerate() {
                    out[j] += linalg::dot(kernel.row(state, action), values);
                }
            }
            FeatureKind::Explicit {
                values: feature_values,
            } => {
                let d = self.feature_dim();
                for (next, &v) in values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let o = ((state * self.num_actions() + action) * self.num_states() + next) * d;
                    for (acc, psi) in out.iter_mut().zip(&feature_values[o..o + d]) {
                        *acc += psi * v;
                    }
                }
            }
        }
    }

    /// `feature_expectation_into` returning a fresh vector.
    pub fn feature_expectation(&self, state: usize, action: usize, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim()];
        self.feature_expectation_into(state, action, values, &mut out);
        out
    }

    /// Checks every instance invariant and reports each violation with its
    /// location and magnitude.
    ///
    /// The value-image bound is checked exactly for `V = H` and `V = 0` and
    /// for `v_samples` random probes with entries uniform in `[0, H]`.
    pub fn validate(&self, v_samples: usize, seed: u64) -> ValidationReport {
        let mut report = ValidationReport::default();
        let (s, a, d, h_len) = (
            self.num_states(),
            self.num_actions(),
            self.feature_dim(),
            self.horizon,
        );

        for step in 0..h_len {
            for state in 0..s {
                for action in 0..a {
                    let row = self.raw_transition_row(step, state, action);
                    for (next, &value) in row.iter().enumerate() {
                        if value < -NEGATIVE_ENTRY_TOL {
                            report.violations.push(Violation::NegativeTransition {
                                step,
                                state,
                                action,
                                next_state: next,
                                value,
                            });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if num::abs(sum - 1.0) > ROW_SUM_TOL {
                        report.violations.push(Violation::RowSum {
                            step,
                            state,
                            action,
                            sum,
                        });
                    }
                }
            }
        }

        let theta_bound = num::sqrt(d as f64);
        for (step, theta) in self.theta.iter().enumerate() {
            let norm = linalg::norm2(theta);
            if norm > theta_bound + THETA_NORM_TOL {
                report.violations.push(Violation::ThetaNorm {
                    step,
                    norm,
                    bound: theta_bound,
                });
            }
        }

        let horizon_f = self.horizon as f64;
        let image_bound = num::sqrt(d as f64) * horizon_f;
        let mut rng = seeding::rng_from(seed);
        let mut probes: Vec<(ValueProbe, Vec<f64>)> = Vec::with_capacity(v_samples + 2);
        probes.push((ValueProbe::ConstantHorizon, vec![horizon_f; s]));
        probes.push((ValueProbe::Zero, vec![0.0; s]));
        for i in 0..v_samples {
            let v: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..=horizon_f)).collect();
            probes.push((ValueProbe::Random(i), v));
        }
        let mut phi = vec![0.0; d];
        for state in 0..s {
            for action in 0..a {
                for (probe, values) in &probes {
                    self.feature_expectation_into(state, action, values, &mut phi);
                    let norm = linalg::norm2(&phi);
                    if norm > image_bound + VALUE_IMAGE_NORM_TOL {
                        report.violations.push(Violation::ValueImageNorm {
                            state,
                            action,
                            probe: *probe,
                            norm,
                            bound: image_bound,
                        });
                    }
                }
            }
        }

        report
    }

    /// Plays one episode: `x_1` is the fixed initial state, actions are
    /// sampled from the policy, next states from the transition kernel, and
    /// rewards read from the episode's reward function.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        reward: &RewardFunction,
        episode: usize,
        rng: &mut R,
    ) -> Result<Trajectory, MdpError> {
        assert_eq!(policy.horizon(), self.horizon, "policy horizon");
        assert_eq!(policy.num_states(), self.num_states(), "policy states");
        assert_eq!(reward.horizon(), self.horizon, "reward horizon");

        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut rewards = Vec::with_capacity(self.horizon);
        let mut state = self.initial_state;
        states.push(state);
        for step in 0..self.horizon {
            let action = sample_index(policy.probs(step, state), rng);
            actions.push(action);
            rewards.push(reward.get(step, state, action));
            let row = self.transition_distribution(step, state, action)?;
            state = sample_index(&row, rng);
            states.push(state);
        }
        Ok(Trajectory {
            episode,
            states,
            actions,
            rewards,
        })
    }
}

/// Embeds per-step tabular transition tables as a linear MDP with
/// `d = S^2 A` and canonical-basis features.
pub fn tabular_to_linear(
    kernels: &[StochasticKernel],
    initial_state: usize,
) -> Result<LinearMdp, MdpError> {
    let first = kernels.first().ok_or(MdpError::Shape("empty horizon"))?;
    let (s, a) = (first.num_states(), first.num_actions());
    let mut theta = Vec::with_capacity(kernels.len());
    for (step, kernel) in kernels.iter().enumerate() {
        if kernel.num_states() != s || kernel.num_actions() != a {
            return Err(MdpError::Shape("kernel sizes across steps"));
        }
        for state in 0..s {
            for action in 0..a {
                let sum: f64 = kernel.row(state, action).iter().sum();
                if num::abs(sum - 1.0) > ROW_SUM_TOL {
                    return Err(MdpError::RowSum {
                        step,
                        state,
                        action,
                        sum,
                    });
                }
            }
        }
        theta.push(kernel.as_slice().to_vec());
    }
    LinearMdp::new(FeatureMap::tabular(s, a), theta, initial_state)
}

/// Samples an index from a probability row by cumulative inversion.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding pushed the cumulative sum below 1; fall back to the last
    // index with mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}
