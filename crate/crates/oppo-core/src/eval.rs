//! Optimistic least-squares policy evaluation.
//!
//! Per step `h` the learner keeps a regularized Gram matrix
//! `Lambda_h = sum_tau phi^tau phi^tau^T + lambda I` over the features of
//! visited state-action pairs, together with a maintained inverse and the
//! regression target accumulator. The backward pass then forms
//! `Q = clip(r + phi^T w + Gamma, 0, H - h)` with the elliptical bonus
//! `Gamma = beta sqrt(phi^T Lambda^{-1} phi)` and `V = <Q, pi>`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{dot, DenseMatrix};
use crate::mdp::{LinearMdp, RewardFunction};
use crate::num;
use crate::policy::Policy;
use crate::tables::{StateActionTable, StateTable};

/// Full re-factorization cadence for the maintained inverse.
pub const REFACTOR_PERIOD: usize = 256;
/// Maintained inverse must satisfy `|Lambda Lambda^{-1} - I| <=` this.
pub const INVERSE_DRIFT_TOL: f64 = 1e-8;
/// Bonus radicands this far below zero are clamped; lower values signal a
/// corrupted accumulator.
pub const RADICAND_TOL: f64 = 1e-12;

/// Errors from the evaluation machinery.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Inconsistent shapes.
    Shape(&'static str),
    /// Non-positive or non-finite regularizer / parameter.
    BadParameter(&'static str),
    /// A quadratic form came out more negative than float noise allows.
    CorruptedAccumulator {
        /// The offending radicand.
        radicand: f64,
    },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Shape(what) => write!(f, "shape mismatch: {what}"),
            EvalError::BadParameter(what) => write!(f, "bad parameter: {what}"),
            EvalError::CorruptedAccumulator { radicand } => {
                write!(f, "bonus radicand {radicand} below tolerance")
            }
        }
    }
}

impl core::error::Error for EvalError {}

/// Regularized Gram matrix, maintained inverse, and target accumulator for
/// one step's ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeAccumulator {
    dim: usize,
    lambda: f64,
    updates: usize,
    gram: DenseMatrix,
    inverse: DenseMatrix,
    target: Vec<f64>,
}

impl RidgeAccumulator {
    /// Fresh accumulator `Lambda = lambda I`, `u = 0`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self, EvalError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(EvalError::BadParameter("lambda must be positive"));
        }
        Ok(Self {
            dim,
            lambda,
            updates: 0,
            gram: DenseMatrix::scaled_identity(dim, lambda),
            inverse: DenseMatrix::scaled_identity(dim, 1.0 / lambda),
            target: vec![0.0; dim],
        })
    }

    /// Restores an accumulator from checkpointed parts.
    pub fn from_parts(
        lambda: f64,
        updates: usize,
        gram: DenseMatrix,
        inverse: DenseMatrix,
        target: Vec<f64>,
    ) -> Result<Self, EvalError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(EvalError::BadParameter("lambda must be positive"));
        }
        let dim = gram.dim();
        if inverse.dim() != dim || target.len() != dim {
            return Err(EvalError::Shape("accumulator part dimensions"));
        }
        Ok(Self {
            dim,
            lambda,
            updates,
            gram,
            inverse,
            target,
        })
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ridge regularizer.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of rank-one updates absorbed so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// The Gram matrix `Lambda`.
    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    /// The maintained inverse `Lambda^{-1}`.
    pub fn inverse(&self) -> &DenseMatrix {
        &self.inverse
    }

    /// The target accumulator `u = sum_tau phi^tau v^tau`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Absorbs one observation: `Lambda += phi phi^T`, `u += v phi`, inverse
    /// updated by Sherman-Morrison with periodic full re-factorization.
    pub fn rank_one_update(&mut self, phi: &[f64], value: f64) {
        assert_eq!(phi.len(), self.dim, "feature length");
        self.gram.add_scaled_outer(phi, 1.0);
        for (u, &p) in self.target.iter_mut().zip(phi) {
            *u += value * p;
        }
        self.updates += 1;

        let scaled = self.inverse.mul_vec(phi);
        let denom = 1.0 + dot(phi, &scaled);
        // denom >= 1 in exact arithmetic; a small value means the maintained
        // inverse has drifted.
        if denom < 0.5 || self.updates.is_multiple_of(REFACTOR_PERIOD) {
            self.refactor();
            return;
        }
        let inv = &mut self.inverse;
        for i in 0..self.dim {
            let si = scaled[i] / denom;
            if si == 0.0 {
                continue;
            }
            for j in 0..self.dim {
                let v = inv.get(i, j) - si * scaled[j];
                inv.set(i, j, v);
            }
        }
    }

    /// Recomputes the inverse from the Gram matrix.
    pub fn refactor(&mut self) {
        self.inverse = self
            .gram
            .cholesky()
            .expect("Lambda >= lambda I is positive definite")
            .inverse();
    }

    /// Max absolute entry of `Lambda Lambda^{-1} - I`.
    pub fn consistency_drift(&self) -> f64 {
        self.gram.product_identity_drift(&self.inverse)
    }

    /// Ridge weights `w = Lambda^{-1} u`, the minimizer of the regularized
    /// squared Bellman error.
    pub fn solve_weights(&self) -> Vec<f64> {
        self.inverse.mul_vec(&self.target)
    }

    /// Elliptical bonus `beta sqrt(phi^T Lambda^{-1} phi)`.
    pub fn bonus(&self, phi: &[f64], beta: f64) -> Result<f64, EvalError> {
        assert_eq!(phi.len(), self.dim, "feature length");
        let radicand = self.inverse.quadratic_form(phi);
        if radicand < -RADICAND_TOL {
            return Err(EvalError::CorruptedAccumulator { radicand });
        }
        Ok(beta * num::sqrt(radicand.max(0.0)))
    }
}

/// Append-only per-step history of `(phi^tau, V^tau_{h+1}(x^tau_{h+1}))`
/// pairs, in episode (filtration) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryBuffer {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl HistoryBuffer {
    /// Empty buffer for features of length `dim`.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Restores a buffer from checkpointed parts.
    pub fn from_parts(
        dim: usize,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self, EvalError> {
        if features.len() != targets.len() * dim {
            return Err(EvalError::Shape("history buffer lengths"));
        }
        Ok(Self {
            dim,
            features,
            targets,
        })
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored pairs.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    /// True when nothing has been stored.
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Appends one pair.
    pub fn push(&mut self, phi: &[f64], target: f64) {
        assert_eq!(phi.len(), self.dim, "feature length");
        self.features.extend_from_slice(phi);
        self.targets.push(target);
    }

    /// Stored feature vector `phi^tau` (0-based position).
    pub fn feature(&self, index: usize) -> &[f64] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    /// Stored regression target.
    pub fn target(&self, index: usize) -> f64 {
        self.targets[index]
    }

    /// All targets.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Flat feature storage.
    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    /// Empirical regularized squared error `M(w) + lambda ||w||^2` of a
    /// candidate weight vector against this history.
    pub fn ridge_objective(&self, w: &[f64], lambda: f64) -> f64 {
        let mut acc = lambda * dot(w, w);
        for i in 0..self.len() {
            let r = self.target(i) - dot(self.feature(i), w);
            acc += r * r;
        }
        acc
    }
}

/// Exploration bonus scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusParams {
    beta: f64,
}

impl BonusParams {
    /// Wraps an explicit `beta >= 0`.
    pub fn new(beta: f64) -> Result<Self, EvalError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(EvalError::BadParameter("beta must be finite and >= 0"));
        }
        Ok(Self { beta })
    }

    /// The theorem schedule `beta = c sqrt(d H^2 log(d T / zeta))` with
    /// `T = H K`.
    pub fn from_constant(
        c_beta: f64,
        dim: usize,
        horizon: usize,
        episodes: usize,
        zeta: f64,
    ) -> Result<Self, EvalError> {
        if !(c_beta.is_finite() && c_beta >= 0.0) {
            return Err(EvalError::BadParameter("c_beta must be finite and >= 0"));
        }
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(EvalError::BadParameter("zeta must lie in (0, 1]"));
        }
        let d = dim as f64;
        let h = horizon as f64;
        let t = h * episodes as f64;
        let beta = c_beta * num::sqrt(d * h * h * num::ln(d * t / zeta));
        Self::new(beta)
    }

    /// The bonus scale.
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Estimated tables from one evaluation pass: `Q_h` clipped to
/// `[0, H - h + 1]` (1-based `h`) and `V_h = <Q_h, pi_h>`, with the terminal
/// row `V_{H+1}` identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    q: StateActionTable,
    v: StateTable,
}

impl ValueTables {
    /// All-zero tables (the episode-0 initialization).
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            q: StateActionTable::zeros(horizon, num_states, num_actions),
            v: StateTable::zeros(horizon + 1, num_states),
        }
    }

    /// Wraps prebuilt tables (used when restoring checkpoints).
    pub fn from_parts(q: StateActionTable, v: StateTable) -> Result<Self, EvalError> {
        if v.steps() != q.horizon() + 1 || v.num_states() != q.num_states() {
            return Err(EvalError::Shape("value table shapes"));
        }
        Ok(Self { q, v })
    }

    /// The Q table.
    pub fn q(&self) -> &StateActionTable {
        &self.q
    }

    /// The V table (`horizon + 1` rows, last identically zero).
    pub fn v(&self) -> &StateTable {
        &self.v
    }
}

/// Per-episode evaluation by-products used by diagnostics and oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDiagnostics {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// Unclipped `Qbar = r + phi^T w + Gamma`.
    pub q_raw: StateActionTable,
    /// Bonus table `Gamma`.
    pub bonus: StateActionTable,
    /// Ridge weights per step.
    pub weights: Vec<Vec<f64>>,
    features: Vec<f64>,
}

impl EvalDiagnostics {
    /// The evaluated feature vector `phi_h(x, a)`.
    pub fn phi(&self, step: usize, state: usize, action: usize) -> &[f64] {
        let o = ((step * self.num_states + state) * self.num_actions + action) * self.dim;
        &self.features[o..o + self.dim]
    }
}

/// The backward evaluation pass of the episode loop.
///
/// `accumulators` holds one ridge state per step, built from the first
/// `k - 1` episodes. Appending the new episode's `(phi, V)` pair to the
/// history is the caller's job once the trajectory is known (see
/// [`crate::agent::Agent::end_episode`]).
pub fn evaluate_policy(
    accumulators: &[RidgeAccumulator],
    policy: &Policy,
    reward: &RewardFunction,
    mdp: &LinearMdp,
    bonus: BonusParams,
) -> Result<(ValueTables, EvalDiagnostics), EvalError> {
    let (h_len, s, a, d) = (
        mdp.horizon(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.feature_dim(),
    );
    if accumulators.len() != h_len {
        return Err(EvalError::Shape("one accumulator per step"));
    }
    if accumulators.iter().any(|acc| acc.dim() != d) {
        return Err(EvalError::Shape("accumulator dimension"));
    }
    if policy.horizon() != h_len || policy.num_states() != s || policy.num_actions() != a {
        return Err(EvalError::Shape("policy dimensions"));
    }
    if reward.horizon() != h_len {
        return Err(EvalError::Shape("reward horizon"));
    }

    let mut q = StateActionTable::zeros(h_len, s, a);
    let mut v = StateTable::zeros(h_len + 1, s);
    let mut q_raw = StateActionTable::zeros(h_len, s, a);
    let mut bonus_table = StateActionTable::zeros(h_len, s, a);
    let mut weights = vec![Vec::new(); h_len];
    let mut features = vec![0.0; h_len * s * a * d];

    let mut phi = vec![0.0; d];
    for step in (0..h_len).rev() {
        let acc = &accumulators[step];
        let w = acc.solve_weights();
        let ceiling = (h_len - step) as f64;
        for state in 0..s {
            for action in 0..a {
                {
                    let next_values = v.row(step + 1);
                    mdp.feature_expectation_into(state, action, next_values, &mut phi);
                }
                let gamma = acc.bonus(&phi, bonus.beta())?;
                let raw = reward.get(step, state, action) + dot(&phi, &w) + gamma;
                q_raw.set(step, state, action, raw);
                bonus_table.set(step, state, action, gamma);
                q.set(step, state, action, raw.min(ceiling).max(0.0));
                let o = ((step * s + state) * a + action) * d;
                features[o..o + d].copy_from_slice(&phi);
            }
            let value = dot(q.row(step, state), policy.probs(step, state));
            v.set(step, state, value);
        }
        weights[step] = w;
    }

    Ok((
        ValueTables { q, v },
        EvalDiagnostics {
            horizon: h_len,
            num_states: s,
            num_actions: a,
            dim: d,
            q_raw,
            bonus: bonus_table,
            weights,
            features,
        },
    ))
}
