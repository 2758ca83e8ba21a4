//! Policies and the KL-regularized improvement step.
//!
//! Policies are stored as per-(step, state) logits; the action distribution
//! is the softmax of a row. The improvement step adds `alpha * Q_h(x, .)` to
//! the logits, so after `k` episodes the logits are the cumulative sum
//! `alpha * sum_{tau < k} Q^tau` and the paper's multiplicative update
//! `pi' proportional to pi * exp(alpha Q)` is recovered exactly while never
//! multiplying densities (which would underflow over long runs).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::num;
use crate::tables::StateActionTable;

/// Row sums of derived distributions stay within this of 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Logit gap used to encode deterministic policies; `exp(-GAP)` underflows
/// to exactly zero in `f64`, so the softmax rows are exact one-hots.
const DETERMINISTIC_LOGIT_GAP: f64 = 1e6;

/// Errors from policy construction and KL computations.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// Inconsistent shapes.
    Shape(&'static str),
    /// A non-finite logit or step size.
    NonFinite(&'static str),
    /// `KL(p || q)` with `p(a) > 0` on some `a` where `q(a) = 0`.
    InfiniteKl {
        /// The action carrying mass outside the support of `q`.
        action: usize,
    },
    /// A negative step size.
    NegativeStepSize(f64),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::Shape(what) => write!(f, "shape mismatch: {what}"),
            PolicyError::NonFinite(what) => write!(f, "non-finite value: {what}"),
            PolicyError::InfiniteKl { action } => {
                write!(
                    f,
                    "infinite KL divergence: p({action}) > 0 but q({action}) = 0"
                )
            }
            PolicyError::NegativeStepSize(alpha) => write!(f, "negative step size {alpha}"),
        }
    }
}

impl core::error::Error for PolicyError {}

/// Mirror-descent step size `alpha`.
///
/// Zero is accepted (it freezes the policy, which several diagnostics rely
/// on); negative or non-finite values are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize(f64);

impl StepSize {
    /// Wraps a finite, nonnegative step size.
    pub fn new(alpha: f64) -> Result<Self, PolicyError> {
        if !alpha.is_finite() {
            return Err(PolicyError::NonFinite("step size"));
        }
        if alpha < 0.0 {
            return Err(PolicyError::NegativeStepSize(alpha));
        }
        Ok(Self(alpha))
    }

    /// The horizon-aware default `sqrt(2 log|A| / (H T))` with `T = H K`.
    pub fn auto(num_actions: usize, horizon: usize, episodes: usize) -> Self {
        let t = (horizon * episodes) as f64;
        Self(num::sqrt(
            2.0 * num::ln(num_actions as f64) / (horizon as f64 * t),
        ))
    }

    /// The raw value.
    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Per-(step, state) softmax policy stored as logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl Policy {
    /// Builds a policy from a flat logit buffer indexed
    /// `(h * S + x) * A + a`.
    pub fn from_logits(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        logits: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        if num_actions == 0 || logits.len() != horizon * num_states * num_actions {
            return Err(PolicyError::Shape("logit buffer length"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("logit"));
        }
        let mut probs = vec![0.0; logits.len()];
        for row in 0..horizon * num_states {
            let o = row * num_actions;
            softmax_into(&logits[o..o + num_actions], &mut probs[o..o + num_actions]);
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            logits,
            probs,
        })
    }

    /// Uniform policy (all logits zero).
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self::from_logits(
            horizon,
            num_states,
            num_actions,
            vec![0.0; horizon * num_states * num_actions],
        )
        .expect("uniform logits are valid")
    }

    /// Deterministic policy choosing `actions[h * S + x]` at `(h, x)`.
    ///
    /// Encoded with a logit gap large enough that the softmax rows are exact
    /// one-hot vectors in double precision.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self, PolicyError> {
        if actions.len() != horizon * num_states {
            return Err(PolicyError::Shape("action table length"));
        }
        if actions.iter().any(|&a| a >= num_actions) {
            return Err(PolicyError::Shape("action index out of range"));
        }
        let mut logits = vec![-DETERMINISTIC_LOGIT_GAP; horizon * num_states * num_actions];
        for (row, &a) in actions.iter().enumerate() {
            logits[row * num_actions + a] = 0.0;
        }
        Self::from_logits(horizon, num_states, num_actions, logits)
    }

    /// Number of steps.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn offset(&self, step: usize, state: usize) -> usize {
        (step * self.num_states + state) * self.num_actions
    }

    /// Logit row at `(h, x)`.
    #[inline]
    pub fn logits(&self, step: usize, state: usize) -> &[f64] {
        let o = self.offset(step, state);
        &self.logits[o..o + self.num_actions]
    }

    /// Action distribution `pi_h(.|x)`.
    #[inline]
    pub fn probs(&self, step: usize, state: usize) -> &[f64] {
        let o = self.offset(step, state);
        &self.probs[o..o + self.num_actions]
    }

    /// Flat logit buffer.
    pub fn logits_flat(&self) -> &[f64] {
        &self.logits
    }

    /// Samples an action at `(h, x)`.
    pub fn sample_action<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        crate::mdp::sample_index(self.probs(step, state), rng)
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        let e = num::exp(l - max);
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `KL(p || q) = sum_a p(a) log(p(a) / q(a))`, with `0 log 0 = 0`.
///
/// Rejects pairs where `p` carries mass outside the support of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, PolicyError> {
    if p.len() != q.len() {
        return Err(PolicyError::Shape("distribution lengths"));
    }
    let mut acc = 0.0;
    for (a, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(PolicyError::InfiniteKl { action: a });
            }
            acc += pi * num::ln(pi / qi);
        }
    }
    Ok(acc)
}

/// The per-(step, state) improvement objective
/// `<q_row, p> - alpha^{-1} KL(p || p_prev)`.
///
/// The full KL-regularized objective separates over `(h, x)` under fixed
/// positive occupancy weights, so the closed-form update can be certified
/// against this row-local value.
pub fn regularized_gain(
    q_row: &[f64],
    p: &[f64],
    p_prev: &[f64],
    alpha: StepSize,
) -> Result<f64, PolicyError> {
    if q_row.len() != p.len() || p.len() != p_prev.len() {
        return Err(PolicyError::Shape("row lengths"));
    }
    let linear = crate::linalg::dot(q_row, p);
    let kl = kl_divergence(p, p_prev)?;
    if alpha.value() == 0.0 {
        // Infinite penalty weight: finite only where the KL term vanishes.
        return Ok(if kl == 0.0 { linear } else { f64::NEG_INFINITY });
    }
    Ok(linear - kl / alpha.value())
}

/// One exponential-weights improvement: logits shift by `alpha * Q_h(x, .)`
/// (then by a per-row constant for stability), so the new distribution is
/// exactly proportional to `pi_h(.|x) * exp(alpha Q_h(x, .))`.
pub fn improve_policy(prev: &Policy, q: &StateActionTable, alpha: StepSize) -> Policy {
    assert_eq!(q.horizon(), prev.horizon(), "q horizon");
    assert_eq!(q.num_states(), prev.num_states(), "q states");
    assert_eq!(q.num_actions(), prev.num_actions(), "q actions");

    let mut logits = Vec::with_capacity(prev.logits_flat().len());
    let mut row = Vec::with_capacity(prev.num_actions());
    for step in 0..prev.horizon() {
        for state in 0..prev.num_states() {
            row.clear();
            let mut max = f64::NEG_INFINITY;
            for (l, qv) in prev.logits(step, state).iter().zip(q.row(step, state)) {
                let shifted = l + alpha.value() * qv;
                max = max.max(shifted);
                row.push(shifted);
            }
            logits.extend(row.iter().map(|l| l - max));
        }
    }
    Policy::from_logits(
        prev.horizon(),
        prev.num_states(),
        prev.num_actions(),
        logits,
    )
    .expect("shifted logits are finite")
}

/// Euclidean projection onto the probability simplex.
///
/// Used by the optimality checks to turn perturbed rows back into
/// distributions.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    let mut support = 0;
    for (i, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if value - candidate > 0.0 {
            threshold = candidate;
            support = i + 1;
        }
    }
    debug_assert!(support > 0);
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}
