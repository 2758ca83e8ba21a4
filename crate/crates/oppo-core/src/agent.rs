//! The episode loop: optimistic policy optimization plus baseline modes.
//!
//! All modes share the evaluation machinery; they differ in how the policy
//! is formed from the previous episode's Q estimate and in whether the
//! bonus is applied:
//!
//! - `Oppo`: exponential-weights improvement with the elliptical bonus;
//! - `GreedyLsvi`: deterministic argmax improvement, bonus kept;
//! - `NoBonus`: exponential-weights improvement, bonus forced to zero;
//! - `UniformPolicy`: never improves and never evaluates (pure control).
//!
//! The agent never sees an episode's reward function before it has committed
//! its policy for that episode: `begin_episode` takes no reward argument and
//! `end_episode` is the only entry point that accepts one.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::eval::{
    evaluate_policy, BonusParams, EvalDiagnostics, EvalError, HistoryBuffer, RidgeAccumulator,
    ValueTables,
};
use crate::mdp::{LinearMdp, RewardFunction, Trajectory};
use crate::policy::{improve_policy, Policy, PolicyError, StepSize};
use crate::tables::StateActionTable;

/// Which learner variant the agent runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    /// Optimistic exponential-weights policy optimization.
    Oppo,
    /// Greedy improvement over the estimated Q (bonus kept).
    GreedyLsvi,
    /// Exponential-weights improvement with the bonus ablated.
    NoBonus,
    /// Fixed uniform policy; evaluation skipped entirely.
    UniformPolicy,
}

impl AgentMode {
    /// Stable label used in logs and file formats.
    pub fn label(&self) -> &'static str {
        match self {
            AgentMode::Oppo => "oppo",
            AgentMode::GreedyLsvi => "greedy-lsvi",
            AgentMode::NoBonus => "no-bonus",
            AgentMode::UniformPolicy => "uniform",
        }
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Mirror-descent step size.
    pub alpha: StepSize,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Multiplier on the theorem bonus schedule.
    pub c_beta: f64,
    /// Confidence level in `(0, 1]`.
    pub zeta: f64,
    /// Planned number of episodes `K` (enters the bonus and step schedules).
    pub episodes: usize,
}

/// Errors from the agent protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentError {
    /// Inconsistent shapes.
    Shape(&'static str),
    /// `end_episode` called with a trajectory from the wrong episode.
    EpisodeMismatch {
        /// The agent's current episode index.
        expected: usize,
        /// The trajectory's episode index.
        got: usize,
    },
    /// `end_episode` called before `begin_episode`.
    EpisodeNotBegun,
    /// Evaluation failure.
    Eval(EvalError),
    /// Policy construction failure.
    Policy(PolicyError),
}

impl fmt::Display for AgentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentError::Shape(what) => write!(f, "shape mismatch: {what}"),
            AgentError::EpisodeMismatch { expected, got } => {
                write!(f, "trajectory is for episode {got}, agent is at {expected}")
            }
            AgentError::EpisodeNotBegun => write!(f, "end_episode called before begin_episode"),
            AgentError::Eval(e) => write!(f, "evaluation: {e}"),
            AgentError::Policy(e) => write!(f, "policy: {e}"),
        }
    }
}

impl core::error::Error for AgentError {}

impl From<EvalError> for AgentError {
    fn from(e: EvalError) -> Self {
        AgentError::Eval(e)
    }
}

impl From<PolicyError> for AgentError {
    fn from(e: PolicyError) -> Self {
        AgentError::Policy(e)
    }
}

/// What one completed episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// The estimated tables `Q^k`, `V^k` stored for the next improvement.
    pub tables: ValueTables,
    /// Evaluation by-products; `None` in `UniformPolicy` mode, which skips
    /// evaluation.
    pub diagnostics: Option<EvalDiagnostics>,
}

/// Learner state across episodes.
#[derive(Debug, Clone)]
pub struct Agent {
    mode: AgentMode,
    hyper: HyperParams,
    beta: BonusParams,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    policy: Policy,
    prev_q: StateActionTable,
    accumulators: Vec<RidgeAccumulator>,
    buffers: Vec<HistoryBuffer>,
    episode: usize,
    in_episode: bool,
}

impl Agent {
    /// Initializes the learner: uniform policy, zero Q, fresh ridge state.
    pub fn new(mode: AgentMode, mdp: &LinearMdp, hyper: HyperParams) -> Result<Self, AgentError> {
        let (h, s, a, d) = (
            mdp.horizon(),
            mdp.num_states(),
            mdp.num_actions(),
            mdp.feature_dim(),
        );
        let beta = BonusParams::from_constant(hyper.c_beta, d, h, hyper.episodes, hyper.zeta)?;
        let mut accumulators = Vec::with_capacity(h);
        let mut buffers = Vec::with_capacity(h);
        for _ in 0..h {
            accumulators.push(RidgeAccumulator::new(d, hyper.lambda)?);
            buffers.push(HistoryBuffer::new(d));
        }
        Ok(Self {
            mode,
            hyper,
            beta,
            horizon: h,
            num_states: s,
            num_actions: a,
            policy: Policy::uniform(h, s, a),
            prev_q: StateActionTable::zeros(h, s, a),
            accumulators,
            buffers,
            episode: 1,
            in_episode: false,
        })
    }

    /// The mode this agent runs.
    pub fn mode(&self) -> AgentMode {
        self.mode
    }

    /// The hyperparameters.
    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    /// The resolved bonus scale.
    pub fn beta(&self) -> f64 {
        self.beta.beta()
    }

    /// 1-based index of the episode the agent is in (or about to begin).
    pub fn episode(&self) -> usize {
        self.episode
    }

    /// The current policy.
    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// The Q estimate that will drive the next improvement.
    pub fn prev_q(&self) -> &StateActionTable {
        &self.prev_q
    }

    /// Ridge state for one step.
    pub fn accumulator(&self, step: usize) -> &RidgeAccumulator {
        &self.accumulators[step]
    }

    /// Stored history for one step.
    pub fn buffer(&self, step: usize) -> &HistoryBuffer {
        &self.buffers[step]
    }

    /// Commits the policy for the current episode and returns it.
    ///
    /// Idempotent within an episode: calling it again before `end_episode`
    /// returns the committed policy unchanged.
    pub fn begin_episode(&mut self) -> &Policy {
        if !self.in_episode {
            match self.mode {
                AgentMode::Oppo | AgentMode::NoBonus => {
                    self.policy = improve_policy(&self.policy, &self.prev_q, self.hyper.alpha);
                }
                AgentMode::GreedyLsvi => {
                    self.policy = greedy_policy(&self.prev_q);
                }
                AgentMode::UniformPolicy => {}
            }
            self.in_episode = true;
        }
        &self.policy
    }

    /// Evaluates the committed policy against the revealed reward, absorbs
    /// the episode into the ridge state, and advances the episode counter.
    pub fn end_episode(
        &mut self,
        mdp: &LinearMdp,
        trajectory: &Trajectory,
        reward: &RewardFunction,
    ) -> Result<EpisodeOutcome, AgentError> {
        if !self.in_episode {
            return Err(AgentError::EpisodeNotBegun);
        }
        if trajectory.episode != self.episode {
            return Err(AgentError::EpisodeMismatch {
                expected: self.episode,
                got: trajectory.episode,
            });
        }
        if trajectory.horizon() != self.horizon {
            return Err(AgentError::Shape("trajectory horizon"));
        }

        let outcome = if self.mode == AgentMode::UniformPolicy {
            EpisodeOutcome {
                tables: ValueTables::zeros(self.horizon, self.num_states, self.num_actions),
                diagnostics: None,
            }
        } else {
            let beta = if self.mode == AgentMode::NoBonus {
                BonusParams::new(0.0)?
            } else {
                self.beta
            };
            let (tables, diagnostics) =
                evaluate_policy(&self.accumulators, &self.policy, reward, mdp, beta)?;
            for step in 0..self.horizon {
                let phi = diagnostics.phi(step, trajectory.states[step], trajectory.actions[step]);
                let target = tables.v().get(step + 1, trajectory.states[step + 1]);
                self.accumulators[step].rank_one_update(phi, target);
                self.buffers[step].push(phi, target);
            }
            self.prev_q = tables.q().clone();
            EpisodeOutcome {
                tables,
                diagnostics: Some(diagnostics),
            }
        };

        self.episode += 1;
        self.in_episode = false;
        Ok(outcome)
    }

    /// Copies the full learner state into a plain-data snapshot.
    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            mode: self.mode,
            episode: self.episode,
            in_episode: self.in_episode,
            hyper: self.hyper,
            beta: self.beta.beta(),
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            dim: self.accumulators.first().map_or(0, |a| a.dim()),
            policy_logits: self.policy.logits_flat().to_vec(),
            prev_q: self.prev_q.as_slice().to_vec(),
            steps: (0..self.horizon)
                .map(|h| {
                    let acc = &self.accumulators[h];
                    let buf = &self.buffers[h];
                    StepSnapshot {
                        updates: acc.updates(),
                        gram: acc.gram().as_slice().to_vec(),
                        inverse: acc.inverse().as_slice().to_vec(),
                        target: acc.target().to_vec(),
                        history_features: buf.features_flat().to_vec(),
                        history_targets: buf.targets().to_vec(),
                    }
                })
                .collect(),
        }
    }

    /// Rebuilds an agent from a snapshot, bit-exactly.
    pub fn from_snapshot(snap: &AgentSnapshot) -> Result<Self, AgentError> {
        let (h, s, a, d) = (snap.horizon, snap.num_states, snap.num_actions, snap.dim);
        let policy = Policy::from_logits(h, s, a, snap.policy_logits.clone())?;
        let prev_q = StateActionTable::from_flat(h, s, a, snap.prev_q.clone())
            .ok_or(AgentError::Shape("prev_q length"))?;
        if snap.steps.len() != h {
            return Err(AgentError::Shape("one step snapshot per step"));
        }
        let mut accumulators = Vec::with_capacity(h);
        let mut buffers = Vec::with_capacity(h);
        for step in &snap.steps {
            let gram = crate::linalg::DenseMatrix::from_row_major(d, step.gram.clone())
                .ok_or(AgentError::Shape("gram length"))?;
            let inverse = crate::linalg::DenseMatrix::from_row_major(d, step.inverse.clone())
                .ok_or(AgentError::Shape("inverse length"))?;
            accumulators.push(RidgeAccumulator::from_parts(
                snap.hyper.lambda,
                step.updates,
                gram,
                inverse,
                step.target.clone(),
            )?);
            buffers.push(HistoryBuffer::from_parts(
                d,
                step.history_features.clone(),
                step.history_targets.clone(),
            )?);
        }
        Ok(Self {
            mode: snap.mode,
            hyper: snap.hyper,
            beta: BonusParams::new(snap.beta)?,
            horizon: h,
            num_states: s,
            num_actions: a,
            policy,
            prev_q,
            accumulators,
            buffers,
            episode: snap.episode,
            in_episode: snap.in_episode,
        })
    }
}

/// Plain-data image of an [`Agent`] for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    /// Learner mode.
    pub mode: AgentMode,
    /// 1-based episode counter.
    pub episode: usize,
    /// Whether a policy is currently committed.
    pub in_episode: bool,
    /// Hyperparameters.
    pub hyper: HyperParams,
    /// Resolved bonus scale.
    pub beta: f64,
    /// Episode length.
    pub horizon: usize,
    /// Number of states.
    pub num_states: usize,
    /// Number of actions.
    pub num_actions: usize,
    /// Feature dimension.
    pub dim: usize,
    /// Flat policy logits.
    pub policy_logits: Vec<f64>,
    /// Flat previous-Q table.
    pub prev_q: Vec<f64>,
    /// Per-step ridge and history state.
    pub steps: Vec<StepSnapshot>,
}

/// Per-step part of an [`AgentSnapshot`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    /// Rank-one updates absorbed.
    pub updates: usize,
    /// Row-major Gram matrix.
    pub gram: Vec<f64>,
    /// Row-major maintained inverse.
    pub inverse: Vec<f64>,
    /// Target accumulator.
    pub target: Vec<f64>,
    /// Flat stored feature vectors.
    pub history_features: Vec<f64>,
    /// Stored regression targets.
    pub history_targets: Vec<f64>,
}

/// Deterministic argmax policy of a Q table; ties resolve to the lowest
/// action index.
pub fn greedy_policy(q: &StateActionTable) -> Policy {
    let (h, s, a) = (q.horizon(), q.num_states(), q.num_actions());
    let mut actions = vec![0usize; h * s];
    for step in 0..h {
        for state in 0..s {
            let row = q.row(step, state);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            actions[step * s + state] = best;
        }
    }
    Policy::deterministic(h, s, a, &actions).expect("argmax indices are in range")
}
