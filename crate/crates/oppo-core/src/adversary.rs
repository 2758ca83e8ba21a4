//! Adversarial reward schedules.
//!
//! The environment commits a reward function at the start of each episode;
//! it may depend on everything observed in earlier episodes but not on the
//! current one. That measurability constraint is structural here: the
//! schedule only ever sees a [`History`] of completed episodes.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::mdp::{MdpError, RewardFunction, Trajectory};
use crate::tables::StateActionTable;

/// Which reward schedule the environment plays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryKind {
    /// The same base reward every episode.
    Fixed,
    /// Cycles through the base rewards, switching every `period` episodes.
    PeriodicSwitch {
        /// Episodes between switches (at least 1).
        period: usize,
    },
    /// Pushes reward away from wherever the learner was last episode:
    /// `r^k = clip(base - strength * visit_frequency_{k-1}, 0, 1)`.
    AdaptiveAvoid {
        /// Penalty weight in `[0, 1]`.
        strength: f64,
    },
}

/// Errors from reward schedule evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryError {
    /// No base rewards supplied.
    NoBaseRewards,
    /// A base reward has entries outside `[0, 1]`.
    InvalidBaseReward {
        /// Index of the offending base.
        base: usize,
    },
    /// Bad schedule parameter.
    BadParameter(&'static str),
    /// Reward table construction failure.
    Mdp(MdpError),
}

impl fmt::Display for AdversaryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryError::NoBaseRewards => write!(f, "no base rewards"),
            AdversaryError::InvalidBaseReward { base } => {
                write!(f, "base reward {base} has entries outside [0, 1]")
            }
            AdversaryError::BadParameter(what) => write!(f, "bad parameter: {what}"),
            AdversaryError::Mdp(e) => write!(f, "reward table: {e}"),
        }
    }
}

impl core::error::Error for AdversaryError {}

impl From<MdpError> for AdversaryError {
    fn from(e: MdpError) -> Self {
        AdversaryError::Mdp(e)
    }
}

/// Completed episodes 1..k-1, in order.
#[derive(Debug, Clone, Default)]
pub struct History {
    entries: Vec<(Trajectory, RewardFunction)>,
}

impl History {
    /// Empty history (episode 1 is about to start).
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a completed episode.
    pub fn push(&mut self, trajectory: Trajectory, reward: RewardFunction) {
        debug_assert_eq!(
            trajectory.episode,
            self.entries.len() + 1,
            "contiguous episodes"
        );
        self.entries.push((trajectory, reward));
    }

    /// Number of completed episodes.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True before the first episode completes.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The most recent completed episode.
    pub fn last(&self) -> Option<&(Trajectory, RewardFunction)> {
        self.entries.last()
    }

    /// All completed episodes in order.
    pub fn iter(&self) -> impl Iterator<Item = &(Trajectory, RewardFunction)> {
        self.entries.iter()
    }
}

/// An entry of a reward table outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardViolation {
    /// Step index.
    pub step: usize,
    /// State index.
    pub state: usize,
    /// Action index.
    pub action: usize,
    /// The offending value.
    pub value: f64,
}

/// Lists every reward entry outside `[0, 1]` (exact comparison, no slack).
pub fn validate_reward(reward: &RewardFunction) -> Vec<RewardViolation> {
    let table = reward.table();
    let mut violations = Vec::new();
    for step in 0..table.horizon() {
        for state in 0..table.num_states() {
            for (action, &value) in table.row(step, state).iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    violations.push(RewardViolation {
                        step,
                        state,
                        action,
                        value,
                    });
                }
            }
        }
    }
    violations
}

/// Commits the reward function for episode `k = history.len() + 1`.
///
/// The generator argument keeps the interface uniform across schedule kinds;
/// the built-in kinds are deterministic and do not consume randomness.
pub fn next_reward<R: Rng + ?Sized>(
    kind: &AdversaryKind,
    history: &History,
    base_rewards: &[RewardFunction],
    _rng: &mut R,
) -> Result<RewardFunction, AdversaryError> {
    if base_rewards.is_empty() {
        return Err(AdversaryError::NoBaseRewards);
    }
    for (i, base) in base_rewards.iter().enumerate() {
        if !validate_reward(base).is_empty() {
            return Err(AdversaryError::InvalidBaseReward { base: i });
        }
    }
    let episode = history.len() + 1;
    match kind {
        AdversaryKind::Fixed => Ok(base_rewards[0].clone()),
        AdversaryKind::PeriodicSwitch { period } => {
            if *period == 0 {
                return Err(AdversaryError::BadParameter("period must be >= 1"));
            }
            let index = ((episode - 1) / period) % base_rewards.len();
            Ok(base_rewards[index].clone())
        }
        AdversaryKind::AdaptiveAvoid { strength } => {
            if !(0.0..=1.0).contains(strength) {
                return Err(AdversaryError::BadParameter("strength must lie in [0, 1]"));
            }
            let base = &base_rewards[0];
            let table = base.table();
            let (h, s, a) = (table.horizon(), table.num_states(), table.num_actions());
            let mut frequency = StateActionTable::zeros(1, s, a);
            if let Some((trajectory, _)) = history.last() {
                let weight = 1.0 / trajectory.horizon() as f64;
                for step in 0..trajectory.horizon() {
                    let (x, act) = (trajectory.states[step], trajectory.actions[step]);
                    frequency.set(0, x, act, frequency.get(0, x, act) + weight);
                }
            }
            let mut out = StateActionTable::zeros(h, s, a);
            for step in 0..h {
                for state in 0..s {
                    for action in 0..a {
                        let penalized = base.get(step, state, action)
                            - strength * frequency.get(0, state, action);
                        out.set(step, state, action, penalized.clamp(0.0, 1.0));
                    }
                }
            }
            Ok(RewardFunction::from_table(out)?)
        }
    }
}
