//! Benchmark instances: random tabular MDPs, combination locks, and random
//! genuinely-linear mixtures with `d < S^2 A`.
//!
//! Generation is a pure function of the spec and its seed.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::mdp::{
    tabular_to_linear, FeatureMap, LinearMdp, MdpError, RewardFunction, StochasticKernel,
};
use crate::seeding;
use crate::tables::StateActionTable;

/// Which benchmark family to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceKind {
    /// Per-(h, x, a) Dirichlet transition rows embedded tabularly.
    TabularRandom {
        /// Symmetric Dirichlet concentration.
        concentration: f64,
    },
    /// Sparse-reward chain where exactly one action sequence pays off.
    CombinationLock {
        /// Reward on the unique successful step.
        reward_value: f64,
    },
    /// Mixture of `dim` base kernels with simplex weights per step.
    LinearMixture {
        /// Number of base kernels (the feature dimension).
        dim: usize,
        /// Symmetric Dirichlet concentration for the base kernel rows.
        concentration: f64,
    },
}

/// A complete instance request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    /// Benchmark family and its knobs.
    pub kind: InstanceKind,
    /// Episode length `H`.
    pub horizon: usize,
    /// Number of states (must equal `H + 2` for combination locks).
    pub num_states: usize,
    /// Number of actions.
    pub num_actions: usize,
    /// Generation seed.
    pub seed: u64,
}

/// Errors from instance generation.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceError {
    /// A size or knob outside its allowed range.
    BadParameter(&'static str),
    /// Underlying MDP construction failed.
    Mdp(MdpError),
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceError::BadParameter(what) => write!(f, "bad parameter: {what}"),
            InstanceError::Mdp(e) => write!(f, "mdp construction: {e}"),
        }
    }
}

impl core::error::Error for InstanceError {}

impl From<MdpError> for InstanceError {
    fn from(e: MdpError) -> Self {
        InstanceError::Mdp(e)
    }
}

/// A generated instance plus lock-specific extras when applicable.
#[derive(Debug, Clone)]
pub struct BuiltInstance {
    /// The MDP.
    pub mdp: LinearMdp,
    /// The lock's sparse reward (combination locks only).
    pub lock_reward: Option<RewardFunction>,
    /// The lock's correct action sequence (combination locks only).
    pub combination: Option<Vec<usize>>,
}

/// Generates the instance described by a spec.
pub fn build_instance(spec: &InstanceSpec) -> Result<BuiltInstance, InstanceError> {
    match spec.kind {
        InstanceKind::TabularRandom { concentration } => Ok(BuiltInstance {
            mdp: random_tabular(
                spec.horizon,
                spec.num_states,
                spec.num_actions,
                concentration,
                spec.seed,
            )?,
            lock_reward: None,
            combination: None,
        }),
        InstanceKind::CombinationLock { reward_value } => {
            if spec.num_states != spec.horizon + 2 {
                return Err(InstanceError::BadParameter(
                    "combination locks have exactly H + 2 states",
                ));
            }
            let lock = combination_lock(spec.horizon, spec.num_actions, reward_value, spec.seed)?;
            Ok(BuiltInstance {
                mdp: lock.mdp,
                lock_reward: Some(lock.reward),
                combination: Some(lock.combination),
            })
        }
        InstanceKind::LinearMixture { dim, concentration } => Ok(BuiltInstance {
            mdp: random_linear(
                spec.horizon,
                spec.num_states,
                spec.num_actions,
                dim,
                concentration,
                spec.seed,
            )?,
            lock_reward: None,
            combination: None,
        }),
    }
}

fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, len: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|g| g / sum).collect();
        }
        // All-zero draws can happen at tiny concentrations; resample.
    }
}

fn random_kernel<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    concentration: f64,
) -> StochasticKernel {
    let mut rows = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        rows.extend(dirichlet_row(rng, num_states, concentration));
    }
    StochasticKernel::from_flat(num_states, num_actions, rows).expect("sized buffer")
}

/// Random tabular MDP: every transition row drawn from a symmetric
/// Dirichlet, embedded via the canonical-basis features (`d = S^2 A`).
pub fn random_tabular(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    concentration: f64,
    seed: u64,
) -> Result<LinearMdp, InstanceError> {
    if horizon == 0 || num_states == 0 || num_actions == 0 {
        return Err(InstanceError::BadParameter("sizes must be positive"));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(InstanceError::BadParameter(
            "concentration must be positive",
        ));
    }
    let mut rng = seeding::rng_from(seeding::derive_seed(seed, &[1]));
    let kernels: Vec<StochasticKernel> = (0..horizon)
        .map(|_| random_kernel(&mut rng, num_states, num_actions, concentration))
        .collect();
    Ok(tabular_to_linear(&kernels, 0)?)
}

/// A generated combination lock.
#[derive(Debug, Clone)]
pub struct CombinationLock {
    /// The deterministic chain MDP (`S = H + 2` states, tabular features).
    pub mdp: LinearMdp,
    /// Reward paying `reward_value` only on the final correct step.
    pub reward: RewardFunction,
    /// The seed-determined correct action sequence.
    pub combination: Vec<usize>,
}

/// Hard-exploration chain: from chain position `h`, the single correct
/// action advances, every other action falls into an absorbing trap, and
/// only the last correct step pays.
///
/// States `0..=H` are chain positions (state `H` is the goal), state
/// `H + 1` is the trap.
pub fn combination_lock(
    horizon: usize,
    num_actions: usize,
    reward_value: f64,
    seed: u64,
) -> Result<CombinationLock, InstanceError> {
    if horizon < 2 {
        return Err(InstanceError::BadParameter("lock horizon must be >= 2"));
    }
    if num_actions < 2 {
        return Err(InstanceError::BadParameter("lock needs >= 2 actions"));
    }
    if !(reward_value.is_finite() && reward_value > 0.0) {
        return Err(InstanceError::BadParameter("lock reward must be positive"));
    }

    let num_states = horizon + 2;
    let trap = horizon + 1;
    let mut rng = seeding::rng_from(seeding::derive_seed(seed, &[2]));
    let combination: Vec<usize> = (0..horizon)
        .map(|_| rng.gen_range(0..num_actions))
        .collect();

    let mut kernels = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let mut rows = vec![0.0; num_states * num_actions * num_states];
        for state in 0..num_states {
            for action in 0..num_actions {
                let next = if state == step && action == combination[step] {
                    state + 1
                } else {
                    trap
                };
                rows[(state * num_actions + action) * num_states + next] = 1.0;
            }
        }
        kernels.push(StochasticKernel::from_flat(num_states, num_actions, rows)?);
    }
    let mdp = tabular_to_linear(&kernels, 0)?;

    let mut table = StateActionTable::zeros(horizon, num_states, num_actions);
    table.set(
        horizon - 1,
        horizon - 1,
        combination[horizon - 1],
        reward_value,
    );
    let reward = RewardFunction::from_table(table)?;

    Ok(CombinationLock {
        mdp,
        reward,
        combination,
    })
}

/// Random genuinely-linear MDP: `d` base kernels as feature coordinates and
/// per-step simplex weights as parameters.
///
/// The norm bounds of the linear-MDP assumption hold by construction:
/// `||theta_h||_2 <= ||theta_h||_1 = 1 <= sqrt(d)` and each feature
/// coordinate of `sum_x' psi V` is a `[0, H]`-valued kernel average.
pub fn random_linear(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    dim: usize,
    concentration: f64,
    seed: u64,
) -> Result<LinearMdp, InstanceError> {
    if horizon == 0 || num_states == 0 || num_actions == 0 || dim == 0 {
        return Err(InstanceError::BadParameter("sizes must be positive"));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(InstanceError::BadParameter(
            "concentration must be positive",
        ));
    }
    let mut rng = seeding::rng_from(seeding::derive_seed(seed, &[3]));
    let kernels: Vec<StochasticKernel> = (0..dim)
        .map(|_| random_kernel(&mut rng, num_states, num_actions, concentration))
        .collect();
    let theta: Vec<Vec<f64>> = (0..horizon)
        .map(|_| dirichlet_row(&mut rng, dim, 1.0))
        .collect();
    let features = FeatureMap::mixture(kernels)?;
    Ok(LinearMdp::new(features, theta, 0)?)
}
