//! Experiment configuration: JSON schema, validation, and resolution into
//! core objects.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oppo_core::adversary::AdversaryKind;
use oppo_core::agent::{AgentMode, HyperParams};
use oppo_core::instances::{build_instance, BuiltInstance, InstanceKind, InstanceSpec};
use oppo_core::mdp::RewardFunction;
use oppo_core::policy::StepSize;
use oppo_core::seeding;
use oppo_core::tables::StateActionTable;

/// Top-level experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Instance to generate.
    pub instance: InstanceConfig,
    /// Reward schedule.
    pub adversary: AdversaryConfig,
    /// Agent modes to run (`oppo`, `greedy-lsvi`, `no-bonus`, `uniform`).
    pub modes: Vec<String>,
    /// Learner hyperparameters.
    pub hyper: HyperConfig,
    /// Master seeds; each (mode, seed) pair is one run.
    pub seeds: Vec<u64>,
    /// Where outputs go (CLI `--out` overrides).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Dump per-episode evaluation diagnostics (weights, raw Q, bonuses).
    #[serde(default)]
    pub dump_eval: bool,
}

/// Instance sub-document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// `tabular-random`, `combination-lock`, or `linear-mixture`.
    pub kind: String,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    /// Dirichlet concentration (tabular-random, linear-mixture).
    #[serde(default)]
    pub concentration: Option<f64>,
    /// Payoff of the single rewarding step (combination-lock).
    #[serde(default)]
    pub reward_value: Option<f64>,
    /// Feature dimension (linear-mixture).
    #[serde(default)]
    pub mixture_dim: Option<usize>,
}

/// Reward schedule sub-document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryConfig {
    /// `fixed`, `periodic-switch`, or `adaptive-avoid`.
    pub kind: String,
    /// Episodes between switches (periodic-switch).
    #[serde(default)]
    pub period: Option<usize>,
    /// Penalty weight in `[0, 1]` (adaptive-avoid).
    #[serde(default)]
    pub strength: Option<f64>,
    /// Base reward functions the schedule draws from.
    pub bases: Vec<RewardSpec>,
}

/// One base reward: a named generator or explicit tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardSpec {
    /// Every entry equal to `value`.
    Constant { value: f64 },
    /// Entries drawn uniformly from `[0, 1]` with the given seed.
    RandomUniform { seed: u64 },
    /// The generated combination lock's own sparse reward.
    Lock,
    /// Explicit `values[h][x][a]`.
    Tables { values: Vec<Vec<Vec<f64>>> },
}

/// Hyperparameter sub-document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperConfig {
    /// Number of episodes `K`.
    pub episodes: usize,
    /// Step size: a number or `"auto"` for `sqrt(2 log|A| / (H T))`.
    pub alpha: AlphaConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_c_beta() -> f64 {
    1.0
}

fn default_zeta() -> f64 {
    0.05
}

/// Step size field: `"auto"` or an explicit number.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AlphaConfig {
    /// The theorem schedule.
    Auto(String),
    /// Explicit value.
    Value(f64),
}

impl AlphaConfig {
    /// The `"auto"` marker.
    pub fn auto() -> Self {
        AlphaConfig::Auto("auto".to_string())
    }
}

/// A validated configuration resolved into core objects.
pub struct ResolvedExperiment {
    /// Canonical hash of the configuration.
    pub config_hash: String,
    /// The generated instance.
    pub instance: BuiltInstance,
    /// The reward schedule.
    pub adversary: AdversaryKind,
    /// Base rewards for the schedule.
    pub base_rewards: Vec<RewardFunction>,
    /// Modes to run.
    pub modes: Vec<AgentMode>,
    /// Resolved hyperparameters.
    pub hyper: HyperParams,
    /// Master seeds.
    pub seeds: Vec<u64>,
}

/// Canonical config hash: SHA-256 of the serialized document.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_mode(label: &str) -> Result<AgentMode> {
    Ok(match label {
        "oppo" => AgentMode::Oppo,
        "greedy-lsvi" => AgentMode::GreedyLsvi,
        "no-bonus" => AgentMode::NoBonus,
        "uniform" => AgentMode::UniformPolicy,
        other => bail!("unknown mode '{other}'"),
    })
}

fn instance_spec(config: &InstanceConfig) -> Result<InstanceSpec> {
    let kind = match config.kind.as_str() {
        "tabular-random" => InstanceKind::TabularRandom {
            concentration: config.concentration.unwrap_or(1.0),
        },
        "combination-lock" => InstanceKind::CombinationLock {
            reward_value: config.reward_value.unwrap_or(1.0),
        },
        "linear-mixture" => InstanceKind::LinearMixture {
            dim: config
                .mixture_dim
                .context("linear-mixture requires mixture_dim")?,
            concentration: config.concentration.unwrap_or(1.0),
        },
        other => bail!("unknown instance kind '{other}'"),
    };
    Ok(InstanceSpec {
        kind,
        horizon: config.horizon,
        num_states: config.num_states,
        num_actions: config.num_actions,
        seed: config.seed,
    })
}

fn resolve_reward(
    spec: &RewardSpec,
    instance: &BuiltInstance,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
) -> Result<RewardFunction> {
    Ok(match spec {
        RewardSpec::Constant { value } => {
            RewardFunction::constant(horizon, num_states, num_actions, *value)?
        }
        RewardSpec::RandomUniform { seed } => {
            let mut rng = seeding::rng_from(seeding::derive_seed(*seed, &[101]));
            let mut table = StateActionTable::zeros(horizon, num_states, num_actions);
            for step in 0..horizon {
                for state in 0..num_states {
                    for action in 0..num_actions {
                        table.set(
                            step,
                            state,
                            action,
                            rand::Rng::gen_range(&mut rng, 0.0..1.0),
                        );
                    }
                }
            }
            RewardFunction::from_table(table)?
        }
        RewardSpec::Lock => instance
            .lock_reward
            .clone()
            .context("'lock' reward requires a combination-lock instance")?,
        RewardSpec::Tables { values } => {
            if values.len() != horizon {
                bail!("reward tables: expected {horizon} steps");
            }
            let mut table = StateActionTable::zeros(horizon, num_states, num_actions);
            for (step, per_state) in values.iter().enumerate() {
                if per_state.len() != num_states {
                    bail!("reward tables: expected {num_states} states at step {step}");
                }
                for (state, row) in per_state.iter().enumerate() {
                    if row.len() != num_actions {
                        bail!("reward tables: expected {num_actions} actions");
                    }
                    for (action, &value) in row.iter().enumerate() {
                        table.set(step, state, action, value);
                    }
                }
            }
            RewardFunction::from_table(table)?
        }
    })
}

impl ExperimentConfig {
    /// Parses a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Validates the document and resolves it into core objects.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        if self.hyper.episodes == 0 {
            bail!("episodes must be >= 1");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.modes.is_empty() {
            bail!("at least one mode is required");
        }
        let modes = self
            .modes
            .iter()
            .map(|m| parse_mode(m))
            .collect::<Result<Vec<_>>>()?;

        let spec = instance_spec(&self.instance)?;
        let instance = build_instance(&spec).map_err(|e| anyhow::anyhow!("instance: {e}"))?;
        let (h, s, a) = (
            instance.mdp.horizon(),
            instance.mdp.num_states(),
            instance.mdp.num_actions(),
        );

        let adversary = match self.adversary.kind.as_str() {
            "fixed" => AdversaryKind::Fixed,
            "periodic-switch" => AdversaryKind::PeriodicSwitch {
                period: self
                    .adversary
                    .period
                    .context("periodic-switch requires period")?,
            },
            "adaptive-avoid" => AdversaryKind::AdaptiveAvoid {
                strength: self
                    .adversary
                    .strength
                    .context("adaptive-avoid requires strength")?,
            },
            other => bail!("unknown adversary kind '{other}'"),
        };
        if self.adversary.bases.is_empty() {
            bail!("adversary needs at least one base reward");
        }
        let base_rewards = self
            .adversary
            .bases
            .iter()
            .map(|b| resolve_reward(b, &instance, h, s, a))
            .collect::<Result<Vec<_>>>()?;

        let alpha = match &self.hyper.alpha {
            AlphaConfig::Value(v) => {
                StepSize::new(*v).map_err(|e| anyhow::anyhow!("alpha: {e}"))?
            }
            AlphaConfig::Auto(marker) => {
                if marker != "auto" {
                    bail!("alpha must be a number or the string \"auto\"");
                }
                StepSize::auto(a, h, self.hyper.episodes)
            }
        };
        let hyper = HyperParams {
            alpha,
            lambda: self.hyper.lambda,
            c_beta: self.hyper.c_beta,
            zeta: self.hyper.zeta,
            episodes: self.hyper.episodes,
        };

        Ok(ResolvedExperiment {
            config_hash: config_hash(self)?,
            instance,
            adversary,
            base_rewards,
            modes,
            hyper,
            seeds: self.seeds.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> &'static str {
        r#"{
            "instance": {"kind": "tabular-random", "horizon": 3, "num_states": 4,
                         "num_actions": 2, "seed": 7, "concentration": 1.0},
            "adversary": {"kind": "fixed", "bases": [{"kind": "constant", "value": 0.5}]},
            "modes": ["oppo", "uniform"],
            "hyper": {"episodes": 10, "alpha": "auto"},
            "seeds": [1, 2]
        }"#
    }

    #[test]
    fn sample_config_parses_and_resolves() {
        let config = ExperimentConfig::from_json(sample_json()).unwrap();
        let resolved = config.resolve().unwrap();
        assert_eq!(
            resolved.modes,
            vec![AgentMode::Oppo, AgentMode::UniformPolicy]
        );
        assert_eq!(resolved.hyper.lambda, 1.0);
        assert_eq!(resolved.base_rewards.len(), 1);
        assert_eq!(resolved.instance.mdp.feature_dim(), 4 * 4 * 2);
    }

    #[test]
    fn auto_alpha_matches_the_formula_exactly() {
        let config = ExperimentConfig::from_json(sample_json()).unwrap();
        let resolved = config.resolve().unwrap();
        let t = 3.0 * 10.0;
        let expected = (2.0 * (2.0f64).ln() / (3.0 * t)).sqrt();
        assert!((resolved.hyper.alpha.value() - expected).abs() < 1e-15);
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let mut config = ExperimentConfig::from_json(sample_json()).unwrap();
        config.modes = vec!["q-learning".into()];
        assert!(config.resolve().is_err());
    }

    #[test]
    fn config_hash_is_stable_and_content_sensitive() {
        let a = ExperimentConfig::from_json(sample_json()).unwrap();
        let mut b = ExperimentConfig::from_json(sample_json()).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.seeds.push(3);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }

    #[test]
    fn lock_reward_requires_lock_instance() {
        let mut config = ExperimentConfig::from_json(sample_json()).unwrap();
        config.adversary.bases = vec![RewardSpec::Lock];
        assert!(config.resolve().is_err());
    }
}
