//! On-disk file formats: instance files, policy tables, agent checkpoints,
//! run logs, and evaluation dumps.
//!
//! All files are UTF-8 JSON. Doubles round-trip bit-exactly through the
//! shortest-decimal encoding used by the JSON writer. Writes go through a
//! temp-file-plus-rename so partially written files are never observed.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use oppo_core::agent::{AgentMode, AgentSnapshot, HyperParams, StepSnapshot};
use oppo_core::mdp::{FeatureKind, FeatureMap, LinearMdp, StochasticKernel};
use oppo_core::policy::{Policy, StepSize};

/// Instance file: everything needed to rebuild a [`LinearMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "H")]
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub d: usize,
    /// `tabular`, `mixture`, or `explicit`.
    pub feature_kind: String,
    /// `theta[h][i]`.
    pub theta: Vec<Vec<f64>>,
    /// Kind-specific payload: absent for `tabular`,
    /// `{"kernels": [[[[..]]]]}` (indexed `[j][x][a][x']`) for `mixture`,
    /// `{"psi": [[[[..]]]]}` (indexed `[x][a][x'][i]`) for `explicit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturePayload>,
    pub initial_state: usize,
}

/// Feature payloads for non-tabular instance files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl InstanceFile {
    /// Captures an in-memory MDP.
    pub fn from_mdp(mdp: &LinearMdp) -> Self {
        let (s, a) = (mdp.num_states(), mdp.num_actions());
        let theta: Vec<Vec<f64>> = (0..mdp.horizon()).map(|h| mdp.theta(h).to_vec()).collect();
        let (feature_kind, features) = match mdp.features().kind() {
            FeatureKind::Tabular => ("tabular".to_string(), None),
            FeatureKind::Mixture { kernels } => {
                let nested: Vec<Vec<Vec<Vec<f64>>>> = kernels
                    .iter()
                    .map(|kernel| {
                        (0..s)
                            .map(|x| (0..a).map(|act| kernel.row(x, act).to_vec()).collect())
                            .collect()
                    })
                    .collect();
                (
                    "mixture".to_string(),
                    Some(FeaturePayload {
                        kernels: Some(nested),
                        psi: None,
                    }),
                )
            }
            FeatureKind::Explicit { .. } => {
                let nested: Vec<Vec<Vec<Vec<f64>>>> = (0..s)
                    .map(|x| {
                        (0..a)
                            .map(|act| (0..s).map(|xp| mdp.features().eval(x, act, xp)).collect())
                            .collect()
                    })
                    .collect();
                (
                    "explicit".to_string(),
                    Some(FeaturePayload {
                        kernels: None,
                        psi: Some(nested),
                    }),
                )
            }
        };
        Self {
            horizon: mdp.horizon(),
            num_states: s,
            num_actions: a,
            d: mdp.feature_dim(),
            feature_kind,
            theta,
            features,
            initial_state: mdp.initial_state(),
        }
    }

    /// Rebuilds the MDP.
    pub fn to_mdp(&self) -> Result<LinearMdp> {
        let (s, a) = (self.num_states, self.num_actions);
        let features = match self.feature_kind.as_str() {
            "tabular" => {
                if self.d != s * s * a {
                    bail!("tabular instances require d = S^2 A");
                }
                FeatureMap::tabular(s, a)
            }
            "mixture" => {
                let nested = self
                    .features
                    .as_ref()
                    .and_then(|f| f.kernels.as_ref())
                    .context("mixture instance needs features.kernels")?;
                let kernels = nested
                    .iter()
                    .map(|kernel| {
                        let mut rows = Vec::with_capacity(s * a * s);
                        for x in 0..s {
                            for act in 0..a {
                                rows.extend_from_slice(&kernel[x][act]);
                            }
                        }
                        StochasticKernel::from_flat(s, a, rows)
                            .map_err(|e| anyhow::anyhow!("kernel: {e}"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureMap::mixture(kernels).map_err(|e| anyhow::anyhow!("features: {e}"))?
            }
            "explicit" => {
                let nested = self
                    .features
                    .as_ref()
                    .and_then(|f| f.psi.as_ref())
                    .context("explicit instance needs features.psi")?;
                let mut values = Vec::with_capacity(s * a * s * self.d);
                for x in 0..s {
                    for act in 0..a {
                        for xp in 0..s {
                            values.extend_from_slice(&nested[x][act][xp]);
                        }
                    }
                }
                FeatureMap::explicit(s, a, self.d, values)
                    .map_err(|e| anyhow::anyhow!("features: {e}"))?
            }
            other => bail!("unknown feature kind '{other}'"),
        };
        LinearMdp::new(features, self.theta.clone(), self.initial_state)
            .map_err(|e| anyhow::anyhow!("mdp: {e}"))
    }
}

/// Policy file: logit tables indexed `[h][x][a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub logits: Vec<Vec<Vec<f64>>>,
}

impl PolicyFile {
    /// Captures a policy.
    pub fn from_policy(policy: &Policy) -> Self {
        let logits = (0..policy.horizon())
            .map(|h| {
                (0..policy.num_states())
                    .map(|x| policy.logits(h, x).to_vec())
                    .collect()
            })
            .collect();
        Self {
            horizon: policy.horizon(),
            num_states: policy.num_states(),
            num_actions: policy.num_actions(),
            logits,
        }
    }

    /// Rebuilds the policy.
    pub fn to_policy(&self) -> Result<Policy> {
        let mut flat = Vec::with_capacity(self.horizon * self.num_states * self.num_actions);
        for per_state in &self.logits {
            for row in per_state {
                flat.extend_from_slice(row);
            }
        }
        Policy::from_logits(self.horizon, self.num_states, self.num_actions, flat)
            .map_err(|e| anyhow::anyhow!("policy: {e}"))
    }
}

/// Agent checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub mode: String,
    pub episode: usize,
    pub in_episode: bool,
    pub alpha: f64,
    pub lambda: f64,
    pub c_beta: f64,
    pub zeta: f64,
    pub episodes: usize,
    pub beta: f64,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub d: usize,
    pub policy_logits: Vec<f64>,
    pub prev_q: Vec<f64>,
    pub steps: Vec<CheckpointStep>,
}

/// Per-step ridge and history state in a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStep {
    pub updates: usize,
    pub gram: Vec<f64>,
    pub inverse: Vec<f64>,
    pub target: Vec<f64>,
    pub history_features: Vec<f64>,
    pub history_targets: Vec<f64>,
}

fn mode_label(mode: AgentMode) -> String {
    mode.label().to_string()
}

fn mode_from_label(label: &str) -> Result<AgentMode> {
    Ok(match label {
        "oppo" => AgentMode::Oppo,
        "greedy-lsvi" => AgentMode::GreedyLsvi,
        "no-bonus" => AgentMode::NoBonus,
        "uniform" => AgentMode::UniformPolicy,
        other => bail!("unknown mode '{other}'"),
    })
}

impl CheckpointFile {
    /// Captures an agent snapshot.
    pub fn from_snapshot(snap: &AgentSnapshot) -> Self {
        Self {
            mode: mode_label(snap.mode),
            episode: snap.episode,
            in_episode: snap.in_episode,
            alpha: snap.hyper.alpha.value(),
            lambda: snap.hyper.lambda,
            c_beta: snap.hyper.c_beta,
            zeta: snap.hyper.zeta,
            episodes: snap.hyper.episodes,
            beta: snap.beta,
            horizon: snap.horizon,
            num_states: snap.num_states,
            num_actions: snap.num_actions,
            d: snap.dim,
            policy_logits: snap.policy_logits.clone(),
            prev_q: snap.prev_q.clone(),
            steps: snap
                .steps
                .iter()
                .map(|s| CheckpointStep {
                    updates: s.updates,
                    gram: s.gram.clone(),
                    inverse: s.inverse.clone(),
                    target: s.target.clone(),
                    history_features: s.history_features.clone(),
                    history_targets: s.history_targets.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the agent snapshot.
    pub fn to_snapshot(&self) -> Result<AgentSnapshot> {
        Ok(AgentSnapshot {
            mode: mode_from_label(&self.mode)?,
            episode: self.episode,
            in_episode: self.in_episode,
            hyper: HyperParams {
                alpha: StepSize::new(self.alpha).map_err(|e| anyhow::anyhow!("alpha: {e}"))?,
                lambda: self.lambda,
                c_beta: self.c_beta,
                zeta: self.zeta,
                episodes: self.episodes,
            },
            beta: self.beta,
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            dim: self.d,
            policy_logits: self.policy_logits.clone(),
            prev_q: self.prev_q.clone(),
            steps: self
                .steps
                .iter()
                .map(|s| StepSnapshot {
                    updates: s.updates,
                    gram: s.gram.clone(),
                    inverse: s.inverse.clone(),
                    target: s.target.clone(),
                    history_features: s.history_features.clone(),
                    history_targets: s.history_targets.clone(),
                })
                .collect(),
        })
    }
}

/// One stored run: identity, per-episode records, and timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLogFile {
    /// Hash of the producing configuration.
    pub config_hash: String,
    pub mode: String,
    pub seed: u64,
    /// Wall-clock seconds for the run (informational; excluded from the
    /// determinism contract).
    pub wall_clock_secs: f64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Per-episode row of a run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub k: usize,
    pub v_star: f64,
    pub v_executed: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub residual: f64,
    pub bonus_sum: f64,
    pub optimism_violations: usize,
    pub lower_violations: usize,
}

/// Per-episode evaluation diagnostics (written under `--dump-eval`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalDumpRecord {
    pub k: usize,
    /// Ridge weights `w[h][i]`.
    pub weights: Vec<Vec<f64>>,
    /// Unclipped estimates `q_raw[h][x][a]`.
    pub q_raw: Vec<Vec<Vec<f64>>>,
    /// Bonuses `bonus[h][x][a]`.
    pub bonus: Vec<Vec<Vec<f64>>>,
}

/// Serializes a value to pretty JSON and writes it atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())
}

/// Writes bytes through a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, bytes).with_context(|| format!("writing {}", tmp_path.display()))?;
    fs::rename(&tmp_path, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Reads and deserializes a JSON file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use oppo_core::instances;

    #[test]
    fn tabular_instance_file_round_trips_bit_exactly() {
        let mdp = instances::random_tabular(3, 4, 2, 1.0, 11).unwrap();
        let file = InstanceFile::from_mdp(&mdp);
        let text = serde_json::to_string(&file).unwrap();
        let parsed: InstanceFile = serde_json::from_str(&text).unwrap();
        let rebuilt = parsed.to_mdp().unwrap();
        assert_eq!(mdp, rebuilt);
    }

    #[test]
    fn mixture_instance_file_round_trips_bit_exactly() {
        let mdp = instances::random_linear(2, 3, 2, 4, 1.0, 12).unwrap();
        let file = InstanceFile::from_mdp(&mdp);
        let text = serde_json::to_string(&file).unwrap();
        let parsed: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, parsed.to_mdp().unwrap());
    }

    #[test]
    fn policy_file_round_trips() {
        let policy = Policy::from_logits(2, 2, 3, vec![0.25; 12]).unwrap();
        let file = PolicyFile::from_policy(&policy);
        let text = serde_json::to_string(&file).unwrap();
        let parsed: PolicyFile = serde_json::from_str(&text).unwrap();
        assert_eq!(
            policy.logits_flat(),
            parsed.to_policy().unwrap().logits_flat()
        );
    }
}
