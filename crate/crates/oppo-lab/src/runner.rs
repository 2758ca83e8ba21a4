//! The seeded episode-loop runner.
//!
//! Each (mode, seed) pair is one independent run: the adversary commits a
//! reward, the agent commits a policy, an episode is simulated, the agent
//! evaluates, and the oracle layer measures exact regret plus the pathwise
//! decomposition afterwards. Cells run in parallel (capped by
//! `OPPO_LAB_THREADS`) and results are returned in deterministic
//! (mode, seed) order.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use oppo_core::adversary::{next_reward, History};
use oppo_core::agent::{Agent, AgentMode};
use oppo_core::eval::ValueTables;
use oppo_core::oracles;
use oppo_core::seeding;
use oppo_core::tables::StateActionTable;

use crate::config::{ExperimentConfig, ResolvedExperiment};
use crate::formats::{write_json_atomic, EpisodeRecord, EvalDumpRecord, RunLogFile};

/// Residuals above this abort the run: the decomposition is an exact
/// identity, so a larger value means an implementation bug, and no CSV is
/// written from such a run.
pub const RESIDUAL_ABORT_TOL: f64 = 1e-4;

const STREAM_EPISODE: u64 = 0;
const STREAM_ADVERSARY: u64 = 1;

fn mode_stream_tag(mode: AgentMode) -> u64 {
    match mode {
        AgentMode::Oppo => 0,
        AgentMode::GreedyLsvi => 1,
        AgentMode::NoBonus => 2,
        AgentMode::UniformPolicy => 3,
    }
}

/// One completed (mode, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Hash of the producing configuration.
    pub config_hash: String,
    /// Agent mode.
    pub mode: AgentMode,
    /// Master seed of this run.
    pub seed: u64,
    /// Per-episode rows.
    pub records: Vec<EpisodeRecord>,
    /// Evaluated features at the visited pairs, `[h][k]`, kept only when
    /// requested (used by the elliptical potential checks).
    pub visited_features: Option<Vec<Vec<Vec<f64>>>>,
    /// Wall-clock seconds.
    pub wall_clock_secs: f64,
    /// Per-episode evaluation dumps, kept only when requested.
    pub eval_dumps: Option<Vec<EvalDumpRecord>>,
}

impl RunOutput {
    /// Converts to the on-disk log form.
    pub fn to_log_file(&self) -> RunLogFile {
        RunLogFile {
            config_hash: self.config_hash.clone(),
            mode: self.mode.label().to_string(),
            seed: self.seed,
            wall_clock_secs: self.wall_clock_secs,
            episodes: self.records.clone(),
        }
    }
}

/// Extra knobs for [`run_experiment_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Retain per-step visited-feature sequences in memory.
    pub keep_features: bool,
    /// Retain per-episode evaluation dumps in memory.
    pub keep_eval_dumps: bool,
}

/// Runs every (mode, seed) cell of a configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    run_experiment_with(config, RunOptions::default())
}

/// Runs every (mode, seed) cell with explicit retention options.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<Vec<RunOutput>> {
    let resolved = config.resolve()?;
    let mut cells = Vec::new();
    for &mode in &resolved.modes {
        for &seed in &resolved.seeds {
            cells.push((mode, seed));
        }
    }
    let threads = crate::thread_cap().min(cells.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<Result<RunOutput>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(mode, seed)| run_single(&resolved, mode, seed, options))
            .collect()
    });
    outputs.into_iter().collect()
}

/// Runs one (mode, seed) cell.
pub fn run_single(
    resolved: &ResolvedExperiment,
    mode: AgentMode,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutput> {
    let started = Instant::now();
    let mdp = &resolved.instance.mdp;
    let (h, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let episodes = resolved.hyper.episodes;
    let mode_tag = mode_stream_tag(mode);

    let mut agent =
        Agent::new(mode, mdp, resolved.hyper).map_err(|e| anyhow::anyhow!("agent: {e}"))?;
    let mut history = History::new();

    // Retained per-episode artifacts for the oracle pass.
    let mut policies = Vec::with_capacity(episodes);
    let mut rewards = Vec::with_capacity(episodes);
    let mut trajectories = Vec::with_capacity(episodes);
    let mut q_tables = Vec::with_capacity(episodes);
    let mut v_tables = Vec::with_capacity(episodes);
    let mut bonus_sums = Vec::with_capacity(episodes);
    let mut optimism_counts = Vec::with_capacity(episodes);
    let mut lower_counts = Vec::with_capacity(episodes);
    let mut visited_features = options
        .keep_features
        .then(|| vec![Vec::with_capacity(episodes); h]);
    let mut eval_dumps = options.keep_eval_dumps.then(Vec::new);

    let zero_tables = ValueTables::zeros(h, s, a);
    let zero_table = StateActionTable::zeros(h, s, a);

    for k in 1..=episodes {
        let mut adversary_rng = seeding::rng_from(seeding::derive_seed(
            seed,
            &[mode_tag, STREAM_ADVERSARY, k as u64],
        ));
        let reward = next_reward(
            &resolved.adversary,
            &history,
            &resolved.base_rewards,
            &mut adversary_rng,
        )
        .map_err(|e| anyhow::anyhow!("adversary at episode {k}: {e}"))?;

        let policy = agent.begin_episode().clone();
        let mut episode_rng = seeding::rng_from(seeding::derive_seed(
            seed,
            &[mode_tag, STREAM_EPISODE, k as u64],
        ));
        let trajectory = mdp
            .run_episode(&policy, &reward, k, &mut episode_rng)
            .map_err(|e| anyhow::anyhow!("episode {k}: {e}"))?;
        let outcome = agent
            .end_episode(mdp, &trajectory, &reward)
            .map_err(|e| anyhow::anyhow!("evaluation at episode {k}: {e}"))?;

        let (tables, raw_q, bonus) = match &outcome.diagnostics {
            Some(diag) => (&outcome.tables, &diag.q_raw, &diag.bonus),
            None => (&zero_tables, &zero_table, &zero_table),
        };

        let errors =
            oracles::prediction_error_table(mdp, &reward, tables.q(), tables.v(), raw_q, bonus)
                .map_err(|e| anyhow::anyhow!("prediction errors at episode {k}: {e}"))?;
        optimism_counts.push(errors.optimism_violations());
        lower_counts.push(errors.lower_bound_violations());

        let mut bonus_sum = 0.0;
        for step in 0..h {
            bonus_sum += bonus.get(step, trajectory.states[step], trajectory.actions[step]);
        }
        bonus_sums.push(bonus_sum);

        if let (Some(features), Some(diag)) = (visited_features.as_mut(), &outcome.diagnostics) {
            for step in 0..h {
                features[step].push(
                    diag.phi(step, trajectory.states[step], trajectory.actions[step])
                        .to_vec(),
                );
            }
        }
        if let (Some(dumps), Some(diag)) = (eval_dumps.as_mut(), &outcome.diagnostics) {
            dumps.push(EvalDumpRecord {
                k,
                weights: diag.weights.clone(),
                q_raw: nested_table(&diag.q_raw),
                bonus: nested_table(&diag.bonus),
            });
        }

        policies.push(policy);
        q_tables.push(tables.q().clone());
        v_tables.push(tables.v().clone());
        rewards.push(reward.clone());
        trajectories.push(trajectory.clone());
        history.push(trajectory, reward);
    }

    // Oracle pass: hindsight benchmark, exact regret, decomposition.
    let optimal = oracles::hindsight_optimal_policy(mdp, &rewards)
        .map_err(|e| anyhow::anyhow!("hindsight policy: {e}"))?;
    let occupancy =
        oracles::occupancy_states(mdp, &optimal).map_err(|e| anyhow::anyhow!("occupancy: {e}"))?;
    let regret_series =
        oracles::regret(mdp, &rewards, &policies).map_err(|e| anyhow::anyhow!("regret: {e}"))?;

    let mut records = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let data = oracles::EpisodeEvalData {
            policy: &policies[k],
            q: &q_tables[k],
            v: &v_tables[k],
            trajectory: &trajectories[k],
            reward: &rewards[k],
        };
        let decomposition = oracles::decomposition_terms(mdp, &optimal, &occupancy, &data)
            .map_err(|e| anyhow::anyhow!("decomposition at episode {}: {e}", k + 1))?;
        if decomposition.residual.abs() > RESIDUAL_ABORT_TOL {
            bail!(
                "episode {}: decomposition residual {} exceeds {RESIDUAL_ABORT_TOL}; aborting run",
                k + 1,
                decomposition.residual
            );
        }
        let r = &regret_series[k];
        records.push(EpisodeRecord {
            k: k + 1,
            v_star: r.v_star,
            v_executed: r.v_executed,
            inst_regret: r.instantaneous,
            cum_regret: r.cumulative,
            term_i: decomposition.policy_gap,
            term_ii: decomposition.martingale,
            term_iii: decomposition.prediction_gap,
            residual: decomposition.residual,
            bonus_sum: bonus_sums[k],
            optimism_violations: optimism_counts[k],
            lower_violations: lower_counts[k],
        });
    }

    Ok(RunOutput {
        config_hash: resolved.config_hash.clone(),
        mode,
        seed,
        records,
        visited_features,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        eval_dumps,
    })
}

fn nested_table(table: &StateActionTable) -> Vec<Vec<Vec<f64>>> {
    (0..table.horizon())
        .map(|h| {
            (0..table.num_states())
                .map(|x| table.row(h, x).to_vec())
                .collect()
        })
        .collect()
}

/// Writes one run log (and its eval dump when present) into a directory.
pub fn write_run_log(output: &RunOutput, dir: &Path) -> Result<()> {
    let name = format!("runlog_{}_{}.json", output.mode.label(), output.seed);
    write_json_atomic(&dir.join(name), &output.to_log_file())?;
    if let Some(dumps) = &output.eval_dumps {
        let name = format!("evaldump_{}_{}.json", output.mode.label(), output.seed);
        write_json_atomic(&dir.join(name), dumps)?;
    }
    Ok(())
}
