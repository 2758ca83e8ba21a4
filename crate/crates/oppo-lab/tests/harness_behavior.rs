//! Harness-level behavior: determinism, report identities, degenerate-mode
//! equalities, and checkpoint round-trips.

use std::fs;

use oppo_lab::config::{AlphaConfig, ExperimentConfig};
use oppo_lab::formats::{CheckpointFile, RunLogFile};
use oppo_lab::report::emit_report;
use oppo_lab::runner::{run_experiment, run_experiment_with, RunOptions};

use oppo_core::agent::{Agent, AgentMode, HyperParams};
use oppo_core::instances;
use oppo_core::mdp::RewardFunction;
use oppo_core::policy::StepSize;
use oppo_core::seeding;

fn base_config(episodes: usize, modes: &[&str], seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "instance": {{"kind": "tabular-random", "horizon": 3, "num_states": 4,
                          "num_actions": 2, "seed": 9, "concentration": 1.0}},
            "adversary": {{"kind": "fixed", "bases": [{{"kind": "random-uniform", "seed": 5}}]}},
            "modes": [{}],
            "hyper": {{"episodes": {episodes}, "alpha": "auto"}},
            "seeds": [{}]
        }}"#,
        modes
            .iter()
            .map(|m| format!("\"{m}\""))
            .collect::<Vec<_>>()
            .join(", "),
        seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", "),
    ))
    .unwrap()
}

#[test]
fn uniform_mode_regret_is_an_exact_arithmetic_progression() {
    let config = base_config(50, &["uniform"], &[3]);
    let outputs = run_experiment(&config).unwrap();
    let records = &outputs[0].records;
    let step = records[0].inst_regret;
    assert!(step > 0.0);
    let mut running = 0.0;
    for record in records {
        assert_eq!(record.inst_regret, step);
        running += step;
        assert_eq!(record.cum_regret, running);
    }
}

#[test]
fn zero_step_size_oppo_matches_uniform_mode_regret() {
    let mut config = base_config(40, &["oppo", "uniform"], &[2]);
    config.hyper.alpha = AlphaConfig::Value(0.0);
    let outputs = run_experiment(&config).unwrap();
    let oppo = outputs.iter().find(|o| o.mode == AgentMode::Oppo).unwrap();
    let uniform = outputs
        .iter()
        .find(|o| o.mode == AgentMode::UniformPolicy)
        .unwrap();
    for (a, b) in oppo.records.iter().zip(&uniform.records) {
        assert_eq!(a.inst_regret, b.inst_regret);
        assert_eq!(a.cum_regret, b.cum_regret);
    }
}

#[test]
fn repeated_runs_emit_byte_identical_reports() {
    let config = base_config(30, &["oppo", "greedy-lsvi"], &[1, 2]);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let outputs = run_experiment(&config).unwrap();
        let logs: Vec<RunLogFile> = outputs.iter().map(|o| o.to_log_file()).collect();
        emit_report(&logs, dir.path()).unwrap();
    }
    let csv_a = fs::read(dir_a.path().join("regret.csv")).unwrap();
    let csv_b = fs::read(dir_b.path().join("regret.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let summary_a = fs::read(dir_a.path().join("summary.json")).unwrap();
    let summary_b = fs::read(dir_b.path().join("summary.json")).unwrap();
    assert_eq!(summary_a, summary_b);
}

#[test]
fn csv_rows_satisfy_the_decomposition_identity() {
    let config = base_config(60, &["oppo", "no-bonus", "uniform"], &[7]);
    let outputs = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let logs: Vec<RunLogFile> = outputs.iter().map(|o| o.to_log_file()).collect();
    let paths = emit_report(&logs, dir.path()).unwrap();

    let text = fs::read_to_string(&paths.csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mode,seed,k,inst_regret,cum_regret,term_i,term_ii,term_iii,bonus_sum,optimism_violations"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 10);
        let inst: f64 = fields[3].parse().unwrap();
        let term_i: f64 = fields[5].parse().unwrap();
        let term_ii: f64 = fields[6].parse().unwrap();
        let term_iii: f64 = fields[7].parse().unwrap();
        assert!((inst - term_i - term_ii - term_iii).abs() <= 1e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 3 * 60);
}

#[test]
fn mixed_configuration_logs_are_rejected() {
    let config_a = base_config(10, &["uniform"], &[1]);
    let mut config_b = base_config(10, &["uniform"], &[1]);
    config_b.instance.seed = 10;
    let log_a = run_experiment(&config_a).unwrap().remove(0).to_log_file();
    let log_b = run_experiment(&config_b).unwrap().remove(0).to_log_file();
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_report(&[log_a, log_b], dir.path()).is_err());
}

#[test]
fn feature_retention_matches_history_dimensions() {
    let config = base_config(25, &["oppo"], &[4]);
    let outputs = run_experiment_with(
        &config,
        RunOptions {
            keep_features: true,
            keep_eval_dumps: false,
        },
    )
    .unwrap();
    let features = outputs[0].visited_features.as_ref().unwrap();
    assert_eq!(features.len(), 3);
    for per_step in features {
        assert_eq!(per_step.len(), 25);
        for phi in per_step {
            assert_eq!(phi.len(), 4 * 4 * 2);
        }
    }
}

#[test]
fn agent_checkpoint_round_trips_bit_exactly_through_json() {
    let mdp = instances::random_tabular(3, 4, 2, 1.0, 9).unwrap();
    let reward = RewardFunction::constant(3, 4, 2, 0.7).unwrap();
    let hyper = HyperParams {
        alpha: StepSize::new(0.2).unwrap(),
        lambda: 1.0,
        c_beta: 1.0,
        zeta: 0.05,
        episodes: 12,
    };
    let mut agent = Agent::new(AgentMode::Oppo, &mdp, hyper).unwrap();
    for k in 1..=6 {
        let policy = agent.begin_episode().clone();
        let mut rng = seeding::rng_from(seeding::derive_seed(77, &[k as u64]));
        let traj = mdp.run_episode(&policy, &reward, k, &mut rng).unwrap();
        agent.end_episode(&mdp, &traj, &reward).unwrap();
    }
    let snapshot = agent.snapshot();
    let file = CheckpointFile::from_snapshot(&snapshot);
    let text = serde_json::to_string(&file).unwrap();
    let parsed: CheckpointFile = serde_json::from_str(&text).unwrap();
    let restored = parsed.to_snapshot().unwrap();
    assert_eq!(snapshot, restored);

    // The restored agent continues identically to the original.
    let mut resumed = Agent::from_snapshot(&restored).unwrap();
    for k in 7..=9 {
        let p1 = agent.begin_episode().clone();
        let p2 = resumed.begin_episode().clone();
        assert_eq!(p1.logits_flat(), p2.logits_flat());
        let mut rng = seeding::rng_from(seeding::derive_seed(77, &[k as u64]));
        let traj = mdp.run_episode(&p1, &reward, k, &mut rng).unwrap();
        agent.end_episode(&mdp, &traj, &reward).unwrap();
        resumed.end_episode(&mdp, &traj, &reward).unwrap();
    }
    assert_eq!(agent.snapshot(), resumed.snapshot());
}

#[test]
fn eval_dumps_carry_per_episode_diagnostics() {
    let config = base_config(8, &["oppo"], &[6]);
    let outputs = run_experiment_with(
        &config,
        RunOptions {
            keep_features: false,
            keep_eval_dumps: true,
        },
    )
    .unwrap();
    let dumps = outputs[0].eval_dumps.as_ref().unwrap();
    assert_eq!(dumps.len(), 8);
    for (i, dump) in dumps.iter().enumerate() {
        assert_eq!(dump.k, i + 1);
        assert_eq!(dump.weights.len(), 3);
        assert_eq!(dump.q_raw.len(), 3);
        assert_eq!(dump.bonus.len(), 3);
        assert_eq!(dump.q_raw[0].len(), 4);
        assert_eq!(dump.q_raw[0][0].len(), 2);
    }
    let dir = tempfile::tempdir().unwrap();
    oppo_lab::runner::write_run_log(&outputs[0], dir.path()).unwrap();
    assert!(dir.path().join("evaldump_oppo_6.json").exists());
    assert!(dir.path().join("runlog_oppo_6.json").exists());
}

#[test]
fn lock_runs_record_zero_bonus_for_no_bonus_mode() {
    let config = ExperimentConfig::from_json(
        r#"{
            "instance": {"kind": "combination-lock", "horizon": 4, "num_states": 6,
                         "num_actions": 2, "seed": 3, "reward_value": 1.0},
            "adversary": {"kind": "fixed", "bases": [{"kind": "lock"}]},
            "modes": ["no-bonus"],
            "hyper": {"episodes": 20, "alpha": 0.1},
            "seeds": [1]
        }"#,
    )
    .unwrap();
    let outputs = run_experiment(&config).unwrap();
    for record in &outputs[0].records {
        assert_eq!(record.bonus_sum, 0.0);
    }
}

#[test]
fn uniform_on_a_lock_pays_the_closed_form_gap_every_episode() {
    // V* = reward_value and V^uniform = reward_value / |A|^H on a lock, so
    // uniform-mode instantaneous regret is exactly their difference.
    let config = ExperimentConfig::from_json(
        r#"{
            "instance": {"kind": "combination-lock", "horizon": 4, "num_states": 6,
                         "num_actions": 2, "seed": 5, "reward_value": 1.0},
            "adversary": {"kind": "fixed", "bases": [{"kind": "lock"}]},
            "modes": ["uniform"],
            "hyper": {"episodes": 30, "alpha": "auto"},
            "seeds": [0]
        }"#,
    )
    .unwrap();
    let outputs = run_experiment(&config).unwrap();
    let expected = 1.0 - 1.0 / 16.0;
    let mut running = 0.0;
    for record in &outputs[0].records {
        assert!((record.inst_regret - expected).abs() < 1e-12);
        running += record.inst_regret;
        assert_eq!(record.cum_regret, running);
    }
}
