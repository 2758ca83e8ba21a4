//! Regret reports: the per-episode CSV and the summary JSON with
//! per-mode quantiles and log-log slopes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::formats::{write_atomic, write_json_atomic, RunLogFile};

/// Episode checkpoints reported in the summary (plus the final episode).
pub const SUMMARY_CHECKPOINTS: [usize; 3] = [100, 500, 1000];

/// Where the report files were written.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    /// The per-episode CSV.
    pub csv: PathBuf,
    /// The summary JSON.
    pub summary: PathBuf,
}

/// Summary JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    /// Per-mode statistics, keyed by mode label.
    pub modes: BTreeMap<String, ModeSummary>,
}

/// Per-mode cumulative regret statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    /// Median/IQR of cumulative regret at each checkpoint episode.
    pub checkpoints: BTreeMap<usize, QuantileStats>,
    /// Least-squares slope of `log median cum_regret` against `log k` over
    /// `k` in `[K/10, K]` (positive medians only); `null` when fewer than
    /// two usable points exist.
    pub loglog_slope: Option<f64>,
}

/// Median and interquartile range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileStats {
    pub median: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let position = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let low = position.floor() as usize;
    let high = position.ceil() as usize;
    if low == high {
        sorted[low]
    } else {
        let w = position - low as f64;
        sorted[low] * (1.0 - w) + sorted[high] * w
    }
}

/// Median across runs of cumulative regret, per episode.
pub fn median_cumulative_curve(logs: &[&RunLogFile]) -> Vec<f64> {
    assert!(!logs.is_empty());
    let episodes = logs[0].episodes.len();
    (0..episodes)
        .map(|i| {
            let values: Vec<f64> = logs.iter().map(|log| log.episodes[i].cum_regret).collect();
            quantile(&values, 0.5)
        })
        .collect()
}

/// Least-squares slope of `log y` against `log k` over `k` in
/// `[k_lo, k_hi]`, restricted to strictly positive `y`.
pub fn loglog_slope(curve: &[f64], k_lo: usize, k_hi: usize) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &y) in curve.iter().enumerate() {
        let k = i + 1;
        if k >= k_lo && k <= k_hi && y > 0.0 {
            xs.push((k as f64).ln());
            ys.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut covariance = 0.0;
    let mut variance = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        covariance += (x - mean_x) * (y - mean_y);
        variance += (x - mean_x) * (x - mean_x);
    }
    (variance > 0.0).then(|| covariance / variance)
}

fn format_f64(v: f64) -> String {
    // Shortest round-trip decimal; stable across runs.
    format!("{v}")
}

/// Writes the CSV and summary for a set of runs sharing one configuration.
pub fn emit_report(logs: &[RunLogFile], dir: &Path) -> Result<ReportPaths> {
    if logs.is_empty() {
        bail!("no run logs to report");
    }
    let hash = &logs[0].config_hash;
    if logs.iter().any(|log| &log.config_hash != hash) {
        bail!("run logs come from different configurations");
    }
    let episodes = logs[0].episodes.len();
    if logs.iter().any(|log| log.episodes.len() != episodes) {
        bail!("run logs disagree on episode count");
    }

    // Deterministic row order: mode label, then seed, then episode.
    let mut ordered: Vec<&RunLogFile> = logs.iter().collect();
    ordered.sort_by(|a, b| (&a.mode, a.seed).cmp(&(&b.mode, b.seed)));

    let mut csv = String::new();
    csv.push_str(
        "mode,seed,k,inst_regret,cum_regret,term_i,term_ii,term_iii,bonus_sum,optimism_violations\n",
    );
    for log in &ordered {
        for row in &log.episodes {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                log.mode,
                log.seed,
                row.k,
                format_f64(row.inst_regret),
                format_f64(row.cum_regret),
                format_f64(row.term_i),
                format_f64(row.term_ii),
                format_f64(row.term_iii),
                format_f64(row.bonus_sum),
                row.optimism_violations,
            ));
        }
    }
    let csv_path = dir.join("regret.csv");
    write_atomic(&csv_path, csv.as_bytes())?;

    let mut modes: BTreeMap<String, ModeSummary> = BTreeMap::new();
    let mut by_mode: BTreeMap<String, Vec<&RunLogFile>> = BTreeMap::new();
    for log in &ordered {
        by_mode.entry(log.mode.clone()).or_default().push(log);
    }
    for (mode, group) in by_mode {
        let curve = median_cumulative_curve(&group);
        let mut checkpoints = BTreeMap::new();
        let mut points: Vec<usize> = SUMMARY_CHECKPOINTS
            .iter()
            .copied()
            .filter(|&k| k <= episodes)
            .collect();
        points.push(episodes);
        points.dedup();
        for k in points {
            let values: Vec<f64> = group
                .iter()
                .map(|log| log.episodes[k - 1].cum_regret)
                .collect();
            checkpoints.insert(
                k,
                QuantileStats {
                    median: quantile(&values, 0.5),
                    iqr: quantile(&values, 0.75) - quantile(&values, 0.25),
                },
            );
        }
        let slope = loglog_slope(&curve, (episodes / 10).max(1), episodes);
        modes.insert(
            mode,
            ModeSummary {
                checkpoints,
                loglog_slope: slope,
            },
        );
    }
    let summary = Summary {
        config_hash: hash.clone(),
        modes,
    };
    let summary_path = dir.join("summary.json");
    write_json_atomic(&summary_path, &summary)?;

    Ok(ReportPaths {
        csv: csv_path,
        summary: summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate_linearly() {
        let values = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&values, 0.5), 2.5);
        assert_eq!(quantile(&values, 0.0), 1.0);
        assert_eq!(quantile(&values, 1.0), 4.0);
        assert!((quantile(&values, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law_recovers_its_exponent() {
        let curve: Vec<f64> = (1..=1000).map(|k| 3.0 * (k as f64).powf(0.62)).collect();
        let slope = loglog_slope(&curve, 100, 1000).unwrap();
        assert!((slope - 0.62).abs() < 1e-9);
    }

    #[test]
    fn slope_of_all_nonpositive_curve_is_none() {
        let curve = vec![0.0; 50];
        assert!(loglog_slope(&curve, 5, 50).is_none());
    }
}
