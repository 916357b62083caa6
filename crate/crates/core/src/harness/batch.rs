//! Batches of independent trials and their summary report.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::trial::{run_trial, TrialRecord};
use super::{trial_seed, HarnessError};
use crate::perception::NoiseModel;
use crate::servo::OutcomeKind;

/// Five-number summary; quartiles by linear interpolation between order
/// statistics (`h = (n − 1)·p`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (s.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(s.len() - 1);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        };
        Some(Self {
            min: s[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OutcomeCounts {
    pub success: usize,
    pub miss: usize,
    pub fail: usize,
}

/// Quartiles of the absolute terminal error along each `/ws` axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisQuartiles {
    pub x: BoxStats,
    pub y: BoxStats,
    pub z: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial_id: usize,
    pub seed: u64,
    pub outcome: OutcomeKind,
    pub final_tip_error_mm: f64,
    pub error_components_mm: [f64; 3],
    pub unclassified_band: bool,
    pub completed: bool,
    pub task_time_s: f64,
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub scenario: String,
    pub base_seed: u64,
    pub n_trials: usize,
    pub counts: OutcomeCounts,
    /// Trials not captured with error between the miss and fail thresholds,
    /// counted as misses.
    pub unclassified_band: usize,
    pub aborted: usize,
    pub error_quartiles_mm: Option<AxisQuartiles>,
    pub mean_terminal_error_mm: f64,
    /// Mean over trials that returned home.
    pub mean_task_time_s: Option<f64>,
    pub noise: NoiseModel,
    pub trials: Vec<TrialSummary>,
}

impl BatchReport {
    pub fn from_trials(config: &ScenarioConfig, trials: &[TrialRecord]) -> Self {
        let mut counts = OutcomeCounts::default();
        for t in trials {
            match t.outcome.kind {
                OutcomeKind::Success => counts.success += 1,
                OutcomeKind::Miss => counts.miss += 1,
                OutcomeKind::Fail => counts.fail += 1,
            }
        }
        let axis = |i: usize| trials.iter().map(|t| t.outcome.components[i].abs()).collect::<Vec<_>>();
        let error_quartiles_mm = match (
            BoxStats::from_samples(&axis(0)),
            BoxStats::from_samples(&axis(1)),
            BoxStats::from_samples(&axis(2)),
        ) {
            (Some(x), Some(y), Some(z)) => Some(AxisQuartiles { x, y, z }),
            _ => None,
        };
        let n = trials.len().max(1) as f64;
        let completed: Vec<f64> = trials.iter().filter(|t| t.completed).map(|t| t.task_time_s).collect();
        Self {
            scenario: config.name.clone(),
            base_seed: config.seed,
            n_trials: trials.len(),
            counts,
            unclassified_band: trials.iter().filter(|t| t.outcome.unclassified_band).count(),
            aborted: trials.iter().filter(|t| t.abort_reason.is_some()).count(),
            error_quartiles_mm,
            mean_terminal_error_mm: trials.iter().map(|t| t.outcome.final_tip_error).sum::<f64>() / n,
            mean_task_time_s: (!completed.is_empty()).then(|| completed.iter().sum::<f64>() / completed.len() as f64),
            noise: config.noise,
            trials: trials
                .iter()
                .map(|t| TrialSummary {
                    trial_id: t.trial_id,
                    seed: t.seed,
                    outcome: t.outcome.kind,
                    final_tip_error_mm: t.outcome.final_tip_error,
                    error_components_mm: t.outcome.components,
                    unclassified_band: t.outcome.unclassified_band,
                    completed: t.completed,
                    task_time_s: t.task_time_s,
                    abort_reason: t.abort_reason.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct BatchResult {
    pub report: BatchReport,
    pub trials: Vec<TrialRecord>,
}

/// Runs `n` trials in parallel with per-trial seeds derived from the
/// scenario seed. Results are ordered by trial id.
pub fn run_batch(config: &ScenarioConfig, n: usize) -> Result<BatchResult, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Invalid("batch needs at least one trial".into()));
    }
    let trials = (0..n)
        .into_par_iter()
        .map(|i| run_trial(config, i, trial_seed(config.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchResult {
        report: BatchReport::from_trials(config, &trials),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let s = BoxStats::from_samples(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let one = BoxStats::from_samples(&[2.5]).unwrap();
        assert_eq!(
            (one.min, one.q1, one.median, one.q3, one.max),
            (2.5, 2.5, 2.5, 2.5, 2.5)
        );
        assert!(BoxStats::from_samples(&[]).is_none());
    }
}
