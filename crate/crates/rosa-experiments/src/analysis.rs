//! Summaries of `metrics.csv` rows: goal-arrival proportions, final-window
//! returns and steps-to-threshold.

use serde::Serialize;
use std::path::Path;

use rosa_core::agents::MetricsRow;
use rosa_core::env::GridSpec;

use crate::error::{ExpError, Result};

/// Which terminal ids count as the optimal and the sub-optimal goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoalLabels {
    pub optimal: u8,
    pub suboptimal: u8,
}

impl GoalLabels {
    /// The highest-reward terminal is optimal and the other one sub-optimal.
    /// Layouts without exactly two terminals of distinct reward have no labels.
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        let mut terms: Vec<_> = spec.terminals.values().collect();
        if terms.len() != 2 {
            return Err(ExpError::Usage(format!("goal labels need two terminals, layout has {}", terms.len())));
        }
        terms.sort_by(|a, b| a.reward.total_cmp(&b.reward));
        if terms[0].reward == terms[1].reward {
            return Err(ExpError::Usage("both terminals have the same reward".into()));
        }
        Ok(GoalLabels { optimal: terms[1].id, suboptimal: terms[0].id })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrivalWindow {
    pub first_episode: u64,
    pub episodes: usize,
    pub p_optimal: f64,
    pub p_suboptimal: f64,
    pub p_none: f64,
}

fn proportions(rows: &[MetricsRow], labels: &GoalLabels) -> ArrivalWindow {
    let n = rows.len() as f64;
    let count = |id: u8| rows.iter().filter(|r| r.goal_id == Some(id)).count() as f64;
    let (o, s) = (count(labels.optimal), count(labels.suboptimal));
    ArrivalWindow {
        first_episode: rows[0].episode,
        episodes: rows.len(),
        p_optimal: o / n,
        p_suboptimal: s / n,
        p_none: (n - o - s) / n,
    }
}

/// Proportions over consecutive blocks of `window` episodes; a trailing
/// partial block is reported too.
pub fn goal_arrival_stats(rows: &[MetricsRow], window: usize, labels: &GoalLabels) -> Result<Vec<ArrivalWindow>> {
    if window == 0 {
        return Err(ExpError::Usage("window must be positive".into()));
    }
    Ok(rows.chunks(window).map(|c| proportions(c, labels)).collect())
}

/// Proportions over the last `window` episodes (all of them if fewer).
pub fn final_window(rows: &[MetricsRow], window: usize, labels: &GoalLabels) -> Result<ArrivalWindow> {
    if window == 0 || rows.is_empty() {
        return Err(ExpError::Usage("need a positive window and at least one episode".into()));
    }
    Ok(proportions(&rows[rows.len().saturating_sub(window)..], labels))
}

/// Mean extrinsic return over the last `window` episodes.
pub fn final_mean_return(rows: &[MetricsRow], window: usize) -> Option<f64> {
    if rows.is_empty() || window == 0 {
        return None;
    }
    let tail = &rows[rows.len().saturating_sub(window)..];
    Some(tail.iter().map(|r| r.extrinsic_return).sum::<f64>() / tail.len() as f64)
}

/// Env steps at the first episode where the mean extrinsic return of the
/// last `window` episodes reaches `threshold`.
pub fn steps_to_threshold(rows: &[MetricsRow], threshold: f64, window: usize) -> Option<u64> {
    if window == 0 || rows.len() < window {
        return None;
    }
    let mut sum: f64 = rows[..window].iter().map(|r| r.extrinsic_return).sum();
    if sum / window as f64 >= threshold {
        return Some(rows[window - 1].env_steps);
    }
    for i in window..rows.len() {
        sum += rows[i].extrinsic_return - rows[i - window].extrinsic_return;
        if sum / window as f64 >= threshold {
            return Some(rows[i].env_steps);
        }
    }
    None
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ExpError::Io { path: path.into(), source: e.into() })?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| ExpError::Config(format!("{}: {e}", path.display()))))
        .collect()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
