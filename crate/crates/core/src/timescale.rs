//! The gating layer that turns per-layer update bits into executed
//! decisions, plus the four non-learning timescale baselines and their
//! grid-search tuning harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::UpdateAction;

#[derive(Debug, Error)]
pub enum TimescaleError {
    #[error("SMT periods must be positive, got {0:?}")]
    BadPeriods((u64, u64, u64)),
    #[error("trigger threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// Eq.-5 gating: adopt the candidate when the bit is set, else carry the
/// previous decision forward. Slot 0 always adopts (callers force the bit).
pub fn gate<T: Clone>(bit: bool, candidate: &T, previous: &T) -> T {
    if bit {
        candidate.clone()
    } else {
        previous.clone()
    }
}

/// Row-wise gating over per-edge decision rows.
pub fn gate_rows<T: Clone>(bits: &[bool], candidate: &[Vec<T>], previous: &[Vec<T>]) -> Vec<Vec<T>> {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| gate(b, &candidate[i], &previous[i]))
        .collect()
}

/// The four non-learning baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Updates all three layers every slot.
    StaticSingle,
    /// Updates layer k every `periods.k` slots.
    StaticMulti { periods: (u64, u64, u64) },
    /// Updates all of an edge's layers when its mean scheduling delay
    /// exceeds the threshold (slots).
    DelayTriggered { threshold: f64 },
    /// Likewise on the edge's total waiting workload.
    WorkloadTriggered { threshold: f64 },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<(), TimescaleError> {
        match *self {
            BaselineKind::StaticSingle => Ok(()),
            BaselineKind::StaticMulti { periods } => {
                if periods.0 == 0 || periods.1 == 0 || periods.2 == 0 {
                    Err(TimescaleError::BadPeriods(periods))
                } else {
                    Ok(())
                }
            }
            BaselineKind::DelayTriggered { threshold }
            | BaselineKind::WorkloadTriggered { threshold } => {
                if threshold > 0.0 {
                    Ok(())
                } else {
                    Err(TimescaleError::BadThreshold(threshold))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::StaticSingle => "sst",
            BaselineKind::StaticMulti { .. } => "smt",
            BaselineKind::DelayTriggered { .. } => "dt",
            BaselineKind::WorkloadTriggered { .. } => "wt",
        }
    }
}

/// Per-edge observations the trigger baselines read.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeMetrics {
    /// Mean age in slots of the edge's live tasks.
    pub mean_delay: f64,
    /// Waiting plus executing workload at the edge.
    pub backlog: f64,
}

/// One edge's update bits under a baseline policy at slot `t`.
pub fn baseline_action(kind: &BaselineKind, slot: u64, metrics: &EdgeMetrics) -> UpdateAction {
    match *kind {
        BaselineKind::StaticSingle => UpdateAction::ALL_UPDATE,
        BaselineKind::StaticMulti { periods } => UpdateAction {
            a1: slot % periods.0 == 0,
            a2: slot % periods.1 == 0,
            a3: slot % periods.2 == 0,
        },
        BaselineKind::DelayTriggered { threshold } => {
            if metrics.mean_delay > threshold {
                UpdateAction::ALL_UPDATE
            } else {
                UpdateAction::ALL_HOLD
            }
        }
        BaselineKind::WorkloadTriggered { threshold } => {
            if metrics.backlog > threshold {
                UpdateAction::ALL_UPDATE
            } else {
                UpdateAction::ALL_HOLD
            }
        }
    }
}

/// Per-edge update bits under a baseline policy at slot `t`.
pub fn baseline_policy(kind: &BaselineKind, slot: u64, metrics: &[EdgeMetrics]) -> Vec<UpdateAction> {
    metrics.iter().map(|m| baseline_action(kind, slot, m)).collect()
}

/// Exhaustively evaluates candidate settings with `evaluate` (total profit)
/// and returns the argmax; ties keep the earliest (lowest) candidate.
pub fn argmax_setting<T: Clone, F: FnMut(&T) -> f64>(candidates: &[T], mut evaluate: F) -> (T, f64) {
    assert!(!candidates.is_empty(), "grid search over an empty candidate set");
    let mut best = candidates[0].clone();
    let mut best_profit = evaluate(&candidates[0]);
    for c in &candidates[1..] {
        let p = evaluate(c);
        if p > best_profit {
            best = c.clone();
            best_profit = p;
        }
    }
    (best, best_profit)
}

/// Exhaustive SMT tuning: evaluates every period triple from the set on the
/// script and returns the profit-maximizing one (ties to the
/// lexicographically smallest).
pub fn smt_grid_search(
    cfg: &crate::domain::ClusterConfig,
    script: &crate::workload::WorkloadScript,
    rcfg: &crate::hdrl::rollout::RolloutCfg,
    periods: &[u64],
) -> Result<((u64, u64, u64), f64), crate::simenv::SimError> {
    let grid = smt_grid(periods);
    let mut failure = None;
    let (best, profit) = argmax_setting(&grid, |&p| {
        match crate::hdrl::rollout::evaluate_baseline(
            cfg,
            script,
            rcfg,
            BaselineKind::StaticMulti { periods: p },
            crate::simenv::EnvOptions::default(),
        ) {
            Ok(ledgers) => crate::hdrl::rollout::total_profit(&ledgers),
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((best, profit)),
    }
}

/// Threshold tuning for the delay- and workload-triggered baselines, using
/// the same exhaustive harness as SMT.
pub fn trigger_grid_search(
    cfg: &crate::domain::ClusterConfig,
    script: &crate::workload::WorkloadScript,
    rcfg: &crate::hdrl::rollout::RolloutCfg,
    thresholds: &[f64],
    delay_kind: bool,
) -> Result<(f64, f64), crate::simenv::SimError> {
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut failure = None;
    let (best, profit) = argmax_setting(&sorted, |&th| {
        let kind = if delay_kind {
            BaselineKind::DelayTriggered { threshold: th }
        } else {
            BaselineKind::WorkloadTriggered { threshold: th }
        };
        match crate::hdrl::rollout::evaluate_baseline(
            cfg,
            script,
            rcfg,
            kind,
            crate::simenv::EnvOptions::default(),
        ) {
            Ok(ledgers) => crate::hdrl::rollout::total_profit(&ledgers),
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((best, profit)),
    }
}

/// The full lexicographically ordered period grid from one period set.
pub fn smt_grid(periods: &[u64]) -> Vec<(u64, u64, u64)> {
    let mut sorted = periods.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len().pow(3));
    for &p1 in &sorted {
        for &p2 in &sorted {
            for &p3 in &sorted {
                out.push((p1, p2, p3));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_adopts_or_holds() {
        let cand = vec![vec![1, 2], vec![3, 4]];
        let prev = vec![vec![9, 9], vec![9, 9]];
        let out = gate_rows(&[true, false], &cand, &prev);
        assert_eq!(out, vec![vec![1, 2], vec![9, 9]]);
    }

    #[test]
    fn sst_always_updates() {
        for t in [0, 1, 17, 999] {
            let a = baseline_action(&BaselineKind::StaticSingle, t, &EdgeMetrics::default());
            assert_eq!(a, UpdateAction::ALL_UPDATE);
        }
    }

    #[test]
    fn smt_uses_modulo_per_layer() {
        let kind = BaselineKind::StaticMulti { periods: (50, 10, 1) };
        let a = baseline_action(&kind, 20, &EdgeMetrics::default());
        assert_eq!(a, UpdateAction { a1: false, a2: true, a3: true });
        let a = baseline_action(&kind, 0, &EdgeMetrics::default());
        assert_eq!(a, UpdateAction::ALL_UPDATE);
    }

    #[test]
    fn wt_with_unreachable_threshold_holds() {
        let kind = BaselineKind::WorkloadTriggered { threshold: f64::INFINITY };
        for t in 0..50 {
            let a = baseline_action(&kind, t, &EdgeMetrics { mean_delay: 3.0, backlog: 1e12 });
            assert_eq!(a, UpdateAction::ALL_HOLD);
        }
    }

    #[test]
    fn dt_triggers_all_layers_jointly() {
        let kind = BaselineKind::DelayTriggered { threshold: 2.0 };
        let hot = baseline_action(&kind, 5, &EdgeMetrics { mean_delay: 2.5, backlog: 0.0 });
        assert_eq!(hot, UpdateAction::ALL_UPDATE);
        let cold = baseline_action(&kind, 5, &EdgeMetrics { mean_delay: 1.0, backlog: 0.0 });
        assert_eq!(cold, UpdateAction::ALL_HOLD);
    }

    #[test]
    fn validation_rejects_bad_settings() {
        assert!(BaselineKind::StaticMulti { periods: (0, 1, 1) }.validate().is_err());
        assert!(BaselineKind::DelayTriggered { threshold: 0.0 }.validate().is_err());
        assert!(BaselineKind::StaticMulti { periods: (1, 10, 100) }.validate().is_ok());
    }

    #[test]
    fn grid_is_lexicographic_and_deduplicated() {
        let grid = smt_grid(&[10, 1, 10]);
        assert_eq!(grid.len(), 8);
        assert_eq!(grid[0], (1, 1, 1));
        assert_eq!(grid[1], (1, 1, 10));
        assert_eq!(grid[7], (10, 10, 10));
    }

    #[test]
    fn argmax_breaks_ties_toward_earliest() {
        let grid = smt_grid(&[1, 10]);
        let (best, profit) = argmax_setting(&grid, |_| 5.0);
        assert_eq!(best, (1, 1, 1));
        assert_eq!(profit, 5.0);
        let (best, _) = argmax_setting(&grid, |&(a, b, c)| (a + b + c) as f64);
        assert_eq!(best, (10, 10, 10));
    }

    #[test]
    fn singleton_grid_returns_that_triple() {
        let grid = smt_grid(&[7]);
        assert_eq!(grid, vec![(7, 7, 7)]);
    }
}
