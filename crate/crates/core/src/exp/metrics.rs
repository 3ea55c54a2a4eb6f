//! Metric computation and artifact writers. Everything written here except
//! `latency.csv` is a deterministic function of (config, seed, code).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::SlotLedger;
use crate::hdrl::train::EpochStats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub total_profit: f64,
    /// Profit divided by the adaptive controller's profit on the same script.
    pub normalized_profit: f64,
    pub total_revenue: f64,
    pub total_gated_cost: f64,
    pub completions: u64,
    pub within_budget_fraction: f64,
    pub unsafe_routes: u64,
    /// Update events per layer summed over edges and slots.
    pub updates: [u64; 3],
}

/// Aggregates one method's episode.
pub fn summarize(method: &str, ledgers: &[SlotLedger], completed: &[(usize, u64, u64)]) -> MethodMetrics {
    let mut updates = [0u64; 3];
    for l in ledgers {
        for a in &l.update_bits {
            updates[0] += a.a1 as u64;
            updates[1] += a.a2 as u64;
            updates[2] += a.a3 as u64;
        }
    }
    let within = completed.iter().filter(|(_, age, budget)| age <= budget).count();
    MethodMetrics {
        method: method.to_string(),
        total_profit: ledgers.iter().map(|l| l.total_profit()).sum(),
        normalized_profit: 1.0,
        total_revenue: ledgers.iter().map(|l| l.total_revenue()).sum(),
        total_gated_cost: ledgers.iter().map(|l| l.total_gated_cost()).sum(),
        completions: completed.len() as u64,
        within_budget_fraction: if completed.is_empty() {
            1.0
        } else {
            within as f64 / completed.len() as f64
        },
        unsafe_routes: ledgers.iter().map(|l| l.unsafe_routes).sum(),
        updates,
    }
}

/// Normalizes every method's profit against the named reference method.
pub fn normalize_against(metrics: &mut [MethodMetrics], reference: &str) {
    let denom = metrics
        .iter()
        .find(|m| m.method == reference)
        .map(|m| m.total_profit)
        .unwrap_or(1.0);
    for m in metrics.iter_mut() {
        m.normalized_profit = if denom != 0.0 { m.total_profit / denom } else { f64::NAN };
    }
}

/// Empirical CDF over completion delays: (delay, cumulative fraction).
pub fn delay_cdf(completed: &[(usize, u64, u64)]) -> Vec<(u64, f64)> {
    if completed.is_empty() {
        return Vec::new();
    }
    let mut delays: Vec<u64> = completed.iter().map(|&(_, age, _)| age).collect();
    delays.sort_unstable();
    let n = delays.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (k, d) in delays.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *d => last.1 = frac,
            _ => out.push((*d, frac)),
        }
    }
    out
}

/// Line-delimited per-slot per-edge ledger records.
pub fn write_ledger_csv(path: &Path, ledgers: &[SlotLedger]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "slot,edge,g,c1,c2,c3,profit,served,violated")?;
    for l in ledgers {
        for i in 0..l.revenue.len() {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{}",
                l.slot,
                i,
                l.revenue[i],
                l.place_cost[i],
                l.offload_cost[i],
                l.alloc_cost[i],
                l.profit[i],
                l.served_workload[i],
                l.violated_workload[i]
            )?;
        }
    }
    f.flush()
}

pub fn write_metrics_csv(path: &Path, metrics: &[MethodMetrics]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "method,total_profit,normalized_profit,total_revenue,total_gated_cost,completions,within_budget_fraction,unsafe_routes,updates_l1,updates_l2,updates_l3"
    )?;
    for m in metrics {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.method,
            m.total_profit,
            m.normalized_profit,
            m.total_revenue,
            m.total_gated_cost,
            m.completions,
            m.within_budget_fraction,
            m.unsafe_routes,
            m.updates[0],
            m.updates[1],
            m.updates[2]
        )?;
    }
    f.flush()
}

/// Learning curves: one row per epoch per layer.
pub fn write_curves_csv(path: &Path, curves: &[EpochStats]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,layer,mean_reward,profit")?;
    for s in curves {
        for (k, r) in s.reward_mean.iter().enumerate() {
            writeln!(f, "{},{},{},{}", s.epoch, k + 1, r, s.profit)?;
        }
    }
    f.flush()
}

/// Per-slot decision latency; wall-clock, deliberately kept out of the
/// deterministic artifact set.
pub fn write_latency_csv(path: &Path, times: &[std::time::Duration]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "slot,decision_ms")?;
    for (t, d) in times.iter().enumerate() {
        writeln!(f, "{},{}", t, d.as_secs_f64() * 1e3)?;
    }
    f.flush()
}

/// Per-edge per-layer update timeline entries (Fig.-7-style data), windowed.
fn update_timeline(ledgers: &[SlotLedger], window: u64) -> serde_json::Value {
    let n = ledgers.first().map(|l| l.revenue.len()).unwrap_or(0);
    let mut windows: Vec<serde_json::Value> = Vec::new();
    let mut acc = vec![[0u64; 3]; n];
    let mut start = 0u64;
    for l in ledgers {
        for (i, a) in l.update_bits.iter().enumerate() {
            acc[i][0] += a.a1 as u64;
            acc[i][1] += a.a2 as u64;
            acc[i][2] += a.a3 as u64;
        }
        if (l.slot + 1) % window == 0 {
            windows.push(serde_json::json!({
                "start": start,
                "end": l.slot + 1,
                "updates": acc,
            }));
            acc = vec![[0u64; 3]; n];
            start = l.slot + 1;
        }
    }
    if acc.iter().any(|edge| edge.iter().any(|&c| c > 0)) {
        windows.push(serde_json::json!({
            "start": start,
            "end": ledgers.last().map(|l| l.slot + 1).unwrap_or(start),
            "updates": acc,
        }));
    }
    serde_json::Value::Array(windows)
}

/// Per-service delay CDFs plus per-method summaries as plot-ready JSON.
pub fn plotdata(
    per_method: &[(String, Vec<SlotLedger>, Vec<(usize, u64, u64)>)],
    curves: &[EpochStats],
    timeline_window: u64,
) -> serde_json::Value {
    let mut methods = serde_json::Map::new();
    for (name, ledgers, completed) in per_method {
        let mut services: std::collections::BTreeMap<usize, Vec<(usize, u64, u64)>> =
            Default::default();
        for &(s, age, budget) in completed {
            services.entry(s).or_default().push((s, age, budget));
        }
        let cdfs: serde_json::Map<String, serde_json::Value> = services
            .iter()
            .map(|(s, tasks)| {
                (
                    s.to_string(),
                    serde_json::json!(delay_cdf(tasks)
                        .into_iter()
                        .map(|(d, f)| serde_json::json!([d, f]))
                        .collect::<Vec<_>>()),
                )
            })
            .collect();
        methods.insert(
            name.clone(),
            serde_json::json!({
                "profit_per_slot": ledgers.iter().map(|l| l.total_profit()).collect::<Vec<_>>(),
                "delay_cdf_all": delay_cdf(completed),
                "delay_cdf_by_service": cdfs,
                "update_timeline": update_timeline(ledgers, timeline_window),
            }),
        );
    }
    serde_json::json!({
        "methods": methods,
        "curves": curves,
    })
}

pub fn write_plotdata_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UpdateAction;

    #[test]
    fn identical_ledgers_give_profit_ratio_one() {
        let mut l = SlotLedger::zero(0, 2);
        l.revenue = vec![10.0, 5.0];
        l.profit = vec![10.0, 5.0];
        let a = summarize("adaptive", &[l.clone()], &[]);
        let b = summarize("sst", &[l], &[]);
        let mut ms = vec![a, b];
        normalize_against(&mut ms, "adaptive");
        assert_eq!(ms[1].normalized_profit, 1.0);
    }

    #[test]
    fn delay_cdf_reaches_one_at_the_budget_when_all_within() {
        let completed = vec![(0, 1, 5), (0, 3, 5), (0, 5, 5)];
        let cdf = delay_cdf(&completed);
        let at_budget = cdf.iter().find(|(d, _)| *d == 5).unwrap();
        assert_eq!(at_budget.1, 1.0);
        let m = summarize("x", &[], &completed);
        assert_eq!(m.within_budget_fraction, 1.0);
    }

    #[test]
    fn update_counts_sum_bits() {
        let mut l = SlotLedger::zero(0, 2);
        l.update_bits = vec![UpdateAction::ALL_UPDATE, UpdateAction::ALL_HOLD];
        let m = summarize("x", &[l.clone(), l], &[]);
        assert_eq!(m.updates, [2, 2, 2]);
    }

    #[test]
    fn ledger_csv_has_spec_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        let l = SlotLedger::zero(0, 2);
        write_ledger_csv(&path, &[l]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "slot,edge,g,c1,c2,c3,profit,served,violated");
        assert_eq!(lines.count(), 2);
    }
}
