//! The train / eval / grid / ablate / smoke entry points behind the CLI.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{ClusterConfig, Layer, SlotLedger};
use crate::hdrl::rollout::{run_script, BaselineDecider, RolloutCfg};
use crate::hdrl::train::{
    infer, seed_stream, train, InferOutput, TrainConfig, TrainError, TrainedPolicy, Variant,
};
use crate::hdrl::{checkpoint_bytes, checkpoint_from_bytes, Controllers};
use crate::rules::RuleTriple;
use crate::simenv::{Env, EnvOptions, SimError};
use crate::timescale::{smt_grid_search, trigger_grid_search, BaselineKind};
use crate::workload::WorkloadScript;

use super::config::{ConfigError, ExperimentConfig};
use super::metrics::{
    normalize_against, plotdata, summarize, write_curves_csv, write_latency_csv,
    write_ledger_csv, write_metrics_csv, write_plotdata_json, MethodMetrics,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),
    #[error("bad checkpoint {path}: {msg}")]
    BadCheckpoint { path: PathBuf, msg: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("unknown method '{0}'")]
    UnknownMethod(String),
}

impl RunError {
    /// Distinct nonzero exit codes per failure class (clap itself exits 2
    /// on unknown flags).
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 3,
            RunError::MissingCheckpoint(_) => 4,
            RunError::BadCheckpoint { .. } => 4,
            RunError::Io { .. } => 5,
            RunError::Sim(_) => 6,
            RunError::Train(_) => 7,
            RunError::UnknownMethod(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.display().to_string(), source }
}

/// Prepared experiment context shared by the subcommands.
pub struct Prepared {
    pub cluster: ClusterConfig,
    pub script: WorkloadScript,
    pub rcfg: RolloutCfg,
    pub tcfg: TrainConfig,
    pub seed: u64,
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared, RunError> {
    let cluster = cfg.cluster.build()?;
    let script = cfg.workload.build(&cluster, seed_stream(seed, "workload"))?;
    let rcfg = RolloutCfg {
        rules: cfg.rules.triple()?,
        rule_params: cfg.rules.params(),
        safety: true,
    };
    let tcfg = TrainConfig { seed: seed_stream(seed, "train"), ..cfg.train.clone() };
    Ok(Prepared { cluster, script, rcfg, tcfg, seed })
}

fn ensure_out(out: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out).map_err(io_err(out))
}

/// `train`: runs the training loop and writes `checkpoint.bin`,
/// `curves.csv` and `plotdata.json`.
pub fn train_cmd(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), RunError> {
    ensure_out(out)?;
    let p = prepare(cfg, seed)?;
    let result = train(&p.cluster, &p.script, &p.rcfg, &cfg.rewards, &p.tcfg, Variant::Full)?;
    let TrainedPolicy::Layered(ctrl) = &result.policy else {
        unreachable!("full training yields layered controllers");
    };
    let ck = out.join("checkpoint.bin");
    std::fs::write(&ck, checkpoint_bytes(ctrl, cfg.hash(seed))).map_err(io_err(&ck))?;
    write_curves_csv(&out.join("curves.csv"), &result.curves).map_err(io_err(out))?;
    let pd = plotdata(&[], &result.curves, 50);
    write_plotdata_json(&out.join("plotdata.json"), &pd).map_err(io_err(out))?;
    Ok(())
}

fn load_checkpoint(path: &Path, expected_hash: u64) -> Result<Controllers, RunError> {
    if !path.exists() {
        return Err(RunError::MissingCheckpoint(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (ctrl, hash) = checkpoint_from_bytes(&bytes)
        .map_err(|msg| RunError::BadCheckpoint { path: path.to_path_buf(), msg })?;
    if hash != expected_hash {
        return Err(RunError::BadCheckpoint {
            path: path.to_path_buf(),
            msg: "config hash does not match the checkpoint".into(),
        });
    }
    Ok(ctrl)
}

/// One method's evaluation rollout.
pub struct MethodRun {
    pub name: String,
    pub ledgers: Vec<SlotLedger>,
    pub times: Vec<Duration>,
    pub completed: Vec<(usize, u64, u64)>,
}

fn run_baseline_full(
    cluster: &ClusterConfig,
    script: &WorkloadScript,
    rcfg: &RolloutCfg,
    kind: BaselineKind,
    name: &str,
) -> Result<MethodRun, RunError> {
    let mut env = Env::new(cluster.clone(), EnvOptions::default());
    let mut decider = BaselineDecider { kind };
    let (ledgers, times) = run_script(&mut env, script, rcfg, &mut decider, None)?;
    Ok(MethodRun {
        name: name.to_string(),
        ledgers,
        times,
        completed: env.completed_delays().to_vec(),
    })
}

/// Tunes SMT, DT and WT on the script via the shared exhaustive harness.
pub fn tuned_baselines(
    cfg: &ExperimentConfig,
    cluster: &ClusterConfig,
    script: &WorkloadScript,
    rcfg: &RolloutCfg,
) -> Result<Vec<(BaselineKind, f64)>, RunError> {
    let (smt, smt_profit) = smt_grid_search(cluster, script, rcfg, &cfg.baselines.smt_periods)?;
    let (dt, dt_profit) =
        trigger_grid_search(cluster, script, rcfg, &cfg.baselines.dt_thresholds, true)?;
    let (wt, wt_profit) =
        trigger_grid_search(cluster, script, rcfg, &cfg.baselines.wt_thresholds, false)?;
    Ok(vec![
        (BaselineKind::StaticMulti { periods: smt }, smt_profit),
        (BaselineKind::DelayTriggered { threshold: dt }, dt_profit),
        (BaselineKind::WorkloadTriggered { threshold: wt }, wt_profit),
    ])
}

/// `eval`: rolls out the trained controller and the four baselines on the
/// identical script and writes the comparative artifacts.
pub fn eval(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    checkpoint: Option<&Path>,
    only_method: Option<&str>,
) -> Result<(), RunError> {
    ensure_out(out)?;
    let p = prepare(cfg, seed)?;
    let default_ck = out.join("checkpoint.bin");
    let ck_path = checkpoint.unwrap_or(&default_ck);

    let mut runs: Vec<MethodRun> = Vec::new();
    let want = |name: &str| only_method.map(|m| m == name).unwrap_or(true);

    if let Some(m) = only_method {
        if !["edgetimer", "sst", "smt", "dt", "wt"].contains(&m) {
            return Err(RunError::UnknownMethod(m.to_string()));
        }
    }

    if want("edgetimer") {
        let ctrl = load_checkpoint(ck_path, cfg.hash(seed))?;
        let policy = TrainedPolicy::Layered(ctrl);
        let inf = infer(&policy, &p.cluster, &p.script, &p.rcfg, &cfg.rewards)?;
        runs.push(MethodRun {
            name: "edgetimer".into(),
            ledgers: inf.ledgers,
            times: inf.decision_times,
            completed: inf.completed,
        });
    }
    if want("sst") {
        runs.push(run_baseline_full(&p.cluster, &p.script, &p.rcfg, BaselineKind::StaticSingle, "sst")?);
    }
    let needs_tuning = want("smt") || want("dt") || want("wt");
    if needs_tuning {
        for (kind, _) in tuned_baselines(cfg, &p.cluster, &p.script, &p.rcfg)? {
            let name = kind.name();
            if want(name) {
                runs.push(run_baseline_full(&p.cluster, &p.script, &p.rcfg, kind, name)?);
            }
        }
    }

    let mut metrics: Vec<MethodMetrics> =
        runs.iter().map(|r| summarize(&r.name, &r.ledgers, &r.completed)).collect();
    let reference = if runs.iter().any(|r| r.name == "edgetimer") {
        "edgetimer".to_string()
    } else {
        runs.first().map(|r| r.name.clone()).unwrap_or_else(|| "edgetimer".into())
    };
    normalize_against(&mut metrics, &reference);

    if let Some(primary) = runs.first() {
        write_ledger_csv(&out.join("ledger.csv"), &primary.ledgers).map_err(io_err(out))?;
        write_latency_csv(&out.join("latency.csv"), &primary.times).map_err(io_err(out))?;
    }
    for r in &runs {
        write_ledger_csv(&out.join(format!("ledger_{}.csv", r.name)), &r.ledgers)
            .map_err(io_err(out))?;
    }
    write_metrics_csv(&out.join("metrics.csv"), &metrics).map_err(io_err(out))?;
    let per_method: Vec<(String, Vec<SlotLedger>, Vec<(usize, u64, u64)>)> =
        runs.into_iter().map(|r| (r.name, r.ledgers, r.completed)).collect();
    let pd = plotdata(&per_method, &[], 50);
    write_plotdata_json(&out.join("plotdata.json"), &pd).map_err(io_err(out))?;
    Ok(())
}

/// `grid`: exhaustive baseline tuning; writes `grid.csv`.
pub fn grid(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), RunError> {
    ensure_out(out)?;
    let p = prepare(cfg, seed)?;
    let path = out.join("grid.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
    writeln!(f, "kind,setting,profit,best").map_err(io_err(&path))?;

    let grid_triples = crate::timescale::smt_grid(&cfg.baselines.smt_periods);
    let profits: Vec<f64> = grid_triples
        .par_iter()
        .map(|&periods| {
            crate::hdrl::rollout::evaluate_baseline(
                &p.cluster,
                &p.script,
                &p.rcfg,
                BaselineKind::StaticMulti { periods },
                EnvOptions::default(),
            )
            .map(|ledgers| crate::hdrl::rollout::total_profit(&ledgers))
            .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let best_smt = grid_triples
        .iter()
        .zip(&profits)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(std::cmp::Ordering::Greater))
        .map(|(t, _)| *t);
    for (t, profit) in grid_triples.iter().zip(&profits) {
        writeln!(
            f,
            "smt,{}-{}-{},{},{}",
            t.0,
            t.1,
            t.2,
            profit,
            (Some(*t) == best_smt) as u8
        )
        .map_err(io_err(&path))?;
    }
    for (delay, kind_name, grid_vals) in [
        (true, "dt", &cfg.baselines.dt_thresholds),
        (false, "wt", &cfg.baselines.wt_thresholds),
    ] {
        let (best, _) = trigger_grid_search(&p.cluster, &p.script, &p.rcfg, grid_vals, delay)?;
        for &th in grid_vals {
            let kind = if delay {
                BaselineKind::DelayTriggered { threshold: th }
            } else {
                BaselineKind::WorkloadTriggered { threshold: th }
            };
            let ledgers = crate::hdrl::rollout::evaluate_baseline(
                &p.cluster,
                &p.script,
                &p.rcfg,
                kind,
                EnvOptions::default(),
            )?;
            writeln!(
                f,
                "{},{},{},{}",
                kind_name,
                th,
                crate::hdrl::rollout::total_profit(&ledgers),
                (th == best) as u8
            )
            .map_err(io_err(&path))?;
        }
    }
    f.flush().map_err(io_err(&path))?;
    Ok(())
}

/// The ablation variants `ablate` runs, in report order.
pub fn ablation_variants() -> Vec<(&'static str, Variant)> {
    vec![
        ("full", Variant::Full),
        ("no-decomposition", Variant::NoDecomposition),
        ("no-layer1", Variant::NoLayerOpt(Layer::Placement)),
        ("no-layer2", Variant::NoLayerOpt(Layer::Offloading)),
        ("no-layer3", Variant::NoLayerOpt(Layer::Allocation)),
        ("no-centralized", Variant::NoCentralizedTraining),
        ("no-safe", Variant::NoSafeLearning),
    ]
}

/// Trains one variant and evaluates it on the same script; returns the
/// evaluation rollout and the curves.
pub fn run_variant(
    p: &Prepared,
    rewards: &crate::rewards::RewardCoefficients,
    variant: Variant,
) -> Result<(InferOutput, Vec<crate::hdrl::train::EpochStats>), RunError> {
    let result = train(&p.cluster, &p.script, &p.rcfg, rewards, &p.tcfg, variant)?;
    let rcfg = RolloutCfg { safety: variant.safety(), ..p.rcfg.clone() };
    let inf = infer(&result.policy, &p.cluster, &p.script, &rcfg, rewards)?;
    Ok((inf, result.curves))
}

/// `ablate`: full stack against its ablations; writes `ablate.csv`.
pub fn ablate(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    only: Option<&str>,
) -> Result<(), RunError> {
    ensure_out(out)?;
    let p = prepare(cfg, seed)?;
    let variants: Vec<(&str, Variant)> = ablation_variants()
        .into_iter()
        .filter(|(name, _)| only.map(|o| o == *name || *name == "full").unwrap_or(true))
        .collect();
    let results: Vec<Result<(InferOutput, Vec<crate::hdrl::train::EpochStats>), RunError>> =
        variants.par_iter().map(|(_, v)| run_variant(&p, &cfg.rewards, *v)).collect();

    let path = out.join("ablate.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
    writeln!(f, "variant,total_profit,normalized_vs_full,unsafe_routes,final_epoch_profit")
        .map_err(io_err(&path))?;
    let mut full_profit = None;
    let mut rows = Vec::new();
    for ((name, _), result) in variants.iter().zip(results) {
        let (inf, curves) = result?;
        let profit = crate::hdrl::rollout::total_profit(&inf.ledgers);
        let unsafe_routes: u64 = inf.ledgers.iter().map(|l| l.unsafe_routes).sum();
        let last = curves.last().map(|s| s.profit).unwrap_or(0.0);
        if *name == "full" {
            full_profit = Some(profit);
        }
        rows.push((name.to_string(), profit, unsafe_routes, last));
    }
    let denom = full_profit.unwrap_or(1.0);
    for (name, profit, unsafe_routes, last) in rows {
        let norm = if denom != 0.0 { profit / denom } else { f64::NAN };
        writeln!(f, "{name},{profit},{norm},{unsafe_routes},{last}").map_err(io_err(&path))?;
    }
    f.flush().map_err(io_err(&path))?;
    Ok(())
}

/// `smoke`: every rule combination runs a short script without invariant
/// violations; writes `smoke.csv` and fails on any violation.
pub fn smoke(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), RunError> {
    ensure_out(out)?;
    let p = prepare(cfg, seed)?;
    let slots = p.script.horizon.min(100);
    let combos = RuleTriple::all();
    let results: Vec<Result<(String, f64, u64), RunError>> = combos
        .par_iter()
        .map(|&triple| {
            let rcfg = RolloutCfg { rules: triple, ..p.rcfg.clone() };
            let mut env = Env::new(p.cluster.clone(), EnvOptions::default());
            let mut decider = BaselineDecider { kind: BaselineKind::StaticSingle };
            let mut profit = 0.0;
            let mut completions = 0;
            for t in 0..slots {
                let outcome =
                    crate::hdrl::rollout::run_slot(&mut env, p.script.arrivals_at(t), &rcfg, &mut decider)?;
                // every executed state must satisfy the domain invariants
                let errs = env.state.validate(&p.cluster);
                if !errs.is_empty() {
                    return Err(RunError::Sim(SimError::Shape(format!(
                        "{triple}: invariant violation at slot {t}: {}",
                        errs.join("; ")
                    ))));
                }
                profit += outcome.ledger.total_profit();
                completions += outcome.ledger.completions;
            }
            Ok((triple.to_string(), profit, completions))
        })
        .collect();

    let path = out.join("smoke.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
    writeln!(f, "combo,profit,completions").map_err(io_err(&path))?;
    for r in results {
        let (combo, profit, completions) = r?;
        writeln!(f, "{combo},{profit},{completions}").map_err(io_err(&path))?;
    }
    f.flush().map_err(io_err(&path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig::from_str_toml(
            r#"
            [cluster]
            num_edges = 3
            num_services = 3
            edge_mem = 4.0

            [workload]
            horizon = 60
            rate_value = 1.0

            [train]
            epochs = 1
            hidden = 8
            episode_len = 30
            ppo_epochs = 1

            [baselines]
            smt_periods = [1, 10]
            dt_thresholds = [2.0]
            wt_thresholds = [5.0]
        "#,
        )
        .unwrap()
    }

    #[test]
    fn train_then_eval_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        train_cmd(&cfg, 7, dir.path()).unwrap();
        assert!(dir.path().join("checkpoint.bin").exists());
        assert!(dir.path().join("curves.csv").exists());
        eval(&cfg, 7, dir.path(), None, None).unwrap();
        for f in ["ledger.csv", "metrics.csv", "plotdata.json", "latency.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.contains("edgetimer"));
        assert!(metrics.contains("sst"));
        assert!(metrics.contains("smt"));
    }

    #[test]
    fn eval_without_checkpoint_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        let err = eval(&cfg, 7, dir.path(), None, None).unwrap_err();
        assert!(matches!(err, RunError::MissingCheckpoint(_)));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn smoke_runs_all_45_combos() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        smoke(&cfg, 3, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("smoke.csv")).unwrap();
        assert_eq!(text.lines().count(), 46); // header + 45 combos
    }

    #[test]
    fn grid_writes_every_setting() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        grid(&cfg, 3, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
        // 8 smt triples + 1 dt + 1 wt + header
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().filter(|l| l.ends_with(",1")).count() >= 3);
    }
}
