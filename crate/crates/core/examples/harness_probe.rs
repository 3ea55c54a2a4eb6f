//! Probes the desk-scale evaluation harness: baseline profits, an env-aware
//! hand policy as an adaptive-ceiling estimate, and (optionally) a training
//! run.
//!
//!     cargo run --release -p edgetimer --example harness_probe -- [epochs]

use edgetimer::domain::{Layer, SlotLedger, UpdateAction};
use edgetimer::exp::run::prepare;
use edgetimer::exp::ExperimentConfig;
use edgetimer::hdrl::rollout::{
    run_script, BaselineDecider, DecideCtx, FixedDecider, UpdateDecider,
};
use edgetimer::hdrl::train::{infer, train, TrainConfig, Variant};
use edgetimer::rules::RuleInputs;
use edgetimer::simenv::{Env, EnvOptions};
use edgetimer::timescale::{smt_grid_search, trigger_grid_search, BaselineKind};

pub const HARNESS_TOML: &str = r#"
[cluster]
num_edges = 3
num_services = 3
edge_cpu = 4.0
edge_mem = 2.0
service_mem = 2.0
cloud_cpu = 8.0
cloud_mem = 16.0
unit_price_base = 10.0
place_cost_per_km = 2.0
offload_cost_per_km = 1.0
realloc_cost_per_unit = 1.0
link_rate = 5.0
cloud_rtt_slots = 2
region_km = 5.0
cloud_km = 80.0

[workload]
source = "synth"
pattern = "D"
horizon = 1000
rate = "bursty"
rate_value = 0.3
burst_rate = 0.7
phase_len = 160
hot_rotation = 90
hot_weight = 0.75
hot_edge_rotation = 140
warm_previous = true
budget_scale = 4.0
cpu_demand = [0.5, 1.5]
duration = [1.0, 3.0]

[rules]
triple = "TopK-LRP-EA"
top_k = 1
demand_window = 25

[rewards]
epsilon_clamp = 1.0
e = -0.001
budget_delay = 4.0

[train]
epochs = 50
episode_len = 200
hidden = 64
ppo_epochs = 6
minibatches = 8
workers = 3
shared_params = true
hold_bias = 2.5
entropy_coef = 0.001

[baselines]
smt_periods = [1, 10, 50, 100]
dt_thresholds = [1.0, 2.0, 5.0, 10.0, 20.0]
wt_thresholds = [1.0, 5.0, 10.0, 20.0, 50.0]
"#;

/// Env-aware reference policy: updates placement on coverage gaps, routes on
/// load imbalance, allocation on starvation. An estimate of what a
/// well-trained controller could reach, not part of any deliverable claim.
struct HandPolicy {
    coverage_gap: Vec<bool>,
    reroute: Vec<bool>,
    starving: Vec<bool>,
}

impl HandPolicy {
    fn new(n: usize) -> Self {
        Self {
            coverage_gap: vec![false; n],
            reroute: vec![false; n],
            starving: vec![false; n],
        }
    }
}

impl UpdateDecider for HandPolicy {
    fn begin_slot(&mut self, env: &Env, inputs: &RuleInputs) {
        let cfg = env.cfg();
        let n = cfg.num_edges;
        let placed: Vec<bool> = (0..cfg.num_services)
            .map(|s| (0..n).any(|i| env.state.placement[i][s]))
            .collect();
        let gap = (0..cfg.num_services).any(|s| {
            let demanded = (0..n).any(|i| inputs.windowed_demand[i][s] > 0.0);
            demanded && !placed[s]
        });
        for i in 0..n {
            self.coverage_gap[i] = gap;
            // routes that send a placed service's local demand to the cloud
            self.reroute[i] = (0..cfg.num_services).any(|s| {
                inputs.windowed_demand[i][s] > 0.0
                    && placed[s]
                    && env.state.offload[i][s] == cfg.cloud()
            });
            self.starving[i] = (0..cfg.num_services).any(|s| {
                inputs.exec_demand[i][s] > 0.0 && env.state.allocation[i][s] <= 0.0
            });
        }
    }

    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        let bit = match layer {
            Layer::Placement => self.coverage_gap[ctx.edge],
            Layer::Offloading => self.reroute[ctx.edge],
            Layer::Allocation => self.starving[ctx.edge],
        };
        bit || ctx.unsafe_hold
    }
}

fn breakdown(name: &str, ledgers: &[SlotLedger], completed: &[(usize, u64, u64)]) -> f64 {
    let profit: f64 = ledgers.iter().map(|l| l.total_profit()).sum();
    let revenue: f64 = ledgers.iter().map(|l| l.total_revenue()).sum();
    let cost: f64 = ledgers.iter().map(|l| l.total_gated_cost()).sum();
    let mut gated = [0.0f64; 3];
    for l in ledgers {
        for i in 0..l.revenue.len() {
            let a = l.update_bits[i];
            if a.a1 { gated[0] += l.place_cost[i]; }
            if a.a2 { gated[1] += l.offload_cost[i]; }
            if a.a3 { gated[2] += l.alloc_cost[i]; }
        }
    }
    let within = completed.iter().filter(|(_, a, b)| a <= b).count() as f64
        / completed.len().max(1) as f64;
    let mut updates = [0u64; 3];
    for l in ledgers {
        for a in &l.update_bits {
            updates[0] += a.a1 as u64;
            updates[1] += a.a2 as u64;
            updates[2] += a.a3 as u64;
        }
    }
    println!(
        "  {name:<18} profit {profit:>8.0}  rev {revenue:>8.0}  cost {cost:>7.0} (c1 {:.0} c2 {:.0} c3 {:.0})  within {within:.3}  upd {updates:?}",
        gated[0], gated[1], gated[2]
    );
    profit
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = ExperimentConfig::from_str_toml(HARNESS_TOML).unwrap();
    for seed in [11u64, 12, 13] {
        let p = prepare(&cfg, seed).unwrap();
        println!(
            "== seed {seed}: horizon {} events {} workload {:.0} (max rev {:.0})",
            p.script.horizon,
            p.script.events.len(),
            p.script.total_workload(),
            p.script.total_workload() * p.cluster.unit_price_base
        );

        let run_with = |decider: &mut dyn UpdateDecider, name: &str| -> f64 {
            let mut env = Env::new(p.cluster.clone(), EnvOptions::default());
            let (ledgers, _) = run_script(&mut env, &p.script, &p.rcfg, decider, None).unwrap();
            breakdown(name, &ledgers, env.completed_delays())
        };

        let sst = run_with(&mut BaselineDecider { kind: BaselineKind::StaticSingle }, "sst");
        let (periods, _) =
            smt_grid_search(&p.cluster, &p.script, &p.rcfg, &cfg.baselines.smt_periods).unwrap();
        let smt = run_with(
            &mut BaselineDecider { kind: BaselineKind::StaticMulti { periods } },
            &format!("smt{periods:?}"),
        );
        let (dt_th, _) =
            trigger_grid_search(&p.cluster, &p.script, &p.rcfg, &cfg.baselines.dt_thresholds, true)
                .unwrap();
        let dt = run_with(
            &mut BaselineDecider { kind: BaselineKind::DelayTriggered { threshold: dt_th } },
            &format!("dt({dt_th})"),
        );
        let (wt_th, _) = trigger_grid_search(
            &p.cluster,
            &p.script,
            &p.rcfg,
            &cfg.baselines.wt_thresholds,
            false,
        )
        .unwrap();
        let wt = run_with(
            &mut BaselineDecider { kind: BaselineKind::WorkloadTriggered { threshold: wt_th } },
            &format!("wt({wt_th})"),
        );
        run_with(&mut FixedDecider(UpdateAction::ALL_HOLD), "all-hold");
        let hand = run_with(&mut HandPolicy::new(p.cluster.num_edges), "hand-policy");
        {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
            let mut coin = edgetimer::hdrl::rollout::ScriptedDecider(move |_, _, _| {
                rng.random::<f64>() < 0.5
            });
            run_with(&mut coin, "coin-flip");
        }

        let best = sst.max(smt).max(dt).max(wt);
        println!("  best baseline {best:.0}; hand/best = {:.3}", hand / best);

        // delay behavior on the raw pattern (criterion-10 analog)
        let mut cfg_a = cfg.clone();
        cfg_a.workload.pattern = "A".into();
        let pa = prepare(&cfg_a, seed).unwrap();
        let mut env = Env::new(pa.cluster.clone(), EnvOptions::default());
        let mut hp = HandPolicy::new(pa.cluster.num_edges);
        let (ledgers, _) = run_script(&mut env, &pa.script, &pa.rcfg, &mut hp, None).unwrap();
        breakdown("hand on A", &ledgers, env.completed_delays());

        if epochs > 0 {
            let t0 = std::time::Instant::now();
            let tcfg = TrainConfig { epochs, seed: seed * 1000, ..cfg.train.clone() };
            let out = train(&p.cluster, &p.script, &p.rcfg, &cfg.rewards, &tcfg, Variant::Full)
                .unwrap();
            let train_time = t0.elapsed();
            let inf = infer(&out.policy, &p.cluster, &p.script, &p.rcfg, &cfg.rewards).unwrap();
            let et = breakdown(&format!("trained({epochs})"), &inf.ledgers, &inf.completed);
            println!("  train time {train_time:?}; trained/best = {:.3}", et / best);
            for s in out.curves.iter().step_by((epochs / 10).max(1)) {
                println!(
                    "    epoch {:>3}: profit {:>9.0} r=[{:.2} {:.2} {:.2}] tr={:?}",
                    s.epoch,
                    s.profit,
                    s.reward_mean[0],
                    s.reward_mean[1],
                    s.reward_mean[2],
                    s.transitions
                );
            }
        }
    }
}
