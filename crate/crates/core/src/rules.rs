//! Built-in candidate-decision generators: 3 placement x 5 offloading x 3
//! allocation rules, invoked only when a layer's gate says "update".
//!
//! The offloading rule semantics follow the container-orchestrator scoring
//! conventions the acronyms come from: MRP packs onto the busiest feasible
//! server, LRP spreads onto the least busy, RLP spreads by per-service
//! backlog, SSP balances same-service task counts, RCRP targets a
//! configurable utilization ratio. Ties always break toward the lowest
//! server index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ClusterConfig;
use crate::simenv::Env;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("unknown rule combination '{0}', expected e.g. AM-MRP-EA")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementRule {
    /// Horizontal autoscaling on windowed per-service utilization.
    Hpa,
    /// The K most-demanded services per edge, under memory capacity.
    TopK,
    /// Each demanded service follows the edge requesting it most.
    AlwaysMigrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffloadRule {
    MostRequested,
    LeastRequested,
    RequestedToLimit,
    SameServiceSpread,
    RequestedToCapacityRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationRule {
    ProportionalFairness,
    RoundRobin,
    EqualAllocation,
}

impl PlacementRule {
    pub const ALL: [PlacementRule; 3] =
        [PlacementRule::Hpa, PlacementRule::TopK, PlacementRule::AlwaysMigrate];

    pub fn code(&self) -> &'static str {
        match self {
            PlacementRule::Hpa => "HPA",
            PlacementRule::TopK => "TopK",
            PlacementRule::AlwaysMigrate => "AM",
        }
    }
}

impl OffloadRule {
    pub const ALL: [OffloadRule; 5] = [
        OffloadRule::MostRequested,
        OffloadRule::LeastRequested,
        OffloadRule::RequestedToLimit,
        OffloadRule::SameServiceSpread,
        OffloadRule::RequestedToCapacityRatio,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            OffloadRule::MostRequested => "MRP",
            OffloadRule::LeastRequested => "LRP",
            OffloadRule::RequestedToLimit => "RLP",
            OffloadRule::SameServiceSpread => "SSP",
            OffloadRule::RequestedToCapacityRatio => "RCRP",
        }
    }
}

impl AllocationRule {
    pub const ALL: [AllocationRule; 3] = [
        AllocationRule::ProportionalFairness,
        AllocationRule::RoundRobin,
        AllocationRule::EqualAllocation,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            AllocationRule::ProportionalFairness => "PF",
            AllocationRule::RoundRobin => "RR",
            AllocationRule::EqualAllocation => "EA",
        }
    }
}

/// One of the 45 rule combinations, e.g. `AM-MRP-EA`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTriple {
    pub placement: PlacementRule,
    pub offload: OffloadRule,
    pub allocation: AllocationRule,
}

impl RuleTriple {
    /// All 45 combinations in (placement, offload, allocation) order.
    pub fn all() -> Vec<RuleTriple> {
        let mut out = Vec::with_capacity(45);
        for p in PlacementRule::ALL {
            for o in OffloadRule::ALL {
                for a in AllocationRule::ALL {
                    out.push(RuleTriple { placement: p, offload: o, allocation: a });
                }
            }
        }
        out
    }
}

impl std::fmt::Display for RuleTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.placement.code(), self.offload.code(), self.allocation.code())
    }
}

impl std::str::FromStr for RuleTriple {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return Err(RuleError::Parse(s.into()));
        }
        let placement = match parts[0].to_ascii_uppercase().as_str() {
            "HPA" => PlacementRule::Hpa,
            "TOPK" => PlacementRule::TopK,
            "AM" => PlacementRule::AlwaysMigrate,
            _ => return Err(RuleError::Parse(s.into())),
        };
        let offload = match parts[1].to_ascii_uppercase().as_str() {
            "MRP" => OffloadRule::MostRequested,
            "LRP" => OffloadRule::LeastRequested,
            "RLP" => OffloadRule::RequestedToLimit,
            "SSP" => OffloadRule::SameServiceSpread,
            "RCRP" => OffloadRule::RequestedToCapacityRatio,
            _ => return Err(RuleError::Parse(s.into())),
        };
        let allocation = match parts[2].to_ascii_uppercase().as_str() {
            "PF" => AllocationRule::ProportionalFairness,
            "RR" => AllocationRule::RoundRobin,
            "EA" => AllocationRule::EqualAllocation,
            _ => return Err(RuleError::Parse(s.into())),
        };
        Ok(RuleTriple { placement, offload, allocation })
    }
}

/// Tunables of the built-in rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleParams {
    /// HPA scale-up threshold on windowed utilization.
    pub hpa_up: f64,
    /// HPA scale-down threshold.
    pub hpa_down: f64,
    /// Top-K cut; defaults to floor(edge_mem / mean footprint) when absent.
    pub top_k: Option<usize>,
    /// RCRP target utilization ratio in [0, 1).
    pub rcrp_target: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self { hpa_up: 0.8, hpa_down: 0.3, top_k: None, rcrp_target: 0.8 }
    }
}

/// Snapshot of the statistics the rules read, taken before any of the
/// slot's decisions.
#[derive(Debug, Clone)]
pub struct RuleInputs {
    /// Trailing-window arrived workload per (edge, service).
    pub windowed_demand: Vec<Vec<f64>>,
    /// Slots the window actually covers.
    pub window_slots: usize,
    /// Remaining execution workload per server (cloud last).
    pub exec_backlog: Vec<f64>,
    /// Queued task count per (server, service).
    pub exec_counts: Vec<Vec<usize>>,
    /// Remaining execution workload per (server, service).
    pub exec_demand: Vec<Vec<f64>>,
}

impl RuleInputs {
    pub fn from_env(env: &Env) -> Self {
        let cfg = env.cfg();
        let servers = cfg.num_servers();
        let exec_backlog: Vec<f64> = (0..servers).map(|i| env.exec_backlog(i)).collect();
        let exec_demand: Vec<Vec<f64>> =
            (0..servers).map(|i| env.exec_demand_by_service(i)).collect();
        let exec_counts: Vec<Vec<usize>> = (0..servers)
            .map(|i| (0..cfg.num_services).map(|s| env.exec_count(i, s)).collect())
            .collect();
        Self {
            windowed_demand: env.windowed_demand(),
            window_slots: env.options().demand_window,
            exec_backlog,
            exec_counts,
            exec_demand,
        }
    }

    fn total_demand(&self) -> f64 {
        self.windowed_demand.iter().flatten().sum()
    }

    fn service_demand(&self, s: usize) -> f64 {
        self.windowed_demand.iter().map(|row| row[s]).sum()
    }
}

/// Candidate placement. Always satisfies the per-edge memory invariant;
/// with no demand signal the current placement is kept unchanged.
pub fn place(
    rule: PlacementRule,
    cfg: &ClusterConfig,
    current: &[Vec<bool>],
    params: &RuleParams,
    inputs: &RuleInputs,
) -> Vec<Vec<bool>> {
    if inputs.total_demand() == 0.0 {
        return current.to_vec();
    }
    match rule {
        PlacementRule::Hpa => place_hpa(cfg, current, params, inputs),
        PlacementRule::TopK => place_topk(cfg, current, params, inputs),
        PlacementRule::AlwaysMigrate => place_am(cfg, current, inputs),
    }
}

fn used_mem(cfg: &ClusterConfig, row: &[bool]) -> f64 {
    row.iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(s, _)| cfg.service_mem_footprint[s])
        .sum()
}

fn place_hpa(
    cfg: &ClusterConfig,
    current: &[Vec<bool>],
    params: &RuleParams,
    inputs: &RuleInputs,
) -> Vec<Vec<bool>> {
    let mut placement = current.to_vec();
    let horizon = inputs.window_slots.max(1) as f64 * cfg.slot_length;
    for s in 0..cfg.num_services {
        let demand = inputs.service_demand(s);
        let replicas = (0..cfg.num_edges).filter(|&i| placement[i][s]).count();
        let util = demand / (replicas.max(1) as f64 * cfg.edge_cpu * horizon);
        if util > params.hpa_up {
            // scale up onto the highest-demand edge that lacks the service
            let mut candidates: Vec<usize> = (0..cfg.num_edges).filter(|&i| !placement[i][s]).collect();
            candidates.sort_by(|&a, &b| {
                inputs.windowed_demand[b][s]
                    .partial_cmp(&inputs.windowed_demand[a][s])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for i in candidates {
                if used_mem(cfg, &placement[i]) + cfg.service_mem_footprint[s] <= cfg.edge_mem {
                    placement[i][s] = true;
                    break;
                }
            }
        } else if util < params.hpa_down && replicas > 0 {
            // scale down from the lowest-demand holder
            let victim = (0..cfg.num_edges)
                .filter(|&i| placement[i][s])
                .min_by(|&a, &b| {
                    inputs.windowed_demand[a][s]
                        .partial_cmp(&inputs.windowed_demand[b][s])
                        .unwrap()
                        .then(a.cmp(&b))
                });
            if let Some(i) = victim {
                placement[i][s] = false;
            }
        }
    }
    placement
}

fn place_topk(
    cfg: &ClusterConfig,
    current: &[Vec<bool>],
    params: &RuleParams,
    inputs: &RuleInputs,
) -> Vec<Vec<bool>> {
    let mean_footprint =
        cfg.service_mem_footprint.iter().sum::<f64>() / cfg.num_services as f64;
    let k = params.top_k.unwrap_or((cfg.edge_mem / mean_footprint).floor() as usize).max(1);
    let mut placement = vec![vec![false; cfg.num_services]; cfg.num_edges];
    for i in 0..cfg.num_edges {
        if inputs.windowed_demand[i].iter().all(|&d| d == 0.0) {
            placement[i] = current[i].clone();
            continue;
        }
        let mut ranked: Vec<usize> =
            (0..cfg.num_services).filter(|&s| inputs.windowed_demand[i][s] > 0.0).collect();
        ranked.sort_by(|&a, &b| {
            inputs.windowed_demand[i][b]
                .partial_cmp(&inputs.windowed_demand[i][a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut mem = 0.0;
        for s in ranked.into_iter().take(k) {
            if mem + cfg.service_mem_footprint[s] <= cfg.edge_mem {
                placement[i][s] = true;
                mem += cfg.service_mem_footprint[s];
            }
        }
    }
    placement
}

fn place_am(cfg: &ClusterConfig, current: &[Vec<bool>], inputs: &RuleInputs) -> Vec<Vec<bool>> {
    let mut placement = vec![vec![false; cfg.num_services]; cfg.num_edges];
    let mut mem = vec![0.0; cfg.num_edges];
    // demanded services first, in descending total demand
    let mut demanded: Vec<usize> =
        (0..cfg.num_services).filter(|&s| inputs.service_demand(s) > 0.0).collect();
    demanded.sort_by(|&a, &b| {
        inputs.service_demand(b).partial_cmp(&inputs.service_demand(a)).unwrap().then(a.cmp(&b))
    });
    for s in demanded {
        let mut edges: Vec<usize> = (0..cfg.num_edges).collect();
        edges.sort_by(|&a, &b| {
            inputs.windowed_demand[b][s]
                .partial_cmp(&inputs.windowed_demand[a][s])
                .unwrap()
                .then(a.cmp(&b))
        });
        for i in edges {
            if mem[i] + cfg.service_mem_footprint[s] <= cfg.edge_mem {
                placement[i][s] = true;
                mem[i] += cfg.service_mem_footprint[s];
                break;
            }
        }
    }
    // keep idle services where they were when memory still allows
    for i in 0..cfg.num_edges {
        for s in 0..cfg.num_services {
            if current[i][s]
                && !placement[i][s]
                && inputs.service_demand(s) == 0.0
                && mem[i] + cfg.service_mem_footprint[s] <= cfg.edge_mem
            {
                placement[i][s] = true;
                mem[i] += cfg.service_mem_footprint[s];
            }
        }
    }
    placement
}

/// Candidate routing against `placement`. Every (edge, service) pair gets a
/// feasible destination; the cloud is the fallback when no edge holds the
/// service.
pub fn offload(
    rule: OffloadRule,
    cfg: &ClusterConfig,
    placement: &[Vec<bool>],
    params: &RuleParams,
    inputs: &RuleInputs,
) -> Vec<Vec<usize>> {
    let util = |j: usize| inputs.exec_backlog[j] / cfg.server_cpu(j);
    let mut routes = vec![vec![cfg.cloud(); cfg.num_services]; cfg.num_edges];
    for s in 0..cfg.num_services {
        let feasible: Vec<usize> = (0..cfg.num_edges).filter(|&j| placement[j][s]).collect();
        if feasible.is_empty() {
            continue; // cloud fallback already set
        }
        // scores are shared by every origin edge in this model
        let best = match rule {
            OffloadRule::MostRequested => select(&feasible, |j| util(j), true),
            OffloadRule::LeastRequested => select(&feasible, |j| util(j), false),
            OffloadRule::RequestedToLimit => {
                select(&feasible, |j| inputs.exec_demand[j][s] / cfg.server_cpu(j), false)
            }
            OffloadRule::SameServiceSpread => {
                select(&feasible, |j| inputs.exec_counts[j][s] as f64, false)
            }
            OffloadRule::RequestedToCapacityRatio => select(
                &feasible,
                |j| {
                    let u = util(j) / (1.0 + util(j));
                    1.0 - (u - params.rcrp_target).abs()
                },
                true,
            ),
        };
        for edge in 0..cfg.num_edges {
            routes[edge][s] = best;
        }
    }
    routes
}

fn select<F: Fn(usize) -> f64>(candidates: &[usize], score: F, maximize: bool) -> usize {
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &j in &candidates[1..] {
        let v = score(j);
        let better = if maximize { v > best_score } else { v < best_score };
        if better {
            best = j;
            best_score = v;
        }
    }
    best
}

/// Candidate allocation from each edge's queued per-service demand. The
/// per-edge total never exceeds `edge_cpu`; edges without demand get zeros.
pub fn allocate(
    rule: AllocationRule,
    cfg: &ClusterConfig,
    inputs: &RuleInputs,
) -> Vec<Vec<f64>> {
    (0..cfg.num_edges)
        .map(|i| allocate_edge(rule, cfg, &inputs.exec_demand[i]))
        .collect()
}

/// Allocation for one edge given queued remaining workload per service.
pub fn allocate_edge(rule: AllocationRule, cfg: &ClusterConfig, demand: &[f64]) -> Vec<f64> {
    let s_count = demand.len();
    let demanding: Vec<usize> = (0..s_count).filter(|&s| demand[s] > 0.0).collect();
    let mut z = vec![0.0; s_count];
    if demanding.is_empty() {
        return z;
    }
    match rule {
        AllocationRule::EqualAllocation => {
            let share = cfg.edge_cpu / demanding.len() as f64;
            for &s in &demanding {
                z[s] = share;
            }
        }
        AllocationRule::ProportionalFairness => {
            // log-utility waterfilling capped by what a service can consume
            // in one slot
            let caps: Vec<f64> = demanding.iter().map(|&s| demand[s] / cfg.slot_length).collect();
            let fills = waterfill(&caps, cfg.edge_cpu);
            for (k, &s) in demanding.iter().enumerate() {
                z[s] = fills[k];
            }
        }
        AllocationRule::RoundRobin => {
            let caps: Vec<f64> = demanding.iter().map(|&s| demand[s] / cfg.slot_length).collect();
            let mut left = cfg.edge_cpu.floor() as u64;
            let mut k = 0;
            let mut stalled = 0;
            while left > 0 && stalled < demanding.len() {
                let s = demanding[k % demanding.len()];
                if z[s] + 1.0 <= caps[k % demanding.len()].ceil() {
                    z[s] += 1.0;
                    left -= 1;
                    stalled = 0;
                } else {
                    stalled += 1;
                }
                k += 1;
            }
        }
    }
    z
}

/// Equal-priority waterfilling: raise a common level until the budget is
/// spent, never exceeding a component's cap.
fn waterfill(caps: &[f64], budget: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[a].partial_cmp(&caps[b]).unwrap());
    let mut fills = vec![0.0; caps.len()];
    let mut remaining = budget;
    let mut active = caps.len();
    for (rank, &idx) in order.iter().enumerate() {
        let level = remaining / active as f64;
        if caps[idx] <= level {
            fills[idx] = caps[idx];
            remaining -= caps[idx];
            active -= 1;
        } else {
            // every remaining component takes the common level
            for &rest in &order[rank..] {
                fills[rest] = level;
            }
            return fills;
        }
    }
    fills
}
