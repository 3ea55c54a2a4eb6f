//! Core data model: cluster constants, tasks, decision tensors and the
//! per-slot profit ledger shared by every other module.

use serde::{Deserialize, Serialize};

/// Environment constants: topology, capacities, service catalog and cost
/// coefficients. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of edge servers (N). The cloud is server index `num_edges`.
    pub num_edges: usize,
    /// Number of service types (S).
    pub num_services: usize,
    /// CPU-units per edge server.
    pub edge_cpu: f64,
    /// Memory-units per edge server.
    pub edge_mem: f64,
    /// CPU-units at the cloud.
    pub cloud_cpu: f64,
    /// Memory-units at the cloud.
    pub cloud_mem: f64,
    /// Memory footprint per service, length S.
    pub service_mem_footprint: Vec<f64>,
    /// Symmetric (N+1)x(N+1) distance matrix in km; index N is the cloud.
    pub distance: Vec<Vec<f64>>,
    /// Money per CPU-unit served within budget (base of the unit price).
    pub unit_price_base: f64,
    /// Money per km for installing a service from the nearest provider.
    pub place_cost_per_km: f64,
    /// Money per km for moving an offloading route between servers.
    pub offload_cost_per_km: f64,
    /// Money per CPU-unit of allocation increase.
    pub realloc_cost_per_unit: f64,
    /// Slot length in seconds.
    pub slot_length: f64,
    /// Link rate in km per slot: transmission delay = ceil(distance / link_rate).
    pub link_rate: f64,
    /// Extra round-trip slots added when a task is routed to the cloud.
    pub cloud_rtt_slots: u64,
    /// Fraction of a task's delay budget granted to transmission (u(t) bookkeeping).
    pub tx_budget_frac: f64,
    /// Fraction of a task's delay budget granted to computation (l(t) bookkeeping).
    pub comp_budget_frac: f64,
}

impl ClusterConfig {
    /// Server index of the cloud.
    pub fn cloud(&self) -> usize {
        self.num_edges
    }

    /// Total number of servers including the cloud.
    pub fn num_servers(&self) -> usize {
        self.num_edges + 1
    }

    /// CPU capacity of a server (edge or cloud).
    pub fn server_cpu(&self, server: usize) -> f64 {
        if server == self.cloud() {
            self.cloud_cpu
        } else {
            self.edge_cpu
        }
    }

    /// Unit price of computation for service `s` at slot `t`. Constant by
    /// default; the hook keeps the (s, t) dependence available.
    pub fn unit_price(&self, _service: usize, _slot: u64) -> f64 {
        self.unit_price_base
    }

    /// Transmission delay in slots between two servers.
    pub fn tx_delay_slots(&self, from: usize, to: usize) -> u64 {
        if from == to {
            return 0;
        }
        let base = (self.distance[from][to] / self.link_rate).ceil() as u64;
        if to == self.cloud() || from == self.cloud() {
            base + self.cloud_rtt_slots
        } else {
            base
        }
    }

    /// Default 12-edge / one-cloud instance: 4 CPU-units and 8 memory-units
    /// per edge, 8/16 at the cloud, one-second slots, and relative weights
    /// 25 (price), 0.3/km (placement), 0.1/km (offloading), 0.5/unit
    /// (reallocation). Distances come from a synthetic 5x5 km grid since no
    /// real topology is available.
    pub fn default_instance() -> Self {
        let num_edges = 12;
        let num_services = 12;
        Self {
            num_edges,
            num_services,
            edge_cpu: 4.0,
            edge_mem: 8.0,
            cloud_cpu: 8.0,
            cloud_mem: 16.0,
            service_mem_footprint: vec![2.0; num_services],
            distance: grid_distances(num_edges, 5.0, 50.0),
            unit_price_base: 25.0,
            place_cost_per_km: 0.3,
            offload_cost_per_km: 0.1,
            realloc_cost_per_unit: 0.5,
            slot_length: 1.0,
            link_rate: 5.0,
            cloud_rtt_slots: 2,
            tx_budget_frac: 0.25,
            comp_budget_frac: 0.75,
        }
    }

    /// Returns every violated invariant with its field path; empty means ok.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.num_edges < 2 {
            errs.push("num_edges must be at least 2".into());
        }
        if self.num_services < 1 {
            errs.push("num_services must be at least 1".into());
        }
        for (name, v) in [
            ("edge_cpu", self.edge_cpu),
            ("edge_mem", self.edge_mem),
            ("cloud_cpu", self.cloud_cpu),
            ("cloud_mem", self.cloud_mem),
            ("slot_length", self.slot_length),
            ("link_rate", self.link_rate),
        ] {
            if !(v > 0.0) {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.service_mem_footprint.len() != self.num_services {
            errs.push(format!(
                "service_mem_footprint has {} entries, expected {}",
                self.service_mem_footprint.len(),
                self.num_services
            ));
        }
        for (s, &m) in self.service_mem_footprint.iter().enumerate() {
            if !(m > 0.0) {
                errs.push(format!("service_mem_footprint[{s}] must be positive"));
            }
        }
        let n = self.num_servers();
        if self.distance.len() != n || self.distance.iter().any(|row| row.len() != n) {
            errs.push(format!("distance must be a {n}x{n} matrix"));
        } else {
            for i in 0..n {
                if self.distance[i][i] != 0.0 {
                    errs.push(format!("distance[{i}][{i}] must be zero"));
                }
                for j in (i + 1)..n {
                    if self.distance[i][j] != self.distance[j][i] {
                        errs.push(format!("distance[{i}][{j}] != distance[{j}][{i}]"));
                    }
                    if self.distance[i][j] < 0.0 {
                        errs.push(format!("distance[{i}][{j}] must be non-negative"));
                    }
                }
            }
        }
        if !(self.tx_budget_frac > 0.0 && self.tx_budget_frac <= 1.0) {
            errs.push("tx_budget_frac must be in (0, 1]".into());
        }
        if !(self.comp_budget_frac > 0.0 && self.comp_budget_frac <= 1.0) {
            errs.push("comp_budget_frac must be in (0, 1]".into());
        }
        errs
    }
}

/// Deterministic synthetic topology: `n` edges on a grid spanning a square
/// region of `region_km` per side, cloud at `cloud_km` from every edge.
pub fn grid_distances(n: usize, region_km: f64, cloud_km: f64) -> Vec<Vec<f64>> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let r = i / cols;
            let c = i % cols;
            let x = if cols > 1 {
                region_km * c as f64 / (cols - 1) as f64
            } else {
                0.0
            };
            let y = if rows > 1 {
                region_km * r as f64 / (rows - 1) as f64
            } else {
                0.0
            };
            (x, y)
        })
        .collect();
    let mut d = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            let dx = pos[i].0 - pos[j].0;
            let dy = pos[i].1 - pos[j].1;
            // round to 1/64 km so sums stay exact in f64
            d[i][j] = ((dx * dx + dy * dy).sqrt() * 64.0).round() / 64.0;
        }
        d[i][n] = cloud_km;
        d[n][i] = cloud_km;
    }
    d
}

/// One task request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    /// Service index, < S.
    pub service: usize,
    pub arrival_slot: u64,
    /// CPU-units requested.
    pub cpu_demand: f64,
    /// CPU-unit-seconds of processing.
    pub workload: f64,
    /// Maximum tolerable total delay in slots.
    pub delay_budget: u64,
    pub origin_edge: usize,
}

/// Per-edge binary update/hold triple: one bit per scheduling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateAction {
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
}

impl UpdateAction {
    pub const ALL_UPDATE: UpdateAction = UpdateAction { a1: true, a2: true, a3: true };
    pub const ALL_HOLD: UpdateAction = UpdateAction { a1: false, a2: false, a3: false };

    pub fn layer(&self, layer: Layer) -> bool {
        match layer {
            Layer::Placement => self.a1,
            Layer::Offloading => self.a2,
            Layer::Allocation => self.a3,
        }
    }

    pub fn set_layer(&mut self, layer: Layer, bit: bool) {
        match layer {
            Layer::Placement => self.a1 = bit,
            Layer::Offloading => self.a2 = bit,
            Layer::Allocation => self.a3 = bit,
        }
    }
}

/// The three scheduling layers, ordered top-down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    /// Layer-1: edge-cloud service placement (x).
    Placement,
    /// Layer-2: edge-edge task offloading (y).
    Offloading,
    /// Layer-3: intra-edge resource allocation (z).
    Allocation,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Placement, Layer::Offloading, Layer::Allocation];

    pub fn index(&self) -> usize {
        match self {
            Layer::Placement => 0,
            Layer::Offloading => 1,
            Layer::Allocation => 2,
        }
    }
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Layer::Placement => "placement",
            Layer::Offloading => "offloading",
            Layer::Allocation => "allocation",
        };
        write!(f, "{name}")
    }
}

/// Current decision tensors plus the slot-(t-1) copies the cost model needs.
///
/// `offload[i][s]` is the destination server for service-`s` tasks arriving
/// at edge `i`; all same-service tasks of one edge share one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingState {
    pub placement: Vec<Vec<bool>>,
    pub offload: Vec<Vec<usize>>,
    pub allocation: Vec<Vec<f64>>,
    pub prev_placement: Vec<Vec<bool>>,
    pub prev_offload: Vec<Vec<usize>>,
    pub prev_allocation: Vec<Vec<f64>>,
}

impl SchedulingState {
    /// Fresh state: nothing placed, every route pointing at the cloud (the
    /// only always-feasible destination), zero allocation.
    pub fn initial(cfg: &ClusterConfig) -> Self {
        let n = cfg.num_edges;
        let s = cfg.num_services;
        let placement = vec![vec![false; s]; n];
        let offload = vec![vec![cfg.cloud(); s]; n];
        let allocation = vec![vec![0.0; s]; n];
        Self {
            prev_placement: placement.clone(),
            prev_offload: offload.clone(),
            prev_allocation: allocation.clone(),
            placement,
            offload,
            allocation,
        }
    }

    /// Returns every violated state invariant; empty means the state is valid.
    pub fn validate(&self, cfg: &ClusterConfig) -> Vec<String> {
        let mut errs = Vec::new();
        for i in 0..cfg.num_edges {
            let mem: f64 = (0..cfg.num_services)
                .filter(|&s| self.placement[i][s])
                .map(|s| cfg.service_mem_footprint[s])
                .sum();
            if mem > cfg.edge_mem + 1e-9 {
                errs.push(format!(
                    "placement[{i}]: memory {mem} exceeds edge_mem {}",
                    cfg.edge_mem
                ));
            }
            let cpu: f64 = self.allocation[i].iter().sum();
            if cpu > cfg.edge_cpu + 1e-9 {
                errs.push(format!(
                    "allocation[{i}]: total {cpu} exceeds edge_cpu {}",
                    cfg.edge_cpu
                ));
            }
            for s in 0..cfg.num_services {
                if self.allocation[i][s] < 0.0 {
                    errs.push(format!("allocation[{i}][{s}] is negative"));
                }
                let dest = self.offload[i][s];
                if dest > cfg.cloud() {
                    errs.push(format!("offload[{i}][{s}] = {dest} is not a server"));
                } else if dest != cfg.cloud() && !self.placement[dest][s] {
                    errs.push(format!(
                        "offload[{i}][{s}] routes to edge {dest} which lacks service {s}"
                    ));
                }
            }
        }
        errs
    }
}

/// Per-slot revenue/cost ledger. Money fields follow the profit identity
/// `profit_i = g_i - a1*c1_i - a2*c2_i - a3*c3_i` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotLedger {
    pub slot: u64,
    /// g_i: revenue per edge.
    pub revenue: Vec<f64>,
    /// c1_i: raw placement cost per edge.
    pub place_cost: Vec<f64>,
    /// c2_i: raw offloading cost per edge.
    pub offload_cost: Vec<f64>,
    /// c3_i: raw allocation cost per edge.
    pub alloc_cost: Vec<f64>,
    /// Executed update bits per edge.
    pub update_bits: Vec<UpdateAction>,
    /// Gated profit per edge.
    pub profit: Vec<f64>,
    /// Workload completed within budget, credited to the selling edge.
    pub served_workload: Vec<f64>,
    /// Workload newly past its delay budget this slot, by origin edge.
    pub violated_workload: Vec<f64>,
    /// d(t): queued demand whose service is placed on at least one edge.
    pub covered_demand: f64,
    /// u(t): demand whose offload finished within its transmission budget.
    pub offload_in_budget: f64,
    /// v(t): population variance of per-edge execution backlog.
    pub load_variance: f64,
    /// l(t): demand completed within its computation budget.
    pub comp_in_budget: f64,
    /// Queued demand at each edge not covered by any edge placement.
    pub unserved_demand: Vec<f64>,
    /// Mean age in slots of live tasks originating at each edge.
    pub mean_delay_origin: Vec<f64>,
    /// Mean age in slots of live tasks executing at each edge.
    pub mean_delay_exec: Vec<f64>,
    /// Remaining workload in each edge's execution queues.
    pub exec_backlog: Vec<f64>,
    /// Remaining workload waiting at each edge for offloading.
    pub origin_backlog: Vec<f64>,
    /// Workload completed within budget while executing at each edge.
    pub undelayed_workload: Vec<f64>,
    /// Routes that pointed at a server lacking the service (non-strict mode).
    pub unsafe_routes: u64,
    pub completions: u64,
    pub arrivals: u64,
}

impl SlotLedger {
    pub fn zero(slot: u64, num_edges: usize) -> Self {
        Self {
            slot,
            revenue: vec![0.0; num_edges],
            place_cost: vec![0.0; num_edges],
            offload_cost: vec![0.0; num_edges],
            alloc_cost: vec![0.0; num_edges],
            update_bits: vec![UpdateAction::default(); num_edges],
            profit: vec![0.0; num_edges],
            served_workload: vec![0.0; num_edges],
            violated_workload: vec![0.0; num_edges],
            covered_demand: 0.0,
            offload_in_budget: 0.0,
            load_variance: 0.0,
            comp_in_budget: 0.0,
            unserved_demand: vec![0.0; num_edges],
            mean_delay_origin: vec![0.0; num_edges],
            mean_delay_exec: vec![0.0; num_edges],
            exec_backlog: vec![0.0; num_edges],
            origin_backlog: vec![0.0; num_edges],
            undelayed_workload: vec![0.0; num_edges],
            unsafe_routes: 0,
            completions: 0,
            arrivals: 0,
        }
    }

    /// Total gated profit over all edges this slot.
    pub fn total_profit(&self) -> f64 {
        self.profit.iter().sum()
    }

    pub fn total_revenue(&self) -> f64 {
        self.revenue.iter().sum()
    }

    /// Gated update cost over all edges this slot.
    pub fn total_gated_cost(&self) -> f64 {
        (0..self.revenue.len())
            .map(|i| {
                let a = &self.update_bits[i];
                let mut c = 0.0;
                if a.a1 {
                    c += self.place_cost[i];
                }
                if a.a2 {
                    c += self.offload_cost[i];
                }
                if a.a3 {
                    c += self.alloc_cost[i];
                }
                c
            })
            .sum()
    }
}
