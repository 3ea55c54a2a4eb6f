//! Discrete-time environment: advances one slot given executed decisions,
//! moves workload through queues and fills the per-slot ledger.
//!
//! Slot phasing: flights advance, origin queues route, servers serve,
//! violations are marked, then the slot's arrivals enter their origin
//! queues. A task arriving at slot t is therefore routed (and possibly
//! served) from slot t+1 onward: with workload w and a local allocation of
//! z CPU-units it completes at slot t + ceil(w / z).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClusterConfig, SchedulingState, SlotLedger, Task, UpdateAction};

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("decision tensor has wrong shape: {0}")]
    Shape(String),
    #[error("edge {edge}: allocation total {total} exceeds capacity {cap}")]
    CpuOverflow { edge: usize, total: f64, cap: f64 },
    #[error("edge {edge}: placed memory {used} exceeds capacity {cap}")]
    MemOverflow { edge: usize, used: f64, cap: f64 },
    #[error("offload[{edge}][{service}] routes to server {dest} which lacks the service")]
    InfeasibleRoute { edge: usize, service: usize, dest: usize },
    #[error("offload[{edge}][{service}] = {dest} is not a server index")]
    UnknownServer { edge: usize, service: usize, dest: usize },
    #[error("task {id} arrives at slot {task_slot} but the environment is at slot {env_slot}")]
    ArrivalSlot { id: u64, task_slot: u64, env_slot: u64 },
    #[error("task {id} references service {service} or edge {edge} outside the config")]
    BadTask { id: u64, service: usize, edge: usize },
}

/// Executed (already gated) decision tensors for one slot.
#[derive(Debug, Clone)]
pub struct Decisions {
    pub placement: Vec<Vec<bool>>,
    pub offload: Vec<Vec<usize>>,
    pub allocation: Vec<Vec<f64>>,
    /// The update bits that produced the tensors; gates the charged costs.
    pub bits: Vec<UpdateAction>,
}

impl Decisions {
    /// All-update decisions that simply keep the given tensors.
    pub fn from_state(state: &SchedulingState, bits: Vec<UpdateAction>) -> Self {
        Self {
            placement: state.placement.clone(),
            offload: state.offload.clone(),
            allocation: state.allocation.clone(),
            bits,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvOptions {
    /// Hard-error on infeasible routes (they must be masked upstream). When
    /// false, affected tasks simply stay unoffloaded and are counted.
    pub strict: bool,
    /// Trailing demand-statistics window in slots.
    pub demand_window: usize,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self { strict: true, demand_window: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Origin,
    Flight { dest: usize, remaining: u64 },
    Exec(usize),
    Done,
}

#[derive(Debug, Clone)]
struct LiveTask {
    task: Task,
    remaining: f64,
    /// CPU-unit-slots consumed so far.
    consumed_units: f64,
    loc: Loc,
    /// Slots spent in flight.
    tx_delay: u64,
    exec_join: Option<u64>,
    violated: bool,
}

impl LiveTask {
    fn age(&self, slot: u64) -> u64 {
        slot.saturating_sub(self.task.arrival_slot)
    }
}

/// Cumulative workload partition; `arrived = completed + violated + queued`
/// holds exactly at every slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    pub arrived: f64,
    /// Finished within budget.
    pub completed: f64,
    /// Finished late, plus live tasks already past budget.
    pub violated: f64,
    /// Live tasks still within budget.
    pub queued: f64,
}

/// One environment instance; single-writer, deterministic replay.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: ClusterConfig,
    pub state: SchedulingState,
    slot: u64,
    tasks: Vec<LiveTask>,
    origin_queues: Vec<VecDeque<usize>>,
    flights: Vec<usize>,
    exec_queues: Vec<Vec<VecDeque<usize>>>,
    demand_window: VecDeque<Vec<Vec<f64>>>,
    last_arrivals: Vec<Vec<f64>>,
    cum_arrived: f64,
    cum_completed_within: f64,
    cum_completed_late: f64,
    completed_log: Vec<(usize, u64, u64)>,
    options: EnvOptions,
}

impl Env {
    pub fn new(cfg: ClusterConfig, options: EnvOptions) -> Self {
        let n = cfg.num_edges;
        let s = cfg.num_services;
        let servers = cfg.num_servers();
        Self {
            state: SchedulingState::initial(&cfg),
            slot: 0,
            tasks: Vec::new(),
            origin_queues: vec![VecDeque::new(); n],
            flights: Vec::new(),
            exec_queues: vec![vec![VecDeque::new(); s]; servers],
            demand_window: VecDeque::new(),
            last_arrivals: vec![vec![0.0; s]; n],
            cum_arrived: 0.0,
            cum_completed_within: 0.0,
            cum_completed_late: 0.0,
            completed_log: Vec::new(),
            options,
            cfg,
        }
    }

    pub fn cfg(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn options(&self) -> &EnvOptions {
        &self.options
    }

    /// Advance one slot under `decisions`, enqueueing `arrivals` at the end.
    pub fn step(&mut self, decisions: &Decisions, arrivals: &[Task]) -> Result<SlotLedger, SimError> {
        let n = self.cfg.num_edges;
        let mut ledger = SlotLedger::zero(self.slot, n);
        let stuck = self.validate_decisions(decisions, &mut ledger)?;

        // Eqs. 2-4 costs against the slot-(t-1) tensors, then apply.
        for i in 0..n {
            ledger.place_cost[i] =
                placement_cost(&self.cfg, i, &decisions.placement[i], &self.state.placement);
            ledger.offload_cost[i] =
                offloading_cost(&self.cfg, &decisions.offload[i], &self.state.offload[i]);
            ledger.alloc_cost[i] =
                allocation_cost(&self.cfg, &decisions.allocation[i], &self.state.allocation[i]);
            ledger.update_bits[i] = decisions.bits[i];
        }
        self.state.prev_placement = std::mem::replace(&mut self.state.placement, decisions.placement.clone());
        self.state.prev_offload = std::mem::replace(&mut self.state.offload, decisions.offload.clone());
        self.state.prev_allocation =
            std::mem::replace(&mut self.state.allocation, decisions.allocation.clone());

        self.advance_flights(&mut ledger);
        self.route_origin_queues(&stuck, &mut ledger);
        let revenue_units = self.serve(&mut ledger);
        self.mark_violations(&mut ledger);
        self.enqueue_arrivals(arrivals, &mut ledger)?;
        self.fill_signals(&revenue_units, &mut ledger);

        self.slot += 1;
        Ok(ledger)
    }

    fn validate_decisions(
        &self,
        d: &Decisions,
        ledger: &mut SlotLedger,
    ) -> Result<Vec<(usize, usize)>, SimError> {
        let n = self.cfg.num_edges;
        let s = self.cfg.num_services;
        if d.placement.len() != n
            || d.offload.len() != n
            || d.allocation.len() != n
            || d.bits.len() != n
            || d.placement.iter().any(|r| r.len() != s)
            || d.offload.iter().any(|r| r.len() != s)
            || d.allocation.iter().any(|r| r.len() != s)
        {
            return Err(SimError::Shape(format!("expected {n} edges x {s} services")));
        }
        let mut stuck = Vec::new();
        for i in 0..n {
            let mem: f64 = (0..s)
                .filter(|&k| d.placement[i][k])
                .map(|k| self.cfg.service_mem_footprint[k])
                .sum();
            if mem > self.cfg.edge_mem + EPS {
                return Err(SimError::MemOverflow { edge: i, used: mem, cap: self.cfg.edge_mem });
            }
            let total: f64 = d.allocation[i].iter().sum();
            if total > self.cfg.edge_cpu + EPS {
                return Err(SimError::CpuOverflow { edge: i, total, cap: self.cfg.edge_cpu });
            }
            for k in 0..s {
                let dest = d.offload[i][k];
                if dest > self.cfg.cloud() {
                    return Err(SimError::UnknownServer { edge: i, service: k, dest });
                }
                if dest != self.cfg.cloud() && !d.placement[dest][k] {
                    if self.options.strict {
                        return Err(SimError::InfeasibleRoute { edge: i, service: k, dest });
                    }
                    ledger.unsafe_routes += 1;
                    stuck.push((i, k));
                }
            }
        }
        Ok(stuck)
    }

    fn advance_flights(&mut self, ledger: &mut SlotLedger) {
        let flights = std::mem::take(&mut self.flights);
        let mut still_flying = Vec::with_capacity(flights.len());
        for &idx in &flights {
            let (dest, remaining) = match self.tasks[idx].loc {
                Loc::Flight { dest, remaining } => (dest, remaining),
                _ => unreachable!("flight list holds only flying tasks"),
            };
            self.tasks[idx].tx_delay += 1;
            if remaining <= 1 {
                self.join_exec(idx, dest, ledger);
            } else {
                self.tasks[idx].loc = Loc::Flight { dest, remaining: remaining - 1 };
                still_flying.push(idx);
            }
        }
        self.flights = still_flying;
    }

    fn join_exec(&mut self, idx: usize, dest: usize, ledger: &mut SlotLedger) {
        let t = &mut self.tasks[idx];
        t.loc = Loc::Exec(dest);
        t.exec_join = Some(self.slot);
        let tx_budget = (self.cfg.tx_budget_frac * t.task.delay_budget as f64).ceil() as u64;
        if t.tx_delay <= tx_budget {
            ledger.offload_in_budget += t.task.workload;
        }
        let service = t.task.service;
        self.exec_queues[dest][service].push_back(idx);
    }

    fn route_origin_queues(&mut self, stuck: &[(usize, usize)], ledger: &mut SlotLedger) {
        for edge in 0..self.cfg.num_edges {
            let pending: Vec<usize> = self.origin_queues[edge].drain(..).collect();
            for idx in pending {
                let service = self.tasks[idx].task.service;
                if stuck.contains(&(edge, service)) {
                    self.origin_queues[edge].push_back(idx);
                    continue;
                }
                let dest = self.state.offload[edge][service];
                let delay = self.cfg.tx_delay_slots(edge, dest);
                if delay == 0 {
                    self.join_exec(idx, dest, ledger);
                } else {
                    self.tasks[idx].loc = Loc::Flight { dest, remaining: delay };
                    self.flights.push(idx);
                }
            }
        }
    }

    /// FIFO service under the slot's allocation; returns the completed
    /// within-budget CPU-unit-slots per (credited edge, service).
    fn serve(&mut self, ledger: &mut SlotLedger) -> Vec<Vec<f64>> {
        let n = self.cfg.num_edges;
        let s = self.cfg.num_services;
        let mut revenue_units = vec![vec![0.0; s]; n];
        // cloud shares come from the queue state before any serving
        let cloud_share = self.cloud_shares();
        for server in 0..self.cfg.num_servers() {
            for service in 0..s {
                let cap_units = if server == self.cfg.cloud() {
                    cloud_share[service]
                } else {
                    self.state.allocation[server][service]
                };
                let mut budget = cap_units * self.cfg.slot_length;
                if budget <= 0.0 {
                    continue;
                }
                while budget > EPS {
                    let Some(&front) = self.exec_queues[server][service].front() else {
                        break;
                    };
                    let amount = budget.min(self.tasks[front].remaining);
                    self.tasks[front].remaining -= amount;
                    self.tasks[front].consumed_units += amount / self.cfg.slot_length;
                    budget -= amount;
                    if self.tasks[front].remaining <= EPS {
                        self.exec_queues[server][service].pop_front();
                        self.complete(front, server, &mut revenue_units, ledger);
                    }
                }
            }
        }
        revenue_units
    }

    /// Equal split of cloud CPU among services with queued work.
    fn cloud_shares(&self) -> Vec<f64> {
        let cloud = self.cfg.cloud();
        let demanding = self.exec_queues[cloud].iter().filter(|q| !q.is_empty()).count();
        self.exec_queues[cloud]
            .iter()
            .map(|q| if q.is_empty() { 0.0 } else { self.cfg.cloud_cpu / demanding as f64 })
            .collect()
    }

    fn complete(
        &mut self,
        idx: usize,
        server: usize,
        revenue_units: &mut [Vec<f64>],
        ledger: &mut SlotLedger,
    ) {
        let slot = self.slot;
        self.tasks[idx].loc = Loc::Done;
        ledger.completions += 1;
        let age = self.tasks[idx].age(slot);
        let (service, origin, workload, budget, units, exec_join, was_violated) = {
            let t = &self.tasks[idx];
            (
                t.task.service,
                t.task.origin_edge,
                t.task.workload,
                t.task.delay_budget,
                t.consumed_units,
                t.exec_join,
                t.violated,
            )
        };
        self.completed_log.push((service, age, budget));
        if age <= budget {
            self.cum_completed_within += workload;
            let credit = if server == self.cfg.cloud() { origin } else { server };
            revenue_units[credit][service] += units;
            ledger.served_workload[credit] += workload;
            if server != self.cfg.cloud() {
                ledger.undelayed_workload[server] += workload;
            }
            let comp_delay = slot - exec_join.unwrap_or(self.tasks[idx].task.arrival_slot);
            let comp_budget = (self.cfg.comp_budget_frac * budget as f64).ceil() as u64;
            if comp_delay <= comp_budget {
                ledger.comp_in_budget += workload;
            }
        } else {
            self.cum_completed_late += workload;
            if !was_violated {
                self.tasks[idx].violated = true;
                ledger.violated_workload[origin] += workload;
            }
        }
    }

    fn mark_violations(&mut self, ledger: &mut SlotLedger) {
        let slot = self.slot;
        for t in &mut self.tasks {
            if t.loc != Loc::Done && !t.violated && t.age(slot) > t.task.delay_budget {
                t.violated = true;
                ledger.violated_workload[t.task.origin_edge] += t.task.workload;
            }
        }
    }

    fn enqueue_arrivals(&mut self, arrivals: &[Task], ledger: &mut SlotLedger) -> Result<(), SimError> {
        let mut arrived = vec![vec![0.0; self.cfg.num_services]; self.cfg.num_edges];
        for task in arrivals {
            if task.arrival_slot != self.slot {
                return Err(SimError::ArrivalSlot {
                    id: task.id,
                    task_slot: task.arrival_slot,
                    env_slot: self.slot,
                });
            }
            if task.service >= self.cfg.num_services || task.origin_edge >= self.cfg.num_edges {
                return Err(SimError::BadTask {
                    id: task.id,
                    service: task.service,
                    edge: task.origin_edge,
                });
            }
            arrived[task.origin_edge][task.service] += task.workload;
            self.cum_arrived += task.workload;
            ledger.arrivals += 1;
            let idx = self.tasks.len();
            self.tasks.push(LiveTask {
                task: task.clone(),
                remaining: task.workload,
                consumed_units: 0.0,
                loc: Loc::Origin,
                tx_delay: 0,
                exec_join: None,
                violated: false,
            });
            self.origin_queues[task.origin_edge].push_back(idx);
        }
        self.last_arrivals = arrived.clone();
        self.demand_window.push_back(arrived);
        while self.demand_window.len() > self.options.demand_window {
            self.demand_window.pop_front();
        }
        Ok(())
    }

    fn fill_signals(&self, revenue_units: &[Vec<f64>], ledger: &mut SlotLedger) {
        let n = self.cfg.num_edges;
        let s = self.cfg.num_services;
        let placed_somewhere: Vec<bool> =
            (0..s).map(|k| (0..n).any(|i| self.state.placement[i][k])).collect();

        let mut live_count_origin = vec![0u64; n];
        let mut age_sum_origin = vec![0u64; n];
        let mut live_count_exec = vec![0u64; n];
        let mut age_sum_exec = vec![0u64; n];
        for t in &self.tasks {
            if t.loc == Loc::Done {
                continue;
            }
            let age = t.age(self.slot);
            let origin = t.task.origin_edge;
            live_count_origin[origin] += 1;
            age_sum_origin[origin] += age;
            if let Loc::Exec(server) = t.loc {
                if server != self.cfg.cloud() {
                    live_count_exec[server] += 1;
                    age_sum_exec[server] += age;
                }
            }
            if placed_somewhere[t.task.service] {
                ledger.covered_demand += t.remaining;
            } else {
                ledger.unserved_demand[origin] += t.remaining;
            }
            match t.loc {
                Loc::Origin => ledger.origin_backlog[origin] += t.remaining,
                Loc::Exec(server) if server != self.cfg.cloud() => {
                    ledger.exec_backlog[server] += t.remaining
                }
                _ => {}
            }
        }
        for i in 0..n {
            if live_count_origin[i] > 0 {
                ledger.mean_delay_origin[i] = age_sum_origin[i] as f64 / live_count_origin[i] as f64;
            }
            if live_count_exec[i] > 0 {
                ledger.mean_delay_exec[i] = age_sum_exec[i] as f64 / live_count_exec[i] as f64;
            }
            ledger.revenue[i] = revenue(&self.cfg, &revenue_units[i], ledger.slot);
            let a = ledger.update_bits[i];
            ledger.profit[i] = ledger.revenue[i]
                - (a.a1 as u64 as f64) * ledger.place_cost[i]
                - (a.a2 as u64 as f64) * ledger.offload_cost[i]
                - (a.a3 as u64 as f64) * ledger.alloc_cost[i];
        }
        let mean: f64 = ledger.exec_backlog.iter().sum::<f64>() / n as f64;
        ledger.load_variance =
            ledger.exec_backlog.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n as f64;
    }

    /// Cumulative workload partition; the identity is exact at every slot.
    pub fn conservation(&self) -> Conservation {
        let mut queued = 0.0;
        let mut live_violated = 0.0;
        for t in &self.tasks {
            if t.loc == Loc::Done {
                continue;
            }
            if t.violated {
                live_violated += t.task.workload;
            } else {
                queued += t.task.workload;
            }
        }
        Conservation {
            arrived: self.cum_arrived,
            completed: self.cum_completed_within,
            violated: self.cum_completed_late + live_violated,
            queued,
        }
    }

    // --- observation support -------------------------------------------------

    /// Trailing-window arrived workload per (edge, service).
    pub fn windowed_demand(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cfg.num_services]; self.cfg.num_edges];
        for slot in &self.demand_window {
            for i in 0..self.cfg.num_edges {
                for s in 0..self.cfg.num_services {
                    out[i][s] += slot[i][s];
                }
            }
        }
        out
    }

    /// Workload that arrived at each (edge, service) in the previous slot.
    pub fn last_arrivals(&self) -> &Vec<Vec<f64>> {
        &self.last_arrivals
    }

    /// True when edge `i` holds no waiting or executing tasks.
    pub fn edge_idle(&self, i: usize) -> bool {
        self.origin_queues[i].is_empty() && self.exec_queues[i].iter().all(|q| q.is_empty())
    }

    pub fn origin_backlog(&self, i: usize) -> f64 {
        self.origin_queues[i].iter().map(|&idx| self.tasks[idx].remaining).sum()
    }

    pub fn exec_backlog(&self, server: usize) -> f64 {
        self.exec_queues[server]
            .iter()
            .flat_map(|q| q.iter())
            .map(|&idx| self.tasks[idx].remaining)
            .sum()
    }

    /// (live past-budget, live total) for tasks originating at edge `i`.
    pub fn violation_counts_origin(&self, i: usize) -> (u64, u64) {
        let mut past = 0;
        let mut total = 0;
        for t in &self.tasks {
            if t.loc != Loc::Done && t.task.origin_edge == i {
                total += 1;
                if t.violated {
                    past += 1;
                }
            }
        }
        (past, total)
    }

    /// (live past-budget, live total) for tasks executing at server `i`.
    pub fn violation_counts_exec(&self, server: usize) -> (u64, u64) {
        let mut past = 0;
        let mut total = 0;
        for q in &self.exec_queues[server] {
            for &idx in q {
                total += 1;
                if self.tasks[idx].violated {
                    past += 1;
                }
            }
        }
        (past, total)
    }

    /// Population variance of per-task service rates in edge `i`'s queues.
    pub fn task_rate_variance(&self, i: usize) -> f64 {
        let mut rates = Vec::new();
        for (s, q) in self.exec_queues[i].iter().enumerate() {
            if q.is_empty() {
                continue;
            }
            let rate = self.state.allocation[i][s] / q.len() as f64;
            rates.extend(std::iter::repeat_n(rate, q.len()));
        }
        if rates.is_empty() {
            return 0.0;
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rates.len() as f64
    }

    /// True when service `s` has demand routed to edge `i`: a non-empty
    /// execution queue, or a standing route in the offloading tensor that
    /// delivers `s` here.
    pub fn has_routed_demand(&self, i: usize, s: usize) -> bool {
        self.has_routed_demand_pending(i, s, &self.state.offload)
    }

    /// As `has_routed_demand`, but against a pending routing tensor.
    pub fn has_routed_demand_pending(&self, i: usize, s: usize, offload: &[Vec<usize>]) -> bool {
        if !self.exec_queues[i][s].is_empty() {
            return true;
        }
        (0..self.cfg.num_edges).any(|j| offload[j][s] == i)
    }

    /// Waiting workload at edge `i` whose standing route points at an edge
    /// that would lack the service under `placement`.
    pub fn stranded_workload(&self, i: usize, placement: &[Vec<bool>]) -> f64 {
        self.origin_queues[i]
            .iter()
            .filter(|&&idx| {
                let s = self.tasks[idx].task.service;
                let dest = self.state.offload[i][s];
                dest != self.cfg.cloud() && !placement[dest][s]
            })
            .map(|&idx| self.tasks[idx].remaining)
            .sum()
    }

    /// Workload waiting at other edges that `offload` would deliver to `i`.
    pub fn inbound_workload(&self, i: usize, offload: &[Vec<usize>]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.cfg.num_edges {
            for &idx in &self.origin_queues[j] {
                let s = self.tasks[idx].task.service;
                if offload[j][s] == i {
                    total += self.tasks[idx].remaining;
                }
            }
        }
        total
    }

    /// Mean live-task age and total resident workload for one edge; what the
    /// delay- and workload-triggered baselines read.
    pub fn edge_metrics(&self, i: usize) -> crate::timescale::EdgeMetrics {
        let mut count = 0u64;
        let mut age_sum = 0u64;
        for t in &self.tasks {
            if t.loc != Loc::Done && t.task.origin_edge == i {
                count += 1;
                age_sum += t.age(self.slot);
            }
        }
        crate::timescale::EdgeMetrics {
            mean_delay: if count > 0 { age_sum as f64 / count as f64 } else { 0.0 },
            backlog: self.origin_backlog(i) + self.exec_backlog(i),
        }
    }

    /// Number of tasks queued for `service` at `server`.
    pub fn exec_count(&self, server: usize, service: usize) -> usize {
        self.exec_queues[server][service].len()
    }

    /// Remaining workload per service waiting in edge `i`'s execution queues.
    pub fn exec_demand_by_service(&self, server: usize) -> Vec<f64> {
        (0..self.cfg.num_services)
            .map(|s| {
                self.exec_queues[server][s].iter().map(|&idx| self.tasks[idx].remaining).sum()
            })
            .collect()
    }

    /// (service, completion age, delay budget) of every finished task.
    pub fn completed_delays(&self) -> &[(usize, u64, u64)] {
        &self.completed_log
    }
}

/// Eq. 1: revenue from CPU-unit-slots completed within budget.
pub fn revenue(cfg: &ClusterConfig, units_by_service: &[f64], slot: u64) -> f64 {
    units_by_service
        .iter()
        .enumerate()
        .map(|(s, &u)| u * cfg.unit_price(s, slot))
        .sum()
}

/// Eq. 2: cost of newly placed services, each from its nearest slot-(t-1)
/// provider (the cloud always provides).
pub fn placement_cost(
    cfg: &ClusterConfig,
    edge: usize,
    new_row: &[bool],
    prev_placement: &[Vec<bool>],
) -> f64 {
    let mut cost = 0.0;
    for s in 0..cfg.num_services {
        if new_row[s] && !prev_placement[edge][s] {
            let mut best = cfg.distance[edge][cfg.cloud()];
            for (j, row) in prev_placement.iter().enumerate() {
                if row[s] && cfg.distance[edge][j] < best {
                    best = cfg.distance[edge][j];
                }
            }
            cost += cfg.place_cost_per_km * best;
        }
    }
    cost
}

/// Eq. 3: cost of moved routes, by distance between old and new destination.
pub fn offloading_cost(cfg: &ClusterConfig, new_row: &[usize], prev_row: &[usize]) -> f64 {
    new_row
        .iter()
        .zip(prev_row)
        .map(|(&m, &k)| cfg.offload_cost_per_km * cfg.distance[k][m])
        .sum()
}

/// Eq. 4: cost of allocation increases; decreases are free.
pub fn allocation_cost(cfg: &ClusterConfig, new_row: &[f64], prev_row: &[f64]) -> f64 {
    new_row
        .iter()
        .zip(prev_row)
        .map(|(&z, &p)| cfg.realloc_cost_per_unit * (z - p).max(0.0))
        .sum()
}
