//! Brute-force reference simulator: per-task records, no queues or slabs,
//! every ledger quantity recomputed from first principles each slot. Kept
//! deliberately independent of the production environment's structure.

use edgetimer::domain::{ClusterConfig, SlotLedger, Task};
use edgetimer::simenv::Decisions;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Waiting,
    Flying { dest: usize, arrive_slot: u64, route_slot: u64 },
    Queued { server: usize, join_slot: u64, join_seq: u64 },
    Done,
}

#[derive(Debug, Clone)]
struct Record {
    task: Task,
    remaining: f64,
    consumed_units: f64,
    phase: Phase,
    tx_slots: u64,
    violated: bool,
}

pub struct RefSim {
    cfg: ClusterConfig,
    slot: u64,
    x: Vec<Vec<bool>>,
    y: Vec<Vec<usize>>,
    z: Vec<Vec<f64>>,
    records: Vec<Record>,
    join_seq: u64,
    pub cum_arrived: f64,
    pub cum_within: f64,
    pub cum_late: f64,
}

impl RefSim {
    pub fn new(cfg: ClusterConfig) -> Self {
        let n = cfg.num_edges;
        let s = cfg.num_services;
        Self {
            x: vec![vec![false; s]; n],
            y: vec![vec![cfg.cloud(); s]; n],
            z: vec![vec![0.0; s]; n],
            records: Vec::new(),
            join_seq: 0,
            slot: 0,
            cum_arrived: 0.0,
            cum_within: 0.0,
            cum_late: 0.0,
            cfg,
        }
    }

    fn tx_delay(&self, from: usize, to: usize) -> u64 {
        if from == to {
            return 0;
        }
        let base = (self.cfg.distance[from][to] / self.cfg.link_rate).ceil() as u64;
        if to == self.cfg.cloud() || from == self.cfg.cloud() {
            base + self.cfg.cloud_rtt_slots
        } else {
            base
        }
    }

    pub fn step(&mut self, d: &Decisions, arrivals: &[Task]) -> SlotLedger {
        let cfg = self.cfg.clone();
        let n = cfg.num_edges;
        let t = self.slot;
        let mut ledger = SlotLedger::zero(t, n);

        // Eq. 2: new installs from the nearest slot-(t-1) provider (cloud
        // always provides); Eq. 3: route moves by distance; Eq. 4: increases.
        for i in 0..n {
            for s in 0..cfg.num_services {
                if d.placement[i][s] && !self.x[i][s] {
                    let mut best = cfg.distance[i][cfg.cloud()];
                    for j in 0..n {
                        if self.x[j][s] && cfg.distance[i][j] < best {
                            best = cfg.distance[i][j];
                        }
                    }
                    ledger.place_cost[i] += cfg.place_cost_per_km * best;
                }
                ledger.offload_cost[i] +=
                    cfg.offload_cost_per_km * cfg.distance[self.y[i][s]][d.offload[i][s]];
                let dz = d.allocation[i][s] - self.z[i][s];
                if dz > 0.0 {
                    ledger.alloc_cost[i] += cfg.realloc_cost_per_unit * dz;
                }
            }
            ledger.update_bits[i] = d.bits[i];
        }
        self.x = d.placement.clone();
        self.y = d.offload.clone();
        self.z = d.allocation.clone();

        // flights that land this slot, in flight-creation order
        let mut landing: Vec<usize> = (0..self.records.len())
            .filter(|&k| {
                matches!(self.records[k].phase, Phase::Flying { arrive_slot, .. } if arrive_slot <= t)
            })
            .collect();
        landing.sort_by_key(|&k| match self.records[k].phase {
            Phase::Flying { route_slot, .. } => {
                (route_slot, self.records[k].task.origin_edge, self.records[k].task.arrival_slot, self.records[k].task.id)
            }
            _ => unreachable!(),
        });
        for k in landing {
            let dest = match self.records[k].phase {
                Phase::Flying { dest, route_slot, .. } => {
                    self.records[k].tx_slots = t - route_slot;
                    dest
                }
                _ => unreachable!(),
            };
            self.join(k, dest, t, &mut ledger);
        }

        // route every waiting task
        let mut waiting: Vec<usize> = (0..self.records.len())
            .filter(|&k| self.records[k].phase == Phase::Waiting)
            .collect();
        waiting.sort_by_key(|&k| {
            (self.records[k].task.origin_edge, self.records[k].task.arrival_slot, self.records[k].task.id)
        });
        for k in waiting {
            let origin = self.records[k].task.origin_edge;
            let service = self.records[k].task.service;
            let dest = self.y[origin][service];
            let delay = self.tx_delay(origin, dest);
            if delay == 0 {
                self.records[k].tx_slots = 0;
                self.join(k, dest, t, &mut ledger);
            } else {
                self.records[k].phase =
                    Phase::Flying { dest, arrive_slot: t + delay, route_slot: t };
            }
        }

        // serve: FIFO by (join_slot, join_seq) under the slot's allocation
        let mut revenue_units = vec![vec![0.0; cfg.num_services]; n];
        let cloud = cfg.cloud();
        let cloud_busy: Vec<bool> = (0..cfg.num_services)
            .map(|s| {
                self.records.iter().any(|r| {
                    r.task.service == s && matches!(r.phase, Phase::Queued { server, .. } if server == cloud)
                })
            })
            .collect();
        let cloud_count = cloud_busy.iter().filter(|&&b| b).count().max(1);
        for server in 0..cfg.num_servers() {
            for service in 0..cfg.num_services {
                let cap = if server == cloud {
                    if cloud_busy[service] {
                        cfg.cloud_cpu / cloud_count as f64
                    } else {
                        0.0
                    }
                } else {
                    self.z[server][service]
                };
                let mut budget = cap * cfg.slot_length;
                if budget <= 0.0 {
                    continue;
                }
                let mut queue: Vec<usize> = (0..self.records.len())
                    .filter(|&k| {
                        self.records[k].task.service == service
                            && matches!(self.records[k].phase, Phase::Queued { server: sv, .. } if sv == server)
                    })
                    .collect();
                queue.sort_by_key(|&k| match self.records[k].phase {
                    Phase::Queued { join_slot, join_seq, .. } => (join_slot, join_seq),
                    _ => unreachable!(),
                });
                for k in queue {
                    if budget <= EPS {
                        break;
                    }
                    let amount = budget.min(self.records[k].remaining);
                    self.records[k].remaining -= amount;
                    self.records[k].consumed_units += amount / cfg.slot_length;
                    budget -= amount;
                    if self.records[k].remaining <= EPS {
                        self.complete(k, server, t, &mut revenue_units, &mut ledger);
                    }
                }
            }
        }

        // mark violations on everything still live
        for r in &mut self.records {
            if r.phase != Phase::Done && !r.violated && t - r.task.arrival_slot > r.task.delay_budget
            {
                r.violated = true;
                ledger.violated_workload[r.task.origin_edge] += r.task.workload;
            }
        }

        // arrivals
        for task in arrivals {
            self.cum_arrived += task.workload;
            ledger.arrivals += 1;
            self.records.push(Record {
                task: task.clone(),
                remaining: task.workload,
                consumed_units: 0.0,
                phase: Phase::Waiting,
                tx_slots: 0,
                violated: false,
            });
        }

        // signals
        let placed: Vec<bool> = (0..cfg.num_services)
            .map(|s| (0..n).any(|i| self.x[i][s]))
            .collect();
        let mut origin_count = vec![0u64; n];
        let mut origin_age = vec![0u64; n];
        let mut exec_count = vec![0u64; n];
        let mut exec_age = vec![0u64; n];
        for r in &self.records {
            if r.phase == Phase::Done {
                continue;
            }
            let age = t - r.task.arrival_slot;
            let o = r.task.origin_edge;
            origin_count[o] += 1;
            origin_age[o] += age;
            if placed[r.task.service] {
                ledger.covered_demand += r.remaining;
            } else {
                ledger.unserved_demand[o] += r.remaining;
            }
            match r.phase {
                Phase::Waiting => ledger.origin_backlog[o] += r.remaining,
                Phase::Queued { server, .. } if server != cloud => {
                    ledger.exec_backlog[server] += r.remaining;
                    exec_count[server] += 1;
                    exec_age[server] += age;
                }
                _ => {}
            }
        }
        for i in 0..n {
            if origin_count[i] > 0 {
                ledger.mean_delay_origin[i] = origin_age[i] as f64 / origin_count[i] as f64;
            }
            if exec_count[i] > 0 {
                ledger.mean_delay_exec[i] = exec_age[i] as f64 / exec_count[i] as f64;
            }
            ledger.revenue[i] = (0..cfg.num_services)
                .map(|s| revenue_units[i][s] * cfg.unit_price(s, t))
                .sum();
            let a = d.bits[i];
            ledger.profit[i] = ledger.revenue[i]
                - if a.a1 { ledger.place_cost[i] } else { 0.0 }
                - if a.a2 { ledger.offload_cost[i] } else { 0.0 }
                - if a.a3 { ledger.alloc_cost[i] } else { 0.0 };
        }
        let mean = ledger.exec_backlog.iter().sum::<f64>() / n as f64;
        ledger.load_variance =
            ledger.exec_backlog.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n as f64;

        self.slot += 1;
        ledger
    }

    fn join(&mut self, k: usize, dest: usize, t: u64, ledger: &mut SlotLedger) {
        self.records[k].phase = Phase::Queued { server: dest, join_slot: t, join_seq: self.join_seq };
        self.join_seq += 1;
        let budget =
            (self.cfg.tx_budget_frac * self.records[k].task.delay_budget as f64).ceil() as u64;
        if self.records[k].tx_slots <= budget {
            ledger.offload_in_budget += self.records[k].task.workload;
        }
    }

    fn complete(
        &mut self,
        k: usize,
        server: usize,
        t: u64,
        revenue_units: &mut [Vec<f64>],
        ledger: &mut SlotLedger,
    ) {
        let join_slot = match self.records[k].phase {
            Phase::Queued { join_slot, .. } => join_slot,
            _ => unreachable!(),
        };
        self.records[k].phase = Phase::Done;
        ledger.completions += 1;
        let r = &self.records[k];
        let age = t - r.task.arrival_slot;
        if age <= r.task.delay_budget {
            self.cum_within += r.task.workload;
            let credit = if server == self.cfg.cloud() { r.task.origin_edge } else { server };
            revenue_units[credit][r.task.service] += r.consumed_units;
            ledger.served_workload[credit] += r.task.workload;
            if server != self.cfg.cloud() {
                ledger.undelayed_workload[server] += r.task.workload;
            }
            let comp_budget =
                (self.cfg.comp_budget_frac * r.task.delay_budget as f64).ceil() as u64;
            if t - join_slot <= comp_budget {
                ledger.comp_in_budget += r.task.workload;
            }
        } else {
            self.cum_late += r.task.workload;
            let origin = r.task.origin_edge;
            let workload = r.task.workload;
            let was = r.violated;
            if !was {
                self.records[k].violated = true;
                ledger.violated_workload[origin] += workload;
            }
        }
    }
}
