//! Shared test support: an independent brute-force reference simulator that
//! re-derives every ledger field from per-task records and the cost
//! formulas, plus random feasible-decision generators.

pub mod reference;

use edgetimer::domain::{ClusterConfig, UpdateAction};
use edgetimer::simenv::Decisions;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform random placement/offloading/allocation tensors satisfying every
/// state invariant (memory cap, CPU cap, feasibility coupling) with
/// quarter-unit allocations so sums stay exact.
pub fn random_feasible_decisions(cfg: &ClusterConfig, rng: &mut ChaCha8Rng) -> Decisions {
    let n = cfg.num_edges;
    let s = cfg.num_services;
    let mut placement = vec![vec![false; s]; n];
    for (i, row) in placement.iter_mut().enumerate() {
        let mut mem = 0.0;
        let _ = i;
        for (k, slot) in row.iter_mut().enumerate() {
            if rng.random::<f64>() < 0.5 && mem + cfg.service_mem_footprint[k] <= cfg.edge_mem {
                *slot = true;
                mem += cfg.service_mem_footprint[k];
            }
        }
    }
    let mut offload = vec![vec![cfg.cloud(); s]; n];
    for row in offload.iter_mut() {
        for (k, dest) in row.iter_mut().enumerate() {
            let mut feasible: Vec<usize> =
                (0..n).filter(|&j| placement[j][k]).collect();
            feasible.push(cfg.cloud());
            *dest = feasible[rng.random_range(0..feasible.len())];
        }
    }
    let mut allocation = vec![vec![0.0; s]; n];
    for row in allocation.iter_mut() {
        let mut left = cfg.edge_cpu;
        for slot in row.iter_mut() {
            let quarters = (left * 4.0) as u64;
            if quarters == 0 {
                break;
            }
            let take = rng.random_range(0..=quarters) as f64 / 4.0;
            *slot = take;
            left -= take;
        }
    }
    let bits = (0..n)
        .map(|_| UpdateAction {
            a1: rng.random::<f64>() < 0.5,
            a2: rng.random::<f64>() < 0.5,
            a3: rng.random::<f64>() < 0.5,
        })
        .collect();
    Decisions { placement, offload, allocation, bits }
}
