//! Deterministic multi-edge-server scheduling simulator with an adaptive
//! multi-timescale controller stack: per edge and per scheduling layer, learn
//! *when* to update placement, offloading and allocation decisions so that
//! provider profit is maximized.
//!
//! - [`domain`]: cluster constants, tasks, decision tensors, the profit ledger
//! - [`workload`]: trace ingestion, the A/B/C/D evaluation patterns, synthesis
//! - [`simenv`]: the discrete-time environment and the revenue/cost model
//! - [`rules`]: the 45 built-in placement/offloading/allocation rules
//! - [`timescale`]: update gating and the SST/SMT/DT/WT baselines
//! - [`rewards`]: layer rewards and sub-objective diagnostics
//! - [`hdrl`]: the layered multi-agent controllers, masking, training
//! - [`exp`]: experiment driver, config files, metrics and artifacts

pub mod domain;
pub mod exp;
pub mod hdrl;
pub mod rewards;
pub mod rules;
pub mod simenv;
pub mod timescale;
pub mod workload;

pub use domain::{ClusterConfig, Layer, SchedulingState, SlotLedger, Task, UpdateAction};
pub use workload::{PatternTag, WorkloadScript};
