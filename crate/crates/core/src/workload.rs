//! Workload ingestion and synthesis: cluster-trace CSV replay plus the four
//! evaluation patterns (raw, shuffled, doubled, concatenated).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClusterConfig, Task};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace {path} line {line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("trace {path} contains no task rows")]
    Empty { path: String },
    #[error("unknown workload pattern '{0}'")]
    UnknownPattern(String),
}

/// One row of a cluster trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start_time: f64,
    pub end_time: f64,
    pub task_type: String,
    pub plan_cpu: f64,
    pub plan_mem: f64,
}

/// The four evaluation patterns plus free-form scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternTag {
    A,
    B,
    C,
    D,
    Custom,
}

impl std::str::FromStr for PatternTag {
    type Err = WorkloadError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(PatternTag::A),
            "B" => Ok(PatternTag::B),
            "C" => Ok(PatternTag::C),
            "D" => Ok(PatternTag::D),
            other => Err(WorkloadError::UnknownPattern(other.into())),
        }
    }
}

impl std::fmt::Display for PatternTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PatternTag::A => "A",
            PatternTag::B => "B",
            PatternTag::C => "C",
            PatternTag::D => "D",
            PatternTag::Custom => "custom",
        };
        write!(f, "{s}")
    }
}

/// An ordered arrival script: what arrives where, slot by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadScript {
    /// Arrival events sorted by slot (ties keep insertion order).
    pub events: Vec<Task>,
    /// Number of slots the script spans.
    pub horizon: u64,
    pub pattern: PatternTag,
}

impl WorkloadScript {
    pub fn new(mut events: Vec<Task>, horizon: u64, pattern: PatternTag) -> Self {
        events.sort_by_key(|t| (t.arrival_slot, t.id));
        Self { events, horizon, pattern }
    }

    /// Arrivals of one slot, in event order.
    pub fn arrivals_at(&self, slot: u64) -> &[Task] {
        let lo = self.events.partition_point(|t| t.arrival_slot < slot);
        let hi = self.events.partition_point(|t| t.arrival_slot <= slot);
        &self.events[lo..hi]
    }

    pub fn total_workload(&self) -> f64 {
        self.events.iter().map(|t| t.workload).sum()
    }

    /// Serializes as line-delimited JSON records, one task per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}",
            serde_json::json!({"horizon": self.horizon, "pattern": self.pattern.to_string()})
        )?;
        for t in &self.events {
            writeln!(w, "{}", serde_json::to_string(t)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let hv: serde_json::Value = serde_json::from_str(&header)?;
        let horizon = hv["horizon"].as_u64().unwrap_or(0);
        let pattern = hv["pattern"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .unwrap_or(PatternTag::Custom);
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(WorkloadScript::new(events, horizon, pattern))
    }
}

/// Stable 64-bit FNV-1a; used for service bucketing so trace ingestion does
/// not depend on the platform hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Parses a 5-column trace CSV (header required) into an arrival script.
///
/// Task types map onto the S service indices: bijectively by sorted name when
/// there are at most S distinct types, hash-bucketed otherwise. The workload
/// is `plan_cpu * (end - start)` and the delay budget scales the processing
/// time by `budget_scale`. Origin edges are drawn uniformly under `seed`.
pub fn ingest_trace(
    path: &Path,
    cfg: &ClusterConfig,
    budget_scale: f64,
    seed: u64,
) -> Result<WorkloadScript, WorkloadError> {
    let pstr = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| WorkloadError::Io {
        path: pstr.clone(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let mut rows: Vec<TraceRow> = Vec::new();
    for (idx, rec) in reader.deserialize::<TraceRow>().enumerate() {
        let line = idx + 2; // header is line 1
        let row = rec.map_err(|e| WorkloadError::Malformed {
            path: pstr.clone(),
            line,
            msg: e.to_string(),
        })?;
        if row.end_time < row.start_time {
            return Err(WorkloadError::Malformed {
                path: pstr.clone(),
                line,
                msg: format!("end_time {} < start_time {}", row.end_time, row.start_time),
            });
        }
        if !(row.plan_cpu > 0.0) {
            return Err(WorkloadError::Malformed {
                path: pstr.clone(),
                line,
                msg: "plan_cpu must be positive".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(WorkloadError::Empty { path: pstr });
    }

    // service mapping: bijection over sorted names if they fit, else hashing
    let mut types: Vec<&str> = rows.iter().map(|r| r.task_type.as_str()).collect();
    types.sort_unstable();
    types.dedup();
    let bijective = types.len() <= cfg.num_services;
    let name_to_service: BTreeMap<&str, usize> = if bijective {
        types.iter().enumerate().map(|(i, &t)| (t, i)).collect()
    } else {
        types
            .iter()
            .map(|&t| (t, (fnv1a(t.as_bytes()) % cfg.num_services as u64) as usize))
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(rows.len());
    let mut horizon = 0;
    for (id, row) in rows.iter().enumerate() {
        let duration = row.end_time - row.start_time;
        let slot = (row.start_time / cfg.slot_length).floor() as u64;
        let budget = ((budget_scale * duration / cfg.slot_length).ceil() as u64).max(1);
        let task = Task {
            id: id as u64,
            service: name_to_service[row.task_type.as_str()],
            arrival_slot: slot,
            cpu_demand: row.plan_cpu,
            workload: row.plan_cpu * duration,
            delay_budget: budget,
            origin_edge: rng.random_range(0..cfg.num_edges),
        };
        horizon = horizon.max(slot + 1);
        events.push(task);
    }
    Ok(WorkloadScript::new(events, horizon, PatternTag::A))
}

/// Derives pattern B/C/D scripts from a raw (pattern A) script.
///
/// A is the identity. B shuffles, per edge, which task payload lands on which
/// of that edge's arrival slots. C duplicates every event with a +/-5 slot
/// jitter on the clone, doubling the request frequency. D is the
/// concatenation A then B then C.
pub fn make_pattern(
    script: &WorkloadScript,
    pattern: PatternTag,
    seed: u64,
) -> WorkloadScript {
    match pattern {
        PatternTag::A => {
            let mut s = script.clone();
            s.pattern = PatternTag::A;
            s
        }
        PatternTag::B => shuffle_per_edge(script, seed),
        PatternTag::C => double_frequency(script, seed),
        PatternTag::D => {
            let a = script.clone();
            let b = shuffle_per_edge(script, seed);
            let c = double_frequency(script, seed.wrapping_add(1));
            concat_scripts(&[a, b, c])
        }
        PatternTag::Custom => {
            let mut s = script.clone();
            s.pattern = PatternTag::Custom;
            s
        }
    }
}

fn shuffle_per_edge(script: &WorkloadScript, seed: u64) -> WorkloadScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_edge = script.events.iter().map(|t| t.origin_edge).max().unwrap_or(0);
    let mut events = Vec::with_capacity(script.events.len());
    for edge in 0..=max_edge {
        let mine: Vec<&Task> = script.events.iter().filter(|t| t.origin_edge == edge).collect();
        let slots: Vec<u64> = mine.iter().map(|t| t.arrival_slot).collect();
        let mut payloads: Vec<&Task> = mine.clone();
        payloads.shuffle(&mut rng);
        for (slot, payload) in slots.into_iter().zip(payloads) {
            let mut t = payload.clone();
            t.arrival_slot = slot;
            events.push(t);
        }
    }
    // fresh ids keep (slot, id) ordering well-defined after the shuffle
    events.sort_by_key(|t| (t.arrival_slot, t.id));
    for (id, t) in events.iter_mut().enumerate() {
        t.id = id as u64;
    }
    WorkloadScript::new(events, script.horizon, PatternTag::B)
}

fn double_frequency(script: &WorkloadScript, seed: u64) -> WorkloadScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(script.events.len() * 2);
    let hi = script.horizon.saturating_sub(1);
    for t in &script.events {
        events.push(t.clone());
        let mut clone = t.clone();
        let jitter = rng.random_range(-5i64..=5);
        clone.arrival_slot = (t.arrival_slot as i64 + jitter).clamp(0, hi as i64) as u64;
        events.push(clone);
    }
    events.sort_by_key(|t| t.arrival_slot);
    for (id, t) in events.iter_mut().enumerate() {
        t.id = id as u64;
    }
    WorkloadScript::new(events, script.horizon, PatternTag::C)
}

fn concat_scripts(parts: &[WorkloadScript]) -> WorkloadScript {
    let mut events = Vec::new();
    let mut offset = 0;
    for part in parts {
        for t in &part.events {
            let mut t = t.clone();
            t.arrival_slot += offset;
            events.push(t);
        }
        offset += part.horizon;
    }
    for (id, t) in events.iter_mut().enumerate() {
        t.id = id as u64;
    }
    WorkloadScript::new(events, offset, PatternTag::D)
}

/// Mean-arrivals-per-slot-per-edge profile for the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RateProfile {
    /// Same rate every slot.
    Constant(f64),
    /// base + amp * sin(2*pi*t/period), floored at zero.
    Diurnal { base: f64, amp: f64, period: u64 },
    /// Alternating calm/burst phases of fixed length.
    Bursty { calm: f64, burst: f64, phase_len: u64 },
    /// Explicit per-slot rates, cycled if shorter than the horizon.
    PerSlot(Vec<f64>),
}

impl RateProfile {
    pub fn rate(&self, slot: u64) -> f64 {
        match self {
            RateProfile::Constant(r) => *r,
            RateProfile::Diurnal { base, amp, period } => {
                let phase = 2.0 * std::f64::consts::PI * (slot % period) as f64 / *period as f64;
                (base + amp * phase.sin()).max(0.0)
            }
            RateProfile::Bursty { calm, burst, phase_len } => {
                if (slot / phase_len) % 2 == 0 {
                    *calm
                } else {
                    *burst
                }
            }
            RateProfile::PerSlot(rates) => {
                if rates.is_empty() {
                    0.0
                } else {
                    rates[(slot % rates.len() as u64) as usize]
                }
            }
        }
    }
}

/// Shape of synthetic tasks. Demands and durations are quantized to 1/4
/// units so ledger sums stay exact in f64.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub profile: RateProfile,
    pub budget_scale: f64,
    /// Inclusive range of cpu_demand in quarter-unit steps.
    pub cpu_demand_range: (f64, f64),
    /// Inclusive range of processing duration in seconds, quarter-second steps.
    pub duration_range: (f64, f64),
    /// Rotate the "hot" service every this many slots; the hot service
    /// receives `hot_weight` of the arrival mix, the rest split evenly.
    pub hot_rotation: Option<u64>,
    pub hot_weight: f64,
    /// When set, the hot service's arrivals concentrate on a rotating edge.
    pub hot_edge_rotation: Option<u64>,
    /// With a hot rotation, give the whole non-hot share to the previous
    /// hot service and nothing to the others, so every rotation revives a
    /// service that was absent from the mix.
    pub warm_previous: bool,
}

impl SynthSpec {
    pub fn constant(rate: f64, budget_scale: f64) -> Self {
        Self {
            profile: RateProfile::Constant(rate),
            budget_scale,
            cpu_demand_range: (0.5, 2.0),
            duration_range: (0.5, 3.0),
            hot_rotation: None,
            hot_weight: 0.6,
            hot_edge_rotation: None,
            warm_previous: false,
        }
    }
}

fn quantize_quarter(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

/// Poisson arrivals per slot per edge, deterministic under `seed`.
pub fn synth_workload(
    cfg: &ClusterConfig,
    horizon: u64,
    spec: &SynthSpec,
    seed: u64,
) -> WorkloadScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut id = 0u64;
    let s_count = cfg.num_services;
    for slot in 0..horizon {
        let rate = spec.profile.rate(slot);
        let hot_service = spec.hot_rotation.map(|k| ((slot / k.max(1)) as usize) % s_count);
        let hot_edge = spec.hot_edge_rotation.map(|k| ((slot / k.max(1)) as usize) % cfg.num_edges);
        for edge in 0..cfg.num_edges {
            let n = if rate > 0.0 {
                Poisson::new(rate).map(|p| p.sample(&mut rng) as u64).unwrap_or(0)
            } else {
                0
            };
            for _ in 0..n {
                let service = match hot_service {
                    Some(hot) if rng.random::<f64>() < spec.hot_weight => hot,
                    Some(hot) if spec.warm_previous => (hot + s_count - 1) % s_count,
                    _ => rng.random_range(0..s_count),
                };
                let origin = match (hot_edge, hot_service) {
                    (Some(he), Some(hs)) if service == hs => he,
                    _ => edge,
                };
                let cpu = quantize_quarter(
                    rng.random_range(spec.cpu_demand_range.0..=spec.cpu_demand_range.1),
                )
                .max(0.25);
                let dur = quantize_quarter(
                    rng.random_range(spec.duration_range.0..=spec.duration_range.1),
                )
                .max(0.25);
                let budget = ((spec.budget_scale * dur / cfg.slot_length).ceil() as u64).max(1);
                events.push(Task {
                    id,
                    service,
                    arrival_slot: slot,
                    cpu_demand: cpu,
                    workload: cpu * dur,
                    delay_budget: budget,
                    origin_edge: origin,
                });
                id += 1;
            }
        }
    }
    WorkloadScript::new(events, horizon, PatternTag::Custom)
}
