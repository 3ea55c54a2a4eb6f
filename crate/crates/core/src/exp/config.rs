//! TOML experiment configuration: one file drives the cluster constants,
//! the workload, the rule triple, reward coefficients, training
//! hyperparameters and baseline tuning grids.

use serde::{Deserialize, Serialize};

use crate::domain::{grid_distances, ClusterConfig};
use crate::hdrl::train::TrainConfig;
use crate::rewards::RewardCoefficients;
use crate::rules::{RuleParams, RuleTriple};
use crate::workload::{
    ingest_trace, make_pattern, synth_workload, PatternTag, RateProfile, SynthSpec, WorkloadScript,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("workload error: {0}")]
    Workload(#[from] crate::workload::WorkloadError),
}

/// `[cluster]` section; defaults reproduce the stock 12-edge instance. The
/// distance matrix is synthetic (grid positions) unless given explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    pub num_edges: usize,
    pub num_services: usize,
    pub edge_cpu: f64,
    pub edge_mem: f64,
    pub cloud_cpu: f64,
    pub cloud_mem: f64,
    /// Uniform footprint unless `service_mem_footprint` is given.
    pub service_mem: f64,
    pub service_mem_footprint: Option<Vec<f64>>,
    pub unit_price_base: f64,
    pub place_cost_per_km: f64,
    pub offload_cost_per_km: f64,
    pub realloc_cost_per_unit: f64,
    pub slot_length: f64,
    pub link_rate: f64,
    pub cloud_rtt_slots: u64,
    pub tx_budget_frac: f64,
    pub comp_budget_frac: f64,
    /// Extent of the synthetic edge grid in km.
    pub region_km: f64,
    /// Synthetic edge-to-cloud distance in km.
    pub cloud_km: f64,
    /// Explicit (N+1)x(N+1) matrix; overrides the synthetic grid.
    pub distance: Option<Vec<Vec<f64>>>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            num_edges: 12,
            num_services: 12,
            edge_cpu: 4.0,
            edge_mem: 8.0,
            cloud_cpu: 8.0,
            cloud_mem: 16.0,
            service_mem: 2.0,
            service_mem_footprint: None,
            unit_price_base: 25.0,
            place_cost_per_km: 0.3,
            offload_cost_per_km: 0.1,
            realloc_cost_per_unit: 0.5,
            slot_length: 1.0,
            link_rate: 5.0,
            cloud_rtt_slots: 2,
            tx_budget_frac: 0.25,
            comp_budget_frac: 0.75,
            region_km: 5.0,
            cloud_km: 50.0,
            distance: None,
        }
    }
}

impl ClusterSection {
    pub fn build(&self) -> Result<ClusterConfig, ConfigError> {
        let footprint = self
            .service_mem_footprint
            .clone()
            .unwrap_or_else(|| vec![self.service_mem; self.num_services]);
        let distance = self
            .distance
            .clone()
            .unwrap_or_else(|| grid_distances(self.num_edges, self.region_km, self.cloud_km));
        let cfg = ClusterConfig {
            num_edges: self.num_edges,
            num_services: self.num_services,
            edge_cpu: self.edge_cpu,
            edge_mem: self.edge_mem,
            cloud_cpu: self.cloud_cpu,
            cloud_mem: self.cloud_mem,
            service_mem_footprint: footprint,
            distance,
            unit_price_base: self.unit_price_base,
            place_cost_per_km: self.place_cost_per_km,
            offload_cost_per_km: self.offload_cost_per_km,
            realloc_cost_per_unit: self.realloc_cost_per_unit,
            slot_length: self.slot_length,
            link_rate: self.link_rate,
            cloud_rtt_slots: self.cloud_rtt_slots,
            tx_budget_frac: self.tx_budget_frac,
            comp_budget_frac: self.comp_budget_frac,
        };
        let errs = cfg.validate();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errs.join("; ")))
        }
    }
}

/// `[workload]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSection {
    /// "synth" or "trace".
    pub source: String,
    pub trace_path: Option<String>,
    pub budget_scale: f64,
    /// A, B, C or D.
    pub pattern: String,
    pub horizon: u64,
    /// "constant", "diurnal" or "bursty".
    pub rate: String,
    pub rate_value: f64,
    pub burst_rate: f64,
    pub phase_len: u64,
    pub period: u64,
    pub amp: f64,
    pub hot_rotation: Option<u64>,
    pub hot_weight: f64,
    pub hot_edge_rotation: Option<u64>,
    pub warm_previous: bool,
    pub cpu_demand: (f64, f64),
    pub duration: (f64, f64),
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            source: "synth".into(),
            trace_path: None,
            budget_scale: 2.0,
            pattern: "A".into(),
            horizon: 1000,
            rate: "constant".into(),
            rate_value: 1.0,
            burst_rate: 4.0,
            phase_len: 100,
            period: 200,
            amp: 1.0,
            hot_rotation: None,
            hot_weight: 0.6,
            hot_edge_rotation: None,
            warm_previous: false,
            cpu_demand: (0.5, 2.0),
            duration: (0.5, 3.0),
        }
    }
}

impl WorkloadSection {
    pub fn synth_spec(&self) -> Result<SynthSpec, ConfigError> {
        let profile = match self.rate.as_str() {
            "constant" => RateProfile::Constant(self.rate_value),
            "diurnal" => RateProfile::Diurnal {
                base: self.rate_value,
                amp: self.amp,
                period: self.period.max(1),
            },
            "bursty" => RateProfile::Bursty {
                calm: self.rate_value,
                burst: self.burst_rate,
                phase_len: self.phase_len.max(1),
            },
            other => {
                return Err(ConfigError::Invalid(format!("unknown rate profile '{other}'")))
            }
        };
        Ok(SynthSpec {
            profile,
            budget_scale: self.budget_scale,
            cpu_demand_range: self.cpu_demand,
            duration_range: self.duration,
            hot_rotation: self.hot_rotation,
            hot_weight: self.hot_weight,
            hot_edge_rotation: self.hot_edge_rotation,
            warm_previous: self.warm_previous,
        })
    }

    /// Builds the raw script and applies the requested pattern.
    pub fn build(&self, cfg: &ClusterConfig, seed: u64) -> Result<WorkloadScript, ConfigError> {
        let mut raw = match self.source.as_str() {
            "synth" => {
                let spec = self.synth_spec()?;
                synth_workload(cfg, self.horizon, &spec, seed)
            }
            "trace" => {
                let path = self.trace_path.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("trace source requires trace_path".into())
                })?;
                ingest_trace(std::path::Path::new(path), cfg, self.budget_scale, seed)?
            }
            other => {
                return Err(ConfigError::Invalid(format!("unknown workload source '{other}'")))
            }
        };
        raw.pattern = PatternTag::A;
        let pattern: PatternTag = self.pattern.parse()?;
        Ok(make_pattern(&raw, pattern, seed.wrapping_add(1)))
    }
}

/// `[rules]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RulesSection {
    pub triple: String,
    pub hpa_up: f64,
    pub hpa_down: f64,
    pub top_k: Option<usize>,
    pub rcrp_target: f64,
    pub demand_window: usize,
}

impl Default for RulesSection {
    fn default() -> Self {
        let p = RuleParams::default();
        Self {
            triple: "AM-MRP-EA".into(),
            hpa_up: p.hpa_up,
            hpa_down: p.hpa_down,
            top_k: p.top_k,
            rcrp_target: p.rcrp_target,
            demand_window: 10,
        }
    }
}

impl RulesSection {
    pub fn triple(&self) -> Result<RuleTriple, ConfigError> {
        self.triple.parse().map_err(|e| ConfigError::Invalid(format!("{e}")))
    }

    pub fn params(&self) -> RuleParams {
        RuleParams {
            hpa_up: self.hpa_up,
            hpa_down: self.hpa_down,
            top_k: self.top_k,
            rcrp_target: self.rcrp_target,
        }
    }
}

/// `[baselines]` section: tuning grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselinesSection {
    pub smt_periods: Vec<u64>,
    pub dt_thresholds: Vec<f64>,
    pub wt_thresholds: Vec<f64>,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        Self {
            smt_periods: vec![1, 10, 50, 100],
            dt_thresholds: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            wt_thresholds: vec![1.0, 5.0, 10.0, 20.0, 50.0],
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cluster: ClusterSection,
    pub workload: WorkloadSection,
    pub rules: RulesSection,
    pub rewards: RewardCoefficients,
    pub train: TrainConfig,
    pub baselines: BaselinesSection,
}

impl ExperimentConfig {
    pub fn from_str_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_str_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cluster.build()?;
        self.rules.triple()?;
        let errs = self.rewards.validate();
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs.join("; ")));
        }
        if self.workload.source == "synth" && self.workload.horizon == 0 {
            return Err(ConfigError::Invalid("workload.horizon must be positive".into()));
        }
        if self.baselines.smt_periods.is_empty() {
            return Err(ConfigError::Invalid("baselines.smt_periods must not be empty".into()));
        }
        if self.baselines.smt_periods.iter().any(|&p| p == 0) {
            return Err(ConfigError::Invalid("baselines.smt_periods must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash over the full configuration and seed; stamped into
    /// checkpoints and artifact headers.
    pub fn hash(&self, seed: u64) -> u64 {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
        for &b in canon.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}
