//! The adaptive multi-timescale controller stack: three layered Dec-POMDP
//! controllers, one agent per edge, trained centralized and executed
//! decentralized, with discriminator-aided action masking.

pub mod buffer;
pub mod net;
pub mod rollout;
pub mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{ClusterConfig, Layer};
use crate::rules::RuleInputs;
use crate::simenv::Env;
use net::{log_softmax, GruNet, MASK_LOGIT};

/// Decision tensors already executed earlier in the slot; observations and
/// the safety discriminator of a layer read the layer above through this.
pub struct PendingView<'a> {
    pub placement: &'a [Vec<bool>],
    pub offload: &'a [Vec<usize>],
}

fn squash(x: f64) -> f64 {
    x / (1.0 + x)
}

/// Observation width per layer.
pub fn obs_dim(layer: Layer, cfg: &ClusterConfig) -> usize {
    match layer {
        Layer::Placement => 2 + 2 * cfg.num_services,
        Layer::Offloading => 4,
        Layer::Allocation => 4,
    }
}

/// The Dec-POMDP feature vector for one (layer, edge), every component in
/// [0, 1], built only from quantities local to the edge plus the pending
/// upper-layer decisions.
pub fn observe(
    layer: Layer,
    env: &Env,
    inputs: &RuleInputs,
    pending: &PendingView,
    edge: usize,
) -> Vec<f64> {
    let cfg = env.cfg();
    match layer {
        Layer::Placement => {
            let mut obs = Vec::with_capacity(obs_dim(layer, cfg));
            let total: f64 = inputs.windowed_demand[edge].iter().sum();
            let covered: f64 = (0..cfg.num_services)
                .filter(|&s| (0..cfg.num_edges).any(|j| pending.placement[j][s]))
                .map(|s| inputs.windowed_demand[edge][s])
                .sum();
            obs.push(if total > 0.0 { covered / total } else { 0.0 });
            let used: f64 = (0..cfg.num_services)
                .filter(|&s| pending.placement[edge][s])
                .map(|s| cfg.service_mem_footprint[s])
                .sum();
            obs.push((1.0 - used / cfg.edge_mem).max(0.0));
            for s in 0..cfg.num_services {
                obs.push(if pending.placement[edge][s] { 1.0 } else { 0.0 });
            }
            let arrived = &env.last_arrivals()[edge];
            let arr_total: f64 = arrived.iter().sum();
            for s in 0..cfg.num_services {
                obs.push(if arr_total > 0.0 { arrived[s] / arr_total } else { 0.0 });
            }
            obs
        }
        Layer::Offloading => {
            let (past, total) = env.violation_counts_origin(edge);
            let viol = if total > 0 { past as f64 / total as f64 } else { 0.0 };
            let alloc: f64 = env.state.allocation[edge].iter().sum();
            let avail = (1.0 - alloc / cfg.edge_cpu).max(0.0);
            let unoffloaded = squash(env.origin_backlog(edge) / cfg.edge_cpu);
            let stranded = squash(env.stranded_workload(edge, pending.placement) / cfg.edge_cpu);
            vec![viol, avail, unoffloaded, stranded]
        }
        Layer::Allocation => {
            let (past, total) = env.violation_counts_exec(edge);
            let viol = if total > 0 { past as f64 / total as f64 } else { 0.0 };
            let rate_var = squash(env.task_rate_variance(edge));
            let alloc: f64 = env.state.allocation[edge].iter().sum();
            let avail = (1.0 - alloc / cfg.edge_cpu).max(0.0);
            let awaiting = squash(
                (env.exec_backlog(edge) + env.inbound_workload(edge, pending.offload))
                    / cfg.edge_cpu,
            );
            vec![viol, rate_var, avail, awaiting]
        }
    }
}

/// Safety discriminator: is continuing the previous decision infeasible?
///
/// Layer-2 holds are unsafe when any standing route points at an edge whose
/// service the pending placement just removed; Layer-3 holds are unsafe when
/// CPU stays allocated to a service that neither queues work here nor has a
/// standing route delivering it here. Layer-1 holds are always feasible
/// after slot 0.
pub fn hold_infeasible(layer: Layer, env: &Env, pending: &PendingView, edge: usize) -> bool {
    let cfg = env.cfg();
    match layer {
        Layer::Placement => false,
        Layer::Offloading => (0..cfg.num_services).any(|s| {
            let dest = env.state.offload[edge][s];
            dest != cfg.cloud() && !pending.placement[dest][s]
        }),
        Layer::Allocation => (0..cfg.num_services).any(|s| {
            env.state.allocation[edge][s] > 0.0
                && !env.has_routed_demand_pending(edge, s, pending.offload)
        }),
    }
}

/// How an actor turns logits into an action.
pub enum ActMode<'a> {
    Sample(&'a mut ChaCha8Rng),
    /// Deterministic evaluation: argmax of the (masked) logits.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct ActOutput {
    pub action: usize,
    pub logp: f64,
    pub masked: bool,
}

/// Runs one actor step, applying the hold mask when requested, and samples
/// (or argmaxes) the action. Advances the hidden state in place.
pub fn act(
    actor: &GruNet,
    obs: &[f64],
    hidden: &mut Vec<f64>,
    mask_hold: bool,
    mode: &mut ActMode,
) -> ActOutput {
    let cache = actor.step(obs, hidden);
    *hidden = cache.h.clone();
    let mut logits = cache.out;
    assert!(logits.iter().all(|l| l.is_finite()), "non-finite policy logits");
    if mask_hold {
        logits[0] += MASK_LOGIT;
    }
    let logp = log_softmax(&logits);
    let action = match mode {
        ActMode::Greedy => {
            let mut best = 0;
            for (k, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = k;
                }
            }
            best
        }
        ActMode::Sample(rng) => {
            let draw: f64 = rng.random();
            let mut cum = 0.0;
            let mut chosen = logits.len() - 1;
            for (k, &lp) in logp.iter().enumerate() {
                cum += lp.exp();
                if draw < cum {
                    chosen = k;
                    break;
                }
            }
            chosen
        }
    };
    ActOutput { action, logp: logp[action], masked: mask_hold }
}

/// One critic step; returns the value estimate and advances the hidden state.
pub fn value(critic: &GruNet, obs: &[f64], hidden: &mut Vec<f64>) -> f64 {
    let cache = critic.step(obs, hidden);
    *hidden = cache.h.clone();
    cache.out[0]
}

/// Actor/critic pairs for one layer; `shared` folds all agents onto the
/// networks at index 0.
#[derive(Debug, Clone)]
pub struct LayerNets {
    pub actors: Vec<GruNet>,
    pub critics: Vec<GruNet>,
    pub shared: bool,
}

impl LayerNets {
    pub fn actor(&self, agent: usize) -> &GruNet {
        &self.actors[if self.shared { 0 } else { agent }]
    }

    pub fn critic(&self, agent: usize) -> &GruNet {
        &self.critics[if self.shared { 0 } else { agent }]
    }

    pub fn net_index(&self, agent: usize) -> usize {
        if self.shared {
            0
        } else {
            agent
        }
    }
}

/// The full three-layer controller stack.
#[derive(Debug, Clone)]
pub struct Controllers {
    pub hidden: usize,
    /// Critics see the concatenated global observation when true.
    pub centralized: bool,
    pub layers: Vec<LayerNets>,
}

impl Controllers {
    pub fn new(
        cfg: &ClusterConfig,
        hidden: usize,
        shared: bool,
        centralized: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::with_hold_bias(cfg, hidden, shared, centralized, 0.0, rng)
    }

    /// `hold_bias` raises the hold logit's initial head bias, starting the
    /// policies near "keep previous decisions" instead of a coin flip.
    pub fn with_hold_bias(
        cfg: &ClusterConfig,
        hidden: usize,
        shared: bool,
        centralized: bool,
        hold_bias: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = cfg.num_edges;
        let count = if shared { 1 } else { n };
        let layers = Layer::ALL
            .iter()
            .map(|&layer| {
                let d = obs_dim(layer, cfg);
                let critic_in = if centralized { d * n } else { d };
                let actors = (0..count)
                    .map(|_| {
                        let mut net = GruNet::new(d, hidden, 2, rng);
                        let head_bias = net.param_count() - net.out_dim;
                        net.params[head_bias] += hold_bias;
                        net
                    })
                    .collect();
                let critics = (0..count).map(|_| GruNet::new(critic_in, hidden, 1, rng)).collect();
                LayerNets { actors, critics, shared }
            })
            .collect();
        Self { hidden, centralized, layers }
    }

    pub fn layer(&self, layer: Layer) -> &LayerNets {
        &self.layers[layer.index()]
    }
}

// --- checkpoint format -------------------------------------------------------

const CHECKPOINT_MAGIC: [u8; 4] = *b"ETCK";
const CHECKPOINT_VERSION: u32 = 1;

fn write_net(buf: &mut Vec<u8>, net: &GruNet) {
    buf.extend((net.in_dim as u32).to_le_bytes());
    buf.extend((net.hidden as u32).to_le_bytes());
    buf.extend((net.out_dim as u32).to_le_bytes());
    buf.extend((net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        buf.extend(p.to_le_bytes());
    }
}

fn read_u32(data: &[u8], off: &mut usize) -> Result<u32, String> {
    let bytes: [u8; 4] =
        data.get(*off..*off + 4).ok_or("truncated checkpoint")?.try_into().unwrap();
    *off += 4;
    Ok(u32::from_le_bytes(bytes))
}

fn read_u64(data: &[u8], off: &mut usize) -> Result<u64, String> {
    let bytes: [u8; 8] =
        data.get(*off..*off + 8).ok_or("truncated checkpoint")?.try_into().unwrap();
    *off += 8;
    Ok(u64::from_le_bytes(bytes))
}

fn read_net(data: &[u8], off: &mut usize) -> Result<GruNet, String> {
    let in_dim = read_u32(data, off)? as usize;
    let hidden = read_u32(data, off)? as usize;
    let out_dim = read_u32(data, off)? as usize;
    let count = read_u64(data, off)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let bytes: [u8; 8] =
            data.get(*off..*off + 8).ok_or("truncated checkpoint")?.try_into().unwrap();
        *off += 8;
        params.push(f64::from_le_bytes(bytes));
    }
    let net = GruNet { in_dim, hidden, out_dim, params };
    if net.params.len() != net.param_count() {
        return Err("checkpoint parameter count mismatch".into());
    }
    Ok(net)
}

/// Serializes the controllers as a versioned binary blob tagged with a
/// configuration hash.
pub fn checkpoint_bytes(ctrl: &Controllers, config_hash: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend(CHECKPOINT_MAGIC);
    buf.extend(CHECKPOINT_VERSION.to_le_bytes());
    buf.extend(config_hash.to_le_bytes());
    buf.extend((ctrl.hidden as u32).to_le_bytes());
    buf.push(ctrl.centralized as u8);
    buf.extend((ctrl.layers.len() as u32).to_le_bytes());
    for layer in &ctrl.layers {
        buf.push(layer.shared as u8);
        buf.extend((layer.actors.len() as u32).to_le_bytes());
        for net in &layer.actors {
            write_net(&mut buf, net);
        }
        for net in &layer.critics {
            write_net(&mut buf, net);
        }
    }
    buf
}

/// Parses a checkpoint blob; returns the controllers and the stored
/// configuration hash.
pub fn checkpoint_from_bytes(data: &[u8]) -> Result<(Controllers, u64), String> {
    let mut off = 0;
    if data.get(..4) != Some(&CHECKPOINT_MAGIC) {
        return Err("not a checkpoint file".into());
    }
    off += 4;
    let version = read_u32(data, &mut off)?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let config_hash = read_u64(data, &mut off)?;
    let hidden = read_u32(data, &mut off)? as usize;
    let centralized = *data.get(off).ok_or("truncated checkpoint")? != 0;
    off += 1;
    let n_layers = read_u32(data, &mut off)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let shared = *data.get(off).ok_or("truncated checkpoint")? != 0;
        off += 1;
        let count = read_u32(data, &mut off)? as usize;
        let mut actors = Vec::with_capacity(count);
        for _ in 0..count {
            actors.push(read_net(data, &mut off)?);
        }
        let mut critics = Vec::with_capacity(count);
        for _ in 0..count {
            critics.push(read_net(data, &mut off)?);
        }
        layers.push(LayerNets { actors, critics, shared });
    }
    Ok((Controllers { hidden, centralized, layers }, config_hash))
}
