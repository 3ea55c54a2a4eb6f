//! Slot executor shared by every policy: per slot, each layer observes the
//! state left by the layer above, decides update-or-hold per edge, gates the
//! candidate rules through, then the environment advances.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use crate::domain::{Layer, SlotLedger, Task, UpdateAction};
use crate::rewards::{layer_reward, RewardCoefficients};
use crate::rules::{self, RuleInputs, RuleParams, RuleTriple};
use crate::simenv::{Decisions, Env, SimError};
use crate::timescale::{baseline_action, BaselineKind, EdgeMetrics};
use crate::workload::WorkloadScript;

use super::buffer::{AgentBuffer, Transition};
use super::net::GruNet;
use super::{act, hold_infeasible, observe, value, ActMode, Controllers, PendingView};

/// Executor settings for one rollout.
#[derive(Debug, Clone)]
pub struct RolloutCfg {
    pub rules: RuleTriple,
    pub rule_params: RuleParams,
    /// Discriminator-aided forcing of updates when holding is infeasible.
    /// With safety off the environment must run non-strict.
    pub safety: bool,
}

/// Everything a policy may look at when deciding one (layer, edge) bit.
pub struct DecideCtx<'a> {
    pub slot: u64,
    pub edge: usize,
    /// This agent's local observation for the layer.
    pub obs: &'a [f64],
    /// Concatenation of all agents' observations for the layer.
    pub global_obs: &'a [f64],
    /// Slot-0 initialization: the gate adopts the candidate regardless.
    pub init: bool,
    /// The discriminator found holding infeasible; the update is mandatory.
    pub unsafe_hold: bool,
    /// The edge holds no waiting or executing tasks.
    pub idle: bool,
    pub metrics: EdgeMetrics,
}

/// A per-slot, per-edge, per-layer update/hold policy.
pub trait UpdateDecider {
    fn begin_episode(&mut self) {}
    /// Called once per slot before any layer decides.
    fn begin_slot(&mut self, _env: &Env, _inputs: &RuleInputs) {}
    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool;
    /// Called after the environment advanced with the slot's ledger.
    fn end_slot(&mut self, _ledger: &SlotLedger) {}
}

/// The four non-learning baselines as a decider.
pub struct BaselineDecider {
    pub kind: BaselineKind,
}

impl UpdateDecider for BaselineDecider {
    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        let bit = baseline_action(&self.kind, ctx.slot, &ctx.metrics).layer(layer);
        bit || ctx.unsafe_hold
    }
}

/// Constant update bits; the all-update instance reproduces SST exactly.
pub struct FixedDecider(pub UpdateAction);

impl UpdateDecider for FixedDecider {
    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        self.0.layer(layer) || ctx.unsafe_hold
    }
}

/// Closure-driven bits for tests and randomized episodes.
pub struct ScriptedDecider<F: FnMut(Layer, usize, u64) -> bool>(pub F);

impl<F: FnMut(Layer, usize, u64) -> bool> UpdateDecider for ScriptedDecider<F> {
    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        self.0(layer, ctx.edge, ctx.slot) || ctx.unsafe_hold
    }
}

/// Rollout buffers per (layer, agent).
#[derive(Debug, Clone, Default)]
pub struct TrainStore {
    pub layers: Vec<Vec<AgentBuffer>>,
}

impl TrainStore {
    pub fn new(num_layers: usize, num_agents: usize) -> Self {
        Self { layers: vec![vec![AgentBuffer::default(); num_agents]; num_layers] }
    }

    pub fn total(&self, layer: usize) -> usize {
        self.layers[layer].iter().map(|b| b.len()).sum()
    }
}

/// The layered controller stack acting as a decider: decentralized actors,
/// optional transition collection with centralized value estimates, the
/// idle-skip default action and discriminator masking.
pub struct LearnedDecider<'a> {
    ctrl: &'a Controllers,
    actor_h: Vec<Vec<Vec<f64>>>,
    critic_h: Vec<Vec<Vec<f64>>>,
    /// None = deterministic evaluation.
    rng: Option<ChaCha8Rng>,
    store: Option<TrainStore>,
    coeffs: RewardCoefficients,
    /// Idle edges fall back to all-hold without a stored transition.
    pub skip_idle: bool,
    /// Layers forced to update every slot (per-layer ablation); they store
    /// no transitions.
    pub force_layers: [bool; 3],
    pending: Vec<Vec<Option<Transition>>>,
}

impl<'a> LearnedDecider<'a> {
    pub fn new(ctrl: &'a Controllers, num_agents: usize, coeffs: RewardCoefficients) -> Self {
        let zero_a: Vec<Vec<Vec<f64>>> = ctrl
            .layers
            .iter()
            .map(|l| (0..num_agents).map(|i| l.actor(i).zero_hidden()).collect())
            .collect();
        let zero_c: Vec<Vec<Vec<f64>>> = ctrl
            .layers
            .iter()
            .map(|l| (0..num_agents).map(|i| l.critic(i).zero_hidden()).collect())
            .collect();
        Self {
            ctrl,
            actor_h: zero_a,
            critic_h: zero_c,
            rng: None,
            store: None,
            coeffs,
            skip_idle: true,
            force_layers: [false; 3],
            pending: vec![vec![None; num_agents]; 3],
        }
    }

    /// Sample actions from the policy instead of argmaxing.
    pub fn sampling(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }

    /// Collect transitions (runs the critics).
    pub fn collecting(mut self) -> Self {
        let agents = self.actor_h[0].len();
        self.store = Some(TrainStore::new(3, agents));
        self
    }

    /// Hands back the collected buffers and the sampling stream.
    pub fn finish(self) -> (Option<TrainStore>, Option<ChaCha8Rng>) {
        (self.store, self.rng)
    }
}

impl UpdateDecider for LearnedDecider<'_> {
    fn begin_episode(&mut self) {
        for (li, layer) in self.ctrl.layers.iter().enumerate() {
            for i in 0..self.actor_h[li].len() {
                self.actor_h[li][i] = layer.actor(i).zero_hidden();
                self.critic_h[li][i] = layer.critic(i).zero_hidden();
            }
        }
        if let Some(store) = &mut self.store {
            for layer in &mut store.layers {
                for buf in layer {
                    buf.begin_episode();
                }
            }
        }
    }

    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        let li = layer.index();
        if self.force_layers[li] {
            return true;
        }
        if self.skip_idle && ctx.idle {
            // default action: continue previous decisions (update only when
            // the discriminator insists); no transition is recorded
            return ctx.unsafe_hold;
        }
        let mask = ctx.init || ctx.unsafe_hold;
        let nets = self.ctrl.layer(layer);
        let mut mode = match &mut self.rng {
            Some(rng) => ActMode::Sample(rng),
            None => ActMode::Greedy,
        };
        let out = act(
            nets.actor(ctx.edge),
            ctx.obs,
            &mut self.actor_h[li][ctx.edge],
            mask,
            &mut mode,
        );
        if self.store.is_some() {
            let critic_in: &[f64] =
                if self.ctrl.centralized { ctx.global_obs } else { ctx.obs };
            let v = value(nets.critic(ctx.edge), critic_in, &mut self.critic_h[li][ctx.edge]);
            self.pending[li][ctx.edge] = Some(Transition {
                obs: ctx.obs.to_vec(),
                global_obs: critic_in.to_vec(),
                action: out.action,
                masked: out.masked,
                logp: out.logp,
                value: v,
                reward: f64::NAN,
            });
        }
        out.action == 1
    }

    fn end_slot(&mut self, ledger: &SlotLedger) {
        let Some(store) = &mut self.store else {
            for layer in &mut self.pending {
                for slot in layer.iter_mut() {
                    *slot = None;
                }
            }
            return;
        };
        for (li, layer) in Layer::ALL.iter().enumerate() {
            let r = layer_reward(*layer, ledger, &self.coeffs);
            for (agent, pending) in self.pending[li].iter_mut().enumerate() {
                if let Some(mut t) = pending.take() {
                    t.reward = r;
                    store.layers[li][agent].push(t);
                }
            }
        }
    }
}

/// Outcome of one executed slot.
pub struct SlotOutcome {
    pub ledger: SlotLedger,
    /// Wall-clock time of the decision phase (all layers, all edges).
    pub decision_time: Duration,
}

/// Executes one slot: layered observation, decision, gating, then the
/// environment step.
pub fn run_slot(
    env: &mut Env,
    arrivals: &[Task],
    rcfg: &RolloutCfg,
    decider: &mut dyn UpdateDecider,
) -> Result<SlotOutcome, SimError> {
    let slot = env.slot();
    let cfg = env.cfg().clone();
    let n = cfg.num_edges;
    let init = slot == 0;
    let inputs = RuleInputs::from_env(env);
    decider.begin_slot(env, &inputs);
    let metrics: Vec<EdgeMetrics> = (0..n).map(|i| env.edge_metrics(i)).collect();
    let idle: Vec<bool> = (0..n).map(|i| env.edge_idle(i)).collect();

    let started = Instant::now();

    // Layer 1: placement
    let mut bits1 = vec![false; n];
    {
        let pend = PendingView { placement: &env.state.placement, offload: &env.state.offload };
        let obs: Vec<Vec<f64>> =
            (0..n).map(|i| observe(Layer::Placement, env, &inputs, &pend, i)).collect();
        let global: Vec<f64> = obs.iter().flatten().copied().collect();
        for i in 0..n {
            let ctx = DecideCtx {
                slot,
                edge: i,
                obs: &obs[i],
                global_obs: &global,
                init,
                unsafe_hold: false,
                idle: idle[i],
                metrics: metrics[i],
            };
            bits1[i] = decider.decide(Layer::Placement, &ctx);
        }
    }
    let cand_x = rules::place(
        rcfg.rules.placement,
        &cfg,
        &env.state.placement,
        &rcfg.rule_params,
        &inputs,
    );
    let x_t: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            if init || bits1[i] {
                cand_x[i].clone()
            } else {
                env.state.placement[i].clone()
            }
        })
        .collect();

    // Layer 2: offloading, observed after Layer-1's executed action
    let mut bits2 = vec![false; n];
    {
        let pend = PendingView { placement: &x_t, offload: &env.state.offload };
        let obs: Vec<Vec<f64>> =
            (0..n).map(|i| observe(Layer::Offloading, env, &inputs, &pend, i)).collect();
        let global: Vec<f64> = obs.iter().flatten().copied().collect();
        for i in 0..n {
            let unsafe_hold =
                rcfg.safety && hold_infeasible(Layer::Offloading, env, &pend, i);
            let ctx = DecideCtx {
                slot,
                edge: i,
                obs: &obs[i],
                global_obs: &global,
                init,
                unsafe_hold,
                idle: idle[i],
                metrics: metrics[i],
            };
            bits2[i] = decider.decide(Layer::Offloading, &ctx) || unsafe_hold;
        }
    }
    let cand_y = rules::offload(rcfg.rules.offload, &cfg, &x_t, &rcfg.rule_params, &inputs);
    let y_t: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if init || bits2[i] {
                cand_y[i].clone()
            } else {
                env.state.offload[i].clone()
            }
        })
        .collect();

    // Layer 3: allocation, observed after Layer-2's executed action
    let mut bits3 = vec![false; n];
    {
        let pend = PendingView { placement: &x_t, offload: &y_t };
        let obs: Vec<Vec<f64>> =
            (0..n).map(|i| observe(Layer::Allocation, env, &inputs, &pend, i)).collect();
        let global: Vec<f64> = obs.iter().flatten().copied().collect();
        for i in 0..n {
            let unsafe_hold =
                rcfg.safety && hold_infeasible(Layer::Allocation, env, &pend, i);
            let ctx = DecideCtx {
                slot,
                edge: i,
                obs: &obs[i],
                global_obs: &global,
                init,
                unsafe_hold,
                idle: idle[i],
                metrics: metrics[i],
            };
            bits3[i] = decider.decide(Layer::Allocation, &ctx) || unsafe_hold;
        }
    }
    let cand_z = rules::allocate(rcfg.rules.allocation, &cfg, &inputs);
    let z_t: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if init || bits3[i] {
                cand_z[i].clone()
            } else {
                env.state.allocation[i].clone()
            }
        })
        .collect();

    let decision_time = started.elapsed();
    let bits: Vec<UpdateAction> = (0..n)
        .map(|i| UpdateAction { a1: bits1[i], a2: bits2[i], a3: bits3[i] })
        .collect();
    let decisions = Decisions { placement: x_t, offload: y_t, allocation: z_t, bits };
    let ledger = env.step(&decisions, arrivals)?;
    decider.end_slot(&ledger);
    Ok(SlotOutcome { ledger, decision_time })
}

/// Replays a whole script; `episode_len` inserts episode boundaries for
/// recurrent state and buffer segmentation.
pub fn run_script(
    env: &mut Env,
    script: &WorkloadScript,
    rcfg: &RolloutCfg,
    decider: &mut dyn UpdateDecider,
    episode_len: Option<u64>,
) -> Result<(Vec<SlotLedger>, Vec<Duration>), SimError> {
    let mut ledgers = Vec::with_capacity(script.horizon as usize);
    let mut times = Vec::with_capacity(script.horizon as usize);
    for t in 0..script.horizon {
        let boundary = match episode_len {
            Some(len) => t % len == 0,
            None => t == 0,
        };
        if boundary {
            decider.begin_episode();
        }
        let out = run_slot(env, script.arrivals_at(t), rcfg, decider)?;
        ledgers.push(out.ledger);
        times.push(out.decision_time);
    }
    Ok((ledgers, times))
}

/// Total gated profit of a ledger sequence.
pub fn total_profit(ledgers: &[SlotLedger]) -> f64 {
    ledgers.iter().map(|l| l.total_profit()).sum()
}

/// Convenience: evaluate one baseline on a script from a fresh environment.
pub fn evaluate_baseline(
    cfg: &crate::domain::ClusterConfig,
    script: &WorkloadScript,
    rcfg: &RolloutCfg,
    kind: BaselineKind,
    env_options: crate::simenv::EnvOptions,
) -> Result<Vec<SlotLedger>, SimError> {
    let mut env = Env::new(cfg.clone(), env_options);
    let mut decider = BaselineDecider { kind };
    let (ledgers, _) = run_script(&mut env, script, rcfg, &mut decider, None)?;
    Ok(ledgers)
}

/// The no-decomposition ablation: one controller per edge choosing all
/// three bits jointly from the concatenated observation, rewarded with the
/// slot's total profit.
pub struct JointNets {
    pub actors: Vec<GruNet>,
    pub critics: Vec<GruNet>,
    pub centralized: bool,
}

impl JointNets {
    pub fn new(
        cfg: &crate::domain::ClusterConfig,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::with_hold_bias(cfg, hidden, 0.0, rng)
    }

    /// `hold_bias` raises the all-hold action's initial head bias.
    pub fn with_hold_bias(
        cfg: &crate::domain::ClusterConfig,
        hidden: usize,
        hold_bias: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = cfg.num_edges;
        let d: usize = Layer::ALL.iter().map(|&l| super::obs_dim(l, cfg)).sum();
        let actors = (0..n)
            .map(|_| {
                let mut net = GruNet::new(d, hidden, 8, rng);
                let head_bias = net.param_count() - net.out_dim;
                net.params[head_bias] += hold_bias;
                net
            })
            .collect();
        let critics = (0..n).map(|_| GruNet::new(d * n, hidden, 1, rng)).collect();
        Self { actors, critics, centralized: true }
    }
}

/// Decider over `JointNets`. The joint action is sampled once per slot per
/// edge (before any gating) and its three bits are replayed as the layers
/// come; the safety discriminator still overrides at execution time.
pub struct JointDecider<'a> {
    nets: &'a JointNets,
    actor_h: Vec<Vec<f64>>,
    critic_h: Vec<Vec<f64>>,
    rng: Option<ChaCha8Rng>,
    store: Option<Vec<AgentBuffer>>,
    skip_idle: bool,
    chosen: Vec<Option<usize>>,
    pending: Vec<Option<Transition>>,
}

impl<'a> JointDecider<'a> {
    pub fn new(nets: &'a JointNets) -> Self {
        let n = nets.actors.len();
        Self {
            nets,
            actor_h: nets.actors.iter().map(|a| a.zero_hidden()).collect(),
            critic_h: nets.critics.iter().map(|c| c.zero_hidden()).collect(),
            rng: None,
            store: None,
            skip_idle: true,
            chosen: vec![None; n],
            pending: vec![None; n],
        }
    }

    pub fn sampling(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn collecting(mut self) -> Self {
        self.store = Some(vec![AgentBuffer::default(); self.nets.actors.len()]);
        self
    }

    pub fn finish(self) -> (Option<Vec<AgentBuffer>>, Option<ChaCha8Rng>) {
        (self.store, self.rng)
    }
}

impl UpdateDecider for JointDecider<'_> {
    fn begin_episode(&mut self) {
        for (i, a) in self.nets.actors.iter().enumerate() {
            self.actor_h[i] = a.zero_hidden();
        }
        for (i, c) in self.nets.critics.iter().enumerate() {
            self.critic_h[i] = c.zero_hidden();
        }
        if let Some(store) = &mut self.store {
            for buf in store {
                buf.begin_episode();
            }
        }
    }

    fn begin_slot(&mut self, env: &Env, inputs: &RuleInputs) {
        let n = env.cfg().num_edges;
        let pend = PendingView { placement: &env.state.placement, offload: &env.state.offload };
        let per_edge: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut o = observe(Layer::Placement, env, inputs, &pend, i);
                o.extend(observe(Layer::Offloading, env, inputs, &pend, i));
                o.extend(observe(Layer::Allocation, env, inputs, &pend, i));
                o
            })
            .collect();
        let global: Vec<f64> = per_edge.iter().flatten().copied().collect();
        for i in 0..n {
            self.chosen[i] = None;
            self.pending[i] = None;
            if env.slot() == 0 {
                continue; // initialization slot adopts candidates anyway
            }
            if self.skip_idle && env.edge_idle(i) {
                continue;
            }
            let mut mode = match &mut self.rng {
                Some(rng) => ActMode::Sample(rng),
                None => ActMode::Greedy,
            };
            let out = act(&self.nets.actors[i], &per_edge[i], &mut self.actor_h[i], false, &mut mode);
            self.chosen[i] = Some(out.action);
            if self.store.is_some() {
                let critic_in: &[f64] =
                    if self.nets.centralized { &global } else { &per_edge[i] };
                let v = value(&self.nets.critics[i], critic_in, &mut self.critic_h[i]);
                self.pending[i] = Some(Transition {
                    obs: per_edge[i].clone(),
                    global_obs: critic_in.to_vec(),
                    action: out.action,
                    masked: false,
                    logp: out.logp,
                    value: v,
                    reward: f64::NAN,
                });
            }
        }
    }

    fn decide(&mut self, layer: Layer, ctx: &DecideCtx) -> bool {
        let bit = match self.chosen[ctx.edge] {
            Some(action) => match layer {
                Layer::Placement => action & 4 != 0,
                Layer::Offloading => action & 2 != 0,
                Layer::Allocation => action & 1 != 0,
            },
            None => false,
        };
        bit || ctx.unsafe_hold
    }

    fn end_slot(&mut self, ledger: &SlotLedger) {
        let Some(store) = &mut self.store else {
            return;
        };
        let r = ledger.total_profit();
        for (agent, pending) in self.pending.iter_mut().enumerate() {
            if let Some(mut t) = pending.take() {
                t.reward = r;
                store[agent].push(t);
            }
        }
    }
}
