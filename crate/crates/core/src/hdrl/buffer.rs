//! On-policy rollout storage, one buffer per (layer, agent), episode-segmented,
//! plus generalized advantage estimation.

/// One Dec-POMDP step as stored for training.
#[derive(Debug, Clone)]
pub struct Transition {
    /// Local observation the actor saw.
    pub obs: Vec<f64>,
    /// Concatenated global observation the critic saw.
    pub global_obs: Vec<f64>,
    /// 0 = hold, 1 = update (or a joint action index).
    pub action: usize,
    /// Whether the hold logit was masked when the action was sampled.
    pub masked: bool,
    pub logp: f64,
    pub value: f64,
    /// Shared layer reward, filled in when the slot's ledger lands.
    pub reward: f64,
}

/// Episodes of one agent within one epoch; slots skipped by the idle
/// mechanism simply do not appear.
#[derive(Debug, Clone, Default)]
pub struct AgentBuffer {
    pub episodes: Vec<Vec<Transition>>,
}

impl AgentBuffer {
    pub fn begin_episode(&mut self) {
        if self.episodes.last().map(|e| !e.is_empty()).unwrap_or(false) {
            self.episodes.push(Vec::new());
        } else if self.episodes.is_empty() {
            self.episodes.push(Vec::new());
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.episodes.is_empty() {
            self.episodes.push(Vec::new());
        }
        self.episodes.last_mut().unwrap().push(t);
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.episodes.clear();
    }
}

/// GAE over one contiguous trajectory:
/// A(t) = sum_{l=0}^{T-t} (gamma*lambda)^l [r(t+l) + gamma*V(t+l+1) - V(t+l)],
/// with V(T) = `bootstrap`.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "mismatched trajectory lengths");
    let t_len = rewards.len();
    let mut adv = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let next_v = if t + 1 < t_len { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Discounted reward-to-go targets with a terminal bootstrap.
pub fn returns_to_go(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// In-place batch normalization of advantages (mean 0, unit variance).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / adv.len() as f64;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}
