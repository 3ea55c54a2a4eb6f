//! Recurrent policy/value networks: a single GRU cell with a linear head,
//! trained by exact backpropagation through time, plus the Adam optimizer
//! and the clipped-surrogate / mean-square losses used by the controllers.
//!
//! Everything is f64 and allocation-light so analytic gradients can be
//! validated against central finite differences.

use rand::Rng;

/// Logit offset that makes a masked action unsampleable.
pub const MASK_LOGIT: f64 = -1e9;

/// One-layer GRU followed by a linear output head. Parameters live in a
/// single flat vector (PyTorch GRUCell layout and update equations).
#[derive(Debug, Clone)]
pub struct GruNet {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub params: Vec<f64>,
}

/// Offsets of each parameter block inside the flat vector.
struct Blocks {
    w_ir: usize,
    w_iz: usize,
    w_in: usize,
    w_hr: usize,
    w_hz: usize,
    w_hn: usize,
    b_ir: usize,
    b_iz: usize,
    b_in: usize,
    b_hr: usize,
    b_hz: usize,
    b_hn: usize,
    w_head: usize,
    b_head: usize,
    total: usize,
}

fn blocks(i: usize, h: usize, o: usize) -> Blocks {
    let mut off = 0;
    let mut take = |n: usize| {
        let at = off;
        off += n;
        at
    };
    Blocks {
        w_ir: take(h * i),
        w_iz: take(h * i),
        w_in: take(h * i),
        w_hr: take(h * h),
        w_hz: take(h * h),
        w_hn: take(h * h),
        b_ir: take(h),
        b_iz: take(h),
        b_in: take(h),
        b_hr: take(h),
        b_hz: take(h),
        b_hn: take(h),
        w_head: take(o * h),
        b_head: take(o),
        total: off,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y += W x for a row-major (rows x cols) block.
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        y[r] += acc;
    }
}

/// y += W^T g (accumulate input-gradient through a row-major block).
fn matvec_t_acc(w: &[f64], g: &[f64], y: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            y[c] += row[c] * g[r];
        }
    }
}

/// dW += g (outer) x.
fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += g[r] * x[c];
        }
    }
}

/// Per-step activations cached for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn_pre: Vec<f64>,
    pub h: Vec<f64>,
    pub out: Vec<f64>,
}

impl GruNet {
    pub fn new<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let b = blocks(in_dim, hidden, out_dim);
        let k = 1.0 / (hidden as f64).sqrt();
        let params = (0..b.total).map(|_| rng.random_range(-k..k)).collect();
        Self { in_dim, hidden, out_dim, params }
    }

    pub fn param_count(&self) -> usize {
        blocks(self.in_dim, self.hidden, self.out_dim).total
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    /// One GRU step from `h_prev`, returning the full activation cache.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> StepCache {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(h_prev.len(), self.hidden);
        let b = blocks(self.in_dim, self.hidden, self.out_dim);
        let h = self.hidden;
        let p = &self.params;

        let mut r_pre = p[b.b_ir..b.b_ir + h].to_vec();
        let mut z_pre = p[b.b_iz..b.b_iz + h].to_vec();
        let mut n_in = p[b.b_in..b.b_in + h].to_vec();
        let mut hn_pre = p[b.b_hn..b.b_hn + h].to_vec();
        matvec_acc(&p[b.w_ir..], x, &mut r_pre, h, self.in_dim);
        matvec_acc(&p[b.w_iz..], x, &mut z_pre, h, self.in_dim);
        matvec_acc(&p[b.w_in..], x, &mut n_in, h, self.in_dim);
        matvec_acc(&p[b.w_hr..], h_prev, &mut r_pre, h, h);
        matvec_acc(&p[b.w_hz..], h_prev, &mut z_pre, h, h);
        matvec_acc(&p[b.w_hn..], h_prev, &mut hn_pre, h, h);
        for k in 0..h {
            r_pre[k] += p[b.b_hr + k];
            z_pre[k] += p[b.b_hz + k];
        }

        let r: Vec<f64> = r_pre.iter().map(|&v| sigmoid(v)).collect();
        let z: Vec<f64> = z_pre.iter().map(|&v| sigmoid(v)).collect();
        let n: Vec<f64> = (0..h).map(|k| (n_in[k] + r[k] * hn_pre[k]).tanh()).collect();
        let h_new: Vec<f64> = (0..h).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();

        let mut out = p[b.b_head..b.b_head + self.out_dim].to_vec();
        matvec_acc(&p[b.w_head..], &h_new, &mut out, self.out_dim, h);

        StepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), r, z, n, hn_pre, h: h_new, out }
    }

    /// Runs a sequence from a zero hidden state, caching every step.
    pub fn forward_seq(&self, xs: &[Vec<f64>]) -> Vec<StepCache> {
        let mut h = self.zero_hidden();
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let c = self.step(x, &h);
            h = c.h.clone();
            caches.push(c);
        }
        caches
    }

    /// Backpropagates `d_outs` (dL/d output per step) through the cached
    /// sequence, accumulating parameter gradients into `grad`.
    pub fn backward_seq(&self, caches: &[StepCache], d_outs: &[Vec<f64>], grad: &mut [f64]) {
        debug_assert_eq!(caches.len(), d_outs.len());
        debug_assert_eq!(grad.len(), self.param_count());
        let b = blocks(self.in_dim, self.hidden, self.out_dim);
        let h = self.hidden;
        let p = &self.params;

        let mut dh = vec![0.0; h];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let dout = &d_outs[t];
            // head
            outer_acc(&mut grad[b.w_head..b.w_head + self.out_dim * h], dout, &c.h, self.out_dim, h);
            for k in 0..self.out_dim {
                grad[b.b_head + k] += dout[k];
            }
            matvec_t_acc(&p[b.w_head..], dout, &mut dh, self.out_dim, h);

            // cell
            let mut dh_prev = vec![0.0; h];
            let mut dn_pre = vec![0.0; h];
            let mut dr_pre = vec![0.0; h];
            let mut dz_pre = vec![0.0; h];
            let mut dhn_pre = vec![0.0; h];
            for k in 0..h {
                let dn = dh[k] * (1.0 - c.z[k]);
                let dz = dh[k] * (c.h_prev[k] - c.n[k]);
                dh_prev[k] += dh[k] * c.z[k];
                dn_pre[k] = dn * (1.0 - c.n[k] * c.n[k]);
                let dr = dn_pre[k] * c.hn_pre[k];
                dhn_pre[k] = dn_pre[k] * c.r[k];
                dr_pre[k] = dr * c.r[k] * (1.0 - c.r[k]);
                dz_pre[k] = dz * c.z[k] * (1.0 - c.z[k]);
            }
            outer_acc(&mut grad[b.w_in..b.w_in + h * self.in_dim], &dn_pre, &c.x, h, self.in_dim);
            outer_acc(&mut grad[b.w_ir..b.w_ir + h * self.in_dim], &dr_pre, &c.x, h, self.in_dim);
            outer_acc(&mut grad[b.w_iz..b.w_iz + h * self.in_dim], &dz_pre, &c.x, h, self.in_dim);
            outer_acc(&mut grad[b.w_hn..b.w_hn + h * h], &dhn_pre, &c.h_prev, h, h);
            outer_acc(&mut grad[b.w_hr..b.w_hr + h * h], &dr_pre, &c.h_prev, h, h);
            outer_acc(&mut grad[b.w_hz..b.w_hz + h * h], &dz_pre, &c.h_prev, h, h);
            for k in 0..h {
                grad[b.b_in + k] += dn_pre[k];
                grad[b.b_ir + k] += dr_pre[k];
                grad[b.b_iz + k] += dz_pre[k];
                grad[b.b_hn + k] += dhn_pre[k];
                grad[b.b_hr + k] += dr_pre[k];
                grad[b.b_hz + k] += dz_pre[k];
            }
            matvec_t_acc(&p[b.w_hn..], &dhn_pre, &mut dh_prev, h, h);
            matvec_t_acc(&p[b.w_hr..], &dr_pre, &mut dh_prev, h, h);
            matvec_t_acc(&p[b.w_hz..], &dz_pre, &mut dh_prev, h, h);
            dh = dh_prev;
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|&lp| lp.exp()).collect()
}

/// Rescales `grad` in place when its L2 norm exceeds `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One stored decision sequence for the policy loss: the observations the
/// actor saw, the actions it took, whether the hold logit was masked, the
/// behavior log-probabilities and the (already normalized) advantages.
#[derive(Debug, Clone)]
pub struct ActorSeq {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub masked: Vec<bool>,
    pub old_logp: Vec<f64>,
    pub advantage: Vec<f64>,
}

/// One stored value sequence: critic inputs and return targets.
#[derive(Debug, Clone)]
pub struct CriticSeq {
    pub obs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Clipped-ratio surrogate loss (negated for descent) with an entropy bonus;
/// returns the loss and its exact parameter gradient.
pub fn actor_loss_and_grad(
    net: &GruNet,
    seqs: &[ActorSeq],
    clip: f64,
    entropy_coef: f64,
) -> (f64, Vec<f64>) {
    let total_steps: usize = seqs.iter().map(|s| s.obs.len()).sum();
    let mut grad = vec![0.0; net.param_count()];
    if total_steps == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / total_steps as f64;
    let mut loss = 0.0;
    for seq in seqs {
        let caches = net.forward_seq(&seq.obs);
        let mut d_outs = vec![vec![0.0; net.out_dim]; caches.len()];
        for (t, cache) in caches.iter().enumerate() {
            let mut logits = cache.out.clone();
            if seq.masked[t] {
                logits[0] += MASK_LOGIT;
            }
            assert!(logits.iter().all(|l| l.is_finite()), "non-finite actor logits");
            let logp = log_softmax(&logits);
            let probs: Vec<f64> = logp.iter().map(|&l| l.exp()).collect();
            let a = seq.actions[t];
            let ratio = (logp[a] - seq.old_logp[t]).exp();
            let adv = seq.advantage[t];
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
            let surrogate = unclipped.min(clipped);
            let entropy: f64 =
                probs.iter().zip(&logp).map(|(&p, &l)| if p > 0.0 { -p * l } else { 0.0 }).sum();
            loss -= scale * (surrogate + entropy_coef * entropy);

            // d surrogate / d logp(a) = ratio * adv on the active branch
            let active = unclipped <= clipped;
            let ds_dlogp = if active { ratio * adv } else { 0.0 };
            for k in 0..net.out_dim {
                let indicator = if k == a { 1.0 } else { 0.0 };
                let dlogp_dlk = indicator - probs[k];
                let dent_dlk = if probs[k] > 0.0 { -probs[k] * (logp[k] + entropy) } else { 0.0 };
                d_outs[t][k] = -scale * (ds_dlogp * dlogp_dlk + entropy_coef * dent_dlk);
            }
        }
        net.backward_seq(&caches, &d_outs, &mut grad);
    }
    (loss, grad)
}

/// Mean-square value loss and its exact parameter gradient.
pub fn critic_loss_and_grad(net: &GruNet, seqs: &[CriticSeq]) -> (f64, Vec<f64>) {
    let total_steps: usize = seqs.iter().map(|s| s.obs.len()).sum();
    let mut grad = vec![0.0; net.param_count()];
    if total_steps == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / total_steps as f64;
    let mut loss = 0.0;
    for seq in seqs {
        let caches = net.forward_seq(&seq.obs);
        let mut d_outs = vec![vec![0.0; 1]; caches.len()];
        for (t, cache) in caches.iter().enumerate() {
            let err = cache.out[0] - seq.target[t];
            loss += scale * err * err;
            d_outs[t][0] = scale * 2.0 * err;
        }
        net.backward_seq(&caches, &d_outs, &mut grad);
    }
    (loss, grad)
}
