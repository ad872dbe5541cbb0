//! From-first-principles DQN: per-route Q-networks (2x16 ReLU MLP, 21
//! outputs), pooled replay buffers, linear epsilon annealing, Adam, and the
//! event-driven training loop.
//!
//! Targets are computed with the same network that is being updated (no
//! separate target network by default; an optional periodic copy can be
//! enabled for stability experiments). The update is the semi-gradient of
//! the squared error on the taken action only.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{Env, Snapshot, Step, World};
use crate::features::{build_state, layout, layout_hash, AwarenessLevel, FeatureConfig, StateVector};
use crate::ordergen::{generate_orders, DemandModel};
use crate::rewards::{delayed_reward, RewardConfig};
use crate::scalar::{real, Real};
use crate::scenario::PortId;

/// The action grid: 21 values covering [-1, 1] in steps of 0.1.
pub const N_ACTIONS: usize = 21;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("action index {0} outside the 21-action grid")]
    BadActionIndex(usize),
    #[error("input dimension mismatch: network expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged: non-finite loss")]
    NonFiniteLoss,
    #[error("reward failure: {0}")]
    Reward(#[from] crate::rewards::RewardError),
    #[error("engine failure: {0}")]
    Engine(#[from] crate::engine::EngineError),
}

/// Decodes an action index into the fractional action `-1 + 0.1 * index`.
pub fn action_decode(index: usize) -> Result<f64, LearnerError> {
    if index >= N_ACTIONS {
        return Err(LearnerError::BadActionIndex(index));
    }
    Ok(-1.0 + 0.1 * index as f64)
}

/// Linear annealing from `eps_start` at episode 0 to `eps_end` at
/// `eps_anneal_episodes`, constant afterwards.
pub fn epsilon(episode: u32, cfg: &TrainConfig) -> f64 {
    if episode >= cfg.eps_anneal_episodes || cfg.eps_anneal_episodes == 0 {
        return cfg.eps_end;
    }
    let t = episode as f64 / cfg.eps_anneal_episodes as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * t
}

// ---------------------------------------------------------------------------
// Q-network
// ---------------------------------------------------------------------------

/// Flat-parameter MLP: `params` holds, in order, W1 (h1 x in, row major),
/// b1, W2 (h2 x h1), b2, W3 (out x h2), b3.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<R: Real> {
    pub input_dim: usize,
    pub hidden: (usize, usize),
    pub params: Vec<R>,
}

/// Scratch buffers for forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace<R: Real> {
    z1: Vec<R>,
    h1: Vec<R>,
    z2: Vec<R>,
    h2: Vec<R>,
    q: Vec<R>,
    dz1: Vec<R>,
    dz2: Vec<R>,
}

impl<R: Real> QNetwork<R> {
    pub fn param_count(input_dim: usize, hidden: (usize, usize)) -> usize {
        let (h1, h2) = hidden;
        h1 * input_dim + h1 + h2 * h1 + h2 + N_ACTIONS * h2 + N_ACTIONS
    }

    /// Uniform init in +-sqrt(6 / (fan_in + fan_out)) per weight matrix,
    /// zero biases; deterministic given the rng state.
    pub fn init(input_dim: usize, hidden: (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let (h1, h2) = hidden;
        let mut params = vec![R::zero(); Self::param_count(input_dim, hidden)];
        let mut offset = 0;
        for (rows, cols) in [(h1, input_dim), (h2, h1), (N_ACTIONS, h2)] {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for w in params[offset..offset + rows * cols].iter_mut() {
                *w = real(rng.random_range(-bound..bound));
            }
            offset += rows * cols + rows; // skip the zero bias block
        }
        QNetwork { input_dim, hidden, params }
    }

    fn slices(&self) -> (usize, usize, usize, usize, usize, usize) {
        let (h1, h2) = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * self.input_dim;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + N_ACTIONS * h2;
        (w1, b1, w2, b2, w3, b3)
    }

    /// Deterministic forward pass; returns the 21 Q-values in `ws.q`.
    pub fn forward<'w>(&self, x: &[R], ws: &'w mut Workspace<R>) -> Result<&'w [R], LearnerError> {
        if x.len() != self.input_dim {
            return Err(LearnerError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let (h1n, h2n) = self.hidden;
        let (w1, b1, w2, b2, w3, b3) = self.slices();
        ws.z1.resize(h1n, R::zero());
        ws.h1.resize(h1n, R::zero());
        ws.z2.resize(h2n, R::zero());
        ws.h2.resize(h2n, R::zero());
        ws.q.resize(N_ACTIONS, R::zero());
        for i in 0..h1n {
            let row = &self.params[w1 + i * self.input_dim..w1 + (i + 1) * self.input_dim];
            let mut acc = self.params[b1 + i];
            for (w, xv) in row.iter().zip(x) {
                acc += *w * *xv;
            }
            ws.z1[i] = acc;
            ws.h1[i] = acc.max(R::zero());
        }
        for i in 0..h2n {
            let row = &self.params[w2 + i * h1n..w2 + (i + 1) * h1n];
            let mut acc = self.params[b2 + i];
            for (w, hv) in row.iter().zip(&ws.h1) {
                acc += *w * *hv;
            }
            ws.z2[i] = acc;
            ws.h2[i] = acc.max(R::zero());
        }
        for i in 0..N_ACTIONS {
            let row = &self.params[w3 + i * h2n..w3 + (i + 1) * h2n];
            let mut acc = self.params[b3 + i];
            for (w, hv) in row.iter().zip(&ws.h2) {
                acc += *w * *hv;
            }
            ws.q[i] = acc;
        }
        Ok(&ws.q)
    }

    pub fn forward_alloc(&self, x: &[R]) -> Result<Vec<R>, LearnerError> {
        let mut ws = Workspace::default();
        self.forward(x, &mut ws)?;
        Ok(ws.q)
    }
}

/// Greatest Q-value's index, ties to the lowest index.
pub fn argmax<R: Real>(q: &[R]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// One transition; `s` and `s_next` share a single layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience<R: Real> {
    pub s: Vec<R>,
    pub a: usize,
    pub r: R,
    pub s_next: Vec<R>,
    pub terminal: bool,
}

/// FIFO ring with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<R: Real> {
    capacity: usize,
    ring: Vec<Experience<R>>,
    next: usize,
}

impl<R: Real> ReplayBuffer<R> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { capacity, ring: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, e: Experience<R>) {
        if self.ring.len() < self.capacity {
            self.ring.push(e);
        } else {
            self.ring[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn get(&self, i: usize) -> &Experience<R> {
        &self.ring[i]
    }

    pub fn contains(&self, e: &Experience<R>) -> bool {
        self.ring.contains(e)
    }

    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, batch: usize) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.ring.len())).collect()
    }
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// Adam with the usual bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam<R: Real> {
    m: Vec<R>,
    v: Vec<R>,
    t: u64,
    beta1: R,
    beta2: R,
    eps: R,
}

impl<R: Real> Adam<R> {
    pub fn new(param_count: usize) -> Self {
        Adam {
            m: vec![R::zero(); param_count],
            v: vec![R::zero(); param_count],
            t: 0,
            beta1: real(0.9),
            beta2: real(0.999),
            eps: real(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut [R], grads: &[R], lr: R) {
        self.t += 1;
        let b1t = self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let b2t = self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (R::one() - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (R::one() - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / (R::one() - b1t);
            let v_hat = self.v[i] / (R::one() - b2t);
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// TD targets `y = r + gamma * max_a' Q(s', a')` with the given network;
/// terminal experiences use `y = r`.
pub fn compute_targets<R: Real>(
    net: &QNetwork<R>,
    batch: &[&Experience<R>],
    gamma: R,
    ws: &mut Workspace<R>,
) -> Result<Vec<R>, LearnerError> {
    let mut ys = Vec::with_capacity(batch.len());
    for e in batch {
        if e.terminal {
            ys.push(e.r);
        } else {
            let q = net.forward(&e.s_next, ws)?;
            ys.push(e.r + gamma * q[argmax(q)]);
        }
    }
    Ok(ys)
}

/// Mean squared error on the taken actions against fixed targets.
pub fn batch_loss_with_targets<R: Real>(
    net: &QNetwork<R>,
    batch: &[&Experience<R>],
    targets: &[R],
    ws: &mut Workspace<R>,
) -> Result<R, LearnerError> {
    let mut loss = R::zero();
    for (e, &y) in batch.iter().zip(targets) {
        let q = net.forward(&e.s, ws)?;
        let d = q[e.a] - y;
        loss += d * d;
    }
    Ok(loss / from_len::<R>(batch.len()))
}

fn from_len<R: Real>(n: usize) -> R {
    R::from_usize(n).expect("usize converts")
}

/// Semi-gradient of [`batch_loss_with_targets`] with respect to the
/// parameters, accumulated into `grads` (which is zeroed first).
pub fn batch_gradient<R: Real>(
    net: &QNetwork<R>,
    batch: &[&Experience<R>],
    targets: &[R],
    ws: &mut Workspace<R>,
    grads: &mut Vec<R>,
) -> Result<R, LearnerError> {
    grads.clear();
    grads.resize(net.params.len(), R::zero());
    let (h1n, h2n) = net.hidden;
    let (w1, b1, w2, b2, w3, b3) = net.slices();
    let scale = real::<R>(2.0) / from_len::<R>(batch.len());
    let mut loss = R::zero();

    for (e, &y) in batch.iter().zip(targets) {
        net.forward(&e.s, ws)?;
        let d = ws.q[e.a] - y;
        loss += d * d;
        let e_out = d * scale;

        // Output layer: only the taken action's row receives gradient.
        for j in 0..h2n {
            grads[w3 + e.a * h2n + j] += e_out * ws.h2[j];
        }
        grads[b3 + e.a] += e_out;

        ws.dz2.resize(h2n, R::zero());
        for j in 0..h2n {
            let dh2 = e_out * net.params[w3 + e.a * h2n + j];
            ws.dz2[j] = if ws.z2[j] > R::zero() { dh2 } else { R::zero() };
        }
        for j in 0..h2n {
            if ws.dz2[j] == R::zero() {
                continue;
            }
            let g = ws.dz2[j];
            for k in 0..h1n {
                grads[w2 + j * h1n + k] += g * ws.h1[k];
            }
            grads[b2 + j] += g;
        }
        ws.dz1.resize(h1n, R::zero());
        for k in 0..h1n {
            let mut dh1 = R::zero();
            for j in 0..h2n {
                dh1 += ws.dz2[j] * net.params[w2 + j * h1n + k];
            }
            ws.dz1[k] = if ws.z1[k] > R::zero() { dh1 } else { R::zero() };
        }
        for k in 0..h1n {
            if ws.dz1[k] == R::zero() {
                continue;
            }
            let g = ws.dz1[k];
            for (i, xv) in e.s.iter().enumerate() {
                grads[w1 + k * net.input_dim + i] += g * *xv;
            }
            grads[b1 + k] += g;
        }
    }
    Ok(loss / from_len::<R>(batch.len()))
}

/// One optimization step: targets with the same network, semi-gradient,
/// Adam. Returns the pre-step loss; a non-finite loss is surfaced as an
/// error instead of being silently applied.
pub fn train_step<R: Real>(
    net: &mut QNetwork<R>,
    adam: &mut Adam<R>,
    batch: &[&Experience<R>],
    gamma: R,
    lr: R,
    ws: &mut Workspace<R>,
    grads: &mut Vec<R>,
) -> Result<R, LearnerError> {
    assert!(!batch.is_empty());
    let targets = compute_targets(net, batch, gamma, ws)?;
    let loss = batch_gradient(net, batch, &targets, ws, grads)?;
    if !loss.is_finite() {
        return Err(LearnerError::NonFiniteLoss);
    }
    adam.step(&mut net.params, grads, lr);
    Ok(loss)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: u32,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_episodes: u32,
    pub lr: f64,
    pub batch: usize,
    pub gamma: f64,
    /// Gradient steps per route per episode (the inner training loop bound).
    pub updates_per_episode: u32,
    /// Replay capacity per route.
    pub capacity: usize,
    pub seed: u64,
    /// Optional target-network refresh period in gradient steps; `None`
    /// computes targets with the live network.
    pub target_sync: Option<u32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 10_000,
            eps_start: 0.5,
            eps_end: 0.01,
            eps_anneal_episodes: 8_000,
            lr: 1e-4,
            batch: 32,
            gamma: 0.99,
            updates_per_episode: 128,
            capacity: 100_000,
            seed: 0,
            target_sync: None,
        }
    }
}

/// Order-trace seed used for training episode `e` (even numbers; evaluation
/// uses odd ones so the seed spaces never overlap).
pub fn train_order_seed(base_seed: u64, episode: u32) -> u64 {
    2u64.wrapping_mul(base_seed.wrapping_add(episode as u64))
}

/// Order-trace seed for evaluation episode `i` (odd numbers).
pub fn eval_order_seed(base_seed: u64, i: u32) -> u64 {
    2u64.wrapping_mul(base_seed.wrapping_add(i as u64)).wrapping_add(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: u32,
    pub epsilon: f64,
    pub fulfillment_ratio: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<R: Real> {
    /// One network per route, indexed like `ScenarioConfig::routes`.
    pub nets: Vec<QNetwork<R>>,
    pub curve: Vec<CurvePoint>,
}

struct Pending<R: Real> {
    snap: Snapshot,
    s: StateVector<R>,
    a: usize,
    port: PortId,
}

/// The full training loop: per episode, a fresh order trace (episode-indexed
/// seed), an event loop storing delayed-reward experiences into per-route
/// pooled buffers, then `updates_per_episode` gradient steps per route.
pub fn run_training<R: Real>(
    world: &Arc<World>,
    model: &DemandModel,
    fcfg: &FeatureConfig,
    rcfg: &RewardConfig<R>,
    tcfg: &TrainConfig,
) -> Result<TrainOutput<R>, LearnerError> {
    let input_dim = layout(world, fcfg).len;
    let n_routes = world.num_routes();
    let mut init_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x51_7cc1_b7));
    let mut nets: Vec<QNetwork<R>> =
        (0..n_routes).map(|_| QNetwork::init(input_dim, (16, 16), &mut init_rng)).collect();
    let mut adams: Vec<Adam<R>> =
        nets.iter().map(|n| Adam::new(n.params.len())).collect();
    let mut buffers: Vec<ReplayBuffer<R>> =
        (0..n_routes).map(|_| ReplayBuffer::new(tcfg.capacity)).collect();
    let mut explore_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0xe65));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x5a3));
    let mut ws = Workspace::default();
    let mut grads: Vec<R> = Vec::new();
    let mut targets: Vec<QNetwork<R>> = Vec::new();
    let mut steps_since_sync = 0u32;

    let gamma: R = real(tcfg.gamma);
    let lr: R = real(tcfg.lr);
    let mut curve = Vec::with_capacity(tcfg.episodes as usize);

    for episode in 0..tcfg.episodes {
        let eps = epsilon(episode, tcfg);
        let orders = generate_orders(model, world.config.episode_days, train_order_seed(tcfg.seed, episode));
        let total_ordered: i64 = orders.iter().map(|o| o.quantity).sum();
        let mut env = Env::new(world.clone(), Arc::new(orders));
        let mut pending: Vec<Option<Pending<R>>> = (0..world.num_vessels()).map(|_| None).collect();

        loop {
            match env.advance_until_event()? {
                Step::Event(event) => {
                    let snap = env.snapshot();
                    let s = build_state::<R>(world, &snap, fcfg);
                    let route = world.vessel_route(event.vessel);
                    if let Some(prev) = pending[event.vessel.idx()].take() {
                        let r = delayed_reward(world, &prev.snap, &snap, prev.port, route, fcfg.level, rcfg)?;
                        buffers[route.idx()].push(Experience {
                            s: prev.s.values,
                            a: prev.a,
                            r,
                            s_next: s.values.clone(),
                            terminal: false,
                        });
                    }
                    let a = if explore_rng.random::<f64>() < eps {
                        explore_rng.random_range(0..N_ACTIONS)
                    } else {
                        let q = nets[route.idx()].forward(&s.values, &mut ws)?;
                        argmax(q)
                    };
                    env.execute_action(event, action_decode(a)?)?;
                    pending[event.vessel.idx()] = Some(Pending { snap, s, a, port: event.port });
                }
                Step::End => break,
            }
        }
        let final_snap = env.final_snapshot();
        for (vi, slot) in pending.iter_mut().enumerate() {
            if let Some(prev) = slot.take() {
                let route = world.vessel_route(crate::scenario::VesselId(vi as u16));
                let r = delayed_reward(world, &prev.snap, &final_snap, prev.port, route, fcfg.level, rcfg)?;
                let s_next = prev.s.values.clone();
                buffers[route.idx()].push(Experience { s: prev.s.values, a: prev.a, r, s_next, terminal: true });
            }
        }

        let mut loss_sum = 0.0f64;
        let mut loss_count = 0u32;
        for _ in 0..tcfg.updates_per_episode {
            for ri in 0..n_routes {
                if buffers[ri].len() < tcfg.batch {
                    continue;
                }
                let idx = buffers[ri].sample_indices(&mut sample_rng, tcfg.batch);
                let batch: Vec<&Experience<R>> = idx.iter().map(|&i| buffers[ri].get(i)).collect();
                let loss = if let Some(sync) = tcfg.target_sync {
                    if targets.len() != n_routes || steps_since_sync >= sync {
                        targets = nets.clone();
                        steps_since_sync = 0;
                    }
                    let ys = compute_targets(&targets[ri], &batch, gamma, &mut ws)?;
                    let loss = batch_gradient(&nets[ri], &batch, &ys, &mut ws, &mut grads)?;
                    if !loss.is_finite() {
                        return Err(LearnerError::NonFiniteLoss);
                    }
                    adams[ri].step(&mut nets[ri].params, &grads, lr);
                    steps_since_sync += 1;
                    loss
                } else {
                    train_step(&mut nets[ri], &mut adams[ri], &batch, gamma, lr, &mut ws, &mut grads)?
                };
                loss_sum += loss.to_f64().unwrap_or(f64::NAN);
                loss_count += 1;
            }
        }

        let failed = env.total_shortage();
        let ratio = if total_ordered == 0 {
            1.0
        } else {
            (total_ordered - failed) as f64 / total_ordered as f64
        };
        curve.push(CurvePoint {
            episode,
            epsilon: eps,
            fulfillment_ratio: ratio,
            mean_loss: if loss_count == 0 { 0.0 } else { loss_sum / loss_count as f64 },
        });
    }

    Ok(TrainOutput { nets, curve })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"ECRLABQ1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub layout_hash: u64,
    pub level: AwarenessLevel,
    pub n: u16,
    pub m: u16,
    pub staleness_k: u32,
    pub norm: f64,
    pub route_id: String,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint is truncated or corrupt")]
    Corrupt,
    #[error("layout hash mismatch: checkpoint {checkpoint:#x}, current config {current:#x}")]
    LayoutMismatch { checkpoint: u64, current: u64 },
    #[error("checkpoint for route {route} missing in {dir}")]
    MissingRoute { route: String, dir: String },
}

/// Writes one per-route network: magic, version, layout hash, feature
/// metadata, dimensions, route id, then all parameters as little-endian
/// 64-bit floats in documented layer order.
pub fn save_checkpoint<R: Real>(
    path: &Path,
    net: &QNetwork<R>,
    world: &World,
    fcfg: &FeatureConfig,
    route_id: &str,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&layout_hash(world, fcfg).to_le_bytes());
    buf.push(match fcfg.level {
        AwarenessLevel::SelfAware => 0,
        AwarenessLevel::Territorial => 1,
        AwarenessLevel::Diplomatic => 2,
    });
    buf.extend_from_slice(&(fcfg.n as u16).to_le_bytes());
    buf.extend_from_slice(&(fcfg.m as u16).to_le_bytes());
    buf.extend_from_slice(&fcfg.staleness_k.to_le_bytes());
    buf.extend_from_slice(&fcfg.norm.to_le_bytes());
    buf.extend_from_slice(&(net.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(net.hidden.0 as u32).to_le_bytes());
    buf.extend_from_slice(&(net.hidden.1 as u32).to_le_bytes());
    buf.extend_from_slice(&(N_ACTIONS as u32).to_le_bytes());
    buf.extend_from_slice(&(route_id.len() as u16).to_le_bytes());
    buf.extend_from_slice(route_id.as_bytes());
    buf.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        buf.extend_from_slice(&p.to_f64().expect("finite parameter").to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint back; parameters come out at the requested scalar
/// precision (bit-exact for `f64`).
pub fn load_checkpoint<R: Real>(path: &Path) -> Result<(QNetwork<R>, CheckpointMeta), CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *at + n > bytes.len() {
            return Err(CheckpointError::Corrupt);
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 8)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let layout_hash = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
    let level = match take(&mut at, 1)?[0] {
        0 => AwarenessLevel::SelfAware,
        1 => AwarenessLevel::Territorial,
        2 => AwarenessLevel::Diplomatic,
        _ => return Err(CheckpointError::Corrupt),
    };
    let n = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap());
    let m = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap());
    let staleness_k = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    let norm = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
    let input_dim = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let h1 = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let h2 = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let out = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    if out != N_ACTIONS {
        return Err(CheckpointError::Corrupt);
    }
    let id_len = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
    let route_id = String::from_utf8(take(&mut at, id_len)?.to_vec()).map_err(|_| CheckpointError::Corrupt)?;
    let count = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
    if count != QNetwork::<R>::param_count(input_dim, (h1, h2)) {
        return Err(CheckpointError::Corrupt);
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let v = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        params.push(real::<R>(v));
    }
    if at != bytes.len() {
        return Err(CheckpointError::Corrupt);
    }
    Ok((
        QNetwork { input_dim, hidden: (h1, h2), params },
        CheckpointMeta { layout_hash, level, n, m, staleness_k, norm, route_id },
    ))
}

/// Writes one checkpoint per route into `dir` as `qnet-<route>.bin`.
pub fn save_checkpoint_set<R: Real>(
    dir: &Path,
    nets: &[QNetwork<R>],
    world: &World,
    fcfg: &FeatureConfig,
) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir)?;
    for (ri, net) in nets.iter().enumerate() {
        let id = &world.config.routes[ri].id;
        save_checkpoint(&dir.join(format!("qnet-{id}.bin")), net, world, fcfg, id)?;
    }
    Ok(())
}

/// Loads the per-route set back in route order, rebuilding the feature
/// config from the stored metadata and validating the layout hash against
/// the current scenario.
pub fn load_checkpoint_set<R: Real>(
    dir: &Path,
    world: &World,
) -> Result<(Vec<QNetwork<R>>, FeatureConfig), CheckpointError> {
    let mut nets = Vec::new();
    let mut fcfg: Option<FeatureConfig> = None;
    for route in &world.config.routes {
        let path = dir.join(format!("qnet-{}.bin", route.id));
        if !path.exists() {
            return Err(CheckpointError::MissingRoute {
                route: route.id.clone(),
                dir: dir.display().to_string(),
            });
        }
        let (net, meta) = load_checkpoint::<R>(&path)?;
        let cfg = FeatureConfig {
            level: meta.level,
            n: meta.n as usize,
            m: meta.m as usize,
            staleness_k: meta.staleness_k,
            norm: meta.norm,
        };
        let current = layout_hash(world, &cfg);
        if current != meta.layout_hash {
            return Err(CheckpointError::LayoutMismatch { checkpoint: meta.layout_hash, current });
        }
        if let Some(prev) = &fcfg {
            if prev.level != cfg.level || prev.n != cfg.n || prev.m != cfg.m {
                return Err(CheckpointError::Corrupt);
            }
        }
        fcfg = Some(cfg);
        nets.push(net);
    }
    Ok((nets, fcfg.expect("at least one route")))
}
