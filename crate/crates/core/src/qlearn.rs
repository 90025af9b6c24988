//! Afterstate value network and offline batch training.
//!
//! The network scores a board from player 1's point of view after the
//! agent's move: a 4x4 convolution (32 filters, valid padding) over the
//! 6x7 cell grid, a dense rectifier layer of 64 units, and a linear output.
//! Training regresses the network on one-step bootstrapped targets computed
//! from a batch of finished games, several passes per batch, plain SGD.
//!
//! All parameters live in one flat `f64` vector so gradient checking,
//! checkpoints and the optimizer step stay trivial.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::game::{Action, BoardState, Player, Transition, CELLS, COLS, ROWS};
use crate::Error;

pub const CONV_FILTERS: usize = 32;
pub const CONV_K: usize = 4;
pub const CONV_H: usize = ROWS - CONV_K + 1;
pub const CONV_W_OUT: usize = COLS - CONV_K + 1;
pub const CONV_POS: usize = CONV_H * CONV_W_OUT;
pub const CONV_OUT: usize = CONV_FILTERS * CONV_POS;
pub const HIDDEN: usize = 64;

const OFF_CONV_W: usize = 0;
const OFF_CONV_B: usize = OFF_CONV_W + CONV_FILTERS * CONV_K * CONV_K;
const OFF_FC1_W: usize = OFF_CONV_B + CONV_FILTERS;
const OFF_FC1_B: usize = OFF_FC1_W + HIDDEN * CONV_OUT;
const OFF_HEAD_W: usize = OFF_FC1_B + HIDDEN;
const OFF_HEAD_B: usize = OFF_HEAD_W + HIDDEN;
pub const PARAM_COUNT: usize = OFF_HEAD_B + 1;

const MAGIC: &[u8; 4] = b"FF4N";
const VERSION: u8 = 1;
const TENSOR_SHAPES: [&[usize]; 6] = [
    &[CONV_FILTERS, CONV_K, CONV_K],
    &[CONV_FILTERS],
    &[HIDDEN, CONV_OUT],
    &[HIDDEN],
    &[1, HIDDEN],
    &[1],
];

#[derive(Clone, Copy, Debug)]
pub struct TrainingConfig {
    /// Learning rate of the value update.
    pub alpha: f64,
    /// Discount on the bootstrapped continuation value.
    pub gamma: f64,
    /// Games collected per training batch.
    pub batch_games: u32,
    /// Full passes over the batch per training call.
    pub epochs: u32,
    /// SGD step size. Useful values sit around 3e-2..2e-1 on this
    /// architecture; an order lower learns almost nothing within the six
    /// batch cycles of a standard run, an order higher diverges.
    pub step_size: f64,
    pub minibatch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.8,
            gamma: 1.0,
            batch_games: 300,
            epochs: 5,
            step_size: 7e-2,
            minibatch: 32,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.batch_games == 0 {
            return Err(Error::Config("batch_games must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(
                "step_size must be positive and finite".into(),
            ));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be positive".into()));
        }
        Ok(())
    }
}

/// Transitions of a batch of games played by one agent.
#[derive(Clone, Debug, Default)]
pub struct BatchBuffer {
    /// Disc sign the agent plays, `+1` or `-1`.
    pub agent: Player,
    pub episodes: Vec<Vec<Transition>>,
}

impl BatchBuffer {
    pub fn new(agent: Player) -> Self {
        BatchBuffer {
            agent,
            episodes: Vec::new(),
        }
    }

    pub fn push_episode(&mut self, episode: Vec<Transition>) {
        debug_assert!(episode.iter().filter(|t| t.terminal).count() == 1);
        debug_assert!(episode.last().map(|t| t.terminal) == Some(true));
        self.episodes.push(episode);
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }
}

/// A regression example: the board right after an agent move and the value
/// it should be pulled towards.
#[derive(Clone, Copy, Debug)]
pub struct TrainingPair {
    pub afterstate: BoardState,
    pub target: f64,
}

fn td_target(q_old: f64, reward: f64, bootstrap: f64, alpha: f64, gamma: f64) -> f64 {
    q_old + alpha * (reward + gamma * bootstrap - q_old)
}

struct Activations {
    conv_pre: [f64; CONV_OUT],
    conv_act: [f64; CONV_OUT],
    fc1_pre: [f64; HIDDEN],
    fc1_act: [f64; HIDDEN],
    out: f64,
}

fn board_input(b: &BoardState) -> [f64; CELLS] {
    let mut x = [0.0; CELLS];
    for r in 0..ROWS {
        for c in 0..COLS {
            x[r * COLS + c] = b.get(r, c) as f64;
        }
    }
    x
}

/// Four-way split accumulation; the fixed order keeps results reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = i * 4;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut rest = 0.0;
    for k in chunks * 4..a.len() {
        rest += a[k] * b[k];
    }
    (s0 + s1) + (s2 + s3) + rest
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    params: Vec<f64>,
}

impl QNetwork {
    /// All parameters drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// of their layer, tensor by tensor in storage order. Biases share the
    /// draw: a zero bias would park every empty convolution window exactly
    /// on the rectifier kink, where the loss is not differentiable and
    /// finite-difference checks rightly fail. The draw order is fixed, so
    /// one rng seed gives one network.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        let mut params = vec![0.0; PARAM_COUNT];
        let spans = [
            (OFF_CONV_W..OFF_FC1_W, CONV_K * CONV_K),
            (OFF_FC1_W..OFF_HEAD_W, CONV_OUT),
            (OFF_HEAD_W..PARAM_COUNT, HIDDEN),
        ];
        for (range, fan_in) in spans {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for i in range {
                params[i] = rng.gen_range(-bound..bound);
            }
        }
        QNetwork { params }
    }

    /// Zeroes the output layer so every board evaluates to exactly 0, the
    /// degenerate baseline used by a few tests and sanity checks.
    pub fn zero_head(&mut self) {
        for p in &mut self.params[OFF_HEAD_W..] {
            *p = 0.0;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn predict_value(&self, board: &BoardState) -> f64 {
        self.forward(&board_input(board)).out
    }

    /// Value of every legal move of `player`: the network applied to each
    /// afterstate, in ascending column order.
    pub fn q_values(
        &self,
        state: &BoardState,
        player: Player,
    ) -> Result<Vec<(Action, f64)>, Error> {
        let legal = state.legal_actions();
        if legal.is_empty() {
            return Err(Error::NoLegalMoves);
        }
        Ok(legal
            .into_iter()
            .map(|a| {
                let after = state.apply(a, player).expect("legal move");
                (a, self.predict_value(&after))
            })
            .collect())
    }

    fn forward(&self, x: &[f64; CELLS]) -> Activations {
        let p = &self.params;
        let mut acts = Activations {
            conv_pre: [0.0; CONV_OUT],
            conv_act: [0.0; CONV_OUT],
            fc1_pre: [0.0; HIDDEN],
            fc1_act: [0.0; HIDDEN],
            out: 0.0,
        };
        for f in 0..CONV_FILTERS {
            let w = &p[OFF_CONV_W + f * 16..OFF_CONV_W + f * 16 + 16];
            let b = p[OFF_CONV_B + f];
            for r in 0..CONV_H {
                for c in 0..CONV_W_OUT {
                    let mut s = b;
                    for i in 0..CONV_K {
                        let xrow = &x[(r + i) * COLS + c..(r + i) * COLS + c + 4];
                        let wrow = &w[i * 4..i * 4 + 4];
                        s += wrow[0] * xrow[0]
                            + wrow[1] * xrow[1]
                            + wrow[2] * xrow[2]
                            + wrow[3] * xrow[3];
                    }
                    let k = f * CONV_POS + r * CONV_W_OUT + c;
                    acts.conv_pre[k] = s;
                    acts.conv_act[k] = s.max(0.0);
                }
            }
        }
        for j in 0..HIDDEN {
            let w = &p[OFF_FC1_W + j * CONV_OUT..OFF_FC1_W + (j + 1) * CONV_OUT];
            let s = p[OFF_FC1_B + j] + dot(w, &acts.conv_act);
            acts.fc1_pre[j] = s;
            acts.fc1_act[j] = s.max(0.0);
        }
        acts.out = p[OFF_HEAD_B] + dot(&p[OFF_HEAD_W..OFF_HEAD_W + HIDDEN], &acts.fc1_act);
        acts
    }

    /// Accumulates `g_out * d(out)/d(param)` into `grads`. Rectifier
    /// subgradient is 0 exactly at the kink.
    fn backward(&self, x: &[f64; CELLS], acts: &Activations, g_out: f64, grads: &mut [f64]) {
        let p = &self.params;
        grads[OFF_HEAD_B] += g_out;
        let mut g_fc1 = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            grads[OFF_HEAD_W + j] += g_out * acts.fc1_act[j];
            if acts.fc1_pre[j] > 0.0 {
                g_fc1[j] = g_out * p[OFF_HEAD_W + j];
            }
        }
        let mut g_conv = [0.0; CONV_OUT];
        for j in 0..HIDDEN {
            let g = g_fc1[j];
            if g == 0.0 {
                continue;
            }
            grads[OFF_FC1_B + j] += g;
            let span = OFF_FC1_W + j * CONV_OUT..OFF_FC1_W + (j + 1) * CONV_OUT;
            axpy(&mut grads[span.clone()], g, &acts.conv_act);
            axpy(&mut g_conv, g, &p[span]);
        }
        for (gc, pre) in g_conv.iter_mut().zip(acts.conv_pre.iter()) {
            if *pre <= 0.0 {
                *gc = 0.0;
            }
        }
        for f in 0..CONV_FILTERS {
            for r in 0..CONV_H {
                for c in 0..CONV_W_OUT {
                    let g = g_conv[f * CONV_POS + r * CONV_W_OUT + c];
                    if g == 0.0 {
                        continue;
                    }
                    grads[OFF_CONV_B + f] += g;
                    for i in 0..CONV_K {
                        let xrow = &x[(r + i) * COLS + c..(r + i) * COLS + c + 4];
                        let base = OFF_CONV_W + f * 16 + i * 4;
                        grads[base] += g * xrow[0];
                        grads[base + 1] += g * xrow[1];
                        grads[base + 2] += g * xrow[2];
                        grads[base + 3] += g * xrow[3];
                    }
                }
            }
        }
    }

    fn apply_gradients(&mut self, grads: &[f64], step: f64) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            *p -= step * g;
        }
    }

    /// Serializes magic, version, the tensor shape manifest and the flat
    /// parameter vector, all little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * PARAM_COUNT);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(TENSOR_SHAPES.len() as u8);
        for shape in TENSOR_SHAPES {
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], Error> {
            if *pos + n > bytes.len() {
                return Err(Error::Format("truncated checkpoint".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != MAGIC {
            return Err(Error::Format("magic bytes do not match".into()));
        }
        let version = take(&mut pos, 1)?[0];
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {}", version)));
        }
        let count = take(&mut pos, 1)?[0] as usize;
        if count != TENSOR_SHAPES.len() {
            return Err(Error::Format(format!("expected 6 tensors, got {}", count)));
        }
        for (t, shape) in TENSOR_SHAPES.iter().enumerate() {
            let rank = take(&mut pos, 1)?[0] as usize;
            if rank != shape.len() {
                return Err(Error::Format(format!("tensor {} has wrong rank", t)));
            }
            for &d in *shape {
                let raw = take(&mut pos, 4)?;
                let dim = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
                if dim != d {
                    return Err(Error::Format(format!(
                        "tensor {} dimension {} does not match the architecture",
                        t, dim
                    )));
                }
            }
        }
        let mut params = vec![0.0; PARAM_COUNT];
        for p in params.iter_mut() {
            let raw = take(&mut pos, 8)?;
            *p = f64::from_le_bytes(raw.try_into().unwrap());
        }
        if pos != bytes.len() {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        Ok(QNetwork { params })
    }
}

/// Builds one regression pair per transition: the stored afterstate value is
/// moved towards `reward + gamma * max` over the values of the afterstates
/// reachable from the next position, with zero continuation on terminal
/// steps. All targets are computed against the network as it is now, before
/// any of this batch's updates.
pub fn compute_targets(
    batch: &BatchBuffer,
    net: &QNetwork,
    cfg: &TrainingConfig,
) -> Vec<TrainingPair> {
    let mut pairs = Vec::with_capacity(batch.transition_count());
    for episode in &batch.episodes {
        for t in episode {
            let q_old = net.predict_value(&t.afterstate);
            let bootstrap = if t.terminal {
                0.0
            } else {
                net.q_values(&t.next_state, batch.agent)
                    .expect("non-terminal next state is playable")
                    .into_iter()
                    .map(|(_, v)| v)
                    .fold(f64::MIN, f64::max)
            };
            pairs.push(TrainingPair {
                afterstate: t.afterstate,
                target: td_target(q_old, t.reward, bootstrap, cfg.alpha, cfg.gamma),
            });
        }
    }
    pairs
}

/// Runs `cfg.epochs` shuffled passes of minibatch SGD over the pairs and
/// returns the mean squared error of each pass, measured before each
/// update as the pass goes.
pub fn train_batch<R: Rng>(
    net: &mut QNetwork,
    pairs: &[TrainingPair],
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<Vec<f64>, Error> {
    if pairs.is_empty() {
        return Err(Error::Config("cannot train on an empty batch".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut grads = vec![0.0; PARAM_COUNT];
    let mut trace = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs as usize {
        order.shuffle(rng);
        let mut sq_err = 0.0;
        for chunk in order.chunks(cfg.minibatch) {
            grads.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let pair = &pairs[i];
                let x = board_input(&pair.afterstate);
                let acts = net.forward(&x);
                let err = acts.out - pair.target;
                sq_err += err * err;
                net.backward(&x, &acts, 2.0 * err * scale, &mut grads);
            }
            net.apply_gradients(&grads, cfg.step_size);
        }
        let mse = sq_err / pairs.len() as f64;
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(mse);
    }
    Ok(trace)
}

/// Central-difference check of the analytic gradient on a spread of
/// parameters covering every tensor. Returns the worst relative error; a
/// healthy backward pass stays below 1e-4 by a wide margin.
pub fn gradient_check(net: &QNetwork, board: &BoardState) -> f64 {
    const TARGET: f64 = 0.37;
    let x = board_input(board);
    let acts = net.forward(&x);
    let mut analytic = vec![0.0; PARAM_COUNT];
    net.backward(&x, &acts, 2.0 * (acts.out - TARGET), &mut analytic);
    max_rel_error(net, &x, TARGET, &analytic, &sample_indices())
}

fn sample_indices() -> Vec<usize> {
    let stride = PARAM_COUNT / 120;
    let mut v: Vec<usize> = (0..PARAM_COUNT).step_by(stride).collect();
    v.extend([
        OFF_CONV_W,
        OFF_CONV_B,
        OFF_FC1_W,
        OFF_FC1_B,
        OFF_HEAD_W,
        OFF_HEAD_B,
        PARAM_COUNT - 1,
    ]);
    v.sort_unstable();
    v.dedup();
    v
}

fn max_rel_error(
    net: &QNetwork,
    x: &[f64; CELLS],
    target: f64,
    analytic: &[f64],
    samples: &[usize],
) -> f64 {
    const H: f64 = 1e-5;
    let mut probe = net.clone();
    let loss = |n: &QNetwork| {
        let e = n.forward(x).out - target;
        e * e
    };
    let mut worst = 0.0f64;
    for &i in samples {
        let orig = probe.params[i];
        probe.params[i] = orig + H;
        let lp = loss(&probe);
        probe.params[i] = orig - H;
        let lm = loss(&probe);
        probe.params[i] = orig;
        let fd = (lp - lm) / (2.0 * H);
        let denom = (analytic[i].abs() + fd.abs()).max(1e-6);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}
