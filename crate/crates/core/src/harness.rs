//! Seeded experiment runs: training loops against the randomized negamax
//! opponent, argmax evaluation games, the three run metrics (win rate,
//! distinct states seen, mean iterations to a flagged action), and
//! multi-seed aggregation with CSV/JSON output shapes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::game::{reward, BoardState, Player, StateKey, Transition};
use crate::negamax::{select_move, NegamaxConfig};
use crate::policy::{
    argmax_action, boltzmann_distribution, classical_reflect_select, epsilon,
    epsilon_greedy_select, FlagTable, ReflectionConfig, SelectionResult, TemperatureSchedule,
};
use crate::qlearn::{compute_targets, train_batch, BatchBuffer, QNetwork, TrainingConfig};
use crate::qsim::{quantum_reflect_select, GroverConfig};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Player1,
    Player2,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Player1 => "player1",
            Role::Player2 => "player2",
        }
    }

    /// Disc sign the agent drops in this role.
    pub fn disc(self) -> Player {
        match self {
            Role::Player1 => 1,
            Role::Player2 => -1,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "player1" | "1" => Ok(Role::Player1),
            "player2" | "2" => Ok(Role::Player2),
            other => Err(Error::Config(format!("unknown role '{}'", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    EpsilonGreedy,
    ClassicalTags,
    QuantumTags,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::EpsilonGreedy,
        PolicyKind::ClassicalTags,
        PolicyKind::QuantumTags,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::ClassicalTags => "classical_tags",
            PolicyKind::QuantumTags => "quantum_tags",
        }
    }

    pub fn uses_flags(self) -> bool {
        !matches!(self, PolicyKind::EpsilonGreedy)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "epsilon_greedy" => Ok(PolicyKind::EpsilonGreedy),
            "classical_tags" => Ok(PolicyKind::ClassicalTags),
            "quantum_tags" => Ok(PolicyKind::QuantumTags),
            other => Err(Error::Config(format!("unknown policy '{}'", other))),
        }
    }
}

const STREAM_OPPONENT: u64 = 0;
const STREAM_POLICY: u64 = 1;
const STREAM_NET_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_TEST_OPPONENT: u64 = 4;

/// One of the independent random streams derived from a run's master seed.
/// Matched seeds give every policy the same opponent and the same initial
/// network, so runs differ only in what the policy itself draws.
pub fn stream(master: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(idx);
    rng
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub role: Role,
    pub policy: PolicyKind,
    pub train_episodes: u32,
    pub test_episodes: u32,
    pub negamax: NegamaxConfig,
    pub training: TrainingConfig,
    pub reflection: ReflectionConfig,
    pub grover: GroverConfig,
    pub temperature: TemperatureSchedule,
}

impl ExperimentConfig {
    /// Published defaults: 1800 training episodes with temperature scale 150
    /// as player 1, twice both as player 2, 1000 test games either way.
    pub fn for_role_policy(role: Role, policy: PolicyKind) -> Self {
        let (train_episodes, delta) = match role {
            Role::Player1 => (1800, 150.0),
            Role::Player2 => (3600, 300.0),
        };
        ExperimentConfig {
            role,
            policy,
            train_episodes,
            test_episodes: 1000,
            negamax: NegamaxConfig::default(),
            training: TrainingConfig::default(),
            reflection: ReflectionConfig::default(),
            grover: GroverConfig::default(),
            temperature: TemperatureSchedule::with_delta(delta),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.negamax.validate()?;
        self.training.validate()?;
        self.grover.validate()?;
        if self.reflection.r_max == 0 {
            return Err(Error::Config("r_max must be at least 1".into()));
        }
        if self.train_episodes == 0 {
            return Err(Error::Config("train_episodes must be positive".into()));
        }
        if !self.train_episodes.is_multiple_of(self.training.batch_games) {
            return Err(Error::Config(format!(
                "train_episodes ({}) must be divisible by batch_games ({})",
                self.train_episodes, self.training.batch_games
            )));
        }
        if !(self.temperature.delta > 0.0 && self.temperature.delta.is_finite()) {
            return Err(Error::Config("temperature delta must be positive".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines to this config. Lines starting with `#`
    /// and blank lines are skipped. Role and policy are fixed per run and
    /// not settable here.
    pub fn apply_config_text(&mut self, text: &str) -> Result<(), Error> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |what: &str| Error::Config(format!("line {}: {} '{}'", lineno + 1, what, value));
            match key {
                "train_episodes" => {
                    self.train_episodes = value.parse().map_err(|_| bad("bad episode count"))?
                }
                "test_episodes" => {
                    self.test_episodes = value.parse().map_err(|_| bad("bad episode count"))?
                }
                "batch_games" => {
                    self.training.batch_games = value.parse().map_err(|_| bad("bad count"))?
                }
                "epochs" => self.training.epochs = value.parse().map_err(|_| bad("bad count"))?,
                "alpha" => self.training.alpha = value.parse().map_err(|_| bad("bad number"))?,
                "gamma" => self.training.gamma = value.parse().map_err(|_| bad("bad number"))?,
                "step_size" => {
                    self.training.step_size = value.parse().map_err(|_| bad("bad number"))?
                }
                "minibatch" => {
                    self.training.minibatch = value.parse().map_err(|_| bad("bad count"))?
                }
                "depth" => self.negamax.depth = value.parse().map_err(|_| bad("bad depth"))?,
                "omega" => self.negamax.omega = value.parse().map_err(|_| bad("bad number"))?,
                "win_score" => {
                    self.negamax.win_score = value.parse().map_err(|_| bad("bad score"))?
                }
                "r_max" => self.reflection.r_max = value.parse().map_err(|_| bad("bad count"))?,
                "eps_min" => self.grover.eps_min = value.parse().map_err(|_| bad("bad number"))?,
                "delta" => self.temperature.delta = value.parse().map_err(|_| bad("bad number"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Mean iterations-to-flag with carry-over: misses add their iterations to
/// a running partial that the next flagged hit absorbs into one sample. A
/// trailing unfinished partial never becomes a sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct IterationsAccumulator {
    partial: u64,
    total: u64,
    samples: u64,
}

impl IterationsAccumulator {
    pub fn new() -> Self {
        IterationsAccumulator::default()
    }

    pub fn record(&mut self, result: &SelectionResult) {
        self.partial += u64::from(result.iterations_used);
        if result.flagged_hit {
            self.total += self.partial;
            self.samples += 1;
            self.partial = 0;
        }
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn mean(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.total as f64 / self.samples as f64)
    }
}

/// Everything a finished training run leaves behind.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub net: QNetwork,
    pub flags: FlagTable,
    /// Distinct positions seen at agent decision points.
    pub states_explored: usize,
    /// The same count sampled after each training cycle.
    pub states_per_cycle: Vec<usize>,
    /// Present for flag-based policies with at least one completed sample.
    pub mean_iterations: Option<f64>,
    /// Per-cycle epoch losses from the batch trainings.
    pub loss_trace: Vec<Vec<f64>>,
}

struct RunState<'a> {
    cfg: &'a ExperimentConfig,
    flags: FlagTable,
    explored: HashSet<StateKey>,
    iterations: IterationsAccumulator,
    opponent_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
}

impl RunState<'_> {
    /// Plays one full training game and returns the agent's transitions.
    /// `episode_index` counts games from 0 across the whole run and drives
    /// the exploration schedules.
    fn play_training_game(
        &mut self,
        net: &QNetwork,
        episode_index: u32,
    ) -> Result<Vec<Transition>, Error> {
        let agent = self.cfg.role.disc();
        let opponent = -agent;
        let mut board = BoardState::empty();
        if agent == -1 {
            let mv = select_move(&board, opponent, &self.cfg.negamax, &mut self.opponent_rng)?;
            board = board.apply(mv, opponent)?;
        }
        let mut episode = Vec::new();
        loop {
            let key = board.key();
            self.explored.insert(key);
            let q = net.q_values(&board, agent)?;
            let action = match self.cfg.policy {
                PolicyKind::EpsilonGreedy => {
                    let eps = epsilon(episode_index + 1);
                    epsilon_greedy_select(&q, eps, &mut self.policy_rng)
                }
                PolicyKind::ClassicalTags | PolicyKind::QuantumTags => {
                    let t = self.cfg.temperature.temperature(episode_index);
                    let dist = boltzmann_distribution(&q, t);
                    let legal = board.legal_actions();
                    let flagged = self.flags.get_flags(key, &legal);
                    let sel = if self.cfg.policy == PolicyKind::ClassicalTags {
                        classical_reflect_select(
                            &dist,
                            flagged,
                            &self.cfg.reflection,
                            &mut self.policy_rng,
                        )
                    } else {
                        quantum_reflect_select(
                            &dist,
                            flagged,
                            &self.cfg.reflection,
                            &self.cfg.grover,
                            &mut self.policy_rng,
                        )
                    };
                    self.iterations.record(&sel);
                    self.flags.update_flags(key, sel.action, &q);
                    sel.action
                }
            };
            let afterstate = board.apply(action, agent)?;
            let outcome = afterstate.outcome();
            if outcome.is_terminal() {
                episode.push(Transition {
                    state: board,
                    action,
                    afterstate,
                    next_state: afterstate,
                    reward: reward(outcome, agent),
                    terminal: true,
                });
                return Ok(episode);
            }
            let mv = select_move(
                &afterstate,
                opponent,
                &self.cfg.negamax,
                &mut self.opponent_rng,
            )?;
            let next_state = afterstate.apply(mv, opponent)?;
            let outcome = next_state.outcome();
            episode.push(Transition {
                state: board,
                action,
                afterstate,
                next_state,
                reward: reward(outcome, agent),
                terminal: outcome.is_terminal(),
            });
            if outcome.is_terminal() {
                return Ok(episode);
            }
            board = next_state;
        }
    }
}

/// Trains one agent from scratch: `train_episodes / batch_games` cycles of
/// playing a batch against the opponent and fitting the network to that
/// batch's bootstrapped targets. Deterministic in (config, seed).
pub fn train_run(cfg: &ExperimentConfig, seed: u64) -> Result<TrainedRun, Error> {
    cfg.validate()?;
    let mut net = QNetwork::init(&mut stream(seed, STREAM_NET_INIT));
    let mut shuffle_rng = stream(seed, STREAM_SHUFFLE);
    let mut run = RunState {
        cfg,
        flags: FlagTable::new(),
        explored: HashSet::new(),
        iterations: IterationsAccumulator::new(),
        opponent_rng: stream(seed, STREAM_OPPONENT),
        policy_rng: stream(seed, STREAM_POLICY),
    };
    let cycles = cfg.train_episodes / cfg.training.batch_games;
    let mut loss_trace = Vec::with_capacity(cycles as usize);
    let mut states_per_cycle = Vec::with_capacity(cycles as usize);
    let mut episode_index = 0u32;
    for _ in 0..cycles {
        let mut batch = BatchBuffer::new(cfg.role.disc());
        for _ in 0..cfg.training.batch_games {
            let episode = run.play_training_game(&net, episode_index)?;
            batch.push_episode(episode);
            episode_index += 1;
        }
        let pairs = compute_targets(&batch, &net, &cfg.training);
        loss_trace.push(train_batch(
            &mut net,
            &pairs,
            &cfg.training,
            &mut shuffle_rng,
        )?);
        states_per_cycle.push(run.explored.len());
    }
    Ok(TrainedRun {
        net,
        states_explored: run.explored.len(),
        states_per_cycle,
        mean_iterations: if cfg.policy.uses_flags() {
            run.iterations.mean()
        } else {
            None
        },
        flags: run.flags,
        loss_trace,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TestOutcome {
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
}

/// Plays `test_episodes` games with pure argmax move selection; only the
/// opponent is stochastic.
pub fn test_run(net: &QNetwork, cfg: &ExperimentConfig, seed: u64) -> Result<TestOutcome, Error> {
    cfg.negamax.validate()?;
    let agent = cfg.role.disc();
    let opponent = -agent;
    let mut rng = stream(seed, STREAM_TEST_OPPONENT);
    let mut counts = TestOutcome::default();
    for _ in 0..cfg.test_episodes {
        let mut board = BoardState::empty();
        if agent == -1 {
            let mv = select_move(&board, opponent, &cfg.negamax, &mut rng)?;
            board = board.apply(mv, opponent)?;
        }
        let outcome = loop {
            let q = net.q_values(&board, agent)?;
            board = board.apply(argmax_action(&q), agent)?;
            let out = board.outcome();
            if out.is_terminal() {
                break out;
            }
            let mv = select_move(&board, opponent, &cfg.negamax, &mut rng)?;
            board = board.apply(mv, opponent)?;
            let out = board.outcome();
            if out.is_terminal() {
                break out;
            }
        };
        match outcome.winner() {
            Some(w) if w == agent => counts.wins += 1,
            Some(_) => counts.losses += 1,
            None => counts.draws += 1,
        }
    }
    debug_assert_eq!(
        counts.wins + counts.draws + counts.losses,
        cfg.test_episodes
    );
    Ok(counts)
}

/// One row of the results table.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    pub policy: PolicyKind,
    pub role: Role,
    pub seed: u64,
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
    /// Test win percentage in [0, 100].
    pub win_rate: f64,
    pub states_explored: usize,
    pub mean_iterations: Option<f64>,
    #[serde(skip)]
    pub loss_trace: Vec<Vec<f64>>,
}

/// Full pipeline for one (config, seed) pair: train, then evaluate.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunMetrics, TrainedRun), Error> {
    let trained = train_run(cfg, seed)?;
    let counts = test_run(&trained.net, cfg, seed)?;
    let win_rate = if cfg.test_episodes == 0 {
        0.0
    } else {
        100.0 * f64::from(counts.wins) / f64::from(cfg.test_episodes)
    };
    let metrics = RunMetrics {
        policy: cfg.policy,
        role: cfg.role,
        seed,
        wins: counts.wins,
        draws: counts.draws,
        losses: counts.losses,
        win_rate,
        states_explored: trained.states_explored,
        mean_iterations: trained.mean_iterations,
        loss_trace: trained.loss_trace.clone(),
    };
    Ok((metrics, trained))
}

pub const METRICS_CSV_HEADER: &str =
    "agent,role,seed,iterations_mean,states_explored,win_rate,draws,losses";

/// Formats one run as a CSV row under [`METRICS_CSV_HEADER`]. The
/// iterations column is empty for policies without flags.
pub fn metrics_csv_row(m: &RunMetrics) -> String {
    let iterations = m
        .mean_iterations
        .map(|v| format!("{:.3}", v))
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{:.1},{},{}",
        m.policy.label(),
        m.role.label(),
        m.seed,
        iterations,
        m.states_explored,
        m.win_rate,
        m.draws,
        m.losses
    )
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1); absent for a single run.
    pub std: Option<f64>,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    MetricSummary { mean, std }
}

/// Per-policy aggregate over matched-seed runs.
#[derive(Clone, Debug, Serialize)]
pub struct AggregateReport {
    pub policy: PolicyKind,
    pub role: Role,
    pub runs: usize,
    pub win_rate: MetricSummary,
    pub states_explored: MetricSummary,
    pub iterations_mean: Option<MetricSummary>,
}

/// Folds completed runs of one policy into mean/std summaries.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateReport, Error> {
    let first = runs.first().ok_or(Error::InsufficientRuns)?;
    if runs
        .iter()
        .any(|r| r.policy != first.policy || r.role != first.role)
    {
        return Err(Error::Config(
            "cannot aggregate runs of different policies or roles".into(),
        ));
    }
    let win_rates: Vec<f64> = runs.iter().map(|r| r.win_rate).collect();
    let states: Vec<f64> = runs.iter().map(|r| r.states_explored as f64).collect();
    let iterations: Vec<f64> = runs.iter().filter_map(|r| r.mean_iterations).collect();
    Ok(AggregateReport {
        policy: first.policy,
        role: first.role,
        runs: runs.len(),
        win_rate: summarize(&win_rates),
        states_explored: summarize(&states),
        iterations_mean: (!iterations.is_empty()).then(|| summarize(&iterations)),
    })
}
