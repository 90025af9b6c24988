//! Exploration policies: schedules, the Boltzmann action distribution, the
//! per-state flag table and the classical flagged selection loop.
//!
//! Flags mark actions still considered promising in a given state. Selection
//! repeatedly draws from the full Boltzmann distribution and accepts the
//! first flagged action; the flag table is updated only for the action that
//! was actually chosen, based on the sign of its current value estimate.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::game::{Action, ActionSet, StateKey};

/// Exploration rate for epsilon-greedy: `min(1, 1/ln(episode + 1))`,
/// episodes counted from 1.
pub fn epsilon(episode: u32) -> f64 {
    assert!(episode >= 1, "episodes are counted from 1");
    (1.0 / ((episode as f64 + 1.0).ln())).min(1.0)
}

/// Logistic temperature decay for the Boltzmann distribution. With the
/// default shape the schedule starts at 10.1 for episode 0 and falls
/// towards `t_min`; `delta` stretches it over the training horizon.
#[derive(Clone, Copy, Debug)]
pub struct TemperatureSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub slope: f64,
    pub delta: f64,
}

impl TemperatureSchedule {
    pub fn with_delta(delta: f64) -> Self {
        TemperatureSchedule {
            t_min: 0.2,
            t_max: 20.0,
            slope: 0.35,
            delta,
        }
    }

    pub fn temperature(&self, episode: u32) -> f64 {
        self.t_min
            + (self.t_max - self.t_min) / (1.0 + (self.slope * episode as f64 / self.delta).exp())
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule::with_delta(150.0)
    }
}

/// A probability distribution over a subset of actions, entries kept in
/// ascending column order, probabilities summing to 1.
#[derive(Clone, Debug)]
pub struct ActionDistribution {
    entries: Vec<(Action, f64)>,
}

impl ActionDistribution {
    /// Normalizes nonnegative weights. At least one weight must be positive.
    pub fn from_weights(weights: &[(Action, f64)]) -> Self {
        assert!(!weights.is_empty());
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        assert!(
            total > 0.0 && total.is_finite(),
            "weights must have positive finite total"
        );
        let mut entries: Vec<(Action, f64)> =
            weights.iter().map(|&(a, w)| (a, w / total)).collect();
        entries.sort_by_key(|&(a, _)| a);
        ActionDistribution { entries }
    }

    pub fn entries(&self) -> &[(Action, f64)] {
        &self.entries
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.entries
            .iter()
            .find(|&&(b, _)| b == a)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> ActionSet {
        ActionSet::from_actions(self.entries.iter().map(|&(a, _)| a))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(a, p) in &self.entries {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding dust at the top of the cumulative sum
        self.entries.last().expect("nonempty").0
    }
}

/// Softmax of the action values at temperature `t`. The maximum value is
/// subtracted before exponentiation so extreme values stay finite.
pub fn boltzmann_distribution(q_values: &[(Action, f64)], t: f64) -> ActionDistribution {
    assert!(t > 0.0, "temperature must be positive");
    assert!(!q_values.is_empty());
    let q_max = q_values.iter().map(|&(_, q)| q).fold(f64::MIN, f64::max);
    let weights: Vec<(Action, f64)> = q_values
        .iter()
        .map(|&(a, q)| (a, ((q - q_max) / t).exp()))
        .collect();
    ActionDistribution::from_weights(&weights)
}

/// The distribution conditioned on drawing a flagged action, i.e. the
/// flagged probabilities renormalized by their total mass.
pub fn conditional_on_flags(dist: &ActionDistribution, flags: ActionSet) -> ActionDistribution {
    let kept: Vec<(Action, f64)> = dist
        .entries()
        .iter()
        .filter(|&&(a, _)| flags.contains(a))
        .copied()
        .collect();
    ActionDistribution::from_weights(&kept)
}

/// Highest-valued action, lowest column on ties.
pub fn argmax_action(q_values: &[(Action, f64)]) -> Action {
    assert!(!q_values.is_empty());
    let mut best = q_values[0];
    for &(a, q) in &q_values[1..] {
        if q > best.1 {
            best = (a, q);
        }
    }
    best.0
}

/// With probability `eps` a uniformly random action, otherwise the argmax.
pub fn epsilon_greedy_select<R: Rng>(q_values: &[(Action, f64)], eps: f64, rng: &mut R) -> Action {
    assert!(!q_values.is_empty());
    if eps > 0.0 && rng.gen::<f64>() < eps {
        q_values[rng.gen_range(0..q_values.len())].0
    } else {
        argmax_action(q_values)
    }
}

/// Total probability of the flagged actions, clamped into `[eps_min, 1]`.
/// The floor keeps the quantum iteration count bounded when almost no mass
/// is flagged.
pub fn flagged_mass(dist: &ActionDistribution, flags: ActionSet, eps_min: f64) -> f64 {
    let mass: f64 = flags.iter().map(|a| dist.prob(a)).sum();
    mass.clamp(eps_min, 1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct ReflectionConfig {
    /// Maximum number of draws per selection.
    pub r_max: u32,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig { r_max: 5 }
    }
}

/// Outcome of one flagged selection: the move to play, how many draws were
/// spent, and whether a flagged action was actually hit. A miss returns the
/// final draw, so `flagged_hit == false` implies `iterations_used == r_max`.
#[derive(Clone, Copy, Debug)]
pub struct SelectionResult {
    pub action: Action,
    pub iterations_used: u32,
    pub flagged_hit: bool,
}

/// Draws from the full distribution up to `r_max` times and accepts the
/// first flagged action; after `r_max` misses the last draw is played.
pub fn classical_reflect_select<R: Rng>(
    dist: &ActionDistribution,
    flags: ActionSet,
    cfg: &ReflectionConfig,
    rng: &mut R,
) -> SelectionResult {
    assert!(cfg.r_max >= 1);
    assert!(!flags.is_empty(), "selection needs at least one flag");
    let mut last = None;
    for i in 1..=cfg.r_max {
        let a = dist.sample(rng);
        if flags.contains(a) {
            return SelectionResult {
                action: a,
                iterations_used: i,
                flagged_hit: true,
            };
        }
        last = Some(a);
    }
    SelectionResult {
        action: last.expect("r_max >= 1"),
        iterations_used: cfg.r_max,
        flagged_hit: false,
    }
}

#[derive(Clone, Copy, Debug)]
struct FlagEntry {
    flags: ActionSet,
    last_picked: Option<Action>,
}

/// Per-state action flags with the restoration rule that keeps at least one
/// legal action flagged in every visited state.
#[derive(Clone, Debug, Default)]
pub struct FlagTable {
    map: HashMap<StateKey, FlagEntry>,
}

fn restored(legal: ActionSet, exclude: Option<Action>) -> ActionSet {
    let mut r = legal;
    if let Some(a) = exclude {
        r.remove(a);
    }
    if r.is_empty() {
        legal
    } else {
        r
    }
}

impl FlagTable {
    pub fn new() -> Self {
        FlagTable::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Flags of `key` restricted to the currently legal actions. A state
    /// seen for the first time starts with every legal action flagged. If
    /// none of the stored flags is still legal, all legal actions except
    /// the last picked one regain their flag.
    pub fn get_flags(&mut self, key: StateKey, legal: &[Action]) -> ActionSet {
        let legal_set = ActionSet::from_actions(legal.iter().copied());
        assert!(!legal_set.is_empty(), "a visited state has legal actions");
        let entry = self.map.entry(key).or_insert(FlagEntry {
            flags: legal_set,
            last_picked: None,
        });
        let visible = entry.flags.intersect(legal_set);
        if visible.is_empty() {
            let r = restored(legal_set, entry.last_picked);
            entry.flags = entry.flags.difference(legal_set).union(r);
            r
        } else {
            visible
        }
    }

    /// Reflects the current value estimate of the chosen action into its
    /// flag: negative removes it, positive sets it, zero leaves it alone.
    /// If the state would end up with no flagged legal action, every legal
    /// action except the one just picked regains its flag.
    pub fn update_flags(&mut self, key: StateKey, chosen: Action, q_values: &[(Action, f64)]) {
        let legal_set = ActionSet::from_actions(q_values.iter().map(|&(a, _)| a));
        let q = q_values
            .iter()
            .find(|&&(a, _)| a == chosen)
            .map(|&(_, q)| q)
            .expect("chosen action must appear in q_values");
        let entry = self.map.entry(key).or_insert(FlagEntry {
            flags: legal_set,
            last_picked: None,
        });
        if q < 0.0 {
            entry.flags.remove(chosen);
        } else if q > 0.0 {
            entry.flags.insert(chosen);
        }
        entry.last_picked = Some(chosen);
        if entry.flags.intersect(legal_set).is_empty() {
            let r = restored(legal_set, Some(chosen));
            entry.flags = entry.flags.difference(legal_set).union(r);
        }
    }

    /// Raw stored state, without the legality filtering of `get_flags`.
    pub fn entry(&self, key: StateKey) -> Option<(ActionSet, Option<Action>)> {
        self.map.get(&key).map(|e| (e.flags, e.last_picked))
    }

    /// One line per state, sorted by key: `<key> <flag mask hex> <last>`.
    pub fn dump(&self) -> String {
        let mut keys: Vec<StateKey> = self.map.keys().copied().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let e = &self.map[&k];
            let last = e
                .last_picked
                .map(|a| a.to_string())
                .unwrap_or_else(|| "-".to_string());
            writeln!(out, "{} {:02x} {}", k, e.flags.mask(), last).unwrap();
        }
        out
    }
}
