//! Exact three-qubit statevector simulation of the quantum flagged
//! selection.
//!
//! A Boltzmann distribution over at most seven actions is loaded into eight
//! basis-state amplitudes (`amp[i] = sqrt(p[i])`, basis index = column,
//! state 7 is unused padding) by a cascade of controlled Y-rotations whose
//! angles form a binary tree of conditional probabilities. Selection runs a
//! randomized Grover search: the flag oracle flips the sign of flagged
//! states, the diffusion step reflects about the loaded distribution, and
//! the iteration count is drawn uniformly from a budget set by the flagged
//! probability mass.

use num_complex::Complex64;
use rand::Rng;

use crate::game::{Action, ActionSet};
use crate::policy::{flagged_mass, ActionDistribution, ReflectionConfig, SelectionResult};

pub const N_STATES: usize = 8;

/// Rotation pair tables per cascade level: qubit 1, qubit 2 under both
/// settings of qubit 1, then qubit 3 under all four settings of the first
/// two. Each pair is a (|0>, |1>) index pair of the rotated qubit.
const LEVEL_PAIRS: [&[(usize, usize)]; 7] = [
    &[(0, 4), (1, 5), (2, 6), (3, 7)],
    &[(0, 2), (1, 3)],
    &[(4, 6), (5, 7)],
    &[(0, 1)],
    &[(2, 3)],
    &[(4, 5)],
    &[(6, 7)],
];

#[derive(Clone, Copy, Debug)]
pub struct StateVector {
    amps: [Complex64; N_STATES],
}

impl StateVector {
    /// The all-zeros basis state `|000>`.
    pub fn zero_state() -> Self {
        let mut amps = [Complex64::ZERO; N_STATES];
        amps[0] = Complex64::ONE;
        StateVector { amps }
    }

    pub fn from_amps(amps: [Complex64; N_STATES]) -> Self {
        StateVector { amps }
    }

    pub fn amp(&self, i: usize) -> Complex64 {
        self.amps[i]
    }

    pub fn probabilities(&self) -> [f64; N_STATES] {
        let mut p = [0.0; N_STATES];
        for (pi, a) in p.iter_mut().zip(self.amps.iter()) {
            *pi = a.norm_sqr();
        }
        p
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Samples a basis state with probability `|amp|^2`.
    pub fn measure<R: Rng>(&self, rng: &mut R) -> usize {
        let p = self.probabilities();
        let u: f64 = rng.gen::<f64>() * p.iter().sum::<f64>();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        // rounding dust at the top of the cumulative sum
        p.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty")
    }
}

/// The seven rotation angles of the encoding cascade, in cascade order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleTree {
    angles: [f64; 7],
}

impl AngleTree {
    pub fn from_angles(angles: [f64; 7]) -> Self {
        AngleTree { angles }
    }

    pub fn angles(&self) -> &[f64; 7] {
        &self.angles
    }
}

/// `2 * arccos(sqrt(left/total))`, the Y-rotation that splits `total`
/// probability into `left` on `|0>` and the rest on `|1>`. A branch with no
/// mass keeps angle 0 so the cascade stays well defined.
fn split_angle(left: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    2.0 * (left / total).clamp(0.0, 1.0).sqrt().acos()
}

/// Builds the angle tree for a probability vector over the eight states.
pub fn angles_from_probs(p: &[f64; N_STATES]) -> AngleTree {
    let front: f64 = p[..4].iter().sum();
    let back: f64 = p[4..].iter().sum();
    AngleTree {
        angles: [
            split_angle(front, front + back),
            split_angle(p[0] + p[1], front),
            split_angle(p[4] + p[5], back),
            split_angle(p[0], p[0] + p[1]),
            split_angle(p[2], p[2] + p[3]),
            split_angle(p[4], p[4] + p[5]),
            split_angle(p[6], p[6] + p[7]),
        ],
    }
}

pub fn angles_from_distribution(dist: &ActionDistribution) -> AngleTree {
    let mut p = [0.0; N_STATES];
    for &(a, pr) in dist.entries() {
        p[a.col()] = pr;
    }
    angles_from_probs(&p)
}

fn apply_ry(sv: &mut StateVector, pairs: &[(usize, usize)], theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    for &(i0, i1) in pairs {
        let a = sv.amps[i0];
        let b = sv.amps[i1];
        sv.amps[i0] = c * a - s * b;
        sv.amps[i1] = s * a + c * b;
    }
}

/// The encoding unitary (or its inverse: negated angles, reversed order).
fn apply_cascade(sv: &mut StateVector, tree: &AngleTree, inverse: bool) {
    if inverse {
        for (&pairs, &angle) in LEVEL_PAIRS.iter().zip(&tree.angles).rev() {
            apply_ry(sv, pairs, -angle);
        }
    } else {
        for (&pairs, &angle) in LEVEL_PAIRS.iter().zip(&tree.angles) {
            apply_ry(sv, pairs, angle);
        }
    }
}

/// Loads the distribution: `amp[i] = sqrt(p[i])`, all amplitudes real.
pub fn encode(tree: &AngleTree) -> StateVector {
    let mut sv = StateVector::zero_state();
    apply_cascade(&mut sv, tree, false);
    sv
}

/// Marks basis states whose sign the flag oracle flips.
#[derive(Clone, Copy, Debug)]
pub struct FlagOracle {
    mask: u8,
}

impl FlagOracle {
    pub fn from_action_set(flags: ActionSet) -> Self {
        FlagOracle { mask: flags.mask() }
    }

    /// Arbitrary marked set over all eight states, padding included.
    pub fn from_mask(mask: u8) -> Self {
        FlagOracle { mask }
    }

    pub fn marked(&self, i: usize) -> bool {
        self.mask & (1 << i) != 0
    }
}

/// Flips the sign of every marked amplitude.
pub fn reflect_flags(mut sv: StateVector, oracle: &FlagOracle) -> StateVector {
    for i in 0..N_STATES {
        if oracle.marked(i) {
            sv.amps[i] = -sv.amps[i];
        }
    }
    sv
}

/// Reflection about the loaded distribution: undo the cascade, reflect
/// about `|000>` (negate every other state), redo the cascade. Equal to
/// `2|pi><pi| - I` for the encoded state `|pi>`.
pub fn reflect_pi(mut sv: StateVector, tree: &AngleTree) -> StateVector {
    apply_cascade(&mut sv, tree, true);
    for i in 1..N_STATES {
        sv.amps[i] = -sv.amps[i];
    }
    apply_cascade(&mut sv, tree, false);
    sv
}

#[derive(Clone, Copy, Debug)]
pub struct GroverConfig {
    /// Floor for the flagged mass when sizing the iteration budget.
    pub eps_min: f64,
}

impl Default for GroverConfig {
    fn default() -> Self {
        GroverConfig { eps_min: 0.04 }
    }
}

impl GroverConfig {
    pub fn validate(&self) -> Result<(), crate::Error> {
        if !(self.eps_min > 0.0 && self.eps_min <= 1.0) {
            return Err(crate::Error::Config(format!(
                "eps_min must be in (0, 1], got {}",
                self.eps_min
            )));
        }
        Ok(())
    }
}

/// Largest iteration count in the randomized budget for flagged mass `eps`.
pub fn max_grover_steps(eps: f64) -> u32 {
    debug_assert!(eps > 0.0);
    (1.0 / eps.sqrt()).floor() as u32
}

/// Runs the loaded cascade with `m` Grover iterations and measures,
/// remeasuring on the off-support padding dust.
pub fn grover_sample_with_m<R: Rng>(
    dist: &ActionDistribution,
    flags: ActionSet,
    m: u32,
    rng: &mut R,
) -> Action {
    let tree = angles_from_distribution(dist);
    let oracle = FlagOracle::from_action_set(flags);
    let mut sv = encode(&tree);
    for _ in 0..m {
        sv = reflect_pi(reflect_flags(sv, &oracle), &tree);
    }
    let support = dist.support();
    for _ in 0..64 {
        let i = sv.measure(rng);
        if let Some(a) = Action::new(i) {
            if support.contains(a) {
                return a;
            }
        }
    }
    // numerically impossible unless the support mass collapsed to dust
    let p = sv.probabilities();
    support
        .iter()
        .max_by(|a, b| p[a.col()].total_cmp(&p[b.col()]))
        .expect("nonempty support")
}

/// One randomized Grover draw: the iteration count is uniform on
/// `{0, ..., floor(1/sqrt(eps))}` where `eps` is the floored flagged mass.
/// Returns the measured action and the iteration count used.
pub fn grover_sample<R: Rng>(
    dist: &ActionDistribution,
    flags: ActionSet,
    cfg: &GroverConfig,
    rng: &mut R,
) -> (Action, u32) {
    let eps = flagged_mass(dist, flags, cfg.eps_min);
    let m = rng.gen_range(0..=max_grover_steps(eps));
    (grover_sample_with_m(dist, flags, m, rng), m)
}

/// Quantum counterpart of the classical flagged selection: up to `r_max`
/// Grover draws, accepting the first flagged action, falling back to the
/// last draw.
pub fn quantum_reflect_select<R: Rng>(
    dist: &ActionDistribution,
    flags: ActionSet,
    r_cfg: &ReflectionConfig,
    g_cfg: &GroverConfig,
    rng: &mut R,
) -> SelectionResult {
    assert!(r_cfg.r_max >= 1);
    assert!(!flags.is_empty(), "selection needs at least one flag");
    let mut last = None;
    for i in 1..=r_cfg.r_max {
        let (a, _) = grover_sample(dist, flags, g_cfg, rng);
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
        iterations_used: r_cfg.r_max,
        flagged_hit: false,
    }
}
