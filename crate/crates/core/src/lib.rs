//! Connect Four reinforcement learning with flag-based exploration.
//!
//! The crate trains afterstate-value agents by offline deep Q-learning
//! against a randomized negamax opponent and compares three exploration
//! policies: epsilon-greedy, classical flagged selection by repeated draws,
//! and a quantum-walk variant of the flagged selection simulated exactly on
//! a three-qubit statevector.
//!
//! - [`game`]: board rules, outcomes, rewards, text serialization
//! - [`negamax`]: randomized depth-limited opponent with alpha-beta pruning
//! - [`qlearn`]: the value network, batch training, checkpoints
//! - [`policy`]: exploration schedules, flag table, classical selection
//! - [`qsim`]: statevector simulation behind the quantum selection
//! - [`harness`]: seeded experiment runs, metrics, aggregation

pub mod game;
pub mod harness;
pub mod negamax;
pub mod policy;
pub mod qlearn;
pub mod qsim;

mod error;
pub use error::Error;
