//! Optimistic KL-regularized policy optimization for episodic linear MDPs.
//!
//! The crate has three layers:
//!
//! - environment machinery: finite linear MDPs ([`mdp`]), benchmark
//!   generators ([`instances`]), and adversarial reward schedules
//!   ([`adversary`]);
//! - the learner: exponential-weights policy improvement ([`policy`]),
//!   optimistic least-squares policy evaluation ([`eval`]), and the episode
//!   loop with baseline modes ([`agent`]);
//! - exact ground-truth computations ([`oracles`]) that know the true
//!   transition kernel and power regret measurement and the lemma-level
//!   property checks.
//!
//! Everything is deterministic given explicit seeds, and all types are
//! immutable after construction except the per-episode learner state.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature when building without `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]
// Dense index arithmetic reads better as plain loops here.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("oppo-core requires either the `std` or the `libm` feature");

pub mod adversary;
pub mod agent;
pub mod eval;
pub mod instances;
pub mod linalg;
pub mod mdp;
mod num;
pub mod oracles;
pub mod policy;
pub mod seeding;
pub mod tables;

pub use agent::{Agent, AgentMode, EpisodeOutcome, HyperParams};
pub use eval::{BonusParams, EvalDiagnostics, HistoryBuffer, RidgeAccumulator, ValueTables};
pub use mdp::{FeatureMap, LinearMdp, RewardFunction, Trajectory};
pub use policy::{Policy, StepSize};
pub use tables::{StateActionTable, StateTable};
