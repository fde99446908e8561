//! Communication-efficient parallel reinforcement learning.
//!
//! `M` agents interact with `M` identical, independent tabular MDPs and
//! pool their experience through a central coordinator. The dist-UCRL
//! agents run optimistic model-based policies and request a global
//! synchronization only when their per-epoch visit count for some pair
//! reaches a `1/M` fraction of its pooled count, which keeps the number of
//! communication rounds logarithmic in `M·T`. The always-communicating
//! mod-UCRL2 baseline, the benchmark environments, and a deterministic
//! experiment harness round out the crate.
//!
//! Modules, bottom up:
//! - [`mdp`]: ground-truth models plus exact gain and diameter oracles;
//! - [`envs`]: riverswim and four-room gridworld constructors;
//! - [`confidence`]: visitation counters and the plausible-set radii;
//! - [`evi`]: extended value iteration over the plausible set;
//! - [`agent`] / [`coordinator`] / [`sim`]: the lockstep dist-UCRL runtime;
//! - [`transport`]: the JSON-lines sync protocol (in-process and TCP);
//! - [`baselines`]: mod-UCRL2 / UCRL2;
//! - [`harness`]: configs, seed sweeps, regret, summaries, property suites.

pub mod agent;
pub mod baselines;
pub mod confidence;
pub mod coordinator;
pub mod envs;
pub mod error;
pub mod evi;
pub mod exec;
pub mod harness;
pub mod mdp;
pub mod seeding;
pub mod sim;
pub mod trace;
pub mod transport;

pub use error::{Error, Result};
