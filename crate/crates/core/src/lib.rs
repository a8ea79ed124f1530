//! Delay violation analysis and slot scheduling for a batch of time-critical
//! packets crossing a two-hop lossy wireless path.
//!
//! The path is two queues in tandem that share `N` transmission slots per
//! frame. A batch of `y` packets joins queue 1 on top of initial backlogs
//! `x1` and `x2` and must leave queue 2 within `w` frames. The crate
//!
//! * evaluates the delay violation probability exactly ([`analysis`]),
//! * bounds it with a union bound and a Chernoff bound ([`analysis`]),
//! * computes fixed per-frame allocations from those bounds ([`semistatic`]),
//! * solves the throughput-maximising finite-horizon MDP and provides queue
//!   based baselines ([`dynamic`]),
//! * estimates everything by simulation ([`sim`]),
//! * and drives parameter sweeps ([`sweep`]).

pub mod analysis;
pub mod dynamic;
pub mod error;
pub mod format;
pub mod model;
pub mod policy;
pub mod semistatic;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{QueueState, ScenarioConfig, Schedule};
pub use policy::SlotPolicy;
