//! Attack-resilient distributed state estimation of an LTI plant over
//! unreliable sensor networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`lti`]: plant model, modal decomposition and local Luenberger observers.
//! - [`graph`]: digraphs, strong r-robustness certification and MEDAG
//!   (mode estimation directed acyclic graph) construction.
//! - [`protocol`]: per-node estimator state machine (buffers, trimming,
//!   sliding-window and open-loop consensus updates).
//! - [`adversary`]: Byzantine adversary strategies.
//! - [`channels`]: communication loss and delay processes.
//! - [`sim`]: synchronous simulator, convergence envelopes, effective drop
//!   probability and Monte Carlo mean-square estimation.
//! - [`scenario`]: TOML scenario files and the bundled scenarios.
//! - [`output`]: CSV/JSON writers for traces and reports.
//! - [`cli`]: the `resest` command-line front end.

pub mod adversary;
pub mod channels;
pub mod cli;
pub mod graph;
pub mod lti;
pub mod output;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use graph::{Digraph, Medag, NodeId, NodeSet};
pub use lti::{ModalPlant, ObserverGains, Plant};
pub use scenario::ScenarioFile;
pub use sim::{MssReport, SimConfig, SimError, Trace};
