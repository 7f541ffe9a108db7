//! Synchronous simulator, convergence envelopes and mean-square statistics.

mod bounds;
mod engine;
mod mss;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{AdversaryStrategy, DEFAULT_CAP};
use crate::channels::{ChannelError, ChannelModel};
use crate::graph::{
    build_medag_with_threshold, f_local_check, fmt_one_indexed, Digraph, GraphError, Medag, NodeId, NodeSet,
};
use crate::lti::{design_local_observer, diagonalize, source_set, LtiError, ModalPlant, ObserverGains, Plant};
use crate::protocol::{ModeRole, ProtocolError, WeightRule};

pub use bounds::{
    derive_beta_gamma, envelope_horizon, check_envelope, mss_criterion, node_bound, pbar, rate_bound,
    sweep_mss_margin, EnvelopeReport, EnvelopeViolation, MarginTable, ModeEnvelope, NodeBound, ENVELOPE_SLACK,
};
pub use engine::{run_prepared, run_simulation};
pub use mss::{monte_carlo_mss, moving_average, MssReport};
pub use trace::Trace;

/// Default tolerance on the full-state error.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Default local observer contraction.
pub const DEFAULT_GAMMA_LOCAL: f64 = 0.5;
/// Default Monte Carlo trial count.
pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// A hypothesis of the convergence guarantees does not hold.
    #[error("hypothesis violated: {hypothesis}: {detail}")]
    ConfigInvalid { hypothesis: String, detail: String },
    /// The configuration is malformed.
    #[error("invalid input: {0}")]
    Input(String),
    /// A numeric argument is outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl SimError {
    fn hypothesis(hypothesis: impl Into<String>, detail: impl Into<String>) -> Self {
        SimError::ConfigInvalid {
            hypothesis: hypothesis.into(),
            detail: detail.into(),
        }
    }
}

impl From<ChannelError> for SimError {
    fn from(e: ChannelError) -> Self {
        SimError::Input(e.to_string())
    }
}

/// Consensus rule run by the regular nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolKind {
    /// Sliding-window trimmed consensus on time-stamped, possibly delayed
    /// estimates.
    SwLfse,
    /// Trimmed consensus on the estimates received in the current step, open
    /// loop when fewer than `2f+1` arrive. The network must be strongly
    /// `(mf+1)`-robust.
    Lfse { m: usize },
}

impl ProtocolKind {
    /// Peeling threshold for MEDAG construction.
    pub fn threshold(self, f: usize) -> usize {
        match self {
            ProtocolKind::SwLfse => 2 * f + 1,
            ProtocolKind::Lfse { m } => m * f + 1,
        }
    }

    fn hypothesis_name(self) -> &'static str {
        match self {
            ProtocolKind::SwLfse => "strongly (2f+1)-robust",
            ProtocolKind::Lfse { .. } => "strongly (mf+1)-robust",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Horizon {
    Steps { steps: u64 },
    /// The first step at which the convergence envelope guarantees the
    /// tolerance.
    Envelope,
}

/// Coordinates the simulator computes in. `Error` subtracts the true modal
/// state from every value, so errors are computed without cancellation
/// against a growing state. `Absolute` works on raw estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    #[default]
    Error,
    Absolute,
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub plant: Plant,
    pub graph: Digraph,
    pub f: usize,
    pub adversaries: BTreeMap<NodeId, AdversaryStrategy>,
    pub channel: ChannelModel,
    pub protocol: ProtocolKind,
    pub horizon: Horizon,
    pub x0: Vec<f64>,
    pub gamma_local: f64,
    pub weights: WeightRule,
    pub seed: u64,
    pub trials: usize,
    pub frame: Frame,
    pub tolerance: f64,
    pub adversary_cap: f64,
}

impl SimConfig {
    /// A configuration with defaults: no adversaries, ideal channel,
    /// SW-LFSE, 100 steps.
    pub fn new(plant: Plant, graph: Digraph, f: usize, x0: Vec<f64>) -> Self {
        Self {
            plant,
            graph,
            f,
            adversaries: BTreeMap::new(),
            channel: ChannelModel::Ideal,
            protocol: ProtocolKind::SwLfse,
            horizon: Horizon::Steps { steps: 100 },
            x0,
            gamma_local: DEFAULT_GAMMA_LOCAL,
            weights: WeightRule::Uniform,
            seed: 0,
            trials: DEFAULT_TRIALS,
            frame: Frame::Error,
            tolerance: DEFAULT_TOLERANCE,
            adversary_cap: DEFAULT_CAP,
        }
    }

    pub fn adversary_set(&self) -> NodeSet {
        self.adversaries.keys().copied().collect()
    }

    /// Hex SHA-256 of the configuration, excluding seed and trial count.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = 0;
        canonical.trials = 0;
        let bytes = format!("{canonical:?}");
        crate::channels::hex_digest(Sha256::digest(bytes.as_bytes()).as_slice())
    }
}

/// A validated configuration with its design-time artifacts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub modal: ModalPlant,
    /// MEDAG for each mode that needs consensus.
    pub medags: Vec<Option<Medag>>,
    /// Local observer of each regular node that detects at least one mode.
    pub observers: Vec<Option<ObserverGains>>,
    pub adversaries: NodeSet,
    /// Regular nodes, ascending.
    pub regular: Vec<NodeId>,
    /// Initial modal state.
    pub z0: Vec<f64>,
}

impl Prepared {
    /// Role of regular node `i` for `mode`.
    pub fn role(&self, i: NodeId, mode: usize) -> ModeRole {
        if self.modal.is_detectable(i, mode) {
            ModeRole::Observer
        } else if let Some(m) = &self.medags[mode] {
            ModeRole::Consensus {
                neighbors: m.neighbors(i).to_vec(),
            }
        } else {
            ModeRole::OpenLoop
        }
    }

    /// Level of node `i` in the MEDAG of `mode` (0 for modes without one).
    pub fn level(&self, i: NodeId, mode: usize) -> usize {
        self.medags[mode].as_ref().map_or(0, |m| m.level(i))
    }
}

/// Validates `cfg` and builds the modal form, MEDAGs and observers.
pub fn prepare(cfg: &SimConfig) -> Result<Prepared, SimError> {
    let n_nodes = cfg.graph.node_count();
    if cfg.plant.node_count() != n_nodes {
        return Err(SimError::Input(format!(
            "plant has {} sensors but the graph has {} nodes",
            cfg.plant.node_count(),
            n_nodes
        )));
    }
    if cfg.x0.len() != cfg.plant.state_dim() {
        return Err(SimError::Input(format!(
            "x0 has {} entries, state dimension is {}",
            cfg.x0.len(),
            cfg.plant.state_dim()
        )));
    }
    if !(0.0..1.0).contains(&cfg.gamma_local) {
        return Err(SimError::Input(format!("gamma_local must lie in [0, 1), got {}", cfg.gamma_local)));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(SimError::Input(format!("tolerance must be positive, got {}", cfg.tolerance)));
    }
    if !(cfg.adversary_cap > 0.0) {
        return Err(SimError::Input(format!("adversary cap must be positive, got {}", cfg.adversary_cap)));
    }
    if let Some(&bad) = cfg.adversaries.keys().find(|&&a| a >= n_nodes) {
        return Err(SimError::Input(format!("adversary {} is not a node", bad + 1)));
    }
    cfg.channel.validate()?;
    if let ProtocolKind::Lfse { m } = cfg.protocol {
        if m < 3 {
            return Err(SimError::hypothesis("m >= 3", format!("LFSE needs m >= 3, got m = {m}")));
        }
        if !matches!(cfg.channel, ChannelModel::Ideal | ChannelModel::BernoulliErasure { .. }) {
            return Err(SimError::hypothesis(
                "erasure channel for LFSE",
                "LFSE runs over ideal or Bernoulli erasure channels",
            ));
        }
    }

    let modal = diagonalize(&cfg.plant, 1e-9).map_err(|e| match e {
        LtiError::NonRealSpectrum { .. } | LtiError::RepeatedEigenvalue { .. } | LtiError::Diagonalization { .. } => {
            SimError::hypothesis("real, distinct eigenvalues", e.to_string())
        }
        other => SimError::Input(other.to_string()),
    })?;

    let adversaries = cfg.adversary_set();
    if !f_local_check(&cfg.graph, &adversaries, cfg.f) {
        return Err(SimError::hypothesis(
            "adversary set is f-local",
            format!("{} has more than f = {} members in some neighborhood", fmt_one_indexed(&adversaries), cfg.f),
        ));
    }

    let threshold = cfg.protocol.threshold(cfg.f);
    let mut medags = vec![None; modal.mode_count()];
    for &j in modal.consensus_set() {
        let sources = source_set(&modal, j);
        if sources.is_empty() {
            return Err(SimError::hypothesis(
                "nonempty source set",
                format!("no node detects unstable mode {}", j + 1),
            ));
        }
        match build_medag_with_threshold(&cfg.graph, &sources, threshold) {
            Ok(mut m) => {
                m.mode = j;
                medags[j] = Some(m);
            }
            Err(GraphError::NotRobust { residual, .. }) => {
                return Err(SimError::hypothesis(
                    cfg.protocol.hypothesis_name(),
                    format!(
                        "mode {} with sources {}: nodes {} cannot be reached with threshold {threshold}",
                        j + 1,
                        fmt_one_indexed(&sources),
                        fmt_one_indexed(&residual)
                    ),
                ));
            }
            Err(other) => return Err(SimError::Input(other.to_string())),
        }
    }

    let regular: Vec<NodeId> = (0..n_nodes).filter(|i| !adversaries.contains(i)).collect();
    let mut observers = vec![None; n_nodes];
    for &i in &regular {
        if !modal.detectable_modes(i).is_empty() {
            observers[i] = Some(
                design_local_observer(&modal, i, cfg.gamma_local).map_err(|e| SimError::Input(e.to_string()))?,
            );
        }
    }
    let z0 = modal.to_modal(&cfg.x0);
    Ok(Prepared {
        modal,
        medags,
        observers,
        adversaries,
        regular,
        z0,
    })
}
