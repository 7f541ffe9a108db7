//! Communication-loss and delay processes.
//!
//! Every link samples its behavior at each step from its own random stream,
//! addressed by `(seed, from, to, step)`, so links can be evaluated in any
//! order and adding a link never perturbs the others.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Digraph, Medag, NodeId};
use crate::protocol::EstimateMsg;
use crate::rng::{self, Domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("no link from node {} to node {}", .from + 1, .to + 1)]
    UnknownLink { from: NodeId, to: NodeId },
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(String),
}

fn half() -> f64 {
    0.5
}

/// Loss/delay process applied to every link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelModel {
    Ideal,
    /// Time-varying topology: within every `window + 1` consecutive steps each
    /// MEDAG edge is active at least once. Other edges are active with
    /// probability `extra_edge_prob` at each step.
    WindowedUnion {
        window: u64,
        #[serde(default = "half")]
        extra_edge_prob: f64,
    },
    /// Delay uniform on `[0, max_delay]`.
    BoundedDelay { max_delay: u64 },
    /// Each packet is lost with probability `p`.
    BernoulliErasure { p: f64 },
    /// With probability `e` the receiver gets the packet sent `τ` steps
    /// earlier instead of the current one, `τ` uniform on `[1, max_delay]`.
    ErasureWithDelay { e: f64, max_delay: u64 },
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ChannelError::InvalidParameter(format!("{name} = {v} is not a probability")))
            }
        };
        match *self {
            ChannelModel::Ideal | ChannelModel::BoundedDelay { .. } => Ok(()),
            ChannelModel::WindowedUnion { extra_edge_prob, .. } => prob("extra_edge_prob", extra_edge_prob),
            ChannelModel::BernoulliErasure { p } => prob("p", p),
            ChannelModel::ErasureWithDelay { e, max_delay } => {
                prob("e", e)?;
                if max_delay == 0 {
                    return Err(ChannelError::InvalidParameter("max_delay must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Worst-case age of the freshest message a node holds from each MEDAG
    /// neighbor, when such a bound exists.
    pub fn envelope_window(&self) -> Option<u64> {
        match *self {
            ChannelModel::Ideal => Some(0),
            ChannelModel::WindowedUnion { window, .. } => Some(window),
            ChannelModel::BoundedDelay { max_delay } => Some(max_delay),
            ChannelModel::ErasureWithDelay { max_delay, .. } => Some(max_delay),
            ChannelModel::BernoulliErasure { .. } => None,
        }
    }

    /// True when packets can arrive later than the step they were sent.
    pub fn delays(&self) -> bool {
        matches!(
            self,
            ChannelModel::BoundedDelay { .. } | ChannelModel::ErasureWithDelay { .. }
        )
    }
}

/// Activation schedule of a windowed channel.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSchedule {
    period: u64,
    group_of: BTreeMap<(NodeId, NodeId), u64>,
    extra_edge_prob: f64,
    seed: u64,
}

impl WindowSchedule {
    pub fn period(&self) -> u64 {
        self.period
    }

    /// MEDAG edges assigned to each group.
    pub fn groups(&self) -> Vec<Vec<(NodeId, NodeId)>> {
        let mut groups = vec![Vec::new(); self.period as usize];
        for (&edge, &g) in &self.group_of {
            groups[g as usize].push(edge);
        }
        groups
    }

    pub fn is_active(&self, from: NodeId, to: NodeId, k: u64) -> bool {
        if self.group_of.get(&(from, to)) == Some(&(k % self.period)) {
            return true;
        }
        let mut r = rng::stream(self.seed, Domain::Window, from as u64, to as u64, k);
        r.random::<f64>() < self.extra_edge_prob
    }

    /// Edges of `g` active at step `k`.
    pub fn active_edges(&self, g: &Digraph, k: u64) -> BTreeSet<(NodeId, NodeId)> {
        g.edges()
            .iter()
            .copied()
            .filter(|&(j, i)| self.is_active(j, i, k))
            .collect()
    }
}

/// Splits the union of MEDAG edges round-robin into `window + 1` groups; group
/// `k mod (window + 1)` is active at step `k`.
pub fn make_window_schedule(
    medags: &[Option<Medag>],
    window: u64,
    seed: u64,
    extra_edge_prob: f64,
) -> WindowSchedule {
    let union: BTreeSet<(NodeId, NodeId)> = medags.iter().flatten().flat_map(Medag::edges).collect();
    let period = window + 1;
    let group_of = union
        .into_iter()
        .enumerate()
        .map(|(idx, edge)| (edge, idx as u64 % period))
        .collect();
    WindowSchedule {
        period,
        group_of,
        extra_edge_prob,
        seed,
    }
}

/// What happens to the packet sent on a link at a given step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Deliver { at: u64 },
    Drop,
    /// The receiver gets the packet this link carried `age` steps ago.
    Replay { age: u64 },
}

/// A channel model bound to a graph and a seed.
#[derive(Clone, Debug)]
pub struct Channel {
    model: ChannelModel,
    edges: BTreeSet<(NodeId, NodeId)>,
    schedule: Option<WindowSchedule>,
    seed: u64,
}

impl Channel {
    pub fn new(model: ChannelModel, g: &Digraph, medags: &[Option<Medag>], seed: u64) -> Result<Self, ChannelError> {
        model.validate()?;
        let schedule = match model {
            ChannelModel::WindowedUnion { window, extra_edge_prob } => {
                Some(make_window_schedule(medags, window, seed, extra_edge_prob))
            }
            _ => None,
        };
        Ok(Self {
            model,
            edges: g.edges().clone(),
            schedule,
            seed,
        })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn schedule(&self) -> Option<&WindowSchedule> {
        self.schedule.as_ref()
    }

    /// Samples the fate of the packet sent from `from` to `to` at step `k`.
    pub fn transmit(&self, from: NodeId, to: NodeId, k: u64) -> Result<Outcome, ChannelError> {
        if !self.edges.contains(&(from, to)) {
            return Err(ChannelError::UnknownLink { from, to });
        }
        let mut r = rng::stream(self.seed, Domain::Channel, from as u64, to as u64, k);
        let outcome = match self.model {
            ChannelModel::Ideal => Outcome::Deliver { at: k },
            ChannelModel::WindowedUnion { .. } => {
                let schedule = self.schedule.as_ref().expect("windowed channels carry a schedule");
                if schedule.is_active(from, to, k) {
                    Outcome::Deliver { at: k }
                } else {
                    Outcome::Drop
                }
            }
            ChannelModel::BoundedDelay { max_delay } => Outcome::Deliver {
                at: k + r.random_range(0..=max_delay),
            },
            ChannelModel::BernoulliErasure { p } => {
                if r.random::<f64>() < p {
                    Outcome::Drop
                } else {
                    Outcome::Deliver { at: k }
                }
            }
            ChannelModel::ErasureWithDelay { e, max_delay } => {
                if r.random::<f64>() < e {
                    // Nothing older than step 0 exists.
                    let age = r.random_range(1..=max_delay).min(k);
                    if age == 0 {
                        Outcome::Deliver { at: k }
                    } else {
                        Outcome::Replay { age }
                    }
                } else {
                    Outcome::Deliver { at: k }
                }
            }
        };
        Ok(outcome)
    }
}

/// A bundle of messages on one link.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub from: NodeId,
    pub to: NodeId,
    pub sent: u64,
    pub msgs: Vec<EstimateMsg>,
}

/// Packets in flight, per-link history for replays, and a digest of every
/// sampled outcome.
#[derive(Clone, Debug)]
pub struct ChannelLayer {
    channel: Channel,
    pending: BTreeMap<u64, Vec<Packet>>,
    history: BTreeMap<(NodeId, NodeId), BTreeMap<u64, Vec<EstimateMsg>>>,
    keep: u64,
    hasher: Sha256,
}

impl ChannelLayer {
    pub fn new(channel: Channel) -> Self {
        let keep = match channel.model {
            ChannelModel::ErasureWithDelay { max_delay, .. } => max_delay,
            _ => 0,
        };
        Self {
            channel,
            pending: BTreeMap::new(),
            history: BTreeMap::new(),
            keep,
            hasher: Sha256::new(),
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Sends `msgs` from `from` to `to` at step `k`.
    pub fn send(&mut self, from: NodeId, to: NodeId, k: u64, msgs: Vec<EstimateMsg>) -> Result<Outcome, ChannelError> {
        let outcome = self.channel.transmit(from, to, k)?;
        let (tag, arg) = match outcome {
            Outcome::Deliver { at } => (0u8, at),
            Outcome::Drop => (1, 0),
            Outcome::Replay { age } => (2, age),
        };
        self.hasher.update(k.to_le_bytes());
        self.hasher.update((from as u64).to_le_bytes());
        self.hasher.update((to as u64).to_le_bytes());
        self.hasher.update([tag]);
        self.hasher.update(arg.to_le_bytes());

        if self.keep > 0 {
            let link = self.history.entry((from, to)).or_default();
            link.insert(k, msgs.clone());
            let horizon = k.saturating_sub(self.keep);
            while link.first_key_value().is_some_and(|(&s, _)| s < horizon) {
                link.pop_first();
            }
        }
        match outcome {
            Outcome::Deliver { at } => self.pending.entry(at).or_default().push(Packet { from, to, sent: k, msgs }),
            Outcome::Drop => {}
            Outcome::Replay { age } => {
                let sent = k - age;
                if let Some(old) = self.history.get(&(from, to)).and_then(|h| h.get(&sent)) {
                    let packet = Packet {
                        from,
                        to,
                        sent,
                        msgs: old.clone(),
                    };
                    self.pending.entry(k).or_default().push(packet);
                }
            }
        }
        Ok(outcome)
    }

    /// Number of packets due at step `k` per receiver, so far.
    pub fn due_counts(&self, k: u64, nodes: usize) -> Vec<usize> {
        let mut counts = vec![0; nodes];
        for p in self.pending.get(&k).into_iter().flatten() {
            counts[p.to] += 1;
        }
        counts
    }

    /// Removes and returns the packets due at step `k`, in send order.
    pub fn take_due(&mut self, k: u64) -> Vec<Packet> {
        self.pending.remove(&k).unwrap_or_default()
    }

    /// Hex SHA-256 of every outcome sampled so far.
    pub fn digest(&self) -> String {
        hex_digest(self.hasher.clone().finalize().as_slice())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
