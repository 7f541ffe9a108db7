//! Byzantine adversary strategies.
//!
//! Adversaries are omniscient: each emission is computed from a read-only
//! view of the whole simulation, including the true modal state, every regular
//! estimate and how many regular packets each receiver got this step. They
//! may equivocate, sending different values to different receivers.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Digraph, Medag, NodeId, NodeSet};
use crate::rng::{self, Domain};

pub use crate::graph::f_local_check;

/// Default bound on adversarial value magnitudes.
pub const DEFAULT_CAP: f64 = 1e12;

/// Value carried by an adversarial message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdvValue {
    Absolute(f64),
    /// The true modal state at the current step plus an offset.
    TruthOffset(f64),
}

/// Timestamp attached to an adversarial message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stamp {
    /// The current step.
    Honest,
    /// The current step shifted by an offset. Negative results count as
    /// missing.
    Offset(i64),
    Missing,
}

impl Stamp {
    pub fn resolve(self, step: u64) -> Option<u64> {
        match self {
            Stamp::Honest => Some(step),
            Stamp::Offset(d) => {
                let ts = step as i128 + d as i128;
                u64::try_from(ts).ok()
            }
            Stamp::Missing => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Emission {
    pub value: AdvValue,
    pub stamp: Stamp,
}

/// One adversarial message to one receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversaryMsg {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub mode: usize,
    pub emission: Emission,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    High,
    Low,
    /// High to even-numbered receivers, low to odd ones (0-indexed).
    Split,
}

/// Read-only view of the simulation handed to adversaries.
pub struct AdversaryContext<'a> {
    pub step: u64,
    pub seed: u64,
    pub lambdas: &'a [f64],
    /// True modal state for steps `0..=step`.
    pub truth: &'a [Vec<f64>],
    /// Current estimation error of each regular node, `None` for adversaries.
    pub regular_errors: &'a [Option<Vec<f64>>],
    pub graph: &'a Digraph,
    /// MEDAG per mode, for the modes that run consensus.
    pub medags: &'a [Option<Medag>],
    pub adversaries: &'a NodeSet,
    /// Regular packets delivered to each node at this step.
    pub regular_deliveries: &'a [usize],
}

impl AdversaryContext<'_> {
    pub fn truth_now(&self, mode: usize) -> f64 {
        self.truth[self.step as usize][mode]
    }

    /// Largest and smallest current error among the regular in-neighbors of
    /// `receiver` for `mode`.
    pub fn neighbor_error_range(&self, receiver: NodeId, mode: usize) -> Option<(f64, f64)> {
        self.graph
            .in_neighbors(receiver)
            .iter()
            .filter_map(|&l| self.regular_errors[l].as_ref().map(|e| e[mode]))
            .fold(None, |acc, e| match acc {
                None => Some((e, e)),
                Some((hi, lo)) => Some((hi.max(e), lo.min(e))),
            })
    }
}

pub type HookFn = dyn Fn(&AdversaryContext<'_>, NodeId, NodeId, usize) -> Option<Emission> + Send + Sync;

/// Behavior of a compromised node.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryStrategy {
    /// Never transmits.
    Silent,
    /// A self-consistent fake trajectory `z'_j[k] = λ_j^k z'_j[0]`, sent to
    /// everyone. Modes beyond `initial` start at zero.
    ConstantSpoof { initial: Vec<f64> },
    /// Truth plus independent uniform noise in `[-magnitude, magnitude]` per
    /// receiver and mode.
    RandomNoise { magnitude: f64 },
    /// Sends the current true value under a shifted timestamp.
    FalseTimestamp { offset: i64 },
    /// Every adversary pushes a value just past the extreme of the receiver's
    /// regular neighborhood.
    CollusiveExtremes { direction: Direction, overshoot: f64 },
    /// User-supplied behavior; `(context, sender, receiver, mode)`.
    #[serde(skip)]
    ScriptedHook(Arc<HookFn>),
}

impl fmt::Debug for AdversaryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Silent => write!(f, "Silent"),
            Self::ConstantSpoof { initial } => f.debug_struct("ConstantSpoof").field("initial", initial).finish(),
            Self::RandomNoise { magnitude } => f.debug_struct("RandomNoise").field("magnitude", magnitude).finish(),
            Self::FalseTimestamp { offset } => f.debug_struct("FalseTimestamp").field("offset", offset).finish(),
            Self::CollusiveExtremes { direction, overshoot } => f
                .debug_struct("CollusiveExtremes")
                .field("direction", direction)
                .field("overshoot", overshoot)
                .finish(),
            Self::ScriptedHook(_) => write!(f, "ScriptedHook"),
        }
    }
}

impl PartialEq for AdversaryStrategy {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::ScriptedHook(a), Self::ScriptedHook(b)) => Arc::ptr_eq(a, b),
            (Self::ScriptedHook(_), _) | (_, Self::ScriptedHook(_)) => false,
            _ => format!("{self:?}") == format!("{other:?}"),
        }
    }
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Silent => "silent",
            Self::ConstantSpoof { .. } => "constant-spoof",
            Self::RandomNoise { .. } => "random-noise",
            Self::FalseTimestamp { .. } => "false-timestamp",
            Self::CollusiveExtremes { .. } => "collusive-extremes",
            Self::ScriptedHook(_) => "scripted-hook",
        }
    }

    /// One of each serializable strategy with representative parameters.
    pub fn builtins() -> Vec<AdversaryStrategy> {
        vec![
            Self::Silent,
            Self::ConstantSpoof { initial: vec![5.0, -3.0] },
            Self::RandomNoise { magnitude: 10.0 },
            Self::FalseTimestamp { offset: -3 },
            Self::CollusiveExtremes {
                direction: Direction::Split,
                overshoot: 1.0,
            },
        ]
    }
}

fn capped(value: AdvValue, cap: f64) -> AdvValue {
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-cap, cap) };
    match value {
        AdvValue::Absolute(v) => AdvValue::Absolute(clamp(v)),
        AdvValue::TruthOffset(d) => AdvValue::TruthOffset(clamp(d)),
    }
}

/// Messages `sender` sends at `ctx.step`, one per regular out-neighbor and
/// mode (none when the strategy withholds).
pub fn adversary_emit(
    strategy: &AdversaryStrategy,
    ctx: &AdversaryContext<'_>,
    sender: NodeId,
    cap: f64,
) -> Vec<AdversaryMsg> {
    let modes = ctx.lambdas.len();
    let mut out = Vec::new();
    for &receiver in ctx.graph.out_neighbors(sender) {
        if ctx.adversaries.contains(&receiver) {
            continue;
        }
        for mode in 0..modes {
            let emission = match strategy {
                AdversaryStrategy::Silent => None,
                AdversaryStrategy::ConstantSpoof { initial } => {
                    let z0 = initial.get(mode).copied().unwrap_or(0.0);
                    let value = ctx.lambdas[mode].powi(ctx.step.min(i32::MAX as u64) as i32) * z0;
                    Some(Emission {
                        value: AdvValue::Absolute(value),
                        stamp: Stamp::Honest,
                    })
                }
                AdversaryStrategy::RandomNoise { magnitude } => {
                    let mut r = rng::stream(
                        ctx.seed,
                        Domain::Adversary,
                        sender as u64,
                        (receiver * modes + mode) as u64,
                        ctx.step,
                    );
                    let u: f64 = r.random_range(-1.0..=1.0);
                    Some(Emission {
                        value: AdvValue::TruthOffset(u * magnitude),
                        stamp: Stamp::Honest,
                    })
                }
                AdversaryStrategy::FalseTimestamp { offset } => Some(Emission {
                    value: AdvValue::TruthOffset(0.0),
                    stamp: Stamp::Offset(*offset),
                }),
                AdversaryStrategy::CollusiveExtremes { direction, overshoot } => {
                    let high = match direction {
                        Direction::High => true,
                        Direction::Low => false,
                        Direction::Split => receiver % 2 == 0,
                    };
                    let (hi, lo) = ctx.neighbor_error_range(receiver, mode).unwrap_or((0.0, 0.0));
                    let offset = if high { hi + overshoot } else { lo - overshoot };
                    Some(Emission {
                        value: AdvValue::TruthOffset(offset),
                        stamp: Stamp::Honest,
                    })
                }
                AdversaryStrategy::ScriptedHook(hook) => hook(ctx, sender, receiver, mode),
            };
            if let Some(e) = emission {
                out.push(AdversaryMsg {
                    sender,
                    receiver,
                    mode,
                    emission: Emission {
                        value: capped(e.value, cap),
                        stamp: e.stamp,
                    },
                });
            }
        }
    }
    out
}
