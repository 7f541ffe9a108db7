//! Per-node estimator state machine.
//!
//! Values handled here live in a *frame*: the simulator may subtract a known
//! per-mode offset from every estimate (for instance the true modal state), so
//! that nodes effectively work on errors. All updates are affine with weights
//! summing to one and rescaling by `λ^τ` maps frames consistently, so the
//! results are the same in any frame. The only place an absolute value leaks
//! in is the "no usable message" case, which stands for an absolute `0`; the
//! caller passes its frame representation as `origin`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::lti::{LtiError, ObserverGains};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("need at least {needed} values to trim, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error(transparent)]
    Observer(#[from] LtiError),
}

/// One per-mode estimate in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateMsg {
    pub sender: NodeId,
    pub mode: usize,
    pub value: f64,
    /// Step at which the estimate was formed; `None` when the stamp is missing.
    pub timestamp: Option<u64>,
}

/// `λ^τ · value`.
pub fn rescale_delayed(lambda: f64, tau: u64, value: f64) -> f64 {
    let tau = i32::try_from(tau).unwrap_or(i32::MAX);
    clamp_finite(lambda.powi(tau) * value)
}

fn clamp_finite(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(f64::MIN, f64::MAX)
    }
}

/// Latest message held from one neighbor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slot {
    Empty,
    Stamped { value: f64, timestamp: u64 },
    /// The last accepted message had no usable stamp.
    Unstamped,
}

/// Receive buffer of one node for one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeBuffer {
    neighbors: Vec<NodeId>,
    slots: Vec<Slot>,
    last_stamp: Vec<Option<u64>>,
}

impl NodeBuffer {
    pub fn new(mut neighbors: Vec<NodeId>) -> Self {
        neighbors.sort_unstable();
        neighbors.dedup();
        let len = neighbors.len();
        Self {
            neighbors,
            slots: vec![Slot::Empty; len],
            last_stamp: vec![None; len],
        }
    }

    pub fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Newest stamp accepted from each neighbor.
    pub fn stamps(&self) -> &[Option<u64>] {
        &self.last_stamp
    }

    /// Offers a message received at step `now`. Messages from outside the
    /// neighbor set and stamps that are not strictly newer are ignored.
    /// Missing stamps and stamps from the future overwrite the value with
    /// the "unusable" marker without advancing the stamp. Returns whether the
    /// buffer changed.
    pub fn offer(&mut self, msg: &EstimateMsg, now: u64) -> bool {
        let Ok(pos) = self.neighbors.binary_search(&msg.sender) else {
            return false;
        };
        match msg.timestamp {
            Some(ts) if ts <= now => {
                if self.last_stamp[pos].is_some_and(|last| ts <= last) {
                    return false;
                }
                self.last_stamp[pos] = Some(ts);
                self.slots[pos] = Slot::Stamped {
                    value: msg.value,
                    timestamp: ts,
                };
            }
            _ => self.slots[pos] = Slot::Unstamped,
        }
        true
    }

    /// Rescaled values `z̄_il[now]`, one per neighbor.
    pub fn rescaled(&self, lambda: f64, now: u64, origin: f64) -> Vec<(NodeId, f64)> {
        self.neighbors
            .iter()
            .zip(&self.slots)
            .map(|(&l, slot)| {
                let v = match *slot {
                    Slot::Stamped { value, timestamp } if timestamp <= now => {
                        rescale_delayed(lambda, now - timestamp, value)
                    }
                    _ => origin,
                };
                (l, v)
            })
            .collect()
    }
}

/// Outcome of discarding the `f` largest and `f` smallest values.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimResult {
    pub kept: Vec<(NodeId, f64)>,
    pub discarded_high: Vec<(NodeId, f64)>,
    pub discarded_low: Vec<(NodeId, f64)>,
}

/// Sorts descending by value (ties by ascending node id) and drops `f` from
/// each end.
pub fn trim_extremes(values: &[(NodeId, f64)], f: usize) -> Result<TrimResult, ProtocolError> {
    let needed = 2 * f + 1;
    if values.len() < needed {
        return Err(ProtocolError::TooFewValues {
            needed,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let len = sorted.len();
    let discarded_low = sorted.split_off(len - f);
    let kept = sorted.split_off(f);
    Ok(TrimResult {
        kept,
        discarded_high: sorted,
        discarded_low,
    })
}

/// How kept values are weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    #[default]
    Uniform,
    /// All weight on the median of the kept values (split over the two middle
    /// values when their count is even).
    Median,
}

impl WeightRule {
    /// Weights for `kept` values sorted descending. Non-negative, summing to
    /// one.
    pub fn weights(self, count: usize) -> Vec<f64> {
        match self {
            WeightRule::Uniform => vec![1.0 / count as f64; count],
            WeightRule::Median => {
                let mut w = vec![0.0; count];
                if count % 2 == 1 {
                    w[count / 2] = 1.0;
                } else if count > 0 {
                    w[count / 2 - 1] = 0.5;
                    w[count / 2] = 0.5;
                }
                w
            }
        }
    }
}

fn weighted(kept: &[(NodeId, f64)], rule: WeightRule) -> f64 {
    let w = rule.weights(kept.len());
    kept.iter().zip(&w).map(|((_, v), w)| v * w).sum()
}

/// Trims already-rescaled values and returns `λ Σ w v` over the survivors.
pub fn trimmed_update(
    lambda: f64,
    values: &[(NodeId, f64)],
    f: usize,
    rule: WeightRule,
) -> Result<f64, ProtocolError> {
    let trimmed = trim_extremes(values, f)?;
    Ok(clamp_finite(lambda * weighted(&trimmed.kept, rule)))
}

/// Sliding-window update from a receive buffer at step `now`.
pub fn swlfse_update(
    lambda: f64,
    buffer: &NodeBuffer,
    now: u64,
    origin: f64,
    f: usize,
    rule: WeightRule,
) -> Result<f64, ProtocolError> {
    trimmed_update(lambda, &buffer.rescaled(lambda, now, origin), f, rule)
}

/// Update from the values received in the current step: trimmed consensus
/// with at least `2f+1` values, open loop `λ · current` otherwise.
pub fn lfse_update(
    lambda: f64,
    received: &[(NodeId, f64)],
    f: usize,
    current: f64,
    rule: WeightRule,
) -> f64 {
    match trimmed_update(lambda, received, f, rule) {
        Ok(v) => v,
        Err(_) => clamp_finite(lambda * current),
    }
}

/// Which consensus rule a node runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    SwLfse,
    Lfse,
}

/// How a node tracks one mode.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeRole {
    /// Detectable locally; driven by the Luenberger observer.
    Observer,
    /// Unstable and undetectable; driven by trimmed consensus over the
    /// restricted neighbor set.
    Consensus { neighbors: Vec<NodeId> },
    /// Stable and undetectable; propagated through the dynamics.
    OpenLoop,
}

/// State machine of one regular node.
#[derive(Clone, Debug)]
pub struct RegularNode {
    id: NodeId,
    lambdas: Vec<f64>,
    roles: Vec<ModeRole>,
    observer: Option<ObserverGains>,
    variant: Variant,
    f: usize,
    rule: WeightRule,
    buffers: Vec<Option<NodeBuffer>>,
    estimates: Vec<f64>,
}

impl RegularNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: NodeId,
        lambdas: Vec<f64>,
        roles: Vec<ModeRole>,
        observer: Option<ObserverGains>,
        variant: Variant,
        f: usize,
        rule: WeightRule,
        initial: Vec<f64>,
    ) -> Self {
        let buffers = roles
            .iter()
            .map(|role| match role {
                ModeRole::Consensus { neighbors } => Some(NodeBuffer::new(neighbors.clone())),
                _ => None,
            })
            .collect();
        Self {
            id,
            lambdas,
            roles,
            observer,
            variant,
            f,
            rule,
            buffers,
            estimates: initial,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn roles(&self) -> &[ModeRole] {
        &self.roles
    }

    pub fn buffer(&self, mode: usize) -> Option<&NodeBuffer> {
        self.buffers[mode].as_ref()
    }

    /// Time-stamped estimates of every mode, formed at step `k`.
    pub fn emit(&self, k: u64) -> Vec<EstimateMsg> {
        self.estimates
            .iter()
            .enumerate()
            .map(|(mode, &value)| EstimateMsg {
                sender: self.id,
                mode,
                value,
                timestamp: Some(k),
            })
            .collect()
    }

    /// Advances from step `k` to `k+1`. `y` is the measurement in the
    /// current frame, `inbox` the messages delivered at `k`, and `origin[j]`
    /// the frame value of an absolute zero for mode `j` at step `k`.
    pub fn step(
        &mut self,
        k: u64,
        y: &[f64],
        inbox: &[EstimateMsg],
        origin: &[f64],
    ) -> Result<(), ProtocolError> {
        if let Some(obs) = &self.observer {
            obs.step(&mut self.estimates, y)?;
        }
        for mode in 0..self.roles.len() {
            let lambda = self.lambdas[mode];
            match &self.roles[mode] {
                ModeRole::Observer => {}
                ModeRole::OpenLoop => {
                    self.estimates[mode] = clamp_finite(lambda * self.estimates[mode]);
                }
                ModeRole::Consensus { .. } => {
                    let buffer = self.buffers[mode].as_mut().expect("consensus modes own a buffer");
                    self.estimates[mode] = match self.variant {
                        Variant::SwLfse => {
                            for msg in inbox.iter().filter(|m| m.mode == mode) {
                                buffer.offer(msg, k);
                            }
                            swlfse_update(lambda, buffer, k, origin[mode], self.f, self.rule)?
                        }
                        Variant::Lfse => {
                            let received = fresh_values(buffer.neighbors(), inbox, mode, lambda, k, origin[mode]);
                            lfse_update(lambda, &received, self.f, self.estimates[mode], self.rule)
                        }
                    };
                }
            }
        }
        Ok(())
    }
}

/// Values delivered this step from listed neighbors, one per sender (the
/// first delivered wins), rescaled like buffered values.
fn fresh_values(
    neighbors: &[NodeId],
    inbox: &[EstimateMsg],
    mode: usize,
    lambda: f64,
    now: u64,
    origin: f64,
) -> Vec<(NodeId, f64)> {
    let mut out: Vec<(NodeId, f64)> = Vec::new();
    for msg in inbox.iter().filter(|m| m.mode == mode) {
        if neighbors.binary_search(&msg.sender).is_err() || out.iter().any(|(s, _)| *s == msg.sender) {
            continue;
        }
        let v = match msg.timestamp {
            Some(ts) if ts <= now => rescale_delayed(lambda, now - ts, msg.value),
            _ => origin,
        };
        out.push((msg.sender, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(v: &[f64]) -> Vec<(NodeId, f64)> {
        v.iter().enumerate().map(|(i, &x)| (i, x)).collect()
    }

    fn msg(sender: NodeId, value: f64, ts: Option<u64>) -> EstimateMsg {
        EstimateMsg {
            sender,
            mode: 0,
            value,
            timestamp: ts,
        }
    }

    #[test]
    fn rescaling() {
        assert_eq!(rescale_delayed(2.0, 2, 3.0), 12.0);
        assert_eq!(rescale_delayed(1.7, 0, -3.25), -3.25);
        let b = NodeBuffer::new(vec![0]);
        assert_eq!(b.rescaled(2.0, 5, 0.0), vec![(0, 0.0)]);
    }

    #[test]
    fn trimming() {
        let t = trim_extremes(&vals(&[9.0, 5.0, 3.0, 2.0, -7.0]), 1).unwrap();
        let kept: Vec<f64> = t.kept.iter().map(|p| p.1).collect();
        assert_eq!(kept, vec![5.0, 3.0, 2.0]);
        assert_eq!(t.discarded_high, vec![(0, 9.0)]);
        assert_eq!(t.discarded_low, vec![(4, -7.0)]);

        let all = trim_extremes(&vals(&[1.0, 3.0]), 0).unwrap();
        assert_eq!(all.kept.len(), 2);

        let ties: Vec<(NodeId, f64)> = (1..=5).map(|i| (i, 4.0)).collect();
        let t = trim_extremes(&ties, 1).unwrap();
        assert_eq!(t.discarded_high, vec![(1, 4.0)]);
        assert_eq!(t.discarded_low, vec![(5, 4.0)]);
        assert_eq!(t.kept.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 3, 4]);

        assert_eq!(
            trim_extremes(&vals(&[1.0, 2.0]), 1),
            Err(ProtocolError::TooFewValues { needed: 3, got: 2 })
        );
    }

    #[test]
    fn weighted_updates() {
        assert_eq!(trimmed_update(2.0, &vals(&[3.0, 5.0]), 0, WeightRule::Uniform).unwrap(), 8.0);
        for rule in [WeightRule::Uniform, WeightRule::Median] {
            assert_eq!(trimmed_update(1.5, &vals(&[2.0, 2.0, 2.0]), 0, rule).unwrap(), 3.0);
        }
        let adv = vals(&[10.0, 2.0, 2.0, 2.0, -10.0]);
        assert_eq!(trimmed_update(1.1, &adv, 1, WeightRule::Uniform).unwrap(), 1.1 * 2.0);
        assert_eq!(trimmed_update(1.0, &vals(&[4.0, 1.0, 3.0, 2.0]), 0, WeightRule::Median).unwrap(), 2.5);
    }

    #[test]
    fn weights_are_normalized() {
        for rule in [WeightRule::Uniform, WeightRule::Median] {
            for count in 1..9 {
                let w = rule.weights(count);
                assert!(w.iter().all(|&x| x >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lfse_cases() {
        assert!((lfse_update(1.1, &vals(&[7.0, 4.0, 1.0]), 1, 0.0, WeightRule::Uniform) - 4.4).abs() < 1e-15);
        assert!((lfse_update(1.1, &vals(&[7.0, 4.0]), 1, 5.0, WeightRule::Uniform) - 5.5).abs() < 1e-15);
        assert_eq!(lfse_update(1.1, &[], 1, 0.0, WeightRule::Uniform), 0.0);
    }

    #[test]
    fn buffer_keeps_newest() {
        let mut b = NodeBuffer::new(vec![2, 5]);
        assert!(b.offer(&msg(2, 1.0, Some(3)), 3));
        assert!(!b.offer(&msg(2, 9.0, Some(2)), 4));
        assert!(!b.offer(&msg(2, 9.0, Some(3)), 4));
        assert!(!b.offer(&msg(7, 9.0, Some(4)), 4));
        assert_eq!(b.rescaled(2.0, 4, -1.0), vec![(2, 2.0), (5, -1.0)]);
        // A stamp from the future counts as missing.
        assert!(b.offer(&msg(5, 3.0, Some(9)), 4));
        assert_eq!(b.slots()[1], Slot::Unstamped);
        assert_eq!(b.stamps()[1], None);
        assert!(b.offer(&msg(2, 3.0, None), 5));
        assert_eq!(b.rescaled(2.0, 5, 0.0), vec![(2, 0.0), (5, 0.0)]);
        assert_eq!(b.stamps()[0], Some(3));
    }

    #[test]
    fn false_timestamp_is_rescaled() {
        let mut b = NodeBuffer::new(vec![0]);
        b.offer(&msg(0, 1.5, Some(7)), 10);
        assert_eq!(b.rescaled(2.0, 10, 0.0), vec![(0, 12.0)]);
    }

    #[test]
    fn open_loop_mode_decays() {
        let mut node = RegularNode::new(0, vec![0.5], vec![ModeRole::OpenLoop], None, Variant::SwLfse, 1, WeightRule::Uniform, vec![8.0]);
        for k in 0..10u64 {
            node.step(k, &[], &[], &[0.0]).unwrap();
            assert_eq!(node.estimates()[0], 8.0 * 0.5f64.powi(k as i32 + 1));
        }
    }

    #[test]
    fn consensus_node_matches_direct_formula() {
        let neighbors = vec![0, 1, 2];
        let mut node = RegularNode::new(
            3,
            vec![1.1],
            vec![ModeRole::Consensus { neighbors }],
            None,
            Variant::SwLfse,
            1,
            WeightRule::Uniform,
            vec![0.0],
        );
        let inbox = vec![msg(0, 3.0, Some(4)), msg(1, -1.0, Some(4)), msg(2, 2.0, Some(4))];
        node.step(4, &[], &inbox, &[0.0]).unwrap();
        assert_eq!(node.estimates()[0], 1.1 * 2.0);
        let emitted = node.emit(5);
        assert_eq!(emitted[0].timestamp, Some(5));
        assert_eq!(emitted[0].sender, 3);
    }

    #[test]
    fn lfse_node_ignores_stale_buffers() {
        let mut node = RegularNode::new(
            3,
            vec![1.1],
            vec![ModeRole::Consensus { neighbors: vec![0, 1, 2] }],
            None,
            Variant::Lfse,
            1,
            WeightRule::Uniform,
            vec![5.0],
        );
        node.step(0, &[], &[msg(0, 1.0, Some(0)), msg(1, 1.0, Some(0))], &[0.0]).unwrap();
        assert!((node.estimates()[0] - 5.5).abs() < 1e-15);
    }
}
