use crate::channels::ChannelModel;
use crate::graph::NodeId;
use crate::protocol::ModeRole;

use super::{Prepared, ProtocolKind, SimConfig, SimError, Trace};

/// Relative slack allowed when comparing a recorded error with its envelope,
/// covering floating-point rounding in the simulated recursion.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Convergence envelope of a node at MEDAG level `q`:
/// `β [(N − (2f+1)) (|λ|/γ)^(T+1)]^q γ^k`, valid for `k ≥ (T+1) q`.
#[allow(clippy::too_many_arguments)]
pub fn rate_bound(
    q: u64,
    k: u64,
    n: usize,
    f: usize,
    t: u64,
    beta: f64,
    gamma: f64,
    lambda: f64,
) -> Result<f64, SimError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SimError::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if k < (t + 1) * q {
        return Err(SimError::Domain(format!("bound holds only for k >= (T+1)q = {}, got k = {k}", (t + 1) * q)));
    }
    let spread = n.saturating_sub(2 * f + 1) as f64;
    let level_factor = spread * (lambda.abs() / gamma).powi(to_i32(t + 1));
    let direct = beta * level_factor.powi(to_i32(q)) * gamma.powi(to_i32(k));
    if direct.is_finite() {
        return Ok(direct);
    }
    let log = beta.ln() + q as f64 * level_factor.ln() + k as f64 * gamma.ln();
    Ok(log.exp())
}

fn to_i32(v: u64) -> i32 {
    i32::try_from(v).unwrap_or(i32::MAX)
}

/// Envelope constants of one mode, taken over its regular source nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeEnvelope {
    /// Largest initial error bound of a regular source.
    pub beta: f64,
    /// Largest observer contraction of a regular source, floored at
    /// [`crate::lti::EPS_GAMMA`].
    pub gamma: f64,
}

/// `(β, γ)` per mode, `None` for modes no regular node detects. Initial
/// estimates are zero, so the initial modal error is `−z[0]`.
pub fn derive_beta_gamma(prep: &Prepared) -> Vec<Option<ModeEnvelope>> {
    let e0: Vec<f64> = prep.z0.iter().map(|z| -z).collect();
    (0..prep.modal.mode_count())
        .map(|j| {
            prep.regular
                .iter()
                .filter_map(|&i| prep.observers[i].as_ref())
                .filter(|obs| obs.modes().contains(&j))
                .map(|obs| {
                    let beta = obs.initial_bound(&e0, j).expect("mode is detectable");
                    (beta, obs.envelope_rate())
                })
                .fold(None, |acc: Option<ModeEnvelope>, (b, g)| {
                    Some(match acc {
                        None => ModeEnvelope { beta: b, gamma: g },
                        Some(m) => ModeEnvelope {
                            beta: m.beta.max(b),
                            gamma: m.gamma.max(g),
                        },
                    })
                })
        })
        .collect()
}

/// Envelope of one regular node for one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeBound {
    /// Observer or consensus node at level `q` of the mode's MEDAG.
    Rate {
        q: u64,
        window: u64,
        n: usize,
        f: usize,
        beta: f64,
        gamma: f64,
        lambda: f64,
    },
    /// Stable mode propagated open loop: `|λ|^k |e[0]|`.
    OpenLoop { lambda: f64, e0: f64 },
}

impl NodeBound {
    /// The bound at step `k`, `None` before it applies.
    pub fn at(&self, k: u64) -> Option<f64> {
        match *self {
            NodeBound::Rate {
                q,
                window,
                n,
                f,
                beta,
                gamma,
                lambda,
            } => rate_bound(q, k, n, f, window, beta, gamma, lambda).ok(),
            NodeBound::OpenLoop { lambda, e0 } => Some(lambda.abs().powi(to_i32(k)) * e0.abs()),
        }
    }

    /// First step from which the bound stays below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<u64> {
        let (start, c, rate) = match *self {
            NodeBound::Rate { q, window, gamma, .. } => {
                let start = (window + 1) * q;
                (start, self.at(start)?, gamma)
            }
            NodeBound::OpenLoop { lambda, e0 } => (0, e0.abs(), lambda.abs()),
        };
        if c < threshold {
            return Some(start);
        }
        if rate >= 1.0 {
            return None;
        }
        // c · rate^(k − start) < threshold
        let guess = ((threshold / c).ln() / rate.ln()).floor().max(0.0) as u64;
        let mut k = start + guess.saturating_sub(2);
        while self.at(k)? >= threshold {
            k += 1;
        }
        Some(k)
    }
}

/// Envelope of regular node `i` for `mode`, or `None` when the channel gives
/// no deterministic age bound or no regular node detects the mode.
pub fn node_bound(
    cfg: &SimConfig,
    prep: &Prepared,
    envelopes: &[Option<ModeEnvelope>],
    i: NodeId,
    mode: usize,
) -> Option<NodeBound> {
    let lambda = prep.modal.lambda(mode);
    let window = cfg.channel.envelope_window()?;
    match prep.role(i, mode) {
        ModeRole::OpenLoop => Some(NodeBound::OpenLoop {
            lambda,
            e0: prep.z0[mode],
        }),
        ModeRole::Observer | ModeRole::Consensus { .. } => {
            let env = envelopes[mode]?;
            Some(NodeBound::Rate {
                q: prep.level(i, mode) as u64,
                window,
                n: cfg.graph.node_count(),
                f: cfg.f,
                beta: env.beta,
                gamma: env.gamma,
                lambda,
            })
        }
    }
}

fn require_envelope(cfg: &SimConfig) -> Result<u64, SimError> {
    if let ProtocolKind::Lfse { .. } = cfg.protocol {
        return Err(SimError::hypothesis(
            "SW-LFSE protocol",
            "the rate envelope covers the sliding-window protocol only",
        ));
    }
    cfg.channel.envelope_window().ok_or_else(|| {
        SimError::hypothesis(
            "bounded message age",
            match cfg.channel {
                ChannelModel::BernoulliErasure { .. } => "Bernoulli erasures give no deterministic envelope",
                _ => "channel gives no deterministic envelope",
            },
        )
    })
}

/// Smallest horizon at which every envelope guarantees a full-state error
/// below `cfg.tolerance`.
pub fn envelope_horizon(cfg: &SimConfig, prep: &Prepared) -> Result<u64, SimError> {
    require_envelope(cfg)?;
    let n = prep.modal.mode_count();
    let scale = prep.modal.inverse_transform().norm() * (n as f64).sqrt();
    let threshold = cfg.tolerance / scale;
    let envelopes = derive_beta_gamma(prep);
    let mut horizon = 0;
    for &i in &prep.regular {
        for j in 0..n {
            let bound = node_bound(cfg, prep, &envelopes, i, j).ok_or_else(|| {
                SimError::hypothesis("nonempty source set", format!("no regular node detects mode {}", j + 1))
            })?;
            let k = bound.first_below(threshold).ok_or_else(|| {
                SimError::Domain(format!("envelope of node {} mode {} never drops below tolerance", i + 1, j + 1))
            })?;
            horizon = horizon.max(k);
        }
    }
    Ok(horizon)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeViolation {
    pub k: u64,
    pub node: NodeId,
    pub mode: usize,
    pub error: f64,
    pub bound: f64,
}

/// Pointwise comparison of a trace against the envelopes.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeReport {
    pub checked: usize,
    pub violations: Vec<EnvelopeViolation>,
    /// Largest `|error| / bound` seen.
    pub worst_ratio: f64,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_envelope(cfg: &SimConfig, prep: &Prepared, trace: &Trace) -> Result<EnvelopeReport, SimError> {
    require_envelope(cfg)?;
    let envelopes = derive_beta_gamma(prep);
    let mut report = EnvelopeReport {
        checked: 0,
        violations: Vec::new(),
        worst_ratio: 0.0,
    };
    for (idx, &i) in trace.nodes.iter().enumerate() {
        for j in 0..trace.lambdas.len() {
            let Some(bound) = node_bound(cfg, prep, &envelopes, i, j) else {
                continue;
            };
            for (k, row) in trace.errors.iter().enumerate() {
                let Some(b) = bound.at(k as u64) else {
                    continue;
                };
                let e = row[idx][j].abs();
                report.checked += 1;
                if b > 0.0 {
                    report.worst_ratio = report.worst_ratio.max(e / b);
                }
                if e > b * (1.0 + ENVELOPE_SLACK) {
                    report.violations.push(EnvelopeViolation {
                        k: k as u64,
                        node: i,
                        mode: j,
                        error: e,
                        bound: b,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Probability that fewer than `2f+1` of `(m−1)f+1` independent links, each
/// failing with probability `p`, deliver.
pub fn pbar(p: f64, m: usize, f: usize) -> Result<f64, SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    if m < 3 {
        return Err(SimError::Domain(format!("m >= 3 is required, got m = {m}")));
    }
    let n = (m - 1) * f + 1;
    let q = 1.0 - p;
    let mut total = 0.0;
    for l in 0..=(2 * f).min(n) {
        total += binomial_term(n, l, q, p);
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `C(n, l) q^l p^(n−l)`.
fn binomial_term(n: usize, l: usize, q: f64, p: f64) -> f64 {
    if n <= 60 {
        let mut c = 1.0;
        for i in 0..l {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        return c * q.powi(l as i32) * p.powi((n - l) as i32);
    }
    if (q == 0.0 && l > 0) || (p == 0.0 && l < n) {
        return 0.0;
    }
    let ln_c: f64 = (0..l).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum();
    let ln_q = if l == 0 { 0.0 } else { l as f64 * q.ln() };
    let ln_p = if l == n { 0.0 } else { (n - l) as f64 * p.ln() };
    (ln_c + ln_q + ln_p).exp()
}

/// Sufficient condition for mean-square stability: `ρ² p̄ < 1`.
pub fn mss_criterion(rho: f64, pbar_val: f64) -> bool {
    rho * rho * pbar_val < 1.0
}

/// `ρ² p̄` over a grid: one row per `p`, one column per `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginTable {
    pub rho: f64,
    pub f: usize,
    pub ms: Vec<usize>,
    pub ps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn sweep_mss_margin(rho: f64, f: usize, ms: &[usize], ps: &[f64]) -> Result<MarginTable, SimError> {
    if let Some(&m) = ms.iter().find(|&&m| m < 3) {
        return Err(SimError::Domain(format!("m >= 3 is required, got m = {m}")));
    }
    let values = ps
        .iter()
        .map(|&p| ms.iter().map(|&m| pbar(p, m, f).map(|v| rho * rho * v)).collect())
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    Ok(MarginTable {
        rho,
        f,
        ms: ms.to_vec(),
        ps: ps.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::EPS_GAMMA;

    #[test]
    fn rate_bound_values() {
        for k in 0..20 {
            let b = rate_bound(0, k, 5, 1, 0, 2.0, 0.5, 1.1).unwrap();
            assert_eq!(b, 2.0 * 0.5f64.powi(k as i32));
        }
        for k in 1..40 {
            let b = rate_bound(1, k, 5, 1, 0, 1.0, 0.5, 1.1).unwrap();
            let expected = 4.4 * 0.5f64.powi(k as i32);
            assert!((b - expected).abs() <= 1e-14 * expected);
        }
        for k in 2..40 {
            let b = rate_bound(1, k, 5, 1, 1, 1.0, 0.5, 1.1).unwrap();
            let expected = 2.0 * 2.2f64 * 2.2 * 0.5f64.powi(k as i32);
            assert!((b - expected).abs() <= 1e-14 * expected);
        }
        assert!(matches!(rate_bound(0, 3, 5, 1, 0, 1.0, 1.0, 1.1), Err(SimError::Domain(_))));
        assert!(matches!(rate_bound(0, 3, 5, 1, 0, 1.0, 0.0, 1.1), Err(SimError::Domain(_))));
        assert!(matches!(rate_bound(2, 3, 5, 1, 1, 1.0, 0.5, 1.1), Err(SimError::Domain(_))));
    }

    #[test]
    fn rate_bound_survives_tiny_gamma() {
        let b = rate_bound(3, 400, 10, 1, 3, 1.0, EPS_GAMMA, 1.2).unwrap();
        assert!(b.is_finite() && b >= 0.0);
    }

    #[test]
    fn pbar_values() {
        assert_eq!(pbar(0.0, 3, 1).unwrap(), 0.0);
        assert_eq!(pbar(1.0, 3, 1).unwrap(), 1.0);
        assert!((pbar(0.1, 3, 1).unwrap() - 0.271).abs() < 1e-12);
        assert!((pbar(0.5, 3, 1).unwrap() - 0.875).abs() < 1e-12);
        assert!(matches!(pbar(0.1, 2, 1), Err(SimError::Domain(_))));
        assert!(matches!(pbar(1.1, 3, 1), Err(SimError::Domain(_))));
    }

    #[test]
    fn large_pbar_is_finite() {
        let v = pbar(0.3, 50, 5).unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert_eq!(pbar(0.0, 50, 5).unwrap(), 0.0);
        assert_eq!(pbar(1.0, 50, 5).unwrap(), 1.0);
    }

    #[test]
    fn criterion_examples() {
        assert!(mss_criterion(1.1, 0.271));
        assert!((1.1f64 * 1.1 * 0.271 - 0.32791).abs() < 1e-12);
        assert!(!mss_criterion(2.0, 0.875));
        assert!(mss_criterion(1e150, 0.0));
    }

    #[test]
    fn sweep_rejects_small_m() {
        assert!(sweep_mss_margin(2.0, 3, &[2, 3], &[0.1]).is_err());
        let t = sweep_mss_margin(2.0, 3, &[3, 4], &[0.0, 0.5]).unwrap();
        assert_eq!(t.values[0], vec![0.0, 0.0]);
    }
}
