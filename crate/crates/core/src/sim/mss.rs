use rayon::prelude::*;

use crate::channels::ChannelModel;
use crate::graph::NodeId;
use crate::rng::trial_seed;

use super::{pbar, prepare, Horizon, ProtocolKind, SimConfig, SimError};

/// Monte Carlo estimate of the mean-square state error per regular node.
#[derive(Clone, Debug, PartialEq)]
pub struct MssReport {
    pub trials: usize,
    pub seed: u64,
    pub horizon: u64,
    /// Regular nodes, ascending.
    pub nodes: Vec<NodeId>,
    /// `mean_sq[k][node]`: sample mean of `‖e_i[k]‖²`.
    pub mean_sq: Vec<Vec<f64>>,
    /// Normal-approximation 95% half-widths, same layout as `mean_sq`.
    pub ci_half_width: Vec<Vec<f64>>,
    /// Spectral radius of the plant.
    pub rho: f64,
    pub pbar: f64,
    /// `ρ² p̄`.
    pub margin: f64,
    pub criterion_satisfied: bool,
}

impl MssReport {
    /// `mean_sq` of one node as a time series.
    pub fn series(&self, node: NodeId) -> Option<Vec<f64>> {
        let idx = self.nodes.binary_search(&node).ok()?;
        Some(self.mean_sq.iter().map(|row| row[idx]).collect())
    }
}

/// Runs `trials` independent simulations with seeds derived from
/// `cfg.seed` and averages the squared state errors. Needs the LFSE protocol
/// over a Bernoulli erasure channel.
pub fn monte_carlo_mss(cfg: &SimConfig, trials: usize) -> Result<MssReport, SimError> {
    let (m, p) = match (cfg.protocol, &cfg.channel) {
        (ProtocolKind::Lfse { m }, ChannelModel::BernoulliErasure { p }) => (m, *p),
        _ => {
            return Err(SimError::hypothesis(
                "LFSE over Bernoulli erasures",
                "mean-square analysis needs the LFSE protocol on a Bernoulli erasure channel",
            ))
        }
    };
    if trials == 0 {
        return Err(SimError::Input("at least one trial is required".into()));
    }
    let horizon = match cfg.horizon {
        Horizon::Steps { steps } => steps,
        Horizon::Envelope => {
            return Err(SimError::Input("Monte Carlo runs need a fixed step horizon".into()));
        }
    };
    let prep = prepare(cfg)?;
    let runs: Vec<Result<Vec<Vec<f64>>, SimError>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trace = super::run_prepared(cfg, &prep, trial_seed(cfg.seed, t), horizon)?;
            Ok(trace
                .state_errors
                .into_iter()
                .map(|row| row.into_iter().map(|e| e * e).collect())
                .collect())
        })
        .collect();

    let steps = horizon as usize + 1;
    let width = prep.regular.len();
    let mut sum = vec![vec![0.0; width]; steps];
    let mut sum_sq = vec![vec![0.0; width]; steps];
    for run in runs {
        let run = run?;
        for (k, row) in run.iter().enumerate() {
            for (idx, &v) in row.iter().enumerate() {
                sum[k][idx] += v;
                sum_sq[k][idx] += v * v;
            }
        }
    }
    let n = trials as f64;
    let mut mean_sq = vec![vec![0.0; width]; steps];
    let mut ci = vec![vec![0.0; width]; steps];
    for k in 0..steps {
        for idx in 0..width {
            let mean = sum[k][idx] / n;
            mean_sq[k][idx] = mean;
            if trials > 1 {
                let var = ((sum_sq[k][idx] - n * mean * mean) / (n - 1.0)).max(0.0);
                ci[k][idx] = 1.96 * var.sqrt() / n.sqrt();
            }
        }
    }
    let rho = prep.modal.spectral_radius();
    let pbar_val = pbar(p, m, cfg.f)?;
    let margin = rho * rho * pbar_val;
    Ok(MssReport {
        trials,
        seed: cfg.seed,
        horizon,
        nodes: prep.regular,
        mean_sq,
        ci_half_width: ci,
        rho,
        pbar: pbar_val,
        margin,
        criterion_satisfied: margin < 1.0,
    })
}

/// Trailing moving average; entry `k` averages `series[k+1−window ..= k]`
/// and exists for `k ≥ window − 1`.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || series.len() < window {
        return Vec::new();
    }
    series
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}
