use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::adversary::{adversary_emit, AdvValue, AdversaryContext};
use crate::channels::{Channel, ChannelLayer};
use crate::protocol::{EstimateMsg, RegularNode, Variant};

use super::{envelope_horizon, prepare, Frame, Horizon, Prepared, ProtocolKind, SimConfig, SimError, Trace};

/// Validates `cfg` and runs one simulation with `cfg.seed`.
pub fn run_simulation(cfg: &SimConfig) -> Result<Trace, SimError> {
    let prep = prepare(cfg)?;
    let horizon = match cfg.horizon {
        Horizon::Steps { steps } => steps,
        Horizon::Envelope => envelope_horizon(cfg, &prep)?,
    };
    run_prepared(cfg, &prep, cfg.seed, horizon)
}

/// Runs a validated configuration for `horizon` steps under `seed`.
///
/// Each round at step `k`: record, regular nodes emit, adversaries emit
/// (knowing which regular packets arrive this step), due packets are
/// delivered, nodes update, and the plant advances.
pub fn run_prepared(cfg: &SimConfig, prep: &Prepared, seed: u64, horizon: u64) -> Result<Trace, SimError> {
    let g = &cfg.graph;
    let n_nodes = g.node_count();
    let modal = &prep.modal;
    let lambdas = modal.lambdas().to_vec();
    let n_modes = lambdas.len();
    let variant = match cfg.protocol {
        ProtocolKind::SwLfse => Variant::SwLfse,
        ProtocolKind::Lfse { .. } => Variant::Lfse,
    };
    let offset_of = |z: &[f64]| -> Vec<f64> {
        match cfg.frame {
            Frame::Error => z.to_vec(),
            Frame::Absolute => vec![0.0; z.len()],
        }
    };

    let mut truth: Vec<Vec<f64>> = vec![prep.z0.clone()];
    let origin0: Vec<f64> = offset_of(&prep.z0).iter().map(|o| -o).collect();
    let mut nodes: Vec<Option<RegularNode>> = (0..n_nodes)
        .map(|i| {
            (!prep.adversaries.contains(&i)).then(|| {
                let roles = (0..n_modes).map(|j| prep.role(i, j)).collect();
                RegularNode::new(
                    i,
                    lambdas.clone(),
                    roles,
                    prep.observers[i].clone(),
                    variant,
                    cfg.f,
                    cfg.weights,
                    origin0.clone(),
                )
            })
        })
        .collect();

    let channel = Channel::new(cfg.channel.clone(), g, &prep.medags, seed)?;
    let mut layer = ChannelLayer::new(channel);
    let w = modal.inverse_transform();

    let mut trace = Trace {
        seed,
        config_digest: cfg.digest(),
        channel_digest: String::new(),
        horizon,
        lambdas: lambdas.clone(),
        nodes: prep.regular.clone(),
        truth: Vec::with_capacity(horizon as usize + 1),
        estimates: Vec::with_capacity(horizon as usize + 1),
        errors: Vec::with_capacity(horizon as usize + 1),
        state_errors: Vec::with_capacity(horizon as usize + 1),
    };

    for k in 0..=horizon {
        let z = truth[k as usize].clone();
        let offset = offset_of(&z);
        let frame_truth: Vec<f64> = z.iter().zip(&offset).map(|(a, b)| a - b).collect();

        let mut errs_by_node: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        let mut est_row = Vec::with_capacity(prep.regular.len());
        let mut err_row = Vec::with_capacity(prep.regular.len());
        let mut state_row = Vec::with_capacity(prep.regular.len());
        for &i in &prep.regular {
            let node = nodes[i].as_ref().expect("regular");
            let est = node.estimates();
            let err: Vec<f64> = est.iter().zip(&frame_truth).map(|(e, t)| e - t).collect();
            est_row.push(est.iter().zip(&offset).map(|(e, o)| e + o).collect());
            state_row.push((w * DVector::from_column_slice(&err)).norm());
            errs_by_node[i] = Some(err.clone());
            err_row.push(err);
        }
        trace.truth.push(z.clone());
        trace.estimates.push(est_row);
        trace.errors.push(err_row);
        trace.state_errors.push(state_row);
        if k == horizon {
            break;
        }

        for &s in &prep.regular {
            let msgs = nodes[s].as_ref().expect("regular").emit(k);
            for &r in g.out_neighbors(s) {
                if !prep.adversaries.contains(&r) {
                    layer.send(s, r, k, msgs.clone())?;
                }
            }
        }

        if !cfg.adversaries.is_empty() {
            let deliveries = layer.due_counts(k, n_nodes);
            let ctx = AdversaryContext {
                step: k,
                seed,
                lambdas: &lambdas,
                truth: &truth,
                regular_errors: &errs_by_node,
                graph: g,
                medags: &prep.medags,
                adversaries: &prep.adversaries,
                regular_deliveries: &deliveries,
            };
            let mut outgoing: Vec<((usize, usize), Vec<EstimateMsg>)> = Vec::new();
            for (&a, strategy) in &cfg.adversaries {
                let mut per_receiver: BTreeMap<usize, Vec<EstimateMsg>> = BTreeMap::new();
                for m in adversary_emit(strategy, &ctx, a, cfg.adversary_cap) {
                    let ts = m.emission.stamp.resolve(k);
                    let j = m.mode;
                    let stamp_offset = match ts {
                        Some(t) if t <= k => offset_of(&truth[t as usize])[j],
                        _ => 0.0,
                    };
                    let value = match m.emission.value {
                        AdvValue::Absolute(v) => v - stamp_offset,
                        AdvValue::TruthOffset(d) => (z[j] - stamp_offset) + d,
                    };
                    per_receiver.entry(m.receiver).or_default().push(EstimateMsg {
                        sender: a,
                        mode: j,
                        value,
                        timestamp: ts,
                    });
                }
                outgoing.extend(per_receiver.into_iter().map(|(r, msgs)| ((a, r), msgs)));
            }
            for ((a, r), msgs) in outgoing {
                layer.send(a, r, k, msgs)?;
            }
        }

        let mut inbox: Vec<Vec<EstimateMsg>> = vec![Vec::new(); n_nodes];
        for packet in layer.take_due(k) {
            inbox[packet.to].extend(packet.msgs);
        }

        let origin: Vec<f64> = offset.iter().map(|o| -o).collect();
        for &i in &prep.regular {
            let cbar = modal.cbar(i);
            let y: Vec<f64> = if cbar.nrows() == 0 {
                Vec::new()
            } else {
                (cbar * DVector::from_column_slice(&frame_truth)).iter().copied().collect()
            };
            nodes[i]
                .as_mut()
                .expect("regular")
                .step(k, &y, &inbox[i], &origin)?;
        }

        let next: Vec<f64> = z.iter().zip(&lambdas).map(|(zj, l)| l * zj).collect();
        truth.push(next);
    }
    trace.channel_digest = layer.digest();
    Ok(trace)
}
