//! Plant model, modal decomposition and local Luenberger observers.
//!
//! The plant `x[k+1] = A x[k]` is observed by `N` nodes through
//! `y_i[k] = C_i x[k]`. When `A` has real, distinct eigenvalues it is
//! diagonalized by `z = V x`, giving scalar modes `z_j[k+1] = λ_j z_j[k]`
//! observed through `C̄_i = C_i V⁻¹`. Node `i` detects mode `j` exactly when
//! column `j` of `C̄_i` is nonzero.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::NodeId;

/// Relative off-diagonal tolerance of the modal transform (scaled by ‖A‖).
pub const EPS_DIAG_REL: f64 = 1e-9;
/// Minimum separation between eigenvalues.
pub const EPS_GAP: f64 = 1e-8;
/// Column-norm threshold for mode detectability.
pub const EPS_COL: f64 = 1e-12;
/// Floor applied to observer contraction factors when they are used as
/// exponential rates (deadbeat observers have contraction 0).
pub const EPS_GAMMA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("state matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("plant needs at least one sensor")]
    NoSensors,
    #[error("sensor {node} has {cols} columns, expected {expected}")]
    SensorShape {
        node: usize,
        cols: usize,
        expected: usize,
    },
    #[error("ragged matrix literal")]
    Ragged,
    #[error("eigenvalue {re} + {im}i is not real")]
    NonRealSpectrum { re: f64, im: f64 },
    #[error("eigenvalues {a} and {b} are not distinct (gap {gap:e})")]
    RepeatedEigenvalue { a: f64, b: f64, gap: f64 },
    #[error("modal transform is not diagonal to tolerance (residual {residual:e})")]
    Diagonalization { residual: f64 },
    #[error("node {node} cannot detect {}", match .mode { Some(j) => format!("mode {j}"), None => "any mode".to_string() })]
    ModeNotDetectable { node: usize, mode: Option<usize> },
    #[error("gamma_local must lie in [0, 1), got {0}")]
    InvalidContraction(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The LTI plant before the modal transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    a: DMatrix<f64>,
    sensors: Vec<DMatrix<f64>>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, sensors: Vec<DMatrix<f64>>) -> Result<Self, LtiError> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(LtiError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if sensors.is_empty() {
            return Err(LtiError::NoSensors);
        }
        let n = a.nrows();
        for (node, c) in sensors.iter().enumerate() {
            if c.ncols() != n {
                return Err(LtiError::SensorShape {
                    node,
                    cols: c.ncols(),
                    expected: n,
                });
            }
        }
        Ok(Self { a, sensors })
    }

    /// Builds a plant from row-major literals. A sensor with no rows measures
    /// nothing.
    pub fn from_rows(a: &[Vec<f64>], sensors: &[Vec<Vec<f64>>]) -> Result<Self, LtiError> {
        let a = matrix_from_rows(a, None)?;
        let n = a.ncols();
        let sensors = sensors
            .iter()
            .map(|rows| matrix_from_rows(rows, Some(n)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(a, sensors)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sensor(&self, node: NodeId) -> &DMatrix<f64> {
        &self.sensors[node]
    }

    pub fn sensors(&self) -> &[DMatrix<f64>] {
        &self.sensors
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.a)
    }

    pub fn sensor_rows(&self) -> Vec<Vec<Vec<f64>>> {
        self.sensors.iter().map(matrix_rows).collect()
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Result<DMatrix<f64>, LtiError> {
    let ncols = match (rows.first(), cols) {
        (Some(r), _) => r.len(),
        (None, Some(c)) => c,
        (None, None) => 0,
    };
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(LtiError::Ragged);
    }
    if let Some(expected) = cols {
        if ncols != expected {
            return Err(LtiError::DimensionMismatch {
                expected,
                got: ncols,
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// The plant in modal coordinates `z = V x`.
#[derive(Clone, Debug)]
pub struct ModalPlant {
    lambdas: Vec<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    cbar: Vec<DMatrix<f64>>,
    detectable: Vec<Vec<bool>>,
    unstable: Vec<usize>,
    consensus: Vec<usize>,
    off_diagonal_residual: f64,
}

impl ModalPlant {
    pub fn mode_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn node_count(&self) -> usize {
        self.cbar.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, mode: usize) -> f64 {
        self.lambdas[mode]
    }

    /// The transform `V` with `z = V x`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `V⁻¹`, whose columns are unit right eigenvectors of `A`.
    pub fn inverse_transform(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    pub fn cbar(&self, node: NodeId) -> &DMatrix<f64> {
        &self.cbar[node]
    }

    pub fn is_detectable(&self, node: NodeId, mode: usize) -> bool {
        self.detectable[node][mode]
    }

    /// `O_i`, ascending.
    pub fn detectable_modes(&self, node: NodeId) -> Vec<usize> {
        (0..self.mode_count())
            .filter(|&j| self.detectable[node][j])
            .collect()
    }

    /// `UO_i`, ascending.
    pub fn undetectable_modes(&self, node: NodeId) -> Vec<usize> {
        (0..self.mode_count())
            .filter(|&j| !self.detectable[node][j])
            .collect()
    }

    /// `Λ_U`: modes with `|λ| ≥ 1`.
    pub fn unstable_set(&self) -> &[usize] {
        &self.unstable
    }

    /// `Ω_U`: unstable modes that some node cannot detect.
    pub fn consensus_set(&self) -> &[usize] {
        &self.consensus
    }

    pub fn spectral_radius(&self) -> f64 {
        self.lambdas.iter().fold(0.0, |acc, l| acc.max(l.abs()))
    }

    /// Largest off-diagonal magnitude of `V A V⁻¹` observed at construction.
    pub fn off_diagonal_residual(&self) -> f64 {
        self.off_diagonal_residual
    }

    pub fn to_modal(&self, x: &[f64]) -> Vec<f64> {
        (&self.v * DVector::from_column_slice(x)).iter().copied().collect()
    }

    pub fn to_state(&self, z: &[f64]) -> Vec<f64> {
        (&self.v_inv * DVector::from_column_slice(z))
            .iter()
            .copied()
            .collect()
    }
}

/// Diagonalizes the plant. Modes are ordered by descending `|λ|`, ties by
/// descending signed value.
pub fn diagonalize(plant: &Plant, tol: f64) -> Result<ModalPlant, LtiError> {
    let a = plant.a();
    let n = a.nrows();
    let norm_a = a.norm();

    let mut lambdas = Vec::with_capacity(n);
    for ev in a.complex_eigenvalues().iter() {
        if ev.im.abs() > tol {
            return Err(LtiError::NonRealSpectrum { re: ev.re, im: ev.im });
        }
        lambdas.push(ev.re);
    }
    lambdas.sort_by(|x, y| mode_order(*x, *y));
    for (i, &x) in lambdas.iter().enumerate() {
        for &y in &lambdas[i + 1..] {
            let gap = (x - y).abs();
            if gap <= EPS_GAP {
                return Err(LtiError::RepeatedEigenvalue { a: x, b: y, gap });
            }
        }
    }

    let mut w = DMatrix::zeros(n, n);
    for (j, &lambda) in lambdas.iter().enumerate() {
        w.set_column(j, &null_vector(a, lambda));
    }
    let v = w
        .clone()
        .try_inverse()
        .ok_or(LtiError::Diagonalization { residual: f64::INFINITY })?;

    let m = &v * a * &w;
    let mut residual: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                residual = residual.max(m[(r, c)].abs());
            }
        }
    }
    if residual > EPS_DIAG_REL * norm_a {
        return Err(LtiError::Diagonalization { residual });
    }

    let cbar: Vec<DMatrix<f64>> = plant.sensors().iter().map(|c| c * &w).collect();
    let detectable: Vec<Vec<bool>> = cbar
        .iter()
        .map(|cb| (0..n).map(|j| cb.column(j).norm() > EPS_COL).collect())
        .collect();
    let unstable: Vec<usize> = (0..n).filter(|&j| lambdas[j].abs() >= 1.0).collect();
    let consensus = unstable
        .iter()
        .copied()
        .filter(|&j| detectable.iter().any(|row| !row[j]))
        .collect();

    Ok(ModalPlant {
        lambdas,
        v,
        v_inv: w,
        cbar,
        detectable,
        unstable,
        consensus,
        off_diagonal_residual: residual,
    })
}

fn mode_order(x: f64, y: f64) -> Ordering {
    y.abs()
        .partial_cmp(&x.abs())
        .unwrap_or(Ordering::Equal)
        .then(y.partial_cmp(&x).unwrap_or(Ordering::Equal))
}

/// Unit vector spanning the (numerical) null space of `m - λI`, sign fixed so
/// the largest-magnitude component is positive.
fn null_vector(m: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = m.nrows();
    let shifted = m - DMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let mut vec: DVector<f64> = v_t.row(idx).transpose();
    vec /= vec.norm();
    let pivot = vec
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1 + 1e-12 { (i, x.abs()) } else { best })
        .0;
    if vec[pivot] < 0.0 {
        vec = -vec;
    }
    vec
}

/// `S_j`: nodes whose measurements detect mode `j`.
pub fn source_set(mp: &ModalPlant, mode: usize) -> BTreeSet<NodeId> {
    (0..mp.node_count())
        .filter(|&i| mp.is_detectable(i, mode))
        .collect()
}

/// A local Luenberger observer for the detectable modes of one node.
///
/// The error on the detectable modes evolves as `e[k+1] = P e[k]` with
/// `P = Λ_O − L C̄_O`. The observer guarantees
/// `|e_j[k]| ≤ constant · |e[0]| · rate^k`, where `|e[0]|` is `|e_j[0]|` for
/// decoupled designs and `max_m |e_m[0]|` otherwise.
#[derive(Clone, Debug)]
pub struct ObserverGains {
    node: NodeId,
    state_dim: usize,
    modes: Vec<usize>,
    lambdas: Vec<f64>,
    gain: DMatrix<f64>,
    cbar_o: DMatrix<f64>,
    closed_loop: DMatrix<f64>,
    contraction: f64,
    rate: f64,
    constant: f64,
    decoupled: bool,
}

impl ObserverGains {
    pub fn node(&self) -> NodeId {
        self.node
    }

    /// `O_i`.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    /// True when every detectable mode has its own error recursion
    /// `e_j[k+1] = γ e_j[k]`.
    pub fn is_decoupled(&self) -> bool {
        self.decoupled
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `Λ_O − L C̄_O`.
    pub fn closed_loop(&self) -> &DMatrix<f64> {
        &self.closed_loop
    }

    /// Exponential rate of the error envelope: the contraction, floored at
    /// [`EPS_GAMMA`].
    pub fn envelope_rate(&self) -> f64 {
        self.rate
    }

    pub fn envelope_constant(&self) -> f64 {
        self.constant
    }

    /// Row of the gain matrix acting on mode `j`.
    pub fn mode_gain(&self, mode: usize) -> Result<Vec<f64>, LtiError> {
        let pos = self.position(mode)?;
        Ok(self.gain.row(pos).iter().copied().collect())
    }

    /// Bound on `|e_j[0]|`-scaled envelope: given initial modal errors
    /// (full length `n`), returns `c` with `|e_j[k]| ≤ c · rate^k`.
    pub fn initial_bound(&self, initial_errors: &[f64], mode: usize) -> Result<f64, LtiError> {
        let pos = self.position(mode)?;
        if self.decoupled {
            Ok(initial_errors[self.modes[pos]].abs())
        } else {
            let max = self
                .modes
                .iter()
                .fold(0.0f64, |acc, &m| acc.max(initial_errors[m].abs()));
            Ok(self.constant * max)
        }
    }

    fn position(&self, mode: usize) -> Result<usize, LtiError> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .ok_or(LtiError::ModeNotDetectable {
                node: self.node,
                mode: Some(mode),
            })
    }
}

/// Designs the local observer of `node` with error contraction `gamma_local`.
///
/// When `C̄_O` has full column rank the gain `L = (Λ_O − γI) C̄_O⁺` makes
/// every mode contract independently by exactly `γ`. Otherwise the
/// measurements are combined into one output and the closed-loop poles are
/// placed at distinct values in `(γ/2, γ]` (all at zero when `γ = 0`).
pub fn design_local_observer(
    mp: &ModalPlant,
    node: NodeId,
    gamma_local: f64,
) -> Result<ObserverGains, LtiError> {
    if !(0.0..1.0).contains(&gamma_local) {
        return Err(LtiError::InvalidContraction(gamma_local));
    }
    let modes = mp.detectable_modes(node);
    if modes.is_empty() {
        return Err(LtiError::ModeNotDetectable { node, mode: None });
    }
    let q = modes.len();
    let cbar = mp.cbar(node);
    let r = cbar.nrows();
    let cbar_o = DMatrix::from_fn(r, q, |a, b| cbar[(a, modes[b])]);
    let lambdas: Vec<f64> = modes.iter().map(|&j| mp.lambda(j)).collect();
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&lambdas));

    let sv = cbar_o.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let full_rank = r >= q && smin > 1e-9 * smax;

    let (gain, decoupled) = if full_rank {
        let ctc = cbar_o.transpose() * &cbar_o;
        let pinv = ctc
            .try_inverse()
            .ok_or(LtiError::DimensionMismatch { expected: q, got: r })?
            * cbar_o.transpose();
        let shift = DMatrix::from_diagonal(&DVector::from_iterator(
            q,
            lambdas.iter().map(|l| l - gamma_local),
        ));
        (shift * pinv, true)
    } else {
        (single_output_placement(&cbar_o, &lambdas, gamma_local), false)
    };
    let closed_loop = &lam - &gain * &cbar_o;

    let (rate, constant) = if decoupled {
        (gamma_local.max(EPS_GAMMA), 1.0)
    } else if gamma_local > 0.0 {
        (gamma_local, eigenbasis_condition(&closed_loop, &placed_poles(q, gamma_local)))
    } else {
        (EPS_GAMMA, nilpotent_constant(&closed_loop, EPS_GAMMA))
    };

    Ok(ObserverGains {
        node,
        state_dim: mp.mode_count(),
        modes,
        lambdas,
        gain,
        cbar_o,
        closed_loop,
        contraction: gamma_local,
        rate,
        constant,
        decoupled,
    })
}

fn placed_poles(q: usize, gamma: f64) -> Vec<f64> {
    (0..q)
        .map(|m| gamma * (1.0 - m as f64 / (2.0 * q as f64)))
        .collect()
}

fn single_output_placement(cbar_o: &DMatrix<f64>, lambdas: &[f64], gamma: f64) -> DMatrix<f64> {
    let (r, q) = cbar_o.shape();
    let scale = cbar_o.amax();
    // Deterministic search for an output combination that sees every mode.
    let mut candidates: Vec<DVector<f64>> = (0..r)
        .map(|a| {
            let mut e = DVector::zeros(r);
            e[a] = 1.0;
            e
        })
        .collect();
    for t in 1..=(2 * (r + q) + 2) {
        candidates.push(DVector::from_iterator(
            r,
            (0..r).map(|a| (t as f64).powi(a as i32)),
        ));
    }
    let (w, h) = candidates
        .into_iter()
        .map(|w| {
            let h = cbar_o.transpose() * &w;
            (w, h)
        })
        .find(|(_, h)| h.iter().all(|x| x.abs() > 1e-9 * scale))
        .expect("every detectable column is nonzero, so a generic combination exists");

    let poles = placed_poles(q, gamma);
    let l = DVector::from_iterator(
        q,
        (0..q).map(|j| {
            let lj = lambdas[j];
            let p: f64 = poles.iter().map(|mu| lj - mu).product();
            let d: f64 = (0..q).filter(|&m| m != j).map(|m| lj - lambdas[m]).product();
            p / (h[j] * d)
        }),
    );
    l * w.transpose()
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn eigenbasis_condition(p: &DMatrix<f64>, poles: &[f64]) -> f64 {
    let q = p.nrows();
    let mut basis = DMatrix::zeros(q, q);
    for (c, &mu) in poles.iter().enumerate() {
        basis.set_column(c, &null_vector(p, mu));
    }
    match basis.clone().try_inverse() {
        Some(inv) => inf_norm(&basis) * inf_norm(&inv),
        None => f64::INFINITY,
    }
}

fn nilpotent_constant(p: &DMatrix<f64>, rate: f64) -> f64 {
    let q = p.nrows();
    let mut power = DMatrix::identity(q, q);
    let mut best: f64 = 1.0;
    for k in 1..q {
        power = &power * p;
        best = best.max(inf_norm(&power) / rate.powi(k as i32));
    }
    best
}

/// One Luenberger step: `ẑ_O ← Λ_O ẑ_O + L (y − C̄_O ẑ_O)`. Modes outside
/// `O_i` are left untouched.
pub fn observer_step(gains: &ObserverGains, estimates: &mut [f64], y: &[f64]) -> Result<(), LtiError> {
    if estimates.len() != gains.state_dim {
        return Err(LtiError::DimensionMismatch {
            expected: gains.state_dim,
            got: estimates.len(),
        });
    }
    if y.len() != gains.cbar_o.nrows() {
        return Err(LtiError::DimensionMismatch {
            expected: gains.cbar_o.nrows(),
            got: y.len(),
        });
    }
    let current = DVector::from_iterator(gains.modes.len(), gains.modes.iter().map(|&j| estimates[j]));
    let innovation = DVector::from_column_slice(y) - &gains.cbar_o * &current;
    let correction = &gains.gain * innovation;
    for (pos, &j) in gains.modes.iter().enumerate() {
        estimates[j] = gains.lambdas[pos] * current[pos] + correction[pos];
    }
    Ok(())
}

impl ObserverGains {
    pub fn step(&self, estimates: &mut [f64], y: &[f64]) -> Result<(), LtiError> {
        observer_step(self, estimates, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant(a: &[Vec<f64>], sensors: &[Vec<Vec<f64>>]) -> Plant {
        Plant::from_rows(a, sensors).unwrap()
    }

    fn max_offdiag(m: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if r != c {
                    worst = worst.max(m[(r, c)].abs());
                }
            }
        }
        worst
    }

    #[test]
    fn already_diagonal_plant() {
        let p = plant(&[vec![2.0, 0.0], vec![0.0, 0.5]], &[vec![vec![1.0, 0.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        assert_eq!(mp.lambdas(), &[2.0, 0.5]);
        let v = mp.transform();
        assert!(v[(0, 1)].abs() < 1e-15 && v[(1, 0)].abs() < 1e-15);
        assert!((v[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert_eq!(mp.detectable_modes(0), vec![0]);
        assert_eq!(mp.unstable_set(), &[0]);
        assert!(mp.consensus_set().is_empty());
    }

    #[test]
    fn companion_matrix_roots() {
        // s^2 - 1.4 s + 0.48 = (s - 0.8)(s - 0.6)
        let a = vec![vec![0.0, 1.0], vec![-0.48, 1.4]];
        let p = plant(&a, &[vec![vec![1.0, 0.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        assert!((mp.lambda(0) - 0.8).abs() < 1e-12);
        assert!((mp.lambda(1) - 0.6).abs() < 1e-12);
        let m = mp.transform() * p.a() * mp.inverse_transform();
        assert!(max_offdiag(&m) <= EPS_DIAG_REL * p.a().norm());
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(mp.lambdas()));
        let rebuilt = mp.inverse_transform() * lam * mp.transform();
        assert!((rebuilt - p.a()).norm() <= EPS_DIAG_REL * p.a().norm());
    }

    #[test]
    fn rotation_is_rejected() {
        let p = plant(&[vec![0.0, -1.0], vec![1.0, 0.0]], &[vec![vec![1.0, 0.0]]]);
        assert!(matches!(diagonalize(&p, 1e-9), Err(LtiError::NonRealSpectrum { .. })));
    }

    #[test]
    fn repeated_eigenvalue_is_rejected() {
        let p = plant(&[vec![1.5, 1.0], vec![0.0, 1.5]], &[vec![vec![1.0, 0.0]]]);
        assert!(matches!(diagonalize(&p, 1e-9), Err(LtiError::RepeatedEigenvalue { .. })));
    }

    #[test]
    fn ordering_breaks_ties_by_sign() {
        let p = plant(
            &[vec![-2.0, 0.0, 0.0], vec![0.0, 0.3, 0.0], vec![0.0, 0.0, 2.0]],
            &[vec![vec![1.0, 1.0, 1.0]]],
        );
        let mp = diagonalize(&p, 1e-9).unwrap();
        assert_eq!(mp.lambdas(), &[2.0, -2.0, 0.3]);
    }

    #[test]
    fn bad_shapes() {
        assert!(matches!(
            Plant::from_rows(&[vec![1.0, 0.0]], &[vec![]]),
            Err(LtiError::NotSquare { .. })
        ));
        assert!(matches!(
            Plant::from_rows(&[vec![1.0]], &[vec![vec![1.0, 2.0]]]),
            Err(LtiError::DimensionMismatch { .. })
        ));
        assert!(matches!(Plant::from_rows(&[vec![1.0]], &[]), Err(LtiError::NoSensors)));
    }

    #[test]
    fn source_sets_follow_columns() {
        // Five sensors; only the first two see the single mode.
        let sensors: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|i| vec![vec![if i < 2 { 1.0 } else { 0.0 }]])
            .collect();
        let p = plant(&[vec![1.3]], &sensors);
        let mp = diagonalize(&p, 1e-9).unwrap();
        assert_eq!(source_set(&mp, 0), BTreeSet::from([0, 1]));
        assert_eq!(mp.consensus_set(), &[0]);

        let blind: Vec<Vec<Vec<f64>>> = (0..3).map(|_| vec![vec![0.0]]).collect();
        let mp = diagonalize(&plant(&[vec![1.3]], &blind), 1e-9).unwrap();
        assert!(source_set(&mp, 0).is_empty());
    }

    #[test]
    fn scalar_gains() {
        let p = plant(&[vec![2.0]], &[vec![vec![1.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        let deadbeat = design_local_observer(&mp, 0, 0.0).unwrap();
        assert!((deadbeat.mode_gain(0).unwrap()[0] - 2.0).abs() < 1e-15);
        let half = design_local_observer(&mp, 0, 0.5).unwrap();
        assert!((half.mode_gain(0).unwrap()[0] - 1.5).abs() < 1e-15);
        assert!(half.is_decoupled());
    }

    #[test]
    fn scalar_error_recursion() {
        let p = plant(&[vec![2.0]], &[vec![vec![1.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        let obs = design_local_observer(&mp, 0, 0.5).unwrap();
        // Error coordinates: truth 0, estimate carries the error.
        let mut est = vec![4.0];
        for k in 1..=10 {
            obs.step(&mut est, &[0.0]).unwrap();
            assert!((est[0].abs() - 4.0 * 0.5f64.powi(k)).abs() < 1e-12);
        }
        let mut zero = vec![0.0];
        obs.step(&mut zero, &[0.0]).unwrap();
        assert_eq!(zero[0], 0.0);

        let deadbeat = design_local_observer(&mp, 0, 0.0).unwrap();
        let mut est = vec![-7.5];
        deadbeat.step(&mut est, &[0.0]).unwrap();
        assert!(est[0].abs() < 1e-14);
    }

    #[test]
    fn undetectable_requests_fail() {
        let p = plant(&[vec![2.0, 0.0], vec![0.0, 0.5]], &[vec![vec![1.0, 0.0]], vec![vec![0.0, 0.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        assert!(matches!(
            design_local_observer(&mp, 1, 0.5),
            Err(LtiError::ModeNotDetectable { node: 1, mode: None })
        ));
        let obs = design_local_observer(&mp, 0, 0.5).unwrap();
        assert!(matches!(
            obs.mode_gain(1),
            Err(LtiError::ModeNotDetectable { node: 0, mode: Some(1) })
        ));
        assert!(matches!(design_local_observer(&mp, 0, 1.0), Err(LtiError::InvalidContraction(_))));
    }

    #[test]
    fn observer_leaves_undetectable_modes_alone() {
        let p = plant(&[vec![2.0, 0.0], vec![0.0, 0.5]], &[vec![vec![1.0, 0.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        let obs = design_local_observer(&mp, 0, 0.5).unwrap();
        let mut est = vec![1.0, 9.0];
        obs.step(&mut est, &[0.0]).unwrap();
        assert_eq!(est[1], 9.0);
        assert!(matches!(obs.step(&mut est, &[0.0, 1.0]), Err(LtiError::DimensionMismatch { .. })));
    }

    #[test]
    fn rank_deficient_observer_places_poles() {
        // One scalar measurement sees three modes.
        let p = plant(
            &[vec![1.5, 0.0, 0.0], vec![0.0, 1.1, 0.0], vec![0.0, 0.0, -0.4]],
            &[vec![vec![1.0, 2.0, -1.0]]],
        );
        let mp = diagonalize(&p, 1e-9).unwrap();
        let obs = design_local_observer(&mp, 0, 0.6).unwrap();
        assert!(!obs.is_decoupled());
        let eig = obs.closed_loop().complex_eigenvalues();
        let radius = eig.iter().fold(0.0f64, |a, e| a.max(e.norm()));
        assert!((radius - 0.6).abs() < 1e-9);

        // Envelope: |e_j[k]| <= C * max|e[0]| * rate^k.
        let e0 = vec![3.0, -2.0, 5.0];
        let mut est = e0.clone();
        for k in 1..60 {
            obs.step(&mut est, &[0.0]).unwrap();
            for j in 0..3 {
                let bound = obs.initial_bound(&e0, j).unwrap() * obs.envelope_rate().powi(k);
                assert!(est[j].abs() <= bound * (1.0 + 1e-9), "k={k} j={j}");
            }
        }
    }

    #[test]
    fn rank_deficient_deadbeat_is_nilpotent() {
        let p = plant(&[vec![1.5, 0.0], vec![0.0, 1.1]], &[vec![vec![1.0, 1.0]]]);
        let mp = diagonalize(&p, 1e-9).unwrap();
        let obs = design_local_observer(&mp, 0, 0.0).unwrap();
        let mut est = vec![1.0, -4.0];
        obs.step(&mut est, &[0.0]).unwrap();
        obs.step(&mut est, &[0.0]).unwrap();
        assert!(est.iter().all(|e| e.abs() < 1e-12));
    }
}
