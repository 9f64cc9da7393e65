//! Uniform τ-grid, first-order-hold discretization of the linearized
//! dynamics, and nonlinear segment propagation for defects.
//!
//! Each segment `[τ_k, τ_{k+1}]` is integrated as one augmented ODE carrying
//! the reference state, the STM `Φ(τ, τ_k)` and the accumulators
//! `∫Φ(τ, τ_k)⁻¹ M(τ) dτ` for `M ∈ {B_L α, B_L β, d_L, e}`; the discrete
//! matrices follow by left-multiplying with `Φ(τ_{k+1}, τ_k)`.

use nalgebra::{Matrix6, Vector3};
use rayon::prelude::*;

use crate::dynamics::{Dynamics, Matrix6x3, State};
use crate::error::{Error, Result};
use crate::nonlinearity::Stt;
use crate::ode::{integrate, IntegratorOptions};

/// Equally spaced normalized-time grid with `K` nodes on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    nodes: usize,
}

impl Grid {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn segments(&self) -> usize {
        self.nodes - 1
    }

    /// `Δτ = 1/(K−1)`
    pub fn step(&self) -> f64 {
        1.0 / self.segments() as f64
    }

    pub fn tau(&self, k: usize) -> f64 {
        if k + 1 == self.nodes {
            1.0
        } else {
            k as f64 / self.segments() as f64
        }
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.nodes).map(|k| self.tau(k)).collect()
    }
}

pub fn make_grid(nodes: usize) -> Result<Grid> {
    if nodes < 2 {
        return Err(Error::Argument(format!("grid needs at least 2 nodes, got {nodes}")));
    }
    Ok(Grid { nodes })
}

/// First-order-hold interpolation weights `(α_k(τ), β_k(τ))` on segment `k`.
pub fn foh_weights(grid: &Grid, segment: usize, tau: f64) -> Result<(f64, f64)> {
    if segment >= grid.segments() {
        return Err(Error::Argument(format!(
            "segment {segment} out of range for {} nodes",
            grid.nodes
        )));
    }
    let (lo, hi) = (grid.tau(segment), grid.tau(segment + 1));
    if !(tau >= lo && tau <= hi) {
        return Err(Error::Argument(format!("τ = {tau} outside segment [{lo}, {hi}]")));
    }
    let beta = (tau - lo) / (hi - lo);
    Ok((1.0 - beta, beta))
}

/// Reference (or candidate) trajectory on the node grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub states: Vec<State>,
    /// Acceleration-thrust vectors `T̃_k`.
    pub thrust: Vec<Vector3<f64>>,
    /// Epigraph bounds `T̃_k ≥ ‖T̃_k‖`.
    pub thrust_bound: Vec<f64>,
    /// `z_k = ln m_k` (normalized mass).
    pub log_mass: Vec<f64>,
    /// Per-segment dilations `s_k`, `K−1` entries.
    pub dilation: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn nodes(&self) -> usize {
        self.states.len()
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.nodes())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.nodes();
        if k < 2 {
            return Err(Error::Argument(format!("trajectory needs at least 2 nodes, got {k}")));
        }
        if self.thrust.len() != k || self.thrust_bound.len() != k || self.log_mass.len() != k {
            return Err(Error::Argument("node arrays have inconsistent lengths".into()));
        }
        if self.dilation.len() != k - 1 {
            return Err(Error::Argument(format!(
                "expected {} segment dilations, got {}",
                k - 1,
                self.dilation.len()
            )));
        }
        Ok(())
    }

    /// Inputs for integrating segment `k` from the node state `x_k`.
    pub fn segment(&self, k: usize) -> SegmentInputs {
        SegmentInputs {
            x0: self.states[k],
            thrust0: self.thrust[k],
            thrust1: self.thrust[k + 1],
            dilation: self.dilation[k],
            dtau: 1.0 / (self.nodes() - 1) as f64,
        }
    }

    /// Segment dilation governing node `k` (final node uses the last segment).
    pub fn node_dilation(&self, k: usize) -> f64 {
        self.dilation[k.min(self.dilation.len() - 1)]
    }

    /// `(1/(K−1)) Σ (T̃_k + T̃_{k+1})/2`
    pub fn thrust_integral(&self) -> f64 {
        trapezoid(&self.thrust_bound)
    }

    /// Mean dilation, equal to the time of flight on a feasible trajectory.
    pub fn time_of_flight(&self) -> f64 {
        self.dilation.iter().sum::<f64>() / self.dilation.len() as f64
    }
}

/// Trapezoid rule on the uniform grid over `[0, 1]`.
pub fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    values.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / (n - 1) as f64
}

/// Everything needed to integrate a single segment: FOH thrust between the
/// node values and a constant dilation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentInputs {
    pub x0: State,
    pub thrust0: Vector3<f64>,
    pub thrust1: Vector3<f64>,
    pub dilation: f64,
    pub dtau: f64,
}

impl SegmentInputs {
    /// FOH thrust at local time `σ ∈ [0, Δτ]`.
    pub fn thrust_at(&self, sigma: f64) -> Vector3<f64> {
        let beta = sigma / self.dtau;
        self.thrust0 * (1.0 - beta) + self.thrust1 * beta
    }

    /// `(α, β)` at local time `σ`.
    pub fn weights(&self, sigma: f64) -> (f64, f64) {
        let beta = sigma / self.dtau;
        (1.0 - beta, beta)
    }

    fn check(&self) -> Result<()> {
        if !(self.dilation >= 0.0) || !self.dilation.is_finite() {
            return Err(Error::Argument(format!("segment dilation {} must be >= 0", self.dilation)));
        }
        if !(self.dtau > 0.0) {
            return Err(Error::Argument(format!("segment length {} must be positive", self.dtau)));
        }
        let finite = self.x0.iter().chain(self.thrust0.iter()).chain(self.thrust1.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite segment reference".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLinearization {
    /// `Ā = Φ(τ_{k+1}, τ_k)`
    pub a_bar: Matrix6<f64>,
    pub b_bar: Matrix6x3,
    pub c_bar: Matrix6x3,
    pub d_bar: State,
    pub e_bar: State,
    /// Second-order STT, filled by the nonlinearity module when requested.
    pub stt: Option<Stt>,
    /// Reference state propagated to the end of the segment.
    pub x_end: State,
}

impl SegmentLinearization {
    pub fn stm(&self) -> &Matrix6<f64> {
        &self.a_bar
    }

    /// Discrete prediction `Ā x_k + B̄ T̃_k + C̄ T̃_{k+1} + d̄ s_k + ē`.
    pub fn predict(&self, x: &State, thrust0: &Vector3<f64>, thrust1: &Vector3<f64>, dilation: f64) -> State {
        self.a_bar * x + self.b_bar * thrust0 + self.c_bar * thrust1 + self.d_bar * dilation + self.e_bar
    }
}

// augmented layout: x | Φ | PB | PC | Pd | Pe
const OFF_PHI: usize = 6;
const OFF_PB: usize = OFF_PHI + 36;
const OFF_PC: usize = OFF_PB + 18;
const OFF_PD: usize = OFF_PC + 18;
const OFF_PE: usize = OFF_PD + 6;
const AUG_LEN: usize = OFF_PE + 6;

/// First-order-hold discretization of one segment about its reference.
pub fn discretize_segment<D: Dynamics + ?Sized>(
    model: &D,
    seg: &SegmentInputs,
    opts: &IntegratorOptions,
) -> Result<SegmentLinearization> {
    seg.check()?;
    let mut y = vec![0.0; AUG_LEN];
    y[..6].copy_from_slice(seg.x0.as_slice());
    y[OFF_PHI..OFF_PB].copy_from_slice(Matrix6::<f64>::identity().as_slice());

    integrate(opts, 0.0, seg.dtau, &mut y, |sigma, y, dy| {
        let x = State::from_column_slice(&y[..6]);
        let phi = Matrix6::from_column_slice(&y[OFF_PHI..OFF_PB]);
        let thrust = seg.thrust_at(sigma);
        let (alpha, beta) = seg.weights(sigma);
        let lin = model.jacobians(&x, &thrust, seg.dilation)?;
        let phi_inv = phi
            .try_inverse()
            .ok_or_else(|| Error::Integrator("singular state transition matrix".into()))?;

        let f = lin.a * x + lin.b * thrust + lin.d * seg.dilation + lin.e;
        dy[..6].copy_from_slice(f.as_slice());
        dy[OFF_PHI..OFF_PB].copy_from_slice((lin.a * phi).as_slice());
        let pb = phi_inv * lin.b;
        dy[OFF_PB..OFF_PC].copy_from_slice((pb * alpha).as_slice());
        dy[OFF_PC..OFF_PD].copy_from_slice((pb * beta).as_slice());
        dy[OFF_PD..OFF_PE].copy_from_slice((phi_inv * lin.d).as_slice());
        dy[OFF_PE..].copy_from_slice((phi_inv * lin.e).as_slice());
        Ok(())
    })?;

    let phi = Matrix6::from_column_slice(&y[OFF_PHI..OFF_PB]);
    let out = SegmentLinearization {
        a_bar: phi,
        b_bar: phi * Matrix6x3::from_column_slice(&y[OFF_PB..OFF_PC]),
        c_bar: phi * Matrix6x3::from_column_slice(&y[OFF_PC..OFF_PD]),
        d_bar: phi * State::from_column_slice(&y[OFF_PD..OFF_PE]),
        e_bar: phi * State::from_column_slice(&y[OFF_PE..]),
        stt: None,
        x_end: State::from_column_slice(&y[..6]),
    };
    let finite = out
        .a_bar
        .iter()
        .chain(out.b_bar.iter())
        .chain(out.c_bar.iter())
        .chain(out.d_bar.iter())
        .chain(out.e_bar.iter())
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Integrator("non-finite discretization".into()));
    }
    Ok(out)
}

/// Propagate the nonlinear dynamics across one segment.
pub fn propagate_nonlinear<D: Dynamics + ?Sized>(
    model: &D,
    seg: &SegmentInputs,
    opts: &IntegratorOptions,
) -> Result<State> {
    seg.check()?;
    let mut y = [0.0; 6];
    y.copy_from_slice(seg.x0.as_slice());
    integrate(opts, 0.0, seg.dtau, &mut y, |sigma, y, dy| {
        let f = model.eval(&State::from_column_slice(y), &seg.thrust_at(sigma), seg.dilation)?;
        dy.copy_from_slice(f.as_slice());
        Ok(())
    })?;
    Ok(State::from(y))
}

/// Discretize every segment of a trajectory in parallel. The first failing
/// segment (lowest index) is reported.
pub fn discretize<D: Dynamics + ?Sized>(
    model: &D,
    traj: &ReferenceTrajectory,
    opts: &IntegratorOptions,
) -> Result<Vec<SegmentLinearization>> {
    traj.validate()?;
    (0..traj.nodes() - 1)
        .into_par_iter()
        .map(|k| discretize_segment(model, &traj.segment(k), opts).map_err(|e| e.on_segment(k)))
        .collect()
}

/// Segment defects `E_k = |φ(x_k, controls) − x_{k+1}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Defects {
    /// One row per segment; infinite where propagation failed.
    pub values: Vec<State>,
    pub failures: Vec<Error>,
}

impl Defects {
    pub fn l1_sum(&self) -> f64 {
        self.values.iter().map(|e| e.iter().sum::<f64>()).sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().map(|e| e.max()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn compute_defects<D: Dynamics + ?Sized>(
    model: &D,
    traj: &ReferenceTrajectory,
    opts: &IntegratorOptions,
) -> Result<Defects> {
    traj.validate()?;
    let rows: Vec<std::result::Result<State, Error>> = (0..traj.nodes() - 1)
        .into_par_iter()
        .map(|k| {
            propagate_nonlinear(model, &traj.segment(k), opts)
                .map(|x| (x - traj.states[k + 1]).abs())
                .map_err(|e| e.on_segment(k))
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for row in rows {
        match row {
            Ok(v) => values.push(v),
            Err(e) => {
                values.push(State::repeat(f64::INFINITY));
                failures.push(e);
            }
        }
    }
    Ok(Defects { values, failures })
}
