//! Second-order state transition tensors, nonlinearity indices and the
//! per-node trust-region field derived from them.

use nalgebra::Matrix6;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{ReferenceTrajectory, SegmentInputs};
use crate::dynamics::{Dynamics, State};
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegratorOptions};

/// `Λ_{ijk} = ∂²x_i(τ_{k+1}) / ∂x_j(τ_k) ∂x_k(τ_k)`, stored as one 6×6
/// matrix per leading index: `self.0[i][(j, k)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stt(pub [Matrix6<f64>; 6]);

impl Stt {
    pub fn zeros() -> Self {
        Self([Matrix6::zeros(); 6])
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[i][(j, k)]
    }

    /// Entrywise L1 norm `Σ|Λ_{ijk}|`.
    pub fn l1(&self) -> f64 {
        self.0.iter().map(|m| m.abs().sum()).sum()
    }

    /// `Σ_{ij} |Λ_{ije}|` for a trailing index `e`.
    pub fn trailing_l1(&self, e: usize) -> f64 {
        self.0.iter().map(|m| m.column(e).abs().sum()).sum()
    }

    /// Contract the trailing index: `(Λ·δx)_{ij} = Σ_k Λ_{ijk} δx_k`.
    pub fn contract(&self, dx: &State) -> Matrix6<f64> {
        Matrix6::from_fn(|i, j| (0..6).map(|k| self.0[i][(j, k)] * dx[k]).sum())
    }
}

const OFF_PHI: usize = 6;
const OFF_STT: usize = OFF_PHI + 36;
const STT_LEN: usize = OFF_STT + 216;

/// Jointly propagate state, STM and second-order STT across a segment.
pub fn propagate_stt<D: Dynamics + ?Sized>(
    model: &D,
    seg: &SegmentInputs,
    opts: &IntegratorOptions,
) -> Result<(Matrix6<f64>, Stt)> {
    let mut y = vec![0.0; STT_LEN];
    y[..6].copy_from_slice(seg.x0.as_slice());
    y[OFF_PHI..OFF_STT].copy_from_slice(Matrix6::<f64>::identity().as_slice());

    integrate(opts, 0.0, seg.dtau, &mut y, |sigma, y, dy| {
        let x = State::from_column_slice(&y[..6]);
        let thrust = seg.thrust_at(sigma);
        let phi = Matrix6::from_column_slice(&y[OFF_PHI..OFF_STT]);
        let lin = model.jacobians(&x, &thrust, seg.dilation)?;
        let hess = model.hessian(&x, &thrust, seg.dilation)?;

        let f = lin.a * x + lin.b * thrust + lin.d * seg.dilation + lin.e;
        dy[..6].copy_from_slice(f.as_slice());
        dy[OFF_PHI..OFF_STT].copy_from_slice((lin.a * phi).as_slice());

        let lambda: [Matrix6<f64>; 6] = std::array::from_fn(|d| {
            Matrix6::from_column_slice(&y[OFF_STT + 36 * d..OFF_STT + 36 * (d + 1)])
        });
        for i in 0..6 {
            let mut rate = phi.transpose() * hess.0[i] * phi;
            for (d, lam_d) in lambda.iter().enumerate() {
                let a_id = lin.a[(i, d)];
                if a_id != 0.0 {
                    rate += lam_d * a_id;
                }
            }
            dy[OFF_STT + 36 * i..OFF_STT + 36 * (i + 1)].copy_from_slice(rate.as_slice());
        }
        Ok(())
    })?;

    let phi = Matrix6::from_column_slice(&y[OFF_PHI..OFF_STT]);
    let stt = Stt(std::array::from_fn(|i| {
        Matrix6::from_column_slice(&y[OFF_STT + 36 * i..OFF_STT + 36 * (i + 1)])
    }));
    Ok((phi, stt))
}

/// Propagate state and STM only.
pub fn propagate_stm<D: Dynamics + ?Sized>(
    model: &D,
    seg: &SegmentInputs,
    opts: &IntegratorOptions,
) -> Result<Matrix6<f64>> {
    let mut y = vec![0.0; OFF_STT];
    y[..6].copy_from_slice(seg.x0.as_slice());
    y[OFF_PHI..].copy_from_slice(Matrix6::<f64>::identity().as_slice());
    integrate(opts, 0.0, seg.dtau, &mut y, |sigma, y, dy| {
        let x = State::from_column_slice(&y[..6]);
        let thrust = seg.thrust_at(sigma);
        let lin = model.jacobians(&x, &thrust, seg.dilation)?;
        let phi = Matrix6::from_column_slice(&y[OFF_PHI..]);
        let f = lin.a * x + lin.b * thrust + lin.d * seg.dilation + lin.e;
        dy[..6].copy_from_slice(f.as_slice());
        dy[OFF_PHI..].copy_from_slice((lin.a * phi).as_slice());
        Ok(())
    })?;
    Ok(Matrix6::from_column_slice(&y[OFF_PHI..]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledIndex {
    /// Supremum over the samples.
    pub value: f64,
    /// Index of every individual perturbation, in draw order.
    pub samples: Vec<f64>,
}

/// Sampling estimate `sup_i ‖Φ_i − Φ‖₁ / ‖Φ‖₁`.
///
/// Each perturbation is `δx_max·u` with `u` a random sign vector
/// (`u_j ∈ {−1, +1}`), i.e. a point on the max-norm sphere of radius
/// `δx_max`; matrix norms are entrywise L1, matching [`tensor_index`].
pub fn sampled_index<D: Dynamics + ?Sized>(
    model: &D,
    seg: &SegmentInputs,
    dx_max: f64,
    n_samples: usize,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<SampledIndex> {
    if !(dx_max > 0.0) {
        return Err(Error::Argument(format!("perturbation size {dx_max} must be positive")));
    }
    if n_samples == 0 {
        return Err(Error::Argument("need at least one perturbation sample".into()));
    }
    let phi = propagate_stm(model, seg, opts)?;
    let denom = phi.abs().sum();
    if denom == 0.0 {
        return Err(Error::Argument("degenerate STM (all zero)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let dx = State::from_fn(|_, _| if rng.random::<bool>() { dx_max } else { -dx_max });
        let perturbed = SegmentInputs {
            x0: seg.x0 + dx,
            ..*seg
        };
        let phi_i = propagate_stm(model, &perturbed, opts)?;
        samples.push((phi_i - phi).abs().sum() / denom);
    }
    let value = samples.iter().copied().fold(0.0, f64::max);
    Ok(SampledIndex { value, samples })
}

fn stm_l1(stm: &Matrix6<f64>) -> Result<f64> {
    let denom = stm.abs().sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Argument(format!("degenerate STM, entrywise L1 norm {denom}")));
    }
    Ok(denom)
}

/// `v = Σ|Λ_{ijk}| / Σ|Φ_{ij}|`
pub fn tensor_index(stt: &Stt, stm: &Matrix6<f64>) -> Result<f64> {
    Ok(stt.l1() / stm_l1(stm)?)
}

/// `v_e = Σ_{ij}|Λ_{ije}| / Σ|Φ_{ij}|`
pub fn directional_index(stt: &Stt, stm: &Matrix6<f64>, e: usize) -> Result<f64> {
    if e >= 6 {
        return Err(Error::Argument(format!("direction {e} out of range 0..6")));
    }
    Ok(stt.trailing_l1(e) / stm_l1(stm)?)
}

pub fn directional_indices(stt: &Stt, stm: &Matrix6<f64>) -> Result<[f64; 6]> {
    let denom = stm_l1(stm)?;
    Ok(std::array::from_fn(|e| stt.trailing_l1(e) / denom))
}

/// Base trust radii and the nonlinearity scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionSpec {
    /// Base state radii `r^x`.
    pub state: [f64; 6],
    /// Dilation radius `r^s` (zero pins the mesh).
    pub dilation: f64,
    pub eta: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl TrustRegionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Argument(format!("state radii must be positive: {:?}", self.state)));
        }
        if !(self.dilation >= 0.0) || !self.dilation.is_finite() {
            return Err(Error::Argument(format!("dilation radius {} must be >= 0", self.dilation)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Argument(format!("eta {} must be positive", self.eta)));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min <= self.gamma_max && self.gamma_max.is_finite()) {
            return Err(Error::Argument(format!(
                "gamma clamp [{}, {}] must satisfy 0 < min <= max",
                self.gamma_min, self.gamma_max
            )));
        }
        Ok(())
    }
}

/// Directional indices per segment and the clamped multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityField {
    pub v: Vec<[f64; 6]>,
    pub gamma: Vec<[f64; 6]>,
}

/// `γ = clamp(η/v, γ_min, γ_max)`; `v = 0` maps to `γ_max`, NaN to `γ_min`.
pub fn multiplier(v: f64, eta: f64, gamma_min: f64, gamma_max: f64) -> f64 {
    if v.is_nan() {
        return gamma_min;
    }
    if v == 0.0 {
        return gamma_max;
    }
    (eta / v).clamp(gamma_min, gamma_max)
}

impl NonlinearityField {
    pub fn from_indices(v: Vec<[f64; 6]>, spec: &TrustRegionSpec) -> Self {
        let gamma = v
            .iter()
            .map(|row| row.map(|vi| multiplier(vi, spec.eta, spec.gamma_min, spec.gamma_max)))
            .collect();
        Self { v, gamma }
    }

    /// Uniform multipliers of one (feature disabled).
    pub fn uniform(segments: usize) -> Self {
        Self {
            v: vec![[0.0; 6]; segments],
            gamma: vec![[1.0; 6]; segments],
        }
    }

    /// Per-node scaled radii `r̃_k = γ_{seg(k)} ⊙ r^x`. Node `k` takes the
    /// multiplier of its leading segment; the final node the last segment's.
    pub fn scaled_radii(&self, base: &[f64; 6]) -> Vec<State> {
        let segs = self.gamma.len();
        (0..=segs)
            .map(|k| {
                let g = &self.gamma[k.min(segs - 1)];
                State::from_fn(|e, _| g[e] * base[e])
            })
            .collect()
    }
}

/// Scale the base state radii by the clamped nonlinearity multipliers.
pub fn scale_trust_region(v: &[[f64; 6]], spec: &TrustRegionSpec) -> Result<Vec<State>> {
    spec.validate()?;
    if v.is_empty() {
        return Err(Error::Argument("nonlinearity field has no segments".into()));
    }
    let field = NonlinearityField::from_indices(v.to_vec(), spec);
    Ok(field.scaled_radii(&spec.state))
}

/// Directional indices for every segment of a reference, in parallel.
pub fn index_field<D: Dynamics + ?Sized>(
    model: &D,
    traj: &ReferenceTrajectory,
    opts: &IntegratorOptions,
) -> Result<Vec<[f64; 6]>> {
    traj.validate()?;
    (0..traj.nodes() - 1)
        .into_par_iter()
        .map(|k| {
            let (phi, stt) = propagate_stt(model, &traj.segment(k), opts).map_err(|e| e.on_segment(k))?;
            directional_indices(&stt, &phi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(eta: f64, lo: f64, hi: f64) -> TrustRegionSpec {
        TrustRegionSpec {
            state: [0.1; 6],
            dilation: 0.1,
            eta,
            gamma_min: lo,
            gamma_max: hi,
        }
    }

    #[test]
    fn zero_tensor_has_zero_index() {
        let phi = Matrix6::identity();
        assert_eq!(tensor_index(&Stt::zeros(), &phi).unwrap(), 0.0);
        for e in 0..6 {
            assert_eq!(directional_index(&Stt::zeros(), &phi, e).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_state_toy_value() {
        // embed the n = 2 example: Λ all ones on a 2×2×2 block, Φ = I₂
        let mut stt = Stt::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    stt.0[i][(j, k)] = 1.0;
                }
            }
        }
        let mut phi = Matrix6::zeros();
        phi[(0, 0)] = 1.0;
        phi[(1, 1)] = 1.0;
        assert_eq!(tensor_index(&stt, &phi).unwrap(), 4.0);
        assert_eq!(directional_index(&stt, &phi, 0).unwrap(), 2.0);
    }

    #[test]
    fn degenerate_stm_is_error() {
        assert!(tensor_index(&Stt::zeros(), &Matrix6::zeros()).is_err());
        assert!(directional_index(&Stt::zeros(), &Matrix6::identity(), 6).is_err());
    }

    #[test]
    fn clamp_examples() {
        let s = spec(0.1, 0.5, 20.0);
        let r = scale_trust_region(&[[0.05; 6], [f64::INFINITY; 6], [0.0; 6]], &s).unwrap();
        assert_eq!(r.len(), 4);
        assert_relative_eq!(r[0][0], 0.2, max_relative = 1e-15);
        assert_relative_eq!(r[1][3], 0.05, max_relative = 1e-15);
        assert_relative_eq!(r[2][5], 2.0, max_relative = 1e-15);
        // final node inherits last segment
        assert_eq!(r[3], r[2]);
        assert_eq!(multiplier(0.05, 0.1, 0.5, 20.0), 2.0);
        assert_eq!(multiplier(f64::NAN, 0.1, 0.5, 20.0), 0.5);
    }

    #[test]
    fn disabled_scaling_is_identity() {
        let s = spec(0.1, 1.0, 1.0);
        let r = scale_trust_region(&[[1e-9, 3.0, 0.0, 7.0, 1e9, 0.5]], &s).unwrap();
        assert!(r.iter().all(|row| row.iter().all(|&v| v == 0.1)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(0.1, 0.5, 20.0);
        s.state[2] = 0.0;
        assert!(scale_trust_region(&[[0.0; 6]], &s).is_err());
        assert!(scale_trust_region(&[[0.0; 6]], &spec(0.1, 3.0, 1.0)).is_err());
        assert!(scale_trust_region(&[[0.0; 6]], &spec(0.0, 1.0, 1.0)).is_err());
    }
}
