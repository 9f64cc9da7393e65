//! Two-body motion in modified equinoctial elements `(p, f, g, h, k, L)`.
//!
//! Prograde convention (retrograde factor +1), true longitude
//! `L = Ω + ω + ν`. Thrust acceleration is given in the radial /
//! transverse / normal frame. Gauss variational equations:
//!
//! ```text
//! ṗ = 2 p q a_t / w
//! ḟ = q [ a_r sin L + ((w+1) cos L + f) a_t / w − (h sin L − k cos L) g a_n / w ]
//! ġ = q [−a_r cos L + ((w+1) sin L + g) a_t / w + (h sin L − k cos L) f a_n / w ]
//! ḣ = q s² cos L a_n / (2w)
//! k̇ = q s² sin L a_n / (2w)
//! L̇ = √(μ p) (w / p)² + q (h sin L − k cos L) a_n / w
//! ```
//!
//! with `q = √(p/μ)`, `w = 1 + f cos L + g sin L`, `s² = 1 + h² + k²`.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{State, VectorField};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mee {
    /// Gravitational parameter in normalized units.
    pub mu: f64,
}

impl Mee {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Argument(format!("gravitational parameter {mu} must be positive")));
        }
        Ok(Self { mu })
    }
}

impl VectorField for Mee {
    fn field<S: Scalar>(&self, x: &[S; 6], thrust: &[S; 3], s: S) -> Result<[S; 6]> {
        let [p, f, g, h, k, l] = *x;
        if !(p.value() > 0.0) {
            return Err(Error::Domain(format!("semi-latus rectum p = {} <= 0", p.value())));
        }
        let (sl, cl) = (l.sin(), l.cos());
        let w = f * cl + g * sl + 1.0;
        if !(w.value() > 0.0) {
            return Err(Error::Domain(format!("w = 1 + f cos L + g sin L = {} <= 0", w.value())));
        }
        let q = (p / self.mu).sqrt();
        let inv_w = w.recip();
        let s2 = h * h + k * k + 1.0;
        let hsk = h * sl - k * cl;
        let [ar, at, an] = *thrust;

        let w_over_p = w / p;
        let drift_l = (p * self.mu).sqrt() * w_over_p * w_over_p;

        let dp = p * q * inv_w * at * 2.0;
        let df = q * (ar * sl + ((w + 1.0) * cl + f) * inv_w * at - hsk * g * inv_w * an);
        let dg = q * (-(ar * cl) + ((w + 1.0) * sl + g) * inv_w * at + hsk * f * inv_w * an);
        let dh = q * s2 * cl * inv_w * an * 0.5;
        let dk = q * s2 * sl * inv_w * an * 0.5;
        let dl = q * hsk * inv_w * an;

        Ok([dp, df, dg, dh, dk, s * drift_l + dl])
    }
}

fn equinoctial_frame(h: f64, k: f64) -> (Vector3<f64>, Vector3<f64>) {
    let s2 = 1.0 + h * h + k * k;
    let fhat = Vector3::new(1.0 - k * k + h * h, 2.0 * k * h, -2.0 * k) / s2;
    let ghat = Vector3::new(2.0 * k * h, 1.0 + k * k - h * h, 2.0 * h) / s2;
    (fhat, ghat)
}

/// Convert inertial position/velocity to modified equinoctial elements.
/// The returned longitude lies in `(-π, π]`.
pub fn cartesian_to_mee(r: &Vector3<f64>, v: &Vector3<f64>, mu: f64) -> Result<State> {
    let hvec = r.cross(v);
    let hmag = hvec.norm();
    if !(hmag > 0.0) || !hmag.is_finite() {
        return Err(Error::Domain("rectilinear or non-finite orbit".into()));
    }
    let what = hvec / hmag;
    let denom = 1.0 + what.z;
    if denom < 1e-12 {
        return Err(Error::Domain("retrograde equatorial orbit is singular in MEE".into()));
    }
    let k = what.x / denom;
    let h = -what.y / denom;
    let (fhat, ghat) = equinoctial_frame(h, k);
    let ecc = v.cross(&hvec) / mu - r / r.norm();
    let p = hmag * hmag / mu;
    let l = (r.dot(&ghat)).atan2(r.dot(&fhat));
    Ok(State::new(p, ecc.dot(&fhat), ecc.dot(&ghat), h, k, l))
}

/// Convert modified equinoctial elements to inertial position/velocity.
pub fn mee_to_cartesian(x: &State, mu: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (p, f, g, h, k, l) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let (fhat, ghat) = equinoctial_frame(h, k);
    let (sl, cl) = l.sin_cos();
    let w = 1.0 + f * cl + g * sl;
    let r = (p / w) * (cl * fhat + sl * ghat);
    let v = (mu / p).sqrt() * (-(sl + g) * fhat + (cl + f) * ghat);
    (r, v)
}

/// Rotation taking radial/transverse/normal components to inertial ones.
pub fn rtn_to_inertial(r: &Vector3<f64>, v: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    let rhat = r.normalize();
    let nhat = r.cross(v).normalize();
    let that = nhat.cross(&rhat);
    nalgebra::Matrix3::from_columns(&[rhat, that, nhat])
}

/// Final true longitude continued from `l0` by `revolutions` full turns plus
/// the forward angle to `lf`.
pub fn unwrap_final_longitude(l0: f64, lf: f64, revolutions: u32) -> f64 {
    l0 + (lf - l0).rem_euclid(TAU) + TAU * revolutions as f64
}
