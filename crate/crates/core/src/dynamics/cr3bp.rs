//! Circular restricted three-body problem in the rotating frame.

use serde::{Deserialize, Serialize};

use super::{State, VectorField};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Earth–Moon mass ratio.
pub const EARTH_MOON_MU: f64 = 1.21506683e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cr3bp {
    /// Mass ratio `m2 / (m1 + m2)`.
    pub mu: f64,
}

impl Cr3bp {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 0.5) {
            return Err(Error::Argument(format!("CR3BP mass ratio {mu} outside (0, 0.5)")));
        }
        Ok(Self { mu })
    }

    pub fn earth_moon() -> Self {
        Self { mu: EARTH_MOON_MU }
    }

    /// Distances to the larger and smaller primary.
    pub fn distances(&self, x: &State) -> (f64, f64) {
        let mu = self.mu;
        let l1 = ((x[0] + mu).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        let l2 = ((x[0] + mu - 1.0).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        (l1, l2)
    }

    /// Jacobi constant `2Ω − |v|²` of the unforced problem.
    pub fn jacobi_constant(&self, x: &State) -> f64 {
        let (l1, l2) = self.distances(x);
        let omega = 0.5 * (x[0] * x[0] + x[1] * x[1]) + (1.0 - self.mu) / l1 + self.mu / l2;
        2.0 * omega - (x[3] * x[3] + x[4] * x[4] + x[5] * x[5])
    }
}

impl VectorField for Cr3bp {
    fn field<S: Scalar>(&self, x: &[S; 6], thrust: &[S; 3], s: S) -> Result<[S; 6]> {
        let mu = self.mu;
        let [rx, ry, rz, vx, vy, vz] = *x;
        let yz2 = ry * ry + rz * rz;
        let dx1 = rx + mu;
        let dx2 = rx + (mu - 1.0);
        let l1_sq = dx1 * dx1 + yz2;
        let l2_sq = dx2 * dx2 + yz2;
        if !(l1_sq.value() > 0.0 && l2_sq.value() > 0.0) {
            return Err(Error::Domain(format!(
                "CR3BP state at a primary (l1² = {}, l2² = {})",
                l1_sq.value(),
                l2_sq.value()
            )));
        }
        // (1-μ)/ℓ1³ and μ/ℓ2³
        let k1 = (l1_sq * l1_sq * l1_sq).sqrt().recip() * (1.0 - mu);
        let k2 = (l2_sq * l2_sq * l2_sq).sqrt().recip() * mu;

        let gx = rx - k1 * dx1 - k2 * dx2;
        let gy = ry - k1 * ry - k2 * ry;
        let gz = -(k1 * rz) - k2 * rz;

        Ok([
            s * vx,
            s * vy,
            s * vz,
            s * (gx + vy * 2.0) + thrust[0],
            s * (gy - vx * 2.0) + thrust[1],
            s * gz + thrust[2],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Dynamics;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix6x3, Vector3};

    #[test]
    fn zero_inputs_give_zero_rate() {
        let m = Cr3bp::earth_moon();
        let x = State::new(1.0176, 0.0, -0.0699, 0.0, 0.4866, 0.0);
        assert_eq!(m.eval(&x, &Vector3::zeros(), 0.0).unwrap(), State::zeros());
    }

    #[test]
    fn hand_evaluated_rate_on_x_axis() {
        // x = (0.5, 0, 0, 0, 0, 0), s = 1, T̃ = 0
        let mu = 1.21506683e-2;
        let m = Cr3bp { mu };
        let x = State::new(0.5, 0.0, 0.0, 0.0, 0.0, 0.0);
        let f = m.eval(&x, &Vector3::zeros(), 1.0).unwrap();

        let l1 = ((0.5 + mu) * (0.5 + mu)).sqrt();
        let l2 = ((0.5 + mu - 1.0) * (0.5 + mu - 1.0)).sqrt();
        let gx = 0.5 - (1.0 - mu) * (0.5 + mu) / l1.powi(3) - mu * (0.5 + mu - 1.0) / l2.powi(3);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
        assert_relative_eq!(f[3], gx, max_relative = 1e-14);
        assert_eq!(f[4], 0.0);
        assert_eq!(f[5], 0.0);
        // 0.5 − 0.98785/0.51215² + 0.01215/0.48785² by hand
        assert_relative_eq!(f[3], -3.21509, max_relative = 1e-5);
    }

    #[test]
    fn thrust_jacobian_is_constant_selector() {
        let m = Cr3bp::earth_moon();
        let x = State::new(0.9, 0.1, 0.05, -0.1, 0.2, 0.0);
        let lin = m.jacobians(&x, &Vector3::new(1e-3, 0.0, 2e-3), 2.5).unwrap();
        let mut expected = Matrix6x3::zeros();
        expected[(3, 0)] = 1.0;
        expected[(4, 1)] = 1.0;
        expected[(5, 2)] = 1.0;
        assert_eq!(lin.b, expected);
    }

    #[test]
    fn kinematic_rows_have_zero_hessian() {
        let m = Cr3bp::earth_moon();
        let x = State::new(0.9, 0.1, 0.05, -0.1, 0.2, 0.0);
        let h = m.hessian(&x, &Vector3::zeros(), 1.7).unwrap();
        for i in 0..3 {
            assert!(h.0[i].iter().all(|&v| v == 0.0));
        }
        for i in 0..6 {
            assert_relative_eq!(h.0[i], h.0[i].transpose(), epsilon = 1e-12);
        }
    }

    #[test]
    fn collision_is_domain_error() {
        let m = Cr3bp::earth_moon();
        let x = State::new(-m.mu, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            m.eval(&x, &Vector3::zeros(), 1.0),
            Err(Error::Domain(_))
        ));
        let x = State::new(1.0 - m.mu, 0.0, 0.0, 0.1, 0.0, 0.0);
        assert!(m.jacobians(&x, &Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn mass_ratio_validated() {
        assert!(Cr3bp::new(0.7).is_err());
        assert!(Cr3bp::new(0.0121).is_ok());
    }
}
