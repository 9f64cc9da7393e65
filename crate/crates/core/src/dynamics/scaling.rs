use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Canonical units and the derived constants that enter the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSet {
    pub length_km: f64,
    pub time_s: f64,
    pub mass_kg: f64,
    /// Gravitational parameter in normalized units (mass ratio for CR3BP).
    pub mu: f64,
    /// Effective exhaust velocity `Isp·g0` in normalized velocity units.
    pub exhaust_velocity: f64,
}

impl ScalingSet {
    pub fn new(length_km: f64, time_s: f64, mass_kg: f64, mu: f64, isp_s: f64, g0_m_s2: f64) -> Result<Self> {
        for (name, v) in [
            ("length unit", length_km),
            ("time unit", time_s),
            ("mass unit", mass_kg),
            ("gravitational parameter", mu),
            ("specific impulse", isp_s),
            ("standard gravity", g0_m_s2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        let velocity_unit = length_km * 1e3 / time_s;
        Ok(Self {
            length_km,
            time_s,
            mass_kg,
            mu,
            exhaust_velocity: isp_s * g0_m_s2 / velocity_unit,
        })
    }

    /// Normalize a dimensional gravitational parameter given in km³/s².
    pub fn normalized_mu(mu_km3_s2: f64, length_km: f64, time_s: f64) -> f64 {
        mu_km3_s2 * time_s * time_s / length_km.powi(3)
    }

    pub fn velocity_unit_m_s(&self) -> f64 {
        self.length_km * 1e3 / self.time_s
    }

    pub fn acceleration_unit_m_s2(&self) -> f64 {
        self.velocity_unit_m_s() / self.time_s
    }

    pub fn force_unit_n(&self) -> f64 {
        self.mass_kg * self.acceleration_unit_m_s2()
    }

    pub fn force_to_normalized(&self, newtons: f64) -> f64 {
        newtons / self.force_unit_n()
    }

    pub fn days_to_normalized(&self, days: f64) -> f64 {
        days * SECONDS_PER_DAY / self.time_s
    }

    pub fn km_to_normalized(&self, km: f64) -> f64 {
        km / self.length_km
    }

    pub fn km_s_to_normalized(&self, km_s: f64) -> f64 {
        km_s * 1e3 / self.velocity_unit_m_s()
    }
}
