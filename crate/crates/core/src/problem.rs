use crate::discretization::ReferenceTrajectory;
use crate::dynamics::{Model, ScalingSet, State};
use crate::error::{Error, Result};
use crate::subproblem::SubproblemParams;

/// A fixed-time minimum-fuel rendezvous in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDef {
    pub model: Model,
    pub scaling: ScalingSet,
    pub x_initial: State,
    /// Final state; for element models the longitude is already unwrapped.
    pub x_final: State,
    pub initial_mass_kg: f64,
    /// Normalized maximum thrust force.
    pub thrust_max: f64,
    /// Normalized time of flight `t_f`.
    pub time_of_flight: f64,
    /// Full revolutions added to the final longitude (element models).
    pub revolutions: u32,
}

impl ProblemDef {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial mass", self.initial_mass_kg),
            ("maximum thrust", self.thrust_max),
            ("time of flight", self.time_of_flight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        self.model
            .check_state(&self.x_initial)
            .map_err(|e| Error::Argument(format!("initial state: {e}")))?;
        self.model
            .check_state(&self.x_final)
            .map_err(|e| Error::Argument(format!("final state: {e}")))?;
        Ok(())
    }

    /// `z₀ = ln(m₀/MU)`
    pub fn log_mass_initial(&self) -> f64 {
        (self.initial_mass_kg / self.scaling.mass_kg).ln()
    }

    pub fn mass_kg(&self, log_mass: f64) -> f64 {
        self.scaling.mass_kg * log_mass.exp()
    }

    pub fn propellant_kg(&self, traj: &ReferenceTrajectory) -> f64 {
        self.initial_mass_kg - self.mass_kg(traj.log_mass[traj.nodes() - 1])
    }

    /// Physical thrust magnitude in newtons at node `k`, `T = T̃·m/s`.
    /// Zero-length segments carry no thrust.
    pub fn thrust_newtons(&self, traj: &ReferenceTrajectory, k: usize) -> f64 {
        let s = traj.node_dilation(k);
        if s <= 0.0 {
            return 0.0;
        }
        let force = traj.thrust[k].norm() * traj.log_mass[k].exp() / s;
        force * self.scaling.force_unit_n()
    }

    pub fn thrust_max_newtons(&self) -> f64 {
        self.thrust_max * self.scaling.force_unit_n()
    }

    pub fn subproblem_params(&self, penalty: f64) -> SubproblemParams {
        SubproblemParams {
            thrust_max: self.thrust_max,
            exhaust_velocity: self.scaling.exhaust_velocity,
            penalty,
            time_of_flight: self.time_of_flight,
            x_initial: self.x_initial,
            x_final: self.x_final,
            log_mass_initial: self.log_mass_initial(),
        }
    }
}
