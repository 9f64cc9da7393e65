//! Time-dilated equations of motion `x' = s·A(x) + B(x)·T̃` with
//! forward-mode derivatives.
//!
//! Flight models implement [`VectorField`] once, generically over
//! [`Scalar`]; the blanket [`Dynamics`] impl then provides values, the
//! Jacobians with respect to state, thrust and dilation, and the state
//! Hessian used by the second-order transition tensor.

pub mod cr3bp;
pub mod mee;
pub mod scaling;

use nalgebra::{Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Jet, Scalar};
use crate::error::{Error, Result};

pub use cr3bp::Cr3bp;
pub use mee::Mee;
pub use scaling::ScalingSet;

pub type State = Vector6<f64>;
pub type Matrix6x3 = SMatrix<f64, 6, 3>;

/// Acceleration-thrust `T̃ = T·s/m` and its epigraph bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccelThrust {
    pub vector: Vector3<f64>,
    pub magnitude: f64,
}

impl AccelThrust {
    pub fn new(vector: Vector3<f64>) -> Self {
        Self {
            vector,
            magnitude: vector.norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DilatedInputs {
    pub thrust: AccelThrust,
    /// `s = dt/dτ`
    pub dilation: f64,
    /// `z = ln m`
    pub log_mass: f64,
}

impl DilatedInputs {
    /// `z' = -T̃/c` using the epigraph bound.
    pub fn log_mass_rate(&self, exhaust_velocity: f64) -> f64 {
        -self.thrust.magnitude / exhaust_velocity
    }
}

/// Affine expansion `f ≈ A x + B T̃ + d s + e` about a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3,
    pub d: State,
    pub e: State,
}

/// State Hessian of the time-dilated field: `h.0[i][(d, e)] = ∂²f_i/∂x_d∂x_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian(pub [Matrix6<f64>; 6]);

/// A time-dilated vector field written against a generic scalar.
pub trait VectorField: Send + Sync {
    fn field<S: Scalar>(&self, x: &[S; 6], thrust: &[S; 3], dilation: S) -> Result<[S; 6]>;
}

pub trait Dynamics: Send + Sync {
    fn eval(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<State>;
    fn jacobians(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<Linearization>;
    fn hessian(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<Hessian>;
}

impl<T: VectorField> Dynamics for T {
    fn eval(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<State> {
        let xs: [f64; 6] = (*x).into();
        let ts: [f64; 3] = (*thrust).into();
        Ok(State::from(self.field(&xs, &ts, dilation)?))
    }

    fn jacobians(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<Linearization> {
        let xs: [Dual<10>; 6] = std::array::from_fn(|i| Dual::variable(x[i], i));
        let ts: [Dual<10>; 3] = std::array::from_fn(|i| Dual::variable(thrust[i], 6 + i));
        let s = Dual::variable(dilation, 9);
        let f = self.field(&xs, &ts, s)?;
        let mut a = Matrix6::zeros();
        let mut b = Matrix6x3::zeros();
        let mut d = State::zeros();
        let mut value = State::zeros();
        for (i, fi) in f.iter().enumerate() {
            value[i] = fi.re;
            for j in 0..6 {
                a[(i, j)] = fi.eps[j];
            }
            for j in 0..3 {
                b[(i, j)] = fi.eps[6 + j];
            }
            d[i] = fi.eps[9];
        }
        let e = value - a * x - b * thrust - d * dilation;
        Ok(Linearization { a, b, d, e })
    }

    fn hessian(&self, x: &State, thrust: &Vector3<f64>, dilation: f64) -> Result<Hessian> {
        let xs: [Jet<6>; 6] = std::array::from_fn(|i| Jet::variable(x[i], i));
        let ts: [Jet<6>; 3] = std::array::from_fn(|i| Jet::constant(thrust[i]));
        let f = self.field(&xs, &ts, Jet::constant(dilation))?;
        Ok(Hessian(std::array::from_fn(|i| {
            Matrix6::from_fn(|d, e| f[i].hess[d][e])
        })))
    }
}

/// The two flight models shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Cr3bp(Cr3bp),
    Mee(Mee),
}

impl VectorField for Model {
    fn field<S: Scalar>(&self, x: &[S; 6], thrust: &[S; 3], dilation: S) -> Result<[S; 6]> {
        match self {
            Model::Cr3bp(m) => m.field(x, thrust, dilation),
            Model::Mee(m) => m.field(x, thrust, dilation),
        }
    }
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Cr3bp(_) => "cr3bp",
            Model::Mee(_) => "mee",
        }
    }

    /// Column labels of the six state components.
    pub fn state_labels(&self) -> [&'static str; 6] {
        match self {
            Model::Cr3bp(_) => ["rx", "ry", "rz", "vx", "vy", "vz"],
            Model::Mee(_) => ["p", "f", "g", "h", "k", "L"],
        }
    }

    /// Cartesian position (normalized units) of a model state.
    pub fn position(&self, x: &State) -> Vector3<f64> {
        match self {
            Model::Cr3bp(_) => x.fixed_rows::<3>(0).into_owned(),
            Model::Mee(m) => mee::mee_to_cartesian(x, m.mu).0,
        }
    }

    pub fn check_state(&self, x: &State) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite state {:?}", x.as_slice())));
        }
        self.eval(x, &Vector3::zeros(), 1.0).map(|_| ())
    }
}

/// `eval_dynamics`: time-dilated state rate for the given inputs.
pub fn eval_dynamics<D: Dynamics + ?Sized>(model: &D, x: &State, u: &DilatedInputs) -> Result<State> {
    if u.dilation < 0.0 {
        return Err(Error::Argument(format!("negative dilation {}", u.dilation)));
    }
    model.eval(x, &u.thrust.vector, u.dilation)
}
