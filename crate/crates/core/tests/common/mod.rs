//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::{Matrix6, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scvx_core::autodiff::Scalar;
use scvx_core::discretization::{propagate_nonlinear, SegmentInputs};
use scvx_core::dynamics::{Cr3bp, Dynamics, Matrix6x3, Mee, Model, State, VectorField};
use scvx_core::nonlinearity::{propagate_stm, propagate_stt};
use scvx_core::{IntegratorOptions, Result};

pub const SAMPLES: usize = 100;

pub fn cr3bp_point(rng: &mut ChaCha8Rng) -> (State, Vector3<f64>, f64) {
    let m = Cr3bp::earth_moon();
    loop {
        let x = State::from_fn(|i, _| match i {
            0 => rng.random_range(0.7..1.3),
            1 => rng.random_range(-0.3..0.3),
            2 => rng.random_range(-0.2..0.2),
            _ => rng.random_range(-0.5..0.5),
        });
        let (d1, d2) = m.distances(&x);
        if d1 > 0.1 && d2 > 0.05 {
            let t = Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
            return (x, t, rng.random_range(0.5..5.0));
        }
    }
}

pub fn mee_point(rng: &mut ChaCha8Rng) -> (State, Vector3<f64>, f64) {
    let x = State::from_fn(|i, _| match i {
        0 => rng.random_range(0.5..2.0),
        1 | 2 => rng.random_range(-0.3..0.3),
        3 | 4 => rng.random_range(-0.3..0.3),
        _ => rng.random_range(0.0..std::f64::consts::TAU),
    });
    let t = Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
    (x, t, rng.random_range(0.5..5.0))
}

/// Largest entrywise deviation relative to the largest analytic entry.
pub fn rel_err<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (fd, an) in pairs {
        num = num.max((fd - an).abs());
        den = den.max(an.abs());
    }
    num / den.max(1e-12)
}

pub fn unit(j: usize) -> State {
    State::from_fn(|i, _| if i == j { 1.0 } else { 0.0 })
}

pub fn check_jacobians(model: &Model, x: &State, t: &Vector3<f64>, s: f64) -> (f64, f64) {
    let lin = model.jacobians(x, t, s).unwrap();
    let h = 1e-6;
    let f = |x: &State, t: &Vector3<f64>, s: f64| model.eval(x, t, s).unwrap();
    let mut pairs = Vec::new();
    for j in 0..6 {
        let d = (f(&(x + unit(j) * h), t, s) - f(&(x - unit(j) * h), t, s)) / (2.0 * h);
        pairs.extend((0..6).map(|i| (d[i], lin.a[(i, j)])));
    }
    let err_a = rel_err(pairs);
    let dd = (f(x, t, s + h) - f(x, t, s - h)) / (2.0 * h);
    let err_d = rel_err((0..6).map(|i| (dd[i], lin.d[i])));
    (err_a, err_d)
}

pub fn check_hessian(model: &Model, x: &State, t: &Vector3<f64>, s: f64) -> f64 {
    let hess = model.hessian(x, t, s).unwrap();
    let h = 1e-4;
    let f = |x: State| model.eval(&x, t, s).unwrap();
    let mut pairs = Vec::new();
    for d in 0..6 {
        for e in 0..6 {
            let (ud, ue) = (unit(d) * h, unit(e) * h);
            let fd = (f(x + ud + ue) - f(x + ud - ue) - f(x - ud + ue) + f(x - ud - ue)) / (4.0 * h * h);
            pairs.extend((0..6).map(|i| (fd[i], hess.0[i][(d, e)])));
        }
    }
    rel_err(pairs)
}

pub fn tight() -> IntegratorOptions {
    IntegratorOptions {
        rtol: 1e-13,
        atol: 1e-15,
        ..Default::default()
    }
}

pub fn segments() -> Vec<(Model, SegmentInputs)> {
    let cr3bp = SegmentInputs {
        x0: State::new(1.0176, 0.0, -0.0699, 0.0, 0.4866, 0.0),
        thrust0: Vector3::new(1e-3, -2e-3, 5e-4),
        thrust1: Vector3::new(-1e-3, 1e-3, 0.0),
        dilation: 3.475,
        dtau: 0.02,
    };
    let mee = SegmentInputs {
        x0: State::new(1.0, 0.1, 0.05, 0.02, 0.01, 1.0),
        thrust0: Vector3::new(1e-2, 2e-2, -1e-2),
        thrust1: Vector3::new(0.0, 1e-2, 0.0),
        dilation: 2.0,
        dtau: 0.1,
    };
    vec![(Model::Cr3bp(Cr3bp::earth_moon()), cr3bp), (Model::Mee(Mee::new(1.0).unwrap()), mee)]
}

pub fn shifted(seg: &SegmentInputs, dx: State) -> SegmentInputs {
    SegmentInputs { x0: seg.x0 + dx, ..*seg }
}

/// Relative FD error of the STM against central differences of the flow.
pub fn stm_error(model: &Model, seg: &SegmentInputs, opts: &IntegratorOptions) -> f64 {
    let phi = propagate_stm(model, seg, opts).unwrap();
    let h = 1e-6;
    let mut pairs = Vec::new();
    for j in 0..6 {
        let xp = propagate_nonlinear(model, &shifted(seg, unit(j) * h), opts).unwrap();
        let xm = propagate_nonlinear(model, &shifted(seg, unit(j) * -h), opts).unwrap();
        let col = (xp - xm) / (2.0 * h);
        pairs.extend((0..6).map(|i| (col[i], phi[(i, j)])));
    }
    rel_err(pairs)
}

/// Relative FD error of the STT against central differences of the STM,
/// and its largest asymmetry in the trailing indices.
pub fn stt_error(model: &Model, seg: &SegmentInputs, opts: &IntegratorOptions) -> (f64, f64) {
    let (_, stt) = propagate_stt(model, seg, opts).unwrap();
    let h = 1e-5;
    let mut pairs = Vec::new();
    for k in 0..6 {
        let pp: Matrix6<f64> = propagate_stm(model, &shifted(seg, unit(k) * h), opts).unwrap();
        let pm: Matrix6<f64> = propagate_stm(model, &shifted(seg, unit(k) * -h), opts).unwrap();
        let d = (pp - pm) / (2.0 * h);
        for i in 0..6 {
            for j in 0..6 {
                pairs.push((d[(i, j)], stt.get(i, j, k)));
            }
        }
    }
    let asym = stt.0.iter().map(|m| (m - m.transpose()).abs().max()).fold(0.0, f64::max);
    (rel_err(pairs), asym)
}

/// Random-point FD errors `(A, d, B, H)` over `SAMPLES` states of a model.
pub fn derivative_errors(model: &Model, seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..SAMPLES {
        let (x, t, s) = match model {
            Model::Cr3bp(_) => cr3bp_point(&mut rng),
            Model::Mee(_) => mee_point(&mut rng),
        };
        let (ea, ed) = check_jacobians(model, &x, &t, s);
        let lin = model.jacobians(&x, &t, s).unwrap();
        let h = 1e-6;
        let mut pairs = Vec::new();
        for j in 0..3 {
            let dt = Vector3::from_fn(|i, _| if i == j { h } else { 0.0 });
            let d = (model.eval(&x, &(t + dt), s).unwrap() - model.eval(&x, &(t - dt), s).unwrap()) / (2.0 * h);
            pairs.extend((0..6).map(|i| (d[i], lin.b[(i, j)])));
        }
        let eh = check_hessian(model, &x, &t, s);
        for (w, e) in worst.iter_mut().zip([ea, ed, rel_err(pairs), eh]) {
            *w = w.max(e);
        }
    }
    worst
}

/// `x' = s·A x + B T̃`
pub struct Lti {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3,
}

impl VectorField for Lti {
    fn field<S: Scalar>(&self, x: &[S; 6], t: &[S; 3], s: S) -> Result<[S; 6]> {
        Ok(std::array::from_fn(|i| {
            let mut ax = S::constant(0.0);
            for j in 0..6 {
                ax = ax + x[j] * self.a[(i, j)];
            }
            let mut bt = S::constant(0.0);
            for j in 0..3 {
                bt = bt + t[j] * self.b[(i, j)];
            }
            s * ax + bt
        }))
    }
}

pub fn random_lti(seed: u64) -> Lti {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Lti {
        a: Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        b: Matrix6x3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
    }
}

/// `x₀' = s·x₀²`; the other five components are constant.
pub struct Quadratic;

impl VectorField for Quadratic {
    fn field<S: Scalar>(&self, x: &[S; 6], _: &[S; 3], s: S) -> Result<[S; 6]> {
        let zero = S::constant(0.0);
        Ok([s * x[0] * x[0], zero, zero, zero, zero, zero])
    }
}

/// `x' = s·A x` with a fixed skew-ish matrix.
pub struct Linear;

impl VectorField for Linear {
    fn field<S: Scalar>(&self, x: &[S; 6], _: &[S; 3], s: S) -> Result<[S; 6]> {
        Ok(std::array::from_fn(|i| s * (x[(i + 1) % 6] - x[i] * 0.3)))
    }
}

pub fn quadratic_segment(x0: f64, h: f64) -> SegmentInputs {
    SegmentInputs {
        x0: State::new(x0, 0.0, 0.0, 0.0, 0.0, 0.0),
        thrust0: Vector3::zeros(),
        thrust1: Vector3::zeros(),
        dilation: 1.0,
        dtau: h,
    }
}

pub fn halo_segment() -> SegmentInputs {
    SegmentInputs {
        x0: State::new(1.0176, 0.0, -0.0699, 0.0, 0.4866, 0.0),
        thrust0: Vector3::new(1e-3, -2e-3, 5e-4),
        thrust1: Vector3::new(-1e-3, 1e-3, 0.0),
        dilation: 3.475,
        dtau: 0.02,
    }
}
