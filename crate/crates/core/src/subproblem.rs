//! Assembly of the discretized convex subproblem around a reference.
//!
//! Decision variables, in layout order:
//!
//! | block  | shape    | meaning                               |
//! |--------|----------|---------------------------------------|
//! | `x`    | K × 6    | node states                           |
//! | `tvec` | K × 3    | acceleration-thrust vectors `T̃_k`     |
//! | `tsc`  | K × 1    | epigraph scalars `T̃_k ≥ ‖T̃_k‖`        |
//! | `z`    | K × 1    | log-mass                              |
//! | `s`    | (K−1)×1  | segment dilations                     |
//! | `h`    | (K−1)×6  | virtual control                       |
//! | `w`    | (K−1)×6  | L1 auxiliaries, `w ≥ ±h`              |

use nalgebra::Vector3;

use crate::conic::{ConicProgram, ConicSolution, Layout, ProgramBuilder, Residuals, SolveStatus};
use crate::discretization::{trapezoid, ReferenceTrajectory, SegmentLinearization};
use crate::dynamics::State;
use crate::error::{Error, Result};

/// Problem data entering every subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemParams {
    /// Normalized maximum thrust force.
    pub thrust_max: f64,
    /// Normalized effective exhaust velocity.
    pub exhaust_velocity: f64,
    /// Virtual-control penalty `C`.
    pub penalty: f64,
    /// Normalized time of flight.
    pub time_of_flight: f64,
    pub x_initial: State,
    pub x_final: State,
    pub log_mass_initial: f64,
}

/// Affine bound `a_s·s + a_z·z + a_0` on the epigraph scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustBound {
    pub ds: f64,
    pub dz: f64,
    pub constant: f64,
}

impl ThrustBound {
    pub fn eval(&self, s: f64, z: f64) -> f64 {
        self.ds * s + self.dz * z + self.constant
    }
}

/// First-order expansion of `T_max·s·e^{−z}` about `(ŝ, ẑ)`:
/// `T_max e^{−ẑ}(s − ŝ(z − ẑ))`.
pub fn linearized_thrust_bound(z_ref: f64, s_ref: f64, thrust_max: f64) -> Result<ThrustBound> {
    if !(thrust_max > 0.0) || !z_ref.is_finite() || !s_ref.is_finite() {
        return Err(Error::Argument(format!(
            "thrust bound needs T_max > 0 and finite reference (T_max = {thrust_max}, z = {z_ref}, s = {s_ref})"
        )));
    }
    let g = thrust_max * (-z_ref).exp();
    Ok(ThrustBound {
        ds: g,
        dz: -g * s_ref,
        constant: g * s_ref * z_ref,
    })
}

pub fn make_layout(nodes: usize) -> Layout {
    let segs = nodes - 1;
    let mut l = Layout::default();
    l.push("x", nodes, 6);
    l.push("tvec", nodes, 3);
    l.push("tsc", nodes, 1);
    l.push("z", nodes, 1);
    l.push("s", segs, 1);
    l.push("h", segs, 6);
    l.push("w", segs, 6);
    l
}

fn dim_error(what: String) -> Error {
    Error::Assembly {
        constraint: "dimensions".into(),
        reason: what,
    }
}

/// Build the conic program. `radii` holds one state radius per node and
/// `dilation_radius = 0` pins every `s_k` to its reference value.
pub fn assemble(
    reference: &ReferenceTrajectory,
    lins: &[SegmentLinearization],
    radii: &[State],
    dilation_radius: f64,
    params: &SubproblemParams,
) -> Result<ConicProgram> {
    reference.validate().map_err(|e| dim_error(e.to_string()))?;
    let nodes = reference.nodes();
    let segs = nodes - 1;
    if lins.len() != segs {
        return Err(dim_error(format!("{} linearizations for {segs} segments", lins.len())));
    }
    if radii.len() != nodes {
        return Err(dim_error(format!("{} trust radii for {nodes} nodes", radii.len())));
    }
    if let Some(k) = radii.iter().position(|r| r.iter().any(|v| !(*v > 0.0))) {
        return Err(Error::Assembly {
            constraint: format!("trust_region[{k}]"),
            reason: format!("radii must be positive, got {:?}", radii[k].as_slice()),
        });
    }
    if !(dilation_radius >= 0.0) {
        return Err(Error::Assembly {
            constraint: "dilation_trust_region".into(),
            reason: format!("radius {dilation_radius} must be >= 0"),
        });
    }
    if !(params.exhaust_velocity > 0.0 && params.penalty > 0.0) {
        return Err(Error::Assembly {
            constraint: "parameters".into(),
            reason: "exhaust velocity and penalty must be positive".into(),
        });
    }

    let layout = make_layout(nodes);
    let x = layout.get("x")?.clone();
    let tv = layout.get("tvec")?.clone();
    let ts = layout.get("tsc")?.clone();
    let z = layout.get("z")?.clone();
    let s = layout.get("s")?.clone();
    let h = layout.get("h")?.clone();
    let w = layout.get("w")?.clone();
    let mut b = ProgramBuilder::new(layout);
    let inv_seg = 1.0 / segs as f64;

    // objective: trapezoid of tsc plus C·Σw
    for k in 0..nodes {
        let weight = if k == 0 || k == segs { 0.5 } else { 1.0 };
        b.set_cost(ts.at(k, 0), weight * inv_seg, "objective")?;
    }
    for k in 0..segs {
        for i in 0..6 {
            b.set_cost(w.at(k, i), params.penalty, "objective")?;
        }
    }

    // dynamics: x_{k+1} − Āx_k − B̄T̃_k − C̄T̃_{k+1} − d̄s_k − h_k = ē
    let mut row = Vec::with_capacity(16);
    for (k, lin) in lins.iter().enumerate() {
        for i in 0..6 {
            row.clear();
            row.push((x.at(k + 1, i), 1.0));
            row.extend((0..6).map(|j| (x.at(k, j), -lin.a_bar[(i, j)])));
            row.extend((0..3).map(|j| (tv.at(k, j), -lin.b_bar[(i, j)])));
            row.extend((0..3).map(|j| (tv.at(k + 1, j), -lin.c_bar[(i, j)])));
            row.push((s.at(k, 0), -lin.d_bar[i]));
            row.push((h.at(k, i), -1.0));
            b.eq(&row, lin.e_bar[i], || format!("dynamics[{k}][{i}]"))?;
        }
    }

    // mass: z_{k+1} − z_k + (T̃_k + T̃_{k+1})/(2(K−1)c) = 0
    let mass_coef = 0.5 * inv_seg / params.exhaust_velocity;
    for k in 0..segs {
        b.eq(
            &[
                (z.at(k + 1, 0), 1.0),
                (z.at(k, 0), -1.0),
                (ts.at(k, 0), mass_coef),
                (ts.at(k + 1, 0), mass_coef),
            ],
            0.0,
            || format!("mass[{k}]"),
        )?;
    }

    for i in 0..6 {
        b.eq(&[(x.at(0, i), 1.0)], params.x_initial[i], || format!("initial_state[{i}]"))?;
    }
    for i in 0..6 {
        b.eq(&[(x.at(segs, i), 1.0)], params.x_final[i], || format!("final_state[{i}]"))?;
    }
    b.eq(&[(z.at(0, 0), 1.0)], params.log_mass_initial, || "initial_mass".into())?;

    let pinned = dilation_radius == 0.0;
    if pinned {
        for k in 0..segs {
            b.eq(&[(s.at(k, 0), 1.0)], reference.dilation[k], || format!("dilation_fixed[{k}]"))?;
        }
    } else {
        let coeffs: Vec<(usize, f64)> = (0..segs).map(|k| (s.at(k, 0), inv_seg)).collect();
        b.eq(&coeffs, params.time_of_flight, || "time_of_flight".into())?;
    }

    // |h| ≤ w
    for k in 0..segs {
        for i in 0..6 {
            b.le(&[(h.at(k, i), 1.0), (w.at(k, i), -1.0)], 0.0, || format!("l1_upper[{k}][{i}]"))?;
            b.le(&[(h.at(k, i), -1.0), (w.at(k, i), -1.0)], 0.0, || format!("l1_lower[{k}][{i}]"))?;
        }
    }

    // linearized thrust bound per node: tsc_k − a_s s − a_z z_k ≤ a_0
    for k in 0..nodes {
        let seg = k.min(segs - 1);
        let tb = linearized_thrust_bound(reference.log_mass[k], reference.dilation[seg], params.thrust_max)
            .map_err(|e| Error::Assembly {
                constraint: format!("thrust_bound[{k}]"),
                reason: e.to_string(),
            })?;
        b.le(
            &[(ts.at(k, 0), 1.0), (s.at(seg, 0), -tb.ds), (z.at(k, 0), -tb.dz)],
            tb.constant,
            || format!("thrust_bound[{k}]"),
        )?;
    }

    // state trust region
    for (k, r) in radii.iter().enumerate() {
        let xr = &reference.states[k];
        for i in 0..6 {
            b.le(&[(x.at(k, i), 1.0)], xr[i] + r[i], || format!("trust_region[{k}][{i}]"))?;
            b.le(&[(x.at(k, i), -1.0)], r[i] - xr[i], || format!("trust_region[{k}][{i}]"))?;
        }
    }

    if !pinned {
        for k in 0..segs {
            let sr = reference.dilation[k];
            b.le(&[(s.at(k, 0), 1.0)], sr + dilation_radius, || format!("dilation_trust_region[{k}]"))?;
            b.le(&[(s.at(k, 0), -1.0)], dilation_radius - sr, || format!("dilation_trust_region[{k}]"))?;
            b.le(&[(s.at(k, 0), -1.0)], 0.0, || format!("dilation_nonnegative[{k}]"))?;
        }
    }

    // ‖T̃vec_k‖ ≤ T̃sc_k
    for k in 0..nodes {
        b.soc(
            &[
                (vec![(ts.at(k, 0), -1.0)], 0.0),
                (vec![(tv.at(k, 0), -1.0)], 0.0),
                (vec![(tv.at(k, 1), -1.0)], 0.0),
                (vec![(tv.at(k, 2), -1.0)], 0.0),
            ],
            || format!("thrust_cone[{k}]"),
        )?;
    }

    Ok(b.build())
}

/// Pack a trajectory and virtual control into a primal vector of the
/// subproblem layout, with `w = |h|`.
pub fn pack(layout: &Layout, traj: &ReferenceTrajectory, virtual_control: &[State]) -> Result<Vec<f64>> {
    traj.validate()?;
    let nodes = traj.nodes();
    if layout.len() != make_layout(nodes).len() || virtual_control.len() != nodes - 1 {
        return Err(Error::Internal("layout does not match trajectory size".into()));
    }
    let mut v = vec![0.0; layout.len()];
    let (x, tv, ts, z, s, h, w) = blocks(layout)?;
    for k in 0..nodes {
        for i in 0..6 {
            v[x.at(k, i)] = traj.states[k][i];
        }
        for i in 0..3 {
            v[tv.at(k, i)] = traj.thrust[k][i];
        }
        v[ts.at(k, 0)] = traj.thrust_bound[k];
        v[z.at(k, 0)] = traj.log_mass[k];
    }
    for k in 0..nodes - 1 {
        v[s.at(k, 0)] = traj.dilation[k];
        for i in 0..6 {
            v[h.at(k, i)] = virtual_control[k][i];
            v[w.at(k, i)] = virtual_control[k][i].abs();
        }
    }
    Ok(v)
}

type Blocks<'a> = (
    &'a crate::conic::Block,
    &'a crate::conic::Block,
    &'a crate::conic::Block,
    &'a crate::conic::Block,
    &'a crate::conic::Block,
    &'a crate::conic::Block,
    &'a crate::conic::Block,
);

fn blocks(layout: &Layout) -> Result<Blocks<'_>> {
    Ok((
        layout.get("x")?,
        layout.get("tvec")?,
        layout.get("tsc")?,
        layout.get("z")?,
        layout.get("s")?,
        layout.get("h")?,
        layout.get("w")?,
    ))
}

/// De-interleave a primal vector into a trajectory and virtual control.
pub fn unpack(layout: &Layout, v: &[f64]) -> Result<(ReferenceTrajectory, Vec<State>)> {
    if v.len() != layout.len() {
        return Err(Error::Internal(format!(
            "primal vector has {} entries, layout {}",
            v.len(),
            layout.len()
        )));
    }
    let (x, tv, ts, z, s, h, _) = blocks(layout)?;
    let nodes = x.rows;
    if tv.rows != nodes || ts.rows != nodes || z.rows != nodes || s.rows + 1 != nodes || h.rows + 1 != nodes {
        return Err(Error::Internal("inconsistent subproblem layout".into()));
    }
    let traj = ReferenceTrajectory {
        states: (0..nodes).map(|k| State::from_fn(|i, _| v[x.at(k, i)])).collect(),
        thrust: (0..nodes).map(|k| Vector3::from_fn(|i, _| v[tv.at(k, i)])).collect(),
        thrust_bound: (0..nodes).map(|k| v[ts.at(k, 0)]).collect(),
        log_mass: (0..nodes).map(|k| v[z.at(k, 0)]).collect(),
        dilation: (0..nodes - 1).map(|k| v[s.at(k, 0)]).collect(),
    };
    let hv = (0..nodes - 1).map(|k| State::from_fn(|i, _| v[h.at(k, i)])).collect();
    Ok((traj, hv))
}

/// `L = (1/(K−1)) Σ (T̃_k + T̃_{k+1})/2 + C Σ|h|`
pub fn convex_cost(traj: &ReferenceTrajectory, virtual_control: &[State], penalty: f64) -> f64 {
    trapezoid(&traj.thrust_bound) + penalty * virtual_control.iter().map(|h| h.abs().sum()).sum::<f64>()
}

/// Integrate the log-mass recursion `z_{k+1} = z_k − (T̃_k + T̃_{k+1})/(2(K−1)c)`.
pub fn log_mass_recursion(z0: f64, thrust_bound: &[f64], exhaust_velocity: f64) -> Vec<f64> {
    let segs = thrust_bound.len().saturating_sub(1).max(1) as f64;
    let mut z = Vec::with_capacity(thrust_bound.len());
    z.push(z0);
    for w in thrust_bound.windows(2) {
        let prev = *z.last().unwrap_or(&z0);
        z.push(prev - (w[0] + w[1]) / (2.0 * segs * exhaust_velocity));
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    /// Absent unless the solver returned an (near-)optimal point.
    pub trajectory: Option<ReferenceTrajectory>,
    pub virtual_control: Vec<State>,
    /// Convex cost `L` recomputed from the extracted variables.
    pub objective: f64,
    pub solver_objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
    pub residuals: Residuals,
}

/// Extract the trajectory from a raw solve. The log-mass is re-derived from
/// the recursion so the mass identity holds to rounding.
pub fn extract_solution(
    program: &ConicProgram,
    raw: &ConicSolution,
    params: &SubproblemParams,
) -> Result<SubproblemSolution> {
    let mut out = SubproblemSolution {
        trajectory: None,
        virtual_control: Vec::new(),
        objective: f64::NAN,
        solver_objective: raw.objective,
        status: raw.status,
        iterations: raw.iterations,
        residuals: raw.residuals,
    };
    if !raw.status.has_solution() {
        return Ok(out);
    }
    let (mut traj, hv) = unpack(&program.layout, &raw.primal)?;
    for t in &mut traj.thrust_bound {
        *t = t.max(0.0);
    }
    traj.log_mass = log_mass_recursion(params.log_mass_initial, &traj.thrust_bound, params.exhaust_velocity);
    let objective = convex_cost(&traj, &hv, params.penalty);
    let scale = 1f64.max(raw.objective.abs());
    if raw.status == SolveStatus::Optimal && (objective - raw.objective).abs() > 1e-6 * scale {
        log::warn!(
            "recomputed convex cost {objective:.12e} differs from solver objective {:.12e} by more than 1e-6 relative",
            raw.objective
        );
    }
    out.trajectory = Some(traj);
    out.virtual_control = hv;
    out.objective = objective;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolverOptions};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix6, Vector3};

    fn toy_reference(nodes: usize) -> ReferenceTrajectory {
        ReferenceTrajectory {
            states: (0..nodes).map(|k| State::repeat(k as f64)).collect(),
            thrust: vec![Vector3::zeros(); nodes],
            thrust_bound: vec![0.0; nodes],
            log_mass: vec![0.0; nodes],
            dilation: vec![1.0; nodes - 1],
        }
    }

    /// Pure drift: x_{k+1} = x_k + B̄T̃_k + C̄T̃_{k+1} + 1·s_k.
    fn toy_lin() -> SegmentLinearization {
        let mut b = crate::dynamics::Matrix6x3::zeros();
        b[(3, 0)] = 0.5;
        b[(4, 1)] = 0.5;
        b[(5, 2)] = 0.5;
        SegmentLinearization {
            a_bar: Matrix6::identity(),
            b_bar: b,
            c_bar: b,
            d_bar: State::repeat(1.0),
            e_bar: State::zeros(),
            stt: None,
            x_end: State::zeros(),
        }
    }

    fn params(nodes: usize) -> SubproblemParams {
        SubproblemParams {
            thrust_max: 1.0,
            exhaust_velocity: 2.0,
            penalty: 5.0,
            time_of_flight: 1.0,
            x_initial: State::zeros(),
            x_final: State::repeat((nodes - 1) as f64),
            log_mass_initial: 0.0,
        }
    }

    #[test]
    fn variable_count_at_three_nodes() {
        let r = toy_reference(3);
        let p = assemble(&r, &[toy_lin(), toy_lin()], &[State::repeat(1.0); 3], 0.1, &params(3)).unwrap();
        assert_eq!(p.num_vars(), 3 * (6 + 3 + 1 + 1) + 2 * (1 + 6) + 2 * 6);
        assert_eq!(p.num_vars(), 59);
        p.validate().unwrap();
    }

    #[test]
    fn thrust_bound_examples() {
        let tb = linearized_thrust_bound(0.3, 2.0, 0.7).unwrap();
        assert_relative_eq!(tb.eval(2.0, 0.3), 0.7 * 2.0 * (-0.3f64).exp(), max_relative = 1e-15);
        let tb = linearized_thrust_bound(0.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(tb.eval(3.0, 0.25), 2.0 * (3.0 - 0.25));
        assert!(linearized_thrust_bound(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let mut r = toy_reference(4);
        r.thrust[2] = Vector3::new(0.1, -0.2, 0.3);
        r.thrust_bound[2] = 0.5;
        r.log_mass = vec![0.0, -0.1, -0.2, -0.25];
        let hv = vec![State::repeat(0.01), State::repeat(-0.02), State::zeros()];
        let layout = make_layout(4);
        let v = pack(&layout, &r, &hv).unwrap();
        let (r2, h2) = unpack(&layout, &v).unwrap();
        assert_eq!(r, r2);
        assert_eq!(hv, h2);
    }

    #[test]
    fn reference_with_defect_control_satisfies_dynamics() {
        let r = toy_reference(3);
        let lins = [toy_lin(), toy_lin()];
        let prm = params(3);
        let p = assemble(&r, &lins, &[State::repeat(1.0); 3], 0.1, &prm).unwrap();
        // h_k = x_{k+1} − prediction
        let hv: Vec<State> = (0..2)
            .map(|k| r.states[k + 1] - lins[k].predict(&r.states[k], &r.thrust[k], &r.thrust[k + 1], r.dilation[k]))
            .collect();
        let v = pack(&p.layout, &r, &hv).unwrap();
        let ax = p.apply(&v);
        let dyn_rows = 12;
        for i in 0..dyn_rows {
            assert!((p.b[i] - ax[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn solves_drift_problem_without_virtual_control() {
        let r = toy_reference(3);
        let prm = params(3);
        let p = assemble(&r, &[toy_lin(), toy_lin()], &[State::repeat(10.0); 3], 0.5, &prm).unwrap();
        let raw = solve(&p, &SolverOptions::default()).unwrap();
        let sol = extract_solution(&p, &raw, &prm).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let t = sol.trajectory.unwrap();
        // s_k = 1 reaches the target with zero thrust
        assert!(sol.objective.abs() < 1e-7);
        assert!(sol.virtual_control.iter().all(|h| h.abs().max() < 1e-7));
        assert_relative_eq!(t.dilation.iter().sum::<f64>() / 2.0, 1.0, epsilon = 1e-8);
        assert_relative_eq!(t.states[2], State::repeat(2.0), epsilon = 1e-8);
    }

    #[test]
    fn pinned_dilation_uses_equalities() {
        let r = toy_reference(3);
        let prm = params(3);
        let p = assemble(&r, &[toy_lin(), toy_lin()], &[State::repeat(10.0); 3], 0.0, &prm).unwrap();
        let raw = solve(&p, &SolverOptions::default()).unwrap();
        let t = extract_solution(&p, &raw, &prm).unwrap().trajectory.unwrap();
        assert_relative_eq!(t.dilation[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(t.dilation[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_subproblem_has_no_arrays() {
        let r = toy_reference(3);
        let mut prm = params(3);
        prm.x_final = State::repeat(100.0);
        let p = assemble(&r, &[toy_lin(), toy_lin()], &[State::repeat(1.0); 3], 0.1, &prm).unwrap();
        let raw = solve(&p, &SolverOptions::default()).unwrap();
        let sol = extract_solution(&p, &raw, &prm).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.trajectory.is_none() && sol.virtual_control.is_empty());
    }

    #[test]
    fn assembly_errors() {
        let r = toy_reference(3);
        let prm = params(3);
        assert!(assemble(&r, &[toy_lin()], &[State::repeat(1.0); 3], 0.1, &prm).is_err());
        assert!(assemble(&r, &[toy_lin(), toy_lin()], &[State::repeat(1.0); 2], 0.1, &prm).is_err());
        let mut bad = toy_lin();
        bad.e_bar[2] = f64::NAN;
        let err = assemble(&r, &[toy_lin(), bad], &[State::repeat(1.0); 3], 0.1, &prm).unwrap_err();
        assert!(matches!(err, Error::Assembly { ref constraint, .. } if constraint == "dynamics[1][2]"), "{err}");
    }

    #[test]
    fn mass_recursion_matches_trapezoid() {
        let tb = [0.1, 0.3, 0.0, 0.2];
        let z = log_mass_recursion(0.0, &tb, 2.0);
        assert_relative_eq!(z[3], -trapezoid(&tb) / 2.0, max_relative = 1e-15);
    }
}
