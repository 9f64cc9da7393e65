//! Run artifacts: CSV tables, a TOML summary and plot-data files.
//!
//! Every float is written in shortest round-trip form, so identical runs
//! produce byte-identical CSV files. Headers carry units in brackets.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::discretization::{propagate_nonlinear, ReferenceTrajectory, SegmentInputs};
use crate::dynamics::scaling::SECONDS_PER_DAY;
use crate::dynamics::{Model, State};
use crate::error::{Error, Result};
use crate::ode::IntegratorOptions;
use crate::problem::ProblemDef;
use crate::scvx::{IterationRecord, MeshMode, NlMode, RunResult, Termination};

pub const TRAJECTORY: &str = "trajectory.csv";
pub const ITERATIONS: &str = "iterations.csv";
pub const SUMMARY: &str = "summary.toml";
pub const COST_HISTORY: &str = "cost_history.csv";
pub const TRAJECTORY_3D: &str = "trajectory_3d.csv";
pub const THRUST_PROFILE: &str = "thrust_profile.csv";
pub const MASS_PROFILE: &str = "mass_profile.csv";
pub const SWEEP: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub nodes: usize,
    pub mesh: MeshMode,
    pub nonlinearity_index: NlMode,
    pub seed: u64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub accepted_iterations: usize,
    pub initial_mass_kg: f64,
    pub final_mass_kg: f64,
    pub propellant_kg: f64,
    pub max_defect: f64,
    pub max_thrust_n: f64,
    pub switches: usize,
    pub wall_time_s: f64,
}

/// Identifies one run for the summary and sweep tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLabel {
    pub nodes: usize,
    pub mesh: MeshMode,
    pub nonlinearity_index: NlMode,
    pub seed: u64,
}

/// Number of crossings of `threshold` by the node sequence. Values at or
/// above the threshold count as "on".
pub fn count_switches(values: &[f64], threshold: f64) -> usize {
    values
        .windows(2)
        .filter(|w| (w[0] >= threshold) != (w[1] >= threshold))
        .count()
}

pub fn thrust_profile_newtons(problem: &ProblemDef, traj: &ReferenceTrajectory) -> Vec<f64> {
    (0..traj.nodes()).map(|k| problem.thrust_newtons(traj, k)).collect()
}

pub fn summarize(problem: &ProblemDef, result: &RunResult, label: RunLabel) -> Summary {
    let traj = &result.reference;
    let thrust = thrust_profile_newtons(problem, traj);
    Summary {
        model: problem.model.name().to_string(),
        nodes: label.nodes,
        mesh: label.mesh,
        nonlinearity_index: label.nonlinearity_index,
        seed: label.seed,
        converged: result.converged,
        termination: result.termination.clone(),
        iterations: result.history.len(),
        accepted_iterations: result.accepted_iterations(),
        initial_mass_kg: problem.initial_mass_kg,
        final_mass_kg: result.final_mass_kg,
        propellant_kg: problem.initial_mass_kg - result.final_mass_kg,
        max_defect: result.defects.max(),
        max_thrust_n: thrust.iter().copied().fold(0.0, f64::max),
        switches: count_switches(&thrust, 0.5 * problem.thrust_max_newtons()),
        wall_time_s: result.wall_time.as_secs_f64(),
    }
}

fn state_units(model: &Model) -> [&'static str; 6] {
    match model {
        Model::Cr3bp(_) => ["LU", "LU", "LU", "LU/TU", "LU/TU", "LU/TU"],
        Model::Mee(_) => ["LU", "-", "-", "-", "-", "rad"],
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_trajectory(path: &Path, problem: &ProblemDef, traj: &ReferenceTrajectory) -> Result<()> {
    let grid = traj.grid()?;
    let mut w = writer(path)?;
    let mut header = vec!["node".to_string(), "tau [-]".to_string()];
    for (l, u) in problem.model.state_labels().iter().zip(state_units(&problem.model)) {
        header.push(format!("{l} [{u}]"));
    }
    for axis in ["x", "y", "z"] {
        header.push(format!("thrust_{axis} [dilated normalized]"));
    }
    header.extend(["thrust [N]", "mass [kg]", "s [TU]"].map(String::from));
    w.write_record(&header)?;
    for k in 0..traj.nodes() {
        let mut row = vec![k.to_string(), fmt(grid.tau(k))];
        row.extend(traj.states[k].iter().map(|&v| fmt(v)));
        row.extend(traj.thrust[k].iter().map(|&v| fmt(v)));
        row.push(fmt(problem.thrust_newtons(traj, k)));
        row.push(fmt(problem.mass_kg(traj.log_mass[k])));
        row.push(fmt(traj.node_dilation(k)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = [
        "iteration",
        "L [-]",
        "J_before [-]",
        "J_after [-]",
        "delta_J [-]",
        "delta_L [-]",
        "rho [-]",
        "accepted",
        "outcome",
        "solver_status",
        "solver_iterations",
        "kkt_residual [-]",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=6).map(|i| format!("r_x{i} [normalized]")));
    header.extend(["r_s [TU]", "max_defect [normalized]", "propellant [kg]"].map(String::from));
    w.write_record(&header)?;
    for r in history {
        let mut row = vec![
            r.iteration.to_string(),
            fmt(r.convex_cost),
            fmt(r.cost_before),
            fmt(r.cost_after),
            fmt(r.delta_j),
            fmt(r.delta_l),
            fmt(r.rho),
            r.accepted.to_string(),
            format!("{:?}", r.outcome),
            r.solver_status.to_string(),
            r.solver_iterations.to_string(),
            fmt(r.kkt_residual),
        ];
        row.extend(r.radii.iter().map(|&v| fmt(v)));
        row.push(fmt(r.max_defect));
        row.push(fmt(r.propellant_kg));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = toml::to_string(summary).map_err(|e| Error::Internal(format!("summary: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Write the run tables, summary and plot data into `dir`.
pub fn write_run(
    dir: &Path,
    problem: &ProblemDef,
    result: &RunResult,
    label: RunLabel,
    integrator: &IntegratorOptions,
) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    write_trajectory(&dir.join(TRAJECTORY), problem, &result.reference)?;
    write_iterations(&dir.join(ITERATIONS), &result.history)?;
    let summary = summarize(problem, result, label);
    write_summary(&dir.join(SUMMARY), &summary)?;
    emit_plotdata(dir, problem, integrator)?;
    Ok(summary)
}

/// Trajectory table as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub tau: Vec<f64>,
    pub states: Vec<State>,
    pub thrust: Vec<Vector3<f64>>,
    pub thrust_n: Vec<f64>,
    pub mass_kg: Vec<f64>,
    pub dilation: Vec<f64>,
}

fn open(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(Error::Io(format!("missing artifact {}", path.display())));
    }
    Ok(csv::Reader::from_path(path)?)
}

fn parse_row(record: &csv::StringRecord, path: &Path, expected: usize) -> Result<Vec<f64>> {
    if record.len() != expected {
        return Err(Error::Io(format!(
            "{}: row has {} columns, expected {expected}",
            path.display(),
            record.len()
        )));
    }
    record
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Io(format!("{}: bad number {f:?}", path.display())))
        })
        .collect()
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let mut r = open(path)?;
    let mut t = TrajectoryTable {
        tau: Vec::new(),
        states: Vec::new(),
        thrust: Vec::new(),
        thrust_n: Vec::new(),
        mass_kg: Vec::new(),
        dilation: Vec::new(),
    };
    for record in r.records() {
        let v = parse_row(&record?, path, 14)?;
        t.tau.push(v[1]);
        t.states.push(State::from_column_slice(&v[2..8]));
        t.thrust.push(Vector3::new(v[8], v[9], v[10]));
        t.thrust_n.push(v[11]);
        t.mass_kg.push(v[12]);
        t.dilation.push(v[13]);
    }
    if t.tau.len() < 2 {
        return Err(Error::Io(format!("{}: fewer than two nodes", path.display())));
    }
    Ok(t)
}

/// Propagate the nonlinear dynamics from the first node under the tabulated
/// control only, never resetting to the optimized states.
pub fn verification_propagation(
    model: &Model,
    table: &TrajectoryTable,
    opts: &IntegratorOptions,
) -> Result<Vec<State>> {
    let mut out = vec![table.states[0]];
    for k in 0..table.tau.len() - 1 {
        let seg = SegmentInputs {
            x0: out[k],
            thrust0: table.thrust[k],
            thrust1: table.thrust[k + 1],
            dilation: table.dilation[k],
            dtau: table.tau[k + 1] - table.tau[k],
        };
        out.push(propagate_nonlinear(model, &seg, opts).map_err(|e| e.on_segment(k))?);
    }
    Ok(out)
}

/// Derive the four plot-data files from the run tables already in `dir`.
pub fn emit_plotdata(dir: &Path, problem: &ProblemDef, opts: &IntegratorOptions) -> Result<()> {
    let table = read_trajectory(&dir.join(TRAJECTORY))?;

    let iter_path = dir.join(ITERATIONS);
    let mut r = open(&iter_path)?;
    let mut w = writer(&dir.join(COST_HISTORY))?;
    w.write_record(["iteration", "L [-]", "J_before [-]", "J_after [-]", "accepted"])?;
    for record in r.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        w.write_record([field(0), field(1), field(2), field(3), field(7)])?;
    }
    w.flush()?;

    let verify = verification_propagation(&problem.model, &table, opts)?;
    let mut w = writer(&dir.join(TRAJECTORY_3D))?;
    w.write_record([
        "node",
        "tau [-]",
        "x [LU]",
        "y [LU]",
        "z [LU]",
        "x_verify [LU]",
        "y_verify [LU]",
        "z_verify [LU]",
        "position_error [LU]",
    ])?;
    for (k, (x, xv)) in table.states.iter().zip(&verify).enumerate() {
        let (p, pv) = (problem.model.position(x), problem.model.position(xv));
        let mut row = vec![k.to_string(), fmt(table.tau[k])];
        row.extend(p.iter().chain(pv.iter()).map(|&v| fmt(v)));
        row.push(fmt((p - pv).norm()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let tmax = problem.thrust_max_newtons();
    let mut w = writer(&dir.join(THRUST_PROFILE))?;
    w.write_record(["node", "tau [-]", "thrust [N]", "thrust_max [N]"])?;
    for (k, t) in table.thrust_n.iter().enumerate() {
        w.write_record([k.to_string(), fmt(table.tau[k]), fmt(*t), fmt(tmax)])?;
    }
    w.flush()?;

    // Physical time from the dilation: t_{k+1} = t_k + s_k Δτ.
    let mut w = writer(&dir.join(MASS_PROFILE))?;
    w.write_record(["node", "tau [-]", "time [days]", "mass [kg]"])?;
    let day = SECONDS_PER_DAY / problem.scaling.time_s;
    let mut t = 0.0;
    for (k, m) in table.mass_kg.iter().enumerate() {
        if k > 0 {
            t += table.dilation[k - 1] * (table.tau[k] - table.tau[k - 1]);
        }
        w.write_record([k.to_string(), fmt(table.tau[k]), fmt(t / day), fmt(*m)])?;
    }
    w.flush()?;
    Ok(())
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: RunLabel,
    pub repetition: usize,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub accepted_iterations: usize,
    pub final_mass_kg: f64,
    pub propellant_kg: f64,
    pub max_defect: f64,
    pub switches: usize,
}

impl SweepRow {
    pub fn from_summary(s: &Summary, repetition: usize) -> Self {
        Self {
            label: RunLabel {
                nodes: s.nodes,
                mesh: s.mesh,
                nonlinearity_index: s.nonlinearity_index,
                seed: s.seed,
            },
            repetition,
            converged: s.converged,
            termination: termination_tag(&s.termination),
            iterations: s.iterations,
            accepted_iterations: s.accepted_iterations,
            final_mass_kg: s.final_mass_kg,
            propellant_kg: s.propellant_kg,
            max_defect: s.max_defect,
            switches: s.switches,
        }
    }

    /// A cell that failed before producing a result.
    pub fn failed(label: RunLabel, repetition: usize) -> Self {
        Self {
            label,
            repetition,
            converged: false,
            termination: "failure".into(),
            iterations: 0,
            accepted_iterations: 0,
            final_mass_kg: f64::NAN,
            propellant_kg: f64::NAN,
            max_defect: f64::NAN,
            switches: 0,
        }
    }
}

fn termination_tag(t: &Termination) -> String {
    match t {
        Termination::Converged => "converged",
        Termination::IterationLimit => "iteration-limit",
        Termination::RejectionLimit => "rejection-limit",
        Termination::Failure(_) => "failure",
    }
    .to_string()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "nodes",
        "mesh",
        "nl_index",
        "repetition",
        "seed",
        "converged",
        "termination",
        "iterations",
        "accepted_iterations",
        "final_mass [kg]",
        "propellant [kg]",
        "max_defect [normalized]",
        "switches",
    ])?;
    for r in rows {
        w.write_record([
            r.label.nodes.to_string(),
            r.label.mesh.to_string(),
            r.label.nonlinearity_index.to_string(),
            r.repetition.to_string(),
            r.label.seed.to_string(),
            r.converged.to_string(),
            r.termination.clone(),
            r.iterations.to_string(),
            r.accepted_iterations.to_string(),
            fmt(r.final_mass_kg),
            fmt(r.propellant_kg),
            fmt(r.max_defect),
            r.switches.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switch_counting() {
        assert_eq!(count_switches(&[], 0.5), 0);
        assert_eq!(count_switches(&[1.0, 1.0, 0.0, 0.0, 1.0], 0.5), 2);
        // bang-off-bang with a boundary-touching node
        assert_eq!(count_switches(&[1.0, 0.5, 0.0, 0.2, 0.9, 1.0], 0.5), 2);
        assert_eq!(count_switches(&[0.0, 0.4, 0.49], 0.5), 0);
    }

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, 2.718281828459045e-17, -4.5e300] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn missing_artifacts_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_trajectory(&dir.path().join(TRAJECTORY)).unwrap_err();
        assert!(err.to_string().contains("missing artifact"), "{err}");
    }

    #[test]
    fn sweep_rows_written_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let label = RunLabel {
            nodes: 25,
            mesh: MeshMode::Uniform,
            nonlinearity_index: NlMode::Off,
            seed: 7,
        };
        let rows = vec![SweepRow::failed(label, 0), SweepRow::failed(RunLabel { nodes: 50, ..label }, 0)];
        let path = dir.path().join(SWEEP);
        write_sweep(&path, &rows).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("nodes,mesh,nl_index"));
        assert!(lines[1].starts_with("25,uniform,off,0,7,false,failure"));
        assert!(lines[2].starts_with("50,"));
    }
}
