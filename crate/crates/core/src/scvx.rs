//! The trust-region successive convexification loop.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, SolveStatus, SolverOptions};
use crate::discretization::{compute_defects, discretize, Defects, ReferenceTrajectory, SegmentLinearization};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::nonlinearity::{index_field, NonlinearityField, TrustRegionSpec};
use crate::ode::IntegratorOptions;
use crate::problem::ProblemDef;
use crate::subproblem::{assemble, extract_solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshMode {
    Uniform,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NlMode {
    #[default]
    On,
    Off,
}

impl FromStr for MeshMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(Error::Argument(format!("mesh mode must be uniform|adaptive, got {s:?}"))),
        }
    }
}

impl FromStr for NlMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            _ => Err(Error::Argument(format!("nonlinearity mode must be on|off, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for MeshMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Adaptive => "adaptive",
        })
    }
}

impl std::fmt::Display for NlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::On => "on",
            Self::Off => "off",
        })
    }
}

fn default_max_iterations() -> usize {
    200
}

fn default_max_rejections() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScvxOptions {
    /// Convergence tolerance on the predicted decrease `ΔL`.
    pub tolerance: f64,
    /// Virtual-control penalty `C`.
    pub penalty: f64,
    /// Initial radii `[r^x (6); r^s]`.
    pub trust_region: [f64; 7],
    /// Contraction factor (`r ← r/α`).
    pub alpha: f64,
    /// Expansion factor (`r ← βr`).
    pub beta: f64,
    /// `[ρ₀, ρ₁, ρ₂]`
    pub rho: [f64; 3],
    pub eta: f64,
    pub gamma_clamp: [f64; 2],
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_max_rejections")]
    pub max_rejections: usize,
    #[serde(default)]
    pub mesh: MeshMode,
    #[serde(default)]
    pub nonlinearity_index: NlMode,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    /// When set, every assembled subproblem is written here as
    /// `subproblem_NNN.txt` in the conic dump format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_dir: Option<PathBuf>,
}

impl ScvxOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tolerance > 0.0) {
            return bad(format!("scvx.tolerance = {} must be positive", self.tolerance));
        }
        if !(self.penalty > 0.0) {
            return bad(format!("scvx.penalty = {} must be positive", self.penalty));
        }
        if self.trust_region.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad(format!("scvx.trust_region entries must be positive: {:?}", self.trust_region));
        }
        let [r0, r1, r2] = self.rho;
        if !(0.0 < r0 && r0 < r1 && r1 < r2 && r2 < 1.0) {
            return bad(format!("scvx.rho must satisfy 0 < ρ0 < ρ1 < ρ2 < 1, got {:?}", self.rho));
        }
        if !(self.alpha > 1.0 && self.beta > 1.0) {
            return bad(format!("scvx.alpha = {} and scvx.beta = {} must exceed 1", self.alpha, self.beta));
        }
        if !(self.eta > 0.0) {
            return bad(format!("scvx.eta = {} must be positive", self.eta));
        }
        let [lo, hi] = self.gamma_clamp;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scvx.gamma_clamp must satisfy 0 < min <= max, got {:?}", self.gamma_clamp));
        }
        if self.max_iterations == 0 || self.max_rejections == 0 {
            return bad("scvx.max_iterations and scvx.max_rejections must be positive".into());
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return bad("scvx.solver needs a positive tolerance and iteration limit".into());
        }
        if !(self.integrator.rtol > 0.0 && self.integrator.atol > 0.0) {
            return bad("scvx.integrator tolerances must be positive".into());
        }
        Ok(())
    }

    /// Trust-region scaling parameters for the current radii.
    pub fn trust_spec(&self, radii: &TrustRadii) -> TrustRegionSpec {
        TrustRegionSpec {
            state: radii.state,
            dilation: radii.dilation,
            eta: self.eta,
            gamma_min: self.gamma_clamp[0],
            gamma_max: self.gamma_clamp[1],
        }
    }
}

/// Concatenated radii `r = (r^x, r^s)`, contracted and expanded together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRadii {
    pub state: [f64; 6],
    pub dilation: f64,
}

impl TrustRadii {
    pub fn from_vector(r: &[f64; 7]) -> Self {
        Self {
            state: [r[0], r[1], r[2], r[3], r[4], r[5]],
            dilation: r[6],
        }
    }

    pub fn to_vector(&self) -> [f64; 7] {
        let s = self.state;
        [s[0], s[1], s[2], s[3], s[4], s[5], self.dilation]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            state: self.state.map(|r| r * factor),
            dilation: self.dilation * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOutcome {
    /// `ρ < ρ₀` (or no predicted decrease, or no subproblem solution).
    Reject,
    /// `ρ₀ ≤ ρ < ρ₁`
    AcceptContract,
    /// `ρ₁ ≤ ρ < ρ₂`
    AcceptHold,
    /// `ρ₂ ≤ ρ`
    AcceptExpand,
}

impl StepOutcome {
    pub fn accepted(&self) -> bool {
        !matches!(self, StepOutcome::Reject)
    }
}

/// The four printed cases of the ratio test. NaN ratios are rejections.
pub fn classify_step(rho: f64, thresholds: &[f64; 3]) -> StepOutcome {
    let [r0, r1, r2] = *thresholds;
    if rho.is_nan() || rho < r0 {
        StepOutcome::Reject
    } else if rho < r1 {
        StepOutcome::AcceptContract
    } else if rho < r2 {
        StepOutcome::AcceptHold
    } else {
        StepOutcome::AcceptExpand
    }
}

pub fn update_radii(r: &TrustRadii, outcome: StepOutcome, alpha: f64, beta: f64) -> TrustRadii {
    match outcome {
        StepOutcome::Reject | StepOutcome::AcceptContract => r.scaled(1.0 / alpha),
        StepOutcome::AcceptHold => *r,
        StepOutcome::AcceptExpand => r.scaled(beta),
    }
}

/// `ρ = ΔJ/ΔL`, undefined (`None`) when `ΔL ≤ 0`.
pub fn step_ratio(delta_j: f64, delta_l: f64) -> Option<f64> {
    (delta_l > 0.0).then(|| delta_j / delta_l)
}

/// `J = trapezoid(T̃) + C Σ_k Σ_i E_{k,i}`
pub fn nonlinear_cost(traj: &ReferenceTrajectory, defects: &Defects, penalty: f64) -> f64 {
    traj.thrust_integral() + penalty * defects.l1_sum()
}

/// Straight-line initial guess: states interpolated componentwise between
/// the boundary states, zero thrust, `z = ln(m₀/MU)`, `s = t_f`.
pub fn initialize_reference(problem: &ProblemDef, nodes: usize) -> Result<ReferenceTrajectory> {
    problem.validate()?;
    if nodes < 2 {
        return Err(Error::Argument(format!("need at least 2 nodes, got {nodes}")));
    }
    let segs = (nodes - 1) as f64;
    let states = (0..nodes)
        .map(|k| {
            if k + 1 == nodes {
                problem.x_final
            } else {
                let t = k as f64 / segs;
                problem.x_initial + (problem.x_final - problem.x_initial) * t
            }
        })
        .collect();
    Ok(ReferenceTrajectory {
        states,
        thrust: vec![Vector3::zeros(); nodes],
        thrust_bound: vec![0.0; nodes],
        log_mass: vec![problem.log_mass_initial(); nodes],
        dilation: vec![problem.time_of_flight; nodes - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Convex cost `L` of the subproblem solution (NaN without a solution).
    pub convex_cost: f64,
    /// `J` of the reference before the step.
    pub cost_before: f64,
    /// `J` of the candidate.
    pub cost_after: f64,
    pub delta_j: f64,
    pub delta_l: f64,
    pub rho: f64,
    pub accepted: bool,
    pub outcome: StepOutcome,
    pub solver_status: SolveStatus,
    pub solver_iterations: u32,
    /// Largest relative KKT residual of the subproblem solve.
    pub kkt_residual: f64,
    /// Radii `[r^x; r^s]` used for this subproblem.
    pub radii: [f64; 7],
    /// Largest candidate defect component.
    pub max_defect: f64,
    /// Propellant consumed by the reference after this step (kg).
    pub propellant_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationLimit,
    RejectionLimit,
    /// An unrecoverable error in discretization or assembly.
    Failure(String),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub converged: bool,
    pub termination: Termination,
    pub reference: ReferenceTrajectory,
    pub final_mass_kg: f64,
    pub history: Vec<IterationRecord>,
    pub wall_time: Duration,
    /// Defects of the returned reference.
    pub defects: Defects,
    /// Nonlinearity field of the returned reference.
    pub field: NonlinearityField,
}

impl RunResult {
    pub fn accepted_iterations(&self) -> usize {
        self.history.iter().filter(|r| r.accepted).count()
    }
}

/// Mutable loop state; the reference and its derived data change together.
struct Loop<'a> {
    problem: &'a ProblemDef,
    options: &'a ScvxOptions,
    reference: ReferenceTrajectory,
    defects: Defects,
    cost: f64,
    lins: Vec<SegmentLinearization>,
    field: NonlinearityField,
    radii: TrustRadii,
}

impl<'a> Loop<'a> {
    fn new(problem: &'a ProblemDef, options: &'a ScvxOptions, reference: ReferenceTrajectory) -> Result<Self> {
        let defects = compute_defects(&problem.model, &reference, &options.integrator)?;
        let cost = nonlinear_cost(&reference, &defects, options.penalty);
        let mut this = Self {
            problem,
            options,
            lins: Vec::new(),
            field: NonlinearityField::uniform(reference.nodes() - 1),
            reference,
            defects,
            cost,
            radii: TrustRadii::from_vector(&options.trust_region),
        };
        this.relinearize()?;
        Ok(this)
    }

    fn relinearize(&mut self) -> Result<()> {
        let (model, opts) = (&self.problem.model, &self.options.integrator);
        self.lins = discretize(model, &self.reference, opts)?;
        self.field = match self.options.nonlinearity_index {
            NlMode::Off => NonlinearityField::uniform(self.reference.nodes() - 1),
            NlMode::On => {
                let v = index_field(model, &self.reference, opts)?;
                NonlinearityField::from_indices(v, &self.options.trust_spec(&self.radii))
            }
        };
        Ok(())
    }

    fn step(&mut self, iteration: usize) -> Result<(IterationRecord, bool)> {
        let opts = self.options;
        let params = self.problem.subproblem_params(opts.penalty);
        let node_radii: Vec<State> = self.field.scaled_radii(&self.radii.state);
        let dilation_radius = match opts.mesh {
            MeshMode::Uniform => 0.0,
            MeshMode::Adaptive => self.radii.dilation,
        };
        let program = assemble(&self.reference, &self.lins, &node_radii, dilation_radius, &params)?;
        if let Some(dir) = &opts.dump_dir {
            std::fs::create_dir_all(dir)?;
            let file = std::fs::File::create(dir.join(format!("subproblem_{iteration:03}.txt")))?;
            program.write_dump(std::io::BufWriter::new(file))?;
        }
        let raw = solve(&program, &opts.solver)?;
        let sol = extract_solution(&program, &raw, &params)?;

        let mut record = IterationRecord {
            iteration,
            convex_cost: sol.objective,
            cost_before: self.cost,
            cost_after: f64::NAN,
            delta_j: f64::NAN,
            delta_l: f64::NAN,
            rho: f64::NAN,
            accepted: false,
            outcome: StepOutcome::Reject,
            solver_status: sol.status,
            solver_iterations: sol.iterations,
            kkt_residual: sol.residuals.max(),
            radii: self.radii.to_vector(),
            max_defect: f64::NAN,
            propellant_kg: f64::NAN,
        };

        let mut converged = false;
        let mut candidate = None;
        if let Some(traj) = sol.trajectory {
            let defects = compute_defects(&self.problem.model, &traj, &opts.integrator)?;
            let cost = if defects.is_finite() {
                nonlinear_cost(&traj, &defects, opts.penalty)
            } else {
                f64::INFINITY
            };
            record.cost_after = cost;
            record.max_defect = defects.max();
            record.delta_j = self.cost - cost;
            record.delta_l = self.cost - sol.objective;
            record.rho = step_ratio(record.delta_j, record.delta_l).unwrap_or(f64::NAN);
            record.outcome = classify_step(record.rho, &opts.rho);
            converged = record.delta_l <= opts.tolerance;
            candidate = Some((traj, defects, cost));
        } else {
            log::warn!("iteration {iteration}: subproblem {}; contracting", sol.status);
        }

        // A converging step whose true cost rose by no more than the
        // tolerance is kept even when the ratio is undefined.
        let keep = record.outcome.accepted() || (converged && record.delta_j >= -opts.tolerance);
        converged &= keep;
        record.accepted = keep;
        self.radii = update_radii(&self.radii, record.outcome, opts.alpha, opts.beta);
        if keep {
            let (traj, defects, cost) = candidate.expect("accepted step has a candidate");
            self.reference = traj;
            self.defects = defects;
            self.cost = cost;
            self.relinearize()?;
        }
        record.propellant_kg = self.problem.propellant_kg(&self.reference);
        Ok((record, converged))
    }
}

/// Run the successive convexification loop from the straight-line initial guess.
pub fn run(
    problem: &ProblemDef,
    nodes: usize,
    options: &ScvxOptions,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<RunResult> {
    let reference = initialize_reference(problem, nodes)?;
    run_from(problem, reference, options, sink)
}

/// Run the loop from a caller-supplied reference.
pub fn run_from(
    problem: &ProblemDef,
    reference: ReferenceTrajectory,
    options: &ScvxOptions,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<RunResult> {
    options.validate()?;
    problem.validate()?;
    reference.validate()?;
    let start = Instant::now();
    let mut state = Loop::new(problem, options, reference)?;
    let mut history = Vec::new();
    let mut rejections = 0;
    let mut termination = Termination::IterationLimit;

    for iteration in 1..=options.max_iterations {
        let (record, converged) = match state.step(iteration) {
            Ok(v) => v,
            Err(e) => {
                log::error!("iteration {iteration}: {e}");
                termination = Termination::Failure(e.to_string());
                break;
            }
        };
        log::info!(
            "iter {:>3}  L {:.6e}  J {:.6e}  dL {:+.3e}  rho {:+.3}  {:?}  defect {:.2e}",
            iteration,
            record.convex_cost,
            record.cost_after,
            record.delta_l,
            record.rho,
            record.outcome,
            record.max_defect
        );
        sink(&record);
        rejections = if record.accepted { 0 } else { rejections + 1 };
        history.push(record);
        if converged {
            termination = Termination::Converged;
            break;
        }
        if rejections >= options.max_rejections {
            termination = Termination::RejectionLimit;
            break;
        }
    }

    let reference = state.reference;
    Ok(RunResult {
        converged: termination == Termination::Converged,
        termination,
        final_mass_kg: problem.mass_kg(reference.log_mass[reference.nodes() - 1]),
        reference,
        history,
        wall_time: start.elapsed(),
        defects: state.defects,
        field: state.field,
    })
}
