//! Conic programs of the form
//!
//! ```text
//! minimize    cᵀx
//! subject to  Ax + s = b,   s ∈ K = K₁ × … × K_p
//! ```
//!
//! with each `Kᵢ` the zero cone, the nonnegative orthant or a second-order
//! cone `{(t, u) : ‖u‖₂ ≤ t}`. Solved by Clarabel; KKT residuals are
//! recomputed here on the unscaled data.

use std::io::{BufRead, Write};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonneg(n) | Cone::Soc(n) => n,
        }
    }

    fn keyword(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonneg(_) => "nonneg",
            Cone::Soc(_) => "soc",
        }
    }
}

/// Named, row-major block of decision variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols, "{}[{r},{c}] out of range", self.name);
        self.offset + r * self.cols + c
    }

    pub fn slice<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.offset..self.offset + self.len()]
    }
}

/// Variable layout: contiguous blocks covering `0..n` exactly once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn push(&mut self, name: &str, rows: usize, cols: usize) -> Block {
        let block = Block {
            name: name.to_string(),
            offset: self.len(),
            rows,
            cols,
        };
        self.blocks.push(block.clone());
        block
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Internal(format!("no variable block named {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    /// Sparse `A` as (row, col, value) triplets; duplicates are summed.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub layout: Layout,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.num_vars(), self.num_rows());
        let cone_rows: usize = self.cones.iter().map(Cone::dim).sum();
        if cone_rows != m {
            return Err(Error::Argument(format!("cones cover {cone_rows} rows but b has {m}")));
        }
        if let Some(Cone::Soc(d)) = self.cones.iter().find(|c| matches!(c, Cone::Soc(d) if *d < 1)) {
            return Err(Error::Argument(format!("second-order cone of dimension {d}")));
        }
        if !self.layout.is_empty() && self.layout.len() != n {
            return Err(Error::Argument(format!("layout covers {} of {n} variables", self.layout.len())));
        }
        if let Some(&(i, j, v)) = self.a.iter().find(|&&(i, j, v)| i >= m || j >= n || !v.is_finite()) {
            return Err(Error::Argument(format!("bad matrix entry ({i}, {j}, {v}) for {m}×{n}")));
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite objective or right-hand side".into()));
        }
        Ok(())
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.num_rows()];
        for &(i, j, v) in &self.a {
            y[i] += v * x[j];
        }
        y
    }

    /// `y = Aᵀ z`
    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.num_vars()];
        for &(i, j, v) in &self.a {
            y[j] += v * z[i];
        }
        y
    }

    /// Largest violation of `b − Ax ∈ K`.
    pub fn cone_violation(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        let s: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        cone_violation(&self.cones, &s)
    }

    /// Write the plain-text dump: a header with dimensions and the cone list,
    /// then `objective`, `rhs` and `matrix` sections of index/value lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# conic program: minimize c'x s.t. Ax + s = b, s in K")?;
        writeln!(w, "variables {}", self.num_vars())?;
        writeln!(w, "rows {}", self.num_rows())?;
        writeln!(w, "nnz {}", self.a.len())?;
        writeln!(w, "cones {}", self.cones.len())?;
        for cone in &self.cones {
            writeln!(w, "{} {}", cone.keyword(), cone.dim())?;
        }
        writeln!(w, "objective")?;
        for (j, v) in self.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "{j} {v:e}")?;
        }
        writeln!(w, "rhs")?;
        for (i, v) in self.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "{i} {v:e}")?;
        }
        writeln!(w, "matrix")?;
        for &(i, j, v) in &self.a {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty() || s.starts_with('#')));
        let bad = |line: usize, msg: &str| Error::Config(format!("dump line {line}: {msg}"));
        let mut next = || -> Result<(usize, String)> {
            lines
                .next()
                .ok_or_else(|| Error::Config("unexpected end of dump".into()))?
                .map_err(Error::from)
        };
        let mut header = |key: &str| -> Result<usize> {
            let (n, l) = next()?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(n, &format!("expected `{key}`")));
            }
            it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(n, "bad count"))
        };
        let n = header("variables")?;
        let m = header("rows")?;
        let nnz = header("nnz")?;
        let ncones = header("cones")?;
        drop(header);

        let mut cones = Vec::with_capacity(ncones);
        for _ in 0..ncones {
            let (ln, l) = next()?;
            let mut it = l.split_whitespace();
            let kind = it.next().unwrap_or_default();
            let dim: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad cone dimension"))?;
            cones.push(match kind {
                "zero" => Cone::Zero(dim),
                "nonneg" => Cone::Nonneg(dim),
                "soc" => Cone::Soc(dim),
                other => return Err(bad(ln, &format!("unknown cone `{other}`"))),
            });
        }

        let mut c = vec![0.0; n];
        let mut b = vec![0.0; m];
        let mut a = Vec::with_capacity(nnz);
        let mut section = "";
        for item in lines {
            let (ln, l) = item?;
            let l = l.trim();
            if matches!(l, "objective" | "rhs" | "matrix") {
                section = if l == "objective" { "objective" } else if l == "rhs" { "rhs" } else { "matrix" };
                continue;
            }
            let f: Vec<&str> = l.split_whitespace().collect();
            let idx = |k: usize, bound: usize| -> Result<usize> {
                f.get(k)
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|v| *v < bound)
                    .ok_or_else(|| bad(ln, "index missing or out of range"))
            };
            let val = |k: usize| -> Result<f64> {
                f.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad value"))
            };
            match (section, f.len()) {
                ("objective", 2) => c[idx(0, n)?] = val(1)?,
                ("rhs", 2) => b[idx(0, m)?] = val(1)?,
                ("matrix", 3) => a.push((idx(0, m)?, idx(1, n)?, val(2)?)),
                _ => return Err(bad(ln, "unexpected line")),
            }
        }
        if a.len() != nnz {
            return Err(Error::Config(format!("dump declares {nnz} entries but holds {}", a.len())));
        }
        let program = Self {
            c,
            a,
            b,
            cones,
            layout: Layout::default(),
        };
        program.validate()?;
        Ok(program)
    }
}

fn cone_violation(cones: &[Cone], s: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let mut off = 0;
    for cone in cones {
        let seg = &s[off..off + cone.dim()];
        let v = match cone {
            Cone::Zero(_) => seg.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Cone::Nonneg(_) => seg.iter().fold(0.0f64, |m, v| m.max(-v)),
            Cone::Soc(_) => {
                let tail = seg[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                tail - seg[0]
            }
        };
        worst = worst.max(v);
        off += cone.dim();
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near-optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        })
    }
}

/// Relative KKT residuals on the unscaled data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Ax + s − b‖∞ / max(1, ‖b‖∞, ‖Ax‖∞, ‖s‖∞)`
    pub primal: f64,
    /// `‖Aᵀz + c‖∞ / max(1, ‖c‖∞, ‖Aᵀz‖∞)`
    pub dual: f64,
    /// `|cᵀx + bᵀz| / max(1, min(|cᵀx|, |bᵀz|))`
    pub gap: f64,
    /// Largest cone-membership violation of `b − Ax`, relative like `primal`.
    pub cone: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap).max(self.cone)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub slack: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn kkt_residuals(program: &ConicProgram, x: &[f64], s: &[f64], z: &[f64]) -> Residuals {
    let ax = program.apply(x);
    let rp: Vec<f64> = (0..program.num_rows()).map(|i| ax[i] + s[i] - program.b[i]).collect();
    let atz = program.apply_transpose(z);
    let rd: Vec<f64> = atz.iter().zip(&program.c).map(|(a, c)| a + c).collect();
    let pobj = dot(&program.c, x);
    let dobj = -dot(&program.b, z);
    Residuals {
        primal: inf_norm(&rp) / 1f64.max(inf_norm(&program.b)).max(inf_norm(&ax)).max(inf_norm(s)),
        dual: inf_norm(&rd) / 1f64.max(inf_norm(&program.c)).max(inf_norm(&atz)),
        gap: (pobj - dobj).abs() / 1f64.max(pobj.abs().min(dobj.abs())),
        cone: program.cone_violation(x) / 1f64.max(inf_norm(&program.b)).max(inf_norm(&ax)),
    }
}

fn csc(program: &ConicProgram) -> CscMatrix<f64> {
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in &program.a {
        rows.push(i);
        cols.push(j);
        vals.push(v);
    }
    CscMatrix::new_from_triplets(program.num_rows(), program.num_vars(), rows, cols, vals)
}

/// Solve with the interior-point backend. Deterministic for fixed input.
pub fn solve(program: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    program.validate()?;
    let n = program.num_vars();
    let p = CscMatrix::<f64>::zeros((n, n));
    let a = csc(program);
    let cones: Vec<SupportedConeT<f64>> = program
        .cones
        .iter()
        .map(|c| match *c {
            Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
            Cone::Nonneg(d) => SupportedConeT::NonnegativeConeT(d),
            Cone::Soc(d) => SupportedConeT::SecondOrderConeT(d),
        })
        .collect();
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iterations)
        .tol_gap_abs(opts.tolerance)
        .tol_gap_rel(opts.tolerance)
        .tol_feas(opts.tolerance)
        .tol_ktratio(opts.tolerance)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e}")))?;
    let mut solver = DefaultSolver::new(&p, &program.c, &a, &program.b, &cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let residuals = kkt_residuals(program, &sol.x, &sol.s, &sol.z);
    Ok(ConicSolution {
        objective: dot(&program.c, &sol.x),
        primal: sol.x.clone(),
        dual: sol.z.clone(),
        slack: sol.s.clone(),
        status,
        iterations: sol.iterations,
        residuals,
    })
}

/// Incremental builder for programs with labelled constraint families.
/// Rows are appended in order; adjacent rows of the same kind share a cone.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    c: Vec<f64>,
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
    layout: Layout,
}

impl ProgramBuilder {
    pub fn new(layout: Layout) -> Self {
        Self {
            c: vec![0.0; layout.len()],
            layout,
            ..Self::default()
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn set_cost(&mut self, var: usize, value: f64, label: &str) -> Result<()> {
        check(value, label)?;
        self.c[var] += value;
        Ok(())
    }

    fn push_row(&mut self, coeffs: &[(usize, f64)], rhs: f64, label: &dyn Fn() -> String) -> Result<()> {
        if !rhs.is_finite() || coeffs.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::Assembly {
                constraint: label(),
                reason: "non-finite coefficient".into(),
            });
        }
        let row = self.b.len();
        self.a.extend(coeffs.iter().filter(|(_, v)| *v != 0.0).map(|&(j, v)| (row, j, v)));
        self.b.push(rhs);
        Ok(())
    }

    fn extend_cone(&mut self, cone: Cone) {
        match (self.cones.last_mut(), cone) {
            (Some(Cone::Zero(n)), Cone::Zero(d)) | (Some(Cone::Nonneg(n)), Cone::Nonneg(d)) => *n += d,
            _ => self.cones.push(cone),
        }
    }

    /// `Σ aⱼxⱼ = rhs`
    pub fn eq(&mut self, coeffs: &[(usize, f64)], rhs: f64, label: impl Fn() -> String) -> Result<()> {
        self.push_row(coeffs, rhs, &label)?;
        self.extend_cone(Cone::Zero(1));
        Ok(())
    }

    /// `Σ aⱼxⱼ ≤ rhs`
    pub fn le(&mut self, coeffs: &[(usize, f64)], rhs: f64, label: impl Fn() -> String) -> Result<()> {
        self.push_row(coeffs, rhs, &label)?;
        self.extend_cone(Cone::Nonneg(1));
        Ok(())
    }

    /// `‖(r₁ − a₁ᵀx, …)‖₂ ≤ r₀ − a₀ᵀx`, each row given as `(coeffs, rhs)`.
    pub fn soc(&mut self, rows: &[(Vec<(usize, f64)>, f64)], label: impl Fn() -> String) -> Result<()> {
        for (coeffs, rhs) in rows {
            self.push_row(coeffs, *rhs, &label)?;
        }
        self.cones.push(Cone::Soc(rows.len()));
        Ok(())
    }

    pub fn build(self) -> ConicProgram {
        ConicProgram {
            c: self.c,
            a: self.a,
            b: self.b,
            cones: self.cones,
            layout: self.layout,
        }
    }
}

fn check(value: f64, label: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Assembly {
            constraint: label.to_string(),
            reason: format!("non-finite coefficient {value}"),
        })
    }
}
