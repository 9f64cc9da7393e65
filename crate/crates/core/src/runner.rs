//! Case and sweep execution with artifact output.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{CaseConfig, SweepConfig};
use crate::error::Result;
use crate::report::{self, RunLabel, Summary, SweepRow};
use crate::scvx::{run, IterationRecord, RunResult};

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub summary: Summary,
    pub result: RunResult,
}

/// Solve one case and write its artifacts into `dir`. Artifacts are written
/// whether or not the run converged.
pub fn run_case(
    case: &CaseConfig,
    dir: &Path,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<CaseOutcome> {
    let problem = case.problem()?;
    let nodes = case.discretization.nodes;
    let result = run(&problem, nodes, &case.scvx, sink)?;
    let label = RunLabel {
        nodes,
        mesh: case.scvx.mesh,
        nonlinearity_index: case.scvx.nonlinearity_index,
        seed: case.output.seed,
    };
    let summary = report::write_run(dir, &problem, &result, label, &case.scvx.integrator)?;
    Ok(CaseOutcome { summary, result })
}

/// A single cell of a sweep, fully resolved.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub case: CaseConfig,
    pub repetition: usize,
    pub dir: PathBuf,
}

impl SweepCell {
    pub fn label(&self) -> RunLabel {
        RunLabel {
            nodes: self.case.discretization.nodes,
            mesh: self.case.scvx.mesh,
            nonlinearity_index: self.case.scvx.nonlinearity_index,
            seed: self.case.output.seed,
        }
    }
}

/// Cells in row order: node count, then mesh, then index mode, then repetition.
pub fn sweep_cells(cfg: &SweepConfig) -> Vec<SweepCell> {
    let root = &cfg.case.output.dir;
    let mut cells = Vec::new();
    for &nodes in &cfg.sweep.nodes {
        for (mesh, nl) in cfg.sweep.strategies() {
            for repetition in 0..cfg.sweep.repetitions {
                let mut case = cfg.case.clone();
                case.discretization.nodes = nodes;
                case.scvx.mesh = mesh;
                case.scvx.nonlinearity_index = nl;
                case.output.seed = cfg.case.output.seed.wrapping_add(repetition as u64);
                let dir = root.join(format!("K{nodes:04}_{mesh}_nl-{nl}_r{repetition}"));
                case.output.dir = dir.clone();
                cells.push(SweepCell { case, repetition, dir });
            }
        }
    }
    cells
}

/// Run every cell, optionally in parallel, and write `sweep.csv` once at
/// the end. A failing cell becomes a non-converged row.
pub fn run_sweep(cfg: &SweepConfig, parallel: bool) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(cfg);
    let run_cell = |cell: &SweepCell| -> SweepRow {
        match run_case(&cell.case, &cell.dir, &mut |_| {}) {
            Ok(out) => SweepRow::from_summary(&out.summary, cell.repetition),
            Err(e) => {
                log::error!("sweep cell {}: {e}", cell.dir.display());
                SweepRow::failed(cell.label(), cell.repetition)
            }
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        cells.par_iter().map(run_cell).collect()
    } else {
        cells.iter().map(run_cell).collect()
    };
    std::fs::create_dir_all(&cfg.case.output.dir)?;
    report::write_sweep(&cfg.case.output.dir.join(report::SWEEP), &rows)?;
    Ok(rows)
}
