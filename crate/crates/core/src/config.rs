//! TOML case and sweep configuration.
//!
//! A case file has the tables `model`, `units`, `spacecraft`, `boundary`,
//! `discretization`, `scvx` and optionally `output`; adding a `sweep` table
//! turns it into a sweep file. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::mee::{cartesian_to_mee, unwrap_final_longitude};
use crate::dynamics::{Cr3bp, Mee, Model, ScalingSet, State};
use crate::error::{Error, Result};
use crate::problem::ProblemDef;
use crate::scvx::{MeshMode, NlMode, ScvxOptions};

pub mod bundled {
    pub const CR3BP_HALO: &str = include_str!("../configs/cr3bp_halo.toml");
    pub const EARTH_DIONYSUS: &str = include_str!("../configs/earth_dionysus.toml");
    pub const CR3BP_SWEEP: &str = include_str!("../configs/cr3bp_sweep.toml");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Cr3bp { mass_ratio: f64 },
    Mee { mu_km3_s2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsConfig {
    pub length_km: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecraftConfig {
    /// Initial mass, also the mass unit.
    pub mass_kg: f64,
    pub isp_s: f64,
    pub g0_m_s2: f64,
    pub thrust_max_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryUnits {
    /// Positions in length units, velocities in length/time units.
    #[default]
    Normalized,
    /// Positions in km, velocities in km/s.
    Km,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default)]
    pub units: BoundaryUnits,
    pub r_initial: [f64; 3],
    pub v_initial: [f64; 3],
    pub r_final: [f64; 3],
    pub v_final: [f64; 3],
    pub time_of_flight_days: f64,
    /// Full revolutions added to the final true longitude (element models).
    #[serde(default)]
    pub revolutions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub nodes: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub nodes: Vec<usize>,
    pub mesh: Vec<MeshMode>,
    pub nonlinearity_index: Vec<NlMode>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

impl SweepSpec {
    /// Strategy set, mesh-major.
    pub fn strategies(&self) -> Vec<(MeshMode, NlMode)> {
        self.mesh
            .iter()
            .flat_map(|m| self.nonlinearity_index.iter().map(move |n| (*m, *n)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub model: ModelConfig,
    pub units: UnitsConfig,
    pub spacecraft: SpacecraftConfig,
    pub boundary: BoundaryConfig,
    pub discretization: DiscretizationConfig,
    pub scvx: ScvxOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub case: CaseConfig,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedConfig {
    Case(CaseConfig),
    Sweep(SweepConfig),
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub nodes: Option<usize>,
    pub mesh: Option<MeshMode>,
    pub nonlinearity_index: Option<NlMode>,
    pub max_iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl CaseConfig {
    pub fn validate(&self) -> Result<()> {
        match self.model {
            ModelConfig::Cr3bp { mass_ratio } => {
                if !(mass_ratio > 0.0 && mass_ratio < 0.5) {
                    return Err(Error::Config(format!("model.mass_ratio = {mass_ratio} must lie in (0, 0.5)")));
                }
            }
            ModelConfig::Mee { mu_km3_s2 } => positive("model.mu_km3_s2", mu_km3_s2)?,
        }
        positive("units.length_km", self.units.length_km)?;
        positive("units.time_s", self.units.time_s)?;
        positive("spacecraft.mass_kg", self.spacecraft.mass_kg)?;
        positive("spacecraft.isp_s", self.spacecraft.isp_s)?;
        positive("spacecraft.g0_m_s2", self.spacecraft.g0_m_s2)?;
        positive("spacecraft.thrust_max_n", self.spacecraft.thrust_max_n)?;
        positive("boundary.time_of_flight_days", self.boundary.time_of_flight_days)?;
        let b = &self.boundary;
        if b.r_initial.iter().chain(&b.v_initial).chain(&b.r_final).chain(&b.v_final).any(|v| !v.is_finite()) {
            return Err(Error::Config("boundary vectors must be finite".into()));
        }
        if self.discretization.nodes < 2 {
            return Err(Error::Config(format!(
                "discretization.nodes = {} must be at least 2",
                self.discretization.nodes
            )));
        }
        self.scvx.validate()?;
        if let Some(s) = &self.sweep {
            if s.nodes.is_empty() || s.mesh.is_empty() || s.nonlinearity_index.is_empty() {
                return Err(Error::Config("sweep lists must be non-empty".into()));
            }
            if s.nodes.iter().any(|k| *k < 2) || s.repetitions == 0 {
                return Err(Error::Config("sweep.nodes must be >= 2 and repetitions >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.nodes {
            self.discretization.nodes = k;
        }
        if let Some(m) = o.mesh {
            self.scvx.mesh = m;
        }
        if let Some(n) = o.nonlinearity_index {
            self.scvx.nonlinearity_index = n;
        }
        if let Some(i) = o.max_iterations {
            self.scvx.max_iterations = i;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.output.seed = s;
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }

    pub fn scaling(&self) -> Result<ScalingSet> {
        let (l, t) = (self.units.length_km, self.units.time_s);
        let mu = match self.model {
            ModelConfig::Cr3bp { mass_ratio } => mass_ratio,
            ModelConfig::Mee { mu_km3_s2 } => ScalingSet::normalized_mu(mu_km3_s2, l, t),
        };
        let sc = &self.spacecraft;
        ScalingSet::new(l, t, sc.mass_kg, mu, sc.isp_s, sc.g0_m_s2).map_err(|e| Error::Config(e.to_string()))
    }

    /// Normalize units and convert the boundary to model coordinates.
    pub fn problem(&self) -> Result<ProblemDef> {
        self.validate()?;
        let scaling = self.scaling()?;
        let b = &self.boundary;
        let cart = |r: &[f64; 3], v: &[f64; 3]| -> (Vector3<f64>, Vector3<f64>) {
            let (r, v) = (Vector3::from(*r), Vector3::from(*v));
            match b.units {
                BoundaryUnits::Normalized => (r, v),
                BoundaryUnits::Km => (r.map(|x| scaling.km_to_normalized(x)), v.map(|x| scaling.km_s_to_normalized(x))),
            }
        };
        let (ri, vi) = cart(&b.r_initial, &b.v_initial);
        let (rf, vf) = cart(&b.r_final, &b.v_final);
        let cfg_err = |e: Error| Error::Config(format!("boundary: {e}"));
        let (model, x_initial, x_final) = match self.model {
            ModelConfig::Cr3bp { .. } => {
                let m = Cr3bp::new(scaling.mu).map_err(cfg_err)?;
                let x0 = State::new(ri.x, ri.y, ri.z, vi.x, vi.y, vi.z);
                let xf = State::new(rf.x, rf.y, rf.z, vf.x, vf.y, vf.z);
                (Model::Cr3bp(m), x0, xf)
            }
            ModelConfig::Mee { .. } => {
                let m = Mee::new(scaling.mu).map_err(cfg_err)?;
                let x0 = cartesian_to_mee(&ri, &vi, scaling.mu).map_err(cfg_err)?;
                let mut xf = cartesian_to_mee(&rf, &vf, scaling.mu).map_err(cfg_err)?;
                xf[5] = unwrap_final_longitude(x0[5], xf[5], b.revolutions);
                (Model::Mee(m), x0, xf)
            }
        };
        let problem = ProblemDef {
            model,
            scaling,
            x_initial,
            x_final,
            initial_mass_kg: self.spacecraft.mass_kg,
            thrust_max: scaling.force_to_normalized(self.spacecraft.thrust_max_n),
            time_of_flight: scaling.days_to_normalized(b.time_of_flight_days),
            revolutions: b.revolutions,
        };
        problem.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(problem)
    }
}

impl SweepConfig {
    /// Case-level overrides apply to every cell; a node count, mesh or
    /// index mode on the command line narrows the corresponding sweep list.
    pub fn apply(&mut self, o: &Overrides) {
        self.case.apply(o);
        if let Some(k) = o.nodes {
            self.sweep.nodes = vec![k];
        }
        if let Some(m) = o.mesh {
            self.sweep.mesh = vec![m];
        }
        if let Some(n) = o.nonlinearity_index {
            self.sweep.nonlinearity_index = vec![n];
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut case = self.case.clone();
        case.sweep = Some(self.sweep.clone());
        case.validate()
    }
}

/// Parse configuration text; `origin` names the source in diagnostics.
pub fn parse_config(text: &str, origin: &str) -> Result<LoadedConfig> {
    let mut case: CaseConfig = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    case.validate().map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    Ok(match case.sweep.take() {
        Some(sweep) => LoadedConfig::Sweep(SweepConfig { case, sweep }),
        None => LoadedConfig::Case(case),
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}
