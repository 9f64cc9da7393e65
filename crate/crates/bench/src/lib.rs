//! Fixtures shared by the benchmarks.

use scvx_core::config::{bundled, parse_config, LoadedConfig};
use scvx_core::scvx::initialize_reference;
use scvx_core::{CaseConfig, ProblemDef, ReferenceTrajectory};

pub fn halo_case() -> CaseConfig {
    match parse_config(bundled::CR3BP_HALO, "bundled halo case") {
        Ok(LoadedConfig::Case(c)) => c,
        _ => unreachable!("bundled halo config is a valid single case"),
    }
}

pub fn halo_problem() -> ProblemDef {
    halo_case().problem().expect("bundled halo problem")
}

/// Straight-line reference with a small constant thrust so every term of
/// the linearization is exercised.
pub fn halo_reference(problem: &ProblemDef, nodes: usize) -> ReferenceTrajectory {
    let mut r = initialize_reference(problem, nodes).expect("reference");
    for t in &mut r.thrust {
        t.x = 0.3 * problem.thrust_max;
    }
    for (b, t) in r.thrust_bound.iter_mut().zip(&r.thrust) {
        *b = t.norm();
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        let p = halo_problem();
        let r = halo_reference(&p, 10);
        r.validate().unwrap();
        assert_eq!(r.nodes(), 10);
    }
}
