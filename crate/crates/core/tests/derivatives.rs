//! Finite-difference checks of the analytic derivative stack. Every oracle
//! here uses only `eval` or plain propagation.

mod common;

use scvx_core::dynamics::{Cr3bp, Mee, Model};

use common::{derivative_errors, segments, stm_error, stt_error, tight};

#[test]
fn cr3bp_jacobian_and_hessian_match_finite_differences() {
    let [ea, ed, eb, eh] = derivative_errors(&Model::Cr3bp(Cr3bp::earth_moon()), 11);
    assert!(ea < 1e-5 && ed < 1e-5 && eb < 1e-5, "jacobian errors {ea:e}/{ed:e}/{eb:e}");
    assert!(eh < 1e-4, "hessian error {eh:e}");
}

#[test]
fn mee_jacobian_and_hessian_match_finite_differences() {
    let [ea, ed, eb, eh] = derivative_errors(&Model::Mee(Mee::new(1.0).unwrap()), 12);
    assert!(ea < 1e-5 && ed < 1e-5 && eb < 1e-5, "jacobian errors {ea:e}/{ed:e}/{eb:e}");
    assert!(eh < 1e-4, "hessian error {eh:e}");
}

#[test]
fn stm_matches_finite_differences_of_the_flow() {
    for (model, seg) in segments() {
        let err = stm_error(&model, &seg, &tight());
        assert!(err < 1e-4, "{} STM error {err:e}", model.name());
    }
}

#[test]
fn stt_matches_finite_differences_of_the_stm() {
    for (model, seg) in segments() {
        let (err, asym) = stt_error(&model, &seg, &tight());
        assert!(err < 1e-4, "{} STT error {err:e}", model.name());
        assert!(asym < 1e-9, "STT not symmetric in trailing indices");
    }
}

#[test]
fn stt_carries_the_stm() {
    use scvx_core::nonlinearity::{propagate_stm, propagate_stt};
    for (model, seg) in segments() {
        let (phi, _) = propagate_stt(&model, &seg, &tight()).unwrap();
        let phi_only = propagate_stm(&model, &seg, &tight()).unwrap();
        assert!((phi - phi_only).abs().max() < 1e-12);
    }
}
