//! The full runtime check suite must pass on a fresh build, and must
//! catch a deliberately broken stroke operator (mutation test).

use mstk_core::verify::{run, stroke_checks, VerifyOptions};

#[test]
fn full_suite_is_green() {
    let reports = run(&VerifyOptions::default()).unwrap();
    assert!(reports.len() > 40, "suite looks truncated: {}", reports.len());
    let failures: Vec<_> = reports.iter().filter(|r| !r.passed).collect();
    assert!(failures.is_empty(), "failed checks: {failures:#?}");
}

#[test]
fn injected_upsample_fault_is_caught_by_self_adjointness() {
    let opts = VerifyOptions {
        inject_stroke_fault: true,
        ..VerifyOptions::default()
    };
    let reports = stroke_checks(&opts).unwrap();
    let self_adjoint_failures = reports
        .iter()
        .filter(|r| r.name.contains("self_adjoint") && !r.passed)
        .count();
    assert!(
        self_adjoint_failures > 0,
        "fault injection must break self-adjointness"
    );
}

#[test]
fn filter_selects_subsets() {
    let opts = VerifyOptions {
        filter: Some("stroke.".into()),
        ..VerifyOptions::default()
    };
    let reports = run(&opts).unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r.name.contains("stroke.")));
}
