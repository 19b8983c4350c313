//! The dense oracle checks under seeds other than the acceptance seed.

use hdsa::verify::{self, Check};

fn assert_passes(check: Check) {
    assert!(check.passed(), "{}", check.line());
}

#[test]
fn index_equivalence() {
    for seed in [11, 12] {
        assert_passes(verify::index_equivalence(20, seed).unwrap());
    }
}

#[test]
fn smw_identity() {
    assert_passes(verify::smw_identity(10, 13).unwrap());
}

#[test]
fn gevp_accuracy() {
    assert_passes(verify::gevp_accuracy(10, 14).unwrap());
}

#[test]
fn first_order_update() {
    assert_passes(verify::first_order_update(15).unwrap());
}

#[test]
fn update_bounds() {
    for seed in [16, 17, 18] {
        assert_passes(verify::update_bounds(20, seed).unwrap());
    }
}

#[test]
fn second_order_update() {
    assert_passes(verify::second_order_update(20, 19).unwrap());
}

#[test]
fn cost_accounting() {
    assert_passes(verify::cost_accounting(20).unwrap());
}

#[test]
fn failing_part_fails_the_check() {
    let c = Check::new(
        "x",
        vec![verify::Part::at_most("a", 1.0, 2.0), verify::Part::at_least("b", 1.0, 2.0)],
    );
    assert!(!c.passed());
    assert_eq!(c.failed_parts(), vec!["b"]);
    assert!(c.line().starts_with("FAIL x"));
    let slow = Check { seconds: 5.0, ..Check::new("y", vec![]).with_budget(1.0) };
    assert!(!slow.passed());
}
