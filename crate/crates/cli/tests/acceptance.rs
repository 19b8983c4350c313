//! The full oracle suite: one line per acceptance criterion, with the
//! tolerances pinned in `hdsa::verify` and `hdsa_tracer::verify`.
//!
//! Run with `cargo test -p hdsa-cli --test acceptance -- --nocapture` to see
//! the table.

use hdsa::verify::Level;
use hdsa_cli::commands::{verify_suite, VerifyOptions};
use hdsa_tracer::verify::NEWTON_STEP_PART;

/// Parts that fail at the desk scale and are reported red rather than
/// loosened. The README explains why.
const KNOWN_RED: &[(&str, &str)] = &[("tracer-qualitative-pattern", NEWTON_STEP_PART)];

#[test]
fn acceptance() {
    let opts = VerifyOptions {
        level: Level::Full,
        ..Default::default()
    };
    let checks = verify_suite(&opts, |c| println!("{}", c.line())).unwrap();
    assert_eq!(checks.len(), 9, "one check per criterion");

    let mut unexpected = Vec::new();
    for c in &checks {
        assert!(c.within_budget(), "{} over its time budget", c.name);
        for part in c.failed_parts() {
            if !KNOWN_RED.contains(&(c.name.as_str(), part)) {
                unexpected.push(format!("{}: {part}", c.name));
            }
        }
    }
    let red = checks.iter().filter(|c| !c.passed()).count();
    println!("{} of {} criteria pass; {red} red", checks.len() - red, checks.len());
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
