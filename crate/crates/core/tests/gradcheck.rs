#[path = "support/grad_suite.rs"]
mod grad_suite;

use grad_suite::{run_suite, TOLERANCE};

#[test]
fn every_op_matches_finite_differences() {
    for seed in [0, 1] {
        let reports = run_suite(seed).unwrap();
        assert_eq!(reports.len(), 17);
        for r in reports {
            assert!(r.shapes >= 5, "{} checked on {} shapes", r.op, r.shapes);
            assert!(r.worst < TOLERANCE, "{}: relative error {:.3e} (seed {seed})", r.op, r.worst);
        }
    }
}
