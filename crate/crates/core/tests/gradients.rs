mod common;

use common::gradcheck;

#[test]
fn every_op_matches_finite_differences() {
    for r in gradcheck::run(20, 7) {
        assert!(r.ok(), "{}: max relative error {:.3e}", r.op, r.max_rel_err);
    }
}
