mod common;

use common::{gradient_error, GRADIENT_OPS};

const INSTANCES: u64 = 20;

#[test]
fn tape_gradients_match_central_differences() {
    for op in GRADIENT_OPS {
        let worst = (0..INSTANCES).map(|seed| gradient_error(op, seed)).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{op}: worst relative error {worst:e}");
    }
}

#[test]
fn oracle_detects_a_wrong_gradient() {
    use asgan_core::ndcore::{Rng, Tape};
    // sum(x * c) with c a detached copy of x: the tape reports x where the
    // true derivative is 2x, a relative error of 1/3.
    let params = vec![Rng::new(1).normal_tensor(2, 3)];
    let err = common::max_relative_error(&params, &|p| {
        let mut tape = Tape::new();
        let x = tape.param(&p[0]);
        let c = tape.constant(p[0].clone());
        let prod = tape.mul(x, c).unwrap();
        let loss = tape.sum(prod);
        (tape, loss, vec![x])
    });
    assert!((err - 1.0 / 3.0).abs() < 1e-6, "{err}");
}
