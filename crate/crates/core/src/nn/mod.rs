//! Small dense tensor library with reverse-mode differentiation and Adam.

mod checkpoint;
mod graph;
mod params;
mod tensor;

#[cfg(test)]
mod graph_tests;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{softmax_into, Gradients, Graph, SparseRows, SparseRowsBuilder, Var};
pub use params::{init_rng, AdamConfig, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor2D};

pub(crate) const LN_2: f64 = std::f64::consts::LN_2;

/// `e^x` evaluated with basic IEEE operations only, so that probabilities fed
/// to the arithmetic coder do not depend on the platform's libm.
pub fn det_exp(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let k = (x * std::f64::consts::LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor series on |r| <= 0.35; 14 terms reach full double precision.
    let mut p = 1.0;
    let mut i = 14;
    while i > 0 {
        p = 1.0 + p * r / i as f64;
        i -= 1;
    }
    let k = k as i32;
    // Split the power of two so each factor stays a normal number.
    let half = k / 2;
    pow2(half) * (p * pow2(k - half))
}

#[inline]
fn pow2(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_exp_matches_libm() {
        let mut x = -700.0;
        while x < 700.0 {
            let a = det_exp(x);
            let b = x.exp();
            assert!(((a - b) / b).abs() < 1e-14, "x={x}: {a} vs {b}");
            x += 0.37;
        }
        assert_eq!(det_exp(0.0), 1.0);
        assert_eq!(det_exp(-1000.0), 0.0);
    }
}
