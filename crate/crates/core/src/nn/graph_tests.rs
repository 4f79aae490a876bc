use std::rc::Rc;

use super::*;

fn t(rows: usize, cols: usize, v: &[f32]) -> Tensor2D<f32> {
    Tensor2D::from_vec(rows, cols, v.to_vec()).unwrap()
}

#[test]
fn linear_identity() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor2D::identity(2));
    let w = g.input(Tensor2D::identity(2));
    let b = g.input(Tensor2D::zeros(1, 2));
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y), &Tensor2D::identity(2));
}

#[test]
fn linear_zero_weight() {
    let mut g = Graph::<f32>::new();
    let x = g.input(t(1, 2, &[1.0, 2.0]));
    let w = g.input(Tensor2D::zeros(2, 2));
    let b = g.input(t(1, 2, &[3.0, 4.0]));
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0]);
}

#[test]
fn linear_shape_error() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor2D::zeros(1, 3));
    let w = g.input(Tensor2D::zeros(2, 2));
    assert!(matches!(g.linear(x, w, None), Err(crate::Error::Shape(_))));
}

#[test]
fn embedding_rows() {
    let mut g = Graph::<f32>::new();
    let tab = g.input(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let y = g.embedding(tab, &[0, 0]).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0, 1.0, 2.0]);
    let y = g.embedding(tab, &[2]).unwrap();
    assert_eq!(g.value(y).data(), &[5.0, 6.0]);
    assert!(matches!(g.embedding(tab, &[3]), Err(crate::Error::Index(_))));
}

#[test]
fn embedding_gradient_counts_ids() {
    let mut g = Graph::<f64>::new();
    let tab = g.input(Tensor2D::zeros(4, 2));
    let ids = [1u32, 3, 1, 1];
    let y = g.embedding(tab, &ids).unwrap();
    let ones = Tensor2D::from_vec(4, 2, vec![1.0; 8]).unwrap();
    let l = g.weighted_sum(y, ones).unwrap();
    let gr = g.backward(l).unwrap();
    assert_eq!(gr.get(tab).unwrap().data(), &[0.0, 0.0, 3.0, 3.0, 0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn uniform_logits_cost_four_bits() {
    let mut g = Graph::<f32>::new();
    let l = g.input(Tensor2D::zeros(3, 16));
    let ce = g.softmax_cross_entropy(l, &[0, 7, 15]).unwrap();
    assert!((g.value(ce).get(0, 0) - 4.0).abs() < 1e-6);
}

#[test]
fn cross_entropy_bounded_for_clamped_logits() {
    let mut rng = init_rng(3);
    use rand::Rng;
    let mut g = Graph::<f64>::new();
    let data: Vec<f64> = (0..64 * 16).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let l = g.input(Tensor2D::from_vec(64, 16, data).unwrap());
    let targets: Vec<u8> = (0..64).map(|_| rng.gen_range(0..16)).collect();
    let ce = g.softmax_cross_entropy(l, &targets).unwrap();
    let v = g.value(ce).get(0, 0);
    // With logits in [-2, 2] each row costs at most log2(1 + 15 e^4) bits.
    let bound = (1.0 + 15.0 * 4f64.exp()).log2();
    assert!(v >= 0.0 && v <= bound, "{v}");
}

#[test]
fn masked_mean_semantics() {
    let mut g = Graph::<f32>::new();
    let x = g.input(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    // group 0: rows 0 (masked out) and 1; group 1: row 2 masked out; group 2 empty
    let y = g.masked_mean(x, &[0, 0, 1], &[false, true, false], 3).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn aggregate_checks_input_rows() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor2D::zeros(2, 2));
    let rows = Rc::new(SparseRows::selection(3, &[2]).unwrap());
    assert!(g.aggregate(x, rows).is_err());
    assert!(SparseRows::selection(2, &[2]).is_err());
}

#[test]
fn relu_and_concat() {
    let mut g = Graph::<f32>::new();
    let a = g.input(t(1, 2, &[-1.0, 2.0]));
    let r = g.relu(a);
    let c = g.concat(r, a).unwrap();
    assert_eq!(g.value(c).data(), &[0.0, 2.0, -1.0, 2.0]);
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = init_rng(5);
        let mut s = ParamStore::<f32>::new();
        let w = s.add_uniform("w", 16, 32, 32, &mut rng).unwrap();
        let mut g = Graph::<f32>::new();
        use rand::Rng;
        let x = g.input(Tensor2D::from_vec(50, 32, (0..1600).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
        let wv = g.param(&s, w);
        let y = g.linear(x, wv, None).unwrap();
        g.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
