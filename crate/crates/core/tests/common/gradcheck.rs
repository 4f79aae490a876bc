//! Central finite-difference checks for every differentiable graph op.

use std::rc::Rc;

use hintpc::nn::{Graph, SparseRows, Tensor2D, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;
pub const TOL: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

struct Case {
    inputs: Vec<Tensor2D<f64>>,
    build: Build,
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub shapes: usize,
    pub max_rel_err: f64,
}

impl OpReport {
    pub fn ok(&self) -> bool {
        self.max_rel_err < TOL
    }
}

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor2D<f64> {
    // Bounded away from zero so ReLU kinks are never straddled by the probe.
    let v = (0..r * c)
        .map(|_| {
            let m: f64 = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor2D::from_vec(r, c, v).unwrap()
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..7), rng.gen_range(1..7))
}

/// Reduces a node to a scalar with fixed random weights.
fn reduce(g: &mut Graph<f64>, y: Var, w: &Tensor2D<f64>) -> Var {
    g.weighted_sum(y, w.clone()).unwrap()
}

fn make_case(op: &str, rng: &mut ChaCha8Rng) -> Case {
    let (n, c) = dims(rng);
    match op {
        "linear" | "linear_nobias" => {
            let out = rng.gen_range(1..7);
            let bias = op == "linear";
            let mut inputs = vec![rand_t(rng, n, c), rand_t(rng, out, c)];
            if bias {
                inputs.push(rand_t(rng, 1, out));
            }
            let w = rand_t(rng, n, out);
            Case {
                inputs,
                build: Box::new(move |g, v| {
                    let y = g.linear(v[0], v[1], v.get(2).copied()).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "embedding" => {
            let k = rng.gen_range(1..7);
            let ids: Vec<u32> = (0..n).map(|_| rng.gen_range(0..k as u32)).collect();
            let w = rand_t(rng, n, c);
            Case {
                inputs: vec![rand_t(rng, k, c)],
                build: Box::new(move |g, v| {
                    let y = g.embedding(v[0], &ids).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "aggregate" => {
            let out = rng.gen_range(1..7);
            let mut b = SparseRows::builder(n);
            for _ in 0..out {
                for _ in 0..rng.gen_range(0..4) {
                    b.push(rng.gen_range(0..n as u32), rng.gen_range(-1.0..1.0));
                }
                b.finish_row();
            }
            let rows = Rc::new(b.build());
            let w = rand_t(rng, out, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.aggregate(v[0], rows.clone()).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "select_rows" => {
            let out = rng.gen_range(1..7);
            let idx: Vec<u32> = (0..out).map(|_| rng.gen_range(0..n as u32)).collect();
            let w = rand_t(rng, out, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.select_rows(v[0], &idx).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "masked_mean" => {
            let groups = rng.gen_range(1..4);
            let grp: Vec<u32> = (0..n).map(|_| rng.gen_range(0..groups as u32)).collect();
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
            let w = rand_t(rng, groups, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.masked_mean(v[0], &grp, &mask, groups).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "add" => {
            let w = rand_t(rng, n, c);
            Case {
                inputs: vec![rand_t(rng, n, c), rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.add(v[0], v[1]).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "relu" => {
            let w = rand_t(rng, n, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.relu(v[0]);
                    reduce(g, y, &w)
                }),
            }
        }
        "concat" => {
            let c2 = rng.gen_range(1..7);
            let w = rand_t(rng, n, c + c2);
            Case {
                inputs: vec![rand_t(rng, n, c), rand_t(rng, n, c2)],
                build: Box::new(move |g, v| {
                    let y = g.concat(v[0], v[1]).unwrap();
                    reduce(g, y, &w)
                }),
            }
        }
        "scale" => {
            let s: f64 = rng.gen_range(-2.0..2.0);
            let w = rand_t(rng, n, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| {
                    let y = g.scale(v[0], s);
                    reduce(g, y, &w)
                }),
            }
        }
        "softmax_cross_entropy" => {
            let k = rng.gen_range(2..17);
            let targets: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
            Case {
                inputs: vec![rand_t(rng, n, k)],
                build: Box::new(move |g, v| g.softmax_cross_entropy(v[0], &targets).unwrap()),
            }
        }
        "weighted_sum" => {
            let w = rand_t(rng, n, c);
            Case {
                inputs: vec![rand_t(rng, n, c)],
                build: Box::new(move |g, v| g.weighted_sum(v[0], w.clone()).unwrap()),
            }
        }
        _ => unreachable!("unknown op {op}"),
    }
}

pub const OPS: [&str; 12] = [
    "linear",
    "linear_nobias",
    "embedding",
    "aggregate",
    "select_rows",
    "masked_mean",
    "add",
    "relu",
    "concat",
    "scale",
    "softmax_cross_entropy",
    "weighted_sum",
];

fn eval(case: &Case, inputs: &[Tensor2D<f64>]) -> f64 {
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let l = (case.build)(&mut g, &vars);
    g.value(l).data()[0]
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

fn check_case(case: &Case) -> f64 {
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.input(t.clone())).collect();
    let l = (case.build)(&mut g, &vars);
    let grads = g.backward(l).unwrap();
    let mut worst = 0.0f64;
    for (i, &v) in vars.iter().enumerate() {
        let shape = case.inputs[i].shape();
        let zeros = Tensor2D::zeros(shape.0, shape.1);
        let analytic = grads.get(v).unwrap_or(&zeros);
        for k in 0..case.inputs[i].data().len() {
            let mut plus = case.inputs.clone();
            plus[i].data_mut()[k] += EPS;
            let mut minus = case.inputs.clone();
            minus[i].data_mut()[k] -= EPS;
            let numeric = (eval(case, &plus) - eval(case, &minus)) / (2.0 * EPS);
            worst = worst.max(rel_err(analytic.data()[k], numeric));
        }
    }
    worst
}

/// Checks every op on `shapes` random shapes each.
pub fn run(shapes: usize, seed: u64) -> Vec<OpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OPS.iter()
        .map(|&op| {
            let max_rel_err = (0..shapes)
                .map(|_| check_case(&make_case(op, &mut rng)))
                .fold(0.0, f64::max);
            OpReport {
                op,
                shapes,
                max_rel_err,
            }
        })
        .collect()
}
