//! Independent oracles shared by the integration tests and the acceptance
//! suite.

#![allow(dead_code)]

use asgan_core::asgan::{Critic, CriticHead, Generator, GeneratorShape};
use asgan_core::attention::{AttentionHead, MultiHeadAttention};
use asgan_core::data::{Label, Segment, SensorSeries, WindowSet};
use asgan_core::ndcore::{Parameterized, Rng, Tape, Tensor, Var};

/// Operations covered by the finite-difference suite.
pub const GRADIENT_OPS: [&str; 7] = [
    "matmul",
    "softmax_rows",
    "elementwise",
    "attention_head",
    "generator",
    "conv1d",
    "critic",
];

/// Central-difference step.
const STEP: f64 = 1e-6;

/// Records a scalar on a fresh tape from the given parameter values and
/// returns the tape, the scalar and the parameter handles.
type Recorder<'a> = dyn Fn(&[Tensor]) -> (Tape, Var, Vec<Var>) + 'a;

fn norm(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest per-tensor relative error `|a - f| / (|a| + |f|)` (2-norms)
/// between tape gradients `a` and central differences `f`.
pub fn max_relative_error(params: &[Tensor], record: &Recorder) -> f64 {
    let (tape, loss, vars) = record(params);
    let grads = tape.backward_wrt(loss, &vars).expect("backward");
    let mut worst: f64 = 0.0;
    for (p, (t, &v)) in params.iter().zip(&vars).enumerate() {
        let analytic = grads.get_or_zeros(v, t.shape());
        let mut numeric = Vec::with_capacity(t.len());
        for k in 0..t.len() {
            let eval = |delta: f64| {
                let mut moved = params.to_vec();
                moved[p].data_mut()[k] += delta;
                let (tape, loss, _) = record(&moved);
                tape.value(loss).item()
            };
            numeric.push((eval(STEP) - eval(-STEP)) / (2.0 * STEP));
        }
        let diff = norm(analytic.data().iter().zip(&numeric).map(|(a, f)| a - f));
        let scale = norm(analytic.data().iter().copied()) + norm(numeric.iter().copied());
        worst = worst.max(diff / scale.max(1e-8));
    }
    worst
}

/// `sum(out * w)` with fixed random weights `w`, so every output entry
/// contributes to the gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(out);
    let w = tape.constant(Rng::new(seed).split("weights").normal_tensor(r, c));
    let prod = tape.mul(out, w).expect("same shape");
    tape.sum(prod)
}

fn leaves(tape: &mut Tape, params: &[Tensor]) -> Vec<Var> {
    params.iter().map(|p| tape.param(p)).collect()
}

fn set_parameters<M: Parameterized>(model: &mut M, params: &[Tensor]) {
    for (dst, src) in model.parameters_mut().into_iter().zip(params) {
        *dst = src.clone();
    }
}

fn owned<M: Parameterized>(model: &M) -> Vec<Tensor> {
    model.parameters().into_iter().cloned().collect()
}

/// Worst relative gradient error of `op` on the instance drawn from `seed`.
pub fn gradient_error(op: &str, seed: u64) -> f64 {
    let mut rng = Rng::new(seed).split(op);
    match op {
        "matmul" => {
            let params = vec![rng.normal_tensor(3, 4), rng.normal_tensor(4, 5), rng.normal_tensor(5, 4)];
            max_relative_error(&params, &|p| {
                let mut tape = Tape::new();
                let v = leaves(&mut tape, p);
                let ab = tape.matmul(v[0], v[1]).unwrap();
                let act = tape.matmul_nt(v[0], v[2]).unwrap();
                let sum = tape.add(ab, act).unwrap();
                let loss = weighted_sum(&mut tape, sum, seed);
                (tape, loss, v)
            })
        }
        "softmax_rows" => {
            let params = vec![rng.normal_tensor(4, 6).map(|x| 2.0 * x)];
            max_relative_error(&params, &|p| {
                let mut tape = Tape::new();
                let v = leaves(&mut tape, p);
                let s = tape.softmax_rows(v[0]);
                let loss = weighted_sum(&mut tape, s, seed);
                (tape, loss, v)
            })
        }
        "elementwise" => {
            let params = vec![rng.normal_tensor(3, 4), rng.normal_tensor(3, 4), rng.normal_tensor(1, 4)];
            max_relative_error(&params, &|p| {
                let mut tape = Tape::new();
                let v = leaves(&mut tape, p);
                let prod = tape.mul(v[0], v[1]).unwrap();
                let shifted = tape.add_row(prod, v[2]).unwrap();
                let rect = tape.relu(shifted);
                let diff = tape.sub(v[0], v[1]).unwrap();
                let scaled = tape.scale(diff, 0.7);
                let squashed = tape.sigmoid(scaled);
                let out = tape.add(rect, squashed).unwrap();
                let loss = weighted_sum(&mut tape, out, seed);
                (tape, loss, v)
            })
        }
        "attention_head" => {
            let (n, v, w) = (7, 2, 3);
            let params = vec![
                rng.normal_tensor(v, w),
                rng.normal_tensor(v, w),
                rng.normal_tensor(v, w),
                rng.uniform_tensor(n, v, 0.0, 1.0),
            ];
            max_relative_error(&params, &|p| {
                let head = AttentionHead::new(p[0].clone(), p[1].clone(), p[2].clone()).unwrap();
                let m = MultiHeadAttention::from_parts(vec![head], Tensor::zeros(w, v), n).unwrap();
                let mut tape = Tape::new();
                let vars = m.bind(&mut tape);
                let x = tape.param(&p[3]);
                let out = vars.head(&mut tape, 0, x).unwrap();
                let loss = weighted_sum(&mut tape, out, seed);
                let handles = vars.vars();
                (tape, loss, vec![handles[0], handles[1], handles[2], x])
            })
        }
        "generator" => {
            let shape = GeneratorShape {
                n: 6,
                v: 2,
                noise_dim: 5,
                layers: 2,
                hidden: 7,
                attention: Some((2, 3)),
            };
            let template = Generator::init(shape, &mut rng.split("init")).unwrap();
            let z = rng.normal_tensor(3, 5);
            let xs: Vec<Tensor> = (0..3).map(|_| rng.uniform_tensor(6, 2, 0.0, 1.0)).collect();
            max_relative_error(&owned(&template), &|p| {
                let mut g = template.clone();
                set_parameters(&mut g, p);
                let mut tape = Tape::new();
                let vars = g.bind(&mut tape);
                let zv = tape.constant(z.clone());
                let xv: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
                let out = g.record(&mut tape, &vars, zv, &xv).unwrap();
                let loss = weighted_sum(&mut tape, out, seed);
                (tape, loss, vars.vars())
            })
        }
        "conv1d" => {
            let (c_in, len, c_out, width) = (2, 12, 3, 4);
            let stride = 1 + (seed % 2) as usize;
            let params = vec![
                rng.normal_tensor(c_in, len),
                rng.normal_tensor(c_out, c_in * width),
                rng.normal_tensor(1, c_out),
            ];
            max_relative_error(&params, &|p| {
                let mut tape = Tape::new();
                let v = leaves(&mut tape, p);
                let out = tape.conv1d(v[0], v[1], v[2], width, stride).unwrap();
                let loss = weighted_sum(&mut tape, out, seed);
                (tape, loss, v)
            })
        }
        "critic" => {
            let template = Critic::init(12, 7, CriticHead::Score, &mut rng.split("init")).unwrap();
            let mut params = owned(&template);
            params.push(rng.uniform_tensor(4, 12, 0.0, 1.0));
            max_relative_error(&params, &|p| {
                let mut c = template.clone();
                set_parameters(&mut c, &p[..4]);
                let mut tape = Tape::new();
                let vars = c.bind(&mut tape);
                let batch = tape.param(&p[4]);
                let out = c.record(&mut tape, &vars, batch).unwrap();
                let loss = weighted_sum(&mut tape, out, seed);
                let mut handles = vars.vars();
                handles.push(batch);
                (tape, loss, handles)
            })
        }
        other => panic!("no gradient case for {other}"),
    }
}

/// Window starts enumerated one by one.
pub fn enumerated_window_count(len: usize, n: usize, overlap: usize) -> usize {
    let stride = n - overlap;
    let mut count = 0;
    let mut start = 0;
    while start + n <= len {
        count += 1;
        start += stride;
    }
    count
}

/// Single-channel series of `len` samples forming one labeled segment.
pub fn one_segment_series(len: usize, label: Label) -> SensorSeries {
    let values: Vec<f64> = (0..len).map(|t| t as f64).collect();
    SensorSeries::new(1, values, 1.0, vec![Segment { start: 0, end: len, label }]).unwrap()
}

/// Mean Euclidean distance from `x` to every window of `set`, summed in a
/// different order from the library.
pub fn brute_mean_distance(x: &[f64], set: &WindowSet) -> f64 {
    let mut total = 0.0;
    for i in (0..set.len()).rev() {
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(set.row(i)) {
            sq += (a - b).powi(2);
        }
        total += sq.sqrt();
    }
    total / set.len() as f64
}

/// `(tp, fp, tn, fn, precision, recall, f)` by counting each cell of the
/// confusion matrix separately, with undefined ratios reported as 0.
pub fn brute_confusion(pred: &[bool], truth: &[bool]) -> (usize, usize, usize, usize, f64, f64, f64) {
    let cell = |p: bool, t: bool| pred.iter().zip(truth).filter(|&(&a, &b)| a == p && b == t).count();
    let (tp, fp, tn, fn_) = (cell(true, true), cell(true, false), cell(false, false), cell(false, true));
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (tp, fp, tn, fn_, precision, recall, f)
}

/// Random minority set of `count` windows of width `n`.
pub fn random_windows(count: usize, n: usize, rng: &mut Rng) -> WindowSet {
    let mut ws = WindowSet::empty(n, 1);
    for i in 0..count {
        ws.push(rng.uniform_tensor(1, n, 0.0, 1.0).data(), Label::Abnormal, i).unwrap();
    }
    ws
}

/// Betweenness and collinearity residuals of one synthetic sample `s`
/// relative to its generating pair `(x, y)`.
pub fn smote_residuals(s: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    let outside = s
        .iter()
        .zip(x.iter().zip(y))
        .map(|(&si, (&xi, &yi))| (xi.min(yi) - si).max(si - xi.max(yi)).max(0.0))
        .fold(0.0, f64::max);
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let collinear = (d(s, x) + d(s, y) - d(x, y)).abs();
    (outside, collinear)
}
