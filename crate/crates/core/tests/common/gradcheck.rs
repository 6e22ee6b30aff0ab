//! Finite-difference checks of the autodiff engine.

use ndarray::Array2;
use netwalk::autodiff::{gradient_penalty, Dim, Tape, Var};
use netwalk::model::{Critic, Discriminator, DiscriminatorDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

pub type Build = fn(&Tape, &[Var]) -> Var;

/// Largest relative error of `∂f/∂inputs` against central differences.
/// `f` is contracted with fixed random weights to make a scalar.
pub fn check_first(inputs: &[Array2<f64>], f: Build, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = {
        let t = Tape::new();
        let xs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        t.shape(f(&t, &xs))
    };
    let weights = random(&mut rng, shape, -1.0, 1.0);
    let value = |xs: &[Array2<f64>]| {
        let t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&t, &vs);
        t.scalar_value(t.sum(t.mul(out, t.constant(weights.clone()))))
    };
    let t = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|x| t.var(x.clone())).collect();
    let out = t.sum(t.mul(f(&t, &vs), t.constant(weights.clone())));
    let grads = t.grad(out, &vs).unwrap();
    max_error(inputs, &grads.iter().map(|&g| t.value(g)).collect::<Vec<_>>(), value)
}

/// As [`check_first`] for `∂/∂inputs ⟨∂f/∂inputs, R⟩`, exercising the
/// recorded backward pass.
pub fn check_second(inputs: &[Array2<f64>], f: Build, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = {
        let t = Tape::new();
        let xs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        t.shape(f(&t, &xs))
    };
    let weights = random(&mut rng, shape, -1.0, 1.0);
    let probes: Vec<Array2<f64>> = inputs.iter().map(|x| random(&mut rng, x.dim(), -1.0, 1.0)).collect();
    let build = |t: &Tape, vs: &[Var]| {
        let out = t.sum(t.mul(f(t, vs), t.constant(weights.clone())));
        let grads = t.grad(out, vs).unwrap();
        let mut total = t.scalar(0.0);
        for (g, p) in grads.iter().zip(&probes) {
            total = t.add(total, t.sum(t.mul(*g, t.constant(p.clone()))));
        }
        total
    };
    let value = |xs: &[Array2<f64>]| {
        let t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.var(x.clone())).collect();
        t.scalar_value(build(&t, &vs))
    };
    let t = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|x| t.var(x.clone())).collect();
    let s = build(&t, &vs);
    let grads = t.grad(s, &vs).unwrap();
    max_error(inputs, &grads.iter().map(|&g| t.value(g)).collect::<Vec<_>>(), value)
}

fn max_error(inputs: &[Array2<f64>], analytic: &[Array2<f64>], value: impl Fn(&[Array2<f64>]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        for idx in ndarray::indices(x.dim()) {
            let mut plus = inputs.to_vec();
            plus[k][idx] += h;
            let mut minus = inputs.to_vec();
            minus[k][idx] -= h;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * h);
            let a = analytic[k][idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0));
        }
    }
    worst
}

/// Name, input shapes, sampling range and the op under test.
pub type Primitive = (&'static str, Vec<(usize, usize)>, f64, f64, Build);

pub fn primitives() -> Vec<Primitive> {
    vec![
        ("add", vec![(3, 4), (3, 4)], -1.0, 1.0, |t, v| t.add(v[0], v[1])),
        ("sub", vec![(3, 4), (3, 4)], -1.0, 1.0, |t, v| t.sub(v[0], v[1])),
        ("mul", vec![(3, 4), (3, 4)], -1.0, 1.0, |t, v| t.mul(v[0], v[1])),
        ("div", vec![(3, 4), (3, 4)], 0.5, 2.0, |t, v| t.div(v[0], v[1])),
        ("matmul", vec![(3, 4), (4, 2)], -1.0, 1.0, |t, v| t.matmul(v[0], v[1])),
        ("matmul_ta", vec![(4, 3), (4, 2)], -1.0, 1.0, |t, v| t.matmul_t(v[0], v[1], true, false)),
        ("matmul_tb", vec![(3, 4), (2, 4)], -1.0, 1.0, |t, v| t.matmul_t(v[0], v[1], false, true)),
        ("matmul_tab", vec![(4, 3), (2, 4)], -1.0, 1.0, |t, v| t.matmul_t(v[0], v[1], true, true)),
        ("affine", vec![(3, 4)], -1.0, 1.0, |t, v| t.affine(v[0], -1.7, 0.3)),
        ("tanh", vec![(3, 4)], -2.0, 2.0, |t, v| t.tanh(v[0])),
        ("sigmoid", vec![(3, 4)], -3.0, 3.0, |t, v| t.sigmoid(v[0])),
        ("exp", vec![(3, 4)], -1.0, 1.0, |t, v| t.exp(v[0])),
        ("log", vec![(3, 4)], 0.5, 3.0, |t, v| t.log(v[0])),
        ("square", vec![(3, 4)], -2.0, 2.0, |t, v| t.square(v[0])),
        ("sqrt", vec![(3, 4)], 0.5, 3.0, |t, v| t.sqrt(v[0])),
        ("softmax", vec![(3, 5)], -2.0, 2.0, |t, v| t.softmax(v[0])),
        ("sum", vec![(3, 4)], -1.0, 1.0, |t, v| t.sum(v[0])),
        ("mean", vec![(3, 4)], -1.0, 1.0, |t, v| t.mean(v[0])),
        ("sum_rows", vec![(3, 4)], -1.0, 1.0, |t, v| t.sum_along(v[0], Dim::Rows)),
        ("sum_cols", vec![(3, 4)], -1.0, 1.0, |t, v| t.sum_along(v[0], Dim::Cols)),
        ("broadcast_row", vec![(1, 4)], -1.0, 1.0, |t, v| t.broadcast(v[0], (3, 4))),
        ("broadcast_col", vec![(3, 1)], -1.0, 1.0, |t, v| t.broadcast(v[0], (3, 4))),
        ("concat_rows", vec![(2, 3), (1, 3)], -1.0, 1.0, |t, v| t.concat(&[v[0], v[1]], Dim::Rows)),
        ("concat_cols", vec![(2, 3), (2, 2)], -1.0, 1.0, |t, v| t.concat(&[v[0], v[1]], Dim::Cols)),
        ("slice_rows", vec![(4, 3)], -1.0, 1.0, |t, v| t.slice(v[0], Dim::Rows, 1, 3)),
        ("slice_cols", vec![(3, 5)], -1.0, 1.0, |t, v| t.slice(v[0], Dim::Cols, 2, 5)),
    ]
}

pub fn small_discriminator(seed: u64) -> Discriminator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = DiscriminatorDims { n: 5, hidden: 3, down_dim: 4 };
    let mut d = Discriminator::new(dims, &mut rng);
    // larger weights than the initializer keeps the nonlinearities busy
    for p in d.params.iter_mut() {
        p.value.mapv_inplace(|w| w * 3.0);
    }
    d
}

pub fn walk_inputs(seed: u64, batch: usize, len: usize, n: usize) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| random(&mut rng, (batch, n), 0.0, 1.0)).collect()
}

pub fn penalty_direct(d: &Discriminator, values: &[Array2<f64>], xs: &[Array2<f64>], track: bool) -> (f64, Vec<Array2<f64>>) {
    let tape = Tape::new();
    let vars: Vec<Var> = values
        .iter()
        .map(|v| if track { tape.var(v.clone()) } else { tape.constant(v.clone()) })
        .collect();
    let inputs: Vec<Var> = xs.iter().map(|x| tape.var(x.clone())).collect();
    let total = tape.sum(d.score(&tape, &vars, &inputs));
    let gp = gradient_penalty(&tape, total, &inputs).unwrap();
    let grads = if track {
        tape.grad(gp, &vars).unwrap().iter().map(|&g| tape.value(g)).collect()
    } else {
        Vec::new()
    };
    (tape.scalar_value(gp), grads)
}

/// Largest relative error of the penalty's parameter gradients on the
/// discriminator built from `seed`, against central differences.
pub fn penalty_gradient_error(seed: u64) -> f64 {
    let d = small_discriminator(seed);
    let xs = walk_inputs(100 + seed, 3, 4, 5);
    let values: Vec<Array2<f64>> = d.params.iter().map(|p| p.value.clone()).collect();
    let (_, analytic) = penalty_direct(&d, &values, &xs, true);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, v) in values.iter().enumerate() {
        for idx in ndarray::indices(v.dim()) {
            let mut plus = values.clone();
            plus[k][idx] += h;
            let mut minus = values.clone();
            minus[k][idx] -= h;
            let numeric = (penalty_direct(&d, &plus, &xs, false).0 - penalty_direct(&d, &minus, &xs, false).0) / (2.0 * h);
            let a = analytic[k][idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    worst
}
