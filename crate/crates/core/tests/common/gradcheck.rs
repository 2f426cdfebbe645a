//! Central finite-difference checks for every differentiable op.

use musegan_core::models::{discriminator_spec, BnStore, Network, Profile};
use musegan_core::tensor::{backward, batch_norm, fully_connected, leaky_relu, relu, BnMode, ParamSet, RunningStats, Tensor};
use musegan_core::trainer::gradient_penalty;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const INSTANCES: usize = 20;
/// Coordinates probed per input; larger inputs are subsampled.
const PROBES: usize = 24;

pub type Op = dyn Fn(&[Tensor]) -> Tensor;

/// Uniform values in [-1, 1] kept at least 0.05 away from zero, clear of
/// the ReLU kink at the probe step.
pub fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen() { v } else { -v }
        })
        .collect()
}

/// Scalar `sum(y * w)` for a fixed pseudo-random `w`, so every output
/// coordinate contributes with a different weight.
pub fn project(y: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::new(y.shape(), values(&mut rng, y.numel())).unwrap();
    y.mul(&w).unwrap().sum_all()
}

/// Central difference of `eval` at zero, or `None` when the estimates at
/// `H` and `H / 2` disagree: the probe interval straddles a kink of a
/// piecewise-linear activation, where a difference quotient measures the
/// jump rather than the derivative.
pub fn central_difference(eval: impl Fn(f64) -> f64) -> Option<f64> {
    let c1 = (eval(H) - eval(-H)) / (2.0 * H);
    let c2 = (eval(H / 2.0) - eval(-H / 2.0)) / H;
    ((c1 - c2).abs() <= 1e-5 * c1.abs().max(c2.abs()) + 1e-10).then_some(c1)
}

/// Normwise relative error of the analytic gradient of `f` at `inputs`
/// against central differences, over up to [`PROBES`] coordinates per
/// input, and the number of probes discarded at kinks.
pub fn relative_error(f: &Op, inputs: &[(Vec<usize>, Vec<f64>)], rng: &mut ChaCha8Rng) -> (f64, usize) {
    let params: Vec<Tensor> = inputs.iter().map(|(s, v)| Tensor::param(s, v.clone()).unwrap()).collect();
    let out = f(&params);
    let grads = backward(&out, false).unwrap();
    let (mut diff, mut scale, mut kinks) = (0.0f64, 0.0f64, 0);
    for (i, (_, v)) in inputs.iter().enumerate() {
        let g = grads.wrt(&params[i]);
        let coords: Vec<usize> = if v.len() <= PROBES {
            (0..v.len()).collect()
        } else {
            (0..PROBES).map(|_| rng.gen_range(0..v.len())).collect()
        };
        for k in coords {
            let eval = |delta: f64| {
                let ts: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (s, vals))| {
                        let mut vals = vals.clone();
                        if j == i {
                            vals[k] += delta;
                        }
                        Tensor::new(s, vals).unwrap()
                    })
                    .collect();
                f(&ts).item().unwrap()
            };
            let Some(numeric) = central_difference(eval) else {
                kinks += 1;
                continue;
            };
            let analytic = g.data()[k];
            diff = diff.max((numeric - analytic).abs());
            scale = scale.max(numeric.abs()).max(analytic.abs());
        }
    }
    (if scale == 0.0 { 0.0 } else { diff / scale }, kinks)
}

fn spatial(rng: &mut ChaCha8Rng) -> (usize, Vec<usize>, Vec<usize>, Vec<usize>) {
    let d = rng.gen_range(1..=3);
    let k: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=3)).collect();
    let s: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=3)).collect();
    let out: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=3)).collect();
    (d, k, s, out)
}

/// One random instance of an op: the function and its inputs.
type Case = (Box<Op>, Vec<(Vec<usize>, Vec<f64>)>);

fn case(name: &str, rng: &mut ChaCha8Rng, seed: u64) -> Case {
    let v = |shape: &[usize], rng: &mut ChaCha8Rng| (shape.to_vec(), values(rng, shape.iter().product()));
    let b = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=4);
    let p = move |y: Tensor| project(&y, seed);
    match name {
        "add" => (Box::new(move |x| p(x[0].add(&x[1]).unwrap())), vec![v(&[b, n], rng), v(&[b, n], rng)]),
        "sub" => (Box::new(move |x| p(x[0].sub(&x[1]).unwrap())), vec![v(&[b, n], rng), v(&[b, n], rng)]),
        "mul" => (Box::new(move |x| p(x[0].mul(&x[1]).unwrap())), vec![v(&[b, n], rng), v(&[b, n], rng)]),
        "scale" => {
            let c = rng.gen_range(-2.0..2.0);
            (Box::new(move |x| p(x[0].scale(c))), vec![v(&[b, n], rng)])
        }
        "neg" => (Box::new(move |x| p(x[0].neg())), vec![v(&[b, n], rng)]),
        "add_scalar" => {
            let c = rng.gen_range(-2.0..2.0);
            (Box::new(move |x| p(x[0].add_scalar(c))), vec![v(&[b, n], rng)])
        }
        "powf" => {
            let e = [0.5, -0.5, 1.5, 3.0][rng.gen_range(0..4)];
            let (shape, vals) = v(&[b, n], rng);
            let vals = vals.iter().map(|x| 0.5 + x.abs()).collect();
            (Box::new(move |x| p(x[0].powf(e))), vec![(shape, vals)])
        }
        "square" => (Box::new(move |x| p(x[0].square())), vec![v(&[b, n], rng)]),
        "tanh" => (Box::new(move |x| p(x[0].tanh())), vec![v(&[b, n], rng)]),
        "relu" => (Box::new(move |x| p(relu(&x[0]))), vec![v(&[b, n], rng)]),
        "leaky_relu" => (Box::new(move |x| p(leaky_relu(&x[0], 0.2))), vec![v(&[b, n], rng)]),
        "matmul" => (Box::new(move |x| p(x[0].matmul(&x[1]).unwrap())), vec![v(&[b, n], rng), v(&[n, m], rng)]),
        "transpose" => (Box::new(move |x| p(x[0].transpose().unwrap())), vec![v(&[b, n], rng)]),
        "reshape" => (Box::new(move |x| p(x[0].reshape(&[n, b]).unwrap())), vec![v(&[b, n], rng)]),
        "sum_all" => (Box::new(move |x| x[0].sum_all().scale(0.7)), vec![v(&[b, n], rng)]),
        "mean_all" => (Box::new(move |x| x[0].mean_all().square()), vec![v(&[b, n], rng)]),
        "expand" => (Box::new(move |x| p(x[0].expand(&[b, n]).unwrap())), vec![v(&[1], rng)]),
        "sum_last" => (Box::new(move |x| p(x[0].sum_last().unwrap())), vec![v(&[b, n, m], rng)]),
        "expand_last" => (Box::new(move |x| p(x[0].expand_last(m).unwrap())), vec![v(&[b, n], rng)]),
        "sum_to_channel" => (Box::new(move |x| p(x[0].sum_to_channel().unwrap())), vec![v(&[b, n, m], rng)]),
        "broadcast_channel" => (Box::new(move |x| p(x[0].broadcast_channel(&[b, n, m]).unwrap())), vec![v(&[m], rng)]),
        "concat" => {
            let axis = rng.gen_range(0..2);
            let other = if axis == 0 { [m, n] } else { [b, m] };
            (
                Box::new(move |x| p(Tensor::concat(&[x[0].clone(), x[1].clone()], axis).unwrap())),
                vec![v(&[b, n], rng), v(&other, rng)],
            )
        }
        "slice" => {
            let len = rng.gen_range(1..=n);
            let start = rng.gen_range(0..=n - len);
            (Box::new(move |x| p(x[0].slice(1, start, len).unwrap())), vec![v(&[b, n], rng)])
        }
        "pad" => {
            let start = rng.gen_range(0..3);
            let total = n + start + rng.gen_range(0..3);
            (Box::new(move |x| p(x[0].pad(1, start, total).unwrap())), vec![v(&[b, n], rng)])
        }
        "conv" => {
            let (_, k, s, out) = spatial(rng);
            let mut xs = vec![b];
            xs.extend(k.iter().zip(&s).zip(&out).map(|((k, s), o)| (o - 1) * s + k + rng.gen_range(0..*s)));
            xs.push(n);
            let mut ks = k.clone();
            ks.extend([n, m]);
            (Box::new(move |x| p(x[0].conv(&x[1], &s).unwrap())), vec![v(&xs, rng), v(&ks, rng)])
        }
        "transposed_conv" => {
            let (_, k, s, inp) = spatial(rng);
            let mut xs = vec![b];
            xs.extend(&inp);
            xs.push(n);
            let mut ks = k.clone();
            ks.extend([m, n]);
            let out: Vec<usize> = (0..k.len()).map(|a| (inp[a] - 1) * s[a] + k[a] + rng.gen_range(0..s[a])).collect();
            (
                Box::new(move |x| p(x[0].transposed_conv_to(&x[1], &s, &out).unwrap())),
                vec![v(&xs, rng), v(&ks, rng)],
            )
        }
        "kernel_grad" => {
            let (_, k, s, out) = spatial(rng);
            let mut xs = vec![b];
            xs.extend(k.iter().zip(&s).zip(&out).map(|((k, s), o)| (o - 1) * s + k));
            xs.push(n);
            let mut ys = vec![b];
            ys.extend(&out);
            ys.push(m);
            (
                Box::new(move |x| p(x[0].kernel_grad(&x[1], &k, &s).unwrap())),
                vec![v(&xs, rng), v(&ys, rng)],
            )
        }
        "fully_connected" => (
            Box::new(move |x| p(fully_connected(&x[0], &x[1], &x[2]).unwrap())),
            vec![v(&[b, n], rng), v(&[n, m], rng), v(&[m], rng)],
        ),
        "batch_norm" => {
            let b = b + 1;
            (
                Box::new(move |x| {
                    let mut stats = RunningStats::new(m);
                    p(batch_norm(&x[0], &x[1], &x[2], BnMode::Train, &mut stats).unwrap())
                }),
                vec![v(&[b, n, m], rng), v(&[m], rng), v(&[m], rng)],
            )
        }
        "batch_norm_eval" => {
            let mean = values(rng, m);
            let var: Vec<f64> = values(rng, m).iter().map(|x| x.abs() + 0.1).collect();
            (
                Box::new(move |x| {
                    let mut stats = RunningStats { mean: mean.clone(), var: var.clone() };
                    p(batch_norm(&x[0], &x[1], &x[2], BnMode::Eval, &mut stats).unwrap())
                }),
                vec![v(&[b, n, m], rng), v(&[m], rng), v(&[m], rng)],
            )
        }
        other => panic!("no gradient case for {other}"),
    }
}

pub const OPS: [&str; 29] = [
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "add_scalar",
    "powf",
    "square",
    "tanh",
    "relu",
    "leaky_relu",
    "matmul",
    "transpose",
    "reshape",
    "sum_all",
    "mean_all",
    "expand",
    "sum_last",
    "expand_last",
    "sum_to_channel",
    "broadcast_channel",
    "concat",
    "slice",
    "pad",
    "conv",
    "transposed_conv",
    "kernel_grad",
    "fully_connected",
    "batch_norm",
];

/// Worst relative error over [`INSTANCES`] random instances of `op`, and
/// the probes discarded at kinks.
pub fn check_op(op: &str, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut kinks) = (0.0f64, 0);
    for i in 0..INSTANCES {
        let (f, inputs) = case(op, &mut rng, seed * 1000 + i as u64);
        let (e, k) = relative_error(f.as_ref(), &inputs, &mut rng);
        worst = worst.max(e);
        kinks += k;
    }
    (worst, kinks)
}

/// Toy-profile critic with fixed weights.
pub fn toy_critic(seed: u64) -> (Network, ParamSet) {
    let net = Network::new(discriminator_spec(Profile::Toy, "d", 2)).unwrap();
    let mut params = ParamSet::new();
    net.init(&mut ChaCha8Rng::seed_from_u64(seed), &mut params, &mut BnStore::new()).unwrap();
    (net, params)
}

/// Worst relative error of the gradient-penalty gradient w.r.t. critic
/// parameters over [`INSTANCES`] random interpolates, and the probes
/// discarded at kinks.
pub fn check_penalty_path(seed: u64) -> (f64, usize) {
    let (net, params) = toy_critic(seed);
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Profile::Toy.dims();
    let xs = [2, d.bars, d.steps, d.pitches, 2];
    let (mut worst, mut kinks) = (0.0f64, 0);
    for i in 0..INSTANCES {
        let x = Tensor::new(&xs, values(&mut rng, xs.iter().product())).unwrap();
        // two parameter tensors per instance, cycling through all layers
        let picks = [names[(2 * i) % names.len()].clone(), names[(2 * i + 1) % names.len()].clone()];
        let inputs: Vec<(Vec<usize>, Vec<f64>)> = picks
            .iter()
            .map(|n| {
                let t = params.get(n).unwrap();
                (t.shape().to_vec(), t.to_vec())
            })
            .collect();
        let (net, params, picks, x) = (net.clone(), params.clone(), picks.clone(), x.clone());
        let f = move |ts: &[Tensor]| {
            let mut p = ParamSet::new();
            for (n, t) in params.iter() {
                match picks.iter().position(|q| q == n) {
                    Some(j) => p.insert(n, ts[j].clone()).unwrap(),
                    None => p.insert(n, t.detach()).unwrap(),
                }
            }
            let critic = |y: &Tensor| Ok(net.forward(&p, &mut BnStore::new(), BnMode::Eval, y, &[])?.output);
            gradient_penalty(&critic, &x).unwrap()
        };
        let (e, k) = relative_error(&f, &inputs, &mut rng);
        worst = worst.max(e);
        kinks += k;
    }
    (worst, kinks)
}
