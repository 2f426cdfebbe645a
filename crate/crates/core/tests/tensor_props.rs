use musegan_core::tensor::{backward, leaky_relu, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Random 1-3 dimensional convolution geometry with a whole number of
/// strides, so the transposed output covers the input exactly.
fn geometry() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>, usize, usize, u64)> {
    (1usize..=3)
        .prop_flat_map(|d| {
            (
                prop::collection::vec((1usize..=3, 1usize..=3, 1usize..=3), d),
                1usize..=3,
                1usize..=3,
                any::<u64>(),
            )
        })
        .prop_map(|(axes, a, b, seed)| {
            let k: Vec<usize> = axes.iter().map(|x| x.0).collect();
            let s: Vec<usize> = axes.iter().map(|x| x.1).collect();
            let out: Vec<usize> = axes.iter().map(|x| x.2).collect();
            let n: Vec<usize> = (0..k.len()).map(|i| (out[i] - 1) * s[i] + k[i]).collect();
            (n, k, s, a, b, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // <conv(x, W), y> = <x, conv^T(y, W)> = <W, dW(x, y)>
    #[test]
    fn conv_adjoint_identities((n, k, s, a, b, seed) in geometry()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = 2;
        let mut xs = vec![batch];
        xs.extend(&n);
        xs.push(a);
        let mut ks = k.clone();
        ks.extend([a, b]);
        let x = random(&mut rng, &xs);
        let w = random(&mut rng, &ks);
        let y = x.conv(&w, &s).unwrap();
        let dy = random(&mut rng, y.shape());
        let lhs = dot(&y, &dy);
        let back = dy.transposed_conv_to(&w, &s, &n).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        let mid = dot(&x, &back);
        let dw = x.kernel_grad(&dy, &k, &s).unwrap();
        let rhs = dot(&w, &dw);
        let scale = lhs.abs().max(1.0);
        prop_assert!((lhs - mid).abs() <= 1e-10 * scale, "{} vs {}", lhs, mid);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale, "{} vs {}", lhs, rhs);
    }

    // f(x) = x A x^T / 2 with symmetric A has Hessian A.
    #[test]
    fn hessian_vector_product_on_quadratics(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random(&mut rng, &[n, n]);
        let a = m.add(&m.transpose().unwrap()).unwrap().detach();
        let x = Tensor::param(&[1, n], random(&mut rng, &[1, n]).to_vec()).unwrap();
        let v = random(&mut rng, &[1, n]);
        let f = x.matmul(&a).unwrap().mul(&x).unwrap().sum_all().scale(0.5);
        let g = backward(&f, true).unwrap().wrt(&x);
        let hv = backward(&g.mul(&v).unwrap().sum_all(), false).unwrap().wrt(&x);
        let want = v.matmul(&a).unwrap();
        for (h, w) in hv.data().iter().zip(want.data()) {
            prop_assert!((h - w).abs() <= 1e-8 * w.abs().max(1.0), "{} vs {}", h, w);
        }
    }
}

#[test]
fn tape_replay_reproduces_a_conv_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, &[3, 9, 7, 2]);
    let w1 = Tensor::param(&[3, 2, 2, 4], random(&mut rng, &[3, 2, 2, 4]).to_vec()).unwrap();
    let w2 = Tensor::param(&[2, 2, 3, 4], random(&mut rng, &[2, 2, 3, 4]).to_vec()).unwrap();
    let h = leaky_relu(&x.conv(&w1, &[2, 1]).unwrap(), 0.2);
    let out = h.transposed_conv(&w2, &[1, 2]).unwrap().tanh().square().mean_all();
    let tape = Tape::record(&out);
    assert!(tape.len() >= 6);
    assert!(tape.replay_matches());
    let again = tape.replay();
    assert_eq!(again.last().unwrap()[0].to_bits(), out.item().unwrap().to_bits());
}

#[test]
fn second_order_graph_is_itself_replayable() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = Tensor::param(&[2, 5, 2], random(&mut rng, &[2, 5, 2]).to_vec()).unwrap();
    let w = Tensor::param(&[2, 2, 3], random(&mut rng, &[2, 2, 3]).to_vec()).unwrap();
    let y = leaky_relu(&x.conv(&w, &[1]).unwrap(), 0.2).sum_all();
    let g = backward(&y, true).unwrap().wrt(&x);
    let penalty = g.square().sum_all();
    assert!(Tape::record(&penalty).replay_matches());
    let gw = backward(&penalty, false).unwrap().wrt(&w);
    assert!(gw.data().iter().any(|v| *v != 0.0));
}
