mod common;

use ccr::diffcore::{adam_step, checkpoint, AdamState, Graph, ParamStore, Tensor};
use ccr::Error;
use proptest::prelude::*;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..10 {
        common::gradcheck_all_ops(seed).unwrap();
    }
}

#[test]
fn ncr_loss_matches_finite_differences() {
    for seed in 0..3 {
        let n = common::gradcheck_ncr_loss(seed).unwrap();
        assert!(n > 100, "only {n} entries checked");
    }
}

#[test]
fn square_and_l1_gradients_by_hand() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![3.0]), true);
    let sq = g.mul(x, x).unwrap();
    let root = g.sum(sq);
    assert_eq!(g.backward(root).unwrap().get(x).data(), &[6.0]);

    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![0.5, -0.2, 0.0]), true);
    let root = g.l1_norm(x);
    assert_eq!(g.backward(root).unwrap().get(x).data(), &[1.0, -1.0, 0.0]);
}

#[test]
fn mismatched_shapes_are_errors_not_broadcasts() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[3]));
    let c = g.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(g.add(a, b), Err(Error::Shape { op: "add", .. })));
    assert!(matches!(g.mul(a, c), Err(Error::Shape { op: "mul", .. })));
    assert!(matches!(g.add_row_bias(a, c), Err(Error::Shape { .. })));
    assert!(matches!(g.matmul(a, a), Err(Error::Shape { op: "matmul", .. })));
    let w = g.constant(Tensor::zeros(&[3]));
    assert!(matches!(g.row_lerp(a, a, w), Err(Error::Shape { .. })));
}

#[test]
fn adam_converges_on_quadratic() {
    let mut p = ParamStore::new();
    p.insert("x", Tensor::vector(vec![0.0]));
    let mut state = AdamState::new();
    for _ in 0..200 {
        let mut g = Graph::new();
        let vars = p.register(&mut g);
        let shifted = g.add_scalar(vars["x"], -3.0);
        let root = g.sum_sq(shifted);
        let grads = g.backward(root).unwrap();
        adam_step(&mut p, &grads.params(), &mut state, 0.1).unwrap();
    }
    assert!((p.get("x").unwrap().data()[0] - 3.0).abs() < 0.05);
}

fn small_store() -> impl Strategy<Value = ParamStore> {
    prop::collection::vec((1usize..4, 1usize..4, any::<bool>()), 1..5).prop_flat_map(|specs| {
        let sizes: Vec<usize> = specs.iter().map(|(r, c, _)| r * c).collect();
        let total: usize = sizes.iter().sum();
        prop::collection::vec(-1e6f64..1e6, total).prop_map(move |vals| {
            let mut p = ParamStore::new();
            let mut off = 0;
            for (k, (r, c, frozen)) in specs.iter().enumerate() {
                let name = format!("p{k}");
                p.insert(&name, Tensor::matrix(*r, *c, vals[off..off + r * c].to_vec()).unwrap());
                if *frozen {
                    p.freeze(&name);
                }
                off += r * c;
            }
            p
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_and_backward_are_deterministic(seed in 0u64..1000) {
        let run = || {
            let cases = common::op_cases(seed);
            let (_, inputs, f) = &cases[seed as usize % cases.len()];
            let mut g = Graph::new();
            let vars: Vec<_> = inputs.iter().map(|x| g.input(x.clone(), true)).collect();
            let out = f(&mut g, &vars).unwrap();
            let root = g.sum(out);
            let grads = g.backward(root).unwrap();
            let gs: Vec<Vec<u64>> = vars.iter().map(|v| grads.get(*v).data().iter().map(|x| x.to_bits()).collect()).collect();
            (g.value(out).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), gs)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn finite_inputs_give_finite_outputs(seed in 0u64..1000) {
        for (name, inputs, f) in common::op_cases(seed) {
            let mut g = Graph::new();
            let vars: Vec<_> = inputs.iter().map(|x| g.constant(x.clone())).collect();
            let out = f(&mut g, &vars).unwrap();
            prop_assert!(g.value(out).all_finite(), "{}", name);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_lossless(p in small_store()) {
        let bytes = checkpoint::encode("test", serde_json::json!({"k": 1}), &p).unwrap();
        let (header, back) = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(header.model_kind, "test");
        prop_assert_eq!(back, p);
    }

    #[test]
    fn tensor_length_matches_shape(r in 0usize..5, c in 0usize..5, extra in 1usize..3) {
        prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c]).is_ok());
        prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c + extra]).is_err());
    }
}

#[test]
fn checkpoint_payload_is_little_endian_f64_after_json_header() {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::vector(vec![1.5, -2.0]));
    let bytes = checkpoint::encode("test", serde_json::json!({}), &p).unwrap();
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
    assert!(header.is_object());
    let payload = &bytes[nl + 1..];
    assert_eq!(&payload[..8], &1.5f64.to_le_bytes());
    assert_eq!(&payload[8..16], &(-2.0f64).to_le_bytes());
}

#[test]
fn cosine_of_a_zero_vector_is_zero_with_a_finite_gradient() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2, 3]), true);
    let t = g.input(Tensor::vector(vec![3.0, 0.0, 4.0]), true);
    let c = g.row_cosine(x, t).unwrap();
    assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    let s = g.sum(c);
    let grads = g.backward(s).unwrap();
    let gx = grads.get(x);
    let gx = gx.data();
    let eps = ccr::diffcore::COSINE_EPS;
    let expect = [0.6 / eps, 0.0, 0.8 / eps];
    for (a, b) in gx.iter().zip(expect.iter().cycle()) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(grads.get(t).data().iter().all(|v| *v == 0.0));
}
