//! Builds a two-layer network on the reverse-mode tape, checks its
//! gradients against central differences and fits it with Adam.
//!
//! cargo run --release --example autodiff_gradcheck

use std::collections::BTreeMap;

use ccr::diffcore::{adam_step, AdamState, Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(params: &ParamStore, x: &Tensor, y: &Tensor) -> ccr::Result<(f64, BTreeMap<String, Tensor>)> {
    let mut g = Graph::new();
    let w1 = g.param("w1", params.require("w1")?.clone());
    let b1 = g.param("b1", params.require("b1")?.clone());
    let w2 = g.param("w2", params.require("w2")?.clone());
    let x = g.constant(x.clone());
    let y = g.constant(y.clone());
    let h = g.matmul(x, w1)?;
    let h = g.add_row_bias(h, b1)?;
    let h = g.tanh(h);
    let out = g.matmul(h, w2)?;
    let err = g.sub(out, y)?;
    let sq = g.sum_sq(err);
    let value = g.value(sq).item();
    let grads = g.backward(sq)?;
    Ok((value, grads.params()))
}

fn main() -> ccr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rand = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let mut params = ParamStore::new();
    params.insert("w1", rand(&[3, 8]));
    params.insert("b1", rand(&[8]));
    params.insert("w2", rand(&[8, 1]));
    let x = rand(&[32, 3]);
    // Target: a fixed nonlinear function of the inputs.
    let y = Tensor::new(
        vec![32, 1],
        (0..32).map(|i| (x.row(i)[0] * x.row(i)[1]).sin() + 0.5 * x.row(i)[2]).collect(),
    )?;

    let (_, analytic) = loss(&params, &x, &y)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for name in ["w1", "b1", "w2"] {
        for i in 0..params.require(name)?.len() {
            let probe = |d: f64| {
                let mut p = params.clone();
                p.get_mut(name).unwrap().data_mut()[i] += d;
                loss(&p, &x, &y).map(|(v, _)| v)
            };
            let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
            let a = analytic[name].data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
        }
    }
    println!("worst relative gradient error: {worst:.2e}");

    let mut state = AdamState::default();
    for step in 0..=500 {
        let (value, grads) = loss(&params, &x, &y)?;
        if step % 100 == 0 {
            println!("step {step:>3}  squared error {value:.5}");
        }
        adam_step(&mut params, &grads, &mut state, 0.01)?;
    }
    Ok(())
}
