use std::collections::BTreeMap;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter, plus the step
/// counter used for bias correction.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One Adam update of `params` in place.
///
/// Every gradient is checked before anything is modified, so a non-finite
/// gradient leaves both parameters and optimizer state untouched. Names
/// present in `grads` but frozen in the store are skipped.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads {
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
        if let Some(p) = params.get(name) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        if let Some(m) = state.first.get(name) {
            if m.len() != g.len() {
                return Err(Error::shape("adam_step", &[m.len()], g.shape()));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);

    for (name, g) in grads {
        if params.is_frozen(name) {
            continue;
        }
        let Some(p) = params.get_mut(name) else {
            continue;
        };
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
            *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    fn single(name: &str, values: Vec<f64>) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert(name, Tensor::vector(values));
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single("w", vec![1.0, -2.0]);
        let mut s = AdamState::new();
        let grads = BTreeMap::from([("w".to_string(), Tensor::vector(vec![0.0, 0.0]))]);
        adam_step(&mut p, &grads, &mut s, 0.1).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = single("w", vec![1.0, 1.0, 1.0]);
        let mut s = AdamState::new();
        let grads = BTreeMap::from([("w".to_string(), Tensor::vector(vec![0.3, -7.0, 1e-3]))]);
        adam_step(&mut p, &grads, &mut s, 0.01).unwrap();
        let w = p.get("w").unwrap().data();
        assert!((w[0] - 0.99).abs() < 1e-6);
        assert!((w[1] - 1.01).abs() < 1e-6);
        assert!((w[2] - 0.99).abs() < 1e-5);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut p = single("w", vec![1.0]);
        let mut s = AdamState::new();
        let grads = BTreeMap::from([("w".to_string(), Tensor::vector(vec![f64::NAN]))]);
        match adam_step(&mut p, &grads, &mut s, 0.1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.get("w").unwrap().data(), &[1.0]);
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut p = single("x", vec![0.0]);
        let mut s = AdamState::new();
        for _ in 0..200 {
            let mut g = Graph::new();
            let x = g.param("x", p.get("x").unwrap().clone());
            let shifted = g.add_scalar(x, -3.0);
            let sq = g.sum_sq(shifted);
            let grads = g.backward(sq).unwrap().params();
            adam_step(&mut p, &grads, &mut s, 0.1).unwrap();
        }
        let x = p.get("x").unwrap().item();
        assert!((x - 3.0).abs() < 0.05, "x = {x}");
    }

    #[test]
    fn frozen_params_are_not_updated() {
        let mut p = single("t", vec![1.0]);
        p.freeze("t");
        let mut s = AdamState::new();
        let grads = BTreeMap::from([("t".to_string(), Tensor::vector(vec![5.0]))]);
        adam_step(&mut p, &grads, &mut s, 0.1).unwrap();
        assert_eq!(p.get("t").unwrap().data(), &[1.0]);
    }
}
