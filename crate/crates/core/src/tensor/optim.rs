use std::collections::BTreeMap;

use super::{Tensor, TensorMap};

/// Applies one update to every parameter that has a gradient.
///
/// Parameters without an entry in `grads` (e.g. running statistics) are left
/// untouched.
pub trait Optimizer {
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap);
}

/// Stochastic gradient descent with optional momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: BTreeMap::new() }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap) {
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let v = self.velocity.entry(name.to_string()).or_insert_with(|| Tensor::zeros(g.shape()));
            for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = self.momentum * *vv + gv;
                *pv -= self.lr * *vv;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, moments: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let it = p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data());
            for (((pv, mv), vv), &gv) in it {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> TensorMap {
        let mut m = TensorMap::new();
        m.insert("p", Tensor::full(&[1], v));
        m
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut p = single(1.5);
        let before = p.clone();
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(&mut p, &single(0.0));
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = single(0.0);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut p, &single(1.0));
        // m̂ = v̂ = 1, so the step is lr / (1 + eps)
        let moved = -p.get("p").unwrap().data()[0];
        assert!((moved - 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn skips_parameters_without_gradient() {
        let mut p = single(2.0);
        p.insert("running", Tensor::full(&[1], 7.0));
        let mut opt = Adam::new(0.1);
        opt.step(&mut p, &single(1.0));
        assert_eq!(p.get("running").unwrap().data(), &[7.0]);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut rng = crate::rng::Rng::new(5);
            let mut p = TensorMap::new();
            p.insert("w", Tensor::uniform(&[8], -1.0, 1.0, &mut rng));
            let mut opt = Adam::new(0.01);
            for _ in 0..20 {
                let mut g = TensorMap::new();
                g.insert("w", Tensor::uniform(&[8], -1.0, 1.0, &mut rng));
                opt.step(&mut p, &g);
            }
            p
        };
        let (a, b) = (run(), run());
        let bits = |m: &TensorMap| m.get("w").unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
