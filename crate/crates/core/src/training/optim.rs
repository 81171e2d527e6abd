//! SGD with momentum and decoupled learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::nn::ParamStore;
use crate::real::Real;

/// Learning-rate schedule over training progress in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Half-period cosine from the base rate to zero.
    Cosine,
    /// Multiply by `gamma` at each milestone (fractions of the run).
    Step { milestones: Vec<f64>, gamma: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Cosine
    }
}

impl Schedule {
    pub fn lr(&self, base: f64, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        match self {
            Schedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()),
            Schedule::Step { milestones, gamma } => base * gamma.powi(milestones.iter().filter(|&&m| p >= m).count() as i32),
        }
    }
}

/// SGD with heavy-ball momentum: `v ← μv + g + λw`, `w ← w − ηv`, where the
/// decay term applies only to parameters flagged for decay.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: ParamStore<T>,
}

impl<T: Real> Sgd<T> {
    pub fn new(params: &ParamStore<T>, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>, lr: f64) {
        let (mu, lr) = (T::of(self.momentum), T::of(lr));
        for ((p, g), v) in params.iter_mut().zip(grads.iter()).zip(self.velocity.iter_mut()) {
            let wd = T::of(if p.decay { self.weight_decay } else { 0.0 });
            ndarray::Zip::from(&mut p.value)
                .and(&g.value)
                .and(&mut v.value)
                .for_each(|w, &g, v| {
                    *v = mu * *v + g + wd * *w;
                    *w -= lr * *v;
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn cosine_endpoints() {
        let s = Schedule::Cosine;
        assert_eq!(s.lr(0.1, 0.0), 0.1);
        assert!((s.lr(0.1, 0.5) - 0.05).abs() < 1e-15);
        assert!(s.lr(0.1, 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_schedule() {
        let s = Schedule::Step {
            milestones: vec![0.5, 0.75],
            gamma: 0.1,
        };
        assert_eq!(s.lr(1.0, 0.2), 1.0);
        assert!((s.lr(1.0, 0.6) - 0.1).abs() < 1e-15);
        assert!((s.lr(1.0, 0.9) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn momentum_and_decay() {
        let mut params = ParamStore::<f64>::new();
        params.add("w", ArrayD::from_elem(IxDyn(&[1]), 1.0), true);
        params.add("b", ArrayD::from_elem(IxDyn(&[1]), 1.0), false);
        let mut grads = params.zeros_like();
        grads.iter_mut().for_each(|g| g.value.fill(0.5));
        let mut opt = Sgd::new(&params, 0.9, 0.1);
        opt.step(&mut params, &grads, 0.1);
        let w = params.iter().map(|p| p.value[[0]]).collect::<Vec<_>>();
        assert!((w[0] - (1.0 - 0.1 * 0.6)).abs() < 1e-15);
        assert!((w[1] - (1.0 - 0.1 * 0.5)).abs() < 1e-15);
        opt.step(&mut params, &grads, 0.1);
        let v0 = 0.9 * 0.6 + 0.5 + 0.1 * w[0];
        assert!((params.iter().next().unwrap().value[[0]] - (w[0] - 0.1 * v0)).abs() < 1e-15);
    }
}
