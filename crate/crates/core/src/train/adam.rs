use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per store entry.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(cfg: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .entries()
            .iter()
            .map(|e| vec![0.0; e.value.len()])
            .collect();
        Self {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update; entries without a gradient are left alone.
    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>, grads: &[(usize, Tensor<T>)]) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (id, g) in grads {
            let (m, v) = (&mut self.m[*id], &mut self.v[*id]);
            let p = store.entry_mut(*id).value.data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i].as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p[i] = T::of(p[i].as_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EntryKind;

    fn one(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", EntryKind::Param, Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = one(1.0);
        let mut a = Adam::new(AdamConfig::default(), &s);
        a.step(&mut s, &[(0, Tensor::scalar(-3.0))]);
        let moved = s.get("x").unwrap().item() - 1.0;
        assert!((moved - 1e-3 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_parameter() {
        let mut s = one(0.7);
        let mut a = Adam::new(AdamConfig::default(), &s);
        for _ in 0..10 {
            a.step(&mut s, &[(0, Tensor::scalar(0.0))]);
        }
        assert_eq!(s.get("x").unwrap().item(), 0.7);
    }

    #[test]
    fn quadratic_trace_matches_hand_computation() {
        // f(x) = (x - 2)^2, x0 = 0, lr 0.1
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut s = one(0.0);
        let mut a = Adam::new(cfg, &s);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * (s.get("x").unwrap().item() - 2.0);
            a.step(&mut s, &[(0, Tensor::scalar(g))]);
            let gh = 2.0 * (x - 2.0);
            m = 0.9 * m + 0.1 * gh;
            v = 0.999 * v + 0.001 * gh * gh;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((s.get("x").unwrap().item() - x).abs() < 1e-10);
        }
        assert!(x > 0.25 && x < 0.35);
    }
}
