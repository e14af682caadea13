use serde::{Deserialize, Serialize};

use crate::policy::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        }
    }
}

/// Adam moments for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub t: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Adam {
            t: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], cfg: &AdamConfig) {
        assert!(params.len() == self.m.len() && grad.len() == self.m.len(), "adam size mismatch");
        self.t += 1;
        let c1 = T::cast(1.0 - cfg.beta1.powi(self.t as i32));
        let c2 = T::cast(1.0 - cfg.beta2.powi(self.t as i32));
        let (b1, b2) = (T::cast(cfg.beta1), T::cast(cfg.beta2));
        let (lr, eps) = (T::cast(cfg.lr), T::cast(cfg.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Global L2 norm, computed in double precision.
pub fn global_norm<T: Real>(g: &[T]) -> f64 {
    g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
}

/// Scales `g` so its global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<T: Real>(g: &mut [T], max_norm: f64) -> f64 {
    let norm = global_norm(g);
    if norm > max_norm {
        let s = T::cast(max_norm / (norm + 1e-6));
        for v in g {
            *v *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut a = Adam::<f64>::new(2);
        let mut p = vec![1.0, 1.0];
        a.step(&mut p, &[3.0, -0.5], &cfg);
        assert!((p[0] - (1.0 - cfg.lr * 3.0 / (3.0 + cfg.eps))).abs() < 1e-12);
        assert!(p[1] > 1.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let mut a = Adam::<f64>::new(1);
        let mut p = vec![4.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            a.step(&mut p, &g, &cfg);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![3.0, 4.0]);
        clip_global_norm(&mut g, 0.5);
        assert!((global_norm(&g) - 0.5).abs() < 1e-6);
    }
}
