use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::sim::Action;

/// Diagonal Gaussian over `(linear, angular)` velocity in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
}

impl ActionDistribution {
    pub fn std(&self) -> [f64; 2] {
        [self.log_std[0].exp(), self.log_std[1].exp()]
    }

    /// Draws `mean + std·z`; returns the unclamped sample and the clamped action.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 2], Action) {
        let s = self.std();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let raw = [self.mean[0] + s[0] * z0, self.mean[1] + s[1] * z1];
        (raw, Action::new(raw[0], raw[1]))
    }

    pub fn mean_action(&self) -> Action {
        Action::new(self.mean[0], self.mean[1])
    }

    /// Log density at an unclamped sample.
    pub fn log_prob(&self, raw: [f64; 2]) -> f64 {
        (0..2)
            .map(|i| {
                let z = (raw[i] - self.mean[i]) / self.log_std[i].exp();
                -0.5 * z * z - self.log_std[i] - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 * (2.0 * PI * E).ln()).sum()
    }

    /// Gradients of [`Self::log_prob`] with respect to the mean and log-std.
    pub fn log_prob_grad(&self, raw: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let mut dm = [0.0; 2];
        let mut dl = [0.0; 2];
        for i in 0..2 {
            let var = (2.0 * self.log_std[i]).exp();
            let diff = raw[i] - self.mean[i];
            dm[i] = diff / var;
            dl[i] = diff * diff / var - 1.0;
        }
        (dm, dl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn closed_forms() {
        let d = ActionDistribution {
            mean: [0.1, -0.2],
            log_std: [-1.0, 0.5],
        };
        // -Σ log_std - log 2π
        assert!((d.log_prob(d.mean) - (0.5 - (2.0 * PI).ln())).abs() < 1e-12);
        let unit = ActionDistribution {
            mean: [0.0; 2],
            log_std: [0.0; 2],
        };
        assert!((unit.entropy() - 2.8379).abs() < 1e-4);
        let raw = [0.3, 0.1];
        let (dm, _) = d.log_prob_grad(raw);
        assert!((dm[0] - (0.3 - 0.1) / (-2.0f64).exp()).abs() < 1e-12);
        assert!((dm[1] - (0.1 + 0.2) / 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn log_prob_grad_matches_differences() {
        let d = ActionDistribution {
            mean: [0.2, 0.4],
            log_std: [-0.7, 0.1],
        };
        let raw = [0.5, -0.3];
        let (dm, dl) = d.log_prob_grad(raw);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = d;
            let mut m = d;
            p.mean[i] += h;
            m.mean[i] -= h;
            assert!(((p.log_prob(raw) - m.log_prob(raw)) / (2.0 * h) - dm[i]).abs() < 1e-6);
            let mut p = d;
            let mut m = d;
            p.log_std[i] += h;
            m.log_std[i] -= h;
            assert!(((p.log_prob(raw) - m.log_prob(raw)) / (2.0 * h) - dl[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn tight_samples_and_clamp() {
        let d = ActionDistribution {
            mean: [0.3, 0.0],
            log_std: [-5.0, -5.0],
        };
        let mut rng = stream(0, "t", 0);
        for _ in 0..1000 {
            let (_, a) = d.sample(&mut rng);
            assert!((a.linear - 0.3).abs() < 0.05 && a.angular.abs() < 0.05);
        }
        let wide = ActionDistribution {
            mean: [0.9, 0.0],
            log_std: [0.0, 0.0],
        };
        assert_eq!(wide.mean_action().linear, 0.5);
    }

    #[test]
    fn sample_mean_converges() {
        let d = ActionDistribution {
            mean: [0.1, -0.3],
            log_std: [-1.0, -0.5],
        };
        let mut rng = stream(1, "t", 0);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let (raw, _) = d.sample(&mut rng);
            acc[0] += raw[0];
            acc[1] += raw[1];
        }
        let s = d.std();
        for i in 0..2 {
            assert!((acc[i] / n as f64 - d.mean[i]).abs() < 4.0 * s[i] / (n as f64).sqrt());
        }
    }
}
