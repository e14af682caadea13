//! Generalized advantage estimation.

/// `δ_t = r_t + γ·V_{t+1}·(1−done_t) − V_t`, `A_t = δ_t + γλ(1−done_t)·A_{t+1}`,
/// with `bootstrap` standing in for `V_T`. Returns `(advantages, returns)`
/// where `returns = A + V`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae inputs must have equal length");
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let (mean, std) = mean_std(adv);
    for a in adv {
        *a = (*a - mean) / (std + 1e-8);
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[2.0], &[0.5], &[true], 100.0, 0.99, 0.95);
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn telescoped_sum() {
        let (a, _) = compute_gae(&[1.0; 3], &[0.0; 3], &[false; 3], 0.0, 1.0, 1.0);
        assert_eq!(a, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn done_cuts_bootstrap() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 10.0, 1.0, 1.0);
        assert_eq!(a, vec![1.0, 11.0]);
    }

    #[test]
    fn normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let (m, s) = mean_std(&a);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-6);
    }
}
