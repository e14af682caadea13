//! Recurrent actor-critic: residual convolutional depth encoder, stacked
//! LSTM core, diagonal Gaussian actor head and critic head, with exact
//! reverse-mode gradients.

mod distribution;
mod layers;
mod network;
mod real;

pub use distribution::ActionDistribution;
pub use layers::{avg_pool, col2im, conv_backward, conv_forward, im2col, ConvShape};
pub use network::{
    BlockSpec, OutputGrad, ParamSlot, Policy, PolicyConfig, SeqInput, SeqOutput, Tape, AUX_DIM,
};
pub use real::{gemm, Real};

use crate::error::{Error, Result};
use crate::tasks::Observation;

/// Recurrent memory of one environment, `[layers][hidden]` for `h` and `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> HiddenState<T> {
    pub fn zeros(policy: &Policy) -> Self {
        let n = policy.state_len(1);
        HiddenState {
            h: vec![T::zero(); n],
            c: vec![T::zero(); n],
        }
    }

    pub fn reset(&mut self) {
        self.h.fill(T::zero());
        self.c.fill(T::zero());
    }
}

/// Interleaves per-environment states into the batched `[layers][n][hidden]` layout.
pub fn stack_hidden<T: Real>(policy: &Policy, states: &[&HiddenState<T>]) -> (Vec<T>, Vec<T>) {
    let (layers, hs, n) = (policy.config().layers, policy.config().hidden, states.len());
    let mut h = vec![T::zero(); layers * n * hs];
    let mut c = vec![T::zero(); layers * n * hs];
    for (s, st) in states.iter().enumerate() {
        for l in 0..layers {
            h[(l * n + s) * hs..(l * n + s + 1) * hs].copy_from_slice(&st.h[l * hs..(l + 1) * hs]);
            c[(l * n + s) * hs..(l * n + s + 1) * hs].copy_from_slice(&st.c[l * hs..(l + 1) * hs]);
        }
    }
    (h, c)
}

fn unstack_hidden<T: Real>(policy: &Policy, h: &[T], c: &[T], states: &mut [HiddenState<T>]) {
    let (layers, hs, n) = (policy.config().layers, policy.config().hidden, states.len());
    for (s, st) in states.iter_mut().enumerate() {
        for l in 0..layers {
            st.h[l * hs..(l + 1) * hs].copy_from_slice(&h[(l * n + s) * hs..(l * n + s + 1) * hs]);
            st.c[l * hs..(l + 1) * hs].copy_from_slice(&c[(l * n + s) * hs..(l * n + s + 1) * hs]);
        }
    }
}

impl Policy {
    /// Converts an observation into network inputs: the depth image and the
    /// auxiliary vector (scaled goal distance, goal bearing cos/sin, previous
    /// action in units of its bound).
    pub fn observation_input<T: Real>(&self, obs: &Observation, image: &mut Vec<T>, aux: &mut Vec<T>) -> Result<()> {
        let cfg = self.config();
        if obs.depth.width() != cfg.input_width || obs.depth.height() != cfg.input_height {
            return Err(Error::DimMismatch(format!(
                "observation {}x{} but policy expects {}x{}",
                obs.depth.width(),
                obs.depth.height(),
                cfg.input_width,
                cfg.input_height
            )));
        }
        image.extend(obs.depth.values().iter().map(|&v| T::cast(v as f64)));
        aux.extend([
            T::cast(obs.goal_distance / cfg.goal_distance_scale),
            T::cast(obs.goal_heading.cos()),
            T::cast(obs.goal_heading.sin()),
            T::cast(obs.prev_action.linear / cfg.max_linear),
            T::cast(obs.prev_action.angular / cfg.max_angular),
        ]);
        Ok(())
    }

    /// One recurrent step for a batch of environments. Updates each hidden
    /// state in place and returns the action distributions and values.
    pub fn act<T: Real>(
        &self,
        params: &[T],
        obs: &[Observation],
        hidden: &mut [HiddenState<T>],
    ) -> Result<Vec<(ActionDistribution, f64)>> {
        if obs.len() != hidden.len() {
            return Err(Error::DimMismatch(format!("{} observations, {} hidden states", obs.len(), hidden.len())));
        }
        let n = obs.len();
        let mut images = Vec::with_capacity(n * self.image_len());
        let mut aux = Vec::with_capacity(n * AUX_DIM);
        for o in obs {
            self.observation_input(o, &mut images, &mut aux)?;
        }
        let refs: Vec<&HiddenState<T>> = hidden.iter().collect();
        let (h0, c0) = stack_hidden(self, &refs);
        let starts = vec![false; n];
        let out = self.forward_sequences(
            params,
            &SeqInput {
                n_seq: n,
                len: 1,
                images: &images,
                aux: &aux,
                starts: &starts,
                h0: &h0,
                c0: &c0,
            },
            None,
        )?;
        unstack_hidden(self, &out.h, &out.c, hidden);
        let log_std = [out.log_std[0].as_f64(), out.log_std[1].as_f64()];
        Ok((0..n)
            .map(|i| {
                (
                    ActionDistribution {
                        mean: [out.mean[2 * i].as_f64(), out.mean[2 * i + 1].as_f64()],
                        log_std,
                    },
                    out.value[i].as_f64(),
                )
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    pub(crate) fn tiny() -> PolicyConfig {
        PolicyConfig {
            input_height: 16,
            input_width: 16,
            stem_channels: 4,
            blocks: vec![BlockSpec { channels: 4, stride: 1 }, BlockSpec { channels: 6, stride: 2 }],
            feature_dim: 8,
            hidden: 5,
            ..Default::default()
        }
    }

    fn random_input(p: &Policy, ns: usize, len: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, "input", 0);
        let n = ns * len;
        let images = (0..n * p.image_len()).map(|_| rng.gen::<f64>()).collect();
        let aux = (0..n * AUX_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut starts = vec![false; n];
        starts[0] = true;
        if len > 3 {
            starts[3 * ns + ns - 1] = true;
        }
        let h0 = (0..p.state_len(ns)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let c0 = (0..p.state_len(ns)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        (images, aux, starts, h0, c0)
    }

    #[test]
    fn layout_is_contiguous() {
        let p = Policy::new(PolicyConfig::default()).unwrap();
        let mut next = 0;
        for s in p.slots() {
            assert_eq!(s.range.start, next);
            next = s.range.end;
        }
        assert_eq!(next, p.num_params());
        assert_eq!(PolicyConfig::default().hash(), PolicyConfig::default().hash());
    }

    #[test]
    fn zero_image_finite_and_deterministic() {
        let p = Policy::new(PolicyConfig::default()).unwrap();
        let params: Vec<f32> = p.init_params(3);
        let img = vec![0.0f32; 2 * p.image_len()];
        let a = p.encode(&params, &img, 2).unwrap();
        let b = p.encode(&params, &img, 2).unwrap();
        assert_eq!(a.len(), 2 * 256);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
        assert!(p.encode(&params, &img[1..], 2).is_err());
    }

    #[test]
    fn cropped_input_shapes() {
        let p = Policy::new(PolicyConfig {
            input_height: 58,
            input_width: 58,
            ..Default::default()
        })
        .unwrap();
        let params: Vec<f32> = p.init_params(0);
        assert!(p.encode(&params, &vec![0.5; p.image_len()], 1).is_ok());
    }

    #[test]
    fn stepwise_equals_sequence() {
        let p = Policy::new(tiny()).unwrap();
        let params: Vec<f64> = p.init_params(1);
        let (ns, len) = (2, 6);
        let (images, aux, starts, h0, c0) = random_input(&p, ns, len, 2);
        let full = p
            .forward_sequences(&params, &SeqInput { n_seq: ns, len, images: &images, aux: &aux, starts: &starts, h0: &h0, c0: &c0 }, None)
            .unwrap();
        let (mut h, mut c) = (h0.clone(), c0.clone());
        let il = p.image_len();
        for t in 0..len {
            let r = t * ns..(t + 1) * ns;
            let out = p
                .forward_sequences(
                    &params,
                    &SeqInput {
                        n_seq: ns,
                        len: 1,
                        images: &images[r.start * il..r.end * il],
                        aux: &aux[r.start * AUX_DIM..r.end * AUX_DIM],
                        starts: &starts[r.clone()],
                        h0: &h,
                        c0: &c,
                    },
                    None,
                )
                .unwrap();
            for i in 0..ns {
                assert!((out.value[i] - full.value[t * ns + i]).abs() < 1e-5);
                for k in 0..2 {
                    assert!((out.mean[2 * i + k] - full.mean[2 * (t * ns + i) + k]).abs() < 1e-5);
                }
            }
            (h, c) = (out.h, out.c);
        }
        assert_eq!(h.len(), full.h.len());
    }

    #[test]
    fn reset_discards_previous_state() {
        let p = Policy::new(tiny()).unwrap();
        let params: Vec<f64> = p.init_params(1);
        let (images, aux, _, h0, c0) = random_input(&p, 1, 1, 4);
        let zeros = vec![0.0; p.state_len(1)];
        let run = |h: &[f64], c: &[f64], start: bool| {
            p.forward_sequences(&params, &SeqInput { n_seq: 1, len: 1, images: &images, aux: &aux, starts: &[start], h0: h, c0: c }, None)
                .unwrap()
        };
        assert_eq!(run(&h0, &c0, true), run(&zeros, &zeros, true));
        assert_ne!(run(&h0, &c0, false).value, run(&zeros, &zeros, false).value);
    }

    #[test]
    fn missing_tape() {
        let p = Policy::new(tiny()).unwrap();
        let params: Vec<f64> = p.init_params(1);
        let mut grad = vec![0.0; p.num_params()];
        let g = OutputGrad { d_mean: &[0.0, 0.0], d_log_std: [0.0; 2], d_value: &[0.0] };
        assert!(matches!(p.backward(&params, &Tape::default(), &g, &mut grad), Err(Error::MissingTrace)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Policy::new(tiny()).unwrap();
        let params: Vec<f64> = p.init_params(5);
        let (ns, len) = (2, 8);
        let (images, aux, starts, h0, c0) = random_input(&p, ns, len, 6);
        let n = ns * len;
        let mut rng = stream(7, "coef", 0);
        let cm: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cl = [0.7, -0.3];
        let inp = SeqInput { n_seq: ns, len, images: &images, aux: &aux, starts: &starts, h0: &h0, c0: &c0 };
        let loss = |pr: &[f64]| {
            let o = p.forward_sequences(pr, &inp, None).unwrap();
            o.mean.iter().zip(&cm).map(|(a, b)| a * b).sum::<f64>()
                + o.value.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>()
                + o.log_std[0] * cl[0]
                + o.log_std[1] * cl[1]
        };
        let mut tape = Tape::default();
        p.forward_sequences(&params, &inp, Some(&mut tape)).unwrap();
        let mut grad = vec![0.0; p.num_params()];
        p.backward(&params, &tape, &OutputGrad { d_mean: &cm, d_log_std: cl, d_value: &cv }, &mut grad).unwrap();
        for slot in p.slots() {
            let idx: Vec<usize> = if slot.range.len() <= 20 {
                slot.range.clone().collect()
            } else {
                (0..20).map(|_| rng.gen_range(slot.range.clone())).collect()
            };
            for i in idx {
                let h = 1e-5;
                let mut a = params.clone();
                a[i] += h;
                let mut b = params.clone();
                b[i] -= h;
                let fd = (loss(&a) - loss(&b)) / (2.0 * h);
                let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(err < 1e-3, "{} [{i}]: analytic {} numeric {fd}", slot.name, grad[i]);
            }
        }
    }
}
