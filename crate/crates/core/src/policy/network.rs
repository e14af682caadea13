use std::ops::Range;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{avg_pool, conv_backward, conv_forward, relu_backward, relu_in_place, sigmoid, ConvShape};
use super::real::{gemm, Real};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{MAX_ANGULAR_SPEED, MAX_LINEAR_SPEED};

/// Goal distance, cos/sin of goal bearing, previous linear and angular command.
pub const AUX_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub channels: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Network input size; must equal the (possibly cropped) observation size.
    pub input_height: usize,
    pub input_width: usize,
    /// Average-pooling factor applied to the depth image first.
    pub pool: usize,
    pub stem_channels: usize,
    pub blocks: Vec<BlockSpec>,
    pub feature_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Initial log-std in units of the action bounds.
    pub log_std_init: f64,
    pub log_std_bounds: [f64; 2],
    /// Goal distances are divided by this before entering the network.
    pub goal_distance_scale: f64,
    pub max_linear: f64,
    pub max_angular: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            input_height: 64,
            input_width: 64,
            pool: 2,
            stem_channels: 8,
            blocks: vec![
                BlockSpec { channels: 8, stride: 1 },
                BlockSpec { channels: 16, stride: 2 },
                BlockSpec { channels: 32, stride: 2 },
                BlockSpec { channels: 32, stride: 2 },
            ],
            feature_dim: 256,
            hidden: 192,
            layers: 2,
            log_std_init: 0.0,
            log_std_bounds: [-5.0, 2.0],
            goal_distance_scale: 5.0,
            max_linear: MAX_LINEAR_SPEED,
            max_angular: MAX_ANGULAR_SPEED,
        }
    }
}

impl PolicyConfig {
    /// First 8 bytes of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Clone, Debug)]
struct Dense {
    w: Range<usize>,
    b: Range<usize>,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ConvShape,
    p1: Dense,
    conv2: ConvShape,
    p2: Dense,
    proj: Option<(ConvShape, Dense)>,
}

/// The actor-critic network: a residual convolutional encoder, a stacked
/// LSTM core and linear actor/critic heads over one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Policy {
    cfg: PolicyConfig,
    stem: ConvShape,
    stem_p: Dense,
    blocks: Vec<Block>,
    flat_dim: usize,
    fc: Dense,
    lstm: Vec<Dense>,
    mean: Dense,
    value: Dense,
    log_std: Range<usize>,
    slots: Vec<ParamSlot>,
    num_params: usize,
}

/// Inputs for `n_seq` sequences of `len` steps, stored time-major (sample
/// index `t·n_seq + s`).
#[derive(Clone, Copy, Debug)]
pub struct SeqInput<'a, T> {
    pub n_seq: usize,
    pub len: usize,
    /// `[len·n_seq][height·width]`
    pub images: &'a [T],
    /// `[len·n_seq][AUX_DIM]`
    pub aux: &'a [T],
    /// Episode starts: recurrent state is zeroed before these steps.
    pub starts: &'a [bool],
    /// Initial state, `[layers][n_seq][hidden]`.
    pub h0: &'a [T],
    pub c0: &'a [T],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqOutput<T> {
    /// `[len·n_seq][2]`, physical units.
    pub mean: Vec<T>,
    /// Physical log-std, shared by all samples.
    pub log_std: [T; 2],
    /// `[len·n_seq]`
    pub value: Vec<T>,
    /// Final state, `[layers][n_seq][hidden]`.
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Loss gradients with respect to the network outputs.
#[derive(Clone, Copy, Debug)]
pub struct OutputGrad<'a, T> {
    pub d_mean: &'a [T],
    pub d_log_std: [T; 2],
    pub d_value: &'a [T],
}

#[derive(Clone, Debug, Default)]
struct LstmStep<T> {
    z: Vec<T>,
    gates: Vec<T>,
    c_prev: Vec<T>,
    tanh_c: Vec<T>,
}

/// Activations recorded by a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    recorded: bool,
    n_seq: usize,
    len: usize,
    starts: Vec<bool>,
    pooled: Vec<T>,
    /// Stem output followed by each block's output.
    stages: Vec<Vec<T>>,
    /// First activation inside each block.
    inner: Vec<Vec<T>>,
    flat: Vec<T>,
    feats: Vec<T>,
    /// `[len][layers]`
    steps: Vec<Vec<LstmStep<T>>>,
    top: Vec<T>,
}

impl<T> Tape<T> {
    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

struct Layout {
    slots: Vec<ParamSlot>,
    next: usize,
}

impl Layout {
    fn take(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.next..self.next + len;
        self.next += len;
        self.slots.push(ParamSlot { name, range: r.clone() });
        r
    }

    fn dense(&mut self, name: &str, w_len: usize, b_len: usize) -> Dense {
        Dense {
            w: self.take(format!("{name}.weight"), w_len),
            b: self.take(format!("{name}.bias"), b_len),
        }
    }
}

impl Policy {
    pub fn new(cfg: PolicyConfig) -> Result<Self> {
        if cfg.pool == 0 || cfg.stem_channels == 0 || cfg.feature_dim == 0 || cfg.hidden == 0 || cfg.layers == 0 {
            return Err(Error::InvalidParam("policy sizes must be positive".into()));
        }
        if cfg.blocks.iter().any(|b| b.channels == 0 || b.stride == 0) {
            return Err(Error::InvalidParam("block channels and strides must be positive".into()));
        }
        if !(cfg.log_std_bounds[0] < cfg.log_std_bounds[1]) || !(cfg.goal_distance_scale > 0.0) {
            return Err(Error::InvalidParam("bad log-std bounds or goal scale".into()));
        }
        let (ph, pw) = (cfg.input_height / cfg.pool, cfg.input_width / cfg.pool);
        if ph < 3 || pw < 3 {
            return Err(Error::InvalidParam(format!(
                "input {}x{} too small after pooling",
                cfg.input_height, cfg.input_width
            )));
        }
        let mut lay = Layout {
            slots: Vec::new(),
            next: 0,
        };
        let stem = ConvShape::new(1, cfg.stem_channels, 3, 2, 1, ph, pw);
        let stem_p = lay.dense("stem", stem.weight_len(), stem.cout);
        let mut blocks = Vec::new();
        let (mut c, mut h, mut w) = (stem.cout, stem.ho, stem.wo);
        for (i, spec) in cfg.blocks.iter().enumerate() {
            let conv1 = ConvShape::new(c, spec.channels, 3, spec.stride, 1, h, w);
            let p1 = lay.dense(&format!("block{i}.conv1"), conv1.weight_len(), conv1.cout);
            let conv2 = ConvShape::new(spec.channels, spec.channels, 3, 1, 1, conv1.ho, conv1.wo);
            let p2 = lay.dense(&format!("block{i}.conv2"), conv2.weight_len(), conv2.cout);
            let proj = (spec.stride != 1 || spec.channels != c).then(|| {
                let s = ConvShape::new(c, spec.channels, 1, spec.stride, 0, h, w);
                let p = lay.dense(&format!("block{i}.proj"), s.weight_len(), s.cout);
                (s, p)
            });
            (c, h, w) = (spec.channels, conv1.ho, conv1.wo);
            blocks.push(Block {
                conv1,
                p1,
                conv2,
                p2,
                proj,
            });
        }
        let flat_dim = c * h * w;
        let fc = lay.dense("fc", cfg.feature_dim * flat_dim, cfg.feature_dim);
        let mut lstm = Vec::new();
        for l in 0..cfg.layers {
            let input = if l == 0 { cfg.feature_dim + AUX_DIM } else { cfg.hidden };
            lstm.push(lay.dense(&format!("lstm{l}"), 4 * cfg.hidden * (input + cfg.hidden), 4 * cfg.hidden));
        }
        let mean = lay.dense("actor_mean", 2 * cfg.hidden, 2);
        let value = lay.dense("critic", cfg.hidden, 1);
        let log_std = lay.take("actor_log_std".into(), 2);
        Ok(Policy {
            stem,
            stem_p,
            blocks,
            flat_dim,
            fc,
            lstm,
            mean,
            value,
            log_std,
            num_params: lay.next,
            slots: lay.slots,
            cfg,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn image_len(&self) -> usize {
        self.cfg.input_height * self.cfg.input_width
    }

    pub fn state_len(&self, n_seq: usize) -> usize {
        self.cfg.layers * n_seq * self.cfg.hidden
    }

    fn final_channels(&self) -> usize {
        self.blocks.last().map_or(self.stem.cout, |b| b.conv2.cout)
    }

    fn scale(&self) -> [f64; 2] {
        [self.cfg.max_linear, self.cfg.max_angular]
    }

    /// Fresh parameters from the `policy` sub-stream of `seed`.
    pub fn init_params<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = rng::stream(seed, "policy", 0);
        let mut p = vec![0.0f64; self.num_params];
        let normal = |r: Range<usize>, std: f64, p: &mut [f64], rng: &mut rng::Rng| {
            for v in &mut p[r] {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        };
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        normal(self.stem_p.w.clone(), he(self.stem.patch()), &mut p, &mut rng);
        for b in &self.blocks {
            normal(b.p1.w.clone(), he(b.conv1.patch()), &mut p, &mut rng);
            normal(b.p2.w.clone(), he(b.conv2.patch()), &mut p, &mut rng);
            if let Some((s, d)) = &b.proj {
                normal(d.w.clone(), he(s.patch()), &mut p, &mut rng);
            }
        }
        normal(self.fc.w.clone(), he(self.flat_dim), &mut p, &mut rng);
        let hsz = self.cfg.hidden;
        let bound = 1.0 / (hsz as f64).sqrt();
        for d in &self.lstm {
            for v in &mut p[d.w.clone()] {
                *v = rng.gen_range(-bound..bound);
            }
            // forget gate bias
            for v in &mut p[d.b.start + hsz..d.b.start + 2 * hsz] {
                *v = 1.0;
            }
        }
        normal(self.mean.w.clone(), 0.01, &mut p, &mut rng);
        normal(self.value.w.clone(), bound, &mut p, &mut rng);
        p[self.log_std.clone()].fill(self.cfg.log_std_init);
        p.into_iter().map(T::cast).collect()
    }

    fn check_input<T>(&self, params: &[T], inp: &SeqInput<'_, T>) -> Result<()> {
        let n = inp.n_seq * inp.len;
        let checks = [
            ("params", params.len(), self.num_params),
            ("images", inp.images.len(), n * self.image_len()),
            ("aux", inp.aux.len(), n * AUX_DIM),
            ("starts", inp.starts.len(), n),
            ("h0", inp.h0.len(), self.state_len(inp.n_seq)),
            ("c0", inp.c0.len(), self.state_len(inp.n_seq)),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::DimMismatch(format!("{what}: got {got}, expected {want}")));
            }
        }
        Ok(())
    }

    /// Physical log-std and whether each component sits inside the clamp.
    fn log_std_of<T: Real>(&self, params: &[T]) -> ([T; 2], [bool; 2]) {
        let [lo, hi] = self.cfg.log_std_bounds;
        let s = self.scale();
        let mut out = [T::zero(); 2];
        let mut free = [false; 2];
        for i in 0..2 {
            let raw = params[self.log_std.start + i].as_f64();
            free[i] = (lo..=hi).contains(&raw);
            out[i] = T::cast(raw.clamp(lo, hi) + s[i].ln());
        }
        (out, free)
    }

    /// Visual features `[n][feature_dim]` for `n` images.
    pub fn encode<T: Real>(&self, params: &[T], images: &[T], n: usize) -> Result<Vec<T>> {
        if images.len() != n * self.image_len() || params.len() != self.num_params {
            return Err(Error::DimMismatch(format!(
                "{} image values for {n} images of {}",
                images.len(),
                self.image_len()
            )));
        }
        Ok(self.encode_impl(params, images, n, None))
    }

    fn encode_impl<T: Real>(&self, params: &[T], images: &[T], n: usize, mut tape: Option<&mut Tape<T>>) -> Vec<T> {
        let cfg = &self.cfg;
        let mut col = Vec::new();
        let pooled = avg_pool(images, n, cfg.input_height, cfg.input_width, cfg.pool);
        let mut x = vec![T::zero(); self.stem.out_len(n)];
        conv_forward(
            &pooled,
            n,
            &self.stem,
            &params[self.stem_p.w.clone()],
            &params[self.stem_p.b.clone()],
            &mut x,
            &mut col,
        );
        relu_in_place(&mut x);
        let mut stages = Vec::new();
        let mut inner = Vec::new();
        for b in &self.blocks {
            let mut a1 = vec![T::zero(); b.conv1.out_len(n)];
            conv_forward(&x, n, &b.conv1, &params[b.p1.w.clone()], &params[b.p1.b.clone()], &mut a1, &mut col);
            relu_in_place(&mut a1);
            let mut out = vec![T::zero(); b.conv2.out_len(n)];
            conv_forward(&a1, n, &b.conv2, &params[b.p2.w.clone()], &params[b.p2.b.clone()], &mut out, &mut col);
            match &b.proj {
                Some((s, d)) => {
                    let mut sc = vec![T::zero(); s.out_len(n)];
                    conv_forward(&x, n, s, &params[d.w.clone()], &params[d.b.clone()], &mut sc, &mut col);
                    for (o, v) in out.iter_mut().zip(&sc) {
                        *o += *v;
                    }
                }
                None => {
                    for (o, v) in out.iter_mut().zip(&x) {
                        *o += *v;
                    }
                }
            }
            relu_in_place(&mut out);
            if tape.is_some() {
                stages.push(std::mem::replace(&mut x, out));
                inner.push(a1);
            } else {
                x = out;
            }
        }
        // [c][n][s] -> [n][c·s]
        let channels = self.final_channels();
        let spatial = self.flat_dim / channels;
        let mut flat = vec![T::zero(); n * self.flat_dim];
        for c in 0..channels {
            for img in 0..n {
                let src = &x[(c * n + img) * spatial..(c * n + img + 1) * spatial];
                flat[img * self.flat_dim + c * spatial..img * self.flat_dim + (c + 1) * spatial].copy_from_slice(src);
            }
        }
        let f = cfg.feature_dim;
        let mut feats = vec![T::zero(); n * f];
        gemm(false, true, n, f, self.flat_dim, T::one(), &flat, &params[self.fc.w.clone()], T::zero(), &mut feats);
        let fb = &params[self.fc.b.clone()];
        for row in feats.chunks_mut(f) {
            for (v, &b) in row.iter_mut().zip(fb) {
                *v += b;
            }
        }
        relu_in_place(&mut feats);
        if let Some(t) = tape.as_deref_mut() {
            stages.push(x);
            t.pooled = pooled;
            t.stages = stages;
            t.inner = inner;
            t.flat = flat;
            t.feats = feats.clone();
        }
        feats
    }

    /// Runs the full network over a batch of sequences. When `tape` is
    /// given, the activations needed by [`Policy::backward`] are recorded.
    pub fn forward_sequences<T: Real>(
        &self,
        params: &[T],
        inp: &SeqInput<'_, T>,
        mut tape: Option<&mut Tape<T>>,
    ) -> Result<SeqOutput<T>> {
        self.check_input(params, inp)?;
        let (ns, len) = (inp.n_seq, inp.len);
        let n = ns * len;
        let hs = self.cfg.hidden;
        let f = self.cfg.feature_dim;
        if let Some(t) = tape.as_deref_mut() {
            *t = Tape::default();
        }
        let feats = self.encode_impl(params, inp.images, n, tape.as_deref_mut());

        let mut h = inp.h0.to_vec();
        let mut c = inp.c0.to_vec();
        let mut top = vec![T::zero(); n * hs];
        let mut records = Vec::new();
        for t in 0..len {
            for s in 0..ns {
                if inp.starts[t * ns + s] {
                    for l in 0..self.cfg.layers {
                        let r = (l * ns + s) * hs..(l * ns + s + 1) * hs;
                        h[r.clone()].fill(T::zero());
                        c[r].fill(T::zero());
                    }
                }
            }
            let in0 = f + AUX_DIM;
            let mut x = vec![T::zero(); ns * in0];
            for s in 0..ns {
                let row = t * ns + s;
                x[s * in0..s * in0 + f].copy_from_slice(&feats[row * f..(row + 1) * f]);
                x[s * in0 + f..(s + 1) * in0].copy_from_slice(&inp.aux[row * AUX_DIM..(row + 1) * AUX_DIM]);
            }
            let mut step_rec = Vec::with_capacity(self.cfg.layers);
            for (l, d) in self.lstm.iter().enumerate() {
                let input = x.len() / ns;
                let zw = input + hs;
                let mut z = vec![T::zero(); ns * zw];
                for s in 0..ns {
                    z[s * zw..s * zw + input].copy_from_slice(&x[s * input..(s + 1) * input]);
                    z[s * zw + input..(s + 1) * zw].copy_from_slice(&h[(l * ns + s) * hs..(l * ns + s + 1) * hs]);
                }
                let mut gates = vec![T::zero(); ns * 4 * hs];
                gemm(false, true, ns, 4 * hs, zw, T::one(), &z, &params[d.w.clone()], T::zero(), &mut gates);
                let bias = &params[d.b.clone()];
                let mut c_prev = vec![T::zero(); ns * hs];
                let mut tanh_c = vec![T::zero(); ns * hs];
                let mut h_new = vec![T::zero(); ns * hs];
                for s in 0..ns {
                    let g = &mut gates[s * 4 * hs..(s + 1) * 4 * hs];
                    for (v, &b) in g.iter_mut().zip(bias) {
                        *v += b;
                    }
                    for j in 0..hs {
                        let i_g = sigmoid(g[j]);
                        let f_g = sigmoid(g[hs + j]);
                        let g_g = g[2 * hs + j].tanh();
                        let o_g = sigmoid(g[3 * hs + j]);
                        g[j] = i_g;
                        g[hs + j] = f_g;
                        g[2 * hs + j] = g_g;
                        g[3 * hs + j] = o_g;
                        let ci = (l * ns + s) * hs + j;
                        c_prev[s * hs + j] = c[ci];
                        let cn = f_g * c[ci] + i_g * g_g;
                        let tc = cn.tanh();
                        c[ci] = cn;
                        h[ci] = o_g * tc;
                        tanh_c[s * hs + j] = tc;
                        h_new[s * hs + j] = o_g * tc;
                    }
                }
                if tape.is_some() {
                    step_rec.push(LstmStep {
                        z,
                        gates,
                        c_prev,
                        tanh_c,
                    });
                }
                x = h_new;
            }
            top[t * ns * hs..(t + 1) * ns * hs].copy_from_slice(&x);
            if tape.is_some() {
                records.push(step_rec);
            }
        }

        let scale = self.scale();
        let mut mean = vec![T::zero(); n * 2];
        gemm(false, true, n, 2, hs, T::one(), &top, &params[self.mean.w.clone()], T::zero(), &mut mean);
        let mb = &params[self.mean.b.clone()];
        for row in mean.chunks_mut(2) {
            for k in 0..2 {
                row[k] = (row[k] + mb[k]) * T::cast(scale[k]);
            }
        }
        let mut value = vec![T::zero(); n];
        gemm(false, true, n, 1, hs, T::one(), &top, &params[self.value.w.clone()], T::zero(), &mut value);
        let vb = params[self.value.b.start];
        for v in &mut value {
            *v += vb;
        }
        let (log_std, _) = self.log_std_of(params);

        if let Some(t) = tape {
            t.recorded = true;
            t.n_seq = ns;
            t.len = len;
            t.starts = inp.starts.to_vec();
            t.steps = records;
            t.top = top;
        }
        Ok(SeqOutput {
            mean,
            log_std,
            value,
            h,
            c,
        })
    }

    /// Accumulates parameter gradients into `grad` by reverse-mode
    /// differentiation over `tape`, through time back to the first step of
    /// each sequence (the initial state is treated as a constant).
    pub fn backward<T: Real>(&self, params: &[T], tape: &Tape<T>, g: &OutputGrad<'_, T>, grad: &mut [T]) -> Result<()> {
        if !tape.recorded {
            return Err(Error::MissingTrace);
        }
        let (ns, len) = (tape.n_seq, tape.len);
        let n = ns * len;
        let hs = self.cfg.hidden;
        let f = self.cfg.feature_dim;
        if g.d_mean.len() != n * 2 || g.d_value.len() != n || grad.len() != self.num_params || params.len() != self.num_params {
            return Err(Error::DimMismatch("output gradient does not match the recorded batch".into()));
        }

        // heads
        let scale = self.scale();
        let mut d_pre = vec![T::zero(); n * 2];
        for (i, v) in d_pre.iter_mut().enumerate() {
            *v = g.d_mean[i] * T::cast(scale[i % 2]);
        }
        gemm(true, false, 2, hs, n, T::one(), &d_pre, &tape.top, T::one(), &mut grad[self.mean.w.clone()]);
        for row in d_pre.chunks(2) {
            grad[self.mean.b.start] += row[0];
            grad[self.mean.b.start + 1] += row[1];
        }
        gemm(true, false, 1, hs, n, T::one(), g.d_value, &tape.top, T::one(), &mut grad[self.value.w.clone()]);
        grad[self.value.b.start] += g.d_value.iter().copied().sum::<T>();
        let mut d_top = vec![T::zero(); n * hs];
        gemm(false, false, n, hs, 2, T::one(), &d_pre, &params[self.mean.w.clone()], T::zero(), &mut d_top);
        gemm(false, false, n, hs, 1, T::one(), g.d_value, &params[self.value.w.clone()], T::one(), &mut d_top);
        let (_, free) = self.log_std_of(params);
        for i in 0..2 {
            if free[i] {
                grad[self.log_std.start + i] += g.d_log_std[i];
            }
        }

        // recurrent core, newest step first
        let layers = self.cfg.layers;
        let mut dh_carry = vec![T::zero(); layers * ns * hs];
        let mut dc_carry = vec![T::zero(); layers * ns * hs];
        let mut d_feats = vec![T::zero(); n * f];
        for t in (0..len).rev() {
            let mut d_above = d_top[t * ns * hs..(t + 1) * ns * hs].to_vec();
            for l in (0..layers).rev() {
                let rec = &tape.steps[t][l];
                let d = &self.lstm[l];
                let zw = rec.z.len() / ns;
                let input = zw - hs;
                let mut dgates = vec![T::zero(); ns * 4 * hs];
                for s in 0..ns {
                    let gt = &rec.gates[s * 4 * hs..(s + 1) * 4 * hs];
                    let dg = &mut dgates[s * 4 * hs..(s + 1) * 4 * hs];
                    for j in 0..hs {
                        let k = (l * ns + s) * hs + j;
                        let dh = dh_carry[k] + d_above[s * hs + j];
                        let (i_g, f_g, g_g, o_g) = (gt[j], gt[hs + j], gt[2 * hs + j], gt[3 * hs + j]);
                        let tc = rec.tanh_c[s * hs + j];
                        let dct = dc_carry[k] + dh * o_g * (T::one() - tc * tc);
                        dg[j] = dct * g_g * i_g * (T::one() - i_g);
                        dg[hs + j] = dct * rec.c_prev[s * hs + j] * f_g * (T::one() - f_g);
                        dg[2 * hs + j] = dct * i_g * (T::one() - g_g * g_g);
                        dg[3 * hs + j] = dh * tc * o_g * (T::one() - o_g);
                        dc_carry[k] = dct * f_g;
                    }
                }
                gemm(true, false, 4 * hs, zw, ns, T::one(), &dgates, &rec.z, T::one(), &mut grad[d.w.clone()]);
                for row in dgates.chunks(4 * hs) {
                    for (acc, &v) in grad[d.b.clone()].iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let mut dz = vec![T::zero(); ns * zw];
                gemm(false, false, ns, zw, 4 * hs, T::one(), &dgates, &params[d.w.clone()], T::zero(), &mut dz);
                let mut dx = vec![T::zero(); ns * input];
                for s in 0..ns {
                    dx[s * input..(s + 1) * input].copy_from_slice(&dz[s * zw..s * zw + input]);
                    dh_carry[(l * ns + s) * hs..(l * ns + s + 1) * hs].copy_from_slice(&dz[s * zw + input..(s + 1) * zw]);
                }
                d_above = dx;
            }
            for s in 0..ns {
                let row = t * ns + s;
                d_feats[row * f..(row + 1) * f].copy_from_slice(&d_above[s * (f + AUX_DIM)..s * (f + AUX_DIM) + f]);
                if tape.starts[row] {
                    for l in 0..layers {
                        let r = (l * ns + s) * hs..(l * ns + s + 1) * hs;
                        dh_carry[r.clone()].fill(T::zero());
                        dc_carry[r].fill(T::zero());
                    }
                }
            }
        }

        // encoder
        relu_backward(&tape.feats, &mut d_feats);
        gemm(true, false, f, self.flat_dim, n, T::one(), &d_feats, &tape.flat, T::one(), &mut grad[self.fc.w.clone()]);
        for row in d_feats.chunks(f) {
            for (acc, &v) in grad[self.fc.b.clone()].iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut d_flat = vec![T::zero(); n * self.flat_dim];
        gemm(false, false, n, self.flat_dim, f, T::one(), &d_feats, &params[self.fc.w.clone()], T::zero(), &mut d_flat);
        let last = tape.stages.last().expect("stem stage");
        let channels = self.final_channels();
        let spatial = self.flat_dim / channels;
        let mut d_x = vec![T::zero(); last.len()];
        for c in 0..channels {
            for img in 0..n {
                d_x[(c * n + img) * spatial..(c * n + img + 1) * spatial]
                    .copy_from_slice(&d_flat[img * self.flat_dim + c * spatial..img * self.flat_dim + (c + 1) * spatial]);
            }
        }
        let mut col = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate().rev() {
            let x_in = &tape.stages[bi];
            let out = &tape.stages[bi + 1];
            let a1 = &tape.inner[bi];
            relu_backward(out, &mut d_x);
            let dz = d_x;
            let mut d_a1 = vec![T::zero(); a1.len()];
            {
                let (dw, db) = split_wb(grad, &b.p2);
                conv_backward(a1, n, &b.conv2, &params[b.p2.w.clone()], &dz, dw, db, Some(&mut d_a1), &mut col);
            }
            relu_backward(a1, &mut d_a1);
            let mut d_in = vec![T::zero(); x_in.len()];
            {
                let (dw, db) = split_wb(grad, &b.p1);
                conv_backward(x_in, n, &b.conv1, &params[b.p1.w.clone()], &d_a1, dw, db, Some(&mut d_in), &mut col);
            }
            match &b.proj {
                Some((s, p)) => {
                    let (dw, db) = split_wb(grad, p);
                    conv_backward(x_in, n, s, &params[p.w.clone()], &dz, dw, db, Some(&mut d_in), &mut col);
                }
                None => {
                    for (a, v) in d_in.iter_mut().zip(&dz) {
                        *a += *v;
                    }
                }
            }
            d_x = d_in;
        }
        relu_backward(&tape.stages[0], &mut d_x);
        let (dw, db) = split_wb(grad, &self.stem_p);
        conv_backward(&tape.pooled, n, &self.stem, &params[self.stem_p.w.clone()], &d_x, dw, db, None, &mut col);
        Ok(())
    }
}

/// Disjoint mutable views of a layer's weight and bias gradients.
fn split_wb<'a, T>(grad: &'a mut [T], d: &Dense) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(d.w.end, d.b.start);
    let (w, rest) = grad[d.w.start..d.b.end].split_at_mut(d.w.len());
    (w, rest)
}
