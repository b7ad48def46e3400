//! Forward pass and hand-written reverse-mode gradients.
//!
//! Activations are stored time-major with channels innermost: element
//! `(t, a, c)` of a `(T, A, C)` tensor sits at `(t * A + a) * C + c`. Every
//! convolution is lowered to im2col followed by a matrix product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchSpec, ConvSpec, Layers};
use crate::geom::Vec2;
use crate::mesh::CirFrame;
use crate::{Error, Result};

/// Network weights: flat parameter vector plus the per-layer shape index.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchSpec,
    pub layers: Layers,
    pub theta: Vec<f64>,
}

/// He initialization (normal, variance `2 / fan_in`), zero biases. The second
/// convolution of each residual block is additionally scaled by
/// `1 / sqrt(blocks)` so the residual stream keeps its scale without
/// normalization layers.
pub fn build_model(arch: &ArchSpec, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let layers = arch.layers();
    let mut theta = vec![0.0; layers.param_count];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_blocks = layers.groups.iter().map(|g| g.blocks.len()).sum::<usize>().max(1);
    let second_convs: Vec<usize> = layers
        .groups
        .iter()
        .flat_map(|g| g.blocks.iter().map(|b| b.1))
        .collect();
    for (idx, conv) in layers.convs.iter().enumerate() {
        let mut std = (2.0 / conv.fan_in() as f64).sqrt();
        if second_convs.contains(&idx) {
            std /= (total_blocks as f64).sqrt();
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
        for w in &mut theta[conv.weight_offset..conv.bias_offset] {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(ModelParams {
        arch: arch.clone(),
        layers,
        theta,
    })
}

impl ModelParams {
    pub fn from_theta(arch: &ArchSpec, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layers = arch.layers();
        if theta.len() != layers.param_count {
            return Err(Error::domain(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                layers.param_count
            )));
        }
        Ok(ModelParams {
            arch: arch.clone(),
            layers,
            theta,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.arch.tap_count * self.arch.link_count
    }

    /// Bytes of activations kept by [`ModelParams::trace`].
    pub fn trace_bytes(&self) -> usize {
        let acts: usize = self.layers.convs.iter().map(|c| c.output.len()).sum();
        8 * (self.input_len() + acts + self.layers.convs[self.layers.dense_hidden].input.len())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::domain(format!(
                "input has {} values, network expects {} taps × {} links",
                input.len(),
                self.arch.tap_count,
                self.arch.link_count
            )));
        }
        Ok(())
    }

    /// Output for one network input (see [`frame_input`]).
    pub fn forward(&self, input: &[f64]) -> Result<Vec2> {
        let trace = self.trace(input)?;
        let out = trace.output();
        if !(out.x.is_finite() && out.y.is_finite()) {
            return Err(self.non_finite_error(&trace));
        }
        Ok(out)
    }

    /// Forward pass that keeps every activation for [`ModelParams::backward`].
    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let l = &self.layers;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(l.convs.len() + 2);
        let mut x = conv_forward(&l.convs[l.stem], &self.theta, input);
        relu(&mut x);
        acts.push(x);
        for group in &l.groups {
            if let Some(e) = group.entry {
                let mut y = conv_forward(&l.convs[e], &self.theta, acts.last().unwrap());
                relu(&mut y);
                acts.push(y);
            }
            for &(a, b) in &group.blocks {
                let prev = acts.last().unwrap();
                let mut h = conv_forward(&l.convs[a], &self.theta, prev);
                relu(&mut h);
                let mut y = conv_forward(&l.convs[b], &self.theta, &h);
                for (v, p) in y.iter_mut().zip(prev) {
                    *v += p;
                }
                relu(&mut y);
                acts.push(h);
                acts.push(y);
            }
        }
        let last = acts.last().unwrap();
        let c = l.convs[l.dense_hidden].input.channels;
        let mut pooled = vec![0.0; c];
        for chunk in last.chunks_exact(c) {
            for (p, v) in pooled.iter_mut().zip(chunk) {
                *p += v;
            }
        }
        let inv = 1.0 / (last.len() / c) as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);
        let mut hidden = conv_forward(&l.convs[l.dense_hidden], &self.theta, &pooled);
        relu(&mut hidden);
        let out = conv_forward(&l.convs[l.dense_out], &self.theta, &hidden);
        acts.push(pooled);
        acts.push(hidden);
        acts.push(out);
        Ok(Trace {
            input: input.to_vec(),
            acts,
        })
    }

    fn non_finite_error(&self, trace: &Trace) -> Error {
        let names = self.activation_names();
        let bad = trace
            .acts
            .iter()
            .position(|a| a.iter().any(|v| !v.is_finite()))
            .map(|i| names[i].clone())
            .unwrap_or_else(|| "input".into());
        Error::Numerical(format!("non-finite activation first seen at {bad}"))
    }

    fn activation_names(&self) -> Vec<String> {
        let l = &self.layers;
        let mut names = vec![l.conv_name(l.stem)];
        for group in &l.groups {
            if let Some(e) = group.entry {
                names.push(l.conv_name(e));
            }
            for &(a, b) in &group.blocks {
                names.push(l.conv_name(a));
                names.push(l.conv_name(b));
            }
        }
        names.extend([
            "global_pool".to_string(),
            l.conv_name(l.dense_hidden),
            l.conv_name(l.dense_out),
        ]);
        names
    }

    /// Accumulates `d(out · dout) / d theta` into `grad`.
    pub fn backward(&self, trace: &Trace, dout: Vec2, grad: &mut [f64]) {
        let l = &self.layers;
        let acts = &trace.acts;
        let n = acts.len();
        let (pooled, hidden) = (&acts[n - 3], &acts[n - 2]);

        let dy = vec![dout.x, dout.y];
        let mut dh = conv_backward(&l.convs[l.dense_out], &self.theta, hidden, &dy, grad, true);
        relu_mask(&mut dh, hidden);
        let dp = conv_backward(&l.convs[l.dense_hidden], &self.theta, pooled, &dh, grad, true);

        let last = &acts[n - 4];
        let c = dp.len();
        let inv = 1.0 / (last.len() / c) as f64;
        let mut d: Vec<f64> = (0..last.len()).map(|i| dp[i % c] * inv).collect();

        let mut k = n - 4;
        for group in l.groups.iter().rev() {
            for &(a, b) in group.blocks.iter().rev() {
                let y = &acts[k];
                let h = &acts[k - 1];
                let x = &acts[k - 2];
                relu_mask(&mut d, y);
                let mut dh = conv_backward(&l.convs[b], &self.theta, h, &d, grad, true);
                relu_mask(&mut dh, h);
                let dx = conv_backward(&l.convs[a], &self.theta, x, &dh, grad, true);
                for (v, g) in d.iter_mut().zip(&dx) {
                    *v += g;
                }
                k -= 2;
            }
            if let Some(e) = group.entry {
                relu_mask(&mut d, &acts[k]);
                d = conv_backward(&l.convs[e], &self.theta, &acts[k - 1], &d, grad, true);
                k -= 1;
            }
        }
        debug_assert_eq!(k, 0);
        relu_mask(&mut d, &acts[0]);
        conv_backward(&l.convs[l.stem], &self.theta, &trace.input, &d, grad, false);
    }

    /// Names the first layer whose gradient block contains a non-finite value.
    pub(crate) fn check_gradient(&self, grad: &[f64]) -> Result<()> {
        for (idx, conv) in self.layers.convs.iter().enumerate() {
            let block = &grad[conv.weight_offset..conv.bias_offset + conv.output.channels];
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in {}",
                    self.layers.conv_name(idx)
                )));
            }
        }
        Ok(())
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> Vec2 {
        let out = self.acts.last().unwrap();
        Vec2::new(out[0], out[1])
    }

    /// Stored layer outputs, from the stem to the network output.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.acts
    }

    pub fn byte_size(&self) -> usize {
        8 * (self.input.len() + self.acts.iter().map(Vec::len).sum::<usize>())
    }
}

/// Rearranges a `[link][tap]` frame into the network's `(time, antenna)` layout.
pub fn frame_input(frame: &CirFrame) -> Vec<f64> {
    let (links, taps) = (frame.num_links, frame.tap_count);
    let mut out = vec![0.0; links * taps];
    for l in 0..links {
        for t in 0..taps {
            out[t * links + l] = frame.taps[l * taps + t];
        }
    }
    out
}

/// Forward pass on a normalized frame.
pub fn forward(params: &ModelParams, frame: &CirFrame) -> Result<Vec2> {
    if frame.num_links != params.arch.link_count || frame.tap_count != params.arch.tap_count {
        return Err(Error::domain(format!(
            "frame is {} links × {} taps, network expects {} × {}",
            frame.num_links, frame.tap_count, params.arch.link_count, params.arch.tap_count
        )));
    }
    params.forward(&frame_input(frame))
}

/// Evaluates `loss` on the network outputs for `inputs` and returns the loss
/// together with its exact gradient with respect to every parameter.
///
/// `loss` receives one output per input and returns the scalar loss and its
/// derivative with respect to each output.
pub fn gradient<F>(params: &ModelParams, inputs: &[&[f64]], loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Vec2]) -> (f64, Vec<Vec2>),
{
    let traces = inputs
        .iter()
        .map(|x| params.trace(x))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<Vec2> = traces.iter().map(Trace::output).collect();
    if let Some(t) = traces.iter().find(|t| !t.output().iter().all(|v| v.is_finite())) {
        return Err(params.non_finite_error(t));
    }
    let (value, douts) = loss(&outputs);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss is {value}")));
    }
    let mut grad = vec![0.0; params.len()];
    for (trace, dout) in traces.iter().zip(douts) {
        params.backward(trace, dout, &mut grad);
    }
    params.check_gradient(&grad)?;
    Ok((value, grad))
}

fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `d` wherever the post-ReLU activation is not positive.
fn relu_mask(d: &mut [f64], act: &[f64]) {
    for (g, a) in d.iter_mut().zip(act) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `C(m×n) = beta*C + A(m×k)·B(k×n)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(m == 0 || n == 0 || c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every index touched by the kernel.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn im2col(spec: &ConvSpec, x: &[f64]) -> Vec<f64> {
    let (ih, iw, cin) = (spec.input.time, spec.input.antenna, spec.input.channels);
    let (oh, ow) = (spec.output.time, spec.output.antenna);
    let k = spec.kernel;
    let kdim = k * k * cin;
    let mut col = vec![0.0; oh * ow * kdim];
    for o_t in 0..oh {
        for o_a in 0..ow {
            let row = &mut col[(o_t * ow + o_a) * kdim..][..kdim];
            for kt in 0..k {
                let t = (o_t * spec.stride.0 + kt) as isize - spec.pad.0 as isize;
                if t < 0 || t >= ih as isize {
                    continue;
                }
                for ka in 0..k {
                    let a = (o_a * spec.stride.1 + ka) as isize - spec.pad.1 as isize;
                    if a < 0 || a >= iw as isize {
                        continue;
                    }
                    let src = (t as usize * iw + a as usize) * cin;
                    row[(kt * k + ka) * cin..][..cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    col
}

fn col2im(spec: &ConvSpec, dcol: &[f64], dx: &mut [f64]) {
    let (ih, iw, cin) = (spec.input.time, spec.input.antenna, spec.input.channels);
    let (oh, ow) = (spec.output.time, spec.output.antenna);
    let k = spec.kernel;
    let kdim = k * k * cin;
    for o_t in 0..oh {
        for o_a in 0..ow {
            let row = &dcol[(o_t * ow + o_a) * kdim..][..kdim];
            for kt in 0..k {
                let t = (o_t * spec.stride.0 + kt) as isize - spec.pad.0 as isize;
                if t < 0 || t >= ih as isize {
                    continue;
                }
                for ka in 0..k {
                    let a = (o_a * spec.stride.1 + ka) as isize - spec.pad.1 as isize;
                    if a < 0 || a >= iw as isize {
                        continue;
                    }
                    let dst = &mut dx[(t as usize * iw + a as usize) * cin..][..cin];
                    for (d, s) in dst.iter_mut().zip(&row[(kt * k + ka) * cin..][..cin]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn conv_forward(spec: &ConvSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let m = spec.output.time * spec.output.antenna;
    let n = spec.output.channels;
    let kdim = spec.fan_in();
    let bias = &theta[spec.bias_offset..spec.bias_offset + n];
    let mut y = Vec::with_capacity(m * n);
    for _ in 0..m {
        y.extend_from_slice(bias);
    }
    let owned;
    let col: &[f64] = if spec.is_pointwise() {
        x
    } else {
        owned = im2col(spec, x);
        &owned
    };
    let w = &theta[spec.weight_offset..spec.bias_offset];
    gemm(m, kdim, n, col, (kdim, 1), w, (n, 1), 1.0, &mut y, (n, 1));
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_dx` (an empty vector otherwise).
fn conv_backward(
    spec: &ConvSpec,
    theta: &[f64],
    x: &[f64],
    dy: &[f64],
    grad: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let m = spec.output.time * spec.output.antenna;
    let n = spec.output.channels;
    let kdim = spec.fan_in();
    let owned;
    let col: &[f64] = if spec.is_pointwise() {
        x
    } else {
        owned = im2col(spec, x);
        &owned
    };
    {
        let (gw, gb) = grad[spec.weight_offset..spec.bias_offset + n].split_at_mut(spec.weight_len());
        gemm(kdim, m, n, col, (1, kdim), dy, (n, 1), 1.0, gw, (n, 1));
        for row in dy.chunks_exact(n) {
            for (b, g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let w = &theta[spec.weight_offset..spec.bias_offset];
    let mut dcol = vec![0.0; m * kdim];
    gemm(m, n, kdim, dy, (n, 1), w, (1, n), 0.0, &mut dcol, (kdim, 1));
    if spec.is_pointwise() {
        return dcol;
    }
    let mut dx = vec![0.0; spec.input.len()];
    col2im(spec, &dcol, &mut dx);
    dx
}
