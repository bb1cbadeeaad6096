//! Forward pass, loss and exact reverse-mode gradients.
//!
//! Convolutions run per sample through im2col and GEMM; the dense section
//! runs on the whole batch at once. Per-sample convolution gradients are
//! summed in sample order, so results do not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{LayerParams, LayerSpec, NetworkParams, CELL_OUTPUTS};
use super::scalar::{gemm, Mat, Real};
use crate::depth::DepthMap;
use crate::error::{invalid, Error, Result};
use crate::grid::CellVector;
use crate::synth::GroundTruthGrid;

/// Weights of the occupancy cross-entropy and the switched box regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_h: f64,
    pub lambda_l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_h: 1.0,
            lambda_l2: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_h >= 0.0 && self.lambda_l2 >= 0.0) {
            return Err(invalid("loss weights must be non-negative"));
        }
        if self.lambda_h == 0.0 && self.lambda_l2 == 0.0 {
            return Err(invalid("loss weights cannot both be zero"));
        }
        Ok(())
    }
}

/// Decoded network output: one `(x, y, w, h, n, p)` vector per cell, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    pub s: usize,
    pub cells: Vec<CellVector>,
}

/// Height above the floor as a fraction of the floor depth: floor is 0.
pub fn normalize_input<T: Real>(image: &DepthMap) -> Vec<T> {
    let floor = image.floor_depth() as f64;
    image
        .depths()
        .iter()
        .map(|&d| T::from_f64(((floor - d as f64) / floor).max(0.0)))
        .collect()
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, col: &mut Vec<T>) {
    let hw = h * w;
    col.clear();
    col.resize(c * 9 * hw, T::zero());
    for ci in 0..c {
        let src = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let dst = &mut row[y * w + x_lo..y * w + x_hi];
                    let s0 = sy * w + x_lo + kx - 1;
                    dst.copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    dx.iter_mut().for_each(|v| *v = T::zero());
    for ci in 0..c {
        let dst = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let s0 = sy * w + x_lo + kx - 1;
                    for (d, &g) in dst[s0..s0 + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&row[y * w + x_lo..y * w + x_hi])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Real>(x: &[T], spec: LayerSpec, p: &LayerParams<T>, col: &mut Vec<T>) -> Vec<T> {
    let LayerSpec::Conv { cin, cout, h, w } = spec else {
        unreachable!()
    };
    let hw = h * w;
    im2col(x, cin, h, w, col);
    let mut out = vec![T::zero(); cout * hw];
    for (o, row) in out.chunks_exact_mut(hw).enumerate() {
        row.iter_mut().for_each(|v| *v = p.bias[o]);
    }
    gemm(Mat::new(&p.weight, cout, cin * 9), Mat::new(col, cin * 9, hw), T::one(), &mut out);
    for v in &mut out {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

fn pool_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for y in 0..oh {
            let r0 = &plane[2 * y * w..];
            let r1 = &plane[(2 * y + 1) * w..];
            for xx in 0..ow {
                let m = r0[2 * xx].max(r0[2 * xx + 1]).max(r1[2 * xx]).max(r1[2 * xx + 1]);
                out.push(m);
            }
        }
    }
    out
}

/// Routes each pooled gradient to the first maximal input of its window.
fn pool_backward<T: Real>(x: &[T], dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let base = ci * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let cand = [
                    base + 2 * y * w + 2 * xx,
                    base + 2 * y * w + 2 * xx + 1,
                    base + (2 * y + 1) * w + 2 * xx,
                    base + (2 * y + 1) * w + 2 * xx + 1,
                ];
                let mut best = cand[0];
                for &i in &cand[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                dx[best] += dy[ci * oh * ow + y * ow + xx];
            }
        }
    }
    dx
}

/// Activations of the convolutional section: `acts[0]` is the input and
/// `acts[i + 1]` the output of layer `i`.
fn conv_section<T: Real>(params: &NetworkParams<T>, specs: &[LayerSpec], input: &[T]) -> Vec<Vec<T>> {
    let mut acts = vec![input.to_vec()];
    let mut col = Vec::new();
    let mut pi = 0;
    for &spec in specs {
        let x = acts.last().unwrap();
        let y = match spec {
            LayerSpec::Conv { .. } => {
                let y = conv_forward(x, spec, &params.layers[pi], &mut col);
                pi += 1;
                y
            }
            LayerSpec::Pool { c, h, w } => pool_forward(x, c, h, w),
            LayerSpec::Dense { .. } => unreachable!("dense layer in conv section"),
        };
        acts.push(y);
    }
    acts
}

/// Gradients of the conv section for one sample, given the gradient at its output.
fn conv_section_backward<T: Real>(
    params: &NetworkParams<T>,
    specs: &[LayerSpec],
    acts: &[Vec<T>],
    d_out: Vec<T>,
) -> Vec<LayerParams<T>> {
    let n_conv = specs.iter().filter(|s| matches!(s, LayerSpec::Conv { .. })).count();
    let mut grads: Vec<Option<LayerParams<T>>> = vec![None; n_conv];
    let mut pi = n_conv;
    let mut dy = d_out;
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    for (li, &spec) in specs.iter().enumerate().rev() {
        let x = &acts[li];
        let y = &acts[li + 1];
        match spec {
            LayerSpec::Pool { c, h, w } => {
                dy = pool_backward(x, &dy, c, h, w);
            }
            LayerSpec::Conv { cin, cout, h, w } => {
                pi -= 1;
                let hw = h * w;
                for (g, &out) in dy.iter_mut().zip(y.iter()) {
                    if out <= T::zero() {
                        *g = T::zero();
                    }
                }
                im2col(x, cin, h, w, &mut col);
                let mut gw = vec![T::zero(); cout * cin * 9];
                gemm(Mat::new(&dy, cout, hw), Mat::new(&col, cin * 9, hw).t(), T::zero(), &mut gw);
                let gb = dy.chunks_exact(hw).map(|r| r.iter().fold(T::zero(), |a, &v| a + v)).collect();
                grads[pi] = Some(LayerParams { weight: gw, bias: gb });
                if li > 0 {
                    dcol.clear();
                    dcol.resize(cin * 9 * hw, T::zero());
                    gemm(
                        Mat::new(&params.layers[pi].weight, cout, cin * 9).t(),
                        Mat::new(&dy, cout, hw),
                        T::zero(),
                        &mut dcol,
                    );
                    let mut dx = vec![T::zero(); cin * hw];
                    col2im(&dcol, cin, h, w, &mut dx);
                    dy = dx;
                }
            }
            LayerSpec::Dense { .. } => unreachable!(),
        }
    }
    grads.into_iter().map(|g| g.expect("every conv layer visited")).collect()
}

struct DenseActs<T> {
    /// `acts[0]` is the stacked feature matrix, `acts[i + 1]` the output of dense layer `i`.
    acts: Vec<Vec<T>>,
}

fn dense_forward<T: Real>(params: &NetworkParams<T>, specs: &[LayerSpec], first: usize, feats: Vec<T>, batch: usize) -> DenseActs<T> {
    let mut acts = vec![feats];
    for (k, &spec) in specs.iter().enumerate() {
        let LayerSpec::Dense { nin, nout, relu } = spec else {
            unreachable!()
        };
        let p = &params.layers[first + k];
        let mut z = Vec::with_capacity(batch * nout);
        for _ in 0..batch {
            z.extend_from_slice(&p.bias);
        }
        gemm(Mat::new(acts.last().unwrap(), batch, nin), Mat::new(&p.weight, nin, nout), T::one(), &mut z);
        if relu {
            for v in &mut z {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        acts.push(z);
    }
    DenseActs { acts }
}

fn split_specs(params: &NetworkParams<impl Real>) -> (Vec<LayerSpec>, Vec<LayerSpec>, usize) {
    let specs = params.arch.layers();
    let fd = params.arch.first_dense();
    let n_conv_params = specs[..fd].iter().filter(|s| s.param_shapes().is_some()).count();
    let dense = specs[fd..].to_vec();
    let conv = specs[..fd].to_vec();
    (conv, dense, n_conv_params)
}

fn check_input<T: Real>(params: &NetworkParams<T>, input: &[T]) -> Result<()> {
    if input.len() != params.arch.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, network expects {}x{}",
            input.len(),
            params.arch.input_width,
            params.arch.input_height
        )));
    }
    Ok(())
}

/// Raw head outputs for a batch of normalised inputs, `B x 6 s^2` row-major.
pub fn forward_raw_batch<T: Real>(params: &NetworkParams<T>, inputs: &[&[T]]) -> Result<Vec<T>> {
    for x in inputs {
        check_input(params, x)?;
    }
    let (conv, dense, first) = split_specs(params);
    let feats: Vec<Vec<T>> = inputs
        .par_iter()
        .map(|x| conv_section(params, &conv, x).pop().unwrap())
        .collect();
    let stacked = feats.concat();
    let mut d = dense_forward(params, &dense, first, stacked, inputs.len());
    Ok(d.acts.pop().unwrap())
}

pub fn forward_raw<T: Real>(params: &NetworkParams<T>, input: &[T]) -> Result<Vec<T>> {
    forward_raw_batch(params, &[input])
}

/// Applies the per-cell softmax to raw head outputs.
pub fn outputs_to_prediction<T: Real>(raw: &[T], s: usize) -> GridPrediction {
    let cells = raw
        .chunks_exact(CELL_OUTPUTS)
        .map(|o| {
            let (ln, lp) = (o[4].as_f64(), o[5].as_f64());
            let m = ln.max(lp);
            let (en, ep) = ((ln - m).exp(), (lp - m).exp());
            let z = en + ep;
            CellVector {
                x: o[0].as_f64() as f32,
                y: o[1].as_f64() as f32,
                w: o[2].as_f64() as f32,
                h: o[3].as_f64() as f32,
                n: (en / z) as f32,
                p: (ep / z) as f32,
            }
        })
        .collect();
    GridPrediction { s, cells }
}

/// Runs the network on a depth image of the architecture's input size.
pub fn forward(params: &NetworkParams<f32>, image: &DepthMap) -> Result<GridPrediction> {
    if image.width() != params.arch.input_width || image.height() != params.arch.input_height {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs network input {}x{}",
            image.width(),
            image.height(),
            params.arch.input_width,
            params.arch.input_height
        )));
    }
    let raw = forward_raw(params, &normalize_input::<f32>(image))?;
    Ok(outputs_to_prediction(&raw, params.arch.grid))
}

fn check_truth(s: usize, truth: &GroundTruthGrid) -> Result<()> {
    if truth.grid.s != s || truth.cells.len() != s * s {
        return Err(Error::ShapeMismatch(format!(
            "truth grid {}x{} vs prediction grid {s}x{s}",
            truth.grid.s, truth.grid.s
        )));
    }
    Ok(())
}

/// Sum over cells of `lambda_h * CE((n, p)_gt, (n, p)) + lambda_l2 * p_gt * |xywh - xywh_gt|^2`.
///
/// Cross-entropy terms with a zero target contribute nothing, so an exact
/// one-hot prediction of a one-hot truth scores zero.
pub fn loss(pred: &GridPrediction, truth: &GroundTruthGrid, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    check_truth(pred.s, truth)?;
    if pred.cells.len() != truth.cells.len() {
        return Err(Error::ShapeMismatch("prediction cell count".into()));
    }
    let mut total = 0.0;
    for (p, t) in pred.cells.iter().zip(&truth.cells) {
        let vals = [p.x, p.y, p.w, p.h, p.n, p.p];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite prediction"));
        }
        let xent = |target: f32, prob: f32| -> f64 {
            if target == 0.0 {
                0.0
            } else {
                -(target as f64) * (prob as f64).ln()
            }
        };
        total += w.lambda_h * (xent(t.n, p.n) + xent(t.p, p.p));
        if t.p != 0.0 {
            let sq: f64 = p
                .spatial()
                .iter()
                .zip(t.spatial())
                .map(|(&a, b)| (a as f64 - b as f64).powi(2))
                .sum();
            total += w.lambda_l2 * t.p as f64 * sq;
        }
    }
    Ok(total)
}

/// Loss of one sample from raw outputs; when `grad` is given, writes
/// `scale * dL/d(raw)` into it.
pub(crate) fn head_loss<T: Real>(raw: &[T], truth: &GroundTruthGrid, w: &LossWeights, grad: Option<&mut [T]>, scale: f64) -> f64 {
    let mut total = 0.0;
    let mut grad = grad;
    for (i, (o, t)) in raw.chunks_exact(CELL_OUTPUTS).zip(&truth.cells).enumerate() {
        let (ln, lp) = (o[4].as_f64(), o[5].as_f64());
        let m = ln.max(lp);
        let lse = m + ((ln - m).exp() + (lp - m).exp()).ln();
        let (log_n, log_p) = (ln - lse, lp - lse);
        let (tn, tp) = (t.n as f64, t.p as f64);
        total += w.lambda_h * -(tn * log_n + tp * log_p);
        let tgt = [t.x, t.y, t.w, t.h];
        if tp != 0.0 {
            for k in 0..4 {
                let e = o[k].as_f64() - tgt[k] as f64;
                total += w.lambda_l2 * tp * e * e;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            let g = &mut g[i * CELL_OUTPUTS..(i + 1) * CELL_OUTPUTS];
            let (sn, sp) = (log_n.exp(), log_p.exp());
            // d/dlogit of -(tn log n + tp log p) is softmax*(tn+tp) - target
            g[4] = T::from_f64(scale * w.lambda_h * (sn * (tn + tp) - tn));
            g[5] = T::from_f64(scale * w.lambda_h * (sp * (tn + tp) - tp));
            for k in 0..4 {
                g[k] = if tp != 0.0 {
                    T::from_f64(scale * 2.0 * w.lambda_l2 * tp * (o[k].as_f64() - tgt[k] as f64))
                } else {
                    T::zero()
                };
            }
        }
    }
    total
}

/// Mean loss over a batch and its exact gradient with respect to every parameter.
pub fn loss_and_grad<T: Real>(
    params: &NetworkParams<T>,
    inputs: &[&[T]],
    truths: &[&GroundTruthGrid],
    w: &LossWeights,
) -> Result<(f64, NetworkParams<T>)> {
    w.validate()?;
    if inputs.is_empty() || inputs.len() != truths.len() {
        return Err(invalid("batch needs matching, non-empty inputs and truths"));
    }
    for (x, t) in inputs.iter().zip(truths) {
        check_input(params, x)?;
        check_truth(params.arch.grid, t)?;
    }
    let batch = inputs.len();
    let (conv, dense, first) = split_specs(params);

    let conv_acts: Vec<Vec<Vec<T>>> = inputs.par_iter().map(|x| conv_section(params, &conv, x)).collect();
    let feat_len = conv_acts[0].last().unwrap().len();
    let mut stacked = Vec::with_capacity(batch * feat_len);
    for a in &conv_acts {
        stacked.extend_from_slice(a.last().unwrap());
    }
    let d = dense_forward(params, &dense, first, stacked, batch);

    let head = params.arch.head_len();
    let out = d.acts.last().unwrap();
    let mut dz = vec![T::zero(); batch * head];
    let scale = 1.0 / batch as f64;
    let mut total = 0.0;
    for b in 0..batch {
        total += head_loss(
            &out[b * head..(b + 1) * head],
            truths[b],
            w,
            Some(&mut dz[b * head..(b + 1) * head]),
            scale,
        );
    }
    let mean = total * scale;

    let mut grads = NetworkParams::<T>::zeros(&params.arch)?;
    for (k, &spec) in dense.iter().enumerate().rev() {
        let LayerSpec::Dense { nin, nout, .. } = spec else {
            unreachable!()
        };
        let a_in = &d.acts[k];
        let g = &mut grads.layers[first + k];
        gemm(Mat::new(a_in, batch, nin).t(), Mat::new(&dz, batch, nout), T::zero(), &mut g.weight);
        for row in dz.chunks_exact(nout) {
            for (gb, &v) in g.bias.iter_mut().zip(row) {
                *gb += v;
            }
        }
        let mut da = vec![T::zero(); batch * nin];
        gemm(
            Mat::new(&dz, batch, nout),
            Mat::new(&params.layers[first + k].weight, nin, nout).t(),
            T::zero(),
            &mut da,
        );
        if k > 0 {
            // previous dense layer had a ReLU
            for (g, &a) in da.iter_mut().zip(a_in) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        dz = da;
    }

    let per_sample: Vec<Vec<LayerParams<T>>> = conv_acts
        .into_par_iter()
        .enumerate()
        .map(|(b, acts)| conv_section_backward(params, &conv, &acts, dz[b * feat_len..(b + 1) * feat_len].to_vec()))
        .collect();
    for sample in per_sample {
        for (acc, g) in grads.layers.iter_mut().zip(sample) {
            for (a, v) in acc.weight.iter_mut().zip(g.weight) {
                *a += v;
            }
            for (a, v) in acc.bias.iter_mut().zip(g.bias) {
                *a += v;
            }
        }
    }
    Ok((mean, grads))
}

/// Loss and gradients for a single image.
pub fn backward(
    params: &NetworkParams<f32>,
    image: &DepthMap,
    truth: &GroundTruthGrid,
    w: &LossWeights,
) -> Result<(f64, NetworkParams<f32>)> {
    let x = normalize_input::<f32>(image);
    loss_and_grad(params, &[&x], &[truth], w)
}

/// Mean batch loss without gradients.
pub fn batch_loss<T: Real>(params: &NetworkParams<T>, inputs: &[&[T]], truths: &[&GroundTruthGrid], w: &LossWeights) -> Result<f64> {
    let raw = forward_raw_batch(params, inputs)?;
    let head = params.arch.head_len();
    let mut total = 0.0;
    for (b, t) in truths.iter().enumerate() {
        check_truth(params.arch.grid, t)?;
        total += head_loss(&raw[b * head..(b + 1) * head], t, w, None, 1.0);
    }
    Ok(total / truths.len() as f64)
}
