use rayon::prelude::*;

use super::Params;
use crate::error::{Error, Result};
use crate::lenet::LeNetModel;

pub const INPUT_SIDE: usize = 28;
pub const INPUT_LEN: usize = INPUT_SIDE * INPUT_SIDE;
const K: usize = 5;
const C1: usize = 6;
const C1_SIDE: usize = 24;
const P1_SIDE: usize = 12;
const C2: usize = 16;
const C2_SIDE: usize = 8;
const P2_SIDE: usize = 4;
const FLAT: usize = C2 * P2_SIDE * P2_SIDE;
const H1: usize = 120;
const H2: usize = 84;
const OUT: usize = 10;

// Samples per gradient-accumulation chunk. Chunks are reduced in index order,
// so the result does not depend on how many workers ran them.
const CHUNK: usize = 16;

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub conv1: Vec<f64>,
    pub pool1_arg: Vec<usize>,
    pub act1: Vec<f64>,
    pub conv2: Vec<f64>,
    pub pool2_arg: Vec<usize>,
    pub act2: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub logits: [f64; OUT],
    pub probs: [f64; OUT],
}

/// Valid 5×5 convolution, stride 1, channel-major layout.
fn conv_forward(
    input: &[f64],
    in_ch: usize,
    in_side: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
) -> Vec<f64> {
    let out_side = in_side - K + 1;
    let mut out = vec![0.0; out_ch * out_side * out_side];
    for o in 0..out_ch {
        let plane = &mut out[o * out_side * out_side..(o + 1) * out_side * out_side];
        plane.fill(bias[o]);
        for i in 0..in_ch {
            let src = &input[i * in_side * in_side..(i + 1) * in_side * in_side];
            for ky in 0..K {
                for kx in 0..K {
                    let w = weights[((o * in_ch + i) * K + ky) * K + kx];
                    for y in 0..out_side {
                        let row = &src[(y + ky) * in_side + kx..(y + ky) * in_side + kx + out_side];
                        let dst = &mut plane[y * out_side..(y + 1) * out_side];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and, if requested, the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_ch: usize,
    in_side: usize,
    weights: &[f64],
    d_out: &[f64],
    out_ch: usize,
    g_weights: &mut [f64],
    g_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let out_side = in_side - K + 1;
    for o in 0..out_ch {
        let dplane = &d_out[o * out_side * out_side..(o + 1) * out_side * out_side];
        g_bias[o] += dplane.iter().sum::<f64>();
        for i in 0..in_ch {
            let src = &input[i * in_side * in_side..(i + 1) * in_side * in_side];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((o * in_ch + i) * K + ky) * K + kx;
                    let mut acc = 0.0;
                    for y in 0..out_side {
                        let row = &src[(y + ky) * in_side + kx..(y + ky) * in_side + kx + out_side];
                        let drow = &dplane[y * out_side..(y + 1) * out_side];
                        acc += row.iter().zip(drow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    g_weights[widx] += acc;
                    if let Some(din) = d_input.as_deref_mut() {
                        let w = weights[widx];
                        let dst_plane =
                            &mut din[i * in_side * in_side..(i + 1) * in_side * in_side];
                        for y in 0..out_side {
                            let drow = &dplane[y * out_side..(y + 1) * out_side];
                            let dst = &mut dst_plane
                                [(y + ky) * in_side + kx..(y + ky) * in_side + kx + out_side];
                            for (d, &g) in dst.iter_mut().zip(drow) {
                                *d += w * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 max pooling; ties go to the first maximal element in row-major order.
fn pool_forward(input: &[f64], ch: usize, in_side: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = in_side / 2;
    let mut out = vec![0.0; ch * out_side * out_side];
    let mut arg = vec![0; ch * out_side * out_side];
    for c in 0..ch {
        for y in 0..out_side {
            for x in 0..out_side {
                let base = c * in_side * in_side;
                let mut best_idx = base + (2 * y) * in_side + 2 * x;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * in_side + 2 * x + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let o = (c * out_side + y) * out_side + x;
                out[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    (out, arg)
}

fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            b + weights[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(input)
                .map(|(w, x)| w * x)
                .sum::<f64>()
        })
        .collect()
}

/// Accumulates the dense layer's gradients and returns the input gradient.
fn dense_backward(
    input: &[f64],
    weights: &[f64],
    d_out: &[f64],
    g_w: &mut [f64],
    g_b: &mut [f64],
) -> Vec<f64> {
    let n_in = input.len();
    let mut d_in = vec![0.0; n_in];
    for (o, &g) in d_out.iter().enumerate() {
        g_b[o] += g;
        let row_g = &mut g_w[o * n_in..(o + 1) * n_in];
        for (gw, &x) in row_g.iter_mut().zip(input) {
            *gw += g * x;
        }
        for (d, &w) in d_in.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
            *d += g * w;
        }
    }
    d_in
}

fn softmax(logits: &[f64; OUT]) -> [f64; OUT] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; OUT];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Cross-entropy `-log softmax(logits)[label]` via a shifted log-sum-exp.
pub(crate) fn cross_entropy(logits: &[f64; OUT], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn forward_one(p: &Params<f64>, x: &[f64]) -> Activations {
    assert_eq!(x.len(), INPUT_LEN, "input must be 28x28");
    let conv1 = conv_forward(x, 1, INPUT_SIDE, &p.conv1_w, &p.conv1_b, C1);
    let (pool1, pool1_arg) = pool_forward(&conv1, C1, C1_SIDE);
    let act1: Vec<f64> = pool1.iter().map(|v| v.tanh()).collect();
    let conv2 = conv_forward(&act1, C1, P1_SIDE, &p.conv2_w, &p.conv2_b, C2);
    let (pool2, pool2_arg) = pool_forward(&conv2, C2, C2_SIDE);
    let act2: Vec<f64> = pool2.iter().map(|v| v.tanh()).collect();
    debug_assert_eq!(act2.len(), FLAT);
    let hidden1: Vec<f64> = dense_forward(&act2, &p.dense1_w, &p.dense1_b)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let hidden2: Vec<f64> = dense_forward(&hidden1, &p.dense2_w, &p.dense2_b)
        .into_iter()
        .map(f64::tanh)
        .collect();
    debug_assert_eq!((hidden1.len(), hidden2.len()), (H1, H2));
    let out = dense_forward(&hidden2, &p.dense3_w, &p.dense3_b);
    let mut logits = [0.0; OUT];
    logits.copy_from_slice(&out);
    let probs = softmax(&logits);
    Activations {
        conv1,
        pool1_arg,
        act1,
        conv2,
        pool2_arg,
        act2,
        hidden1,
        hidden2,
        logits,
        probs,
    }
}

/// Backpropagates `d_logits` for one sample, accumulating into `g`.
fn backward_one(
    p: &Params<f64>,
    x: &[f64],
    a: &Activations,
    d_logits: &[f64; OUT],
    g: &mut Params<f64>,
) {
    let d_h2 = dense_backward(
        &a.hidden2,
        &p.dense3_w,
        d_logits,
        &mut g.dense3_w,
        &mut g.dense3_b,
    );
    let d_z2: Vec<f64> = d_h2
        .iter()
        .zip(&a.hidden2)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    let d_h1 = dense_backward(
        &a.hidden1,
        &p.dense2_w,
        &d_z2,
        &mut g.dense2_w,
        &mut g.dense2_b,
    );
    let d_z1: Vec<f64> = d_h1
        .iter()
        .zip(&a.hidden1)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    let d_act2 = dense_backward(
        &a.act2,
        &p.dense1_w,
        &d_z1,
        &mut g.dense1_w,
        &mut g.dense1_b,
    );

    let mut d_conv2 = vec![0.0; a.conv2.len()];
    for ((d, t), &idx) in d_act2.iter().zip(&a.act2).zip(&a.pool2_arg) {
        d_conv2[idx] += d * (1.0 - t * t);
    }
    let mut d_act1 = vec![0.0; a.act1.len()];
    conv_backward(
        &a.act1,
        C1,
        P1_SIDE,
        &p.conv2_w,
        &d_conv2,
        C2,
        &mut g.conv2_w,
        &mut g.conv2_b,
        Some(&mut d_act1),
    );

    let mut d_conv1 = vec![0.0; a.conv1.len()];
    for ((d, t), &idx) in d_act1.iter().zip(&a.act1).zip(&a.pool1_arg) {
        d_conv1[idx] += d * (1.0 - t * t);
    }
    conv_backward(
        x,
        1,
        INPUT_SIDE,
        &p.conv1_w,
        &d_conv1,
        C1,
        &mut g.conv1_w,
        &mut g.conv1_b,
        None,
    );
}

fn check_batch(batch: &[f64]) -> Result<usize> {
    if batch.is_empty() || !batch.len().is_multiple_of(INPUT_LEN) {
        return Err(Error::Shape(format!(
            "batch of {} values is not a whole number of 28x28 images",
            batch.len()
        )));
    }
    Ok(batch.len() / INPUT_LEN)
}

/// Per-sample class probabilities for a flat batch of 28×28 inputs in `[0, 1]`.
pub fn forward(model: &LeNetModel, batch: &[f64]) -> Result<Vec<[f64; OUT]>> {
    check_batch(batch)?;
    let p = model.widened();
    Ok(batch
        .par_chunks(INPUT_LEN)
        .map(|x| forward_one(&p, x).probs)
        .collect())
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// Gradient of the mean loss.
    pub grads: Params<f64>,
    /// Samples whose argmax prediction matched the label.
    pub correct: usize,
}

/// Mean cross-entropy and its exact gradient over a flat batch.
pub fn loss_and_grads(p: &Params<f64>, batch: &[f64], labels: &[u8]) -> Result<BatchOutput> {
    let n = check_batch(batch)?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= OUT) {
        return Err(Error::invalid(format!("label {bad} is not in 0..=9")));
    }
    let partials: Vec<(f64, usize, Params<f64>)> = batch
        .par_chunks(INPUT_LEN * CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .map(|(xs, ls)| {
            let mut g = Params::zeros();
            let mut loss = 0.0;
            let mut correct = 0;
            for (x, &label) in xs.chunks(INPUT_LEN).zip(ls) {
                let a = forward_one(p, x);
                let label = label as usize;
                loss += cross_entropy(&a.logits, label);
                if super::train::argmax(&a.logits) == label {
                    correct += 1;
                }
                let mut d = a.probs;
                d[label] -= 1.0;
                backward_one(p, x, &a, &d, &mut g);
            }
            (loss, correct, g)
        })
        .collect();
    let mut grads = Params::zeros();
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, c, g) in &partials {
        loss += l;
        correct += c;
        grads.add_assign(g);
    }
    let inv = 1.0 / n as f64;
    grads.scale(inv);
    Ok(BatchOutput {
        loss: loss * inv,
        grads,
        correct,
    })
}
