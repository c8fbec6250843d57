//! Central finite-difference check of the analytic gradient.

use rand::Rng;

use super::network::{forward_one, loss_and_grads, INPUT_LEN};
use super::{Params, NUM_TENSORS};
use crate::error::{Error, Result};
use crate::rng;

/// Tensor names in checkpoint order.
pub const TENSOR_NAMES: [&str; NUM_TENSORS] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
    "dense3.weight",
    "dense3.bias",
];

const REDRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradSample {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// `|a - n| / max(|a|, |n|)`, zero when both vanish.
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

fn routing(p: &Params<f64>, batch: &[f64]) -> Vec<(Vec<usize>, Vec<usize>)> {
    batch
        .chunks(INPUT_LEN)
        .map(|x| {
            let a = forward_one(p, x);
            (a.pool1_arg, a.pool2_arg)
        })
        .collect()
}

fn nudged(p: &Params<f64>, tensor: usize, index: usize, delta: f64) -> Params<f64> {
    let mut q = p.clone();
    q.tensors_mut()[tensor][index] += delta;
    q
}

/// Compares analytic and central-difference derivatives of the mean batch
/// loss for one random component of every tensor, `trials` times over.
///
/// A component whose `±h` perturbation moves a pooling maximum sits on a kink
/// of the loss and is redrawn. A batch lying near a kink of a deep layer can
/// block every component upstream of it, which yields [`Error::AllKinks`].
pub fn gradient_check(
    p: &Params<f64>,
    batch: &[f64],
    labels: &[u8],
    h: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<GradSample>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let analytic = loss_and_grads(p, batch, labels)?.grads;
    let base_routing = routing(p, batch);
    let mut r = rng::stream(&[rng::DOMAIN_GRADCHECK, seed]);
    let mut out = Vec::with_capacity(trials * NUM_TENSORS);
    for _ in 0..trials {
        for (tensor, name) in TENSOR_NAMES.iter().enumerate() {
            let len = analytic.tensors()[tensor].len();
            let mut found = None;
            for _ in 0..REDRAWS {
                let index = r.random_range(0..len);
                let plus = nudged(p, tensor, index, h);
                let minus = nudged(p, tensor, index, -h);
                if routing(&plus, batch) != base_routing || routing(&minus, batch) != base_routing {
                    continue;
                }
                let lp = loss_and_grads(&plus, batch, labels)?.loss;
                let lm = loss_and_grads(&minus, batch, labels)?.loss;
                found = Some(GradSample {
                    tensor,
                    index,
                    analytic: analytic.tensors()[tensor][index],
                    numeric: (lp - lm) / (2.0 * h),
                });
                break;
            }
            out.push(found.ok_or(Error::AllKinks {
                tensor: name,
                draws: REDRAWS,
            })?);
        }
    }
    Ok(out)
}
