//! LeNet-5 built from scratch: two valid 5×5 convolutions with 2×2 max
//! pooling and tanh, three dense layers, softmax output. Trained with Adam on
//! categorical cross-entropy.
//!
//! Parameters are stored as `f32`; every forward and backward pass runs in
//! `f64` on a widened copy.

mod adam;
mod gradcheck;
mod network;
mod train;

use rand::Rng;

use crate::rng;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradient_check, GradSample, TENSOR_NAMES};
pub use network::{forward, forward_one, loss_and_grads, Activations, BatchOutput, INPUT_LEN};
pub use train::{evaluate, predict, train, train_with, ConfusionMatrix, EpochStats, TrainConfig};

pub const NUM_TENSORS: usize = 10;

/// Tensor shapes in checkpoint order.
pub const SHAPES: [&[usize]; NUM_TENSORS] = [
    &[6, 1, 5, 5],
    &[6],
    &[16, 6, 5, 5],
    &[16],
    &[120, 256],
    &[120],
    &[84, 120],
    &[84],
    &[10, 84],
    &[10],
];

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "dense1", "dense2", "dense3"];

/// Learnable tensors of the network, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub dense1_w: Vec<T>,
    pub dense1_b: Vec<T>,
    pub dense2_w: Vec<T>,
    pub dense2_b: Vec<T>,
    pub dense3_w: Vec<T>,
    pub dense3_b: Vec<T>,
}

impl<T: Copy + Default> Params<T> {
    pub fn zeros() -> Self {
        let t = |i: usize| vec![T::default(); SHAPES[i].iter().product()];
        Self {
            conv1_w: t(0),
            conv1_b: t(1),
            conv2_w: t(2),
            conv2_b: t(3),
            dense1_w: t(4),
            dense1_b: t(5),
            dense2_w: t(6),
            dense2_b: t(7),
            dense3_w: t(8),
            dense3_b: t(9),
        }
    }

    pub fn from_tensors(tensors: Vec<Vec<T>>) -> Option<Self> {
        if tensors.len() != NUM_TENSORS
            || tensors
                .iter()
                .zip(SHAPES)
                .any(|(t, s)| t.len() != s.iter().product::<usize>())
        {
            return None;
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        Some(Self {
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            dense1_w: next(),
            dense1_b: next(),
            dense2_w: next(),
            dense2_b: next(),
            dense3_w: next(),
            dense3_b: next(),
        })
    }
}

impl<T> Params<T> {
    pub fn tensors(&self) -> [&[T]; NUM_TENSORS] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.dense2_w,
            &self.dense2_b,
            &self.dense3_w,
            &self.dense3_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; NUM_TENSORS] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
            &mut self.dense3_w,
            &mut self.dense3_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights plus biases per layer, `conv1` through `dense3`.
    pub fn layer_counts(&self) -> [usize; 5] {
        let t = self.tensors();
        std::array::from_fn(|layer| t[2 * layer].len() + t[2 * layer + 1].len())
    }
}

impl Params<f64> {
    pub fn add_assign(&mut self, other: &Params<f64>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }
}

/// The trainable model: `f32` parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct LeNetModel {
    pub params: Params<f32>,
}

impl LeNetModel {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases.
    pub fn init(seed: u64) -> Self {
        let mut stream = rng::stream(&[rng::DOMAIN_INIT, seed]);
        let mut params = Params::<f32>::zeros();
        for (i, tensor) in params.tensors_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                continue;
            }
            let shape = SHAPES[i];
            let receptive: usize = shape[2..].iter().product();
            let fan_in = shape[1] * receptive;
            let fan_out = shape[0] * receptive;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in tensor.iter_mut() {
                *w = stream.random_range(-limit..=limit) as f32;
            }
        }
        Self { params }
    }

    pub fn zeroed() -> Self {
        Self {
            params: Params::zeros(),
        }
    }

    pub fn widened(&self) -> Params<f64> {
        let t: Vec<Vec<f64>> = self
            .params
            .tensors()
            .iter()
            .map(|t| t.iter().map(|&v| f64::from(v)).collect())
            .collect();
        Params::from_tensors(t).expect("shapes preserved")
    }

    pub fn layer_counts(&self) -> [usize; 5] {
        self.params.layer_counts()
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}
