//! A small fully-convolutional segmentation network with hand-written
//! backpropagation, the supervised losses and an Adam optimizer.
//!
//! Architecture (all convolutions zero-padded, spatial size preserved):
//!
//! ```text
//! x(1) -> conv3x3(1->8) relu -> conv3x3(8->8) relu = skip
//!      -> meanpool2 -> conv3x3(8->16) relu -> nearest-up2
//!      -> concat[up(16), skip(8)] -> conv3x3(24->8) relu -> conv1x1(8->1) sigmoid
//! ```
//!
//! That is 3577 parameters. Input height and width must be even.

mod adam;
pub mod layers;
mod loss;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use loss::{bce_loss, dice_loss, LossKind, BCE_CLIP, DICE_SMOOTH};

use crate::complex::ProbabilityGrid;
use crate::{Error, Result};
use layers::{
    mean_pool2, mean_pool2_backward, relu, relu_backward, sigmoid, upsample2, upsample2_backward,
    Conv2d,
};

pub const CHECKPOINT_FORMAT: &str = "topoprior-tinynet";
pub const CHECKPOINT_VERSION: u32 = 1;

const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "conv3", "conv4", "head"];

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    layers: [Conv2d; 5],
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    height: usize,
    width: usize,
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    pooled: Vec<f64>,
    z3: Vec<f64>,
    concat: Vec<f64>,
    z4: Vec<f64>,
    a4: Vec<f64>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Signs of every ReLU pre-activation, for detecting kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.z1, &self.z2, &self.z3, &self.z4]
            .into_iter()
            .flatten()
            .map(|&v| v > 0.0)
            .collect()
    }
}

/// Parameter gradients, one flat buffer per weight or bias tensor in the
/// order of [`TinyNet::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(net: &TinyNet) -> Self {
        Self(net.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= factor);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.concat()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&x| x == 0.0)
    }
}

impl TinyNet {
    /// He-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), zero biases.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Self::shapes().map(|(i, o, k)| Conv2d::zeros(i, o, k));
        for layer in &mut layers {
            let bound = (6.0 / (layer.in_channels * layer.kernel * layer.kernel) as f64).sqrt();
            for w in &mut layer.weight {
                *w = rng.random_range(-bound..bound);
            }
        }
        Self { layers }
    }

    fn shapes() -> [(usize, usize, usize); 5] {
        [(1, 8, 3), (8, 8, 3), (8, 16, 3), (24, 8, 3), (8, 1, 1)]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Conv2d::num_params).sum()
    }

    /// Zeroes the final 1x1 layer so every output is exactly 0.5.
    pub fn zero_head(&mut self) {
        let head = &mut self.layers[4];
        head.weight.fill(0.0);
        head.bias.fill(0.0);
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Tensor names matching [`TinyNet::tensors`].
    pub fn tensor_names() -> Vec<String> {
        LAYER_NAMES
            .iter()
            .flat_map(|n| [format!("{n}.weight"), format!("{n}.bias")])
            .collect()
    }

    pub fn forward(&self, image: &ProbabilityGrid) -> Result<(ProbabilityGrid, Tape)> {
        let tape = self.forward_raw(image.values(), image.height(), image.width())?;
        let s = ProbabilityGrid::new(image.height(), image.width(), tape.output.clone())?;
        Ok((s, tape))
    }

    /// Forward pass on an arbitrary real-valued single-channel image.
    pub fn forward_raw(&self, input: &[f64], height: usize, width: usize) -> Result<Tape> {
        if height == 0 || width == 0 || !height.is_multiple_of(2) || !width.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "network input must have positive even sides, got {height}x{width}"
            )));
        }
        if input.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: height * width,
                actual: input.len(),
            });
        }
        let (h, w) = (height, width);
        let [c1, c2, c3, c4, head] = &self.layers;
        let z1 = c1.forward(input, h, w);
        let a1 = relu(&z1);
        let z2 = c2.forward(&a1, h, w);
        let a2 = relu(&z2);
        let pooled = mean_pool2(&a2, 8, h, w);
        let z3 = c3.forward(&pooled, h / 2, w / 2);
        let a3 = relu(&z3);
        let mut concat = upsample2(&a3, 16, h / 2, w / 2);
        concat.extend_from_slice(&a2);
        let z4 = c4.forward(&concat, h, w);
        let a4 = relu(&z4);
        let logits = head.forward(&a4, h, w);
        let output = logits.into_iter().map(sigmoid).collect();
        Ok(Tape {
            height: h,
            width: w,
            input: input.to_vec(),
            z1,
            a1,
            z2,
            pooled,
            z3,
            concat,
            z4,
            a4,
            output,
        })
    }

    /// Gradients of `sum(d_output * S)` with respect to every parameter.
    pub fn backward(&self, tape: &Tape, d_output: &[f64]) -> Result<Gradients> {
        let (h, w) = (tape.height, tape.width);
        if d_output.len() != h * w || tape.output.len() != h * w {
            return Err(Error::ShapeMismatch {
                expected: tape.output.len(),
                actual: d_output.len(),
            });
        }
        let [c1, c2, c3, c4, head] = &self.layers;
        let mut grads = Gradients::zeros_like(self);
        let (g, rest) = grads.0.split_at_mut(8);
        let [g1w, g1b, g2w, g2b, g3w, g3b, g4w, g4b] = g else {
            unreachable!()
        };
        let [ghw, ghb] = rest else { unreachable!() };

        let d_logit: Vec<f64> = d_output
            .iter()
            .zip(&tape.output)
            .map(|(&d, &s)| d * s * (1.0 - s))
            .collect();
        let mut d_a4 = head.backward(&tape.a4, &d_logit, h, w, ghw, ghb, true).unwrap();
        relu_backward(&tape.z4, &mut d_a4);
        let d_concat = c4.backward(&tape.concat, &d_a4, h, w, g4w, g4b, true).unwrap();
        let (d_up, d_skip) = d_concat.split_at(16 * h * w);
        let mut d_a3 = upsample2_backward(d_up, 16, h / 2, w / 2);
        relu_backward(&tape.z3, &mut d_a3);
        let d_pooled = c3
            .backward(&tape.pooled, &d_a3, h / 2, w / 2, g3w, g3b, true)
            .unwrap();
        let mut d_a2 = mean_pool2_backward(&d_pooled, 8, h, w);
        for (a, b) in d_a2.iter_mut().zip(d_skip) {
            *a += b;
        }
        relu_backward(&tape.z2, &mut d_a2);
        let mut d_a1 = c2.backward(&tape.a1, &d_a2, h, w, g2w, g2b, true).unwrap();
        relu_backward(&tape.z1, &mut d_a1);
        c1.backward(&tape.input, &d_a1, h, w, g1w, g1b, false);
        Ok(grads)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = Self::tensor_names()
            .into_iter()
            .zip(self.tensors())
            .zip(self.layers.iter().flat_map(|l| {
                [
                    vec![l.out_channels, l.in_channels, l.kernel, l.kernel],
                    vec![l.out_channels],
                ]
            }))
            .map(|((name, data), shape)| NamedTensor {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut net = Self::new(0);
        let reference = net.to_checkpoint();
        if ckpt.tensors.len() != reference.tensors.len() {
            return Err(Error::InvalidConfig("checkpoint tensor count mismatch".into()));
        }
        for ((slot, got), want) in net
            .tensors_mut()
            .into_iter()
            .zip(&ckpt.tensors)
            .zip(&reference.tensors)
        {
            if got.name != want.name || got.shape != want.shape || got.data.len() != slot.len() {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint tensor {} does not match {} {:?}",
                    got.name, want.name, want.shape
                )));
            }
            slot.copy_from_slice(&got.data);
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            kind: "checkpoint",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_checkpoint(&ckpt)
    }
}

/// JSON model file: `{format, version, tensors: [{name, shape, data}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: u64, h: usize, w: usize) -> ProbabilityGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ProbabilityGrid::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(TinyNet::new(0).num_params(), 3577);
    }

    #[test]
    fn zero_head_gives_half() {
        let mut net = TinyNet::new(1);
        net.zero_head();
        let (s, _) = net.forward(&image(2, 8, 8)).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let x = image(3, 8, 6);
        let (a, _) = TinyNet::new(7).forward(&x).unwrap();
        let (b, _) = TinyNet::new(7).forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (8, 6));
        assert!(TinyNet::new(7).forward(&image(3, 7, 6)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = TinyNet::new(5);
        let (_, tape) = net.forward(&image(4, 8, 8)).unwrap();
        assert!(net.backward(&tape, &[0.0; 64]).unwrap().is_zero());
        assert!(net.backward(&tape, &[0.0; 63]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = TinyNet::new(9);
        let back = TinyNet::from_checkpoint(&net.to_checkpoint()).unwrap();
        assert_eq!(back, net);
        let mut bad = net.to_checkpoint();
        bad.tensors[2].shape = vec![1, 2, 3];
        assert!(TinyNet::from_checkpoint(&bad).is_err());
        bad = net.to_checkpoint();
        bad.version = 99;
        assert!(TinyNet::from_checkpoint(&bad).is_err());
    }
}
