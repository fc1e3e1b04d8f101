use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Layer, Model};
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2D, Dense, Dropout, LayerKind, MaxPool2D, Padding};
use crate::parallel::{stream, StreamKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "vgg16")]
    Vgg16,
    #[serde(rename = "vgg-mini")]
    VggMini,
}

impl Architecture {
    pub fn default_input(self) -> [usize; 3] {
        match self {
            Architecture::Vgg16 => [224, 224, 3],
            Architecture::VggMini => [32, 32, 3],
        }
    }

    /// Default first trainable layer for fine-tuning.
    pub fn default_freeze_boundary(self) -> Option<&'static str> {
        match self {
            Architecture::Vgg16 => Some("block5_conv1"),
            Architecture::VggMini => None,
        }
    }

    fn blocks(self) -> &'static [(usize, usize)] {
        match self {
            // (conv layers, channels) per block
            Architecture::Vgg16 => &[(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)],
            Architecture::VggMini => &[(2, 8), (2, 16), (2, 32)],
        }
    }

    fn hidden_dense(self) -> &'static [usize] {
        match self {
            Architecture::Vgg16 => &[4096, 4096],
            Architecture::VggMini => &[64],
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg16" => Ok(Architecture::Vgg16),
            "vgg-mini" => Ok(Architecture::VggMini),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected vgg16 or vgg-mini)"
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Vgg16 => "vgg16",
            Architecture::VggMini => "vgg-mini",
        })
    }
}

/// Everything needed to rebuild a model skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub input: [usize; 3],
    pub class_count: usize,
}

pub fn build_vgg16(input: [usize; 3], class_count: usize, seed: u64) -> Result<Model> {
    build(Architecture::Vgg16, input, class_count, seed)
}

pub fn build_vgg_mini(input: [usize; 3], class_count: usize, seed: u64) -> Result<Model> {
    build(Architecture::VggMini, input, class_count, seed)
}

/// Build a freshly initialized model. Kernels are Glorot-uniform from a
/// per-layer seeded stream; biases are zero.
///
/// Layer names follow the usual VGG naming: `input_1`, `blockN_convM`,
/// `blockN_pool`, `flatten`, `fc1`, `dropout_1`, ..., `predictions`.
pub fn build(arch: Architecture, input: [usize; 3], class_count: usize, seed: u64) -> Result<Model> {
    let blocks = arch.blocks();
    let factor = 1usize << blocks.len();
    let [h, w, c] = input;
    if h == 0 || w == 0 || c == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!(
            "{arch} needs a non-empty input with height and width divisible by {factor}, got {input:?}"
        )));
    }
    if arch == Architecture::Vgg16 && (h < 32 || w < 32 || c != 3) {
        return Err(Error::shape(format!(
            "vgg16 needs an RGB input of at least 32x32, got {input:?}"
        )));
    }
    if class_count == 0 {
        return Err(Error::shape("class count must be positive"));
    }

    let mut layers = vec![Layer::new("input_1", LayerKind::Input { dims: input })];
    let mut in_ch = c;
    for (b, &(convs, ch)) in blocks.iter().enumerate() {
        for m in 0..convs {
            let idx = layers.len() as u64;
            let conv = Conv2D::new(
                glorot(&[3, 3, in_ch, ch], 9 * in_ch, 9 * ch, seed, idx),
                Tensor::zeros(&[ch])?,
                1,
                Padding::Same,
                Activation::Relu,
            )?;
            layers.push(Layer::new(format!("block{}_conv{}", b + 1, m + 1), LayerKind::Conv2D(conv)));
            in_ch = ch;
        }
        layers.push(Layer::new(
            format!("block{}_pool", b + 1),
            LayerKind::MaxPool2D(MaxPool2D::new(2, 2, 2)?),
        ));
    }
    layers.push(Layer::new("flatten", LayerKind::Flatten));

    let mut features = (h / factor) * (w / factor) * in_ch;
    for (i, &width) in arch.hidden_dense().iter().enumerate() {
        let idx = layers.len() as u64;
        let dense = Dense::new(
            glorot(&[features, width], features, width, seed, idx),
            Tensor::zeros(&[width])?,
            Activation::Relu,
        )?;
        layers.push(Layer::new(format!("fc{}", i + 1), LayerKind::Dense(dense)));
        layers.push(Layer::new(
            format!("dropout_{}", i + 1),
            LayerKind::Dropout(Dropout::new(0.5)?),
        ));
        features = width;
    }
    let idx = layers.len() as u64;
    let head = Dense::new(
        glorot(&[features, class_count], features, class_count, seed, idx),
        Tensor::zeros(&[class_count])?,
        Activation::Softmax,
    )?;
    layers.push(Layer::new("predictions", LayerKind::Dense(head)));
    Model::new(layers)
}

fn glorot(dims: &[usize], fan_in: usize, fan_out: usize, seed: u64, layer: u64) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let mut rng = stream(seed, StreamKind::Init, layer, 0);
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_vec(dims, data).expect("dims are positive")
}

impl ModelSpec {
    pub fn build(&self, seed: u64) -> Result<Model> {
        build(self.arch, self.input, self.class_count, seed)
    }

    /// Recover the model skeleton from the parameter names and shapes in a
    /// weight file. Spatial extents are derived from the first dense layer
    /// assuming a square input.
    pub fn infer(file: &super::WeightFile) -> Result<Self> {
        let shape_of = |name: &str| {
            file.get(name)
                .map(|t| t.dims().to_vec())
                .ok_or_else(|| Error::format(format!("weight file has no `{name}` entry")))
        };
        let first = shape_of("block1_conv1/kernel")?;
        let head = shape_of("predictions/kernel")?;
        let fc1 = shape_of("fc1/kernel")?;
        if first.len() != 4 || head.len() != 2 || fc1.len() != 2 {
            return Err(Error::format("weight entries have unexpected ranks"));
        }
        let arch = match first[3] {
            64 => Architecture::Vgg16,
            8 => Architecture::VggMini,
            other => {
                return Err(Error::format(format!(
                    "block1_conv1 has {other} filters; not a known architecture"
                )))
            }
        };
        let (_, last_ch) = *arch.blocks().last().unwrap();
        let cells = fc1[0] / last_ch;
        let side = (cells as f64).sqrt().round() as usize;
        if side * side * last_ch != fc1[0] {
            return Err(Error::format(format!(
                "fc1 input width {} does not correspond to a square input",
                fc1[0]
            )));
        }
        let extent = side << arch.blocks().len();
        Ok(ModelSpec {
            arch,
            input: [extent, extent, first[2]],
            class_count: head[1],
        })
    }
}
