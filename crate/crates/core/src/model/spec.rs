use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise activation applied after a dense or convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative at `x`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Architecture of a classifier. Every variant ends in a softmax over
/// `classes` outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `softmax(x W + b)`.
    LogisticRegression { inputs: usize, classes: usize },
    /// Fully connected layers. `layer_sizes` starts with the input width and
    /// ends with the class count.
    Mlp {
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
    },
    /// LeNet-5: conv 6@5x5 (padding 2), 2x2 max-pool, conv 16@5x5, 2x2
    /// max-pool, dense 120, dense 84, dense `classes`, ReLU throughout.
    CnnLenet {
        height: usize,
        width: usize,
        channels: usize,
        classes: usize,
    },
}

impl ModelSpec {
    pub fn logistic(inputs: usize, classes: usize) -> Self {
        ModelSpec::LogisticRegression { inputs, classes }
    }

    pub fn mlp(layer_sizes: &[usize]) -> Self {
        ModelSpec::Mlp {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation: Activation::Relu,
        }
    }

    pub fn lenet(height: usize, width: usize, channels: usize, classes: usize) -> Self {
        ModelSpec::CnnLenet {
            height,
            width,
            channels,
            classes,
        }
    }

    /// 784 -> 10 softmax regression.
    pub fn mnist_logistic() -> Self {
        Self::logistic(784, 10)
    }

    /// 4 -> 10 -> 13 -> 3 perceptron, 235 parameters.
    pub fn iris_mlp() -> Self {
        Self::mlp(&[4, 10, 13, 3])
    }

    pub fn mnist_lenet() -> Self {
        Self::lenet(28, 28, 1, 10)
    }

    pub fn class_count(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { classes, .. } | ModelSpec::CnnLenet { classes, .. } => *classes,
            ModelSpec::Mlp { layer_sizes, .. } => layer_sizes.last().copied().unwrap_or(0),
        }
    }

    /// Number of input features per sample.
    pub fn input_len(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { inputs, .. } => *inputs,
            ModelSpec::Mlp { layer_sizes, .. } => layer_sizes.first().copied().unwrap_or(0),
            ModelSpec::CnnLenet {
                height,
                width,
                channels,
                ..
            } => height * width * channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count() < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        match self {
            ModelSpec::LogisticRegression { inputs, .. } if *inputs == 0 => {
                Err(Error::invalid("logistic regression needs at least one input"))
            }
            ModelSpec::Mlp { layer_sizes, .. } if layer_sizes.len() < 2 || layer_sizes.contains(&0) => {
                Err(Error::invalid("MLP layer sizes must list at least two non-zero widths"))
            }
            ModelSpec::CnnLenet {
                height,
                width,
                channels,
                ..
            } if *channels == 0 || height / 2 < 6 || width / 2 < 6 => Err(Error::invalid(
                "LeNet input must have at least one channel and be at least 12x12",
            )),
            _ => Ok(()),
        }
    }

    /// The layer stack this spec compiles to.
    pub fn layers(&self) -> Vec<Layer> {
        match self {
            ModelSpec::LogisticRegression { inputs, classes } => vec![Layer::Dense {
                inputs: *inputs,
                outputs: *classes,
                activation: Activation::Identity,
            }],
            ModelSpec::Mlp {
                layer_sizes,
                hidden_activation,
            } => {
                let last = layer_sizes.len().saturating_sub(2);
                layer_sizes
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| Layer::Dense {
                        inputs: w[0],
                        outputs: w[1],
                        activation: if i == last {
                            Activation::Identity
                        } else {
                            *hidden_activation
                        },
                    })
                    .collect()
            }
            ModelSpec::CnnLenet {
                height,
                width,
                channels,
                classes,
            } => {
                let (h1, w1) = (height / 2, width / 2);
                let (h2, w2) = (h1 - 4, w1 - 4);
                let (h3, w3) = (h2 / 2, w2 / 2);
                vec![
                    Layer::Conv {
                        in_channels: *channels,
                        out_channels: 6,
                        kernel: 5,
                        padding: 2,
                        in_height: *height,
                        in_width: *width,
                        activation: Activation::Relu,
                    },
                    Layer::MaxPool {
                        channels: 6,
                        in_height: *height,
                        in_width: *width,
                    },
                    Layer::Conv {
                        in_channels: 6,
                        out_channels: 16,
                        kernel: 5,
                        padding: 0,
                        in_height: h1,
                        in_width: w1,
                        activation: Activation::Relu,
                    },
                    Layer::MaxPool {
                        channels: 16,
                        in_height: h2,
                        in_width: w2,
                    },
                    Layer::Dense {
                        inputs: 16 * h3 * w3,
                        outputs: 120,
                        activation: Activation::Relu,
                    },
                    Layer::Dense {
                        inputs: 120,
                        outputs: 84,
                        activation: Activation::Relu,
                    },
                    Layer::Dense {
                        inputs: 84,
                        outputs: *classes,
                        activation: Activation::Identity,
                    },
                ]
            }
        }
    }

    /// Weights plus biases, in closed form.
    ///
    /// ```
    /// use conntra::model::ModelSpec;
    ///
    /// assert_eq!(ModelSpec::mnist_logistic().param_count(), 7850);
    /// assert_eq!(ModelSpec::iris_mlp().param_count(), 235);
    /// ```
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { inputs, classes } => (inputs + 1) * classes,
            ModelSpec::Mlp { layer_sizes, .. } => layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum(),
            ModelSpec::CnnLenet {
                height,
                width,
                channels,
                classes,
            } => {
                let flat = 16 * ((height / 2 - 4) / 2) * ((width / 2 - 4) / 2);
                6 * (25 * channels + 1) + 16 * (25 * 6 + 1) + (flat + 1) * 120 + 121 * 84 + 85 * classes
            }
        }
    }
}

/// One stage of a compiled network. Tensors are stored channel-major
/// (`[channel][row][column]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// `out[o] = act(b[o] + sum_i w[o][i] * in[i])`.
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Stride-1 square convolution with zero padding. Weights are indexed
    /// `[out_channel][in_channel][ky][kx]`.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        in_height: usize,
        in_width: usize,
        activation: Activation,
    },
    /// 2x2 max-pool with stride 2; a trailing odd row or column is dropped.
    MaxPool {
        channels: usize,
        in_height: usize,
        in_width: usize,
    },
}

impl Layer {
    pub fn input_len(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv {
                in_channels,
                in_height,
                in_width,
                ..
            } => in_channels * in_height * in_width,
            Layer::MaxPool {
                channels,
                in_height,
                in_width,
            } => channels * in_height * in_width,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Conv { out_channels, .. } => {
                let (h, w) = self.output_hw();
                out_channels * h * w
            }
            Layer::MaxPool { channels, .. } => {
                let (h, w) = self.output_hw();
                channels * h * w
            }
        }
    }

    /// Spatial size of the output; `(outputs, 1)` for dense layers.
    pub fn output_hw(&self) -> (usize, usize) {
        match *self {
            Layer::Dense { outputs, .. } => (outputs, 1),
            Layer::Conv {
                kernel,
                padding,
                in_height,
                in_width,
                ..
            } => (in_height + 2 * padding + 1 - kernel, in_width + 2 * padding + 1 - kernel),
            Layer::MaxPool {
                in_height, in_width, ..
            } => (in_height / 2, in_width / 2),
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            Layer::Dense { inputs, outputs, .. } => inputs * outputs,
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel,
            Layer::MaxPool { .. } => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Conv { out_channels, .. } => out_channels,
            Layer::MaxPool { .. } => 0,
        }
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.bias_len()
    }

    pub fn activation(&self) -> Activation {
        match *self {
            Layer::Dense { activation, .. } | Layer::Conv { activation, .. } => activation,
            Layer::MaxPool { .. } => Activation::Identity,
        }
    }

    /// `(fan_in, fan_out)` for Glorot initialization.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            Layer::Dense { inputs, outputs, .. } => (inputs, outputs),
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
            Layer::MaxPool { .. } => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Weight,
    Bias,
}

/// Position of one parameter inside the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub kind: BlockKind,
    pub index: usize,
}

/// Contiguous run of parameters belonging to one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub layer: usize,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

/// Offset table of the flat parameter vector: layers in order, each layer's
/// weights followed by its biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
}

impl ParamLayout {
    pub fn new(layers: &[Layer]) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (layer, l) in layers.iter().enumerate() {
            for (kind, len) in [(BlockKind::Weight, l.weight_len()), (BlockKind::Bias, l.bias_len())] {
                if len > 0 {
                    blocks.push(ParamBlock {
                        layer,
                        kind,
                        offset,
                        len,
                    });
                    offset += len;
                }
            }
        }
        Self { blocks, total: offset }
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn locate(&self, flat: usize) -> Option<ParamSlot> {
        let b = self.blocks.iter().find(|b| flat >= b.offset && flat < b.offset + b.len)?;
        Some(ParamSlot {
            layer: b.layer,
            kind: b.kind,
            index: flat - b.offset,
        })
    }

    pub fn flat_index(&self, slot: ParamSlot) -> Option<usize> {
        self.blocks
            .iter()
            .find(|b| b.layer == slot.layer && b.kind == slot.kind && slot.index < b.len)
            .map(|b| b.offset + slot.index)
    }

    /// Offset of a layer's first parameter (its weights), if it has any.
    pub fn layer_offset(&self, layer: usize) -> Option<usize> {
        self.blocks.iter().find(|b| b.layer == layer).map(|b| b.offset)
    }
}

/// Flat vector of every weight and bias of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    spec: ModelSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, model needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            values,
        })
    }

    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec, vec![0.0; spec.param_count()])
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.spec.layers())
    }
}
