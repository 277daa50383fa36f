use serde::{Deserialize, Serialize};

use crate::error::NnError;

/// One layer of the sequential network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) convolution, stride 1, square kernel.
    Conv { filters: usize, kernel: usize },
    Relu,
    /// Non-overlapping max pooling, stride equal to `size`.
    MaxPool { size: usize },
    Dropout { rate: f64 },
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Activation shape of one item, channels last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered layer list plus the input shape and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// conv-relu-conv-relu-maxpool-dropout-dense-relu-dropout-dense-softmax
    /// with the given widths.
    pub fn conv_net(
        input: Shape,
        num_classes: usize,
        filters: usize,
        kernel: usize,
        pool: usize,
        hidden: usize,
        dropout: (f64, f64),
    ) -> Self {
        Self {
            input,
            num_classes,
            layers: vec![
                LayerSpec::Conv { filters, kernel },
                LayerSpec::Relu,
                LayerSpec::Conv { filters, kernel },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: pool },
                LayerSpec::Dropout { rate: dropout.0 },
                LayerSpec::Dense { units: hidden },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: dropout.1 },
                LayerSpec::Dense { units: num_classes },
                LayerSpec::Softmax,
            ],
        }
    }

    /// 32 4x4 kernels per conv, 2x2 pooling, 128 hidden units, dropout
    /// 0.25 / 0.5, on 28x28 grayscale input.
    pub fn mnist(num_classes: usize) -> Self {
        Self::conv_net(Shape::new(28, 28, 1), num_classes, 32, 4, 2, 128, (0.25, 0.5))
    }

    /// Activation shapes: entry `i` is the input shape of layer `i`; the
    /// final entry is the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let bad = |msg: String| Err(NnError::Architecture(msg));
        if self.input.is_empty() {
            return bad("empty input shape".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        match self.layers.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return bad("last layer must be softmax".into()),
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut s = self.input;
        shapes.push(s);
        for (i, layer) in self.layers.iter().enumerate() {
            s = match *layer {
                LayerSpec::Conv { filters, kernel } => {
                    if filters == 0 || kernel == 0 || kernel > s.height || kernel > s.width {
                        return bad(format!(
                            "layer {i}: conv {filters}x{kernel}x{kernel} does not fit {}x{}",
                            s.height, s.width
                        ));
                    }
                    Shape::new(s.height - kernel + 1, s.width - kernel + 1, filters)
                }
                LayerSpec::MaxPool { size } => {
                    if size == 0 || size > s.height || size > s.width {
                        return bad(format!(
                            "layer {i}: pool {size} does not fit {}x{}",
                            s.height, s.width
                        ));
                    }
                    Shape::new(s.height / size, s.width / size, s.channels)
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return bad(format!("layer {i}: dense with zero units"));
                    }
                    Shape::new(1, 1, units)
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(format!("layer {i}: dropout rate {rate} outside [0, 1)"));
                    }
                    s
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return bad(format!("layer {i}: softmax before the last layer"));
                    }
                    if s.len() != self.num_classes {
                        return bad(format!(
                            "softmax over {} values but {} classes",
                            s.len(),
                            self.num_classes
                        ));
                    }
                    s
                }
                LayerSpec::Relu => s,
            };
            shapes.push(s);
        }
        Ok(shapes)
    }

    /// Index of the first dropout layer; every layer before it is
    /// deterministic in all forward modes.
    pub fn stochastic_start(&self) -> usize {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Dropout { .. }))
            .unwrap_or(self.layers.len())
    }

    /// Copy with every dropout rate replaced by `rate`.
    pub fn with_dropout(&self, rate: f64) -> Self {
        let mut out = self.clone();
        for l in out.layers.iter_mut() {
            if let LayerSpec::Dropout { rate: r } = l {
                *r = rate;
            }
        }
        out
    }

    /// Dropout rate of the last dropout layer, used by the weight-decay rule.
    pub fn final_dropout(&self) -> Option<f64> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Dropout { rate } => Some(*rate),
            _ => None,
        })
    }
}
