//! Declarative layer stacks and the published architecture presets.

use std::fmt;
use std::str::FromStr;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(NnError::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kh: usize,
        kw: usize,
        activation: Activation,
    },
    MaxPool {
        ph: usize,
        pw: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, k: usize) -> LayerSpec {
        LayerSpec::Conv2d {
            filters,
            kh: k,
            kw: k,
            activation: Activation::Relu,
        }
    }

    pub fn pool(p: usize) -> LayerSpec {
        LayerSpec::MaxPool { ph: p, pw: p }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }
}

/// Output shape after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match *self {
            LayerShape::Spatial { c, h, w } => c * h * w,
            LayerShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The seven architecture-sweep variants and the selected best model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Exp5,
    Exp6,
    Exp7,
    Best,
}

impl Preset {
    pub const SWEEP: [Preset; 7] = [
        Preset::Exp1,
        Preset::Exp2,
        Preset::Exp3,
        Preset::Exp4,
        Preset::Exp5,
        Preset::Exp6,
        Preset::Exp7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Exp1 => "EXP1",
            Preset::Exp2 => "EXP2",
            Preset::Exp3 => "EXP3",
            Preset::Exp4 => "EXP4",
            Preset::Exp5 => "EXP5",
            Preset::Exp6 => "EXP6",
            Preset::Exp7 => "EXP7",
            Preset::Best => "BEST",
        }
    }

    /// `(filters, kernel, pool after the conv)` per convolution.
    fn conv_blocks(self) -> &'static [(usize, usize, Option<usize>)] {
        match self {
            Preset::Exp1 => &[(128, 3, Some(3)), (256, 3, Some(3)), (512, 3, Some(3))],
            Preset::Exp2 => &[(128, 3, Some(3)), (512, 3, Some(3)), (128, 3, Some(3))],
            Preset::Exp3 => &[(128, 3, Some(2)), (256, 3, Some(2)), (128, 3, Some(2))],
            Preset::Exp4 => &[(128, 3, Some(2)), (256, 3, Some(2)), (128, 3, None), (64, 3, None)],
            Preset::Exp5 => &[
                (96, 11, Some(3)),
                (256, 5, None),
                (384, 3, None),
                (384, 3, None),
                (256, 3, Some(3)),
            ],
            Preset::Exp6 => &[
                (96, 11, Some(3)),
                (256, 5, Some(3)),
                (384, 3, None),
                (384, 3, None),
                (256, 3, Some(3)),
            ],
            Preset::Exp7 => &[
                (16, 3, Some(3)),
                (32, 2, Some(3)),
                (64, 2, None),
                (128, 2, None),
                (256, 2, Some(3)),
                (256, 2, None),
            ],
            Preset::Best => &[(128, 3, Some(2)), (256, 3, Some(2)), (128, 3, Some(2)), (64, 3, Some(2))],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EXP1" | "1" => Ok(Preset::Exp1),
            "EXP2" | "2" => Ok(Preset::Exp2),
            "EXP3" | "3" => Ok(Preset::Exp3),
            "EXP4" | "4" => Ok(Preset::Exp4),
            "EXP5" | "5" => Ok(Preset::Exp5),
            "EXP6" | "6" => Ok(Preset::Exp6),
            "EXP7" | "7" => Ok(Preset::Exp7),
            "BEST" => Ok(Preset::Best),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

pub const BLOCK_DROPOUT: f64 = 0.25;
pub const HEAD_DROPOUT: f64 = 0.5;

impl ModelConfig {
    /// Preset on the canonical 1x137x310 spectrogram input.
    pub fn preset(preset: Preset) -> ModelConfig {
        Self::preset_for_input(preset, [1, 137, 310])
    }

    /// Every preset ends in flatten -> dropout(0.5) -> dense(1, sigmoid). Only
    /// the best model carries the 0.25 dropout after each conv block.
    pub fn preset_for_input(preset: Preset, input_shape: [usize; 3]) -> ModelConfig {
        let mut layers = Vec::new();
        for &(filters, k, pool) in preset.conv_blocks() {
            layers.push(LayerSpec::conv(filters, k));
            if let Some(p) = pool {
                layers.push(LayerSpec::pool(p));
            }
            if preset == Preset::Best {
                layers.push(LayerSpec::Dropout { rate: BLOCK_DROPOUT });
            }
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dropout { rate: HEAD_DROPOUT });
        layers.push(LayerSpec::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        });
        ModelConfig { input_shape, layers }
    }

    /// Same topology with every conv's filter count divided by `divisor`
    /// (at least one filter). Used for smoke runs on small machines.
    pub fn with_width_divisor(&self, divisor: usize) -> ModelConfig {
        let divisor = divisor.max(1);
        let layers = self
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv2d {
                    filters,
                    kh,
                    kw,
                    activation,
                } => LayerSpec::Conv2d {
                    filters: (filters / divisor).max(1),
                    kh,
                    kw,
                    activation,
                },
                other => other,
            })
            .collect();
        ModelConfig {
            input_shape: self.input_shape,
            layers,
        }
    }

    /// Names of the parametric layers in order: `conv1`, `conv2`, ..., `dense1`.
    pub fn param_layer_names(&self) -> Vec<(usize, String)> {
        let (mut conv, mut dense) = (0, 0);
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                LayerSpec::Conv2d { .. } => {
                    conv += 1;
                    Some((i, format!("conv{conv}")))
                }
                LayerSpec::Dense { .. } => {
                    dense += 1;
                    Some((i, format!("dense{dense}")))
                }
                _ => None,
            })
            .collect()
    }

    /// Shape after every layer; fails if any dimension would reach zero or a
    /// layer sees the wrong kind of input.
    pub fn output_shapes(&self) -> Result<Vec<LayerShape>, NnError> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(NnError::InvalidConfig("input shape has a zero dimension".into()));
        }
        let mut shape = LayerShape::Spatial { c, h, w };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| NnError::InvalidConfig(format!("layer {i} ({layer:?}): {msg}"));
            shape = match (*layer, shape) {
                (LayerSpec::Conv2d { filters, kh, kw, .. }, LayerShape::Spatial { h, w, .. }) => {
                    if filters == 0 || kh == 0 || kw == 0 {
                        return Err(bad("filters and kernel dims must be positive".into()));
                    }
                    LayerShape::Spatial { c: filters, h, w }
                }
                (LayerSpec::MaxPool { ph, pw }, LayerShape::Spatial { c, h, w }) => {
                    if ph == 0 || pw == 0 {
                        return Err(bad("pool dims must be positive".into()));
                    }
                    if h / ph == 0 || w / pw == 0 {
                        return Err(bad(format!("pooling a {h}x{w} map to zero")));
                    }
                    LayerShape::Spatial {
                        c,
                        h: h / ph,
                        w: w / pw,
                    }
                }
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(bad(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    s
                }
                (LayerSpec::Flatten, s) => LayerShape::Flat(s.len()),
                (LayerSpec::Dense { units, .. }, LayerShape::Flat(_)) => {
                    if units == 0 {
                        return Err(bad("units must be positive".into()));
                    }
                    LayerShape::Flat(units)
                }
                (_, s) => return Err(bad(format!("cannot follow a {s:?} output"))),
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.output_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            }) => Ok(()),
            _ => Err(NnError::InvalidConfig(
                "final layer must be Dense(1, sigmoid)".into(),
            )),
        }
    }

    /// Length of the vector produced by the (last) flatten layer.
    pub fn flatten_len(&self) -> Result<Option<usize>, NnError> {
        let shapes = self.output_shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .rev()
            .find(|(l, _)| matches!(l, LayerSpec::Flatten))
            .map(|(_, s)| s.len()))
    }
}

/// Line-oriented text form used inside checkpoints.
impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c, h, w] = self.input_shape;
        writeln!(f, "input {c} {h} {w}")?;
        for l in &self.layers {
            match l {
                LayerSpec::Conv2d {
                    filters,
                    kh,
                    kw,
                    activation,
                } => writeln!(f, "conv2d {filters} {kh} {kw} {}", activation.name())?,
                LayerSpec::MaxPool { ph, pw } => writeln!(f, "maxpool {ph} {pw}")?,
                LayerSpec::Dropout { rate } => writeln!(f, "dropout {rate}")?,
                LayerSpec::Flatten => writeln!(f, "flatten")?,
                LayerSpec::Dense { units, activation } => {
                    writeln!(f, "dense {units} {}", activation.name())?
                }
            }
        }
        Ok(())
    }
}

impl FromStr for ModelConfig {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |l: &str| NnError::InvalidConfig(format!("cannot parse config line `{l}`"));
        let num = |t: Option<&str>, l: &str| -> Result<usize, NnError> {
            t.and_then(|v| v.parse().ok()).ok_or_else(|| bad(l))
        };
        let first = lines.next().ok_or_else(|| bad(""))?;
        let mut tok = first.split_whitespace();
        if tok.next() != Some("input") {
            return Err(bad(first));
        }
        let input_shape = [
            num(tok.next(), first)?,
            num(tok.next(), first)?,
            num(tok.next(), first)?,
        ];
        let mut layers = Vec::new();
        for line in lines {
            let mut tok = line.split_whitespace();
            let layer = match tok.next() {
                Some("conv2d") => LayerSpec::Conv2d {
                    filters: num(tok.next(), line)?,
                    kh: num(tok.next(), line)?,
                    kw: num(tok.next(), line)?,
                    activation: tok.next().ok_or_else(|| bad(line))?.parse()?,
                },
                Some("maxpool") => LayerSpec::MaxPool {
                    ph: num(tok.next(), line)?,
                    pw: num(tok.next(), line)?,
                },
                Some("dropout") => LayerSpec::Dropout {
                    rate: tok
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(line))?,
                },
                Some("flatten") => LayerSpec::Flatten,
                Some("dense") => LayerSpec::Dense {
                    units: num(tok.next(), line)?,
                    activation: tok.next().ok_or_else(|| bad(line))?.parse()?,
                },
                _ => return Err(bad(line)),
            };
            if tok.next().is_some() {
                return Err(bad(line));
            }
            layers.push(layer);
        }
        Ok(ModelConfig {
            input_shape,
            layers,
        })
    }
}
