use serde::{Deserialize, Serialize};

use super::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub filters: usize,
}

/// Max pooling window and stride (applied identically along both axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec { size: 2, stride: 1 }
    }
}

/// Hidden-layer nonlinearity. `Identity` exists for testing gradient rules
/// without any rectifiers in the path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// Layer layout of the consonant classifier: valid convolutions (stride 1),
/// each followed by the activation and max pooling, then fully connected
/// hidden layers and a linear output layer with softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub conv: Vec<ConvSpec>,
    pub pool: PoolSpec,
    pub hidden: Vec<usize>,
    pub classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

/// Spatial sizes flowing through one convolution block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_height: usize,
    pub in_width: usize,
    pub in_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub out_height: usize,
    pub out_width: usize,
    pub out_channels: usize,
    pub pooled_height: usize,
    pub pooled_width: usize,
}

impl ConvShape {
    pub fn in_len(&self) -> usize {
        self.in_height * self.in_width * self.in_channels
    }

    /// Output positions per sample.
    pub fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Patch length (`kh * kw * in_channels`).
    pub fn patch(&self) -> usize {
        self.kernel_height * self.kernel_width * self.in_channels
    }

    pub fn out_len(&self) -> usize {
        self.positions() * self.out_channels
    }

    pub fn pooled_len(&self) -> usize {
        self.pooled_height * self.pooled_width * self.out_channels
    }
}

impl Architecture {
    /// Two convolutions (9x5 and 5x3, 64 filters each), 2x2 pooling with
    /// stride 1, three 1024-unit hidden layers.
    pub fn standard(input_height: usize, input_width: usize, classes: usize) -> Self {
        Architecture {
            input_height,
            input_width,
            conv: vec![
                ConvSpec {
                    kernel_height: 9,
                    kernel_width: 5,
                    filters: 64,
                },
                ConvSpec {
                    kernel_height: 5,
                    kernel_width: 3,
                    filters: 64,
                },
            ],
            pool: PoolSpec::default(),
            hidden: vec![1024; 3],
            classes,
            activation: Activation::Relu,
        }
    }

    /// Same layout with a different input size (used when the window changes).
    pub fn with_input(&self, input_height: usize, input_width: usize) -> Self {
        Architecture {
            input_height,
            input_width,
            ..self.clone()
        }
    }

    pub fn with_classes(&self, classes: usize) -> Self {
        Architecture {
            classes,
            ..self.clone()
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>, NetworkError> {
        let mut shapes = Vec::with_capacity(self.conv.len());
        let (mut h, mut w, mut c) = (self.input_height, self.input_width, 1);
        if self.pool.size == 0 || self.pool.stride == 0 {
            return Err(NetworkError::InvalidArchitecture(
                "pool size and stride must be positive".into(),
            ));
        }
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.kernel_height == 0 || spec.kernel_width == 0 || spec.filters == 0 {
                return Err(NetworkError::InvalidArchitecture(format!(
                    "conv{} has a zero dimension",
                    i + 1
                )));
            }
            if spec.kernel_height > h || spec.kernel_width > w {
                return Err(NetworkError::InvalidArchitecture(format!(
                    "conv{} kernel {}x{} does not fit a {h}x{w} input",
                    i + 1,
                    spec.kernel_height,
                    spec.kernel_width
                )));
            }
            let (oh, ow) = (h - spec.kernel_height + 1, w - spec.kernel_width + 1);
            if self.pool.size > oh || self.pool.size > ow {
                return Err(NetworkError::InvalidArchitecture(format!(
                    "pool {} does not fit the {oh}x{ow} output of conv{}",
                    self.pool.size,
                    i + 1
                )));
            }
            let ph = (oh - self.pool.size) / self.pool.stride + 1;
            let pw = (ow - self.pool.size) / self.pool.stride + 1;
            shapes.push(ConvShape {
                in_height: h,
                in_width: w,
                in_channels: c,
                kernel_height: spec.kernel_height,
                kernel_width: spec.kernel_width,
                out_height: oh,
                out_width: ow,
                out_channels: spec.filters,
                pooled_height: ph,
                pooled_width: pw,
            });
            (h, w, c) = (ph, pw, spec.filters);
        }
        Ok(shapes)
    }

    /// Length of the flattened convolutional output feeding the first dense layer.
    pub fn flatten_dim(&self) -> Result<usize, NetworkError> {
        let shapes = self.conv_shapes()?;
        Ok(shapes
            .last()
            .map_or(self.input_len(), ConvShape::pooled_len))
    }

    /// `(in, out)` of every dense layer, output layer last.
    pub fn dense_dims(&self) -> Result<Vec<(usize, usize)>, NetworkError> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.flatten_dim()?;
        for &h in self.hidden.iter().chain(std::iter::once(&self.classes)) {
            if h == 0 {
                return Err(NetworkError::InvalidArchitecture(
                    "dense layer of width 0".into(),
                ));
            }
            dims.push((fan_in, h));
            fan_in = h;
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(NetworkError::InvalidArchitecture("empty input".into()));
        }
        if self.classes < 2 {
            return Err(NetworkError::InvalidArchitecture(
                "need at least two classes".into(),
            ));
        }
        self.dense_dims().map(|_| ())
    }

    /// Names and shapes of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, NetworkError> {
        self.validate()?;
        let mut out = Vec::new();
        for (i, s) in self.conv_shapes()?.iter().enumerate() {
            out.push((
                format!("conv{}.weight", i + 1),
                vec![
                    s.kernel_height,
                    s.kernel_width,
                    s.in_channels,
                    s.out_channels,
                ],
            ));
            out.push((format!("conv{}.bias", i + 1), vec![s.out_channels]));
        }
        let dims = self.dense_dims()?;
        let last = dims.len() - 1;
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let name = if i == last {
                "out".to_string()
            } else {
                format!("fc{}", i + 1)
            };
            out.push((format!("{name}.weight"), vec![fan_in, fan_out]));
            out.push((format!("{name}.bias"), vec![fan_out]));
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize, NetworkError> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shape_arithmetic() {
        let arch = Architecture::standard(40, 32, 21);
        let shapes = arch.conv_shapes().unwrap();
        assert_eq!((shapes[0].out_height, shapes[0].out_width), (32, 28));
        assert_eq!((shapes[0].pooled_height, shapes[0].pooled_width), (31, 27));
        assert_eq!((shapes[1].out_height, shapes[1].out_width), (27, 25));
        assert_eq!((shapes[1].pooled_height, shapes[1].pooled_width), (26, 24));
        assert_eq!(arch.flatten_dim().unwrap(), 39_936);
        let dense = arch.dense_dims().unwrap();
        assert_eq!(
            dense,
            vec![(39_936, 1024), (1024, 1024), (1024, 1024), (1024, 21)]
        );
    }

    #[test]
    fn sweep_windows_all_fit() {
        for frames in (12..=40).step_by(4) {
            let arch = Architecture::standard(40, frames, 21);
            let shapes = arch.conv_shapes().unwrap();
            assert_eq!(shapes[1].pooled_width, frames - 8);
            assert_eq!(arch.flatten_dim().unwrap(), 26 * (frames - 8) * 64);
        }
    }

    #[test]
    fn param_names_in_order() {
        let names: Vec<String> = Architecture::standard(40, 32, 21)
            .param_shapes()
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(
            names,
            [
                "conv1.weight",
                "conv1.bias",
                "conv2.weight",
                "conv2.bias",
                "fc1.weight",
                "fc1.bias",
                "fc2.weight",
                "fc2.bias",
                "fc3.weight",
                "fc3.bias",
                "out.weight",
                "out.bias"
            ]
        );
    }

    #[test]
    fn kernel_too_large() {
        let arch = Architecture::standard(8, 32, 4);
        assert!(matches!(
            arch.validate(),
            Err(NetworkError::InvalidArchitecture(_))
        ));
    }
}
