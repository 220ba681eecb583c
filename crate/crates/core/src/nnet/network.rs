use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NnetError, Tensor};

/// Width of the penultimate fully connected layer (the embedding size).
pub const FEATURE_WIDTH: usize = 512;
/// Number of output classes.
pub const NUM_CLASSES: usize = 9;
/// Convolution kernel side.
pub const KERNEL: usize = 3;
/// Max-pool window and stride.
pub const POOL: usize = 2;
/// Input channels.
pub const CHANNELS: usize = 3;

/// Architecture: `conv_filters.len()` blocks of (3x3 conv, ReLU, 2x2
/// max-pool), flatten, FC-512 + ReLU, FC-9.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub conv_filters: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_height: 32,
            input_width: 32,
            conv_filters: vec![8, 16, 32],
        }
    }
}

impl NetworkConfig {
    pub fn new(input_height: usize, input_width: usize, conv_filters: Vec<usize>) -> Self {
        NetworkConfig {
            input_height,
            input_width,
            conv_filters,
        }
    }

    pub fn feature_width(&self) -> usize {
        FEATURE_WIDTH
    }

    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(NnetError::InvalidConfig("zero-sized input".into()));
        }
        if let Some(i) = self.conv_filters.iter().position(|&f| f == 0) {
            return Err(NnetError::InvalidConfig(format!("conv{} has zero filters", i + 1)));
        }
        let (h, w) = self.block_output_dims(self.conv_filters.len());
        if h == 0 || w == 0 {
            return Err(NnetError::InvalidConfig(format!(
                "{}x{} input pooled to nothing after {} blocks",
                self.input_height,
                self.input_width,
                self.conv_filters.len()
            )));
        }
        Ok(())
    }

    /// Spatial size entering block `block` (block 0 sees the input); with
    /// `block == conv_filters.len()` this is the flattened map's size.
    pub fn block_output_dims(&self, block: usize) -> (usize, usize) {
        (0..block).fold((self.input_height, self.input_width), |(h, w), _| {
            (h / POOL, w / POOL)
        })
    }

    /// Channel count entering block `block`.
    pub fn block_input_channels(&self, block: usize) -> usize {
        if block == 0 {
            CHANNELS
        } else {
            self.conv_filters[block - 1]
        }
    }

    /// Length of the flattened vector feeding FC-512.
    pub fn flat_len(&self) -> usize {
        let (h, w) = self.block_output_dims(self.conv_filters.len());
        h * w * self.block_input_channels(self.conv_filters.len())
    }

    pub fn image_len(&self) -> usize {
        self.input_height * self.input_width * CHANNELS
    }

    /// Layer names in parameter order: `conv1`..`convK`, `fc1`, `fc2`.
    pub fn layer_names(&self) -> Vec<String> {
        (1..=self.conv_filters.len())
            .map(|i| format!("conv{i}"))
            .chain(["fc1".to_string(), "fc2".to_string()])
            .collect()
    }

    /// Block index of a convolution layer id such as `conv2`.
    pub fn conv_block(&self, layer_id: &str) -> Result<usize, NnetError> {
        layer_id
            .strip_prefix("conv")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1 && n <= self.conv_filters.len())
            .map(|n| n - 1)
            .ok_or_else(|| NnetError::UnknownLayer(layer_id.to_string()))
    }

    /// Id of the last convolution layer, the default Grad-CAM target.
    pub fn last_conv_layer(&self) -> Option<String> {
        (!self.conv_filters.is_empty()).then(|| format!("conv{}", self.conv_filters.len()))
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        for (i, &f) in self.conv_filters.iter().enumerate() {
            let c = self.block_input_channels(i);
            shapes.push((format!("conv{}.weight", i + 1), vec![f, KERNEL, KERNEL, c]));
            shapes.push((format!("conv{}.bias", i + 1), vec![f]));
        }
        shapes.push(("fc1.weight".into(), vec![FEATURE_WIDTH, self.flat_len()]));
        shapes.push(("fc1.bias".into(), vec![FEATURE_WIDTH]));
        shapes.push(("fc2.weight".into(), vec![NUM_CLASSES, FEATURE_WIDTH]));
        shapes.push(("fc2.bias".into(), vec![NUM_CLASSES]));
        shapes
    }
}

/// Named parameter tensors in layer order (weight then bias per layer).
/// Gradients and momentum buffers use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub tensors: Vec<(String, Tensor)>,
    pub rng_seed: Option<u64>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Self {
        NetworkParams {
            tensors: config
                .param_shapes()
                .into_iter()
                .map(|(name, shape)| (name, Tensor::zeros(shape)))
                .collect(),
            rng_seed: None,
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
                .collect(),
            rng_seed: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn conv_weight(&self, block: usize) -> &[f64] {
        self.tensors[2 * block].1.data()
    }

    pub fn conv_bias(&self, block: usize) -> &[f64] {
        self.tensors[2 * block + 1].1.data()
    }

    pub(crate) fn fc_index(&self, which: usize) -> usize {
        self.tensors.len() - 4 + 2 * which
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|(_, t)| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|(_, t)| t.is_finite())
    }

    /// Checks names and shapes against `config`.
    pub fn check_config(&self, config: &NetworkConfig) -> Result<(), NnetError> {
        let expected = config.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(NnetError::ShapeMismatch(format!(
                "config expects {} parameter tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (have_name, t)) in expected.iter().zip(&self.tensors) {
            if name != have_name || shape.as_slice() != t.shape() {
                return Err(NnetError::ShapeMismatch(format!(
                    "expected {name} {shape:?}, found {have_name} {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Cheap order-sensitive digest of every parameter bit, used to detect
    /// stale forward caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in &self.tensors {
            for v in t.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Weights from `U(-b, b)` with `b = sqrt(6 / fan_in)`, rounded to the
/// nearest `f32` so a fresh network survives a checkpoint unchanged; biases
/// zero. Deterministic for a given seed (ChaCha8 stream).
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams, NnetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(config);
    for (name, t) in &mut params.tensors {
        if !name.ends_with(".weight") {
            continue;
        }
        let fan_in: usize = t.shape()[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in t.data_mut() {
            *v = f64::from(rng.random_range(-bound..bound) as f32);
        }
    }
    params.rng_seed = Some(seed);
    Ok(params)
}

/// Rebuilds the architecture from parameter shapes. The input size is not
/// stored in a checkpoint; it is taken from `input_hw`, or assumed square
/// and an exact multiple of the total pooling factor when `None`.
pub fn infer_config(
    params: &NetworkParams,
    input_hw: Option<(usize, usize)>,
) -> Result<NetworkConfig, NnetError> {
    let mut conv_filters = Vec::new();
    for (name, t) in &params.tensors {
        if name.starts_with("conv") && name.ends_with(".weight") {
            conv_filters.push(t.shape()[0]);
        }
    }
    let (h, w) = match input_hw {
        Some(hw) => hw,
        None => {
            let fc1 = params
                .get("fc1.weight")
                .ok_or_else(|| NnetError::ShapeMismatch("missing fc1.weight".into()))?;
            let flat = fc1.shape()[1];
            let channels = conv_filters.last().copied().unwrap_or(CHANNELS);
            let cells = flat / channels;
            let side = (cells as f64).sqrt().round() as usize;
            if side * side * channels != flat {
                return Err(NnetError::ShapeMismatch(format!(
                    "cannot infer a square input from fc1 fan-in {flat}"
                )));
            }
            let factor = POOL.pow(conv_filters.len() as u32);
            (side * factor, side * factor)
        }
    };
    let config = NetworkConfig::new(h, w, conv_filters);
    params.check_config(&config)?;
    Ok(config)
}
