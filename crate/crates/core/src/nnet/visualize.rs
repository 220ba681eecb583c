use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::CHANNELS;
use super::{Network, NnetError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterVisConfig {
    pub iterations: usize,
    /// Initial step, applied to the RMS-normalized input gradient.
    pub step_size: f64,
    /// Seed of the uniform-noise starting image.
    pub seed: u64,
}

impl Default for FilterVisConfig {
    fn default() -> Self {
        FilterVisConfig {
            iterations: 200,
            step_size: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterVisualization {
    /// `[H, W, 3]`, min-max normalized to [0, 1].
    pub image: Tensor,
    /// Objective before any step, then after each iteration.
    pub objective_history: Vec<f64>,
}

impl FilterVisualization {
    pub fn initial_objective(&self) -> f64 {
        self.objective_history[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().expect("history holds the start value")
    }
}

impl Network {
    /// Mean pre-ReLU response of `filter` in convolution layer `block` for
    /// one image.
    pub fn filter_objective(&self, image: &[f64], block: usize, filter: usize) -> f64 {
        let filters = self.config().conv_filters[block];
        let sample = self.forward_sample(image);
        let pre = sample.conv_response(block);
        pre.iter().skip(filter).step_by(filters).sum::<f64>() / (pre.len() / filters) as f64
    }

    /// Gradient ascent on the input image, from uniform noise, maximizing the
    /// mean response of one filter. Pixels stay clipped to [0, 1]. A step
    /// that lowers the objective is rejected and the step size halved, so
    /// the objective never decreases.
    pub fn filter_visualization(
        &self,
        layer_id: &str,
        filter_index: usize,
        config: &FilterVisConfig,
    ) -> Result<FilterVisualization, NnetError> {
        let cfg = self.config();
        let block = cfg.conv_block(layer_id)?;
        let filters = cfg.conv_filters[block];
        if filter_index >= filters {
            return Err(NnetError::InvalidArgument(format!(
                "{layer_id} has {filters} filters, got index {filter_index}"
            )));
        }
        if !(config.step_size > 0.0 && config.step_size.is_finite()) {
            return Err(NnetError::InvalidArgument("step_size must be > 0".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut x: Vec<f64> = (0..cfg.image_len()).map(|_| rng.random::<f64>()).collect();
        let shape = vec![cfg.input_height, cfg.input_width, CHANNELS];

        let (h, w) = cfg.block_output_dims(block);
        let cells = (h * w) as f64;
        let mut objective = self.filter_objective(&x, block, filter_index);
        if !objective.is_finite() {
            return Err(NnetError::VisualizationDiverged {
                iteration: 0,
                last_good: Box::new(Tensor::from_vec(shape, normalize(&x))),
            });
        }
        let mut history = Vec::with_capacity(config.iterations + 1);
        history.push(objective);
        let mut step = config.step_size;

        for iteration in 1..=config.iterations {
            let sample = self.forward_sample(&x);
            let mut d_pre = vec![0.0; sample.conv_response(block).len()];
            for v in d_pre.iter_mut().skip(filter_index).step_by(filters) {
                *v = 1.0 / cells;
            }
            let grad = self.backward_blocks(&sample, block, d_pre, None);
            let rms = (grad.iter().map(|g| g * g).sum::<f64>() / grad.len() as f64).sqrt();
            if rms > 0.0 {
                let candidate: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(v, g)| (v + step * g / rms).clamp(0.0, 1.0))
                    .collect();
                let value = self.filter_objective(&candidate, block, filter_index);
                if !value.is_finite() {
                    return Err(NnetError::VisualizationDiverged {
                        iteration,
                        last_good: Box::new(Tensor::from_vec(shape, normalize(&x))),
                    });
                }
                if value >= objective {
                    x = candidate;
                    objective = value;
                } else {
                    step *= 0.5;
                }
            }
            history.push(objective);
        }

        Ok(FilterVisualization {
            image: Tensor::from_vec(shape, normalize(&x)),
            objective_history: history,
        })
    }
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        x.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        vec![0.5; x.len()]
    }
}
