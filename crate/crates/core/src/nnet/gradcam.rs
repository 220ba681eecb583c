use crate::image::resize_bilinear;

use super::network::NUM_CLASSES;
use super::{Network, NnetError, Tensor};

/// Class activation map at a convolution layer's spatial resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCamMap {
    /// Row-major `height x width`, all values >= 0.
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub layer_id: String,
    pub class_index: usize,
    /// Bilinear upsample to the input resolution, when requested.
    pub upsampled: Option<Vec<f64>>,
}

impl GradCamMap {
    /// The map scaled to [0, 1] by its maximum (all zeros stay zero).
    pub fn normalized(values: &[f64]) -> Vec<f64> {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; values.len()]
        }
    }
}

/// Channel weights are the spatial means of `gradients`; the map is the
/// ReLU of the weighted channel sum of `activations`. Both inputs are
/// interleaved `[h, w, channels]`.
pub fn grad_cam_from_parts(
    activations: &[f64],
    gradients: &[f64],
    height: usize,
    width: usize,
    channels: usize,
) -> Vec<f64> {
    let cells = height * width;
    assert_eq!(activations.len(), cells * channels);
    assert_eq!(gradients.len(), cells * channels);
    let mut weights = vec![0.0; channels];
    for cell in gradients.chunks_exact(channels) {
        for (w, g) in weights.iter_mut().zip(cell) {
            *w += g;
        }
    }
    for w in &mut weights {
        *w /= cells as f64;
    }
    activations
        .chunks_exact(channels)
        .map(|cell| {
            cell.iter()
                .zip(&weights)
                .map(|(a, w)| a * w)
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}

impl Network {
    /// Grad-CAM for `class_index` at convolution layer `layer_id` (the last
    /// convolution layer when `None`). Gradients are of the class logit with
    /// respect to the layer's post-ReLU output.
    pub fn grad_cam(
        &self,
        image: &Tensor,
        class_index: usize,
        layer_id: Option<&str>,
        upsample: bool,
    ) -> Result<GradCamMap, NnetError> {
        if class_index >= NUM_CLASSES {
            return Err(NnetError::InvalidLabel(class_index));
        }
        let cfg = self.config();
        let layer_id = match layer_id {
            Some(id) => id.to_string(),
            None => cfg
                .last_conv_layer()
                .ok_or_else(|| NnetError::UnknownLayer("<no convolution layers>".into()))?,
        };
        let block = cfg.conv_block(&layer_id)?;
        let pixels = self.checked_image(image)?;
        let sample = self.forward_sample(pixels);

        let mut dlogits = vec![0.0; NUM_CLASSES];
        dlogits[class_index] = 1.0;
        let grads = self.grad_wrt_conv_activation(&sample, &dlogits, block);
        let (height, width) = cfg.block_output_dims(block);
        let values = grad_cam_from_parts(
            sample.conv_activation(block),
            &grads,
            height,
            width,
            cfg.conv_filters[block],
        );
        let upsampled = upsample.then(|| {
            resize_bilinear(&values, height, width, 1, cfg.input_height, cfg.input_width)
        });
        Ok(GradCamMap {
            values,
            height,
            width,
            layer_id,
            class_index,
            upsampled,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::NetworkConfig;

    #[test]
    fn single_channel_positive_gradient_gives_uniform_map() {
        let map = grad_cam_from_parts(&[1.0; 4], &[0.5, 1.0, 1.5, 2.0], 2, 2, 1);
        assert_eq!(map, vec![1.25; 4]);
    }

    #[test]
    fn negative_pooled_gradients_clip_to_zero() {
        let acts = [0.3, 1.0, 2.0, 0.7, 0.0, 4.0, 1.0, 1.0];
        let grads = [-1.0, -0.5, -2.0, 0.1, -0.3, -0.1, -0.2, -0.4];
        let map = grad_cam_from_parts(&acts, &grads, 2, 2, 2);
        assert_eq!(map, vec![0.0; 4]);
    }

    #[test]
    fn two_channel_hand_computed() {
        // channel 0 acts [1, 2, 3, 4], channel 1 acts [4, 3, 2, 1]
        // channel 0 grads [1, 1, 1, 1] -> weight 1
        // channel 1 grads [-1, -2, 0, -1] -> weight -1
        // weighted sums: 1-4=-3, 2-3=-1, 3-2=1, 4-1=3 -> ReLU [0, 0, 1, 3]
        let acts = [1.0, 4.0, 2.0, 3.0, 3.0, 2.0, 4.0, 1.0];
        let grads = [1.0, -1.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0];
        let map = grad_cam_from_parts(&acts, &grads, 2, 2, 2);
        assert_eq!(map, vec![0.0, 0.0, 1.0, 3.0]);
    }

    #[test]
    fn network_map_has_layer_shape_and_is_nonnegative() {
        let cfg = NetworkConfig::new(8, 8, vec![3, 4]);
        let net = Network::init(cfg, 21).unwrap();
        let image = Tensor::from_vec(
            vec![8, 8, 3],
            (0..192).map(|i| ((i * 37) % 101) as f64 / 100.0).collect(),
        );
        for class in 0..9 {
            let m = net.grad_cam(&image, class, None, true).unwrap();
            assert_eq!(m.layer_id, "conv2");
            assert_eq!((m.height, m.width), (4, 4));
            assert_eq!(m.values.len(), 16);
            assert!(m.values.iter().all(|&v| v >= 0.0));
            assert_eq!(m.upsampled.as_ref().unwrap().len(), 64);
        }
        let m = net.grad_cam(&image, 0, Some("conv1"), false).unwrap();
        assert_eq!((m.height, m.width), (8, 8));
        assert!(m.upsampled.is_none());
        assert!(matches!(
            net.grad_cam(&image, 9, None, false),
            Err(NnetError::InvalidLabel(9))
        ));
        assert!(matches!(
            net.grad_cam(&image, 0, Some("conv3"), false),
            Err(NnetError::UnknownLayer(_))
        ));
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        // Central differences of the class logit with respect to each
        // (strictly positive) conv1 activation, with the head recomputed
        // by hand.
        let cfg = NetworkConfig::new(4, 4, vec![2]);
        let net = Network::init(cfg.clone(), 5).unwrap();
        let image = Tensor::from_vec(
            vec![4, 4, 3],
            (0..48).map(|i| ((i * 13) % 17) as f64 / 17.0).collect(),
        );
        let sample = net.forward_sample(image.data());
        let mut dlogits = vec![0.0; 9];
        dlogits[2] = 1.0;
        let grads = net.grad_wrt_conv_activation(&sample, &dlogits, 0);

        // Recompute the logit from a perturbed activation map by hand.
        let logit_from_act = |act: &[f64]| {
            let (pooled, _) = crate::nnet::model::max_pool_forward(act, 4, 4, 2);
            let fc1 = net.params.get("fc1.weight").unwrap().data();
            let b1 = net.params.get("fc1.bias").unwrap().data();
            let fc2 = net.params.get("fc2.weight").unwrap().data();
            let b2 = net.params.get("fc2.bias").unwrap().data();
            let feats: Vec<f64> = (0..512)
                .map(|o| {
                    (b1[o] + (0..pooled.len()).map(|i| fc1[o * pooled.len() + i] * pooled[i]).sum::<f64>())
                        .max(0.0)
                })
                .collect();
            b2[2] + (0..512).map(|i| fc2[2 * 512 + i] * feats[i]).sum::<f64>()
        };
        let act = sample.conv_activation(0).to_vec();
        let eps = 1e-6;
        for idx in (0..act.len()).filter(|&i| act[i] > 1e-3) {
            let mut plus = act.clone();
            plus[idx] += eps;
            let mut minus = act.clone();
            minus[idx] -= eps;
            let fd = (logit_from_act(&plus) - logit_from_act(&minus)) / (2.0 * eps);
            assert!((fd - grads[idx]).abs() < 1e-6, "idx {idx}: {fd} vs {}", grads[idx]);
        }
    }
}
