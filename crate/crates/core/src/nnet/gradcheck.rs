use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cross_entropy, softmax, ForwardCache};
use super::{Network, NetworkConfig, NnetError, Tensor};

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Samples in the random batch used by [`gradient_check`].
const CHECK_BATCH: usize = 3;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter tensor and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
    /// Entries whose +-eps probes land on different sides of a ReLU or
    /// max-pool switch. Central differences are meaningless there, so they
    /// are left out of the maximum.
    pub kinks_skipped: usize,
}

/// Which side of every ReLU and which max-pool winner each sample uses.
fn activation_pattern(cache: &ForwardCache) -> Vec<u64> {
    let mut bits = Vec::new();
    for s in &cache.samples {
        for b in &s.blocks {
            bits.extend(b.pre.iter().map(|&v| (v > 0.0) as u64));
            bits.extend(b.argmax.iter().map(|&i| i as u64));
        }
        bits.extend(s.fc1_pre.iter().map(|&v| (v > 0.0) as u64));
    }
    bits
}

/// Compares backward against central differences of the mean
/// cross-entropy for every parameter, at a random point: seeded weights,
/// random biases, a random batch of images and labels.
pub fn gradient_check(config: &NetworkConfig, seed: u64, eps: f64) -> Result<GradCheckReport, NnetError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NnetError::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let mut net = Network::init(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    for (name, t) in &mut net.params.tensors {
        if name.ends_with(".bias") {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let images = Tensor::from_vec(
        vec![CHECK_BATCH, config.input_height, config.input_width, 3],
        (0..CHECK_BATCH * config.image_len())
            .map(|_| rng.random::<f64>())
            .collect(),
    );
    let labels: Vec<usize> = (0..CHECK_BATCH).map(|_| rng.random_range(0..9)).collect();

    let (_, cache) = net.forward(&images)?;
    let analytic = net.backward(&cache, &labels)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        params_checked: 0,
        kinks_skipped: 0,
    };
    let base_pattern = activation_pattern(&cache);
    for t_idx in 0..net.params.tensors.len() {
        for i in 0..net.params.tensors[t_idx].1.len() {
            let original = net.params.tensors[t_idx].1.data()[i];
            net.params.tensors[t_idx].1.data_mut()[i] = original + eps;
            let (plus_logits, plus_cache) = net.forward(&images)?;
            let plus = cross_entropy(&softmax(&plus_logits), &labels)?;
            net.params.tensors[t_idx].1.data_mut()[i] = original - eps;
            let (minus_logits, minus_cache) = net.forward(&images)?;
            let minus = cross_entropy(&softmax(&minus_logits), &labels)?;
            net.params.tensors[t_idx].1.data_mut()[i] = original;
            if activation_pattern(&plus_cache) != base_pattern
                || activation_pattern(&minus_cache) != base_pattern
            {
                report.kinks_skipped += 1;
                continue;
            }

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.tensors[t_idx].1.data()[i];
            let err = relative_error(a, numeric);
            report.params_checked += 1;
            if err > report.max_relative_error || report.worst.0.is_empty() {
                report.max_relative_error = err;
                report.worst = (net.params.tensors[t_idx].0.clone(), i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_eps_rejected() {
        let cfg = NetworkConfig::new(4, 4, vec![1]);
        assert!(matches!(
            gradient_check(&cfg, 1, 0.0),
            Err(NnetError::InvalidArgument(_))
        ));
        assert!(gradient_check(&cfg, 1, -1e-5).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(0.0, 1e-9) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn tiny_conv_net_passes() {
        let cfg = NetworkConfig::new(4, 4, vec![2]);
        let r = gradient_check(&cfg, 3, 1e-5).unwrap();
        assert_eq!(r.params_checked + r.kinks_skipped, cfg_params(&cfg));
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn linear_only_net_passes_tightly() {
        let cfg = NetworkConfig::new(2, 2, vec![]);
        let r = gradient_check(&cfg, 4, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-7, "{r:?}");
    }

    fn cfg_params(cfg: &NetworkConfig) -> usize {
        crate::nnet::init_params(cfg, 0).unwrap().num_params()
    }
}
