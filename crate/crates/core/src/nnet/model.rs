use super::network::{CHANNELS, FEATURE_WIDTH, KERNEL, NUM_CLASSES, POOL};
use super::{init_params, NetworkConfig, NetworkParams, NnetError, Tensor};

/// Probability floor applied before taking logs in the loss.
pub const LOG_FLOOR: f64 = 1e-12;

/// A configuration together with matching parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    pub params: NetworkParams,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
}

/// Every intermediate value of one sample's forward pass.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub(crate) input: Vec<f64>,
    pub(crate) blocks: Vec<BlockCache>,
    pub(crate) fc1_pre: Vec<f64>,
    pub(crate) features: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

impl SampleCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Post-ReLU activations of the FC-512 layer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Post-ReLU output of convolution block `block`, `[h, w, filters]`.
    pub fn conv_activation(&self, block: usize) -> &[f64] {
        &self.blocks[block].act
    }

    /// Pre-ReLU output of convolution block `block`.
    pub fn conv_response(&self, block: usize) -> &[f64] {
        &self.blocks[block].pre
    }

    fn flat(&self) -> &[f64] {
        self.blocks
            .last()
            .map(|b| b.pooled.as_slice())
            .unwrap_or(&self.input)
    }
}

/// Activations of a batch, tagged with the parameters that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub samples: Vec<SampleCache>,
    fingerprint: u64,
}

impl Network {
    pub fn new(config: NetworkConfig, params: NetworkParams) -> Result<Self, NnetError> {
        config.validate()?;
        params.check_config(&config)?;
        Ok(Network { config, params })
    }

    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, NnetError> {
        let params = init_params(&config, seed)?;
        Ok(Network { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_images(&self, images: &Tensor) -> Result<usize, NnetError> {
        let c = &self.config;
        let expected = [c.input_height, c.input_width, CHANNELS];
        if images.rank() != 4 || images.shape()[1..] != expected {
            return Err(NnetError::ShapeMismatch(format!(
                "images {:?}, expected [N, {}, {}, {}]",
                images.shape(),
                expected[0],
                expected[1],
                expected[2]
            )));
        }
        Ok(images.shape()[0])
    }

    fn check_image(&self, image: &Tensor) -> Result<(), NnetError> {
        let c = &self.config;
        if image.shape() != [c.input_height, c.input_width, CHANNELS] {
            return Err(NnetError::ShapeMismatch(format!(
                "image {:?}, expected [{}, {}, {CHANNELS}]",
                image.shape(),
                c.input_height,
                c.input_width
            )));
        }
        Ok(())
    }

    /// Logits `[N, 9]` and the cache needed by backward passes.
    pub fn forward(&self, images: &Tensor) -> Result<(Tensor, ForwardCache), NnetError> {
        let n = self.check_images(images)?;
        let samples: Vec<SampleCache> = (0..n).map(|i| self.forward_sample(images.row(i))).collect();
        let mut logits = Vec::with_capacity(n * NUM_CLASSES);
        for s in &samples {
            logits.extend_from_slice(&s.logits);
        }
        let logits = Tensor::from_vec(vec![n, NUM_CLASSES], logits);
        if !logits.is_finite() {
            return Err(NnetError::NonFinite("forward logits".into()));
        }
        Ok((
            logits,
            ForwardCache {
                samples,
                fingerprint: self.params.fingerprint(),
            },
        ))
    }

    pub(crate) fn forward_sample(&self, image: &[f64]) -> SampleCache {
        let cfg = &self.config;
        let mut blocks: Vec<BlockCache> = Vec::with_capacity(cfg.conv_filters.len());
        for (b, &filters) in cfg.conv_filters.iter().enumerate() {
            let (h, w) = cfg.block_output_dims(b);
            let c_in = cfg.block_input_channels(b);
            let input = blocks.last().map(|bc| bc.pooled.as_slice()).unwrap_or(image);
            let pre = conv_forward(
                input,
                h,
                w,
                c_in,
                self.params.conv_weight(b),
                self.params.conv_bias(b),
                filters,
            );
            let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let (pooled, argmax) = max_pool_forward(&act, h, w, filters);
            blocks.push(BlockCache {
                pre,
                act,
                pooled,
                argmax,
            });
        }
        let flat = blocks.last().map(|bc| bc.pooled.as_slice()).unwrap_or(image);
        let fc1 = self.params.fc_index(0);
        let fc1_pre = dense_forward(
            flat,
            self.params.tensors[fc1].1.data(),
            self.params.tensors[fc1 + 1].1.data(),
            FEATURE_WIDTH,
        );
        let features: Vec<f64> = fc1_pre.iter().map(|&v| v.max(0.0)).collect();
        let fc2 = self.params.fc_index(1);
        let logits = dense_forward(
            &features,
            self.params.tensors[fc2].1.data(),
            self.params.tensors[fc2 + 1].1.data(),
            NUM_CLASSES,
        );
        SampleCache {
            input: image.to_vec(),
            blocks,
            fc1_pre,
            features,
            logits,
        }
    }

    /// Class probabilities `[N, 9]`.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor, NnetError> {
        let (logits, _) = self.forward(images)?;
        Ok(softmax(&logits))
    }

    /// Mean cross-entropy of the batch.
    pub fn loss(&self, images: &Tensor, labels: &[usize]) -> Result<f64, NnetError> {
        let (logits, _) = self.forward(images)?;
        cross_entropy(&softmax(&logits), labels)
    }

    /// Exact gradients of the mean cross-entropy with respect to every
    /// parameter. Per-sample contributions are summed in sample order.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<NetworkParams, NnetError> {
        if cache.fingerprint != self.params.fingerprint() {
            return Err(NnetError::StaleCache(
                "parameters changed since the forward pass".into(),
            ));
        }
        if labels.len() != cache.samples.len() {
            return Err(NnetError::StaleCache(format!(
                "{} labels for a cache of {} samples",
                labels.len(),
                cache.samples.len()
            )));
        }
        check_labels(labels)?;
        let n = labels.len();
        let mut grads = self.params.zeros_like();
        for (sample, &label) in cache.samples.iter().zip(labels) {
            let mut dlogits = softmax_row(&sample.logits);
            dlogits[label] -= 1.0;
            for d in &mut dlogits {
                *d /= n as f64;
            }
            self.backward_sample(sample, &dlogits, Some(&mut grads));
        }
        Ok(grads)
    }

    /// Back-propagates `dlogits` through one sample, accumulating parameter
    /// gradients into `grads` when given, and returns the input gradient.
    pub(crate) fn backward_sample(
        &self,
        sample: &SampleCache,
        dlogits: &[f64],
        mut grads: Option<&mut NetworkParams>,
    ) -> Vec<f64> {
        let d_flat = self.backward_dense(sample, dlogits, grads.as_deref_mut());
        match self.config.conv_filters.len() {
            0 => d_flat,
            k => {
                let d_act = max_pool_backward(&d_flat, &sample.blocks[k - 1].argmax, sample.blocks[k - 1].act.len());
                let d_pre = relu_backward(&sample.blocks[k - 1].pre, d_act);
                self.backward_blocks(sample, k - 1, d_pre, grads)
            }
        }
    }

    /// Gradient flowing into the flattened vector from the dense head.
    fn backward_dense(
        &self,
        sample: &SampleCache,
        dlogits: &[f64],
        grads: Option<&mut NetworkParams>,
    ) -> Vec<f64> {
        let fc1 = self.params.fc_index(0);
        let fc2 = self.params.fc_index(1);
        let w2 = self.params.tensors[fc2].1.data();
        let w1 = self.params.tensors[fc1].1.data();
        let flat = sample.flat();

        let d_features = dense_backward_input(dlogits, w2, FEATURE_WIDTH);
        let d_fc1 = relu_backward(&sample.fc1_pre, d_features);
        let d_flat = dense_backward_input(&d_fc1, w1, flat.len());
        if let Some(g) = grads {
            dense_accumulate(&mut g.tensors, fc2, dlogits, &sample.features);
            dense_accumulate(&mut g.tensors, fc1, &d_fc1, flat);
        }
        d_flat
    }

    /// Starting from the pre-ReLU gradient of block `from`, back-propagates
    /// down to the image.
    pub(crate) fn backward_blocks(
        &self,
        sample: &SampleCache,
        from: usize,
        mut d_pre: Vec<f64>,
        mut grads: Option<&mut NetworkParams>,
    ) -> Vec<f64> {
        let cfg = &self.config;
        for b in (0..=from).rev() {
            let (h, w) = cfg.block_output_dims(b);
            let c_in = cfg.block_input_channels(b);
            let filters = cfg.conv_filters[b];
            let input = if b == 0 {
                sample.input.as_slice()
            } else {
                sample.blocks[b - 1].pooled.as_slice()
            };
            let weight = self.params.conv_weight(b);
            if let Some(g) = grads.as_deref_mut() {
                let (wg, rest) = g.tensors[2 * b..].split_at_mut(1);
                conv_accumulate(
                    input,
                    h,
                    w,
                    c_in,
                    filters,
                    &d_pre,
                    wg[0].1.data_mut(),
                    rest[0].1.data_mut(),
                );
            }
            let d_input = conv_backward_input(h, w, c_in, weight, filters, &d_pre);
            if b == 0 {
                return d_input;
            }
            let prev = &sample.blocks[b - 1];
            let d_act = max_pool_backward(&d_input, &prev.argmax, prev.act.len());
            d_pre = relu_backward(&prev.pre, d_act);
        }
        unreachable!("loop returns at block 0")
    }

    /// Gradient of `dlogits . logits` with respect to the post-ReLU output of
    /// convolution block `block`.
    pub(crate) fn grad_wrt_conv_activation(
        &self,
        sample: &SampleCache,
        dlogits: &[f64],
        block: usize,
    ) -> Vec<f64> {
        let cfg = &self.config;
        let k = cfg.conv_filters.len();
        let mut d_pooled = self.backward_dense(sample, dlogits, None);
        for b in (block..k).rev() {
            let bc = &sample.blocks[b];
            let d_act = max_pool_backward(&d_pooled, &bc.argmax, bc.act.len());
            if b == block {
                return d_act;
            }
            let d_pre = relu_backward(&bc.pre, d_act);
            let (h, w) = cfg.block_output_dims(b);
            d_pooled = conv_backward_input(
                h,
                w,
                cfg.block_input_channels(b),
                self.params.conv_weight(b),
                cfg.conv_filters[b],
                &d_pre,
            );
        }
        unreachable!("block index checked by caller")
    }

    /// Post-ReLU activations of the FC-512 layer for one `[H, W, 3]` image.
    pub fn extract_features(&self, image: &Tensor) -> Result<Vec<f64>, NnetError> {
        self.check_image(image)?;
        let features = self.forward_sample(image.data()).features;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFinite("features".into()));
        }
        Ok(features)
    }

    pub(crate) fn checked_image<'a>(&self, image: &'a Tensor) -> Result<&'a [f64], NnetError> {
        self.check_image(image)?;
        Ok(image.data())
    }
}

fn check_labels(labels: &[usize]) -> Result<(), NnetError> {
    match labels.iter().find(|&&l| l >= NUM_CLASSES) {
        Some(&l) => Err(NnetError::InvalidLabel(l)),
        None => Ok(()),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let cols = *logits.shape().last().unwrap_or(&0);
    let mut out = Vec::with_capacity(logits.len());
    if cols > 0 {
        for row in logits.data().chunks_exact(cols) {
            out.extend(softmax_row(row));
        }
    }
    Tensor::from_vec(logits.shape().to_vec(), out)
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean negative log-likelihood, probabilities floored at [`LOG_FLOOR`].
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64, NnetError> {
    check_labels(labels)?;
    let cols = *probs.shape().last().unwrap_or(&0);
    let rows = if cols == 0 { 0 } else { probs.len() / cols };
    if rows != labels.len() {
        return Err(NnetError::ShapeMismatch(format!(
            "{rows} probability rows for {} labels",
            labels.len()
        )));
    }
    if rows == 0 {
        return Ok(0.0);
    }
    let total: f64 = probs
        .data()
        .chunks_exact(cols)
        .zip(labels)
        .map(|(row, &l)| -row[l].max(LOG_FLOOR).ln())
        .sum();
    Ok(total / rows as f64)
}

/// 3x3 convolution, stride 1, zero padding 1, over an interleaved `[h, w, c_in]`
/// map; returns `[h, w, filters]`.
pub(crate) fn conv_forward(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    weight: &[f64],
    bias: &[f64],
    filters: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; h * w * filters];
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * filters..(y * w + x + 1) * filters];
            o.copy_from_slice(bias);
            for ky in 0..KERNEL {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let patch = &input[(iy * w + ix) * c_in..(iy * w + ix + 1) * c_in];
                    for (f, acc) in o.iter_mut().enumerate() {
                        let wk = &weight[((f * KERNEL + ky) * KERNEL + kx) * c_in..][..c_in];
                        *acc += dot(wk, patch);
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_accumulate(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    filters: usize,
    d_pre: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) {
    for y in 0..h {
        for x in 0..w {
            let d = &d_pre[(y * w + x) * filters..(y * w + x + 1) * filters];
            for (db, &g) in d_bias.iter_mut().zip(d) {
                *db += g;
            }
            for ky in 0..KERNEL {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let patch = &input[(iy * w + ix) * c_in..(iy * w + ix + 1) * c_in];
                    for (f, &g) in d.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let dw = &mut d_weight[((f * KERNEL + ky) * KERNEL + kx) * c_in..][..c_in];
                        for (a, &p) in dw.iter_mut().zip(patch) {
                            *a += g * p;
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward_input(
    h: usize,
    w: usize,
    c_in: usize,
    weight: &[f64],
    filters: usize,
    d_pre: &[f64],
) -> Vec<f64> {
    let mut d_input = vec![0.0; h * w * c_in];
    for y in 0..h {
        for x in 0..w {
            let d = &d_pre[(y * w + x) * filters..(y * w + x + 1) * filters];
            for ky in 0..KERNEL {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let di = &mut d_input[(iy * w + ix) * c_in..(iy * w + ix + 1) * c_in];
                    for (f, &g) in d.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let wk = &weight[((f * KERNEL + ky) * KERNEL + kx) * c_in..][..c_in];
                        for (a, &wv) in di.iter_mut().zip(wk) {
                            *a += g * wv;
                        }
                    }
                }
            }
        }
    }
    d_input
}

/// 2x2 max-pool with stride 2 (trailing odd row/column dropped). Ties go to
/// the first maximum in row-major window order.
pub(crate) fn max_pool_forward(act: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / POOL, w / POOL);
    let mut pooled = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((POOL * y) * w + POOL * x) * c + ch;
                let mut best = act[best_idx];
                for dy in 0..POOL {
                    for dx in 0..POOL {
                        let idx = ((POOL * y + dy) * w + POOL * x + dx) * c + ch;
                        if act[idx] > best {
                            best = act[idx];
                            best_idx = idx;
                        }
                    }
                }
                pooled.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (pooled, argmax)
}

fn max_pool_backward(d_pooled: &[f64], argmax: &[usize], act_len: usize) -> Vec<f64> {
    let mut d_act = vec![0.0; act_len];
    for (&g, &idx) in d_pooled.iter().zip(argmax) {
        d_act[idx] += g;
    }
    d_act
}

fn relu_backward(pre: &[f64], mut d: Vec<f64>) -> Vec<f64> {
    for (g, &p) in d.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

/// `weight` is `[out, in]`.
fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64], out: usize) -> Vec<f64> {
    let n_in = input.len();
    (0..out)
        .map(|o| bias[o] + dot(&weight[o * n_in..(o + 1) * n_in], input))
        .collect()
}

fn dense_backward_input(d_out: &[f64], weight: &[f64], n_in: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; n_in];
    for (o, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (a, &wv) in d_in.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
            *a += g * wv;
        }
    }
    d_in
}

fn dense_accumulate(tensors: &mut [(String, Tensor)], idx: usize, d_out: &[f64], input: &[f64]) {
    let n_in = input.len();
    let (wg, rest) = tensors[idx..].split_at_mut(1);
    let dw = wg[0].1.data_mut();
    let db = rest[0].1.data_mut();
    for (o, &g) in d_out.iter().enumerate() {
        db[o] += g;
        if g == 0.0 {
            continue;
        }
        for (a, &x) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
            *a += g * x;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
