//! The five-layer stack: convolution → 2×2 max-pool → fully connected
//! feature layer → (clonal selection insertion point) → softmax output.
//!
//! Every input image feeds every convolution map (full connection table).
//! Activations are the scaled hyperbolic tangent `1.7159 · tanh(2x/3)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clonal::FeatureClone;
use crate::error::{Error, Result};
use crate::mnist::Dataset;
use crate::tensor::{self, PoolIndex, Tensor};

pub const TANH_AMPLITUDE: f64 = 1.7159;
pub const TANH_SLOPE: f64 = 2.0 / 3.0;

pub fn scaled_tanh(x: f64) -> f64 {
    TANH_AMPLITUDE * (TANH_SLOPE * x).tanh()
}

pub fn scaled_tanh_derivative(x: f64) -> f64 {
    let t = (TANH_SLOPE * x).tanh();
    TANH_AMPLITUDE * TANH_SLOPE * (1.0 - t * t)
}

/// Layer sizes. The default is the 28×28 MNIST stack: 8 maps of 5×5
/// kernels (28→24), pooling (24→12), a 64-wide feature layer, 10 classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub image_rows: usize,
    pub image_cols: usize,
    pub kernel_size: usize,
    pub feature_maps: usize,
    pub feature_dim: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            image_rows: 28,
            image_cols: 28,
            kernel_size: 5,
            feature_maps: 8,
            feature_dim: 64,
            classes: 10,
        }
    }
}

impl Architecture {
    pub fn with_classes(classes: usize) -> Self {
        Architecture {
            classes,
            ..Architecture::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.image_rows,
            self.image_cols,
            self.kernel_size,
            self.feature_maps,
            self.feature_dim,
            self.classes,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(format!("architecture has a zero extent: {self:?}")));
        }
        if self.kernel_size > self.image_rows || self.kernel_size > self.image_cols {
            return Err(Error::Config(format!(
                "kernel {k}x{k} larger than image {}x{}",
                self.image_rows,
                self.image_cols,
                k = self.kernel_size
            )));
        }
        let [r, c] = self.conv_shape();
        if r % 2 != 0 || c % 2 != 0 {
            return Err(Error::Config(format!("convolution output {r}x{c} is not poolable by 2x2")));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two output classes".into()));
        }
        Ok(())
    }

    pub fn conv_shape(&self) -> [usize; 2] {
        [
            self.image_rows + 1 - self.kernel_size,
            self.image_cols + 1 - self.kernel_size,
        ]
    }

    pub fn pooled_shape(&self) -> [usize; 2] {
        let [r, c] = self.conv_shape();
        [r / 2, c / 2]
    }

    /// Width of the flattened pooled maps that feed the feature layer.
    pub fn pooled_len(&self) -> usize {
        let [r, c] = self.pooled_shape();
        self.feature_maps * r * c
    }
}

/// All trainable parameters of the stack.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    arch: Architecture,
    pub conv_kernels: Tensor,
    pub conv_bias: Tensor,
    pub fc1_weights: Tensor,
    pub fc1_bias: Tensor,
    pub out_weights: Tensor,
    pub out_bias: Tensor,
}

/// Glorot-uniform weights in `±√(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(seed: u64, arch: Architecture) -> Result<LayerStack> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = arch.kernel_size;
    let (f, d, c, p) = (arch.feature_maps, arch.feature_dim, arch.classes, arch.pooled_len());

    let mut glorot = |shape: &[usize], fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
    };
    let conv_kernels = glorot(&[f, k, k], k * k, f * k * k);
    let fc1_weights = glorot(&[d, p], p, d);
    let out_weights = glorot(&[c, d], d, c);

    Ok(LayerStack {
        arch,
        conv_kernels,
        conv_bias: Tensor::zeros(&[f]),
        fc1_weights,
        fc1_bias: Tensor::zeros(&[d]),
        out_weights,
        out_bias: Tensor::zeros(&[c]),
    })
}

impl LayerStack {
    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [
            &self.conv_kernels,
            &self.conv_bias,
            &self.fc1_weights,
            &self.fc1_bias,
            &self.out_weights,
            &self.out_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_kernels,
            &mut self.conv_bias,
            &mut self.fc1_weights,
            &mut self.fc1_bias,
            &mut self.out_weights,
            &mut self.out_bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn kernel(&self, map: usize) -> Tensor {
        let k = self.arch.kernel_size;
        let data = self.conv_kernels.data()[map * k * k..(map + 1) * k * k].to_vec();
        Tensor::new(vec![k, k], data).expect("kernel slice has k*k entries")
    }
}

/// Gradients laid out exactly like [`LayerStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv_kernels: Tensor,
    pub conv_bias: Tensor,
    pub fc1_weights: Tensor,
    pub fc1_bias: Tensor,
    pub out_weights: Tensor,
    pub out_bias: Tensor,
}

impl Gradients {
    pub fn zeros(arch: &Architecture) -> Self {
        let k = arch.kernel_size;
        Gradients {
            conv_kernels: Tensor::zeros(&[arch.feature_maps, k, k]),
            conv_bias: Tensor::zeros(&[arch.feature_maps]),
            fc1_weights: Tensor::zeros(&[arch.feature_dim, arch.pooled_len()]),
            fc1_bias: Tensor::zeros(&[arch.feature_dim]),
            out_weights: Tensor::zeros(&[arch.classes, arch.feature_dim]),
            out_bias: Tensor::zeros(&[arch.classes]),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [
            &self.conv_kernels,
            &self.conv_bias,
            &self.fc1_weights,
            &self.fc1_bias,
            &self.out_weights,
            &self.out_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_kernels,
            &mut self.conv_bias,
            &mut self.fc1_weights,
            &mut self.fc1_bias,
            &mut self.out_weights,
            &mut self.out_bias,
        ]
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}

/// Cached per-sample state from [`forward_features`], enough to backpropagate
/// any error signal arriving at the feature layer.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub image: Tensor,
    pub conv_pre: Vec<Tensor>,
    pub conv_act: Vec<Tensor>,
    pub pool_index: Vec<PoolIndex>,
    /// Flattened pooled maps, map-major.
    pub pooled: Tensor,
    pub fc1_pre: Tensor,
    pub feature: Tensor,
}

pub fn forward_features(params: &LayerStack, image: &Tensor) -> Result<(Tensor, ForwardTrace)> {
    let arch = params.arch;
    if image.shape() != [arch.image_rows, arch.image_cols] {
        return Err(Error::dim(
            "forward_features",
            image.shape(),
            &[arch.image_rows, arch.image_cols],
        ));
    }
    let mut conv_pre = Vec::with_capacity(arch.feature_maps);
    let mut conv_act = Vec::with_capacity(arch.feature_maps);
    let mut pool_index = Vec::with_capacity(arch.feature_maps);
    let mut pooled = Vec::with_capacity(arch.pooled_len());
    for map in 0..arch.feature_maps {
        let bias = params.conv_bias.data()[map];
        let pre = tensor::conv2d_valid(image, &params.kernel(map))?.map(|v| v + bias);
        let act = pre.map(scaled_tanh);
        let (pool, idx) = tensor::maxpool2(&act)?;
        pooled.extend_from_slice(pool.data());
        conv_pre.push(pre);
        conv_act.push(act);
        pool_index.push(idx);
    }
    let pooled = Tensor::vector(pooled);
    let fc1_pre = tensor::dense(&params.fc1_weights, &params.fc1_bias, &pooled)?;
    let feature = fc1_pre.map(scaled_tanh);
    let trace = ForwardTrace {
        image: image.clone(),
        conv_pre,
        conv_act,
        pool_index,
        pooled,
        fc1_pre,
        feature: feature.clone(),
    };
    Ok((feature, trace))
}

/// Numerically stable softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|v| (v - max).exp());
    let total = exps.sum();
    exps.map(|v| v / total)
}

pub fn forward_output(params: &LayerStack, feature: &Tensor) -> Result<Tensor> {
    if feature.len() != params.arch.feature_dim {
        return Err(Error::dim(
            "forward_output",
            feature.shape(),
            &[params.arch.feature_dim],
        ));
    }
    let logits = tensor::dense(&params.out_weights, &params.out_bias, feature)?;
    Ok(softmax(&logits))
}

pub fn cross_entropy(probabilities: &Tensor, label: usize) -> f64 {
    -probabilities.data()[label].max(f64::MIN_POSITIVE).ln()
}

/// Output-layer gradients plus the error signal arriving at the feature layer.
fn output_backward(
    params: &LayerStack,
    feature: &Tensor,
    probabilities: &Tensor,
    label: usize,
    grads: &mut Gradients,
) -> Result<Tensor> {
    let c = params.arch.classes;
    if label >= c {
        return Err(Error::Config(format!("label {label} outside {c} classes")));
    }
    if probabilities.len() != c {
        return Err(Error::Corruption {
            op: "backward",
            detail: format!("{} probabilities for {c} classes", probabilities.len()),
        });
    }
    let mut delta = probabilities.clone();
    delta.data_mut()[label] -= 1.0;
    let (gw, gb, gx) = tensor::dense_backward(&params.out_weights, feature, &delta)?;
    grads.out_weights.add_assign(&gw)?;
    grads.out_bias.add_assign(&gb)?;
    Ok(gx)
}

fn check_trace(params: &LayerStack, trace: &ForwardTrace) -> Result<()> {
    let arch = &params.arch;
    let consistent = trace.conv_pre.len() == arch.feature_maps
        && trace.pool_index.len() == arch.feature_maps
        && trace.pooled.len() == arch.pooled_len()
        && trace.fc1_pre.len() == arch.feature_dim
        && trace.feature.len() == arch.feature_dim
        && trace.image.shape() == [arch.image_rows, arch.image_cols];
    if consistent {
        Ok(())
    } else {
        Err(Error::Corruption {
            op: "backward",
            detail: "forward trace does not match the layer stack".into(),
        })
    }
}

/// Propagates `grad_feature` (∂L/∂feature) down through a cached trace into
/// the feature layer and the convolution kernels.
fn feature_backward(
    params: &LayerStack,
    trace: &ForwardTrace,
    grad_feature: &Tensor,
    grads: &mut Gradients,
) -> Result<()> {
    let arch = params.arch;
    let mut g_pre = grad_feature.clone();
    for (g, &z) in g_pre.data_mut().iter_mut().zip(trace.fc1_pre.data()) {
        *g *= scaled_tanh_derivative(z);
    }
    let (gw, gb, g_pooled) = tensor::dense_backward(&params.fc1_weights, &trace.pooled, &g_pre)?;
    grads.fc1_weights.add_assign(&gw)?;
    grads.fc1_bias.add_assign(&gb)?;

    let [pr, pc] = arch.pooled_shape();
    let k = arch.kernel_size;
    for map in 0..arch.feature_maps {
        let slice = g_pooled.data()[map * pr * pc..(map + 1) * pr * pc].to_vec();
        let g_pool = Tensor::new(vec![pr, pc], slice)?;
        let mut g_conv = tensor::maxpool2_backward(&trace.pool_index[map], &g_pool)?;
        for (g, &z) in g_conv.data_mut().iter_mut().zip(trace.conv_pre[map].data()) {
            *g *= scaled_tanh_derivative(z);
        }
        let gk = tensor::conv2d_kernel_grad(&trace.image, &[k, k], &g_conv);
        let dst = &mut grads.conv_kernels.data_mut()[map * k * k..(map + 1) * k * k];
        for (d, s) in dst.iter_mut().zip(gk.data()) {
            *d += s;
        }
        grads.conv_bias.data_mut()[map] += g_conv.sum();
    }
    Ok(())
}

/// Cross-entropy gradients for one sample.
pub fn backward(
    params: &LayerStack,
    trace: &ForwardTrace,
    probabilities: &Tensor,
    label: usize,
) -> Result<Gradients> {
    check_trace(params, trace)?;
    let mut grads = Gradients::zeros(&params.arch);
    let g_feature = output_backward(params, &trace.feature, probabilities, label, &mut grads)?;
    feature_backward(params, trace, &g_feature, &mut grads)?;
    Ok(grads)
}

/// Gradients for a clone whose feature vector was derived from the sample
/// that produced `trace`. The clone is treated as `parent feature + constant
/// offset`, so its feature-layer error flows through the parent's trace.
pub fn backward_from_feature(
    params: &LayerStack,
    trace: &ForwardTrace,
    clone_feature: &Tensor,
    label: usize,
) -> Result<Gradients> {
    check_trace(params, trace)?;
    let probabilities = forward_output(params, clone_feature)?;
    let mut grads = Gradients::zeros(&params.arch);
    let g_feature = output_backward(params, clone_feature, &probabilities, label, &mut grads)?;
    feature_backward(params, trace, &g_feature, &mut grads)?;
    Ok(grads)
}

/// `θ ← θ − λ·g` for every parameter.
pub fn sgd_step(params: &mut LayerStack, grads: &Gradients, learning_rate: f64) -> Result<()> {
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        if p.shape() != g.shape() {
            return Err(Error::dim("sgd_step", p.shape(), g.shape()));
        }
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 10,
            epochs: 15,
            rng_seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Feature-space expansion applied to every training batch between the
/// feature layer and the output layer.
pub trait ClonalHook {
    /// Called once before the first batch of every epoch.
    fn begin_epoch(&mut self) {}

    /// Expands a batch of feature vectors. Each returned clone names the
    /// index of its parent within `features`.
    fn expand(&mut self, features: &[Tensor], labels: &[usize]) -> Result<Vec<FeatureClone>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Misclassification rate over the original samples, measured before each
    /// batch's update.
    pub train_error: f64,
    pub mean_loss: f64,
    pub originals: usize,
    pub clones: usize,
}

/// One pass over `batches` (lists of indices into `data`). Each batch runs
/// forward on its originals, optionally expands their features through the
/// clonal hook, averages the gradients of originals and clones, then takes a
/// single SGD step.
pub fn train_epoch(
    params: &mut LayerStack,
    data: &Dataset,
    batches: &[Vec<usize>],
    config: &TrainConfig,
    mut hook: Option<&mut dyn ClonalHook>,
) -> Result<EpochStats> {
    config.validate()?;
    if batches.is_empty() {
        return Err(Error::Config("no batches to train on".into()));
    }
    if let Some(h) = hook.as_deref_mut() {
        h.begin_epoch();
    }
    let (mut wrong, mut loss, mut originals, mut clones) = (0usize, 0.0, 0usize, 0usize);

    for batch in batches {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let mut traces = Vec::with_capacity(batch.len());
        let mut features = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for &idx in batch {
            let (image, label) = data.get(idx)?;
            let (feature, trace) = forward_features(params, image)?;
            features.push(feature);
            traces.push(trace);
            labels.push(label);
        }

        let expansion = match hook.as_deref_mut() {
            Some(h) => h.expand(&features, &labels)?,
            None => Vec::new(),
        };

        // The trace backprop is linear in the feature-layer error, so each
        // parent's error and its clones' errors are summed before one pass.
        let mut grads = Gradients::zeros(&params.arch);
        let mut feature_errors = Vec::with_capacity(batch.len());
        for (feature, &label) in features.iter().zip(&labels) {
            let probs = forward_output(params, feature)?;
            if probs.argmax() != label {
                wrong += 1;
            }
            loss += cross_entropy(&probs, label);
            feature_errors.push(output_backward(params, feature, &probs, label, &mut grads)?);
        }
        for clone in &expansion {
            let parent = feature_errors.get_mut(clone.parent).ok_or_else(|| Error::Corruption {
                op: "train_epoch",
                detail: format!("clone parent {} outside batch of {}", clone.parent, batch.len()),
            })?;
            let probs = forward_output(params, &clone.feature)?;
            let g = output_backward(params, &clone.feature, &probs, clone.label, &mut grads)?;
            parent.add_assign(&g)?;
        }
        for (trace, g) in traces.iter().zip(&feature_errors) {
            feature_backward(params, trace, g, &mut grads)?;
        }

        grads.scale(1.0 / (batch.len() + expansion.len()) as f64);
        sgd_step(params, &grads, config.learning_rate)?;
        originals += batch.len();
        clones += expansion.len();
    }

    Ok(EpochStats {
        train_error: wrong as f64 / originals as f64,
        mean_loss: loss / originals as f64,
        originals,
        clones,
    })
}

pub fn predict(params: &LayerStack, image: &Tensor) -> Result<usize> {
    let (feature, _) = forward_features(params, image)?;
    Ok(forward_output(params, &feature)?.argmax())
}

/// Fraction of `data` misclassified by the output layer.
pub fn error_rate(params: &LayerStack, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut wrong = 0;
    for (image, &label) in data.images().iter().zip(data.labels()) {
        if predict(params, image)? != label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Trains for `config.epochs` epochs, reshuffling per epoch from
/// `config.rng_seed`, and reports every epoch to `on_epoch`.
pub fn train(
    params: &mut LayerStack,
    data: &Dataset,
    config: &TrainConfig,
    mut hook: Option<&mut dyn ClonalHook>,
    mut on_epoch: impl FnMut(usize, &LayerStack, &EpochStats) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    for epoch in 1..=config.epochs {
        let seed = crate::derive_seed(config.rng_seed, &[epoch as u64]);
        let batches = crate::mnist::batches(data, config.batch_size, seed);
        let reborrowed: Option<&mut dyn ClonalHook> = match hook {
            Some(ref mut h) => Some(&mut **h),
            None => None,
        };
        let stats = train_epoch(params, data, &batches, config, reborrowed)?;
        on_epoch(epoch, params, &stats)?;
    }
    Ok(())
}
