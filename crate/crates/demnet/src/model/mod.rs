//! Network assembly: declarative configs, the runtime layer stack,
//! parameter accounting, training, evaluation, and checkpoints.
//!
//! A [`ModelConfig`] describes five convolutional blocks plus a dense head
//! and is the unit of persistence (JSON in config files and checkpoint
//! headers). [`Network`] is the runtime object built from it, a flat layer
//! list with explicit forward/backward passes. The lower-level
//! [`Network::from_layers`] escape hatch builds networks that skip config
//! invariants, which the gradient tests use for tiny topologies.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{evaluate, export_metrics, metrics_csv, predict_probs, train, EpochMetrics, EvalReport};

use crate::error::{Error, Result};
use crate::nn::{
    batchnorm, batchnorm_backward, conv2d, conv2d_backward, conv_geometry, dense, dense_backward,
    flatten, flatten_backward, maxpool2d, maxpool2d_backward, relu, relu_backward,
    separable_conv2d, separable_conv2d_backward, BatchNormCache, BnMode, Conv2dCache, DenseCache,
    FlattenCache, MaxPoolCache, Padding, ReluCache, SeparableCache, BN_EPSILON, BN_MOMENTUM,
};
use crate::optim::AdamState;
use crate::tensor::rng::{Rng, Stream};
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

fn default_stride() -> usize {
    1
}

fn default_padding() -> Padding {
    Padding::Same
}

fn default_window() -> usize {
    2
}

/// One layer inside a convolutional block, as written in config files.
/// Strides default to 1, padding to `same`, pool windows to 2 (with stride
/// equal to the window unless overridden).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        channels: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default = "default_padding")]
        padding: Padding,
    },
    SeparableConv2d {
        channels: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default = "default_padding")]
        padding: Padding,
    },
    Batchnorm,
    Maxpool {
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default)]
        stride: Option<usize>,
    },
    Relu,
}

fn default_input_height() -> usize {
    crate::dataset::INPUT_HEIGHT
}

fn default_input_width() -> usize {
    crate::dataset::INPUT_WIDTH
}

fn default_seed() -> u64 {
    42
}

fn default_learning_rate() -> f64 {
    crate::optim::ADAM_LR
}

fn default_batch_size() -> usize {
    32
}

fn default_epochs() -> usize {
    20
}

/// Declarative model description plus training hyperparameters. This is
/// the config-file schema; unknown keys are rejected.
///
/// Invariants checked by [`ModelConfig::validate`]: exactly 5 blocks, each
/// with exactly one maxpool; exactly 4 dense widths ending in 4; all
/// widths/kernels positive; the layer chain must keep spatial extents
/// positive end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_input_height")]
    pub input_height: usize,
    #[serde(default = "default_input_width")]
    pub input_width: usize,
    /// Five blocks, each a layer sequence containing exactly one maxpool.
    pub blocks: Vec<Vec<LayerSpec>>,
    /// Widths of the four dense layers after flatten; the last must be 4.
    /// ReLU follows every dense layer except the final one.
    pub dense: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl Default for ModelConfig {
    /// Reference architecture: block 1 has two plain convolutions, blocks
    /// 2..=5 two separable convolutions plus batchnorm, every block ends
    /// in a 2x2 maxpool, head 512-128-64-4.
    fn default() -> Self {
        let conv = |channels: usize| LayerSpec::Conv2d {
            channels,
            kernel: 3,
            stride: 1,
            padding: Padding::Same,
        };
        let sep = |channels: usize| LayerSpec::SeparableConv2d {
            channels,
            kernel: 3,
            stride: 1,
            padding: Padding::Same,
        };
        let pool = LayerSpec::Maxpool { window: 2, stride: None };
        let mut blocks = vec![vec![
            conv(16),
            LayerSpec::Relu,
            conv(16),
            LayerSpec::Relu,
            pool.clone(),
        ]];
        for channels in [32, 64, 128, 256] {
            blocks.push(vec![
                sep(channels),
                LayerSpec::Relu,
                sep(channels),
                LayerSpec::Relu,
                LayerSpec::Batchnorm,
                pool.clone(),
            ]);
        }
        ModelConfig {
            input_height: default_input_height(),
            input_width: default_input_width(),
            blocks,
            dense: vec![512, 128, 64, 4],
            seed: default_seed(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
        }
    }
}

impl ModelConfig {
    /// Checks every structural invariant, returning a configuration error
    /// naming the violated rule.
    pub fn validate(&self) -> Result<()> {
        self.feature_shape().map(|_| ())
    }

    /// Infers the (channels, height, width) feature shape after the last
    /// block, validating the whole config along the way.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        if self.blocks.len() != 5 {
            return Err(Error::Config(format!(
                "model must have exactly 5 blocks, got {}",
                self.blocks.len()
            )));
        }
        if self.dense.len() != 4 {
            return Err(Error::Config(format!(
                "head must have exactly 4 dense layers, got {}",
                self.dense.len()
            )));
        }
        if *self.dense.last().unwrap() != crate::dataset::NUM_CLASSES {
            return Err(Error::Config(format!(
                "final dense width must be {}, got {}",
                crate::dataset::NUM_CLASSES,
                self.dense.last().unwrap()
            )));
        }
        if let Some(w) = self.dense.iter().find(|&&w| w == 0) {
            return Err(Error::Config(format!("dense widths must be >= 1, got {w}")));
        }
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Config(format!(
                "input extents {}x{} must be positive",
                self.input_height, self.input_width
            )));
        }
        let (mut c, mut h, mut w) = (1usize, self.input_height, self.input_width);
        for (bi, block) in self.blocks.iter().enumerate() {
            let pools = block.iter().filter(|s| matches!(s, LayerSpec::Maxpool { .. })).count();
            if pools != 1 {
                return Err(Error::Config(format!(
                    "block {bi} must contain exactly one maxpool, found {pools}"
                )));
            }
            for (li, spec) in block.iter().enumerate() {
                let context = |e: Error| {
                    Error::Config(format!("block {bi} layer {li}: {e}"))
                };
                match *spec {
                    LayerSpec::Conv2d { channels, kernel, stride, padding }
                    | LayerSpec::SeparableConv2d { channels, kernel, stride, padding } => {
                        if channels == 0 {
                            return Err(Error::Config(format!(
                                "block {bi} layer {li}: channels must be >= 1"
                            )));
                        }
                        let geom = conv_geometry(h, w, kernel, kernel, stride, padding)
                            .map_err(context)?;
                        (c, h, w) = (channels, geom.out_h, geom.out_w);
                    }
                    LayerSpec::Maxpool { window, stride } => {
                        let stride = stride.unwrap_or(window);
                        if window == 0 || stride == 0 {
                            return Err(Error::Config(format!(
                                "block {bi} layer {li}: pool window and stride must be >= 1"
                            )));
                        }
                        if window > h || window > w {
                            return Err(Error::Config(format!(
                                "block {bi} layer {li}: pool window {window} exceeds feature map {h}x{w}"
                            )));
                        }
                        (h, w) = ((h - window) / stride + 1, (w - window) / stride + 1);
                    }
                    LayerSpec::Batchnorm | LayerSpec::Relu => {}
                }
            }
        }
        Ok((c, h, w))
    }

    /// Per-pool spatial extents (after each block), for architecture
    /// summaries.
    pub fn block_extents(&self) -> Result<Vec<(usize, usize, usize)>> {
        self.validate()?;
        let (mut c, mut h, mut w) = (1usize, self.input_height, self.input_width);
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            for spec in block {
                match *spec {
                    LayerSpec::Conv2d { channels, kernel, stride, padding }
                    | LayerSpec::SeparableConv2d { channels, kernel, stride, padding } => {
                        let geom = conv_geometry(h, w, kernel, kernel, stride, padding)?;
                        (c, h, w) = (channels, geom.out_h, geom.out_w);
                    }
                    LayerSpec::Maxpool { window, stride } => {
                        let stride = stride.unwrap_or(window);
                        (h, w) = ((h - window) / stride + 1, (w - window) / stride + 1);
                    }
                    LayerSpec::Batchnorm | LayerSpec::Relu => {}
                }
            }
            out.push((c, h, w));
        }
        Ok(out)
    }
}

/// (trainable, non_trainable) element counts for one block layer given its
/// input channel count.
fn spec_counts(spec: &LayerSpec, cin: usize) -> (usize, usize) {
    match *spec {
        LayerSpec::Conv2d { channels, kernel, .. } => ((kernel * kernel * cin + 1) * channels, 0),
        LayerSpec::SeparableConv2d { channels, kernel, .. } => {
            (kernel * kernel * cin + (cin + 1) * channels, 0)
        }
        LayerSpec::Batchnorm => (2 * cin, 2 * cin),
        LayerSpec::Maxpool { .. } | LayerSpec::Relu => (0, 0),
    }
}

/// Per-layer and total parameter counts for a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCounts {
    /// (layer description, trainable, non-trainable) per parameterized layer.
    pub per_layer: Vec<(String, usize, usize)>,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.trainable + self.non_trainable
    }
}

/// Counts parameters from the config alone: conv (kh·kw·Cin+1)·Cout,
/// separable kh·kw·Cin + (Cin+1)·Cout, batchnorm 2C trainable + 2C
/// non-trainable running stats, dense (in+1)·out.
pub fn count_parameters(config: &ModelConfig) -> Result<ParamCounts> {
    let (fc, fh, fw) = config.feature_shape()?;
    let mut per_layer = Vec::new();
    let mut cin = 1usize;
    for (bi, block) in config.blocks.iter().enumerate() {
        for spec in block {
            let (t, n) = spec_counts(spec, cin);
            if t + n > 0 {
                let kind = match spec {
                    LayerSpec::Conv2d { .. } => "conv2d",
                    LayerSpec::SeparableConv2d { .. } => "separable_conv2d",
                    LayerSpec::Batchnorm => "batchnorm",
                    _ => unreachable!(),
                };
                per_layer.push((format!("block{bi}.{kind}"), t, n));
            }
            if let LayerSpec::Conv2d { channels, .. }
            | LayerSpec::SeparableConv2d { channels, .. } = spec
            {
                cin = *channels;
            }
        }
    }
    let mut width = fc * fh * fw;
    for (di, &out) in config.dense.iter().enumerate() {
        per_layer.push((format!("dense{di}"), (width + 1) * out, 0));
        width = out;
    }
    let trainable = per_layer.iter().map(|l| l.1).sum();
    let non_trainable = per_layer.iter().map(|l| l.2).sum();
    Ok(ParamCounts { per_layer, trainable, non_trainable })
}

/// A runtime layer: parameters plus fixed hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Scalar = f32> {
    Conv2d {
        /// [Cout,Cin,kh,kw]
        weight: Tensor<T>,
        /// [Cout]
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    },
    SeparableConv2d {
        /// [Cin,kh,kw]
        depthwise: Tensor<T>,
        /// [Cout,Cin]
        pointwise: Tensor<T>,
        /// [Cout]
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    },
    BatchNorm {
        gamma: Tensor<T>,
        beta: Tensor<T>,
        running_mean: Tensor<T>,
        running_var: Tensor<T>,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Dense {
        /// [out,in]
        weight: Tensor<T>,
        /// [out]
        bias: Tensor<T>,
    },
}

impl<T: Scalar> Layer<T> {
    fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv",
            Layer::SeparableConv2d { .. } => "separable",
            Layer::BatchNorm { .. } => "batchnorm",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    /// Trainable fields in canonical order. Backward emits gradients in
    /// this same order.
    fn fields(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d { weight, bias, .. } => vec![("weight", weight), ("bias", bias)],
            Layer::SeparableConv2d { depthwise, pointwise, bias, .. } => {
                vec![("depthwise", depthwise), ("pointwise", pointwise), ("bias", bias)]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![("gamma", gamma), ("beta", beta)],
            Layer::Dense { weight, bias } => vec![("weight", weight), ("bias", bias)],
            Layer::MaxPool { .. } | Layer::Relu | Layer::Flatten => Vec::new(),
        }
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d { weight, bias, .. } => vec![("weight", weight), ("bias", bias)],
            Layer::SeparableConv2d { depthwise, pointwise, bias, .. } => {
                vec![("depthwise", depthwise), ("pointwise", pointwise), ("bias", bias)]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![("gamma", gamma), ("beta", beta)],
            Layer::Dense { weight, bias } => vec![("weight", weight), ("bias", bias)],
            Layer::MaxPool { .. } | Layer::Relu | Layer::Flatten => Vec::new(),
        }
    }

    /// Non-trainable persistent state (batchnorm running statistics).
    fn state_fields(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm { running_mean, running_var, .. } => {
                vec![("running_mean", running_mean), ("running_var", running_var)]
            }
            _ => Vec::new(),
        }
    }

    fn state_fields_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm { running_mean, running_var, .. } => {
                vec![("running_mean", running_mean), ("running_var", running_var)]
            }
            _ => Vec::new(),
        }
    }
}

/// Per-layer backward state produced by a forward pass.
#[derive(Debug)]
pub enum LayerCache<T: Scalar> {
    Conv2d(Conv2dCache<T>),
    SeparableConv2d(SeparableCache<T>),
    BatchNorm(BatchNormCache<T>),
    MaxPool(MaxPoolCache),
    Relu(ReluCache<T>),
    Flatten(FlattenCache),
    Dense(DenseCache<T>),
}

/// A flat stack of layers with explicit forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f32> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds directly from layers, skipping config invariants. Intended
    /// for small ad-hoc topologies (tests, experiments); configs should go
    /// through [`build_network`].
    pub fn from_layers(layers: Vec<Layer<T>>) -> Self {
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Parameter names in traversal order: `l{index:02}.{kind}.{field}`,
    /// e.g. `l00.conv.weight`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            for (field, _) in layer.fields() {
                names.push(format!("l{idx:02}.{}.{field}", layer.kind()));
            }
        }
        names
    }

    /// Trainable parameters in the same order as [`Network::param_names`].
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.fields().into_iter().map(|f| f.1)).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.fields_mut().into_iter().map(|f| f.1)).collect()
    }

    /// Non-trainable state tensor names: `l{index:02}.batchnorm.running_mean` etc.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            for (field, _) in layer.state_fields() {
                names.push(format!("l{idx:02}.{}.{field}", layer.kind()));
            }
        }
        names
    }

    pub fn state_tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.state_fields().into_iter().map(|f| f.1)).collect()
    }

    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_fields_mut().into_iter().map(|f| f.1)).collect()
    }

    pub fn num_trainable_elements(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn num_state_elements(&self) -> usize {
        self.state_tensors().iter().map(|p| p.len()).sum()
    }

    /// Forward pass keeping per-layer caches for backprop. Batchnorm uses
    /// batch statistics and updates running statistics.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
        self.forward_impl(input, BnMode::Train, true)
    }

    /// Forward pass for evaluation: batchnorm reads running statistics and
    /// nothing is mutated or cached.
    pub fn forward_infer(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_impl(input, BnMode::Infer, false).map(|(out, _)| out)
    }

    fn forward_impl(
        &mut self,
        input: &Tensor<T>,
        mode: BnMode,
        keep_caches: bool,
    ) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(if keep_caches { self.layers.len() } else { 0 });
        for layer in &mut self.layers {
            let (out, cache) = match layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    let (out, c) = conv2d(&x, weight, bias, *stride, *padding)?;
                    (out, LayerCache::Conv2d(c))
                }
                Layer::SeparableConv2d { depthwise, pointwise, bias, stride, padding } => {
                    let (out, c) =
                        separable_conv2d(&x, depthwise, pointwise, bias, *stride, *padding)?;
                    (out, LayerCache::SeparableConv2d(c))
                }
                Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                    let (out, c) = batchnorm(
                        &x,
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        mode,
                        BN_MOMENTUM,
                        BN_EPSILON,
                    )?;
                    (out, LayerCache::BatchNorm(c))
                }
                Layer::MaxPool { window, stride } => {
                    let (out, c) = maxpool2d(&x, *window, *stride)?;
                    (out, LayerCache::MaxPool(c))
                }
                Layer::Relu => {
                    let (out, c) = relu(&x);
                    (out, LayerCache::Relu(c))
                }
                Layer::Flatten => {
                    let (out, c) = flatten(&x)?;
                    (out, LayerCache::Flatten(c))
                }
                Layer::Dense { weight, bias } => {
                    let (out, c) = dense(&x, weight, bias)?;
                    (out, LayerCache::Dense(c))
                }
            };
            if keep_caches {
                caches.push(cache);
            }
            x = out;
        }
        Ok((x, caches))
    }

    /// Backward pass from the loss gradient w.r.t. the network output.
    /// Consumes the caches of the matching forward pass and returns
    /// parameter gradients aligned with [`Network::params`].
    pub fn backward(
        &self,
        grad_output: &Tensor<T>,
        caches: Vec<LayerCache<T>>,
    ) -> Result<Vec<Tensor<T>>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "backward: {} caches for {} layers; pass the caches from forward_train",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut grad = grad_output.clone();
        // Collected in reverse layer order, reversed once at the end.
        let mut rev_grads: Vec<Tensor<T>> = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            grad = match (layer, cache) {
                (Layer::Conv2d { weight, .. }, LayerCache::Conv2d(c)) => {
                    let g = conv2d_backward(&grad, weight, &c)?;
                    rev_grads.push(g.bias);
                    rev_grads.push(g.weight);
                    g.input
                }
                (
                    Layer::SeparableConv2d { depthwise, pointwise, .. },
                    LayerCache::SeparableConv2d(c),
                ) => {
                    let g = separable_conv2d_backward(&grad, depthwise, pointwise, &c)?;
                    rev_grads.push(g.bias);
                    rev_grads.push(g.pointwise);
                    rev_grads.push(g.depthwise);
                    g.input
                }
                (Layer::BatchNorm { gamma, .. }, LayerCache::BatchNorm(c)) => {
                    let (gx, ggamma, gbeta) = batchnorm_backward(&grad, gamma, &c)?;
                    rev_grads.push(gbeta);
                    rev_grads.push(ggamma);
                    gx
                }
                (Layer::MaxPool { .. }, LayerCache::MaxPool(c)) => {
                    maxpool2d_backward(&grad, &c)?
                }
                (Layer::Relu, LayerCache::Relu(c)) => relu_backward(&grad, &c)?,
                (Layer::Flatten, LayerCache::Flatten(c)) => flatten_backward(&grad, &c)?,
                (Layer::Dense { weight, .. }, LayerCache::Dense(c)) => {
                    let (gx, gw, gb) = dense_backward(&grad, weight, &c)?;
                    rev_grads.push(gb);
                    rev_grads.push(gw);
                    gx
                }
                (layer, cache) => {
                    return Err(Error::Contract(format!(
                        "backward: cache {} does not match layer {}",
                        cache_kind(&cache),
                        layer.kind()
                    )))
                }
            };
        }
        rev_grads.reverse();
        Ok(rev_grads)
    }
}

fn cache_kind<T: Scalar>(cache: &LayerCache<T>) -> &'static str {
    match cache {
        LayerCache::Conv2d(_) => "conv",
        LayerCache::SeparableConv2d(_) => "separable",
        LayerCache::BatchNorm(_) => "batchnorm",
        LayerCache::MaxPool(_) => "maxpool",
        LayerCache::Relu(_) => "relu",
        LayerCache::Flatten(_) => "flatten",
        LayerCache::Dense(_) => "dense",
    }
}

/// Builds the runtime network for a validated config. Weights draw from
/// normal(0, sqrt(2/fan_in)) per tensor, deterministically from the seed;
/// biases and batchnorm shifts start at zero, batchnorm scales and running
/// variances at one.
pub fn build_network<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Network<T>> {
    config.validate()?;
    let mut layers = Vec::new();
    let mut tensor_index = 0u64;
    let mut draw = |shape: &[usize], fan_in: usize| -> Result<Tensor<T>> {
        let mut rng = Rng::stream(seed, Stream::Weights, tensor_index);
        tensor_index += 1;
        Tensor::randn(shape, 0.0, (2.0 / fan_in as f64).sqrt(), &mut rng)
    };
    let mut cin = 1usize;
    for block in &config.blocks {
        for spec in block {
            match *spec {
                LayerSpec::Conv2d { channels, kernel, stride, padding } => {
                    layers.push(Layer::Conv2d {
                        weight: draw(&[channels, cin, kernel, kernel], cin * kernel * kernel)?,
                        bias: Tensor::zeros(&[channels])?,
                        stride,
                        padding,
                    });
                    cin = channels;
                }
                LayerSpec::SeparableConv2d { channels, kernel, stride, padding } => {
                    layers.push(Layer::SeparableConv2d {
                        depthwise: draw(&[cin, kernel, kernel], kernel * kernel)?,
                        pointwise: draw(&[channels, cin], cin)?,
                        bias: Tensor::zeros(&[channels])?,
                        stride,
                        padding,
                    });
                    cin = channels;
                }
                LayerSpec::Batchnorm => {
                    layers.push(Layer::BatchNorm {
                        gamma: Tensor::full(&[cin], T::one())?,
                        beta: Tensor::zeros(&[cin])?,
                        running_mean: Tensor::zeros(&[cin])?,
                        running_var: Tensor::full(&[cin], T::one())?,
                    });
                }
                LayerSpec::Maxpool { window, stride } => {
                    layers.push(Layer::MaxPool { window, stride: stride.unwrap_or(window) });
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
            }
        }
    }
    layers.push(Layer::Flatten);
    let (fc, fh, fw) = config.feature_shape()?;
    let mut width = fc * fh * fw;
    let last = config.dense.len() - 1;
    for (di, &out) in config.dense.iter().enumerate() {
        layers.push(Layer::Dense {
            weight: draw(&[out, width], width)?,
            bias: Tensor::zeros(&[out])?,
        });
        if di != last {
            layers.push(Layer::Relu);
        }
        width = out;
    }
    Ok(Network::from_layers(layers))
}

/// Everything the training loop owns: the network, optimizer, position in
/// the epoch schedule, and the best validation snapshot so far.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: ModelConfig,
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
    /// Completed training epochs; also indexes the per-epoch shuffle stream.
    pub epoch: usize,
    pub seed: u64,
    pub best: Option<BestSnapshot>,
}

/// Snapshot of the network (and optimizer, so training can resume from it)
/// at the epoch with the highest validation accuracy.
#[derive(Debug, Clone)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_accuracy: f64,
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
}

/// Validates the config, initializes the network deterministically from
/// `config.seed`, and pairs it with a fresh Adam state.
pub fn build_model(config: &ModelConfig) -> Result<TrainState> {
    let network = build_network::<f32>(config, config.seed)?;
    let shapes: Vec<Vec<usize>> =
        network.params().iter().map(|p| p.shape().to_vec()).collect();
    let adam = AdamState::new(config.learning_rate, &shapes)?;
    Ok(TrainState {
        config: config.clone(),
        network,
        adam,
        epoch: 0,
        seed: config.seed,
        best: None,
    })
}
