use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvLayer};
use crate::aggregate::GroundFeatures;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::warp::ViewFeatureMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Hidden widths of the shared extractor; its last layer emits `feature_channels`.
    pub extractor_channels: Vec<usize>,
    pub feature_channels: usize,
    pub feature_height: usize,
    pub feature_width: usize,
    /// Widths of the first two head layers; the third emits one logit per cell.
    pub head_channels: [usize; 2],
    pub head_dilations: [usize; 3],
    /// Grid the model was trained on. The head is fully convolutional, so
    /// inference accepts other grid sizes.
    pub grid_rows: usize,
    pub grid_cols: usize,
    #[serde(default)]
    pub coverage_normalized: bool,
}

impl ModelConfig {
    pub fn new(image_height: usize, image_width: usize, grid_rows: usize, grid_cols: usize) -> Self {
        Self {
            image_channels: 3,
            image_height,
            image_width,
            extractor_channels: vec![16, 32],
            feature_channels: 32,
            feature_height: image_height,
            feature_width: image_width,
            head_channels: [32, 32],
            head_dilations: [1, 2, 4],
            grid_rows,
            grid_cols,
            coverage_normalized: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.image_channels,
            self.image_height,
            self.image_width,
            self.feature_channels,
            self.feature_height,
            self.feature_width,
            self.grid_rows,
            self.grid_cols,
            self.head_channels[0],
            self.head_channels[1],
        ];
        if dims.contains(&0) || self.extractor_channels.contains(&0) {
            return Err(Error::Config("model dimensions must be non-zero".into()));
        }
        if self.head_dilations.iter().any(|d| ![1, 2, 4].contains(d)) {
            return Err(Error::Config(format!(
                "head dilations must be drawn from {{1, 2, 4}}, got {:?}",
                self.head_dilations
            )));
        }
        Ok(())
    }

    fn extractor_widths(&self) -> Vec<usize> {
        let mut w = vec![self.image_channels];
        w.extend(&self.extractor_channels);
        w.push(self.feature_channels);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub extractor: Vec<ConvLayer<T>>,
    pub head: Vec<ConvLayer<T>>,
}

/// Activations kept from an extractor forward pass.
pub struct ExtractorTrace<T> {
    /// `acts[0]` is the image, `acts[k + 1] = relu(conv_k(acts[k]))`.
    acts: Vec<Tensor<T>>,
}

/// Activations kept from a head forward pass.
pub struct HeadTrace<T> {
    acts: Vec<Tensor<T>>,
    prob: Tensor<T>,
}

impl<T> HeadTrace<T> {
    pub fn probabilities(&self) -> &Tensor<T> {
        &self.prob
    }
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let widths = config.extractor_widths();
        let extractor = widths
            .windows(2)
            .map(|w| ConvLayer::kaiming(w[0], w[1], 1, rng))
            .collect();
        let hw = [config.feature_channels, config.head_channels[0], config.head_channels[1], 1];
        let head = (0..3)
            .map(|k| ConvLayer::kaiming(hw[k], hw[k + 1], config.head_dilations[k], rng))
            .collect();
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    /// Same architecture with every weight and bias set to zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let widths = config.extractor_widths();
        let extractor = widths.windows(2).map(|w| ConvLayer::zeros(w[0], w[1], 1)).collect();
        let hw = [config.feature_channels, config.head_channels[0], config.head_channels[1], 1];
        let head = (0..3)
            .map(|k| ConvLayer::zeros(hw[k], hw[k + 1], config.head_dilations[k]))
            .collect();
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    /// Parameter names in the canonical order used by gradients and checkpoints.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, layers) in [("extractor", &self.extractor), ("head", &self.head)] {
            for k in 0..layers.len() {
                names.push(format!("{prefix}.{k}.weight"));
                names.push(format!("{prefix}.{k}.bias"));
            }
        }
        names
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.extractor
            .iter()
            .chain(&self.head)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.extractor
            .iter_mut()
            .chain(self.head.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Zero-valued gradient buffers matching [`Self::parameters`].
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    fn n_extractor_params(&self) -> usize {
        2 * self.extractor.len()
    }

    pub fn extract(&self, image: &Tensor<T>, view_id: usize) -> Result<(ViewFeatureMap<T>, ExtractorTrace<T>)> {
        let cfg = &self.config;
        let (c, h, w) = image.chw()?;
        if (c, h, w) != (cfg.image_channels, cfg.image_height, cfg.image_width) {
            return Err(Error::Shape(format!(
                "model expects {}x{}x{} images, got {c}x{h}x{w}",
                cfg.image_channels, cfg.image_height, cfg.image_width
            )));
        }
        let mut acts = Vec::with_capacity(self.extractor.len() + 1);
        acts.push(image.clone());
        for layer in &self.extractor {
            let y = ops::relu(&ops::conv2d(acts.last().expect("non-empty"), layer)?);
            acts.push(y);
        }
        let feats = ops::bilinear_resize(acts.last().expect("non-empty"), cfg.feature_height, cfg.feature_width)?;
        Ok((ViewFeatureMap { data: feats, view_id }, ExtractorTrace { acts }))
    }

    /// Accumulates extractor parameter gradients into `grads` (the full
    /// parameter-aligned buffer).
    pub fn extractor_backward(&self, trace: &ExtractorTrace<T>, grad_features: &Tensor<T>, grads: &mut [Tensor<T>]) -> Result<()> {
        let last = trace.acts.last().expect("non-empty");
        let mut g = ops::bilinear_resize_backward(last.shape(), grad_features)?;
        for k in (0..self.extractor.len()).rev() {
            let g_pre = ops::relu_backward(&trace.acts[k + 1], &g);
            let cg = ops::conv2d_backward(&trace.acts[k], &self.extractor[k], &g_pre)?;
            grads[2 * k].add_assign(&cg.weight)?;
            grads[2 * k + 1].add_assign(&cg.bias)?;
            g = cg.input;
        }
        Ok(())
    }

    pub fn head_forward(&self, features: &GroundFeatures<T>) -> Result<HeadTrace<T>> {
        let (c, _, _) = features.data.chw()?;
        if c != self.config.feature_channels {
            return Err(Error::Shape(format!(
                "head expects {} feature channels, got {c}",
                self.config.feature_channels
            )));
        }
        let mut acts = Vec::with_capacity(3);
        acts.push(features.data.clone());
        for layer in &self.head[..2] {
            let y = ops::relu(&ops::conv2d(acts.last().expect("non-empty"), layer)?);
            acts.push(y);
        }
        let logits = ops::conv2d(acts.last().expect("non-empty"), &self.head[2])?;
        let prob = ops::logistic(&logits);
        Ok(HeadTrace { acts, prob })
    }

    /// Accumulates head gradients into `grads` and returns the gradient with
    /// respect to the pooled ground features.
    pub fn head_backward(&self, trace: &HeadTrace<T>, grad_prob: &Tensor<T>, grads: &mut [Tensor<T>]) -> Result<Tensor<T>> {
        trace.prob.check_same_shape(grad_prob)?;
        let base = self.n_extractor_params();
        let mut g = ops::logistic_backward(&trace.prob, grad_prob);
        for k in (0..3).rev() {
            if k < 2 {
                g = ops::relu_backward(&trace.acts[k + 1], &g);
            }
            let cg = ops::conv2d_backward(&trace.acts[k], &self.head[k], &g)?;
            grads[base + 2 * k].add_assign(&cg.weight)?;
            grads[base + 2 * k + 1].add_assign(&cg.bias)?;
            g = cg.input;
        }
        Ok(g)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let cast_layer = |l: &ConvLayer<T>| ConvLayer {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
            dilation: l.dilation,
        };
        Model {
            config: self.config.clone(),
            extractor: self.extractor.iter().map(cast_layer).collect(),
            head: self.head.iter().map(cast_layer).collect(),
        }
    }
}
