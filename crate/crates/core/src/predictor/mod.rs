//! Hierarchical linear predictor set.
//!
//! One softmax-linear head per attribute reads the feature vector; the
//! malignancy head reads the features concatenated with every attribute
//! head's output. The parameter state at construction is kept as an
//! immutable snapshot so training can be restarted from it exactly.

mod checkpoint;
mod optim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, AttributeSchema, MALIGNANCY_CLASSES};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub use checkpoint::{CheckpointManifest, load_checkpoint, save_checkpoint};
pub use optim::{OptimizerState, cosine_lr, restore_st0, sgd_step};

/// Probability floor applied before taking logs in the cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

/// One fully connected layer, `classes × inputs` weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    classes: usize,
    inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(classes: usize, inputs: usize) -> Self {
        Self {
            classes,
            inputs,
            weights: vec![0.0; classes * inputs],
            bias: vec![0.0; classes],
        }
    }

    /// Weights uniform in `[-1/sqrt(inputs), 1/sqrt(inputs)]`, zero bias.
    pub fn uniform(classes: usize, inputs: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..classes * inputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            classes,
            inputs,
            weights,
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.classes, self.inputs)
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.inputs..(class + 1) * self.inputs]
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(&mut self.bias)
    }
}

/// All trainable parameters of the predictor set. Also used for gradients
/// and momentum buffers, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub attr_heads: Vec<LinearHead>,
    pub cls_head: LinearHead,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        let mut z = other.clone();
        z.fill(0.0);
        z
    }

    pub fn heads(&self) -> impl Iterator<Item = &LinearHead> {
        self.attr_heads.iter().chain(std::iter::once(&self.cls_head))
    }

    /// Flat view in a fixed order: attribute heads, then the malignancy head;
    /// within a head the weights, then the bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.heads().flat_map(LinearHead::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.attr_heads
            .iter_mut()
            .chain(std::iter::once(&mut self.cls_head))
            .flat_map(LinearHead::values_mut)
    }

    pub fn len(&self) -> usize {
        self.heads().map(|h| h.weights.len() + h.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, v: f64) {
        self.values_mut().for_each(|p| *p = v);
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| *v == 0.0)
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.len() == other.len()
            && self
                .values()
                .zip(other.values())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// What the malignancy head sees of each attribute head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrInput {
    #[default]
    Probabilities,
    Logits,
    OneHot,
}

/// Whether the malignancy loss back-propagates into the attribute heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientFlow {
    #[default]
    StopGradient,
    Joint,
}

macro_rules! kv_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(format!(
                        "expected one of: {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}
pub(crate) use kv_enum;

kv_enum!(AttrInput { Probabilities => "probabilities", Logits => "logits", OneHot => "one_hot" });
kv_enum!(GradientFlow { StopGradient => "stop_gradient", Joint => "joint" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub attr_input: AttrInput,
    pub gradient_flow: GradientFlow,
}

/// Softmax outputs of every head for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    pub attr_probs: Vec<Vec<f64>>,
    pub cls_probs: Vec<f64>,
    pub cls_confidence: f64,
}

impl PredictionBundle {
    /// Argmax of every head, ties to the lowest class.
    pub fn to_record(&self) -> AnnotationRecord {
        AnnotationRecord {
            malignancy: argmax(&self.cls_probs),
            attributes: self.attr_probs.iter().map(|p| argmax(p)).collect(),
        }
    }

    /// Sum of Shannon entropies (natural log) over all heads.
    pub fn integrated_entropy(&self) -> f64 {
        entropy(&self.cls_probs) + self.attr_probs.iter().map(|p| entropy(p)).sum::<f64>()
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_EPS).ln()
}

/// Intermediate values of one forward pass, kept for back-propagation.
struct Trace {
    attr_logits: Vec<Vec<f64>>,
    attr_probs: Vec<Vec<f64>>,
    cls_input: Vec<f64>,
    cls_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPredictor {
    dim: usize,
    class_counts: Vec<usize>,
    options: PredictorOptions,
    rng_seed: u64,
    params: ParamSet,
    st0: ParamSet,
}

/// Creates the predictor and a zeroed optimizer with the default
/// hyper-parameters (momentum 0.9, learning rate 0.00025, batch 128).
pub fn init_predictor(
    dim: usize,
    schema: &AttributeSchema,
    rng_seed: u64,
) -> (HierarchicalPredictor, OptimizerState) {
    let pred = HierarchicalPredictor::new(
        dim,
        &schema.class_counts(),
        PredictorOptions::default(),
        rng_seed,
    );
    let opt = OptimizerState::new(&pred, optim::DEFAULT_MOMENTUM, optim::DEFAULT_BASE_LR, optim::DEFAULT_BATCH_SIZE);
    (pred, opt)
}

impl HierarchicalPredictor {
    /// `class_counts` may be empty, leaving only the malignancy head.
    ///
    /// # Panics
    /// If `dim == 0` or any class count is below 2.
    pub fn new(dim: usize, class_counts: &[usize], options: PredictorOptions, rng_seed: u64) -> Self {
        assert!(dim >= 1, "feature dimensionality must be at least 1");
        assert!(class_counts.iter().all(|&c| c >= 2), "heads need at least 2 classes");
        let mut rng = stream_rng(rng_seed, &[stream::INIT]);
        let attr_heads: Vec<LinearHead> = class_counts
            .iter()
            .map(|&c| LinearHead::uniform(c, dim, &mut rng))
            .collect();
        let cls_inputs = dim + class_counts.iter().sum::<usize>();
        let cls_head = LinearHead::uniform(MALIGNANCY_CLASSES, cls_inputs, &mut rng);
        let params = ParamSet { attr_heads, cls_head };
        Self {
            dim,
            class_counts: class_counts.to_vec(),
            options,
            rng_seed,
            st0: params.clone(),
            params,
        }
    }

    /// Rebuilds a predictor from stored parameters (checkpoint loading).
    pub(crate) fn from_parts(
        dim: usize,
        class_counts: Vec<usize>,
        options: PredictorOptions,
        rng_seed: u64,
        params: ParamSet,
        st0: ParamSet,
    ) -> Self {
        Self { dim, class_counts, options, rng_seed, params, st0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn options(&self) -> PredictorOptions {
        self.options
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Parameters at initialisation; never modified after construction.
    pub fn st0_snapshot(&self) -> &ParamSet {
        &self.st0
    }

    pub fn is_at_st0(&self) -> bool {
        self.params.bit_eq(&self.st0)
    }

    pub(crate) fn reset_to_st0(&mut self) {
        self.params.clone_from(&self.st0);
    }

    /// Representation of attribute head `i` fed into the malignancy head.
    fn attr_repr(&self, logits: &[f64], probs: &[f64]) -> Vec<f64> {
        match self.options.attr_input {
            AttrInput::Probabilities => probs.to_vec(),
            AttrInput::Logits => logits.to_vec(),
            AttrInput::OneHot => {
                let mut v = vec![0.0; probs.len()];
                v[argmax(probs)] = 1.0;
                v
            }
        }
    }

    fn trace(&self, f: &[f64]) -> Trace {
        let attr_logits: Vec<Vec<f64>> =
            self.params.attr_heads.iter().map(|h| h.logits(f)).collect();
        let attr_probs: Vec<Vec<f64>> = attr_logits.iter().map(|l| softmax(l)).collect();
        let mut cls_input = Vec::with_capacity(self.params.cls_head.inputs());
        cls_input.extend_from_slice(f);
        for (l, p) in attr_logits.iter().zip(&attr_probs) {
            cls_input.extend(self.attr_repr(l, p));
        }
        let cls_probs = softmax(&self.params.cls_head.logits(&cls_input));
        Trace { attr_logits, attr_probs, cls_input, cls_probs }
    }

    pub fn forward(&self, f: &[f64]) -> Result<PredictionBundle> {
        if f.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "feature vector has length {}, expected {}",
                f.len(),
                self.dim
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(self.predict(f))
    }

    /// Forward pass without input validation; callers guarantee a finite
    /// vector of the right length (rows of a validated [`crate::FeatureMatrix`]).
    pub fn predict(&self, f: &[f64]) -> PredictionBundle {
        let t = self.trace(f);
        let cls_confidence = t.cls_probs.iter().copied().fold(0.0, f64::max);
        PredictionBundle {
            attr_probs: t.attr_probs,
            cls_probs: t.cls_probs,
            cls_confidence,
        }
    }

    /// Malignancy CE plus the CE of every attribute head.
    pub fn joint_loss(&self, f: &[f64], record: &AnnotationRecord) -> f64 {
        let p = self.predict(f);
        cross_entropy(&p.cls_probs, record.malignancy)
            + p.attr_probs
                .iter()
                .zip(&record.attributes)
                .map(|(probs, &y)| cross_entropy(probs, y))
                .sum::<f64>()
    }

    pub fn mean_loss<'a>(
        &self,
        batch: impl IntoIterator<Item = (&'a [f64], &'a AnnotationRecord)>,
    ) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for (f, rec) in batch {
            sum += self.joint_loss(f, rec);
            n += 1;
        }
        sum / n as f64
    }

    /// Mean gradient of the joint loss over `batch`.
    ///
    /// Under [`GradientFlow::StopGradient`] the malignancy head treats its
    /// attribute inputs as constants.
    ///
    /// # Panics
    /// If `batch` is empty.
    pub fn compute_gradients<'a>(
        &self,
        batch: impl IntoIterator<Item = (&'a [f64], &'a AnnotationRecord)>,
    ) -> ParamSet {
        let mut grads = ParamSet::zeros_like(&self.params);
        let mut n = 0usize;
        for (f, rec) in batch {
            self.accumulate(f, rec, &mut grads);
            n += 1;
        }
        assert!(n > 0, "gradient of an empty batch");
        let scale = 1.0 / n as f64;
        grads.values_mut().for_each(|g| *g *= scale);
        grads
    }

    fn accumulate(&self, f: &[f64], rec: &AnnotationRecord, grads: &mut ParamSet) {
        let t = self.trace(f);

        let mut d_cls = t.cls_probs.clone();
        d_cls[rec.malignancy] -= 1.0;
        add_outer(&mut grads.cls_head, &d_cls, &t.cls_input);

        let mut offset = self.dim;
        for (i, head_grad) in grads.attr_heads.iter_mut().enumerate() {
            let probs = &t.attr_probs[i];
            let classes = probs.len();
            let mut d_logits = probs.clone();
            d_logits[rec.attributes[i]] -= 1.0;

            if self.options.gradient_flow == GradientFlow::Joint {
                // d(cls loss)/d(repr_i) = W_cls[:, segment]^T d_cls
                let upstream: Vec<f64> = (0..classes)
                    .map(|j| {
                        d_cls
                            .iter()
                            .enumerate()
                            .map(|(c, d)| d * self.params.cls_head.row(c)[offset + j])
                            .sum()
                    })
                    .collect();
                match self.options.attr_input {
                    AttrInput::Probabilities => {
                        let dot: f64 = probs.iter().zip(&upstream).map(|(p, u)| p * u).sum();
                        for j in 0..classes {
                            d_logits[j] += probs[j] * (upstream[j] - dot);
                        }
                    }
                    AttrInput::Logits => {
                        for j in 0..classes {
                            d_logits[j] += upstream[j];
                        }
                    }
                    // argmax is piecewise constant
                    AttrInput::OneHot => {}
                }
            }
            debug_assert_eq!(t.attr_logits[i].len(), classes);
            add_outer(head_grad, &d_logits, f);
            offset += classes;
        }
    }
}

fn add_outer(head: &mut LinearHead, d_logits: &[f64], input: &[f64]) {
    let inputs = head.inputs;
    for (c, d) in d_logits.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        for (w, x) in head.weights[c * inputs..(c + 1) * inputs].iter_mut().zip(input) {
            *w += d * x;
        }
        head.bias[c] += d;
    }
}
