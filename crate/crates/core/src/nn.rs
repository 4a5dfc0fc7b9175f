//! Minimal multilayer-perceptron engine: rectifier hidden layers, a
//! task-specific output head (sigmoid for binary log-loss, identity for
//! regression, softmax for multiclass log-loss), adaptive-moment gradient
//! descent with early stopping, and a finite-difference gradient check.
//!
//! Feature standardization is part of the model: the per-dimension mean and
//! deviation are fit on the training split and stored, so inference always
//! standardizes exactly as training did.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Serialized model format version; loading any other version is refused.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Regression,
    Multiclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// max(0, z); hidden layers.
    Rectifier,
    /// Output for binary classification.
    Sigmoid,
    /// Output for regression.
    Identity,
    /// Output for multiclass classification.
    Softmax,
}

/// One dense layer: `out = activation(W x + b)` with W stored row-major,
/// one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let z: f64 = w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + self.bias[row];
            out.push(z);
        }
        apply_activation(self.activation, out);
    }
}

fn apply_activation(activation: Activation, z: &mut [f64]) {
    match activation {
        Activation::Rectifier => {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for v in z.iter_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
        Activation::Identity => {}
        Activation::Softmax => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in z.iter_mut() {
                *v /= sum;
            }
        }
    }
}

/// Per-dimension z-score parameters, fit on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[&[f64]], dim: usize) -> Standardizer {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(*row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                // Constant dimensions pass through unscaled.
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Weights, architecture and preprocessing of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub version: u32,
    pub task: Task,
    pub layers: Vec<Layer>,
    pub standardizer: Standardizer,
    /// Regression targets are z-scored for training; predictions are mapped
    /// back through these. Identity (0, 1) for classification tasks.
    pub target_mean: f64,
    pub target_std: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} dimensions, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set must have at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("inputs and targets disagree: {inputs} rows vs {targets} targets")]
    RowCountMismatch { inputs: usize, targets: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("classification needs at least 2 distinct classes")]
    SingleClass,
    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("inconsistent input width: row {row} has {got}, expected {expected}")]
    RaggedInput { row: usize, expected: usize, got: usize },
    #[error("unsupported model version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is not valid: {0}")]
    Format(String),
}

/// Training targets; the variant fixes the task and output head.
#[derive(Debug, Clone)]
pub enum Targets<'a> {
    Binary(&'a [bool]),
    Regression(&'a [f64]),
    Multiclass { labels: &'a [usize], classes: usize },
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Binary(t) => t.len(),
            Targets::Regression(t) => t.len(),
            Targets::Multiclass { labels, .. } => labels.len(),
        }
    }

    fn task(&self) -> Task {
        match self {
            Targets::Binary(_) => Task::Binary,
            Targets::Regression(_) => Task::Regression,
            Targets::Multiclass { .. } => Task::Multiclass,
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Targets::Binary(_) | Targets::Regression(_) => 1,
            Targets::Multiclass { classes, .. } => *classes,
        }
    }

    /// Target encoded for the loss: class index, raw value or 0/1.
    fn value(&self, i: usize) -> f64 {
        match self {
            Targets::Binary(t) => {
                if t[i] {
                    1.0
                } else {
                    0.0
                }
            }
            Targets::Regression(t) => t[i],
            Targets::Multiclass { labels, .. } => labels[i] as f64,
        }
    }
}

/// Training hyperparameters. The defaults mirror the usual MLP toolkit
/// defaults: one hidden layer of 100 rectifier units, adaptive-moment
/// updates at 1e-3 with decay rates 0.9/0.999, batches of 32 and early
/// stopping on a 10% validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Optional per-class loss weights for classification tasks
    /// (binary: [negative, positive]).
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![100],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), NnError> {
        let positive = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.hidden.iter().all(|&h| h > 0);
        if !positive {
            return Err(NnError::Format("non-positive hyperparameter".into()));
        }
        Ok(())
    }
}

const ADAM_EPSILON: f64 = 1e-8;

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Builds an untrained model with seeded uniform weight initialization.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        task: Task,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> MlpModel {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[i], dims[i + 1]);
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let activation = if i + 2 == dims.len() {
                match task {
                    Task::Binary => Activation::Sigmoid,
                    Task::Regression => Activation::Identity,
                    Task::Multiclass => Activation::Softmax,
                }
            } else {
                Activation::Rectifier
            };
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                bias: vec![0.0; out_dim],
                activation,
            });
        }
        MlpModel {
            version: MODEL_VERSION,
            task,
            layers,
            standardizer: Standardizer {
                mean: vec![0.0; input_dim],
                std: vec![1.0; input_dim],
            },
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    /// Maps a target into the network's output scale.
    fn standardize_target(&self, y: f64) -> f64 {
        match self.task {
            Task::Regression => (y - self.target_mean) / self.target_std,
            _ => y,
        }
    }

    /// Forward pass on a raw (unstandardized) input row. The output is the
    /// network head's value; for regression that is the standardized target
    /// scale, which [`predict`] maps back to real units.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut current = self.standardizer.apply(input);
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward(&current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Serializes to the versioned self-describing JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// Loads a model, refusing mismatched versions.
    pub fn from_json(text: &str) -> Result<MlpModel, NnError> {
        let model: MlpModel =
            serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(NnError::VersionMismatch {
                found: model.version,
                expected: MODEL_VERSION,
            });
        }
        Ok(model)
    }
}

/// What a trained model produces for one input row.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Probability of the positive class.
    Binary(f64),
    /// Predicted scalar.
    Regression(f64),
    /// Probability per class, summing to 1.
    Multiclass(Vec<f64>),
}

impl Prediction {
    pub fn scalar(&self) -> f64 {
        match self {
            Prediction::Binary(p) | Prediction::Regression(p) => *p,
            Prediction::Multiclass(p) => p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Runs the model on one input row.
pub fn predict(model: &MlpModel, input: &[f64]) -> Result<Prediction, NnError> {
    let out = model.forward(input)?;
    Ok(match model.task {
        Task::Binary => Prediction::Binary(out[0]),
        Task::Regression => {
            Prediction::Regression(out[0] * model.target_std + model.target_mean)
        }
        Task::Multiclass => Prediction::Multiclass(out),
    })
}

/// Trains a model. Deterministic for a fixed `cfg.seed`: initialization,
/// the validation split and batch shuffling all draw from one seeded stream.
pub fn train(
    inputs: &[Vec<f64>],
    targets: &Targets,
    cfg: &TrainConfig,
) -> Result<MlpModel, NnError> {
    cfg.validate()?;
    let n = inputs.len();
    if n < 2 {
        return Err(NnError::TooFewRows(n));
    }
    if targets.len() != n {
        return Err(NnError::RowCountMismatch {
            inputs: n,
            targets: targets.len(),
        });
    }
    let dim = inputs[0].len();
    for (row, input) in inputs.iter().enumerate() {
        if input.len() != dim {
            return Err(NnError::RaggedInput {
                row,
                expected: dim,
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("inputs"));
        }
    }
    validate_targets(targets)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    // Validation split: seeded shuffle, last ~10% held out (none for tiny sets).
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_count = if n >= 10 {
        ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (train_idx, val_idx) = order.split_at(n - val_count);
    let train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let train_rows: Vec<&[f64]> = train_idx.iter().map(|&i| inputs[i].as_slice()).collect();
    let standardizer = Standardizer::fit(&train_rows, dim);
    let standardized: Vec<Vec<f64>> = inputs.iter().map(|r| standardizer.apply(r)).collect();

    let mut model = MlpModel::init(dim, &cfg.hidden, targets.task(), targets.output_dim(), &mut rng);
    model.standardizer = standardizer;
    if let Targets::Regression(ys) = targets {
        // Bring the training targets to unit scale so the output layer does
        // not have to crawl to a distant offset; fit on the training split.
        let n_train = train_idx.len().max(1) as f64;
        let mean = train_idx.iter().map(|&i| ys[i]).sum::<f64>() / n_train;
        let var = train_idx.iter().map(|&i| (ys[i] - mean).powi(2)).sum::<f64>() / n_train;
        model.target_mean = mean;
        model.target_std = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
    }

    let mut optimizer = Adam::new(&model, cfg);
    let mut grads = Gradients::new(&model);
    let mut scratch = Scratch::new(&model);

    let mut best: Option<(f64, Vec<Layer>)> = None;
    let mut epochs_without_improvement = 0;
    let mut shuffled = train_idx.clone();

    for _epoch in 0..cfg.max_epochs {
        shuffled.shuffle(&mut rng);
        for batch in shuffled.chunks(cfg.batch_size) {
            grads.zero();
            for &i in batch {
                accumulate_gradients(
                    &model,
                    &standardized[i],
                    model.standardize_target(targets.value(i)),
                    cfg.class_weights.as_deref(),
                    &mut grads,
                    &mut scratch,
                );
            }
            optimizer.step(&mut model, &grads, batch.len());
        }

        // Early-stopping checkpoint on the held-out split (training split
        // when no validation rows exist).
        let monitor: &[usize] = if val_idx.is_empty() { &train_idx } else { &val_idx };
        let loss = mean_loss(&model, &standardized, targets, cfg.class_weights.as_deref(), monitor);
        let improved = best.as_ref().map(|(b, _)| loss < *b).unwrap_or(true);
        if improved {
            best = Some((loss, model.layers.clone()));
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= cfg.patience {
                break;
            }
        }
    }

    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    Ok(model)
}

fn validate_targets(targets: &Targets) -> Result<(), NnError> {
    match targets {
        Targets::Binary(t) => {
            let positives = t.iter().filter(|&&b| b).count();
            if positives == 0 || positives == t.len() {
                return Err(NnError::SingleClass);
            }
        }
        Targets::Regression(t) => {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite("targets"));
            }
        }
        Targets::Multiclass { labels, classes } => {
            if *classes < 2 {
                return Err(NnError::SingleClass);
            }
            for &label in *labels {
                if label >= *classes {
                    return Err(NnError::LabelOutOfRange {
                        label,
                        classes: *classes,
                    });
                }
            }
            let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>();
            if distinct.len() < 2 {
                return Err(NnError::SingleClass);
            }
        }
    }
    Ok(())
}

/// Per-sample loss at the output head. `target` is the class index for
/// multiclass, 0/1 for binary, the raw value for regression.
fn sample_loss(task: Task, output: &[f64], target: f64, class_weights: Option<&[f64]>) -> f64 {
    const CLIP: f64 = 1e-12;
    match task {
        Task::Binary => {
            let p = output[0].clamp(CLIP, 1.0 - CLIP);
            let (w_neg, w_pos) = binary_weights(class_weights);
            if target > 0.5 {
                -w_pos * p.ln()
            } else {
                -w_neg * (1.0 - p).ln()
            }
        }
        Task::Regression => (output[0] - target).powi(2),
        Task::Multiclass => {
            let class = target as usize;
            let w = class_weights.and_then(|w| w.get(class)).copied().unwrap_or(1.0);
            -w * output[class].max(CLIP).ln()
        }
    }
}

fn binary_weights(class_weights: Option<&[f64]>) -> (f64, f64) {
    match class_weights {
        Some(w) if w.len() >= 2 => (w[0], w[1]),
        _ => (1.0, 1.0),
    }
}

fn mean_loss(
    model: &MlpModel,
    standardized: &[Vec<f64>],
    targets: &Targets,
    class_weights: Option<&[f64]>,
    indices: &[usize],
) -> f64 {
    let mut total = 0.0;
    let mut scratch = Scratch::new(model);
    for &i in indices {
        let out = forward_standardized(model, &standardized[i], &mut scratch);
        total += sample_loss(
            model.task,
            out,
            model.standardize_target(targets.value(i)),
            class_weights,
        );
    }
    total / indices.len().max(1) as f64
}

/// Per-layer activation buffers reused across samples.
struct Scratch {
    activations: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(model: &MlpModel) -> Scratch {
        Scratch {
            activations: model.layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
        }
    }
}

fn forward_standardized<'a>(
    model: &MlpModel,
    input: &[f64],
    scratch: &'a mut Scratch,
) -> &'a [f64] {
    for (k, layer) in model.layers.iter().enumerate() {
        let (done, rest) = scratch.activations.split_at_mut(k);
        let src: &[f64] = if k == 0 { input } else { &done[k - 1] };
        let out = &mut rest[0];
        out.clear();
        for row in 0..layer.out_dim {
            let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
            let z: f64 = w.iter().zip(src).map(|(a, b)| a * b).sum::<f64>() + layer.bias[row];
            out.push(z);
        }
        apply_activation(layer.activation, out);
    }
    scratch.activations.last().unwrap()
}

/// Accumulated parameter gradients, one buffer per layer.
struct Gradients {
    d_weights: Vec<Vec<f64>>,
    d_bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn new(model: &MlpModel) -> Gradients {
        Gradients {
            d_weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            d_bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn zero(&mut self) {
        for g in self.d_weights.iter_mut().chain(self.d_bias.iter_mut()) {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Backpropagates one sample's loss gradient into `grads`.
///
/// For every head the output-layer delta collapses to `output - onehot`
/// (scaled by the class weight), which pairs the sigmoid/softmax with
/// log-loss and the identity head with the squared error's factor 2.
fn accumulate_gradients(
    model: &MlpModel,
    input: &[f64],
    target: f64,
    class_weights: Option<&[f64]>,
    grads: &mut Gradients,
    scratch: &mut Scratch,
) {
    forward_standardized(model, input, scratch);
    let n_layers = model.layers.len();
    let output = &scratch.activations[n_layers - 1];

    let mut delta: Vec<f64> = match model.task {
        Task::Binary => {
            let (w_neg, w_pos) = binary_weights(class_weights);
            let w = if target > 0.5 { w_pos } else { w_neg };
            vec![w * (output[0] - target)]
        }
        Task::Regression => vec![2.0 * (output[0] - target)],
        Task::Multiclass => {
            let class = target as usize;
            let w = class_weights.and_then(|cw| cw.get(class)).copied().unwrap_or(1.0);
            output
                .iter()
                .enumerate()
                .map(|(j, &p)| w * (p - if j == class { 1.0 } else { 0.0 }))
                .collect()
        }
    };

    for k in (0..n_layers).rev() {
        let layer = &model.layers[k];
        let src: &[f64] = if k == 0 {
            input
        } else {
            &scratch.activations[k - 1]
        };
        for row in 0..layer.out_dim {
            let d = delta[row];
            let w_grad = &mut grads.d_weights[k][row * layer.in_dim..(row + 1) * layer.in_dim];
            for (g, s) in w_grad.iter_mut().zip(src) {
                *g += d * s;
            }
            grads.d_bias[k][row] += d;
        }
        if k == 0 {
            break;
        }
        // Delta for the previous layer, through its rectifier.
        let prev_out = &scratch.activations[k - 1];
        let mut prev_delta = vec![0.0; layer.in_dim];
        for row in 0..layer.out_dim {
            let d = delta[row];
            let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
            for (pd, wv) in prev_delta.iter_mut().zip(w) {
                *pd += d * wv;
            }
        }
        for (pd, &a) in prev_delta.iter_mut().zip(prev_out) {
            if a <= 0.0 {
                *pd = 0.0;
            }
        }
        delta = prev_delta;
    }
}

/// Adaptive-moment optimizer state.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    t: u64,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_bias: Vec<Vec<f64>>,
    v_bias: Vec<Vec<f64>>,
}

impl Adam {
    fn new(model: &MlpModel, cfg: &TrainConfig) -> Adam {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            t: 0,
            m_weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            v_bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, batch_size: usize) {
        self.t += 1;
        let scale = 1.0 / batch_size.max(1) as f64;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, layer) in model.layers.iter_mut().enumerate() {
            update(
                &mut layer.weights,
                &grads.d_weights[k],
                &mut self.m_weights[k],
                &mut self.v_weights[k],
                scale,
                self.lr,
                self.beta1,
                self.beta2,
                bias1,
                bias2,
            );
            update(
                &mut layer.bias,
                &grads.d_bias[k],
                &mut self.m_bias[k],
                &mut self.v_bias[k],
                scale,
                self.lr,
                self.beta1,
                self.beta2,
                bias1,
                bias2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    scale: f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i] * scale;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

/// Compares the analytic gradient of the task loss against central finite
/// differences (step 1e-5) and returns the maximum relative error over all
/// parameters.
pub fn gradient_check(model: &MlpModel, inputs: &[Vec<f64>], targets: &Targets) -> f64 {
    const STEP: f64 = 1e-5;
    assert_eq!(inputs.len(), targets.len());
    let standardized: Vec<Vec<f64>> = inputs
        .iter()
        .map(|r| model.standardizer.apply(r))
        .collect();
    let indices: Vec<usize> = (0..inputs.len()).collect();

    let mut grads = Gradients::new(model);
    let mut scratch = Scratch::new(model);
    grads.zero();
    for i in &indices {
        accumulate_gradients(
            model,
            &standardized[*i],
            model.standardize_target(targets.value(*i)),
            None,
            &mut grads,
            &mut scratch,
        );
    }
    let scale = 1.0 / inputs.len() as f64;

    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for k in 0..model.layers.len() {
        for (is_bias, len) in [(false, model.layers[k].weights.len()), (true, model.layers[k].bias.len())] {
            for idx in 0..len {
                let analytic = if is_bias {
                    grads.d_bias[k][idx] * scale
                } else {
                    grads.d_weights[k][idx] * scale
                };
                let original = param(&probe, k, is_bias, idx);
                set_param(&mut probe, k, is_bias, idx, original + STEP);
                let plus = mean_loss(&probe, &standardized, targets, None, &indices);
                set_param(&mut probe, k, is_bias, idx, original - STEP);
                let minus = mean_loss(&probe, &standardized, targets, None, &indices);
                set_param(&mut probe, k, is_bias, idx, original);
                let numeric = (plus - minus) / (2.0 * STEP);
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
    }
    max_rel
}

/// Gradient-checks the three architectures the pipeline trains, on seeded
/// random weights and batches. Returns (name, max relative error) per case.
pub fn gradient_check_pipeline_architectures(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    let random_inputs = |rng: &mut ChaCha20Rng, batch: usize, dim: usize| -> Vec<Vec<f64>> {
        (0..batch)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };

    let detector = MlpModel::init(27, &[100], Task::Binary, 1, &mut rng);
    let inputs = random_inputs(&mut rng, 8, 27);
    let labels: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
    results.push((
        "detector 27-100-1",
        gradient_check(&detector, &inputs, &Targets::Binary(&labels)),
    ));

    let regressor = MlpModel::init(12, &[100], Task::Regression, 1, &mut rng);
    let inputs = random_inputs(&mut rng, 8, 12);
    let ys: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
    results.push((
        "regressor 12-100-1",
        gradient_check(&regressor, &inputs, &Targets::Regression(&ys)),
    ));

    let recognizer = MlpModel::init(300, &[100], Task::Multiclass, 5, &mut rng);
    let inputs = random_inputs(&mut rng, 4, 300);
    let labels: Vec<usize> = (0..4).map(|i| i % 5).collect();
    results.push((
        "recognizer 300-100-5",
        gradient_check(&recognizer, &inputs, &Targets::Multiclass { labels: &labels, classes: 5 }),
    ));

    results
}

fn param(model: &MlpModel, layer: usize, is_bias: bool, idx: usize) -> f64 {
    if is_bias {
        model.layers[layer].bias[idx]
    } else {
        model.layers[layer].weights[idx]
    }
}

fn set_param(model: &mut MlpModel, layer: usize, is_bias: bool, idx: usize, value: f64) {
    if is_bias {
        model.layers[layer].bias[idx] = value;
    } else {
        model.layers[layer].weights[idx] = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_dataset(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..100 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                let noise = |rng: &mut ChaCha20Rng| rng.random_range(-0.05..0.05);
                inputs.push(vec![a + noise(&mut rng), b + noise(&mut rng)]);
                labels.push((a > 0.5) != (b > 0.5));
            }
        }
        (inputs, labels)
    }

    #[test]
    fn xor_classifier_reaches_training_accuracy() {
        let (inputs, labels) = xor_dataset(7);
        let cfg = TrainConfig::default().with_seed(7);
        let model = train(&inputs, &Targets::Binary(&labels), &cfg).unwrap();
        let correct = inputs
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| {
                let p = match predict(&model, x).unwrap() {
                    Prediction::Binary(p) => p,
                    _ => unreachable!(),
                };
                (p >= 0.5) == y
            })
            .count();
        assert!(
            correct as f64 >= 0.99 * inputs.len() as f64,
            "{correct}/{}",
            inputs.len()
        );

        // A decisively separable corner.
        let p = match predict(&model, &[1.0, 0.0]).unwrap() {
            Prediction::Binary(p) => p,
            _ => unreachable!(),
        };
        assert!(p >= 0.95, "p = {p}");
    }

    #[test]
    fn linear_regression_fits_analytic_generator() {
        // y = 3x + 1 on 200 points, held-out MSE <= 1e-2.
        let inputs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0 - 1.0]).collect();
        let ys: Vec<f64> = inputs.iter().map(|x| 3.0 * x[0] + 1.0).collect();
        let split = 160;
        let cfg = TrainConfig {
            max_epochs: 500,
            patience: 50,
            ..TrainConfig::default().with_seed(3)
        };
        let model = train(&inputs[..split], &Targets::Regression(&ys[..split]), &cfg).unwrap();
        let mse: f64 = inputs[split..]
            .iter()
            .zip(&ys[split..])
            .map(|(x, &y)| (predict(&model, x).unwrap().scalar() - y).powi(2))
            .sum::<f64>()
            / (inputs.len() - split) as f64;
        assert!(mse <= 1e-2, "held-out mse {mse}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (inputs, labels) = xor_dataset(11);
        let cfg = TrainConfig {
            max_epochs: 20,
            ..TrainConfig::default().with_seed(42)
        };
        let a = train(&inputs, &Targets::Binary(&labels), &cfg).unwrap();
        let b = train(&inputs, &Targets::Binary(&labels), &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn zero_weight_binary_model_predicts_half() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut model = MlpModel::init(4, &[8], Task::Binary, 1, &mut rng);
        for layer in &mut model.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let p = predict(&model, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p, Prediction::Binary(0.5));
    }

    #[test]
    fn multiclass_probabilities_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let model = MlpModel::init(6, &[16], Task::Multiclass, 4, &mut rng);
        let p = match predict(&model, &[0.3, -1.0, 2.0, 0.0, 5.0, -2.0]).unwrap() {
            Prediction::Multiclass(p) => p,
            _ => unreachable!(),
        };
        assert_eq!(p.len(), 4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let model = MlpModel::init(3, &[4], Task::Binary, 1, &mut rng);
        assert_eq!(
            predict(&model, &[1.0, 2.0]),
            Err(NnError::DimensionMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn train_rejects_single_class_and_non_finite() {
        let inputs = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            train(&inputs, &Targets::Binary(&[true, true]), &TrainConfig::default()),
            Err(NnError::SingleClass)
        );
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert_eq!(
            train(&bad, &Targets::Binary(&[true, false]), &TrainConfig::default()),
            Err(NnError::NonFinite("inputs"))
        );
    }

    #[test]
    fn gradient_check_binary_head() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let model = MlpModel::init(27, &[10], Task::Binary, 1, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..27).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
        let err = gradient_check(&model, &inputs, &Targets::Binary(&labels));
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_softmax_head() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let model = MlpModel::init(12, &[10], Task::Multiclass, 3, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let err = gradient_check(
            &model,
            &inputs,
            &Targets::Multiclass { labels: &labels, classes: 3 },
        );
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_identity_linear_model() {
        // Linear model with identity output: the quadratic loss makes the
        // central difference exact up to floating-point error.
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let model = MlpModel::init(4, &[], Task::Regression, 1, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = inputs.iter().map(|x| x.iter().sum()).collect();
        let err = gradient_check(&model, &inputs, &Targets::Regression(&ys));
        assert!(err <= 1e-7, "max relative error {err}");
    }

    #[test]
    fn serialization_roundtrip_is_bit_identical() {
        let (inputs, labels) = xor_dataset(23);
        let cfg = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default().with_seed(23)
        };
        let model = train(&inputs, &Targets::Binary(&labels), &cfg).unwrap();
        let loaded = MlpModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, loaded);
        let x = vec![0.73, 0.21];
        assert_eq!(predict(&model, &x), predict(&loaded, &x));
    }

    #[test]
    fn loading_refuses_version_mismatch() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let model = MlpModel::init(2, &[2], Task::Binary, 1, &mut rng);
        let json = model.to_json().replace("\"version\":1", "\"version\":9");
        assert_eq!(
            MlpModel::from_json(&json),
            Err(NnError::VersionMismatch { found: 9, expected: MODEL_VERSION })
        );
    }

    #[test]
    fn standardization_is_stored_not_recomputed() {
        // Shift the inference input distribution: predictions must still use
        // the training-time standardizer embedded in the model.
        let (inputs, labels) = xor_dataset(29);
        let cfg = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default().with_seed(29)
        };
        let model = train(&inputs, &Targets::Binary(&labels), &cfg).unwrap();
        let before = model.standardizer.clone();
        let _ = predict(&model, &[100.0, -100.0]).unwrap();
        assert_eq!(model.standardizer, before);
        assert!(model.standardizer.std.iter().all(|&s| s > 0.0));
    }
}
