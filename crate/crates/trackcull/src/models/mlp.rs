//! A small feed-forward network trained with mini-batch Adam.
//!
//! Everything is implemented directly on `f64` slices: forward pass,
//! softmax cross-entropy, backpropagation, and the optimizer. Training is
//! sequential and seeded, so a given seed and dataset always produce the
//! same parameters bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::N_SUPERLAYERS;
use crate::dataset::DatasetRow;
use crate::models::{Classifier, ModelError};

pub const INPUT_DIM: usize = N_SUPERLAYERS;
pub const OUTPUT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperparams {
    pub hidden_layers: Vec<usize>,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Consecutive epochs without a training-loss improvement before the
    /// learning rate is scaled by `lr_factor`.
    pub lr_patience: usize,
    pub lr_factor: f64,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        MlpHyperparams {
            hidden_layers: vec![64, 64, 64],
            batch_size: 32,
            initial_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            lr_patience: 2,
            lr_factor: 0.2,
            min_lr: 1e-6,
            seed: 0,
        }
    }
}

impl MlpHyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::BadHyperparams {
                reason: reason.to_string(),
            })
        };
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return fail("hidden layer widths must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.initial_lr > 0.0) {
            return fail("initial_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return fail("lr_factor must lie in (0, 1)");
        }
        if self.lr_patience == 0 {
            return fail("lr_patience must be positive");
        }
        if !(self.min_lr >= 0.0) {
            return fail("min_lr must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

/// Record of one training run, stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MlpTrainMeta {
    pub epochs_run: usize,
    pub final_lr: f64,
    /// Mean cross-entropy per epoch, in epoch order.
    pub loss_history: Vec<f64>,
    /// Row accuracy on the training set at a 0.5 threshold.
    pub training_accuracy: f64,
}

/// Dense network `6 -> hidden... -> 2` with ReLU hidden activations and a
/// softmax head. Parameters live in one flat buffer, laid out layer by
/// layer as row-major weights followed by biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpModelFile", try_from = "MlpModelFile")]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
    hyperparams: MlpHyperparams,
    meta: MlpTrainMeta,
}

fn layer_dims(hyperparams: &MlpHyperparams) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hyperparams.hidden_layers.len() + 2);
    dims.push(INPUT_DIM);
    dims.extend_from_slice(&hyperparams.hidden_layers);
    dims.push(OUTPUT_DIM);
    dims
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpModel {
    /// Fresh network with Xavier-uniform weights (`±sqrt(6 / (fan_in +
    /// fan_out))`) and zero biases, drawn from a stream seeded by
    /// `hyperparams.seed`.
    pub fn init(hyperparams: MlpHyperparams) -> Result<Self, ModelError> {
        hyperparams.validate()?;
        let dims = layer_dims(&hyperparams);
        let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
        let mut params = Vec::with_capacity(param_count(&dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-bound..=bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(MlpModel {
            dims,
            params,
            hyperparams,
            meta: MlpTrainMeta::default(),
        })
    }

    /// Build a network from explicit parameters in flat layout.
    pub fn from_params(hyperparams: MlpHyperparams, params: Vec<f64>) -> Result<Self, ModelError> {
        hyperparams.validate()?;
        let dims = layer_dims(&hyperparams);
        if params.len() != param_count(&dims) {
            return Err(ModelError::BadHyperparams {
                reason: format!(
                    "expected {} parameters for dims {:?}, got {}",
                    param_count(&dims),
                    dims,
                    params.len()
                ),
            });
        }
        Ok(MlpModel {
            dims,
            params,
            hyperparams,
            meta: MlpTrainMeta::default(),
        })
    }

    pub fn hyperparams(&self) -> &MlpHyperparams {
        &self.hyperparams
    }

    pub fn meta(&self) -> &MlpTrainMeta {
        &self.meta
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameter buffer, aligned with
    /// [`MlpModel::batch_gradient`]. Meant for perturbation studies.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offset of layer `l`'s weights; its biases follow the weights.
    fn layer_offset(&self, l: usize) -> (usize, usize, usize) {
        let mut offset = 0;
        for w in self.dims.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        (offset, fan_in, fan_out)
    }

    /// Run one input through the network, writing the final probabilities
    /// into `out`. `scratch` holds the previous layer's activations.
    fn forward_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend_from_slice(x);
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (offset, fan_in, fan_out) = self.layer_offset(l);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            out.clear();
            for o in 0..fan_out {
                out.push(bias[o] + dot(&weights[o * fan_in..(o + 1) * fan_in], scratch));
            }
            if l == last {
                softmax_in_place(out);
            } else {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(scratch, out);
        }
        std::mem::swap(scratch, out);
    }

    /// Mean cross-entropy of the batch under the current parameters.
    pub fn batch_loss(&self, rows: &[DatasetRow]) -> f64 {
        let mut scratch = Vec::new();
        let mut out = Vec::new();
        let mut total = 0.0;
        for row in rows {
            self.forward_into(&row.features, &mut scratch, &mut out);
            let p = out[row.label as usize];
            if !p.is_finite() {
                return f64::NAN;
            }
            total -= p.max(1e-300).ln();
        }
        total / rows.len() as f64
    }

    /// Gradient of [`MlpModel::batch_loss`] with respect to every
    /// parameter, flat and aligned with [`MlpModel::params`].
    pub fn batch_gradient(&self, rows: &[DatasetRow]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.accumulate_gradient(rows, &mut grads);
        grads
    }

    /// Backpropagation over one batch; adds the mean-loss gradient into
    /// `grads` and returns the batch's mean cross-entropy.
    fn accumulate_gradient(&self, rows: &[DatasetRow], grads: &mut [f64]) -> f64 {
        let n_layers = self.n_layers();
        // activations[0] is the input; activations[l + 1] the output of layer l.
        let mut activations: Vec<Vec<f64>> = self.dims.iter().map(|&d| vec![0.0; d]).collect();
        let mut delta = vec![0.0; self.dims[n_layers]];
        let mut delta_prev = Vec::new();
        let scale = 1.0 / rows.len() as f64;
        let mut total_loss = 0.0;

        for row in rows {
            activations[0].copy_from_slice(&row.features);
            for l in 0..n_layers {
                let (offset, fan_in, fan_out) = self.layer_offset(l);
                let weights = &self.params[offset..offset + fan_in * fan_out];
                let bias =
                    &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
                let (before, after) = activations.split_at_mut(l + 1);
                let input = &before[l];
                let output = &mut after[0];
                for o in 0..fan_out {
                    output[o] = bias[o] + dot(&weights[o * fan_in..(o + 1) * fan_in], input);
                }
                if l == n_layers - 1 {
                    softmax_in_place(output);
                } else {
                    for v in output.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }

            let probs = &activations[n_layers];
            let p = probs[row.label as usize];
            if !p.is_finite() {
                // Poisoned parameters; the caller reports divergence.
                return f64::NAN;
            }
            total_loss -= p.max(1e-300).ln();

            // Softmax with cross-entropy: dL/dlogit = p - y. The buffer
            // was left at another layer's width by the previous row.
            delta.clear();
            delta.resize(self.dims[n_layers], 0.0);
            for (o, d) in delta.iter_mut().enumerate() {
                let y = (o == row.label as usize) as u8 as f64;
                *d = (probs[o] - y) * scale;
            }

            for l in (0..n_layers).rev() {
                let (offset, fan_in, fan_out) = self.layer_offset(l);
                let input = &activations[l];
                let w_grad = &mut grads[offset..offset + fan_in * fan_out];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row_g = &mut w_grad[o * fan_in..(o + 1) * fan_in];
                        for (g, v) in row_g.iter_mut().zip(input.iter()) {
                            *g += d * v;
                        }
                    }
                }
                let b_grad = &mut grads
                    [offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
                for (g, d) in b_grad.iter_mut().zip(delta.iter()) {
                    *g += d;
                }

                if l > 0 {
                    let weights = &self.params[offset..offset + fan_in * fan_out];
                    delta_prev.clear();
                    delta_prev.resize(fan_in, 0.0);
                    for o in 0..fan_out {
                        let d = delta[o];
                        if d != 0.0 {
                            let row_w = &weights[o * fan_in..(o + 1) * fan_in];
                            for (dp, w) in delta_prev.iter_mut().zip(row_w.iter()) {
                                *dp += d * w;
                            }
                        }
                    }
                    // ReLU gate: units that were clamped pass no gradient.
                    for (dp, a) in delta_prev.iter_mut().zip(input.iter()) {
                        if *a <= 0.0 {
                            *dp = 0.0;
                        }
                    }
                    std::mem::swap(&mut delta, &mut delta_prev);
                }
            }
        }
        total_loss / rows.len() as f64
    }
}

/// Dot product in four independent lanes. The fixed regrouping breaks the
/// serial rounding chain (so it vectorizes) while staying deterministic;
/// inference runs this per neuron, so it is the hottest loop in the crate.
#[inline]
fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let split = w.len() & !3;
    for (cw, cx) in w[..split].chunks_exact(4).zip(x[..split].chunks_exact(4)) {
        lanes[0] += cw[0] * cx[0];
        lanes[1] += cw[1] * cx[1];
        lanes[2] += cw[2] * cx[2];
        lanes[3] += cw[3] * cx[3];
    }
    let mut acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (wi, xi) in w[split..].iter().zip(&x[split..]) {
        acc += wi * xi;
    }
    acc
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

impl Classifier for MlpModel {
    fn predict_proba(&self, features: &[f64; N_SUPERLAYERS]) -> (f64, f64) {
        thread_local! {
            static BUFFERS: std::cell::RefCell<(Vec<f64>, Vec<f64>)> =
                std::cell::RefCell::new((Vec::new(), Vec::new()));
        }
        BUFFERS.with(|b| {
            let (scratch, out) = &mut *b.borrow_mut();
            self.forward_into(features, scratch, out);
            (out[0], out[1])
        })
    }
}

/// Train a network on the given rows with mini-batch Adam.
///
/// Each epoch shuffles the rows with the model's seeded stream and walks
/// them in `batch_size` chunks. When the epoch's mean loss has not improved
/// for `lr_patience` consecutive epochs the learning rate is multiplied by
/// `lr_factor`; training stops at `max_epochs` or once the rate drops below
/// `min_lr`. A non-finite loss aborts with the epoch, batch, and rate.
pub fn train(rows: &[DatasetRow], hyperparams: &MlpHyperparams) -> Result<MlpModel, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut model = MlpModel::init(hyperparams.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed.wrapping_add(1));

    let n_params = model.params.len();
    let mut grads = vec![0.0; n_params];
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut step = 0u64;

    let mut lr = hyperparams.initial_lr;
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut batch: Vec<DatasetRow> = Vec::with_capacity(hyperparams.batch_size);
    let mut history = Vec::new();

    for epoch in 0..hyperparams.max_epochs {
        if lr < hyperparams.min_lr {
            break;
        }
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(hyperparams.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| rows[i].clone()));
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.accumulate_gradient(&batch, &mut grads);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    lr,
                });
            }
            epoch_loss += loss * batch.len() as f64;

            step += 1;
            let bias1 = 1.0 - hyperparams.beta1.powi(step as i32);
            let bias2 = 1.0 - hyperparams.beta2.powi(step as i32);
            for i in 0..n_params {
                let g = grads[i];
                adam_m[i] = hyperparams.beta1 * adam_m[i] + (1.0 - hyperparams.beta1) * g;
                adam_v[i] = hyperparams.beta2 * adam_v[i] + (1.0 - hyperparams.beta2) * g * g;
                let m_hat = adam_m[i] / bias1;
                let v_hat = adam_v[i] / bias2;
                model.params[i] -= lr * m_hat / (v_hat.sqrt() + hyperparams.epsilon);
            }
        }
        let epoch_loss = epoch_loss / rows.len() as f64;
        history.push(epoch_loss);

        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= hyperparams.lr_patience {
                lr *= hyperparams.lr_factor;
                stale_epochs = 0;
            }
        }
    }

    model.meta = MlpTrainMeta {
        epochs_run: history.len(),
        final_lr: lr,
        loss_history: history,
        training_accuracy: training_accuracy(&model, rows),
    };
    Ok(model)
}

fn training_accuracy(model: &MlpModel, rows: &[DatasetRow]) -> f64 {
    let mut correct = 0usize;
    for row in rows {
        let (_, p_valid) = model.predict_proba(&row.features);
        if (p_valid >= 0.5) == row.label {
            correct += 1;
        }
    }
    correct as f64 / rows.len() as f64
}

/// On-disk layout: weights as nested per-neuron arrays, one entry per layer.
#[derive(Serialize, Deserialize, Clone)]
struct MlpLayerFile {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct MlpModelFile {
    hyperparams: MlpHyperparams,
    layers: Vec<MlpLayerFile>,
    meta: MlpTrainMeta,
}

impl From<MlpModel> for MlpModelFile {
    fn from(model: MlpModel) -> Self {
        let n_layers = model.n_layers();
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (offset, fan_in, fan_out) = model.layer_offset(l);
            let weights = (0..fan_out)
                .map(|o| {
                    model.params[offset + o * fan_in..offset + (o + 1) * fan_in].to_vec()
                })
                .collect();
            let bias = model.params
                [offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out]
                .to_vec();
            layers.push(MlpLayerFile {
                inputs: fan_in,
                outputs: fan_out,
                activation: if l == n_layers - 1 {
                    Activation::Softmax
                } else {
                    Activation::Relu
                },
                weights,
                bias,
            });
        }
        MlpModelFile {
            hyperparams: model.hyperparams,
            layers,
            meta: model.meta,
        }
    }
}

impl TryFrom<MlpModelFile> for MlpModel {
    type Error = ModelError;

    fn try_from(file: MlpModelFile) -> Result<Self, ModelError> {
        let corrupt = |reason: String| ModelError::BadHyperparams { reason };
        let dims = layer_dims(&file.hyperparams);
        if file.layers.len() != dims.len() - 1 {
            return Err(corrupt(format!(
                "expected {} layers, found {}",
                dims.len() - 1,
                file.layers.len()
            )));
        }
        let mut params = Vec::with_capacity(param_count(&dims));
        for (l, layer) in file.layers.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let expect_act = if l == file.layers.len() - 1 {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            if layer.inputs != fan_in
                || layer.outputs != fan_out
                || layer.weights.len() != fan_out
                || layer.bias.len() != fan_out
                || layer.weights.iter().any(|r| r.len() != fan_in)
            {
                return Err(corrupt(format!("layer {l} shape mismatch")));
            }
            if layer.activation != expect_act {
                return Err(corrupt(format!("layer {l} has the wrong activation")));
            }
            for row in &layer.weights {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&layer.bias);
        }
        let mut model = MlpModel::from_params(file.hyperparams, params)?;
        model.meta = file.meta;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_hyperparams(hidden: Vec<usize>) -> MlpHyperparams {
        MlpHyperparams {
            hidden_layers: hidden,
            seed: 5,
            ..MlpHyperparams::default()
        }
    }

    fn row(features: [f64; 6], label: bool) -> DatasetRow {
        DatasetRow { features, label }
    }

    #[test]
    fn forward_matches_hand_computation() {
        // One hidden unit: h = relu(2 * x1) = 2, logits (2, -2).
        let params = vec![
            2.0, 0.0, 0.0, 0.0, 0.0, 0.0, // hidden weights
            0.0, // hidden bias
            1.0, -1.0, // output weights
            0.0, 0.0, // output bias
        ];
        let model = MlpModel::from_params(toy_hyperparams(vec![1]), params).unwrap();
        let (p_invalid, p_valid) = model.predict_proba(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let expected = (-2.0f64).exp() / (2.0f64.exp() + (-2.0f64).exp());
        assert!((p_valid - expected).abs() < 1e-15);
        assert!((p_valid - 0.0180).abs() < 5e-5);
        assert!((p_invalid + p_valid - 1.0).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one_for_random_models() {
        let model = MlpModel::init(toy_hyperparams(vec![64, 64, 64])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mut x = [0.0; 6];
            for v in x.iter_mut() {
                *v = rng.gen_range(0.0..=1.0);
            }
            let (p0, p1) = model.predict_proba(&x);
            assert!((p0 + p1 - 1.0).abs() < 1e-9);
            assert!(p0 >= 0.0 && p1 >= 0.0);
        }
    }

    #[test]
    fn output_bias_gradient_components_are_opposite() {
        // Softmax probabilities and one-hot labels both sum to one, so the
        // two output-bias gradient entries must cancel exactly.
        let model = MlpModel::init(toy_hyperparams(vec![8])).unwrap();
        let rows = vec![
            row([0.9, 0.1, 0.4, 0.2, 0.7, 0.3], true),
            row([0.2, 0.8, 0.1, 0.6, 0.2, 0.9], false),
            row([0.5, 0.5, 0.5, 0.5, 0.5, 0.5], false),
        ];
        let grads = model.batch_gradient(&rows);
        let n = grads.len();
        let (g0, g1) = (grads[n - 2], grads[n - 1]);
        assert!((g0 + g1).abs() < 1e-15, "{g0} vs {g1}");
    }

    #[test]
    fn zero_network_on_balanced_batch_has_zero_output_bias_gradient() {
        let hp = toy_hyperparams(vec![4]);
        let n_params = 6 * 4 + 4 + 4 * 2 + 2;
        let model = MlpModel::from_params(hp, vec![0.0; n_params]).unwrap();
        let rows = vec![
            row([0.1, 0.2, 0.3, 0.4, 0.5, 0.6], true),
            row([0.6, 0.5, 0.4, 0.3, 0.2, 0.1], false),
        ];
        let grads = model.batch_gradient(&rows);
        let n = grads.len();
        assert!(grads[n - 2].abs() < 1e-15);
        assert!(grads[n - 1].abs() < 1e-15);
    }

    #[test]
    fn duplicating_the_batch_leaves_the_mean_gradient_unchanged() {
        let model = MlpModel::init(toy_hyperparams(vec![16, 16])).unwrap();
        let rows = vec![
            row([0.3, 0.1, 0.4, 0.1, 0.5, 0.9], true),
            row([0.2, 0.7, 0.1, 0.8, 0.2, 0.8], false),
        ];
        let doubled: Vec<DatasetRow> = rows.iter().chain(rows.iter()).cloned().collect();
        let g1 = model.batch_gradient(&rows);
        let g2 = model.batch_gradient(&doubled);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn separable_rows(n: usize, seed: u64) -> Vec<DatasetRow> {
        // Valid iff f1 > 0.5, with a small margin so the task is clean.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        while rows.len() < n {
            let mut features = [0.0f64; 6];
            for v in features.iter_mut() {
                *v = rng.gen_range(0.0..=1.0);
            }
            if (features[0] - 0.5).abs() < 0.02 {
                continue;
            }
            rows.push(row(features, features[0] > 0.5));
        }
        rows
    }

    #[test]
    fn training_separates_a_linear_toy_problem() {
        let rows = separable_rows(200, 3);
        let hp = MlpHyperparams {
            max_epochs: 50,
            seed: 9,
            ..MlpHyperparams::default()
        };
        let model = train(&rows, &hp).unwrap();
        assert_eq!(model.meta().training_accuracy, 1.0);
        let history = &model.meta().loss_history;
        assert!(history.iter().all(|l| l.is_finite()));
        assert!(history.last().unwrap() <= history.first().unwrap());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let rows = separable_rows(64, 11);
        let hp = MlpHyperparams {
            max_epochs: 5,
            seed: 21,
            ..MlpHyperparams::default()
        };
        let a = train(&rows, &hp).unwrap();
        let b = train(&rows, &hp).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.meta(), b.meta());
    }

    #[test]
    fn absurd_learning_rate_reports_divergence_context() {
        let rows = separable_rows(64, 13);
        let hp = MlpHyperparams {
            initial_lr: 1e300,
            seed: 2,
            ..MlpHyperparams::default()
        };
        match train(&rows, &hp) {
            Err(ModelError::NonFiniteLoss { lr, .. }) => assert_eq!(lr, 1e300),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(
            train(&[], &MlpHyperparams::default()),
            Err(ModelError::EmptyTrainingSet)
        ));
    }
}
