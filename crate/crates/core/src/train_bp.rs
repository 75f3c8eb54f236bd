//! Backpropagation training: MSE on the softmax outputs (so backward
//! goes through the full softmax Jacobian), exact gradients through every
//! ReLU/batch-norm/dense block, Adam updates, seeded shuffles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{apply_input_policy, stack_samples, DatasetSplit};
use crate::error::{Error, Result};
use crate::history::{EpochRecord, RunHistory};
use crate::math::{epoch_stream, Matrix, SeededRng, STREAM_SHUFFLE};
use crate::metrics::{argmax, error_rate, roc_auc_report};
use crate::network::{ForwardCache, LayerGrads, Mode, Network};
use crate::optim::AdamState;

/// Which metric drives "save on improvement". The paper-style setup has
/// no validation set, so the default monitors training loss; monitoring
/// test error leaks the test set into model selection and says so.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    TrainLoss,
    TestError,
}

/// Which parameters receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScope {
    #[default]
    Full,
    /// Hidden layers (including their BN state) are frozen; only the
    /// softmax head trains. Used by the hybrid's second stage.
    HeadOnly,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub scope: TrainScope,
    pub monitor: Monitor,
    /// Where to write the latest/best checkpoints; None disables saving.
    pub checkpoint_path: Option<PathBuf>,
    /// Stop once a recorded test error reaches this value (percent).
    pub early_stop_test_error: Option<f64>,
    /// Cadence of test-set evaluation in epochs.
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            learning_rate: 1e-3,
            seed,
            scope: TrainScope::Full,
            monitor: Monitor::TrainLoss,
            checkpoint_path: None,
            early_stop_test_error: None,
            eval_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be >= 2 (batch norm needs batch statistics)".into(),
            ));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.monitor == Monitor::TestError {
            eprintln!(
                "warning: monitoring test error selects checkpoints on the test set (leaky protocol)"
            );
        }
        Ok(())
    }
}

/// All parameter gradients of one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Per hidden layer, first to last. Empty in head-only scope.
    pub layers: Vec<LayerGrads>,
    pub d_head_weights: Matrix,
    pub d_head_bias: Vec<f64>,
}

/// Mean over all B x n entries of (p - y)^2.
pub fn mse_loss(probs: &Matrix, onehot: &Matrix) -> Result<f64> {
    if probs.rows() != onehot.rows() || probs.cols() != onehot.cols() {
        return Err(Error::Shape(format!(
            "mse_loss: {}x{} vs {}x{}",
            probs.rows(),
            probs.cols(),
            onehot.rows(),
            onehot.cols()
        )));
    }
    let total: f64 = probs
        .data()
        .iter()
        .zip(onehot.data())
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(total / probs.data().len() as f64)
}

pub fn one_hot(labels: &[usize], n: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), n);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

/// Exact gradients of `mse_loss(softmax(...), onehot)` with respect to
/// every parameter. The softmax needs its full Jacobian here because MSE
/// (not cross-entropy) sits on top of it:
///   dL/dz_i = p_i * (dL/dp_i - sum_j dL/dp_j * p_j)
pub fn backward(
    net: &Network,
    cache: &ForwardCache,
    onehot: &Matrix,
    scope: TrainScope,
) -> Result<Gradients> {
    let probs = &cache.probs;
    if probs.rows() != onehot.rows() || probs.cols() != onehot.cols() {
        return Err(Error::Shape(format!(
            "backward: probs {}x{} vs targets {}x{}",
            probs.rows(),
            probs.cols(),
            onehot.rows(),
            onehot.cols()
        )));
    }
    if cache.layers.len() != net.hidden.len() {
        return Err(Error::Shape(
            "backward: cache does not match network depth".into(),
        ));
    }
    let b = probs.rows();
    let n = probs.cols();
    let scale = 2.0 / (b * n) as f64;

    // dL/dz through the softmax Jacobian, row by row.
    let mut d_logits = Matrix::zeros(b, n);
    for i in 0..b {
        let p = probs.row(i);
        let y = onehot.row(i);
        let dp: Vec<f64> = p.iter().zip(y).map(|(pi, yi)| scale * (pi - yi)).collect();
        let s: f64 = dp.iter().zip(p).map(|(d, pi)| d * pi).sum();
        for (j, g) in d_logits.row_mut(i).iter_mut().enumerate() {
            *g = p[j] * (dp[j] - s);
        }
    }

    // The head reads the (possibly normalized) last hidden output; the
    // gradient chains back through that normalization, and likewise
    // between every pair of hidden layers.
    let last_raw = &cache.layers.last().expect("at least one layer").post_act;
    let head_input = net.norm_rows(last_raw);
    let d_head_weights = head_input.transpose().matmul(&d_logits)?;
    let d_head_bias = d_logits.col_sums();

    let mut layers = Vec::new();
    if scope == TrainScope::Full {
        let mut d_out = norm_backward(net, last_raw, &d_logits.matmul(&net.head.weights.transpose())?);
        for (idx, (layer, lcache)) in net.hidden.iter().zip(&cache.layers).enumerate().rev() {
            let grads = layer.backward(lcache, &d_out, idx > 0)?;
            if let Some(ref d_input) = grads.d_input {
                d_out = norm_backward(net, &cache.layers[idx - 1].post_act, d_input);
            }
            layers.push(grads);
        }
        layers.reverse();
    }
    Ok(Gradients {
        layers,
        d_head_weights,
        d_head_bias,
    })
}

fn norm_backward(net: &Network, raw: &Matrix, grad: &Matrix) -> Matrix {
    use crate::network::InterLayerNorm;
    match net.hidden_norm {
        InterLayerNorm::L2Direction => crate::math::normalize_direction_backward(raw, grad),
        InterLayerNorm::None => grad.clone(),
    }
}

/// Tensor lengths in the fixed optimizer order for a scope.
pub fn tensor_lens(net: &Network, scope: TrainScope) -> Vec<usize> {
    let mut lens = Vec::new();
    if scope == TrainScope::Full {
        for l in &net.hidden {
            lens.push(l.weights.data().len());
            lens.push(l.bias.len());
            lens.push(l.bn_gamma.len());
            lens.push(l.bn_beta.len());
        }
    }
    lens.push(net.head.weights.data().len());
    lens.push(net.head.bias.len());
    lens
}

fn apply_update(
    net: &mut Network,
    grads: &Gradients,
    scope: TrainScope,
    adam: &mut AdamState,
) -> Result<()> {
    let mut params: Vec<&mut [f64]> = Vec::new();
    let mut grad_refs: Vec<&[f64]> = Vec::new();
    if scope == TrainScope::Full {
        for (l, g) in net.hidden.iter_mut().zip(&grads.layers) {
            params.push(l.weights.data_mut());
            params.push(&mut l.bias);
            params.push(&mut l.bn_gamma);
            params.push(&mut l.bn_beta);
            grad_refs.push(g.d_weights.data());
            grad_refs.push(&g.d_bias);
            grad_refs.push(&g.d_gamma);
            grad_refs.push(&g.d_beta);
        }
    }
    params.push(net.head.weights.data_mut());
    params.push(&mut net.head.bias);
    grad_refs.push(grads.d_head_weights.data());
    grad_refs.push(&grads.d_head_bias);
    adam.step(&mut params, &grad_refs)
}

/// Resumable trainer state: the optimizer plus the index of the last
/// completed epoch.
#[derive(Debug, Clone)]
pub struct BpState {
    pub adam: AdamState,
    pub completed_epochs: usize,
}

impl BpState {
    pub fn fresh(net: &Network, cfg: &TrainConfig) -> Self {
        BpState {
            adam: AdamState::new(&tensor_lens(net, cfg.scope), cfg.learning_rate),
            completed_epochs: 0,
        }
    }
}

/// Trains `net` in place. `state` carries Adam moments and the resume
/// point; pass `BpState::fresh` for a new run or a checkpoint's state to
/// continue one. Returns the history of the epochs run by this call.
pub fn train_bp(
    net: &mut Network,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    state: &mut BpState,
) -> Result<RunHistory> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if net.class_count != data.class_count {
        return Err(Error::Data(format!(
            "network has {} classes, dataset has {}",
            net.class_count, data.class_count
        )));
    }

    let n = net.class_count;
    let (test_inputs, test_labels) = stack_samples(&data.test);
    let mut history = RunHistory::default();
    let mut best_monitor = f64::INFINITY;

    for epoch in state.completed_epochs + 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        SeededRng::derive_stream(cfg.seed, epoch_stream(STREAM_SHUFFLE, epoch))
            .shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        let mut train_preds: Vec<usize> = Vec::with_capacity(data.train.len());
        let mut train_truth: Vec<usize> = Vec::with_capacity(data.train.len());
        let mut train_probs_rows: Vec<Vec<f64>> = Vec::with_capacity(data.train.len());

        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                // batch norm cannot process a single sample
                continue;
            }
            let samples: Vec<_> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let (raw, labels) = stack_samples(&samples);
            let inputs = apply_input_policy(net.input_policy, &raw, Some(&labels), n)?;
            // Head-only scope keeps the features fully frozen, batch-norm
            // running statistics included, so the hidden stack runs in
            // eval mode there.
            let cache = match cfg.scope {
                TrainScope::Full => net.forward(&inputs, Mode::Train)?,
                TrainScope::HeadOnly => net.forward_eval(&inputs)?,
            };
            let targets = one_hot(&labels, n);
            let loss = mse_loss(&cache.probs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            let grads = backward(net, &cache, &targets, cfg.scope)?;
            apply_update(net, &grads, cfg.scope, &mut state.adam)?;

            loss_sum += loss;
            loss_batches += 1;
            for (row, &label) in labels.iter().enumerate() {
                train_preds.push(argmax(cache.probs.row(row)));
                train_truth.push(label);
                train_probs_rows.push(cache.probs.row(row).to_vec());
            }
        }
        if loss_batches == 0 {
            return Err(Error::Data(
                "every batch was smaller than 2 samples; nothing trained".into(),
            ));
        }

        let train_probs = Matrix::from_rows(&train_probs_rows)?;
        let train_error = error_rate(&train_preds, &train_truth)?;
        let train_auc = roc_auc_report(&train_probs, &train_truth).ok();

        let (test_error, test_auc) = if !data.test.is_empty()
            && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
        {
            let (err, auc) = evaluate_softmax(net, &test_inputs, &test_labels)?;
            (Some(err), auc)
        } else {
            (None, None)
        };

        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / loss_batches as f64,
            train_error: Some(train_error),
            train_auc,
            test_error,
            test_auc,
            layers: Vec::new(),
        });
        state.completed_epochs = epoch;

        if let Some(path) = &cfg.checkpoint_path {
            let monitor_value = match cfg.monitor {
                Monitor::TrainLoss => loss_sum / loss_batches as f64,
                Monitor::TestError => test_error.unwrap_or(f64::INFINITY),
            };
            if monitor_value < best_monitor {
                best_monitor = monitor_value;
                save_state(net, state, cfg, epoch, &best_path(path))?;
            }
        }

        if let (Some(limit), Some(err)) = (cfg.early_stop_test_error, test_error) {
            if err <= limit {
                break;
            }
        }
    }

    if let Some(path) = &cfg.checkpoint_path {
        save_state(net, state, cfg, state.completed_epochs, path)?;
    }
    Ok(history)
}

/// Eval-mode error rate and AUC of the softmax head on stacked inputs.
pub fn evaluate_softmax(
    net: &Network,
    raw_inputs: &Matrix,
    labels: &[usize],
) -> Result<(f64, Option<f64>)> {
    let inputs = apply_input_policy(net.input_policy, raw_inputs, None, net.class_count)?;
    let probs = net.predict_probs(&inputs)?;
    let preds: Vec<usize> = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
    Ok((
        error_rate(&preds, labels)?,
        roc_auc_report(&probs, labels).ok(),
    ))
}

/// Softmax prediction for arbitrary raw rows; applies the network's
/// input policy first. Ties break toward the smallest label index.
pub fn predict_softmax(net: &Network, raw: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    let inputs = apply_input_policy(net.input_policy, raw, None, net.class_count)?;
    let probs = net.predict_probs(&inputs)?;
    let labels = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
    Ok((labels, probs))
}

fn best_path(latest: &Path) -> PathBuf {
    let stem = latest
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    latest.with_file_name(format!("{stem}-best.ckpt"))
}

fn save_state(
    net: &Network,
    state: &BpState,
    cfg: &TrainConfig,
    epoch: usize,
    path: &Path,
) -> Result<()> {
    Checkpoint {
        net: net.clone(),
        optimizer: vec![state.adam.clone()],
        epoch,
        mode: "bp".into(),
        seed: cfg.seed,
        class_names: Vec::new(),
        extra: serde_json::Value::Null,
    }
    .save(path)
}
