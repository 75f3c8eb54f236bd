//! Forward-forward training: each hidden layer optimizes a local
//! goodness objective over positive/negative overlay batches, with no
//! gradient flow between layers and the softmax head left untouched.
//! Inference is goodness voting over candidate label overlays.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{make_overlay_batch, stack_samples, DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::history::{EpochRecord, LayerGoodness, RunHistory};
use crate::math::{epoch_stream, logistic, softplus, Matrix, SeededRng, STREAM_NEGATIVE, STREAM_SHUFFLE};
use crate::metrics::{argmax, error_rate, roc_auc_report};
use crate::network::{DenseLayer, Network};
use crate::optim::AdamState;

pub use crate::math::normalize_direction;
pub use crate::network::InterLayerNorm;

/// Which layers' goodness enters the prediction vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodnessLayers {
    #[default]
    All,
    SkipFirst,
}

/// Layer update order. `Streaming` updates every layer on every batch;
/// `Greedy` trains layers one at a time for the full epoch budget each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfaSchedule {
    #[default]
    Streaming,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct FfaConfig {
    /// Per-layer goodness threshold; None means the layer's width, which
    /// puts the operating point at mean-square activation 1 regardless
    /// of dimension.
    pub theta: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub inter_layer_normalization: InterLayerNorm,
    pub goodness_layers: GoodnessLayers,
    pub schedule: FfaSchedule,
    pub checkpoint_path: Option<PathBuf>,
    pub early_stop_test_error: Option<f64>,
    /// Cadence of goodness-vote test evaluation in epochs.
    pub eval_every: usize,
    /// Cadence of goodness-vote *train* error (costly: n forwards per
    /// sample); 0 measures it only on the final epoch.
    pub train_error_every: usize,
}

impl FfaConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        FfaConfig {
            theta: None,
            epochs,
            batch_size,
            learning_rate: 1e-3,
            seed,
            inter_layer_normalization: InterLayerNorm::default(),
            goodness_layers: GoodnessLayers::default(),
            schedule: FfaSchedule::default(),
            checkpoint_path: None,
            early_stop_test_error: None,
            eval_every: 1,
            train_error_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0) {
                return Err(Error::Config(format!("theta must be > 0, got {theta}")));
            }
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn theta_for(&self, layer: &DenseLayer) -> f64 {
        self.theta.unwrap_or(layer.out_dim() as f64)
    }
}

/// Per-row sum of squared activations (the goodness).
pub fn layer_goodness(y: &Matrix) -> Vec<f64> {
    y.row_sum_squares()
}

/// prob(positive) = logistic(goodness - theta).
pub fn positive_probability(goodness: f64, theta: f64) -> f64 {
    logistic(goodness - theta)
}

/// Local objective: mean over the batch of
/// softplus(theta - g_pos) + softplus(g_neg - theta).
/// Equivalent to binary cross-entropy on `positive_probability` with
/// targets 1 for positive rows and 0 for negative rows.
pub fn ffa_local_loss(g_pos: &[f64], g_neg: &[f64], theta: f64) -> Result<f64> {
    if g_pos.len() != g_neg.len() || g_pos.is_empty() {
        return Err(Error::Shape(format!(
            "ffa_local_loss: {} positive vs {} negative goodness values",
            g_pos.len(),
            g_neg.len()
        )));
    }
    let sum: f64 = g_pos
        .iter()
        .zip(g_neg)
        .map(|(p, n)| softplus(theta - p) + softplus(n - theta))
        .sum();
    Ok(sum / g_pos.len() as f64)
}

/// Result of one local update, plus the layer outputs the cascade feeds
/// forward (computed before the update, so layer k trains on the inputs
/// this batch actually produced).
pub struct LayerStepOutput {
    pub record: LayerGoodness,
    pub pos_out: Matrix,
    pub neg_out: Matrix,
}

/// Parameter gradients of the local objective for one layer, in
/// optimizer order (weights, bias, gamma, beta).
pub struct FfaLayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
}

/// Gradients of the local goodness objective w.r.t. this layer's
/// parameters only; inputs are treated as constants. Mutates the layer's
/// BN running statistics (train-mode forwards) but no parameters.
pub fn ffa_layer_gradients(
    layer: &mut DenseLayer,
    layer_idx: usize,
    x_pos: &Matrix,
    x_neg: &Matrix,
    theta: f64,
) -> Result<(FfaLayerGrads, LayerStepOutput)> {
    let pos_cache = layer.forward_train(x_pos)?;
    let neg_cache = layer.forward_train(x_neg)?;
    let g_pos = layer_goodness(&pos_cache.post_act);
    let g_neg = layer_goodness(&neg_cache.post_act);
    let loss = ffa_local_loss(&g_pos, &g_neg, theta)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite local loss in layer {layer_idx}"
        )));
    }
    let b = g_pos.len() as f64;

    // dL/dg, then dL/dy = 2 y dL/dg row by row.
    let mut d_pos = pos_cache.post_act.clone();
    for (i, &g) in g_pos.iter().enumerate() {
        let dg = -logistic(theta - g) / b;
        for v in d_pos.row_mut(i).iter_mut() {
            *v *= 2.0 * dg;
        }
    }
    let mut d_neg = neg_cache.post_act.clone();
    for (i, &g) in g_neg.iter().enumerate() {
        let dg = logistic(g - theta) / b;
        for v in d_neg.row_mut(i).iter_mut() {
            *v *= 2.0 * dg;
        }
    }

    let gp = layer.backward(&pos_cache, &d_pos, false)?;
    let gn = layer.backward(&neg_cache, &d_neg, false)?;
    let d_weights = gp.d_weights.add(&gn.d_weights)?;
    let d_bias: Vec<f64> = gp.d_bias.iter().zip(&gn.d_bias).map(|(a, b)| a + b).collect();
    let d_gamma: Vec<f64> = gp.d_gamma.iter().zip(&gn.d_gamma).map(|(a, b)| a + b).collect();
    let d_beta: Vec<f64> = gp.d_beta.iter().zip(&gn.d_beta).map(|(a, b)| a + b).collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let grads = FfaLayerGrads { d_weights, d_bias, d_gamma, d_beta };
    let out = LayerStepOutput {
        record: LayerGoodness {
            layer_idx,
            g_pos_mean: mean(&g_pos),
            g_neg_mean: mean(&g_neg),
            local_loss: loss,
        },
        pos_out: pos_cache.post_act,
        neg_out: neg_cache.post_act,
    };
    Ok((grads, out))
}

/// One local training step: forward both batches through this layer
/// alone, compute the goodness loss, update only this layer's parameters.
pub fn ffa_layer_step(
    layer: &mut DenseLayer,
    layer_idx: usize,
    x_pos: &Matrix,
    x_neg: &Matrix,
    theta: f64,
    adam: &mut AdamState,
) -> Result<LayerStepOutput> {
    let (grads, out) = ffa_layer_gradients(layer, layer_idx, x_pos, x_neg, theta)?;
    adam.step(
        &mut [
            layer.weights.data_mut(),
            &mut layer.bias,
            &mut layer.bn_gamma,
            &mut layer.bn_beta,
        ],
        &[
            grads.d_weights.data(),
            &grads.d_bias,
            &grads.d_gamma,
            &grads.d_beta,
        ],
    )?;
    Ok(out)
}

/// Eval-mode activations of every hidden layer for a batch, applying the
/// network's recorded inter-layer normalization between layers. Returned
/// matrices are the raw post-ReLU outputs (goodness is measured on
/// these, before normalization).
pub fn hidden_activations(net: &Network, batch: &Matrix) -> Result<Vec<Matrix>> {
    let mut outs = Vec::with_capacity(net.hidden.len());
    let mut x = batch.clone();
    for layer in &net.hidden {
        let y = layer.forward_eval(&x)?;
        x = net.norm_rows(&y);
        outs.push(y);
    }
    Ok(outs)
}

fn adam_lens(layer: &DenseLayer) -> Vec<usize> {
    vec![
        layer.weights.data().len(),
        layer.bias.len(),
        layer.bn_gamma.len(),
        layer.bn_beta.len(),
    ]
}

/// Resumable forward-forward trainer state (streaming schedule).
#[derive(Debug, Clone)]
pub struct FfaState {
    pub adams: Vec<AdamState>,
    pub completed_epochs: usize,
}

impl FfaState {
    pub fn fresh(net: &Network, cfg: &FfaConfig) -> Self {
        FfaState {
            adams: net
                .hidden
                .iter()
                .map(|l| AdamState::new(&adam_lens(l), cfg.learning_rate))
                .collect(),
            completed_epochs: 0,
        }
    }
}

/// Trains the hidden stack with local goodness objectives. The head is
/// never touched. Returns per-epoch goodness traces and goodness-vote
/// metrics.
pub fn train_ffa(
    net: &mut Network,
    data: &DatasetSplit,
    cfg: &FfaConfig,
    state: &mut FfaState,
) -> Result<RunHistory> {
    cfg.validate()?;
    if data.class_count < 2 {
        return Err(Error::Data("forward-forward needs at least 2 classes".into()));
    }
    if net.class_count != data.class_count {
        return Err(Error::Data(format!(
            "network has {} classes, dataset has {}",
            net.class_count, data.class_count
        )));
    }
    // Record the cascade's normalization on the network so every later
    // forward (goodness voting, hybrid stage 2, checkpointed inference)
    // matches the distribution the layers trained on.
    net.hidden_norm = cfg.inter_layer_normalization;
    match cfg.schedule {
        FfaSchedule::Streaming => train_ffa_streaming(net, data, cfg, state),
        FfaSchedule::Greedy => train_ffa_greedy(net, data, cfg, state),
    }
}

fn train_ffa_streaming(
    net: &mut Network,
    data: &DatasetSplit,
    cfg: &FfaConfig,
    state: &mut FfaState,
) -> Result<RunHistory> {
    let mut history = RunHistory::default();
    for epoch in state.completed_epochs + 1..=cfg.epochs {
        let mut layer_acc: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0); net.hidden.len()];
        let mut batches = 0usize;
        for_each_batch(data, cfg, epoch, |net, batch_pos, batch_neg| {
            let mut x_pos = batch_pos;
            let mut x_neg = batch_neg;
            for (idx, layer) in net.hidden.iter_mut().enumerate() {
                let theta = cfg.theta_for(layer);
                let step =
                    ffa_layer_step(layer, idx, &x_pos, &x_neg, theta, &mut state.adams[idx])?;
                layer_acc[idx].0 += step.record.g_pos_mean;
                layer_acc[idx].1 += step.record.g_neg_mean;
                layer_acc[idx].2 += step.record.local_loss;
                let (p, n) = (step.pos_out, step.neg_out);
                x_pos = match cfg.inter_layer_normalization {
                    InterLayerNorm::L2Direction => normalize_direction(&p),
                    InterLayerNorm::None => p,
                };
                x_neg = match cfg.inter_layer_normalization {
                    InterLayerNorm::L2Direction => normalize_direction(&n),
                    InterLayerNorm::None => n,
                };
            }
            batches += 1;
            Ok(())
        })(net)?;
        if batches == 0 {
            return Err(Error::Data(
                "every batch was smaller than 2 samples; nothing trained".into(),
            ));
        }

        let record = finish_epoch(net, data, cfg, epoch, &layer_acc, batches)?;
        let stop = should_stop(cfg, &record);
        history.push(record);
        state.completed_epochs = epoch;
        if stop {
            break;
        }
    }
    save_ffa_checkpoint(net, data, cfg, state)?;
    Ok(history)
}

fn train_ffa_greedy(
    net: &mut Network,
    data: &DatasetSplit,
    cfg: &FfaConfig,
    state: &mut FfaState,
) -> Result<RunHistory> {
    if state.completed_epochs != 0 {
        return Err(Error::Config(
            "greedy forward-forward does not support resuming".into(),
        ));
    }
    let mut history = RunHistory::default();
    let depth = net.hidden.len();
    for layer_idx in 0..depth {
        for epoch in 1..=cfg.epochs {
            let global_epoch = layer_idx * cfg.epochs + epoch;
            let mut acc = (0.0, 0.0, 0.0);
            let mut batches = 0usize;
            for_each_batch(data, cfg, global_epoch, |net, batch_pos, batch_neg| {
                // Frozen prefix in eval mode, then one trainable layer.
                let mut x_pos = batch_pos;
                let mut x_neg = batch_neg;
                for k in 0..layer_idx {
                    let p = net.hidden[k].forward_eval(&x_pos)?;
                    let n = net.hidden[k].forward_eval(&x_neg)?;
                    x_pos = match cfg.inter_layer_normalization {
                        InterLayerNorm::L2Direction => normalize_direction(&p),
                        InterLayerNorm::None => p,
                    };
                    x_neg = match cfg.inter_layer_normalization {
                        InterLayerNorm::L2Direction => normalize_direction(&n),
                        InterLayerNorm::None => n,
                    };
                }
                let layer = &mut net.hidden[layer_idx];
                let theta = cfg.theta_for(layer);
                let step = ffa_layer_step(
                    layer,
                    layer_idx,
                    &x_pos,
                    &x_neg,
                    theta,
                    &mut state.adams[layer_idx],
                )?;
                acc.0 += step.record.g_pos_mean;
                acc.1 += step.record.g_neg_mean;
                acc.2 += step.record.local_loss;
                batches += 1;
                Ok(())
            })(net)?;
            if batches == 0 {
                return Err(Error::Data("no trainable batches".into()));
            }
            let layer_acc: Vec<(f64, f64, f64)> = (0..depth)
                .map(|i| if i == layer_idx { acc } else { (0.0, 0.0, 0.0) })
                .collect();
            let record = finish_epoch(net, data, cfg, global_epoch, &layer_acc, batches)?;
            history.push(record);
            state.completed_epochs = global_epoch;
        }
    }
    save_ffa_checkpoint(net, data, cfg, state)?;
    Ok(history)
}

/// Builds the shuffled overlay batches of one epoch and feeds them to
/// `body`. Shuffle and negative-label streams are derived per epoch from
/// the root seed, so a resumed run replays them exactly.
fn for_each_batch<'a>(
    data: &'a DatasetSplit,
    cfg: &'a FfaConfig,
    epoch: usize,
    mut body: impl FnMut(&mut Network, Matrix, Matrix) -> Result<()> + 'a,
) -> impl FnOnce(&mut Network) -> Result<()> + 'a {
    move |net| {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        SeededRng::derive_stream(cfg.seed, epoch_stream(STREAM_SHUFFLE, epoch))
            .shuffle(&mut order);
        let mut neg_rng =
            SeededRng::derive_stream(cfg.seed, epoch_stream(STREAM_NEGATIVE, epoch));
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<Sample> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let batch = make_overlay_batch(&samples, data.class_count, &mut neg_rng)?;
            body(net, batch.positive, batch.negative)?;
        }
        Ok(())
    }
}

fn finish_epoch(
    net: &Network,
    data: &DatasetSplit,
    cfg: &FfaConfig,
    epoch: usize,
    layer_acc: &[(f64, f64, f64)],
    batches: usize,
) -> Result<EpochRecord> {
    let b = batches as f64;
    let layers: Vec<LayerGoodness> = layer_acc
        .iter()
        .enumerate()
        .map(|(idx, &(p, n, l))| LayerGoodness {
            layer_idx: idx,
            g_pos_mean: p / b,
            g_neg_mean: n / b,
            local_loss: l / b,
        })
        .collect();
    let train_loss = layers.iter().map(|l| l.local_loss).sum();

    let final_epoch = epoch == total_epochs(net, cfg);
    let eval_now = epoch % cfg.eval_every == 0 || final_epoch;
    let (test_error, test_auc) = if eval_now && !data.test.is_empty() {
        let (inputs, labels) = stack_samples(&data.test);
        let (preds, scores) = predict_goodness_batch(net, &inputs, cfg.goodness_layers)?;
        (
            Some(error_rate(&preds, &labels)?),
            roc_auc_report(&scores, &labels).ok(),
        )
    } else {
        (None, None)
    };
    let train_eval = match cfg.train_error_every {
        0 => final_epoch,
        k => epoch % k == 0 || final_epoch,
    };
    let (train_error, train_auc) = if train_eval {
        let (inputs, labels) = stack_samples(&data.train);
        let (preds, scores) = predict_goodness_batch(net, &inputs, cfg.goodness_layers)?;
        (
            Some(error_rate(&preds, &labels)?),
            roc_auc_report(&scores, &labels).ok(),
        )
    } else {
        (None, None)
    };

    Ok(EpochRecord {
        epoch,
        train_loss,
        train_error,
        train_auc,
        test_error,
        test_auc,
        layers,
    })
}

fn total_epochs(net: &Network, cfg: &FfaConfig) -> usize {
    match cfg.schedule {
        FfaSchedule::Streaming => cfg.epochs,
        FfaSchedule::Greedy => cfg.epochs * net.hidden.len(),
    }
}

fn should_stop(cfg: &FfaConfig, record: &EpochRecord) -> bool {
    matches!(
        (cfg.early_stop_test_error, record.test_error),
        (Some(limit), Some(err)) if err <= limit
    )
}

fn save_ffa_checkpoint(
    net: &Network,
    data: &DatasetSplit,
    cfg: &FfaConfig,
    state: &FfaState,
) -> Result<()> {
    if let Some(path) = &cfg.checkpoint_path {
        Checkpoint {
            net: net.clone(),
            optimizer: state.adams.clone(),
            epoch: state.completed_epochs,
            mode: "ffa".into(),
            seed: cfg.seed,
            class_names: data.class_names.clone(),
            extra: serde_json::Value::Null,
        }
        .save(path)?;
    }
    Ok(())
}

/// Goodness-vote prediction for a batch of raw rows: overlay each
/// candidate label, run the hidden stack in eval mode, and sum goodness
/// over the selected layers. Scores are normalized to sum 1 per row so
/// they can serve as a probability-like score matrix; the argmax breaks
/// ties toward the smallest label index.
pub fn predict_goodness_batch(
    net: &Network,
    raw: &Matrix,
    layers: GoodnessLayers,
) -> Result<(Vec<usize>, Matrix)> {
    let n = net.class_count;
    let b = raw.rows();
    let mut scores = Matrix::zeros(b, n);
    for candidate in 0..n {
        let overlaid = crate::data::overlay_label(raw, candidate, n)?;
        let acts = hidden_activations(net, &overlaid)?;
        let start = match layers {
            GoodnessLayers::All => 0,
            GoodnessLayers::SkipFirst => 1.min(acts.len() - 1),
        };
        for layer in &acts[start..] {
            for (row, g) in layer_goodness(layer).into_iter().enumerate() {
                scores.set(row, candidate, scores.get(row, candidate) + g);
            }
        }
    }
    let mut labels = Vec::with_capacity(b);
    for i in 0..b {
        let row_sum: f64 = scores.row(i).iter().sum();
        if row_sum > 0.0 {
            for v in scores.row_mut(i).iter_mut() {
                *v /= row_sum;
            }
        } else {
            let uniform = 1.0 / n as f64;
            for v in scores.row_mut(i).iter_mut() {
                *v = uniform;
            }
        }
        labels.push(argmax(scores.row(i)));
    }
    Ok((labels, scores))
}

/// Single-sample convenience wrapper around the batch vote.
pub fn predict_goodness(
    net: &Network,
    x: &Matrix,
    layers: GoodnessLayers,
) -> Result<(usize, Vec<f64>)> {
    let (labels, scores) = predict_goodness_batch(net, x, layers)?;
    Ok((labels[0], scores.row(0).to_vec()))
}

/// Mean goodness gap (g_pos - g_neg) per hidden layer on overlay batches
/// built from `samples`. Used to audit that training separated positive
/// from negative data on held-out samples.
pub fn goodness_separation(
    net: &Network,
    samples: &[Sample],
    class_count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let batch = make_overlay_batch(samples, class_count, rng)?;
    let pos = hidden_activations(net, &batch.positive)?;
    let neg = hidden_activations(net, &batch.negative)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(pos
        .iter()
        .zip(&neg)
        .map(|(p, n)| mean(&layer_goodness(p)) - mean(&layer_goodness(n)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goodness_values() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.5, -2.0, 3.0]])
            .unwrap();
        let g = layer_goodness(&m);
        assert_eq!(g, vec![0.0, 3.0, 13.25]);
    }

    #[test]
    fn positive_probability_points() {
        assert_eq!(positive_probability(5.0, 5.0), 0.5);
        assert!((positive_probability(7.0, 5.0) - 0.8807970779778823).abs() < 1e-15);
        assert!(positive_probability(0.0, 50.0) < 1e-15);
    }

    #[test]
    fn local_loss_examples() {
        let theta = 4.0;
        let l = ffa_local_loss(&[theta], &[theta], theta).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let l = ffa_local_loss(&[theta + 30.0], &[theta - 30.0], theta).unwrap();
        assert!(l < 1e-12);

        let l = ffa_local_loss(&[theta + 1.0], &[theta + 1.0], theta).unwrap();
        assert!((l - (0.31326168751822286 + 1.3132616875182228)).abs() < 1e-9);
    }

    #[test]
    fn local_loss_matches_cross_entropy_form() {
        let mut rng = SeededRng::new(3);
        for _ in 0..200 {
            let theta = 5.0;
            let g_pos: Vec<f64> = (0..6).map(|_| theta + rng.next_normal() * 3.0).collect();
            let g_neg: Vec<f64> = (0..6).map(|_| theta + rng.next_normal() * 3.0).collect();
            let loss = ffa_local_loss(&g_pos, &g_neg, theta).unwrap();
            let ce: f64 = g_pos
                .iter()
                .zip(&g_neg)
                .map(|(&p, &n)| {
                    -positive_probability(p, theta).ln()
                        - (1.0 - positive_probability(n, theta)).ln()
                })
                .sum::<f64>()
                / g_pos.len() as f64;
            assert!((loss - ce).abs() < 1e-9, "{loss} vs {ce}");
        }
    }

    #[test]
    fn eq1_consistency_through_goodness() {
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            let y = Matrix::from_vec(1, 8, (0..8).map(|_| rng.next_normal()).collect()).unwrap();
            let g = layer_goodness(&y)[0];
            let direct = logistic(y.data().iter().map(|v| v * v).sum::<f64>() - 6.0);
            assert!((positive_probability(g, 6.0) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_direction_cases() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let n = normalize_direction(&m);
        assert!((n.get(0, 0) - 0.6).abs() < 1e-9);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-9);
        assert_eq!(n.row(1), &[0.0, 0.0]);
        let norm: f64 = n.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    fn toy_pair(rng: &mut SeededRng, b: usize, dim: usize) -> (Matrix, Matrix) {
        // Positive rows have structure (large first component), negative
        // rows are small noise: separable by a single layer.
        let pos = Matrix::from_vec(
            b,
            dim,
            (0..b * dim)
                .map(|i| if i % dim == 0 { 2.0 } else { 0.3 * rng.next_normal() })
                .collect(),
        )
        .unwrap();
        let neg = Matrix::from_vec(
            b,
            dim,
            (0..b * dim).map(|_| 0.3 * rng.next_normal()).collect(),
        )
        .unwrap();
        (pos, neg)
    }

    #[test]
    fn layer_step_separates_fixed_toy_batch() {
        let mut rng = SeededRng::new(8);
        let (pos, neg) = toy_pair(&mut rng, 16, 6);
        let mut net = Network::with_dims(&[6, 4], 2, 1).unwrap();
        let mut adam = AdamState::new(&adam_lens(&net.hidden[0]), 1e-2);
        let theta = 4.0;
        let first = ffa_layer_step(&mut net.hidden[0], 0, &pos, &neg, theta, &mut adam).unwrap();
        let gap0 = first.record.g_pos_mean - first.record.g_neg_mean;
        let mut last_gap = gap0;
        for _ in 0..200 {
            let step =
                ffa_layer_step(&mut net.hidden[0], 0, &pos, &neg, theta, &mut adam).unwrap();
            last_gap = step.record.g_pos_mean - step.record.g_neg_mean;
        }
        assert!(last_gap > 0.0, "gap {last_gap}");
        assert!(last_gap > gap0, "{gap0} -> {last_gap}");
    }

    #[test]
    fn layer_step_touches_only_its_layer() {
        let mut rng = SeededRng::new(4);
        let (pos, neg) = toy_pair(&mut rng, 8, 6);
        let mut net = Network::with_dims(&[6, 4, 3], 2, 2).unwrap();
        let before_l1 = net.hidden[1].clone();
        let before_head = net.head.clone();
        let mut adam = AdamState::new(&adam_lens(&net.hidden[0]), 1e-3);
        ffa_layer_step(&mut net.hidden[0], 0, &pos, &neg, 4.0, &mut adam).unwrap();
        assert_eq!(net.hidden[1], before_l1);
        assert_eq!(net.head, before_head);
    }

    #[test]
    fn vote_scores_are_nonnegative_and_length_n() {
        let net = Network::with_dims(&[10, 6, 5], 4, 3).unwrap();
        let mut rng = SeededRng::new(6);
        let x = Matrix::from_vec(1, 10, (0..10).map(|_| rng.next_f64()).collect()).unwrap();
        let (label, scores) = predict_goodness(&net, &x, GoodnessLayers::All).unwrap();
        assert!(label < 4);
        assert_eq!(scores.len(), 4);
        assert!(scores.iter().all(|&s| s >= 0.0));
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = FfaConfig::new(0, 4, 0);
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 4;
        cfg.theta = Some(0.0);
        assert!(cfg.validate().is_err());
    }
}
