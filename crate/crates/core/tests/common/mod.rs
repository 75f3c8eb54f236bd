//! Shared helpers for integration tests: finite-difference gradient
//! oracles and synthetic fixtures.
#![allow(dead_code)]

use ff_trainer::data::{make_blobs, split_8_2, BlobSpec, DatasetSplit};
use ff_trainer::math::{Matrix, SeededRng};
use ff_trainer::network::{DenseLayer, Mode, Network};
use ff_trainer::train_bp::{backward, mse_loss, one_hot, Gradients, TrainScope};
use ff_trainer::train_ffa::{ffa_layer_gradients, ffa_local_loss, layer_goodness};

pub const FD_H: f64 = 1e-6;

/// Relative error with a floor so near-zero gradients compare on an
/// absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Parameter tensors of a network in optimizer order: per hidden layer
/// (weights, bias, gamma, beta), then head weights, head bias.
pub fn net_tensor_count(net: &Network) -> usize {
    4 * net.hidden.len() + 2
}

pub fn net_tensor_len(net: &Network, t: usize) -> usize {
    let nl = net.hidden.len();
    if t < 4 * nl {
        let l = &net.hidden[t / 4];
        match t % 4 {
            0 => l.weights.data().len(),
            1 => l.bias.len(),
            2 => l.bn_gamma.len(),
            _ => l.bn_beta.len(),
        }
    } else if t == 4 * nl {
        net.head.weights.data().len()
    } else {
        net.head.bias.len()
    }
}

pub fn perturb_net(net: &mut Network, t: usize, i: usize, delta: f64) {
    let nl = net.hidden.len();
    if t < 4 * nl {
        let l = &mut net.hidden[t / 4];
        match t % 4 {
            0 => l.weights.data_mut()[i] += delta,
            1 => l.bias[i] += delta,
            2 => l.bn_gamma[i] += delta,
            _ => l.bn_beta[i] += delta,
        }
    } else if t == 4 * nl {
        net.head.weights.data_mut()[i] += delta;
    } else {
        net.head.bias[i] += delta;
    }
}

fn flat_grads(g: &Gradients) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in &g.layers {
        out.push(l.d_weights.data().to_vec());
        out.push(l.d_bias.clone());
        out.push(l.d_gamma.clone());
        out.push(l.d_beta.clone());
    }
    out.push(g.d_head_weights.data().to_vec());
    out.push(g.d_head_bias.clone());
    out
}

fn bp_loss(net: &Network, batch: &Matrix, targets: &Matrix) -> f64 {
    let mut n = net.clone();
    let cache = n.forward(batch, Mode::Train).unwrap();
    mse_loss(&cache.probs, targets).unwrap()
}

/// Max relative error between the analytic backward pass and central
/// finite differences over every parameter of the network.
pub fn bp_fd_max_rel_err(net: &Network, batch: &Matrix, labels: &[usize]) -> f64 {
    let targets = one_hot(labels, net.class_count);
    let mut probe = net.clone();
    let cache = probe.forward(batch, Mode::Train).unwrap();
    let analytic = flat_grads(&backward(net, &cache, &targets, TrainScope::Full).unwrap());

    let mut worst = 0.0f64;
    for t in 0..net_tensor_count(net) {
        for i in 0..net_tensor_len(net, t) {
            let mut plus = net.clone();
            perturb_net(&mut plus, t, i, FD_H);
            let mut minus = net.clone();
            perturb_net(&mut minus, t, i, -FD_H);
            let fd = (bp_loss(&plus, batch, &targets) - bp_loss(&minus, batch, &targets))
                / (2.0 * FD_H);
            worst = worst.max(rel_err(analytic[t][i], fd));
        }
    }
    worst
}

fn ffa_loss(layer: &DenseLayer, x_pos: &Matrix, x_neg: &Matrix, theta: f64) -> f64 {
    let mut l = layer.clone();
    let pos = l.forward_train(x_pos).unwrap();
    let neg = l.forward_train(x_neg).unwrap();
    ffa_local_loss(
        &layer_goodness(&pos.post_act),
        &layer_goodness(&neg.post_act),
        theta,
    )
    .unwrap()
}

fn perturb_layer(layer: &mut DenseLayer, t: usize, i: usize, delta: f64) {
    match t {
        0 => layer.weights.data_mut()[i] += delta,
        1 => layer.bias[i] += delta,
        2 => layer.bn_gamma[i] += delta,
        _ => layer.bn_beta[i] += delta,
    }
}

/// Max relative error between the local-objective gradients and central
/// finite differences over every parameter of one layer.
pub fn ffa_fd_max_rel_err(layer: &DenseLayer, x_pos: &Matrix, x_neg: &Matrix, theta: f64) -> f64 {
    let mut probe = layer.clone();
    let (grads, _) = ffa_layer_gradients(&mut probe, 0, x_pos, x_neg, theta).unwrap();
    let analytic = [
        grads.d_weights.data().to_vec(),
        grads.d_bias.clone(),
        grads.d_gamma.clone(),
        grads.d_beta.clone(),
    ];
    let lens = [
        layer.weights.data().len(),
        layer.bias.len(),
        layer.bn_gamma.len(),
        layer.bn_beta.len(),
    ];
    let mut worst = 0.0f64;
    for t in 0..4 {
        for i in 0..lens[t] {
            let mut plus = layer.clone();
            perturb_layer(&mut plus, t, i, FD_H);
            let mut minus = layer.clone();
            perturb_layer(&mut minus, t, i, -FD_H);
            let fd = (ffa_loss(&plus, x_pos, x_neg, theta)
                - ffa_loss(&minus, x_pos, x_neg, theta))
                / (2.0 * FD_H);
            worst = worst.max(rel_err(analytic[t][i], fd));
        }
    }
    worst
}

pub fn random_batch(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.next_normal()).collect(),
    )
    .unwrap()
}

pub fn random_labels(count: usize, classes: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..count)
        .map(|_| rng.next_below(classes as u64) as usize)
        .collect()
}

/// The desk-scale blob fixture: `classes` Gaussian blobs embedded in the
/// full input layout, split 8:2 with the same seed.
pub fn blob_fixture(classes: usize, samples: usize, seed: u64, label_noise: f64) -> DatasetSplit {
    let mut spec = BlobSpec::new(classes, samples, seed);
    spec.label_noise = label_noise;
    let (all, names) = make_blobs(&spec);
    let parts = split_8_2(all, seed).unwrap();
    DatasetSplit {
        train: parts.train,
        test: parts.test,
        class_count: classes,
        class_names: names,
    }
}
