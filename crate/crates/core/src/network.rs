//! The experiment architecture: a stack of dense hidden layers with batch
//! normalization and ReLU over a flattened 64x64x3 input, topped by a
//! softmax classification head.
//!
//! Layer order is dense -> batch norm -> ReLU. Batch norm uses batch
//! statistics in train mode (updating running statistics with momentum
//! 0.9) and running statistics in eval mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{relu, softmax_rows, Matrix, SeededRng};

pub const INPUT_DIM: usize = 64 * 64 * 3;
pub const HIDDEN_WIDTHS: [usize; 3] = [784, 500, 500];
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// How inputs are prepared before entering the network. Recorded on the
/// network (and in checkpoints) so training and inference always agree.
///
/// `ZeroFirstN` blanks the label-overlay region; used by the hybrid
/// pipeline so the classifier never sees label pixels. `TrueLabelOverlay`
/// embeds the ground-truth label at train time; inference falls back to
/// zeroing since test labels are unavailable (a deliberately leaky mode,
/// kept for comparison runs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPolicy {
    Plain,
    ZeroFirstN,
    TrueLabelOverlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What each hidden layer feeds to its successor (and to the head).
/// `L2Direction` divides every row by its L2 norm so goodness magnitude
/// cannot leak downstream; forward-forward training turns it on (its
/// default) and records it here so later forwards, the backprop stage of
/// the hybrid, and checkpointed inference all see the distribution the
/// layers were trained on. Plain backprop networks use `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterLayerNorm {
    #[default]
    L2Direction,
    None,
}

/// Dense layer with per-feature batch norm state. Weights are stored
/// input x output so a batch forward is one row-major matmul.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
}

/// Everything one hidden layer's backward pass needs from its forward.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Matrix,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub x_hat: Matrix,
    pub post_bn: Matrix,
    pub post_act: Matrix,
}

/// Gradients for one hidden layer, shapes mirroring the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
    /// Present only when the caller asked for gradient flow into the input.
    pub d_input: Option<Matrix>,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        // He-normal: std = sqrt(2 / fan_in), biases zero, BN at identity.
        let std = (2.0 / in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.next_normal() * std)
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(in_dim, out_dim, data).expect("init shape"),
            bias: vec![0.0; out_dim],
            bn_gamma: vec![1.0; out_dim],
            bn_beta: vec![0.0; out_dim],
            bn_running_mean: vec![0.0; out_dim],
            bn_running_var: vec![1.0; out_dim],
        }
    }

    /// Train-mode forward: dense -> BN(batch stats) -> ReLU. Updates the
    /// running statistics. Requires batch size >= 2.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<LayerCache> {
        if x.rows() < 2 {
            return Err(Error::Shape(format!(
                "train-mode forward needs batch size >= 2, got {}",
                x.rows()
            )));
        }
        let z = x.matmul(&self.weights)?.add_row_vector(&self.bias)?;
        let b = z.rows() as f64;
        let d = z.cols();

        let mut mean = z.col_sums();
        for m in &mut mean {
            *m /= b;
        }
        let mut var = vec![0.0; d];
        for i in 0..z.rows() {
            for (j, v) in z.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        for v in &mut var {
            *v /= b;
        }

        for j in 0..d {
            self.bn_running_mean[j] = BN_MOMENTUM * self.bn_running_mean[j]
                + (1.0 - BN_MOMENTUM) * mean[j];
            self.bn_running_var[j] =
                BN_MOMENTUM * self.bn_running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
        }

        let mut x_hat = z;
        for i in 0..x_hat.rows() {
            for (j, v) in x_hat.row_mut(i).iter_mut().enumerate() {
                *v = (*v - mean[j]) / (var[j] + BN_EPS).sqrt();
            }
        }
        let mut post_bn = x_hat.clone();
        for i in 0..post_bn.rows() {
            for (j, v) in post_bn.row_mut(i).iter_mut().enumerate() {
                *v = self.bn_gamma[j] * *v + self.bn_beta[j];
            }
        }
        let post_act = relu(&post_bn);
        Ok(LayerCache {
            input: x.clone(),
            batch_mean: mean,
            batch_var: var,
            x_hat,
            post_bn,
            post_act,
        })
    }

    /// Eval-mode forward using running statistics. Pure.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weights)?.add_row_vector(&self.bias)?;
        for i in 0..z.rows() {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                let x_hat =
                    (*v - self.bn_running_mean[j]) / (self.bn_running_var[j] + BN_EPS).sqrt();
                *v = self.bn_gamma[j] * x_hat + self.bn_beta[j];
            }
        }
        Ok(relu(&z))
    }

    /// Backward through ReLU -> BN(batch statistics) -> dense given the
    /// gradient w.r.t. this layer's post-activation output.
    pub fn backward(
        &self,
        cache: &LayerCache,
        d_out: &Matrix,
        want_d_input: bool,
    ) -> Result<LayerGrads> {
        let b_rows = cache.post_act.rows();
        let d = cache.post_act.cols();
        if d_out.rows() != b_rows || d_out.cols() != d {
            return Err(Error::Shape(format!(
                "layer backward: grad {}x{} vs activations {}x{}",
                d_out.rows(),
                d_out.cols(),
                b_rows,
                d
            )));
        }
        // ReLU mask on the BN output.
        let mut d_post_bn = d_out.clone();
        for i in 0..b_rows {
            let bn_row = cache.post_bn.row(i);
            for (j, g) in d_post_bn.row_mut(i).iter_mut().enumerate() {
                if bn_row[j] <= 0.0 {
                    *g = 0.0;
                }
            }
        }

        let mut d_gamma = vec![0.0; d];
        let mut d_beta = vec![0.0; d];
        for i in 0..b_rows {
            let xh = cache.x_hat.row(i);
            for (j, &g) in d_post_bn.row(i).iter().enumerate() {
                d_gamma[j] += g * xh[j];
                d_beta[j] += g;
            }
        }

        // BN backward through the batch statistics:
        // dz = inv_std/B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for i in 0..b_rows {
            let xh = cache.x_hat.row(i);
            for (j, &g) in d_post_bn.row(i).iter().enumerate() {
                let dxh = g * self.bn_gamma[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh[j];
            }
        }
        let bf = b_rows as f64;
        let mut d_z = d_post_bn;
        for i in 0..b_rows {
            let xh = cache.x_hat.row(i);
            for (j, g) in d_z.row_mut(i).iter_mut().enumerate() {
                let inv_std = 1.0 / (cache.batch_var[j] + BN_EPS).sqrt();
                let dxh = *g * self.bn_gamma[j];
                *g = inv_std / bf * (bf * dxh - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]);
            }
        }

        let d_weights = cache.input.transpose().matmul(&d_z)?;
        let d_bias = d_z.col_sums();
        let d_input = if want_d_input {
            Some(d_z.matmul(&self.weights.transpose())?)
        } else {
            None
        };
        Ok(LayerGrads {
            d_weights,
            d_bias,
            d_gamma,
            d_beta,
            d_input,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl SoftmaxHead {
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let logits = x.matmul(&self.weights)?.add_row_vector(&self.bias)?;
        let probs = softmax_rows(&logits);
        Ok((logits, probs))
    }
}

/// Full forward trace of one batch; everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub logits: Matrix,
    pub probs: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub hidden: Vec<DenseLayer>,
    pub head: SoftmaxHead,
    pub class_count: usize,
    pub input_policy: InputPolicy,
    pub hidden_norm: InterLayerNorm,
}

impl Network {
    /// The experiment architecture: 12288 -> 784 -> 500 -> 500 -> n.
    pub fn standard(class_count: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![INPUT_DIM];
        dims.extend_from_slice(&HIDDEN_WIDTHS);
        Network::with_dims(&dims, class_count, seed)
    }

    /// General constructor; toy dimensions are used heavily in tests.
    /// `dims` is the input width followed by the hidden widths.
    pub fn with_dims(dims: &[usize], class_count: usize, seed: u64) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        if dims.len() < 2 {
            return Err(Error::Config("need at least one hidden layer".into()));
        }
        let mut rng = SeededRng::derive_stream(seed, crate::math::STREAM_INIT);
        let hidden = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], &mut rng))
            .collect::<Vec<_>>();
        let head = SoftmaxHead {
            weights: {
                let fan_in = *dims.last().unwrap();
                let std = (2.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * class_count)
                    .map(|_| rng.next_normal() * std)
                    .collect();
                Matrix::from_vec(fan_in, class_count, data).expect("head shape")
            },
            bias: vec![0.0; class_count],
        };
        Ok(Network {
            hidden,
            head,
            class_count,
            input_policy: InputPolicy::Plain,
            hidden_norm: InterLayerNorm::None,
        })
    }

    /// Applies the recorded inter-layer normalization to one layer's
    /// post-activation output.
    pub fn norm_rows(&self, y: &Matrix) -> Matrix {
        match self.hidden_norm {
            InterLayerNorm::L2Direction => crate::math::normalize_direction(y),
            InterLayerNorm::None => y.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].in_dim()
    }

    /// Input width followed by hidden widths; the dimension chain.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.hidden.iter().map(|l| l.out_dim()));
        d
    }

    /// Validates that consecutive layers chain and the head matches.
    pub fn validate_chain(&self) -> Result<()> {
        for (i, pair) in self.hidden.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} out {} != layer {} in {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let last = self.hidden.last().unwrap().out_dim();
        if self.head.weights.rows() != last || self.head.weights.cols() != self.class_count {
            return Err(Error::Shape(format!(
                "head {}x{} does not match hidden out {} / classes {}",
                self.head.weights.rows(),
                self.head.weights.cols(),
                last,
                self.class_count
            )));
        }
        Ok(())
    }

    /// Forward a batch. Train mode mutates BN running statistics and
    /// requires batch size >= 2; eval mode is pure.
    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<ForwardCache> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} != network input dim {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        match mode {
            Mode::Train => {
                let mut layers = Vec::with_capacity(self.hidden.len());
                let mut x = batch.clone();
                for i in 0..self.hidden.len() {
                    let cache = self.hidden[i].forward_train(&x)?;
                    x = self.norm_rows(&cache.post_act);
                    layers.push(cache);
                }
                let (logits, probs) = self.head.forward(&x)?;
                Ok(ForwardCache {
                    layers,
                    logits,
                    probs,
                })
            }
            Mode::Eval => {
                let cache = self.forward_eval(batch)?;
                Ok(cache)
            }
        }
    }

    /// Eval-mode forward on a shared reference; a pure function of the
    /// parameters, running stats and input. The returned cache carries
    /// activations but no batch statistics (they are not used in eval).
    pub fn forward_eval(&self, batch: &Matrix) -> Result<ForwardCache> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} != network input dim {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut x = batch.clone();
        for layer in &self.hidden {
            let out = layer.forward_eval(&x)?;
            layers.push(LayerCache {
                input: x,
                batch_mean: layer.bn_running_mean.clone(),
                batch_var: layer.bn_running_var.clone(),
                x_hat: Matrix::zeros(0, 0),
                post_bn: out.clone(),
                post_act: out.clone(),
            });
            x = self.norm_rows(&out);
        }
        let (logits, probs) = self.head.forward(&x)?;
        Ok(ForwardCache {
            layers,
            logits,
            probs,
        })
    }

    /// Eval-mode class probabilities for a batch.
    pub fn predict_probs(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_eval(batch)?.probs)
    }
}
