//! Dataset ingestion and synthesis: normalized flattened samples, seeded
//! 8:2 splits, and the positive/negative label-overlay batches that feed
//! forward-forward training.

mod images;
mod synthetic;

pub use images::{
    downsample_to_64, flatten_normalize, load_dataset, unflatten, write_image_png, ImageF,
    PixelNorm, IMG_SIDE,
};
pub use synthetic::{make_blobs, BlobSpec, EMBED_DIM, EMBED_OFFSET};

use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

/// One normalized, flattened image with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// 1 x 12288 row vector, every component in [0, 1].
    pub pixels: Matrix,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

impl DatasetSplit {
    /// Stacks a slice of samples into a B x input_dim matrix plus labels.
    pub fn stack(samples: &[Sample]) -> (Matrix, Vec<usize>) {
        stack_samples(samples)
    }
}

pub fn stack_samples(samples: &[Sample]) -> (Matrix, Vec<usize>) {
    let cols = samples.first().map_or(0, |s| s.pixels.cols());
    let mut data = Vec::with_capacity(samples.len() * cols);
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        data.extend_from_slice(s.pixels.data());
        labels.push(s.label);
    }
    (
        Matrix::from_vec(samples.len(), cols, data).expect("uniform sample widths"),
        labels,
    )
}

/// Seeded uniform shuffle, first ceil(0.8 * N) samples to train, the rest
/// to test.
pub fn split_8_2(samples: Vec<Sample>, seed: u64) -> Result<DatasetSplitParts> {
    if samples.len() < 5 {
        return Err(Error::Data(format!(
            "need at least 5 samples to split 8:2, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let train_n = (4 * n + 4) / 5; // ceil(0.8 n)
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derive_stream(seed, crate::math::STREAM_SPLIT).shuffle(&mut order);

    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(train_n);
    let mut test = Vec::with_capacity(n - train_n);
    for (pos, &idx) in order.iter().enumerate() {
        let s = slots[idx].take().expect("each index visited once");
        if pos < train_n {
            train.push(s);
        } else {
            test.push(s);
        }
    }
    Ok(DatasetSplitParts {
        train,
        test,
        order,
    })
}

/// Output of [`split_8_2`]; `order` is the shuffled index permutation so
/// callers can hash the exact membership.
pub struct DatasetSplitParts {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub order: Vec<usize>,
}

/// Copies `x` and replaces its first `n` components with the one-hot
/// encoding of `label`. Components at index >= n are untouched.
pub fn overlay_label(x: &Matrix, label: usize, n: usize) -> Result<Matrix> {
    if label >= n {
        return Err(Error::Data(format!("label {label} out of range for {n} classes")));
    }
    if n > x.cols() {
        return Err(Error::Data(format!(
            "{n} classes exceed input width {}",
            x.cols()
        )));
    }
    let mut out = x.clone();
    for row in 0..out.rows() {
        let r = out.row_mut(row);
        for (j, v) in r.iter_mut().enumerate().take(n) {
            *v = if j == label { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// Zeroes the first `n` components of every row (the neutral overlay used
/// at classification time).
pub fn zero_first_n(x: &Matrix, n: usize) -> Matrix {
    let mut out = x.clone();
    for row in 0..out.rows() {
        for v in out.row_mut(row).iter_mut().take(n) {
            *v = 0.0;
        }
    }
    out
}

/// Prepares a stacked batch for the classifier according to the
/// network's input policy. `TrueLabelOverlay` needs labels; without them
/// (inference time) it degrades to zeroing with a warning, since test
/// labels are not available to embed.
pub fn apply_input_policy(
    policy: crate::network::InputPolicy,
    batch: &Matrix,
    labels: Option<&[usize]>,
    n: usize,
) -> Result<Matrix> {
    use crate::network::InputPolicy;
    match policy {
        InputPolicy::Plain => Ok(batch.clone()),
        InputPolicy::ZeroFirstN => Ok(zero_first_n(batch, n)),
        InputPolicy::TrueLabelOverlay => match labels {
            Some(labels) => {
                let mut out = batch.clone();
                for (row, &label) in labels.iter().enumerate() {
                    if label >= n {
                        return Err(Error::Data(format!(
                            "label {label} out of range for {n} classes"
                        )));
                    }
                    for (j, v) in out.row_mut(row).iter_mut().enumerate().take(n) {
                        *v = if j == label { 1.0 } else { 0.0 };
                    }
                }
                Ok(out)
            }
            None => {
                eprintln!(
                    "warning: true-label overlay unavailable at inference; zeroing overlay region"
                );
                Ok(zero_first_n(batch, n))
            }
        },
    }
}

/// Paired positive/negative input matrices for one batch of samples.
#[derive(Debug, Clone)]
pub struct OverlayBatch {
    pub positive: Matrix,
    pub negative: Matrix,
    pub labels: Vec<usize>,
}

/// Builds positive rows with the true label overlaid and negative rows
/// with a wrong label drawn uniformly from the n-1 alternatives, fresh
/// per sample per call.
pub fn make_overlay_batch(
    samples: &[Sample],
    n: usize,
    rng: &mut SeededRng,
) -> Result<OverlayBatch> {
    if n < 2 {
        return Err(Error::Data(format!(
            "overlay needs at least 2 classes (no wrong label exists for n = {n})"
        )));
    }
    let (base, labels) = stack_samples(samples);
    let mut positive = base.clone();
    let mut negative = base;
    for (row, &label) in labels.iter().enumerate() {
        if label >= n {
            return Err(Error::Data(format!(
                "sample label {label} out of range for {n} classes"
            )));
        }
        let wrong = {
            let draw = rng.next_below(n as u64 - 1) as usize;
            if draw >= label {
                draw + 1
            } else {
                draw
            }
        };
        for (j, v) in positive.row_mut(row).iter_mut().enumerate().take(n) {
            *v = if j == label { 1.0 } else { 0.0 };
        }
        for (j, v) in negative.row_mut(row).iter_mut().enumerate().take(n) {
            *v = if j == wrong { 1.0 } else { 0.0 };
        }
    }
    Ok(OverlayBatch {
        positive,
        negative,
        labels,
    })
}
