use crate::math::{Matrix, SeededRng, STREAM_FIXTURE};
use crate::network::INPUT_DIM;

use super::Sample;

/// Where the informative components of a synthetic sample start. Safely
/// past the overlay region for any realistic class count.
pub const EMBED_OFFSET: usize = 64;
/// Width of the informative block.
pub const EMBED_DIM: usize = 30;

/// Parameters for the synthetic Gaussian-blob fixture. Each class is a
/// blob in a 30-dim subspace embedded into the full 12288-dim input
/// layout; all other components are zero. Blob centers sit in
/// [0.2, 0.8] and samples are clamped to [0, 1], so fixtures obey the
/// same range invariant as real image data.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub classes: usize,
    pub samples: usize,
    pub noise_std: f64,
    /// Fraction of samples whose label is flipped to a uniformly chosen
    /// wrong class.
    pub label_noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(classes: usize, samples: usize, seed: u64) -> Self {
        BlobSpec {
            classes,
            samples,
            noise_std: 0.04,
            label_noise: 0.0,
            seed,
        }
    }
}

/// Generates the fixture. Labels cycle through the classes so counts are
/// balanced; [`super::split_8_2`] shuffles afterwards. Returns samples
/// plus synthetic class names (`class_0`, ...).
pub fn make_blobs(spec: &BlobSpec) -> (Vec<Sample>, Vec<String>) {
    let mut rng = SeededRng::derive_stream(spec.seed, STREAM_FIXTURE);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..EMBED_DIM).map(|_| 0.2 + 0.6 * rng.next_f64()).collect())
        .collect();

    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let true_label = i % spec.classes;
        let center = &centers[true_label];
        let mut data = vec![0.0; INPUT_DIM];
        for (k, c) in center.iter().enumerate() {
            let v = c + spec.noise_std * rng.next_normal();
            data[EMBED_OFFSET + k] = v.clamp(0.0, 1.0);
        }
        let label = if spec.label_noise > 0.0 && rng.next_f64() < spec.label_noise {
            let wrong = rng.next_below(spec.classes as u64 - 1) as usize;
            if wrong >= true_label {
                wrong + 1
            } else {
                wrong
            }
        } else {
            true_label
        };
        samples.push(Sample {
            pixels: Matrix::from_vec(1, INPUT_DIM, data).expect("fixture width"),
            label,
        });
    }
    let names = (0..spec.classes).map(|c| format!("class_{c}")).collect();
    (samples, names)
}
