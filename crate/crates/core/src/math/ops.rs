use super::Matrix;

/// 1 / (1 + e^-x). Saturates cleanly at the extremes.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Elementwise max(0, x).
pub fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Row-wise softmax with max subtraction for stability. Each output row
/// sums to 1 within 1e-12.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Divides each row by (its L2 norm + 1e-12); zero rows map to zero
/// rows. Strips goodness magnitude so only the direction passes between
/// forward-forward layers.
pub fn normalize_direction(y: &Matrix) -> Matrix {
    let mut out = y.clone();
    for i in 0..out.rows() {
        let norm: f64 = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let inv = 1.0 / (norm + 1e-12);
        for v in out.row_mut(i).iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Gradient of [`normalize_direction`] w.r.t. its input. `y` is the raw
/// (pre-normalization) matrix, `d_norm` the gradient w.r.t. the
/// normalized output. With s = ||row||, n = s + 1e-12:
///   dL/dy = g/n - y * (y . g) / (s * n^2)
/// The second term vanishes for zero rows (its numerator is 0).
pub fn normalize_direction_backward(y: &Matrix, d_norm: &Matrix) -> Matrix {
    let mut out = d_norm.clone();
    for i in 0..out.rows() {
        let row = y.row(i);
        let s: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n = s + 1e-12;
        let dot: f64 = row.iter().zip(out.row(i)).map(|(a, b)| a * b).sum();
        let coeff = if s > 0.0 { dot / (s * n * n) } else { 0.0 };
        for (j, g) in out.row_mut(i).iter_mut().enumerate() {
            *g = *g / n - row[j] * coeff;
        }
    }
    out
}
