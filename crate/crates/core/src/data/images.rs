use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const IMG_SIDE: usize = 64;

/// RGB image with f64 channel values on the 0..255 scale, row-major,
/// channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize) -> Self {
        ImageF {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }
}

/// Pixel normalization scheme applied when flattening. `Div255` is the
/// default; `MinMax` rescales each image to span [0, 1] exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PixelNorm {
    #[default]
    Div255,
    MinMax,
}

/// Reads `labels_file` (CSV with header `filename,label`) and decodes
/// each referenced image under `images_dir`, in CSV row order. Label
/// strings map to indices by first appearance; the mapping is returned
/// and also written to `classes.json` beside the labels file.
pub fn load_dataset(
    images_dir: &Path,
    labels_file: &Path,
) -> Result<(Vec<(ImageF, usize)>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(labels_file)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", labels_file.display())))?;

    let mut class_names: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| Error::Data(format!("labels row {}: {e}", row_idx + 1)))?;
        if record.len() != 2 {
            return Err(Error::Data(format!(
                "labels row {}: expected 2 columns (filename,label), got {}",
                row_idx + 1,
                record.len()
            )));
        }
        let filename = record.get(0).unwrap().trim();
        let label_str = record.get(1).unwrap().trim();
        let path = images_dir.join(filename);
        if !path.exists() {
            return Err(Error::Data(format!(
                "labels row {}: image file {} not found",
                row_idx + 1,
                path.display()
            )));
        }
        let img = decode_image(&path)?;
        let label = match class_names.iter().position(|c| c == label_str) {
            Some(i) => i,
            None => {
                class_names.push(label_str.to_string());
                class_names.len() - 1
            }
        };
        out.push((img, label));
    }
    if out.is_empty() {
        eprintln!(
            "warning: {} contains no data rows; dataset is empty",
            labels_file.display()
        );
    }

    if let Some(root) = labels_file.parent() {
        let sidecar = root.join("classes.json");
        let json = serde_json::to_string_pretty(&class_names).expect("string list");
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok((out, class_names))
}

fn decode_image(path: &Path) -> Result<ImageF> {
    let dynamic = image::open(path)
        .map_err(|e| Error::Data(format!("cannot decode image {}: {e}", path.display())))?;
    if dynamic.color().channel_count() < 3 {
        eprintln!(
            "warning: {} is grayscale; promoting to 3 identical channels",
            path.display()
        );
    }
    let rgb = dynamic.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = ImageF::new(w, h);
    for (i, px) in rgb.pixels().enumerate() {
        img.data[i * 3] = px.0[0] as f64;
        img.data[i * 3 + 1] = px.0[1] as f64;
        img.data[i * 3 + 2] = px.0[2] as f64;
    }
    Ok(img)
}

/// Bilinear resample onto a 64x64 grid using the pixel-center convention
/// (source coordinate = (dst + 0.5) * scale - 0.5, clamped at the edges).
/// A 64x64 input passes through unchanged.
pub fn downsample_to_64(src: &ImageF) -> Result<ImageF> {
    if src.width == 0 || src.height == 0 {
        return Err(Error::Data("cannot resample an empty image".into()));
    }
    let mut dst = ImageF::new(IMG_SIDE, IMG_SIDE);
    let sx = src.width as f64 / IMG_SIDE as f64;
    let sy = src.height as f64 / IMG_SIDE as f64;
    for dy in 0..IMG_SIDE {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src.height - 1);
        let wy = fy - y0 as f64;
        for dx in 0..IMG_SIDE {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src.width - 1);
            let wx = fx - x0 as f64;
            for c in 0..3 {
                let top = src.get(x0, y0, c) * (1.0 - wx) + src.get(x1, y0, c) * wx;
                let bot = src.get(x0, y1, c) * (1.0 - wx) + src.get(x1, y1, c) * wx;
                dst.set(dx, dy, c, top * (1.0 - wy) + bot * wy);
            }
        }
    }
    Ok(dst)
}

/// Flattens a 64x64x3 image into a 1 x 12288 row vector in [0, 1].
///
/// Layout is fixed: row-major pixels with RGB interleaved, so pixel (0,0)
/// occupies components 0..2. Overlay positions depend on this order.
pub fn flatten_normalize(img: &ImageF, norm: PixelNorm) -> Result<Matrix> {
    if img.width != IMG_SIDE || img.height != IMG_SIDE {
        return Err(Error::Data(format!(
            "flatten expects a {IMG_SIDE}x{IMG_SIDE} image, got {}x{}",
            img.width, img.height
        )));
    }
    let data: Vec<f64> = match norm {
        PixelNorm::Div255 => img.data.iter().map(|v| v / 255.0).collect(),
        PixelNorm::MinMax => {
            let min = img.data.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = img.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            if span == 0.0 {
                vec![0.0; img.data.len()]
            } else {
                img.data.iter().map(|v| (v - min) / span).collect()
            }
        }
    };
    Matrix::from_vec(1, IMG_SIDE * IMG_SIDE * 3, data)
}

/// Exact inverse of the flatten layout: rebuilds a 64x64x3 image whose
/// channel values are the flat vector's components verbatim (still on the
/// normalized [0, 1] scale).
pub fn unflatten(flat: &Matrix) -> Result<ImageF> {
    if flat.rows() != 1 || flat.cols() != IMG_SIDE * IMG_SIDE * 3 {
        return Err(Error::Shape(format!(
            "unflatten expects 1x{}, got {}x{}",
            IMG_SIDE * IMG_SIDE * 3,
            flat.rows(),
            flat.cols()
        )));
    }
    Ok(ImageF {
        width: IMG_SIDE,
        height: IMG_SIDE,
        data: flat.data().to_vec(),
    })
}

/// Writes an image whose data is on the [0, 1] scale as an 8-bit PNG.
pub fn write_image_png(img: &ImageF, path: &Path) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let px = [
                (img.get(x, y, 0) * 255.0).round().clamp(0.0, 255.0) as u8,
                (img.get(x, y, 1) * 255.0).round().clamp(0.0, 255.0) as u8,
                (img.get(x, y, 2) * 255.0).round().clamp(0.0, 255.0) as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}
