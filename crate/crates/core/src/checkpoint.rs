//! Single-file, versioned, bit-exact checkpoint format.
//!
//! Layout:
//!   bytes 0..8   magic `FFSLCKPT`
//!   bytes 8..12  format version, u32 little-endian (currently 1)
//!   bytes 12..16 JSON header length, u32 little-endian
//!   header       UTF-8 JSON: dims, class names, dtype, epoch, mode,
//!                input policy, root seed, optimizer descriptors, and an
//!                optional free-form `extra` blob for audit data
//!   payload      raw little-endian f64 blobs, in order: per hidden layer
//!                weights, bias, bn_gamma, bn_beta, bn_running_mean,
//!                bn_running_var; then head weights, head bias; then for
//!                each optimizer state its `m` tensors followed by its
//!                `v` tensors.
//!
//! Loading validates magic, version, the dimension chain, and that the
//! payload length matches the header exactly; any mismatch rejects the
//! file without partial state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::network::{DenseLayer, InputPolicy, InterLayerNorm, Network, SoftmaxHead};
use crate::optim::AdamState;

const MAGIC: &[u8; 8] = b"FFSLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerDesc {
    lr: f64,
    t: u64,
    tensor_lens: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dims: Vec<usize>,
    class_count: usize,
    class_names: Vec<String>,
    dtype: String,
    epoch: usize,
    mode: String,
    input_policy: InputPolicy,
    hidden_norm: InterLayerNorm,
    seed: u64,
    optimizer: Vec<OptimizerDesc>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: Network,
    pub optimizer: Vec<AdamState>,
    pub epoch: usize,
    pub mode: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            dims: self.net.dims(),
            class_count: self.net.class_count,
            class_names: self.class_names.clone(),
            dtype: "f64".into(),
            epoch: self.epoch,
            mode: self.mode.clone(),
            input_policy: self.net.input_policy,
            hidden_norm: self.net.hidden_norm,
            seed: self.seed,
            optimizer: self
                .optimizer
                .iter()
                .map(|s| OptimizerDesc {
                    lr: s.lr,
                    t: s.t,
                    tensor_lens: s.m.iter().map(Vec::len).collect(),
                })
                .collect(),
            extra: self.extra.clone(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");

        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_json);
        for layer in &self.net.hidden {
            write_f64s(&mut buf, layer.weights.data());
            write_f64s(&mut buf, &layer.bias);
            write_f64s(&mut buf, &layer.bn_gamma);
            write_f64s(&mut buf, &layer.bn_beta);
            write_f64s(&mut buf, &layer.bn_running_mean);
            write_f64s(&mut buf, &layer.bn_running_var);
        }
        write_f64s(&mut buf, self.net.head.weights.data());
        write_f64s(&mut buf, &self.net.head.bias);
        for state in &self.optimizer {
            for m in &state.m {
                write_f64s(&mut buf, m);
            }
            for v in &state.v {
                write_f64s(&mut buf, v);
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: bad magic bytes (not a checkpoint)",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {version} (expected {VERSION})",
                path.display()
            )));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + header_len {
            return Err(Error::Checkpoint(format!("{}: truncated header", path.display())));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
            .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
        if header.dtype != "f64" {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported dtype {}",
                path.display(),
                header.dtype
            )));
        }
        if header.dims.len() < 2 {
            return Err(Error::Checkpoint(format!(
                "{}: dimension chain too short",
                path.display()
            )));
        }

        let mut cursor = Reader {
            bytes: &bytes[16 + header_len..],
            pos: 0,
            path,
        };
        let mut hidden = Vec::with_capacity(header.dims.len() - 1);
        for w in header.dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            hidden.push(DenseLayer {
                weights: Matrix::from_vec(in_dim, out_dim, cursor.read_f64s(in_dim * out_dim)?)?,
                bias: cursor.read_f64s(out_dim)?,
                bn_gamma: cursor.read_f64s(out_dim)?,
                bn_beta: cursor.read_f64s(out_dim)?,
                bn_running_mean: cursor.read_f64s(out_dim)?,
                bn_running_var: cursor.read_f64s(out_dim)?,
            });
        }
        let last = *header.dims.last().unwrap();
        let head = SoftmaxHead {
            weights: Matrix::from_vec(
                last,
                header.class_count,
                cursor.read_f64s(last * header.class_count)?,
            )?,
            bias: cursor.read_f64s(header.class_count)?,
        };
        let mut optimizer = Vec::with_capacity(header.optimizer.len());
        for desc in &header.optimizer {
            let mut state = AdamState::new(&desc.tensor_lens, desc.lr);
            state.t = desc.t;
            for m in &mut state.m {
                *m = cursor.read_f64s(m.len())?;
            }
            for v in &mut state.v {
                *v = cursor.read_f64s(v.len())?;
            }
            optimizer.push(state);
        }
        cursor.expect_end()?;

        let net = Network {
            hidden,
            head,
            class_count: header.class_count,
            input_policy: header.input_policy,
            hidden_norm: header.hidden_norm,
        };
        net.validate_chain()?;
        Ok(Checkpoint {
            net,
            optimizer,
            epoch: header.epoch,
            mode: header.mode,
            seed: header.seed,
            class_names: header.class_names,
            extra: header.extra,
        })
    }
}

fn write_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn read_f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let need = count * 8;
        if self.pos + need > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: payload shorter than the dimension header implies",
                self.path.display()
            )));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += need;
        Ok(out)
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: {} trailing bytes after payload",
                self.path.display(),
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use crate::network::Mode;

    fn toy_checkpoint() -> Checkpoint {
        let mut net = Network::with_dims(&[12, 6, 5], 3, 2).unwrap();
        // Touch running stats so they are non-trivial.
        let mut rng = SeededRng::new(7);
        let batch =
            Matrix::from_vec(8, 12, (0..96).map(|_| rng.next_f64()).collect()).unwrap();
        net.forward(&batch, Mode::Train).unwrap();
        let mut adam = AdamState::new(&[12 * 6, 6], 1e-3);
        adam.t = 17;
        adam.m[0][3] = 0.25;
        adam.v[1][2] = 0.5;
        Checkpoint {
            net,
            optimizer: vec![adam],
            epoch: 17,
            mode: "bp".into(),
            seed: 42,
            class_names: vec!["a".into(), "b".into(), "c".into()],
            extra: serde_json::json!({"note": "test"}),
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.net, ckpt.net);
        assert_eq!(loaded.optimizer, ckpt.optimizer);
        assert_eq!(loaded.epoch, 17);
        assert_eq!(loaded.mode, "bp");
        assert_eq!(loaded.seed, 42);
        assert_eq!(loaded.class_names, ckpt.class_names);

        // Bitwise-equal predictions on a probe batch.
        let mut rng = SeededRng::new(9);
        let probe =
            Matrix::from_vec(4, 12, (0..48).map(|_| rng.next_f64()).collect()).unwrap();
        assert_eq!(
            ckpt.net.predict_probs(&probe).unwrap(),
            loaded.net.predict_probs(&probe).unwrap()
        );
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let err = Checkpoint::load(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ckpt");
        ckpt.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, bytes).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
