//! Per-epoch metric traces and their CSV rendering.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Goodness statistics for one hidden layer over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGoodness {
    pub layer_idx: usize,
    pub g_pos_mean: f64,
    pub g_neg_mean: f64,
    pub local_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training objective for the epoch (MSE for backprop, summed local
    /// losses for forward-forward).
    pub train_loss: f64,
    pub train_error: Option<f64>,
    pub train_auc: Option<f64>,
    pub test_error: Option<f64>,
    pub test_auc: Option<f64>,
    /// Per-layer goodness traces; empty for backprop epochs.
    pub layers: Vec<LayerGoodness>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub records: Vec<EpochRecord>,
}

impl RunHistory {
    pub fn push(&mut self, record: EpochRecord) {
        debug_assert!(self
            .records
            .last()
            .map_or(true, |r| record.epoch > r.epoch));
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Smallest recorded test error, if any epoch measured one.
    pub fn best_test_error(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.test_error)
            .min_by(|a, b| a.partial_cmp(b).expect("finite errors"))
    }

    /// Long-format CSV. One `train` and one `test` summary row per epoch,
    /// plus one row per hidden layer for forward-forward epochs. Floats
    /// are written with shortest-roundtrip formatting, so identical runs
    /// produce byte-identical files.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(
            out,
            "epoch,split,layer_idx,loss,error_rate,roc_auc,g_pos_mean,g_neg_mean,local_loss"
        )
        .expect("vec write");
        for r in &self.records {
            writeln!(
                out,
                "{},train,,{},{},{},,,",
                r.epoch,
                r.train_loss,
                opt(r.train_error),
                opt(r.train_auc)
            )
            .expect("vec write");
            writeln!(
                out,
                "{},test,,,{},{},,,",
                r.epoch,
                opt(r.test_error),
                opt(r.test_auc)
            )
            .expect("vec write");
            for l in &r.layers {
                writeln!(
                    out,
                    "{},train,{},{},,,{},{},{}",
                    r.epoch, l.layer_idx, l.local_loss, l.g_pos_mean, l.g_neg_mean, l.local_loss
                )
                .expect("vec write");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
