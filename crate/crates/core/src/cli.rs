//! Experiment harness: command parsing, dataset preparation, training
//! and evaluation orchestration, report emission.
//!
//! Exit codes: 0 success, 1 config error, 2 data error, 3 numeric
//! failure. Stdout is human text; files are machine-readable.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, RunMode};
use crate::data::{
    downsample_to_64, flatten_normalize, load_dataset, make_blobs, make_overlay_batch,
    split_8_2, stack_samples, unflatten, write_image_png, BlobSpec, DatasetSplit, PixelNorm,
    Sample,
};
use crate::error::{Error, Result};
use crate::history::RunHistory;
use crate::hybrid::train_hybrid;
use crate::math::{Matrix, SeededRng, STREAM_NEGATIVE};
use crate::metrics::EvalReport;
use crate::network::Network;
use crate::train_bp::{evaluate_softmax, train_bp, BpState};
use crate::train_ffa::{
    predict_goodness_batch, train_ffa, FfaState, GoodnessLayers,
};

#[derive(Parser)]
#[command(
    name = "ff-trainer",
    about = "Dense-network training engine: backprop, forward-forward, and the hybrid pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic blob fixture as PNGs + labels.csv.
    MakeFixture {
        /// Dataset root to create (images/ and labels.csv inside).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 375)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.04)]
        noise_std: f64,
        /// Fraction of labels flipped to a random wrong class.
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
    },
    /// Train the configured mode end-to-end.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path config overrides, e.g. --set bp.monitor=test_error
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Resume from a checkpoint written by an earlier run of the
        /// same config (bp and streaming ffa only).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split of a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset_root: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
        /// Where results.csv is appended (default: the checkpoint's directory).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, default_value = "div255")]
        pixel_norm: String,
    },
    /// Run ffa, bp, and hybrid on the same seed and split; emit the
    /// comparison tables.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write paired positive/negative overlay images for given samples.
    InspectOverlay {
        #[arg(long)]
        dataset_root: PathBuf,
        /// Comma-separated sample indices (CSV row order).
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        /// Overlay width n; defaults to the dataset's class count.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version via this path too
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Checkpoint(_) => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeFixture {
            out,
            classes,
            samples,
            seed,
            noise_std,
            label_noise,
        } => cmd_make_fixture(&out, classes, samples, seed, noise_std, label_noise),
        Command::Train {
            config,
            set,
            resume,
        } => cmd_train(&config, &set, resume.as_deref()),
        Command::Evaluate {
            checkpoint,
            dataset_root,
            split,
            output_dir,
            pixel_norm,
        } => cmd_evaluate(
            &checkpoint,
            &dataset_root,
            split,
            output_dir.as_deref(),
            &pixel_norm,
        ),
        Command::Compare { config, set } => cmd_compare(&config, &set),
        Command::InspectOverlay {
            dataset_root,
            indices,
            classes,
            out,
            seed,
        } => cmd_inspect_overlay(&dataset_root, &indices, classes, &out, seed),
    }
}

// ---------------------------------------------------------------- fixture

fn cmd_make_fixture(
    out: &Path,
    classes: usize,
    samples: usize,
    seed: u64,
    noise_std: f64,
    label_noise: f64,
) -> Result<()> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "fixture needs at least 2 classes, got {classes}"
        )));
    }
    let mut spec = BlobSpec::new(classes, samples, seed);
    spec.noise_std = noise_std;
    spec.label_noise = label_noise;
    let (blob_samples, names) = make_blobs(&spec);

    let images_dir = out.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut labels = String::from("filename,label\n");
    for (i, s) in blob_samples.iter().enumerate() {
        let filename = format!("sample_{i:05}.png");
        write_image_png(&unflatten(&s.pixels)?, &images_dir.join(&filename))?;
        labels.push_str(&format!("{filename},{}\n", names[s.label]));
    }
    let labels_path = out.join("labels.csv");
    std::fs::write(&labels_path, labels).map_err(|e| Error::io(&labels_path, e))?;
    println!(
        "wrote {} samples ({classes} classes) under {}",
        blob_samples.len(),
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------ data

fn load_samples(root: &Path, norm: PixelNorm) -> Result<(Vec<Sample>, Vec<String>)> {
    let images = load_dataset(&root.join("images"), &root.join("labels.csv"))?;
    let (raw, names) = images;
    let mut samples = Vec::with_capacity(raw.len());
    for (img, label) in &raw {
        let small = downsample_to_64(img)?;
        samples.push(Sample {
            pixels: flatten_normalize(&small, norm)?,
            label: *label,
        });
    }
    Ok((samples, names))
}

/// FNV-1a over the split permutation: a cheap fingerprint of exact
/// train/test membership, recorded in run.json.
fn split_hash(order: &[usize]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &i in order {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}

fn prepare_split(
    root: &Path,
    norm: PixelNorm,
    seed: u64,
) -> Result<(DatasetSplit, String)> {
    let (samples, class_names) = load_samples(root, norm)?;
    let class_count = class_names.len();
    if class_count < 2 {
        return Err(Error::Data(format!(
            "dataset has {class_count} classes; need at least 2"
        )));
    }
    let parts = split_8_2(samples, seed)?;
    let hash = split_hash(&parts.order);
    Ok((
        DatasetSplit {
            train: parts.train,
            test: parts.test,
            class_count,
            class_names,
        },
        hash,
    ))
}

// ----------------------------------------------------------------- train

struct ModeOutcome {
    histories: Vec<(String, RunHistory)>,
    /// (split, error%, auc) rows for results.csv, train then test.
    results: Vec<(String, f64, f64)>,
}

fn run_mode(
    mode: RunMode,
    cfg: &ExperimentConfig,
    data: &DatasetSplit,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<ModeOutcome> {
    let ckpt_path = out_dir.join("checkpoint.ckpt");
    match mode {
        RunMode::Bp => {
            let mut tc = cfg.bp_config();
            tc.checkpoint_path = Some(ckpt_path);
            let (mut net, mut state) = match resume {
                Some(path) => {
                    let ckpt = Checkpoint::load(path)?;
                    require_mode(&ckpt, "bp")?;
                    let adam = ckpt.optimizer.into_iter().next().ok_or_else(|| {
                        Error::Checkpoint("bp checkpoint lacks optimizer state".into())
                    })?;
                    let state = BpState {
                        adam,
                        completed_epochs: ckpt.epoch,
                    };
                    (ckpt.net, state)
                }
                None => {
                    let net = Network::standard(data.class_count, cfg.seed)?;
                    let state = BpState::fresh(&net, &tc);
                    (net, state)
                }
            };
            let history = train_bp(&mut net, data, &tc, &mut state)?;
            let results = softmax_results(&net, data)?;
            Ok(ModeOutcome {
                histories: vec![("history.csv".into(), history)],
                results,
            })
        }
        RunMode::Ffa => {
            let mut fc = cfg.ffa_config();
            fc.checkpoint_path = Some(ckpt_path);
            let (mut net, mut state) = match resume {
                Some(path) => {
                    let ckpt = Checkpoint::load(path)?;
                    require_mode(&ckpt, "ffa")?;
                    let state = FfaState {
                        adams: ckpt.optimizer,
                        completed_epochs: ckpt.epoch,
                    };
                    (ckpt.net, state)
                }
                None => {
                    let net = Network::standard(data.class_count, cfg.seed)?;
                    let state = FfaState::fresh(&net, &fc);
                    (net, state)
                }
            };
            let history = train_ffa(&mut net, data, &fc, &mut state)?;
            let results = goodness_results(&net, data, fc.goodness_layers)?;
            Ok(ModeOutcome {
                histories: vec![("history.csv".into(), history)],
                results,
            })
        }
        RunMode::Hybrid => {
            if resume.is_some() {
                return Err(Error::Config(
                    "resume is supported for bp and ffa runs, not hybrid".into(),
                ));
            }
            let mut hc = cfg.hybrid_config();
            hc.bp.checkpoint_path = Some(ckpt_path);
            let mut net = Network::standard(data.class_count, cfg.seed)?;
            let outcome = train_hybrid(&mut net, data, &hc)?;
            let results = softmax_results(&net, data)?;
            Ok(ModeOutcome {
                histories: vec![
                    ("history_ffa.csv".into(), outcome.ffa_history),
                    ("history_bp.csv".into(), outcome.bp_history),
                ],
                results,
            })
        }
    }
}

fn require_mode(ckpt: &Checkpoint, expected: &str) -> Result<()> {
    if ckpt.mode != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint was written by a '{}' run, cannot resume a '{expected}' run",
            ckpt.mode
        )));
    }
    Ok(())
}

fn softmax_results(net: &Network, data: &DatasetSplit) -> Result<Vec<(String, f64, f64)>> {
    let mut rows = Vec::new();
    for (name, samples) in [("train", &data.train), ("test", &data.test)] {
        let (inputs, labels) = stack_samples(samples);
        let (err, auc) = evaluate_softmax(net, &inputs, &labels)?;
        rows.push((name.to_string(), err, auc.unwrap_or(f64::NAN)));
    }
    Ok(rows)
}

fn goodness_results(
    net: &Network,
    data: &DatasetSplit,
    layers: GoodnessLayers,
) -> Result<Vec<(String, f64, f64)>> {
    let mut rows = Vec::new();
    for (name, samples) in [("train", &data.train), ("test", &data.test)] {
        let (inputs, labels) = stack_samples(samples);
        let (preds, scores) = predict_goodness_batch(net, &inputs, layers)?;
        let err = crate::metrics::error_rate(&preds, &labels)?;
        let auc = crate::metrics::roc_auc_report(&scores, &labels).unwrap_or(f64::NAN);
        rows.push((name.to_string(), err, auc));
    }
    Ok(rows)
}

fn mode_name(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Ffa => "ffa",
        RunMode::Bp => "bp",
        RunMode::Hybrid => "hybrid",
    }
}

fn write_results_csv(path: &Path, mode: &str, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        String::from("mode,split,error_rate_percent,roc_auc\n")
    };
    for (split, err, auc) in rows {
        text.push_str(&format!("{mode},{split},{err},{auc}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_run_json(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    split_hash: &str,
    class_names: &[String],
    wall_seconds: f64,
) -> Result<()> {
    let doc = serde_json::json!({
        "config": cfg,
        "root_seed": cfg.seed,
        "split_hash": split_hash,
        "class_names": class_names,
        "wall_seconds": wall_seconds,
    });
    let path = out_dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("json"))
        .map_err(|e| Error::io(&path, e))
}

fn cmd_train(config: &Path, overrides: &[String], resume: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(config, overrides)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let (data, hash) = prepare_split(&cfg.dataset_root, cfg.pixel_norm, cfg.seed)?;

    let started = Instant::now();
    let outcome = run_mode(cfg.mode, &cfg, &data, &cfg.output_dir, resume)?;
    let wall = started.elapsed().as_secs_f64();

    for (name, history) in &outcome.histories {
        history.write_csv(&cfg.output_dir.join(name))?;
    }
    write_results_csv(
        &cfg.output_dir.join("results.csv"),
        mode_name(cfg.mode),
        &outcome.results,
    )?;
    write_run_json(&cfg.output_dir, &cfg, &hash, &data.class_names, wall)?;

    for (split, err, auc) in &outcome.results {
        println!(
            "{} {split}: error {err:.2}%  roc-auc {auc:.4}",
            mode_name(cfg.mode)
        );
    }
    Ok(())
}

// -------------------------------------------------------------- evaluate

fn cmd_evaluate(
    checkpoint: &Path,
    dataset_root: &Path,
    split: SplitArg,
    output_dir: Option<&Path>,
    pixel_norm: &str,
) -> Result<()> {
    let norm = match pixel_norm {
        "div255" => PixelNorm::Div255,
        "min_max" => PixelNorm::MinMax,
        other => {
            return Err(Error::Config(format!(
                "unknown pixel_norm '{other}' (expected div255 or min_max)"
            )))
        }
    };
    let ckpt = Checkpoint::load(checkpoint)?;
    let (data, _) = prepare_split(dataset_root, norm, ckpt.seed)?;
    if data.class_count != ckpt.net.class_count {
        return Err(Error::Data(format!(
            "checkpoint has {} classes but dataset has {}",
            ckpt.net.class_count, data.class_count
        )));
    }

    let (split_name, samples) = match split {
        SplitArg::Train => ("train", &data.train),
        SplitArg::Test => ("test", &data.test),
    };
    let (inputs, labels) = stack_samples(samples);
    let (report, scores_kind) = if ckpt.mode == "ffa" {
        let (_, scores) = predict_goodness_batch(&ckpt.net, &inputs, GoodnessLayers::All)?;
        (EvalReport::from_probs(&scores, &labels)?, "goodness-vote")
    } else {
        let probs = {
            let raw = crate::data::apply_input_policy(
                ckpt.net.input_policy,
                &inputs,
                None,
                ckpt.net.class_count,
            )?;
            ckpt.net.predict_probs(&raw)?
        };
        (EvalReport::from_probs(&probs, &labels)?, "softmax")
    };

    println!(
        "{split_name} ({scores_kind}): error {:.2}%  roc-auc {:.4}  n={}",
        report.error_rate_percent,
        report.roc_auc,
        labels.len()
    );
    for (c, counts) in report.per_class.iter().enumerate() {
        println!(
            "  class {c} ({}): tp {} fp {} tn {} fn {}",
            data.class_names[c], counts.tp, counts.fp, counts.tn, counts.fn_
        );
    }

    let dir = output_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_results_csv(
        &dir.join("results.csv"),
        &ckpt.mode,
        &[(
            split_name.to_string(),
            report.error_rate_percent,
            report.roc_auc,
        )],
    )
}

// --------------------------------------------------------------- compare

fn cmd_compare(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = ExperimentConfig::load(config, overrides)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let (data, hash) = prepare_split(&cfg.dataset_root, cfg.pixel_norm, cfg.seed)?;

    // Paper table order: FFA, BP, FFA+BP.
    let modes = [RunMode::Ffa, RunMode::Bp, RunMode::Hybrid];
    let labels = ["FFA", "BP", "FFA+BP"];
    let mut all_rows: Vec<Vec<(String, f64, f64)>> = Vec::new();
    let started = Instant::now();
    for mode in modes {
        let sub = cfg.output_dir.join(mode_name(mode));
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let outcome = run_mode(mode, &cfg, &data, &sub, None)?;
        for (name, history) in &outcome.histories {
            history.write_csv(&sub.join(name))?;
        }
        write_results_csv(&sub.join("results.csv"), mode_name(mode), &outcome.results)?;
        write_run_json(&sub, &cfg, &hash, &data.class_names, 0.0)?;
        all_rows.push(outcome.results);
    }
    let wall = started.elapsed().as_secs_f64();
    write_run_json(&cfg.output_dir, &cfg, &hash, &data.class_names, wall)?;

    // compare.csv: one row per model/split.
    let mut csv = String::from("model,split,error_rate_percent,roc_auc\n");
    for (label, rows) in labels.iter().zip(&all_rows) {
        for (split, err, auc) in rows {
            csv.push_str(&format!("{label},{split},{err},{auc}\n"));
        }
    }
    let csv_path = cfg.output_dir.join("compare.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    // Aligned-text tables mirroring the paper's layout.
    let table = |title: &str, metric: fn(&(String, f64, f64)) -> String| {
        let mut text = format!("{title}\n{:<8} {:>10} {:>10}\n", "model", "train", "test");
        for (label, rows) in labels.iter().zip(&all_rows) {
            text.push_str(&format!(
                "{label:<8} {:>10} {:>10}\n",
                metric(&rows[0]),
                metric(&rows[1])
            ));
        }
        text
    };
    let report = format!(
        "{}\n{}",
        table("Error rate (%)", |r| format!("{:.2}", r.1)),
        table("ROC-AUC", |r| format!("{:.4}", r.2))
    );
    print!("{report}");
    let report_path = cfg.output_dir.join("compare.txt");
    std::fs::write(&report_path, report).map_err(|e| Error::io(&report_path, e))?;
    Ok(())
}

// ------------------------------------------------------- inspect-overlay

fn cmd_inspect_overlay(
    dataset_root: &Path,
    indices: &[usize],
    classes: Option<usize>,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let (samples, class_names) = load_samples(dataset_root, PixelNorm::Div255)?;
    let n = classes.unwrap_or(class_names.len());
    if n < 2 {
        return Err(Error::Config(format!("overlay needs n >= 2, got {n}")));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rng = SeededRng::derive_stream(seed, STREAM_NEGATIVE);
    for &idx in indices {
        let sample = samples.get(idx).ok_or_else(|| {
            Error::Data(format!(
                "sample index {idx} out of range (dataset has {})",
                samples.len()
            ))
        })?;
        let batch = make_overlay_batch(std::slice::from_ref(sample), n, &mut rng)?;
        let first_n = |m: &Matrix| -> Vec<f64> { m.row(0)[..n].to_vec() };
        println!(
            "sample {idx} (label {} = {}):",
            sample.label, class_names[sample.label]
        );
        println!("  positive first-{n}: {:?}", first_n(&batch.positive));
        println!("  negative first-{n}: {:?}", first_n(&batch.negative));
        let pos_path = out.join(format!("sample_{idx:05}_pos.png"));
        let neg_path = out.join(format!("sample_{idx:05}_neg.png"));
        write_image_png(&unflatten(&batch.positive)?, &pos_path)?;
        write_image_png(&unflatten(&batch.negative)?, &neg_path)?;
        println!("  wrote {} and {}", pos_path.display(), neg_path.display());
    }
    Ok(())
}
