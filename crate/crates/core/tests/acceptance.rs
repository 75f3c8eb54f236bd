//! The acceptance gate: every release-blocking behavior, one criterion
//! per numbered check, one PASS/FAIL line each. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{blob_fixture, bp_fd_max_rel_err, ffa_fd_max_rel_err, random_batch, random_labels};
use ff_trainer::checkpoint::Checkpoint;
use ff_trainer::data::DatasetSplit;
use ff_trainer::hybrid::{train_hybrid, HybridConfig};
use ff_trainer::math::{logistic, SeededRng, STREAM_NEGATIVE};
use ff_trainer::metrics::{error_rate, roc_auc_binary};
use ff_trainer::network::{InterLayerNorm, Network};
use ff_trainer::train_bp::{train_bp, BpState, TrainConfig};
use ff_trainer::train_ffa::{
    goodness_separation, layer_goodness, positive_probability, train_ffa, FfaConfig, FfaState,
};

const GRAD_TOL: f64 = 1e-5;

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut shared = Shared::default();

    let checks: Vec<(&str, Box<dyn FnOnce(&mut Shared)>)> = vec![
        ("gradient fidelity (backprop)", Box::new(c1_bp_gradients)),
        ("gradient fidelity (local objective)", Box::new(c2_ffa_gradients)),
        ("locality of updates", Box::new(c3_locality)),
        ("goodness / probability arithmetic", Box::new(c4_arithmetic)),
        ("metric oracles", Box::new(c5_metric_oracles)),
        ("desk-scale learning, all three regimes", Box::new(c6_desk_scale)),
        ("goodness separation after training", Box::new(c7_separation)),
        ("hybrid at least matches ffa under label noise", Box::new(c8_noisy_hybrid)),
        ("determinism and persistence", Box::new(c9_determinism)),
        ("overlay audit via the cli", Box::new(c10_overlay_audit)),
    ];

    for (i, (name, check)) in checks.into_iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut shared)));
        let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
        println!(
            "criterion {:2} [{verdict}] {name} ({:.1}s)",
            i + 1,
            started.elapsed().as_secs_f64()
        );
        if result.is_err() {
            failures.push(format!("criterion {} ({name})", i + 1));
        }
    }
    assert!(failures.is_empty(), "failed: {}", failures.join(", "));
}

/// State carried between criteria: 7 inspects the network 6 trained.
#[derive(Default)]
struct Shared {
    ffa_net: Option<Network>,
    fixture: Option<DatasetSplit>,
}

// -------------------------------------------------------- 1: bp gradients

fn c1_bp_gradients(_: &mut Shared) {
    let started = Instant::now();
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let mut net = Network::with_dims(&[8, 5, 4], 3, seed).unwrap();
        // Odd seeds exercise the L2-direction inter-layer chain rule too.
        if seed % 2 == 1 {
            net.hidden_norm = InterLayerNorm::L2Direction;
        }
        let batch = random_batch(4, 8, &mut rng);
        let labels = random_labels(4, 3, &mut rng);
        let err = bp_fd_max_rel_err(&net, &batch, &labels);
        assert!(err < GRAD_TOL, "net {seed}: max rel err {err}");
    }
    assert!(started.elapsed().as_secs() < 60, "criterion 1 over budget");
}

// ------------------------------------------------- 2: local ffa gradients

fn c2_ffa_gradients(_: &mut Shared) {
    let started = Instant::now();
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(2000 + seed);
        let net = Network::with_dims(&[8, 5], 2, seed).unwrap();
        let layer = net.hidden[0].clone();
        let x_pos = random_batch(4, 8, &mut rng);
        let x_neg = random_batch(4, 8, &mut rng);
        let err = ffa_fd_max_rel_err(&layer, &x_pos, &x_neg, 5.0);
        assert!(err < GRAD_TOL, "layer {seed}: max rel err {err}");
    }
    assert!(started.elapsed().as_secs() < 30, "criterion 2 over budget");
}

// ------------------------------------------------------------ 3: locality

fn c3_locality(_: &mut Shared) {
    let data = blob_fixture(3, 30, 1, 0.0);

    // One FFA epoch must leave the softmax head bitwise untouched.
    let mut net = Network::with_dims(&[12288, 16, 8], 3, 1).unwrap();
    let head_before = net.head.clone();
    let cfg = FfaConfig::new(1, 8, 1);
    let mut state = FfaState::fresh(&net, &cfg);
    train_ffa(&mut net, &data, &cfg, &mut state).unwrap();
    assert_eq!(net.head, head_before, "ffa epoch touched the head");

    // Head-only hybrid stage 2 must leave every hidden parameter (batch
    // norm state included) bitwise identical to the stage-1 result.
    let stage1_cfg = FfaConfig::new(2, 8, 2);
    let mut reference = Network::with_dims(&[12288, 16, 8], 3, 2).unwrap();
    let mut ref_state = FfaState::fresh(&reference, &stage1_cfg);
    train_ffa(&mut reference, &data, &stage1_cfg, &mut ref_state).unwrap();

    let mut hybrid_net = Network::with_dims(&[12288, 16, 8], 3, 2).unwrap();
    let hc = HybridConfig::new(stage1_cfg, TrainConfig::new(2, 8, 2));
    train_hybrid(&mut hybrid_net, &data, &hc).unwrap();
    assert_eq!(
        hybrid_net.hidden, reference.hidden,
        "head-only refinement moved hidden parameters"
    );
    assert_ne!(hybrid_net.head, reference.head, "stage 2 trained nothing");
}

// -------------------------------------------------------- 4: eq. 1 values

fn c4_arithmetic(_: &mut Shared) {
    let g = layer_goodness(&ff_trainer::math::Matrix::from_rows(&[vec![0.5, -2.0, 3.0]]).unwrap());
    assert_eq!(g.len(), 1);
    assert!((g[0] - 13.25).abs() < 1e-12, "goodness {}", g[0]);
    assert!(
        (positive_probability(g[0], 13.25) - 0.5).abs() < 1e-12,
        "p at threshold"
    );
    assert!(
        (logistic(2.0) - 0.8807970779778823).abs() < 1e-12,
        "logistic(2)"
    );
}

// -------------------------------------------------------- 5: metric oracles

/// O(P*N) pairwise AUC: fraction of (positive, negative) pairs the
/// positive outscores, ties counting one half.
fn pairwise_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &ti) in truth.iter().enumerate() {
        if !ti {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn c5_metric_oracles(_: &mut Shared) {
    // Worked example.
    let auc = roc_auc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert!((auc - 0.75).abs() < 1e-12, "worked example auc {auc}");

    // 1000 random instances including heavy ties (scores on a 0.05 grid).
    let mut rng = SeededRng::new(505);
    for case in 0..1000 {
        let len = 2 + rng.next_below(48) as usize;
        let mut scores: Vec<f64> = (0..len)
            .map(|_| (rng.next_below(21) as f64) * 0.05)
            .collect();
        if case % 3 == 0 {
            // continuous scores exercise the no-tie path
            scores = (0..len).map(|_| rng.next_f64()).collect();
        }
        let mut truth: Vec<bool> = (0..len).map(|_| rng.next_below(2) == 1).collect();
        truth[0] = true;
        truth[1] = false;
        let fast = roc_auc_binary(&scores, &truth).unwrap();
        let oracle = pairwise_auc(&scores, &truth);
        assert!(
            (fast - oracle).abs() < 1e-12,
            "case {case}: {fast} vs oracle {oracle}"
        );
    }

    // Error rate against Eq. 2 over enumerated binary confusion tables.
    for tp in 0..4usize {
        for fp in 0..4usize {
            for tn in 0..4usize {
                for fn_ in 0..4usize {
                    let total = tp + fp + tn + fn_;
                    if total == 0 {
                        continue;
                    }
                    let mut preds = Vec::new();
                    let mut truth = Vec::new();
                    preds.extend(std::iter::repeat(1).take(tp));
                    truth.extend(std::iter::repeat(1).take(tp));
                    preds.extend(std::iter::repeat(1).take(fp));
                    truth.extend(std::iter::repeat(0).take(fp));
                    preds.extend(std::iter::repeat(0).take(tn));
                    truth.extend(std::iter::repeat(0).take(tn));
                    preds.extend(std::iter::repeat(0).take(fn_));
                    truth.extend(std::iter::repeat(1).take(fn_));
                    let expected = (fp + fn_) as f64 / total as f64 * 100.0;
                    let got = error_rate(&preds, &truth).unwrap();
                    assert!((got - expected).abs() < 1e-12, "{tp},{fp},{tn},{fn_}");
                }
            }
        }
    }
}

// --------------------------------------------------- 6: desk-scale learning

fn c6_desk_scale(shared: &mut Shared) {
    let started = Instant::now();
    let data = blob_fixture(3, 375, 0, 0.0);
    assert_eq!(data.train.len(), 300);
    assert_eq!(data.test.len(), 75);

    let mut ffa_cfg = FfaConfig::new(100, 64, 0);
    ffa_cfg.early_stop_test_error = Some(5.0);
    let mut ffa_net = Network::standard(3, 0).unwrap();
    let mut st = FfaState::fresh(&ffa_net, &ffa_cfg);
    let h = train_ffa(&mut ffa_net, &data, &ffa_cfg, &mut st).unwrap();
    let best = h.best_test_error().unwrap();
    assert!(best <= 5.0, "ffa best test error {best}%");

    let mut bp_cfg = TrainConfig::new(100, 64, 0);
    bp_cfg.early_stop_test_error = Some(5.0);
    let mut bp_net = Network::standard(3, 0).unwrap();
    let mut st = BpState::fresh(&bp_net, &bp_cfg);
    let h = train_bp(&mut bp_net, &data, &bp_cfg, &mut st).unwrap();
    let best = h.best_test_error().unwrap();
    assert!(best <= 5.0, "bp best test error {best}%");

    let mut s1 = FfaConfig::new(50, 64, 0);
    s1.early_stop_test_error = Some(5.0);
    let mut s2 = TrainConfig::new(50, 64, 0);
    s2.early_stop_test_error = Some(5.0);
    let mut hybrid_net = Network::standard(3, 0).unwrap();
    let out = train_hybrid(&mut hybrid_net, &data, &HybridConfig::new(s1, s2)).unwrap();
    let best = out.bp_history.best_test_error().unwrap();
    assert!(best <= 5.0, "hybrid best test error {best}%");

    assert!(
        started.elapsed().as_secs() < 600,
        "criterion 6 over the 10-minute budget"
    );
    shared.ffa_net = Some(ffa_net);
    shared.fixture = Some(data);
}

// ------------------------------------------------- 7: goodness separation

fn c7_separation(shared: &mut Shared) {
    let net = shared.ffa_net.as_ref().expect("criterion 6 trained the net");
    let data = shared.fixture.as_ref().expect("criterion 6 built the fixture");
    let mut rng = SeededRng::derive_stream(7, STREAM_NEGATIVE);
    let gaps = goodness_separation(net, &data.test, 3, &mut rng).unwrap();
    for (idx, gap) in gaps.iter().enumerate() {
        assert!(*gap > 0.0, "layer {idx} gap {gap} not positive");
    }
}

// ------------------------------------------- 8: hybrid vs ffa under noise

fn c8_noisy_hybrid(_: &mut Shared) {
    let mut wins = 0;
    for seed in 0..5u64 {
        let data = blob_fixture(3, 375, seed, 0.1);

        let mut cfg = FfaConfig::new(40, 64, seed);
        cfg.eval_every = 10;
        let mut net = Network::standard(3, seed).unwrap();
        let mut st = FfaState::fresh(&net, &cfg);
        let h = train_ffa(&mut net, &data, &cfg, &mut st).unwrap();
        let ffa_err = h.last().unwrap().test_error.unwrap();

        let mut s1 = FfaConfig::new(40, 64, seed);
        s1.eval_every = 10;
        let mut s2 = TrainConfig::new(40, 64, seed);
        s2.eval_every = 10;
        let mut net = Network::standard(3, seed).unwrap();
        let out = train_hybrid(&mut net, &data, &HybridConfig::new(s1, s2)).unwrap();
        let hybrid_err = out.bp_history.last().unwrap().test_error.unwrap();

        if hybrid_err <= ffa_err {
            wins += 1;
        }
    }
    assert!(wins >= 4, "hybrid matched ffa in only {wins}/5 seeds");
}

// -------------------------------------------- 9: determinism, persistence

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ff-trainer"))
}

fn run_ok(cmd: &mut Command) -> std::process::Output {
    let out = cmd.output().expect("spawn ff-trainer");
    assert!(
        out.status.success(),
        "{:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_cfg(dir: &Path, data: &Path, out: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join(format!("bp_{epochs}_{}.json", out.file_name().unwrap().to_str().unwrap()));
    std::fs::write(
        &path,
        format!(
            r#"{{"mode": "bp", "dataset_root": "{}", "output_dir": "{}",
                "seed": 5, "epochs": {epochs}, "batch_size": 8}}"#,
            data.display(),
            out.display()
        ),
    )
    .unwrap();
    path
}

fn c9_determinism(_: &mut Shared) {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    run_ok(bin().args([
        "make-fixture",
        "--out",
        data.to_str().unwrap(),
        "--classes",
        "3",
        "--samples",
        "30",
    ]));

    // Identical config + seed -> byte-identical history.csv.
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let cfg = write_cfg(tmp.path(), &data, out, 4);
        run_ok(bin().args(["train", "--config", cfg.to_str().unwrap()]));
    }
    assert_eq!(
        std::fs::read(out_a.join("history.csv")).unwrap(),
        std::fs::read(out_b.join("history.csv")).unwrap(),
        "repeated run changed history.csv"
    );

    // Checkpoints round-trip bitwise.
    let ckpt_path = out_a.join("checkpoint.ckpt");
    let loaded = Checkpoint::load(&ckpt_path).unwrap();
    let resaved = tmp.path().join("resaved.ckpt");
    loaded.save(&resaved).unwrap();
    assert_eq!(
        std::fs::read(&ckpt_path).unwrap(),
        std::fs::read(&resaved).unwrap(),
        "checkpoint did not round-trip bitwise"
    );

    // Pause after 2 epochs, resume to 4: equals the uninterrupted run.
    let paused = tmp.path().join("paused");
    let cfg2 = write_cfg(tmp.path(), &data, &paused, 2);
    run_ok(bin().args(["train", "--config", cfg2.to_str().unwrap()]));
    let resumed = tmp.path().join("resumed");
    let cfg4 = write_cfg(tmp.path(), &data, &resumed, 4);
    run_ok(bin().args([
        "train",
        "--config",
        cfg4.to_str().unwrap(),
        "--resume",
        paused.join("checkpoint.ckpt").to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(out_a.join("checkpoint.ckpt")).unwrap(),
        std::fs::read(resumed.join("checkpoint.ckpt")).unwrap(),
        "pause/resume diverged from the straight run"
    );
}

// ---------------------------------------------------- 10: overlay audit

fn c10_overlay_audit(_: &mut Shared) {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    run_ok(bin().args([
        "make-fixture",
        "--out",
        data.to_str().unwrap(),
        "--classes",
        "7",
        "--samples",
        "21",
    ]));

    // Labels cycle through the classes, so sample index 1 has label 1.
    let out = run_ok(bin().args([
        "inspect-overlay",
        "--dataset-root",
        data.to_str().unwrap(),
        "--indices",
        "1",
        "--out",
        tmp.path().join("overlays").to_str().unwrap(),
    ]));
    let text = String::from_utf8_lossy(&out.stdout);

    let vector_after = |tag: &str| -> Vec<f64> {
        let line = text
            .lines()
            .find(|l| l.contains(tag))
            .unwrap_or_else(|| panic!("no '{tag}' line in:\n{text}"));
        let inner = line
            .split_once('[')
            .and_then(|(_, rest)| rest.split_once(']'))
            .map(|(v, _)| v)
            .unwrap_or_else(|| panic!("no vector on line: {line}"));
        inner
            .split(',')
            .map(|v| v.trim().parse::<f64>().unwrap())
            .collect()
    };

    let pos = vector_after("positive first-7");
    assert_eq!(pos, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], "positive overlay");

    let neg = vector_after("negative first-7");
    assert_eq!(neg.iter().filter(|&&v| v == 1.0).count(), 1, "negative overlay: {neg:?}");
    assert_eq!(neg.iter().filter(|&&v| v == 0.0).count(), 6, "negative overlay: {neg:?}");
    let hot = neg.iter().position(|&v| v == 1.0).unwrap();
    assert_ne!(hot, 1, "negative overlay reused the true label");

    for suffix in ["pos", "neg"] {
        assert!(
            tmp.path()
                .join("overlays")
                .join(format!("sample_00001_{suffix}.png"))
                .exists(),
            "missing overlay image ({suffix})"
        );
    }
}
