use std::fs;
use std::path::Path;
use std::process::Command;

use mpjet::commands::{self, evaluation_name, Stage, PREPARED};
use mpjet::config::RunConfig;
use mpjet::error::AppError;
use mpjet::formats::{decode_snapshots, encode_snapshots};
use mpjet_core::dataset::window_count;
use mpjet_core::field::{Grid2D, SnapshotMatrix};
use mpjet_core::neural::{ArchKind, HORIZON};
use proptest::prelude::*;

fn cfg(text: &str) -> RunConfig {
    RunConfig::parse(text, None).unwrap()
}

fn run(stage: Stage, text: &str, out: &Path) -> Result<mpjet::manifest::RunManifest, AppError> {
    commands::run(stage, &cfg(text), out)
}

fn result(m: &mpjet::manifest::RunManifest, key: &str) -> f64 {
    m.results[key].parse().unwrap()
}

fn bin(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mpjet")).args(args).current_dir(dir).output().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshot_file_round_trip_is_bit_exact(
        (nx, ny, k) in (1usize..6, 1usize..6, 1usize..6),
        seed in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 216),
        dt in 1e-6..10.0f64,
    ) {
        let n = nx * ny * k;
        let v = SnapshotMatrix::new(Grid2D::new(nx, ny).unwrap(), k, dt, seed[..n].to_vec()).unwrap();
        let bytes = encode_snapshots(&v);
        let back = decode_snapshots(&bytes, Path::new("x")).unwrap();
        prop_assert_eq!(encode_snapshots(&back), bytes);
        for (a, b) in back.data().iter().zip(v.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn bad_snapshot_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let v = SnapshotMatrix::new(Grid2D::new(2, 2).unwrap(), 10, 1.0, vec![0.5; 40]).unwrap();
    let bytes = encode_snapshots(&v);

    let mut wrong_magic = bytes.clone();
    wrong_magic[..4].copy_from_slice(b"XXXX");
    assert!(matches!(decode_snapshots(&wrong_magic, Path::new("f")), Err(AppError::Format { .. })));

    // Header promises 10 snapshots, payload carries 9.
    let truncated = &bytes[..bytes.len() - 4 * 8];
    assert!(matches!(decode_snapshots(truncated, Path::new("f")), Err(AppError::Corrupt { .. })));

    fs::write(dir.path().join("bad.mpjf"), truncated).unwrap();
    fs::write(dir.path().join("c.cfg"), "input = bad.mpjf\n").unwrap();
    let out = bin(&["decompose", "--config", "c.cfg", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn steady_flow_has_identical_columns() {
    let dir = tempfile::tempdir().unwrap();
    run(Stage::Generate, "flow = steady\nnoise_std = 0\nk = 12\nnx = 6\nny = 5", dir.path()).unwrap();
    let v = decode_snapshots(&fs::read(dir.path().join(commands::SNAPSHOTS)).unwrap(), Path::new("s")).unwrap();
    for k in 1..v.k() {
        assert_eq!(v.column(k), v.column(0));
    }
}

#[test]
fn five_mode_ground_truth_has_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    run(Stage::Generate, "flow = five-mode\ndt = 0.1\nk = 50", dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join(commands::GROUND_TRUTH)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn seeded_generation_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "noise_std = 0.1\nk = 30\nseed = 5";
    run(Stage::Generate, text, a.path()).unwrap();
    run(Stage::Generate, text, b.path()).unwrap();
    for f in [commands::SNAPSHOTS, commands::GROUND_TRUTH, "generate.manifest"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    commands::run(Stage::Generate, &RunConfig::parse(text, Some(6)).unwrap(), c.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join(commands::SNAPSHOTS)).unwrap(),
        fs::read(c.path().join(commands::SNAPSHOTS)).unwrap()
    );
}

#[test]
fn noiseless_decomposition_reports_tiny_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = "flow = five-mode\nnx = 16\nny = 16\nk = 120\ndt = 0.1\nnoise_std = 0\neps = 1e-8\neps1 = 1e-8";
    run(Stage::Generate, text, dir.path()).unwrap();
    let m = run(Stage::Decompose, text, dir.path()).unwrap();
    assert!(result(&m, "reconstruction_rrmse") <= 1e-6);
    assert_eq!(m.results["spectral_complexity"], "5");
    let r = run(Stage::Reconstruct, text, dir.path()).unwrap();
    assert!(result(&r, "reconstruction_rrmse") <= 1e-6);
    let csv = fs::read_to_string(dir.path().join(commands::RECONSTRUCTION_CSV)).unwrap();
    assert_eq!(csv.lines().next(), Some("t,i,j,value"));
    assert_eq!(csv.lines().count(), 1 + 16 * 16 * 120);
}

#[test]
fn saturated_filter_leaves_the_dominant_modes() {
    let dir = tempfile::tempdir().unwrap();
    let text = "nx = 12\nny = 12\nk = 80\nnoise_std = 0\neps1 = 1e-8\neps = 0.99";
    run(Stage::Generate, text, dir.path()).unwrap();
    run(Stage::Decompose, text, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join(commands::MODES)).unwrap();
    // The dominant conjugate pair only.
    assert_eq!(csv.lines().count(), 1 + 2);
}

#[test]
fn short_field_is_a_config_error_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    run(Stage::Generate, "k = 11", dir.path()).unwrap();
    let err = run(Stage::Decompose, "k = 11\nd = 10", dir.path()).unwrap_err();
    assert!(matches!(err, AppError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join(commands::MODES).exists());
    assert!(!dir.path().join("decompose.manifest").exists());
}

#[test]
fn missing_checkpoint_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let text = "k = 60\nq = 4";
    run(Stage::Generate, text, dir.path()).unwrap();
    run(Stage::Preprocess, text, dir.path()).unwrap();
    let err = run(Stage::Predict, text, dir.path()).unwrap_err();
    assert!(matches!(err, AppError::Missing { producer: "train", .. }), "{err}");
    let out = bin(&["predict", "--config", "c.cfg", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(2), "missing config file is a config-level failure");
    fs::write(dir.path().join("c.cfg"), text).unwrap();
    let out = bin(&["predict", "--config", "c.cfg", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mpjet train"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "colour = blue\n").unwrap();
    let out = bin(&["generate", "--config", "c.cfg", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn presets_load_reference_settings() {
    let c = cfg("preset = simple-singlephase");
    assert_eq!((c.d, c.eps, c.eps1), (100, 7e-3, 7e-3));
    assert!(c.train.early_stopping);
    let m = cfg("preset = modified-singlephase\nd = 30");
    assert_eq!((m.d, m.eps), (30, 2e-3));
    assert!(!m.train.early_stopping);
}

fn toy_pipeline(arch: &str, out: &Path) -> RunConfig {
    let text = format!("k = 80\nq = 4\narch = {arch}\nepochs = 3\nseed = 3");
    for s in [Stage::Generate, Stage::Preprocess, Stage::Train, Stage::Predict, Stage::Evaluate, Stage::Report] {
        run(s, &text, out).unwrap();
    }
    cfg(&text)
}

#[test]
fn toy_pipeline_evaluates_every_test_window() {
    for (arch, kind) in [("cnn", ArchKind::Cnn), ("rnn", ArchKind::Rnn)] {
        let dir = tempfile::tempdir().unwrap();
        let c = toy_pipeline(arch, dir.path());
        let prepared = decode_snapshots(&fs::read(dir.path().join(PREPARED)).unwrap(), Path::new("p")).unwrap();
        let s = c.split_for(prepared.k()).unwrap();
        let csv = fs::read_to_string(dir.path().join(evaluation_name(kind))).unwrap();
        let rows = csv.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count();
        assert_eq!(rows, window_count(s.k_test, 4, HORIZON), "{arch}");
        let pred =
            decode_snapshots(&fs::read(dir.path().join(commands::prediction_name(kind))).unwrap(), Path::new("p"))
                .unwrap();
        assert_eq!(pred.k(), 2);
        assert!(fs::read_to_string(dir.path().join(commands::REPORT)).unwrap().contains("mean test rrmse"));
    }
}

#[test]
fn baseline_is_removed_for_training_and_restored_for_output() {
    let dir = tempfile::tempdir().unwrap();
    let single = "k = 60\nflow = steady\nnoise_std = 0";
    run(Stage::Generate, single, dir.path()).unwrap();
    fs::rename(dir.path().join(commands::SNAPSHOTS), dir.path().join("single.mpjf")).unwrap();
    let text = format!("k = 60\nq = 4\nepochs = 2\nbaseline = {}", dir.path().join("single.mpjf").display());
    for s in [Stage::Generate, Stage::Preprocess, Stage::Train, Stage::Predict, Stage::Evaluate] {
        run(s, &text, dir.path()).unwrap();
    }
    let read = |n: &str| decode_snapshots(&fs::read(dir.path().join(n)).unwrap(), Path::new(n)).unwrap();
    let multi = read(commands::SNAPSHOTS);
    let base = read("single.mpjf");
    let prepared = read(PREPARED);
    for ((p, m), b) in prepared.data().iter().zip(multi.data()).zip(base.data()) {
        assert_eq!(*p, m - b);
    }
    // The written prediction is the model output plus the baseline at the
    // two target times.
    let pred = read(&commands::prediction_name(ArchKind::Cnn));
    let params =
        mpjet::formats::decode_checkpoint(&fs::read(dir.path().join("cnn.mpjn")).unwrap(), Path::new("c")).unwrap();
    let scaling = mpjet::formats::parse_scaling_csv(
        &fs::read_to_string(dir.path().join(commands::SCALING)).unwrap(),
        Path::new("s"),
    )
    .unwrap();
    let s = cfg(&text).split_for(60).unwrap();
    let start = s.k_training + s.k_validation;
    let window = prepared.slice_columns(start, start + 4).unwrap();
    let raw = mpjet_core::neural::predict_two_ahead(&params, &window, Some(scaling), None).unwrap();
    let base_targets = base.slice_columns(start + 4, start + 6).unwrap();
    for ((p, r), b) in pred.data().iter().zip(raw.data()).zip(base_targets.data()) {
        assert_eq!(*p, r + b);
    }
}
