//! The pipeline stages behind each subcommand. Stages communicate only
//! through files in the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpjet_core::dataset::{split, SplitSpec};
use mpjet_core::field::{downsample_columns, subtract_baseline, Grid2D, ScalingParams, SnapshotMatrix};
use mpjet_core::hodmd::{
    hodmd_decompose, imaginary_residue, mode_table, mode_table_from, rom_reconstruct, HodmdConfig, Rom,
};
use mpjet_core::metrics::{rrmse, ErrorSeries};
use mpjet_core::neural::{
    forecast_errors, param_count, persistence_forecasts, predict_two_ahead, prepare_forecast_data, train,
    window_forecasts, ArchKind, ArchSpec, Clock, ModelParams, HORIZON,
};
use mpjet_core::synth::{generate_flow, ground_truth_modes, reference, ModeSpec, SpatialPattern, SynthConfig};

use crate::config::{FlowKind, RunConfig};
use crate::error::{AppError, AppResult};
use crate::formats::{self, fmt_f64};
use crate::manifest::{write_atomic, RunManifest, Timings};

pub const SNAPSHOTS: &str = "snapshots.mpjf";
pub const GROUND_TRUTH: &str = "ground_truth_modes.csv";
pub const MODES: &str = "modes.csv";
pub const ROM: &str = "rom.mpjr";
pub const RECONSTRUCTION: &str = "reconstruction.mpjf";
pub const RECONSTRUCTION_CSV: &str = "reconstruction.csv";
pub const PREPARED: &str = "prepared.mpjf";
pub const SCALING: &str = "scaling.csv";
pub const REPORT: &str = "report.txt";

pub fn checkpoint_name(kind: ArchKind) -> String {
    format!("{}.mpjn", kind.name())
}

pub fn train_report_name(kind: ArchKind) -> String {
    format!("{}_train.csv", kind.name())
}

pub fn prediction_name(kind: ArchKind) -> String {
    format!("{}_prediction.mpjf", kind.name())
}

pub fn evaluation_name(kind: ArchKind) -> String {
    format!("{}_evaluation.csv", kind.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Decompose,
    Reconstruct,
    Preprocess,
    Train,
    Predict,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Decompose => "decompose",
            Stage::Reconstruct => "reconstruct",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Shared state of one command invocation.
struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    manifest: RunManifest,
    timings: Timings,
    start: Instant,
}

impl<'a> Run<'a> {
    fn read(&mut self, path: &Path, producer: &'static str) -> AppResult<Vec<u8>> {
        let bytes = formats::read_input(path, producer)?;
        self.manifest.input(&display_name(path), &bytes);
        Ok(bytes)
    }

    fn snapshots(&mut self, path: &Path, producer: &'static str) -> AppResult<SnapshotMatrix> {
        let bytes = self.read(path, producer)?;
        formats::decode_snapshots(&bytes, path)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> AppResult<()> {
        write_atomic(&self.out.join(name), bytes)?;
        self.manifest.output(name, bytes);
        Ok(())
    }

    fn lap(&mut self, stage: &str) {
        self.timings.record(stage, self.start.elapsed().as_secs_f64());
        self.start = Instant::now();
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input_path(&self) -> PathBuf {
        self.cfg.input.clone().unwrap_or_else(|| self.out_path(SNAPSHOTS))
    }

    /// The analysed field after the configured column downsampling.
    fn field(&mut self) -> AppResult<SnapshotMatrix> {
        let path = self.input_path();
        let v = self.snapshots(&path, "generate")?;
        Ok(downsample_columns(&v, self.cfg.downsample)?)
    }

    fn baseline(&mut self) -> AppResult<Option<SnapshotMatrix>> {
        let Some(path) = self.cfg.baseline.clone() else { return Ok(None) };
        let v = self.snapshots(&path, "generate")?;
        Ok(Some(downsample_columns(&v, self.cfg.downsample)?))
    }

    fn prepared(&mut self) -> AppResult<SnapshotMatrix> {
        let path = self.out_path(PREPARED);
        self.snapshots(&path, "preprocess")
    }

    fn scaling(&mut self) -> AppResult<Option<ScalingParams>> {
        if !self.cfg.scaling {
            return Ok(None);
        }
        let path = self.out_path(SCALING);
        let bytes = self.read(&path, "preprocess")?;
        let text = String::from_utf8(bytes)
            .map_err(|_| AppError::Corrupt { path: path.clone(), reason: "not UTF-8".into() })?;
        formats::parse_scaling_csv(&text, &path).map(Some)
    }

    fn checkpoint(&mut self) -> AppResult<ModelParams> {
        let path = self.out_path(&checkpoint_name(self.cfg.arch));
        let bytes = self.read(&path, "train")?;
        formats::decode_checkpoint(&bytes, &path)
    }
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Runs one stage and writes its manifest and timings into `out`.
pub fn run(stage: Stage, cfg: &RunConfig, out: &Path) -> AppResult<RunManifest> {
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let mut r = Run {
        cfg,
        out,
        manifest: RunManifest::new(stage.name(), cfg.seed, cfg.resolved()),
        timings: Timings::default(),
        start: Instant::now(),
    };
    match stage {
        Stage::Generate => generate(&mut r)?,
        Stage::Decompose => decompose(&mut r)?,
        Stage::Reconstruct => reconstruct(&mut r)?,
        Stage::Preprocess => preprocess(&mut r)?,
        Stage::Train => train_stage(&mut r)?,
        Stage::Predict => predict(&mut r)?,
        Stage::Evaluate => evaluate(&mut r)?,
        Stage::Report => report(&mut r)?,
    }
    r.manifest.write(out)?;
    r.timings.write(out, stage.name())?;
    Ok(r.manifest)
}

pub fn synth_config(cfg: &RunConfig) -> SynthConfig {
    let modes = match cfg.flow {
        FlowKind::FiveMode => reference::five_mode_modes(),
        FlowKind::QuasiPeriodic => reference::quasi_periodic_modes(),
        FlowKind::Steady => vec![ModeSpec {
            amplitude: 1.0,
            growth_rate: 0.0,
            frequency: 0.0,
            phase: 0.0,
            pattern: SpatialPattern::GaussianSinusoid { x0: 0.5, y0: 0.5, width: 0.3, kx: 1.0, ky: 0.0, phase: 0.0 },
        }],
    };
    SynthConfig { grid: cfg.grid, k: cfg.k, dt: cfg.dt, modes, noise_std: cfg.noise_std, seed: cfg.seed }
}

fn generate(r: &mut Run) -> AppResult<()> {
    let sc = synth_config(r.cfg);
    let (v, _) = generate_flow(&sc)?;
    let truth = ground_truth_modes(&sc)?;
    let rows = mode_table_from(&truth, r.cfg.length_scale, r.cfg.velocity_scale)?;
    r.lap("generate");
    r.write(SNAPSHOTS, &formats::encode_snapshots(&v))?;
    r.write(GROUND_TRUTH, formats::mode_csv(&rows).as_bytes())?;
    r.manifest.result("modes", truth.len());
    Ok(())
}

fn hodmd_config(r: &Run, v: &SnapshotMatrix) -> AppResult<HodmdConfig> {
    let h = HodmdConfig { d: r.cfg.d, eps1: r.cfg.eps1, eps: r.cfg.eps, dt: v.dt() };
    h.validate(v.k()).map_err(|e| AppError::Config(e.to_string()))?;
    Ok(h)
}

fn decompose(r: &mut Run) -> AppResult<()> {
    let v = r.field()?;
    let h = hodmd_config(r, &v)?;
    let result = hodmd_decompose(&v, &h)?;
    let mut rom = Rom::new(result, v.dt())?;
    if let Some(m) = r.cfg.rom_modes {
        rom = rom.truncated(m)?;
    }
    r.lap("decompose");
    let t: Vec<usize> = (0..v.k()).collect();
    let rec = rom_reconstruct(&rom, &t)?;
    let err = rrmse(rec.data(), v.data())?;
    let residue = imaginary_residue(&rom, &t);
    r.lap("reconstruct");
    let rows = mode_table(&rom.result, r.cfg.length_scale, r.cfg.velocity_scale)?;
    r.write(MODES, formats::mode_csv(&rows).as_bytes())?;
    r.write(ROM, &formats::encode_rom(&rom))?;
    r.manifest.result("spatial_complexity", rom.result.spatial_complexity);
    r.manifest.result("spectral_complexity", rom.result.spectral_complexity());
    r.manifest.result("reconstruction_rrmse", fmt_f64(err));
    r.manifest.result("imaginary_residue", fmt_f64(residue));
    Ok(())
}

fn reconstruct(r: &mut Run) -> AppResult<()> {
    let path = r.out_path(ROM);
    let bytes = r.read(&path, "decompose")?;
    let rom = formats::decode_rom(&bytes, &path)?;
    let v = r.field()?;
    if v.grid() != rom.result.grid {
        return Err(AppError::Data("reduced-order model and snapshots use different grids".into()));
    }
    let t: Vec<usize> = (0..v.k()).collect();
    let rec = rom_reconstruct(&rom, &t)?;
    let err = rrmse(rec.data(), v.data())?;
    r.lap("reconstruct");
    r.write(RECONSTRUCTION, &formats::encode_snapshots(&rec))?;
    r.write(RECONSTRUCTION_CSV, formats::snapshots_csv(&rec).as_bytes())?;
    r.manifest.result("modes", rom.result.modes.len());
    r.manifest.result("reconstruction_rrmse", fmt_f64(err));
    Ok(())
}

fn write_split(r: &mut Run, s: SplitSpec) {
    r.manifest.result("k_training", s.k_training);
    r.manifest.result("k_validation", s.k_validation);
    r.manifest.result("k_test", s.k_test);
}

fn preprocess(r: &mut Run) -> AppResult<()> {
    let v = r.field()?;
    let prepared = match r.baseline()? {
        Some(b) => subtract_baseline(&v, &b).map_err(|e| AppError::Data(e.to_string()))?,
        None => v,
    };
    let s = r.cfg.split_for(prepared.k())?;
    let scaling = if r.cfg.scaling {
        let train = split(&prepared, s)?.train.ok_or_else(|| AppError::Config("training block is empty".into()))?;
        Some(mpjet_core::field::fit_minmax(&train)?)
    } else {
        None
    };
    r.lap("preprocess");
    r.write(PREPARED, &formats::encode_snapshots(&prepared))?;
    if let Some(sc) = scaling {
        r.write(SCALING, formats::scaling_csv(&sc).as_bytes())?;
    }
    write_split(r, s);
    Ok(())
}

fn arch_for(kind: ArchKind, q: usize, grid: Grid2D) -> AppResult<ArchSpec> {
    match kind {
        ArchKind::Rnn => ArchSpec::rnn(q, grid, HORIZON),
        ArchKind::Cnn => ArchSpec::cnn(q, grid, HORIZON),
    }
    .map_err(|e| {
        AppError::Config(format!("{} does not fit a {}x{} grid with q = {q}: {e}", kind.name(), grid.nx, grid.ny))
    })
}

/// Loads the prepared field and its windows, checking the stored scaling.
fn forecast_inputs(r: &mut Run) -> AppResult<(SnapshotMatrix, SplitSpec, mpjet_core::neural::ForecastData)> {
    let v = r.prepared()?;
    let stored = r.scaling()?;
    let s = r.cfg.split_for(v.k())?;
    let data = prepare_forecast_data(&v, s, r.cfg.q, r.cfg.arch)?;
    if data.scaling != stored {
        return Err(AppError::Data(format!("{SCALING} does not match {PREPARED}; rerun `mpjet preprocess`")));
    }
    Ok((v, s, data))
}

fn train_stage(r: &mut Run) -> AppResult<()> {
    let (v, s, data) = forecast_inputs(r)?;
    let arch = arch_for(r.cfg.arch, r.cfg.q, v.grid())?;
    let w = &data.windows;
    let empty =
        |what: &str| AppError::Config(format!("{what} block yields no windows of {} + {HORIZON} snapshots", r.cfg.q));
    let train_set = w.train.as_ref().filter(|d| !d.is_empty()).ok_or_else(|| empty("training"))?;
    let val_set = w.validation.as_ref().filter(|d| !d.is_empty()).ok_or_else(|| empty("validation"))?;
    let clock = WallClock(Instant::now());
    let (params, report) = train(&arch, train_set, val_set, &r.cfg.train, &clock)?;
    r.lap("train");
    r.write(&checkpoint_name(arch.kind), &formats::encode_checkpoint(&params))?;
    r.write(&train_report_name(arch.kind), formats::train_report_csv(&report).as_bytes())?;
    write_split(r, s);
    r.manifest.result("param_count", params.parameter_count());
    r.manifest.result("epochs_run", report.stopping_epoch);
    r.manifest.result("best_epoch", report.best_epoch);
    r.manifest.result("stop_reason", report.stop_reason.name());
    r.manifest.result("early_stopping", if r.cfg.train.early_stopping { "on" } else { "off" });
    r.manifest.result("best_val_loss", fmt_f64(report.history[report.best_epoch - 1].val_loss));
    Ok(())
}

/// Baseline values at prepared-field indices `first..first + HORIZON`.
fn baseline_targets(baseline: &SnapshotMatrix, first: usize) -> AppResult<Vec<f64>> {
    if first + HORIZON > baseline.k() {
        return Err(AppError::Data("baseline has fewer snapshots than the prepared field".into()));
    }
    Ok((first..first + HORIZON).flat_map(|k| baseline.column(k).iter().copied()).collect())
}

fn predict(r: &mut Run) -> AppResult<()> {
    let params = r.checkpoint()?;
    let v = r.prepared()?;
    let scaling = r.scaling()?;
    let baseline = r.baseline()?;
    let s = r.cfg.split_for(v.k())?;
    let q = params.arch().q;
    let test_start = s.k_training + s.k_validation;
    let windows = mpjet_core::dataset::window_count(s.k_test, q, HORIZON);
    if r.cfg.window >= windows {
        return Err(AppError::Config(format!(
            "window {} out of range: the test block has {windows} windows",
            r.cfg.window
        )));
    }
    let start = test_start + r.cfg.window;
    let window = v.slice_columns(start, start + q)?;
    let base = baseline.as_ref().map(|b| baseline_targets(b, start + q)).transpose()?;
    let pred = predict_two_ahead(&params, &window, scaling, base.as_deref())?;
    r.lap("predict");
    r.write(&prediction_name(params.arch().kind), &formats::encode_snapshots(&pred))?;
    r.manifest.result("first_predicted_index", start + q);
    Ok(())
}

fn evaluate(r: &mut Run) -> AppResult<()> {
    let params = r.checkpoint()?;
    let (_, s, data) = forecast_inputs(r)?;
    let baseline = r.baseline()?;
    let test = data.windows.test.as_ref().filter(|d| !d.is_empty()).ok_or_else(|| {
        AppError::Config(format!("test block yields no windows of {} + {HORIZON} snapshots", r.cfg.q))
    })?;
    let test_start = s.k_training + s.k_validation;
    let firsts: Vec<usize> = (0..test.len()).map(|w| test_start + test.target_indices(w).start).collect();
    let mut model = window_forecasts(&params, test, data.scaling)?;
    let mut naive = persistence_forecasts(test, data.scaling);
    if let Some(b) = &baseline {
        for (i, &first) in firsts.iter().enumerate() {
            let add = baseline_targets(b, first)?;
            for f in [&mut model[i], &mut naive[i]] {
                f.prediction.iter_mut().zip(&add).for_each(|(x, b)| *x += b);
                f.truth.iter_mut().zip(&add).for_each(|(x, b)| *x += b);
            }
        }
    }
    let errors = forecast_errors(&model)?;
    let persistence = forecast_errors(&naive)?;
    r.lap("evaluate");
    r.write(&evaluation_name(params.arch().kind), formats::evaluation_csv(&firsts, &errors).as_bytes())?;
    r.manifest.result("test_windows", errors.values.len());
    r.manifest.result("mean_rrmse", fmt_f64(errors.mean()));
    r.manifest.result("persistence_mean_rrmse", fmt_f64(persistence.mean()));
    Ok(())
}

/// Reference totals of the two forecasters on a 100 x 100 grid.
pub const REFERENCE_PARAMS: [(ArchKind, usize); 2] = [(ArchKind::Rnn, 18_349_880), (ArchKind::Cnn, 1_690_027)];

fn report(r: &mut Run) -> AppResult<()> {
    let mut s = String::new();
    let reference_grid = Grid2D::new(100, 100).expect("positive");
    let _ = writeln!(s, "parameter counts (q = {}, two-snapshot head)", r.cfg.q);
    let mut at_reference = Vec::new();
    for (kind, reference) in REFERENCE_PARAMS {
        let here =
            arch_for(kind, r.cfg.q, r.cfg.grid).map(|a| param_count(&a).to_string()).unwrap_or_else(|_| "n/a".into());
        let big = param_count(&arch_for(kind, r.cfg.q, reference_grid)?);
        at_reference.push(big);
        let _ = writeln!(
            s,
            "  {}: {here} on {}x{}, {big} on 100x100 (reference {reference} at q = 10)",
            kind.name(),
            r.cfg.grid.nx,
            r.cfg.grid.ny
        );
    }
    let ratio = at_reference[0] as f64 / at_reference[1] as f64;
    let _ = writeln!(s, "  rnn/cnn ratio on 100x100: {ratio:.3}");
    r.manifest.result("param_ratio_100x100", format!("{ratio:.6}"));

    let modes_path = r.out_path(MODES);
    if modes_path.exists() {
        let text = String::from_utf8_lossy(&r.read(&modes_path, "decompose")?).into_owned();
        let rows = text.lines().count().saturating_sub(1);
        let _ = writeln!(s, "\nmode table ({rows} modes, largest first)");
        for line in text.lines().take(11) {
            let _ = writeln!(s, "  {line}");
        }
    }
    for kind in [ArchKind::Rnn, ArchKind::Cnn] {
        let path = r.out_path(&evaluation_name(kind));
        if path.exists() {
            let text = String::from_utf8_lossy(&r.read(&path, "evaluate")?).into_owned();
            if let Some(mean) = formats::parse_evaluation_mean(&text) {
                let _ = writeln!(s, "\n{} mean test rrmse: {mean:.6}", kind.name());
                r.manifest.result(&format!("{}_mean_rrmse", kind.name()), fmt_f64(mean));
            }
        }
    }
    r.lap("report");
    r.write(REPORT, s.as_bytes())?;
    Ok(())
}

/// Per-window errors of the persistence forecast on the test block of `v`.
pub fn persistence_errors(v: &SnapshotMatrix, s: SplitSpec, q: usize) -> AppResult<ErrorSeries> {
    let test = split(v, s)?.test.ok_or_else(|| AppError::Config("test block is empty".into()))?;
    let w = mpjet_core::dataset::rolling_windows(&test, q, HORIZON)?;
    Ok(forecast_errors(&persistence_forecasts(&w, None))?)
}
