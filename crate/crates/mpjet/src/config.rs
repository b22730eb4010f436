//! Flat `key = value` run configuration with named case presets.
//!
//! One setting per line, `#` starts a comment. Unknown or repeated keys are
//! rejected, and every value is validated before any command runs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use mpjet_core::dataset::SplitSpec;
use mpjet_core::field::Grid2D;
use mpjet_core::neural::{AdamConfig, ArchKind, TrainConfig};

use crate::error::{AppError, AppResult};

/// Synthetic flow families available to `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// Two conjugate pairs and one steady mode.
    FiveMode,
    /// Three undamped conjugate pairs with incommensurate periods.
    QuasiPeriodic,
    /// A single steady mode; every snapshot is identical without noise.
    Steady,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::FiveMode => "five-mode",
            FlowKind::QuasiPeriodic => "quasi-periodic",
            FlowKind::Steady => "steady",
        }
    }
}

impl FromStr for FlowKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "five-mode" => Ok(FlowKind::FiveMode),
            "quasi-periodic" => Ok(FlowKind::QuasiPeriodic),
            "steady" => Ok(FlowKind::Steady),
            _ => Err("expected five-mode, quasi-periodic or steady".into()),
        }
    }
}

/// Per-case decomposition and training settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub d: usize,
    pub eps: f64,
    pub split: SplitSpec,
    pub early_stopping: bool,
}

const SIMPLE_SPLIT: SplitSpec = SplitSpec { k_training: 184, k_validation: 45, k_test: 122 };
const MODIFIED_SPLIT: SplitSpec = SplitSpec { k_training: 105, k_validation: 39, k_test: 157 };

pub const PRESETS: [Preset; 6] = [
    Preset { name: "simple-singlephase", d: 100, eps: 7e-3, split: SIMPLE_SPLIT, early_stopping: true },
    Preset { name: "simple-multiphase", d: 60, eps: 7e-3, split: SIMPLE_SPLIT, early_stopping: true },
    Preset { name: "simple-multiphase-st", d: 60, eps: 7e-3, split: SIMPLE_SPLIT, early_stopping: true },
    Preset { name: "modified-singlephase", d: 60, eps: 2e-3, split: MODIFIED_SPLIT, early_stopping: false },
    Preset { name: "modified-multiphase", d: 100, eps: 8e-3, split: MODIFIED_SPLIT, early_stopping: false },
    Preset { name: "modified-multiphase-st", d: 100, eps: 5e-3, split: MODIFIED_SPLIT, early_stopping: false },
];

pub fn preset(name: &str) -> Option<Preset> {
    PRESETS.iter().copied().find(|p| p.name == name)
}

const KEYS: &[&str] = &[
    "preset",
    "seed",
    "flow",
    "nx",
    "ny",
    "k",
    "dt",
    "noise_std",
    "input",
    "baseline",
    "downsample",
    "d",
    "eps",
    "eps1",
    "length_scale",
    "velocity_scale",
    "rom_modes",
    "k_training",
    "k_validation",
    "k_test",
    "q",
    "arch",
    "scaling",
    "batch_size",
    "epochs",
    "patience",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_epsilon",
    "early_stopping",
    "window",
];

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub seed: u64,
    pub flow: FlowKind,
    pub grid: Grid2D,
    pub k: usize,
    pub dt: f64,
    pub noise_std: f64,
    /// Snapshot file to analyse; defaults to the `generate` output.
    pub input: Option<PathBuf>,
    /// Single-phase snapshot file subtracted before forecasting.
    pub baseline: Option<PathBuf>,
    pub downsample: usize,
    pub d: usize,
    pub eps: f64,
    pub eps1: f64,
    pub length_scale: f64,
    pub velocity_scale: f64,
    pub rom_modes: Option<usize>,
    /// Explicit split; otherwise the reference split scaled to the data.
    pub split: Option<SplitSpec>,
    pub q: usize,
    pub arch: ArchKind,
    pub scaling: bool,
    pub train: TrainConfig,
    /// Test window used by `predict`.
    pub window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 0;
        Self {
            preset: None,
            seed,
            flow: FlowKind::QuasiPeriodic,
            grid: Grid2D::new(20, 20).expect("positive"),
            k: 351,
            dt: 1.0,
            noise_std: 0.02,
            input: None,
            baseline: None,
            downsample: 1,
            d: 10,
            eps: 7e-3,
            eps1: 7e-3,
            length_scale: 1.0,
            velocity_scale: 1.0,
            rom_modes: None,
            split: None,
            q: 10,
            arch: ArchKind::Cnn,
            scaling: true,
            train: TrainConfig::for_kind(ArchKind::Cnn, seed),
            window: 0,
        }
    }
}

/// The reference split proportions used when the config gives none.
pub const DEFAULT_SPLIT: SplitSpec = SIMPLE_SPLIT;

fn config_err(line: usize, msg: impl std::fmt::Display) -> AppError {
    if line == 0 {
        AppError::Config(msg.to_string())
    } else {
        AppError::Config(format!("line {line}: {msg}"))
    }
}

/// Splits config text into `(key, value, line)` entries.
pub fn parse_pairs(text: &str) -> AppResult<BTreeMap<String, (String, usize)>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| config_err(line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(config_err(line, format!("unknown key `{k}`")));
        }
        if v.is_empty() {
            return Err(config_err(line, format!("`{k}` has no value")));
        }
        if out.insert(k.to_string(), (v.to_string(), line)).is_some() {
            return Err(config_err(line, format!("`{k}` given twice")));
        }
    }
    Ok(out)
}

struct Values(BTreeMap<String, (String, usize)>);

impl Values {
    fn get<T: FromStr>(&self, key: &str) -> AppResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| config_err(*line, format!("`{key} = {v}`: {e}"))),
        }
    }

    fn switch(&self, key: &str) -> AppResult<Option<bool>> {
        match self.0.get(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "on" | "true" => Ok(Some(true)),
                "off" | "false" => Ok(Some(false)),
                _ => Err(config_err(*line, format!("`{key}` must be on or off"))),
            },
        }
    }
}

struct Kind(ArchKind);

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rnn" => Ok(Kind(ArchKind::Rnn)),
            "cnn" => Ok(Kind(ArchKind::Cnn)),
            _ => Err("expected rnn or cnn".into()),
        }
    }
}

impl RunConfig {
    /// Parses and validates config text. `seed_override` replaces `seed`.
    pub fn parse(text: &str, seed_override: Option<u64>) -> AppResult<Self> {
        let vals = Values(parse_pairs(text)?);
        let mut c = RunConfig::default();

        let preset_name: Option<String> = vals.get("preset")?;
        let preset = match &preset_name {
            None => None,
            Some(n) => Some(preset(n).ok_or_else(|| {
                let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
                AppError::Config(format!("unknown preset `{n}` (known: {})", names.join(", ")))
            })?),
        };
        c.preset = preset_name;
        if let Some(p) = preset {
            c.d = p.d;
            c.eps = p.eps;
            c.eps1 = p.eps;
            c.split = Some(p.split);
            c.k = p.split.total();
        }

        c.seed = seed_override.or(vals.get("seed")?).unwrap_or(c.seed);
        c.flow = vals.get("flow")?.unwrap_or(c.flow);
        let nx = vals.get("nx")?.unwrap_or(c.grid.nx);
        let ny = vals.get("ny")?.unwrap_or(c.grid.ny);
        c.grid = Grid2D::new(nx, ny).map_err(|e| AppError::Config(e.to_string()))?;
        c.k = vals.get("k")?.unwrap_or(c.k);
        c.dt = vals.get("dt")?.unwrap_or(c.dt);
        c.noise_std = vals.get("noise_std")?.unwrap_or(c.noise_std);
        c.input = vals.get("input")?;
        c.baseline = vals.get("baseline")?;
        c.downsample = vals.get("downsample")?.unwrap_or(c.downsample);
        c.d = vals.get("d")?.unwrap_or(c.d);
        c.eps = vals.get("eps")?.unwrap_or(c.eps);
        c.eps1 = vals.get("eps1")?.unwrap_or(c.eps1);
        c.length_scale = vals.get("length_scale")?.unwrap_or(c.length_scale);
        c.velocity_scale = vals.get("velocity_scale")?.unwrap_or(c.velocity_scale);
        c.rom_modes = vals.get("rom_modes")?;

        let split_parts: [Option<usize>; 3] = [vals.get("k_training")?, vals.get("k_validation")?, vals.get("k_test")?];
        match split_parts {
            [Some(a), Some(b), Some(t)] => c.split = Some(SplitSpec { k_training: a, k_validation: b, k_test: t }),
            [None, None, None] => {}
            _ => return Err(AppError::Config("give all of k_training, k_validation and k_test, or none".into())),
        }

        c.q = vals.get("q")?.unwrap_or(c.q);
        c.arch = vals.get::<Kind>("arch")?.map(|k| k.0).unwrap_or(c.arch);
        let scaling = vals.switch("scaling")?;
        c.scaling = scaling.unwrap_or(c.arch == ArchKind::Cnn);

        let mut t = TrainConfig::for_kind(c.arch, c.seed);
        if let Some(p) = preset {
            t.early_stopping = p.early_stopping;
        }
        t.batch_size = vals.get("batch_size")?.unwrap_or(t.batch_size);
        t.epochs = vals.get("epochs")?.unwrap_or(t.epochs);
        t.patience = vals.get("patience")?.unwrap_or(t.patience);
        t.adam = AdamConfig {
            alpha: vals.get("learning_rate")?.unwrap_or(t.adam.alpha),
            beta1: vals.get("beta1")?.unwrap_or(t.adam.beta1),
            beta2: vals.get("beta2")?.unwrap_or(t.adam.beta2),
            epsilon: vals.get("adam_epsilon")?.unwrap_or(t.adam.epsilon),
        };
        t.early_stopping = vals.switch("early_stopping")?.unwrap_or(t.early_stopping);
        c.train = t;
        c.window = vals.get("window")?.unwrap_or(c.window);

        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> AppResult<()> {
        let bad = |m: &str| Err(AppError::Config(m.into()));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !positive(self.dt) {
            return bad("dt must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if self.downsample == 0 {
            return bad("downsample must be at least 1");
        }
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            return bad("eps and eps1 must lie in (0, 1)");
        }
        if !positive(self.length_scale) || !positive(self.velocity_scale) {
            return bad("length_scale and velocity_scale must be positive");
        }
        if self.rom_modes == Some(0) {
            return bad("rom_modes must be at least 1");
        }
        if self.q == 0 {
            return bad("q must be at least 1");
        }
        match (self.arch, self.scaling) {
            (ArchKind::Cnn, false) => return bad("the cnn consumes [0, 1]-scaled data; set scaling = on"),
            (ArchKind::Rnn, true) => return bad("the rnn consumes unscaled data; set scaling = off"),
            _ => {}
        }
        self.train.validate().map_err(|e| AppError::Config(e.to_string()))
    }

    /// Split used for a field of `k` snapshots.
    pub fn split_for(&self, k: usize) -> AppResult<SplitSpec> {
        match self.split {
            Some(s) if s.total() == k => Ok(s),
            Some(s) => Err(AppError::Config(format!(
                "split {} + {} + {} = {} does not match the {k} prepared snapshots",
                s.k_training,
                s.k_validation,
                s.k_test,
                s.total()
            ))),
            None => Ok(DEFAULT_SPLIT.scaled_to(k)),
        }
    }

    /// Canonical `key = value` listing of every resolved setting.
    pub fn resolved(&self) -> BTreeMap<&'static str, String> {
        let f = crate::formats::fmt_f64;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let mut m = BTreeMap::new();
        m.insert("preset", self.preset.clone().unwrap_or_else(|| "-".into()));
        m.insert("seed", self.seed.to_string());
        m.insert("flow", self.flow.name().into());
        m.insert("nx", self.grid.nx.to_string());
        m.insert("ny", self.grid.ny.to_string());
        m.insert("k", self.k.to_string());
        m.insert("dt", f(self.dt));
        m.insert("noise_std", f(self.noise_std));
        m.insert("input", path(&self.input));
        m.insert("baseline", path(&self.baseline));
        m.insert("downsample", self.downsample.to_string());
        m.insert("d", self.d.to_string());
        m.insert("eps", f(self.eps));
        m.insert("eps1", f(self.eps1));
        m.insert("length_scale", f(self.length_scale));
        m.insert("velocity_scale", f(self.velocity_scale));
        m.insert("rom_modes", self.rom_modes.map_or("-".into(), |m| m.to_string()));
        let split = |v: Option<usize>| v.map_or("auto".to_string(), |v| v.to_string());
        m.insert("k_training", split(self.split.map(|s| s.k_training)));
        m.insert("k_validation", split(self.split.map(|s| s.k_validation)));
        m.insert("k_test", split(self.split.map(|s| s.k_test)));
        m.insert("q", self.q.to_string());
        m.insert("arch", self.arch.name().into());
        m.insert("scaling", if self.scaling { "on" } else { "off" }.into());
        m.insert("batch_size", self.train.batch_size.to_string());
        m.insert("epochs", self.train.epochs.to_string());
        m.insert("patience", self.train.patience.to_string());
        m.insert("learning_rate", f(self.train.adam.alpha));
        m.insert("beta1", f(self.train.adam.beta1));
        m.insert("beta2", f(self.train.adam.beta2));
        m.insert("adam_epsilon", f(self.train.adam.epsilon));
        m.insert("early_stopping", if self.train.early_stopping { "on" } else { "off" }.into());
        m.insert("window", self.window.to_string());
        debug_assert_eq!(m.len(), KEYS.len());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = RunConfig::parse("# nothing\n\n", None).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn preset_loads_case_parameters() {
        let c = RunConfig::parse("preset = simple-singlephase\n", None).unwrap();
        assert_eq!((c.d, c.eps, c.eps1), (100, 7e-3, 7e-3));
        assert_eq!(c.split, Some(SplitSpec { k_training: 184, k_validation: 45, k_test: 122 }));
        assert!(c.train.early_stopping);
        let m = RunConfig::parse("preset = modified-singlephase", None).unwrap();
        assert_eq!((m.d, m.eps), (60, 2e-3));
        assert_eq!(m.split.unwrap().total(), 301);
        assert!(!m.train.early_stopping);
        assert_eq!(preset("modified-multiphase").unwrap().eps, 8e-3);
        assert_eq!(preset("modified-multiphase-st").unwrap().eps, 5e-3);
    }

    #[test]
    fn explicit_keys_override_presets() {
        let c = RunConfig::parse("d = 12 # shorter\npreset = simple-multiphase\nearly_stopping = off\n", None).unwrap();
        assert_eq!(c.d, 12);
        assert!(!c.train.early_stopping);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        for bad in ["colour = red", "d = 3\nd = 4", "d 3", "d = x", "preset = nope", "k_training = 5", "eps = 2"] {
            let e = RunConfig::parse(bad, None).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn scaling_must_match_architecture() {
        assert!(!RunConfig::parse("arch = rnn", None).unwrap().scaling);
        assert!(RunConfig::parse("arch = rnn\nscaling = on", None).is_err());
        assert!(RunConfig::parse("arch = cnn\nscaling = off", None).is_err());
        assert_eq!(RunConfig::parse("arch = rnn", None).unwrap().train.epochs, 140);
    }

    #[test]
    fn seed_override_wins() {
        let c = RunConfig::parse("seed = 4", Some(9)).unwrap();
        assert_eq!((c.seed, c.train.seed), (9, 9));
    }

    #[test]
    fn split_resolution() {
        let c = RunConfig::default();
        assert_eq!(c.split_for(351).unwrap(), DEFAULT_SPLIT);
        assert_eq!(c.split_for(140).unwrap(), SplitSpec { k_training: 73, k_validation: 18, k_test: 49 });
        let p = RunConfig::parse("preset = simple-singlephase", None).unwrap();
        assert!(p.split_for(300).is_err());
        assert_eq!(c.resolved().len(), KEYS.len());
    }
}
