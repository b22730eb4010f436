//! Synthetic flows with known modal content.
//!
//! Fields are built from an explicit modal expansion so that decomposition
//! and forecasting results can be checked against exact ground truth.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::field::{Grid2D, SnapshotMatrix};
use crate::fmath;
use crate::hodmd::{evaluate_expansion, DmdMode};
use crate::linalg::rms_normalize;

/// Analytic spatial pattern evaluated on the unit square, with
/// `x = i / nx` and `y = j / ny`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialPattern {
    Constant {
        value: f64,
    },
    /// `cos(2 pi kx x + phase) * cos(2 pi ky y)`.
    Sinusoid {
        kx: f64,
        ky: f64,
        phase: f64,
    },
    /// Gaussian bump of width `width` centred at `(x0, y0)` modulating
    /// `cos(2 pi (kx x + ky y) + phase)`.
    GaussianSinusoid {
        x0: f64,
        y0: f64,
        width: f64,
        kx: f64,
        ky: f64,
        phase: f64,
    },
    /// Complex plane wave `exp(i 2 pi (kx x + ky y))`.
    TravelingWave {
        kx: f64,
        ky: f64,
    },
}

impl SpatialPattern {
    pub fn is_real(&self) -> bool {
        !matches!(self, SpatialPattern::TravelingWave { .. })
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        match *self {
            SpatialPattern::Constant { value } => Complex64::new(value, 0.0),
            SpatialPattern::Sinusoid { kx, ky, phase } => {
                Complex64::new(fmath::cos(TAU * kx * x + phase) * fmath::cos(TAU * ky * y), 0.0)
            }
            SpatialPattern::GaussianSinusoid { x0, y0, width, kx, ky, phase } => {
                let r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
                let env = fmath::exp(-r2 / (2.0 * width * width));
                Complex64::new(env * fmath::cos(TAU * (kx * x + ky * y) + phase), 0.0)
            }
            SpatialPattern::TravelingWave { kx, ky } => {
                let arg = TAU * (kx * x + ky * y);
                Complex64::new(fmath::cos(arg), fmath::sin(arg))
            }
        }
    }

    /// Pattern sampled on `grid`, streamwise index fastest.
    pub fn sample(&self, grid: Grid2D) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                out.push(self.eval(i as f64 / grid.nx as f64, j as f64 / grid.ny as f64));
            }
        }
        out
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            SpatialPattern::Constant { value } => alloc::vec![value],
            SpatialPattern::Sinusoid { kx, ky, phase } => alloc::vec![kx, ky, phase],
            SpatialPattern::GaussianSinusoid { x0, y0, width, kx, ky, phase } => {
                alloc::vec![x0, y0, width, kx, ky, phase]
            }
            SpatialPattern::TravelingWave { kx, ky } => alloc::vec![kx, ky],
        }
    }
}

/// One generating term. Oscillatory terms (`frequency != 0`) are emitted
/// together with their complex conjugate, each member carrying `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub amplitude: f64,
    pub growth_rate: f64,
    pub frequency: f64,
    /// Temporal phase of the complex amplitude (radians).
    pub phase: f64,
    pub pattern: SpatialPattern,
}

/// Full description of a synthetic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid: Grid2D,
    pub k: usize,
    pub dt: f64,
    pub modes: Vec<ModeSpec>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return Err(invalid!("grid must be non-empty"));
        }
        if self.k == 0 {
            return Err(invalid!("sample count must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(alloc::format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Validation(alloc::format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.modes.is_empty() {
            return Err(Error::Validation("at least one mode is required".into()));
        }
        for (n, m) in self.modes.iter().enumerate() {
            let finite = [m.amplitude, m.growth_rate, m.frequency, m.phase]
                .iter()
                .chain(m.pattern.params().iter())
                .all(|x| x.is_finite());
            if !finite {
                return Err(Error::Validation(alloc::format!("mode {n} has non-finite parameters")));
            }
            if m.amplitude < 0.0 {
                return Err(Error::Validation(alloc::format!("mode {n} has negative amplitude")));
            }
            if m.frequency == 0.0 {
                if !m.pattern.is_real() {
                    return Err(Error::Validation(alloc::format!(
                        "mode {n}: a non-oscillating mode needs a real spatial pattern"
                    )));
                }
                if fmath::sin(m.phase).abs() > 1e-12 {
                    return Err(Error::Validation(alloc::format!(
                        "mode {n}: a non-oscillating mode must have phase 0 or pi"
                    )));
                }
            }
            if let SpatialPattern::GaussianSinusoid { width, .. } = m.pattern {
                if !(width > 0.0) {
                    return Err(Error::Validation(alloc::format!("mode {n}: Gaussian width must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Ground-truth DMD modes of a configuration: unit-RMS patterns with the
/// RMS folded into the amplitudes, conjugate partners included.
pub fn ground_truth_modes(cfg: &SynthConfig) -> Result<Vec<DmdMode>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (n, spec) in cfg.modes.iter().enumerate() {
        let raw = spec.pattern.sample(cfg.grid);
        let (spatial, scale) = rms_normalize(&raw)
            .map_err(|_| Error::Validation(alloc::format!("mode {n}: pattern vanishes on the grid")))?;
        let amplitude = spec.amplitude * scale;
        if spec.frequency == 0.0 {
            let phase = if fmath::cos(spec.phase) < 0.0 { PI } else { 0.0 };
            out.push(DmdMode { spatial, amplitude, growth_rate: spec.growth_rate, frequency: 0.0, phase });
        } else {
            let conj = spatial.iter().map(|z| z.conj()).collect();
            out.push(DmdMode {
                spatial,
                amplitude,
                growth_rate: spec.growth_rate,
                frequency: spec.frequency,
                phase: spec.phase,
            });
            out.push(DmdMode {
                spatial: conj,
                amplitude,
                growth_rate: spec.growth_rate,
                frequency: -spec.frequency,
                phase: -spec.phase,
            });
        }
    }
    Ok(out)
}

/// Noise-free complex expansion at snapshot `k`.
pub fn clean_snapshot(modes: &[DmdMode], cfg: &SynthConfig, k: usize) -> Vec<Complex64> {
    evaluate_expansion(modes, cfg.grid.len(), cfg.time(k))
}

/// RMS of the noise-free field over all snapshots; useful to set noise
/// levels relative to the signal.
pub fn clean_field_rms(cfg: &SynthConfig) -> Result<f64> {
    let modes = ground_truth_modes(cfg)?;
    let mut sum = 0.0;
    for k in 0..cfg.k {
        sum += clean_snapshot(&modes, cfg, k).iter().map(|z| z.re * z.re).sum::<f64>();
    }
    Ok(fmath::sqrt(sum / (cfg.k * cfg.grid.len()) as f64))
}

/// Generates the snapshot matrix and its ground-truth modes.
///
/// Snapshot `k` is the real part of the expansion at `t_k = k dt` plus
/// i.i.d. Gaussian noise. Each snapshot draws its noise from its own ChaCha
/// stream of the seed, so results do not depend on evaluation order.
pub fn generate_flow(cfg: &SynthConfig) -> Result<(SnapshotMatrix, Vec<DmdMode>)> {
    let modes = ground_truth_modes(cfg)?;
    let j = cfg.grid.len();
    let mut data = Vec::with_capacity(j * cfg.k);
    for k in 0..cfg.k {
        let clean = clean_snapshot(&modes, cfg, k);
        if cfg.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            for z in clean {
                let e: f64 = StandardNormal.sample(&mut rng);
                data.push(z.re + cfg.noise_std * e);
            }
        } else {
            data.extend(clean.into_iter().map(|z| z.re));
        }
    }
    let v = SnapshotMatrix::new(cfg.grid, cfg.k, cfg.dt, data)
        .map_err(|e| Error::Validation(alloc::format!("generated field invalid: {e}")))?;
    Ok((v, modes))
}

/// Naive forecaster: for every rolling window of `q` inputs the two
/// predicted snapshots both repeat the last input.
///
/// Output column `2 i + h` is the prediction for source index `i + q + h`.
pub fn persistence_baseline(v: &SnapshotMatrix, q: usize) -> Result<SnapshotMatrix> {
    if q == 0 {
        return Err(invalid!("window length must be positive"));
    }
    if v.k() < q + 2 {
        return Err(invalid!("need K >= q + 2 = {} snapshots, got {}", q + 2, v.k()));
    }
    let windows = v.k() - q - 1;
    let mut data = Vec::with_capacity(2 * windows * v.j());
    for i in 0..windows {
        let last = v.column(i + q - 1);
        data.extend_from_slice(last);
        data.extend_from_slice(last);
    }
    SnapshotMatrix::new(v.grid(), 2 * windows, v.dt(), data)
}

/// Reference flows used by the test suites and the CLI defaults.
pub mod reference {
    use super::*;

    /// Two conjugate pairs plus one steady mode; three spatial structures
    /// carry five modes, so the spatial complexity is below the spectral one.
    pub fn five_mode_modes() -> Vec<ModeSpec> {
        alloc::vec![
            ModeSpec {
                amplitude: 1.0,
                growth_rate: 0.0,
                frequency: 2.0,
                phase: 0.3,
                pattern: SpatialPattern::Sinusoid { kx: 1.0, ky: 1.0, phase: 0.0 },
            },
            ModeSpec {
                amplitude: 0.6,
                growth_rate: -0.05,
                frequency: 5.0,
                phase: -1.1,
                pattern: SpatialPattern::GaussianSinusoid {
                    x0: 0.4,
                    y0: 0.6,
                    width: 0.2,
                    kx: 2.0,
                    ky: 1.0,
                    phase: 0.3
                },
            },
            ModeSpec {
                amplitude: 0.8,
                growth_rate: 0.0,
                frequency: 0.0,
                phase: 0.0,
                pattern: SpatialPattern::GaussianSinusoid {
                    x0: 0.5,
                    y0: 0.5,
                    width: 0.3,
                    kx: 0.0,
                    ky: 0.0,
                    phase: 0.0
                },
            },
        ]
    }

    pub fn five_mode_flow(grid: Grid2D, k: usize, dt: f64, noise_std: f64, seed: u64) -> SynthConfig {
        SynthConfig { grid, k, dt, modes: five_mode_modes(), noise_std, seed }
    }

    /// Three undamped conjugate pairs with incommensurate periods of
    /// roughly 7, 11 and 17 samples at unit `dt`.
    pub fn quasi_periodic_modes() -> Vec<ModeSpec> {
        alloc::vec![
            ModeSpec {
                amplitude: 1.0,
                growth_rate: 0.0,
                frequency: TAU / 11.0,
                phase: 0.0,
                pattern: SpatialPattern::Sinusoid { kx: 1.0, ky: 1.0, phase: 0.0 },
            },
            ModeSpec {
                amplitude: 0.6,
                growth_rate: 0.0,
                frequency: TAU / 7.1,
                phase: 1.0,
                pattern: SpatialPattern::GaussianSinusoid {
                    x0: 0.35,
                    y0: 0.6,
                    width: 0.25,
                    kx: 1.0,
                    ky: 0.0,
                    phase: 0.5
                },
            },
            ModeSpec {
                amplitude: 0.4,
                growth_rate: 0.0,
                frequency: TAU / 17.3,
                phase: -0.7,
                pattern: SpatialPattern::Sinusoid { kx: 0.0, ky: 2.0, phase: 0.0 },
            },
        ]
    }
}
