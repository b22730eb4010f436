//! Higher-order dynamic mode decomposition (DMD-d) of snapshot matrices,
//! amplitude filtering, reduced-order reconstruction and Strouhal spectra.
//!
//! The decomposition expands the data as
//!
//! ```text
//! v_k ~ sum_m a_m e^{i phi_m} u_m e^{(delta_m + i omega_m) t_k}
//! ```
//!
//! with unit-RMS spatial modes `u_m`, non-negative amplitudes `a_m`, growth
//! rates `delta_m` and angular frequencies `omega_m`.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::field::{Grid2D, SnapshotMatrix};
use crate::fmath;
use crate::linalg::{eig_dense, lstsq, rms, rms_normalize, truncated_svd};

/// Tunable parameters of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HodmdConfig {
    /// Number of delayed snapshots stacked per column.
    pub d: usize,
    /// Relative singular value cutoff used in both SVD stages.
    pub eps1: f64,
    /// Relative amplitude cutoff for retaining modes.
    pub eps: f64,
    pub dt: f64,
}

impl HodmdConfig {
    /// Checks the parameters against a snapshot count `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.d == 0 {
            return Err(invalid!("delay window d must be at least 1"));
        }
        if k < self.d + 2 {
            return Err(invalid!("need K >= d + 2 snapshots, got K = {k} with d = {}", self.d));
        }
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            return Err(invalid!("eps1 must lie in (0, 1), got {}", self.eps1));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid!("dt must be positive, got {}", self.dt));
        }
        Ok(())
    }
}

/// One term of the modal expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdMode {
    /// Complex spatial structure of length `J`, unit RMS.
    pub spatial: Vec<Complex64>,
    pub amplitude: f64,
    /// Growth rate `delta` (1/time).
    pub growth_rate: f64,
    /// Angular frequency `omega` (rad/time).
    pub frequency: f64,
    /// Phase of the complex amplitude (radians).
    pub phase: f64,
}

impl DmdMode {
    /// Continuous-time exponent `delta + i omega`.
    pub fn exponent(&self) -> Complex64 {
        Complex64::new(self.growth_rate, self.frequency)
    }

    /// Complex amplitude `a e^{i phi}`.
    pub fn complex_amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Output of [`hodmd_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct HodmdResult {
    pub grid: Grid2D,
    /// Retained modes, sorted by descending amplitude.
    pub modes: Vec<DmdMode>,
    /// Rank kept by the first SVD stage.
    pub spatial_complexity: usize,
    /// Time of the first snapshot.
    pub t0: f64,
}

impl HodmdResult {
    /// Number of retained modes.
    pub fn spectral_complexity(&self) -> usize {
        self.modes.len()
    }
}

/// A retained mode set that reconstructs fields at arbitrary sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Rom {
    pub result: HodmdResult,
    pub dt: f64,
}

impl Rom {
    pub fn new(result: HodmdResult, dt: f64) -> Result<Self> {
        if result.modes.is_empty() {
            return Err(invalid!("reduced-order model needs at least one mode"));
        }
        if !(dt > 0.0) {
            return Err(invalid!("dt must be positive"));
        }
        Ok(Self { result, dt })
    }

    /// Keeps only the first `m` modes (the largest ones).
    pub fn truncated(&self, m: usize) -> Result<Self> {
        let mut result = self.result.clone();
        result.modes.truncate(m);
        Self::new(result, self.dt)
    }
}

/// Sum of the modal expansion at time `t`, before taking the real part.
pub fn evaluate_expansion(modes: &[DmdMode], j: usize, t: f64) -> Vec<Complex64> {
    let mut out = alloc::vec![Complex64::new(0.0, 0.0); j];
    for m in modes {
        let coeff = m.complex_amplitude() * (m.exponent() * t).exp();
        for (o, u) in out.iter_mut().zip(&m.spatial) {
            *o += coeff * u;
        }
    }
    out
}

/// Largest imaginary part of the expansion over the given sample indices,
/// relative to the RMS of the real field.
pub fn imaginary_residue(rom: &Rom, t_indices: &[usize]) -> f64 {
    let j = rom.result.grid.len();
    let mut max_im: f64 = 0.0;
    let mut sum_sq = 0.0;
    for &k in t_indices {
        let t = rom.result.t0 + k as f64 * rom.dt;
        for z in evaluate_expansion(&rom.result.modes, j, t) {
            max_im = max_im.max(z.im.abs());
            sum_sq += z.re * z.re;
        }
    }
    let field_rms = fmath::sqrt(sum_sq / (j * t_indices.len().max(1)) as f64);
    if field_rms > 0.0 {
        max_im / field_rms
    } else {
        max_im
    }
}

/// Real part of the expansion at `t0 + k * dt` for each requested index.
pub fn rom_reconstruct(rom: &Rom, t_indices: &[usize]) -> Result<SnapshotMatrix> {
    if rom.result.modes.is_empty() {
        return Err(invalid!("cannot reconstruct from an empty mode list"));
    }
    if t_indices.is_empty() {
        return Err(invalid!("no sample indices requested"));
    }
    let grid = rom.result.grid;
    let j = grid.len();
    let mut data = Vec::with_capacity(j * t_indices.len());
    for &k in t_indices {
        let t = rom.result.t0 + k as f64 * rom.dt;
        data.extend(evaluate_expansion(&rom.result.modes, j, t).into_iter().map(|z| z.re));
    }
    SnapshotMatrix::new(grid, t_indices.len(), rom.dt, data)
        .map_err(|_| Error::NumericOverflow("reconstruction produced non-finite values".into()))
}

/// Strouhal number `omega h / (2 pi u)`.
pub fn strouhal(omega: f64, h: f64, u: f64) -> Result<f64> {
    if u == 0.0 {
        return Err(invalid!("reference velocity must be non-zero"));
    }
    Ok(omega * h / (2.0 * PI * u))
}

/// One row of the mode spectrum table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRow {
    /// 1-based position in amplitude order.
    pub m: usize,
    pub amp_norm: f64,
    pub amplitude: f64,
    pub delta: f64,
    pub omega: f64,
    pub strouhal: f64,
    pub phase: f64,
}

/// Normalized amplitude vs Strouhal table, in descending amplitude order.
pub fn mode_table(result: &HodmdResult, h: f64, u: f64) -> Result<Vec<ModeRow>> {
    mode_table_from(&result.modes, h, u)
}

pub fn mode_table_from(modes: &[DmdMode], h: f64, u: f64) -> Result<Vec<ModeRow>> {
    if modes.is_empty() {
        return Err(invalid!("mode table needs at least one mode"));
    }
    let mut sorted: Vec<&DmdMode> = modes.iter().collect();
    sorted.sort_by(|a, b| mode_order(a, b));
    let a_max = sorted[0].amplitude;
    sorted
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(ModeRow {
                m: i + 1,
                amp_norm: if a_max > 0.0 { m.amplitude / a_max } else { 0.0 },
                amplitude: m.amplitude,
                delta: m.growth_rate,
                omega: m.frequency,
                strouhal: strouhal(m.frequency, h, u)?,
                phase: m.phase,
            })
        })
        .collect()
}

/// Descending amplitude, then ascending `|omega|`, then ascending `omega`.
pub fn mode_order(a: &DmdMode, b: &DmdMode) -> Ordering {
    b.amplitude
        .total_cmp(&a.amplitude)
        .then(a.frequency.abs().total_cmp(&b.frequency.abs()))
        .then(a.frequency.total_cmp(&b.frequency))
}

/// Drops modes with `a_m / a_max < eps` and sorts the rest.
pub fn filter_modes(mut modes: Vec<DmdMode>, eps: f64) -> Vec<DmdMode> {
    let a_max = modes.iter().map(|m| m.amplitude).fold(0.0, f64::max);
    modes.retain(|m| a_max > 0.0 && m.amplitude / a_max >= eps);
    modes.sort_by(mode_order);
    modes
}

/// Pairs every eigenvalue with positive imaginary part to its closest
/// conjugate partner and makes the pair exactly conjugate. Returns the list
/// of `(positive, negative)` index pairs.
fn pair_conjugates(values: &mut [Complex64], vectors: &mut DMatrix<Complex64>) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut used = alloc::vec![false; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        let z = values[i];
        if z.im.abs() <= 1e-14 * z.norm() {
            values[i].im = 0.0;
            used[i] = true;
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| !used[i] && values[i].im > 0.0).collect();
    order.sort_by(|&a, &b| values[b].im.total_cmp(&values[a].im));
    for i in order {
        let target = values[i].conj();
        let partner = (0..n)
            .filter(|&c| !used[c] && c != i && values[c].im < 0.0)
            .min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()));
        if let Some(c) = partner {
            if (values[c] - target).norm() <= 1e-8 * values[i].norm().max(1e-300) {
                values[c] = target;
                for r in 0..vectors.nrows() {
                    vectors[(r, c)] = vectors[(r, i)].conj();
                }
                used[i] = true;
                used[c] = true;
                pairs.push((i, c));
            }
        }
    }
    pairs
}

/// Higher-order DMD of `v`.
///
/// Steps: truncated SVD of the snapshots (rank `N`), `d`-fold delay
/// embedding of the reduced snapshots, a second truncated SVD, a
/// least-squares one-step operator, its eigendecomposition, lifting of the
/// eigenvectors back to the grid, a least-squares amplitude fit over all
/// snapshots and finally the `eps` amplitude filter.
pub fn hodmd_decompose(v: &SnapshotMatrix, cfg: &HodmdConfig) -> Result<HodmdResult> {
    let k = v.k();
    cfg.validate(k)?;
    let dt = cfg.dt;
    let j = v.j();
    let d = cfg.d;

    let snapshots = DMatrix::from_column_slice(j, k, v.data());
    let svd1 = truncated_svd(&snapshots, cfg.eps1)?;
    let n = svd1.rank;
    if n == 0 {
        return Err(Error::EmptySpectrum("snapshot matrix is identically zero".into()));
    }
    let reduced = svd1.reduced_coordinates();

    let cols = k - d + 1;
    let embedded = DMatrix::from_fn(d * n, cols, |r, c| reduced[(r % n, c + r / n)]);
    let svd2 = truncated_svd(&embedded, cfg.eps1)?;
    let n2 = svd2.rank;
    let red2 = svd2.reduced_coordinates();
    let past = red2.columns(0, cols - 1).transpose();
    let future = red2.columns(1, cols - 1).transpose();
    let operator = lstsq(&past, &future)?.transpose();

    let eig = eig_dense(&operator)?;
    let mut values = eig.values;
    let mut vectors = eig.vectors;
    let pairs = pair_conjugates(&mut values, &mut vectors);

    // First delay block of each eigenvector, lifted to the grid.
    let first_block = svd2.u.rows(0, n).map(|x| Complex64::new(x, 0.0));
    let basis = svd1.u.map(|x| Complex64::new(x, 0.0));
    let lifted = &basis * (first_block * &vectors);

    struct Candidate {
        spatial: Vec<Complex64>,
        reduced: Vec<Complex64>,
        exponent: Complex64,
    }
    let mut candidates = Vec::with_capacity(n2);
    let mut index_of = alloc::vec![usize::MAX; n2];
    for m in 0..n2 {
        let mu = values[m];
        if !(mu.norm() > 0.0) {
            continue;
        }
        let exponent = Complex64::new(fmath::ln(mu.norm()), fmath::atan2(mu.im, mu.re)) / dt;
        let column: Vec<Complex64> = lifted.column(m).iter().copied().collect();
        let Ok((spatial, _)) = rms_normalize(&column) else {
            continue;
        };
        let reduced_mode = basis.transpose() * nalgebra::DVector::from_vec(spatial.clone());
        index_of[m] = candidates.len();
        candidates.push(Candidate { spatial, reduced: reduced_mode.iter().copied().collect(), exponent });
    }
    if candidates.is_empty() {
        return Err(Error::EmptySpectrum("no finite non-zero eigenvalues".into()));
    }

    // Amplitudes: sum_m b_m q_m e^{lambda_m t_k} ~ reduced snapshot k, stacked over all k.
    let mc = candidates.len();
    let mut system = DMatrix::<Complex64>::zeros(n * k, mc);
    let mut rhs = DMatrix::<Complex64>::zeros(n * k, 1);
    for step in 0..k {
        let t = step as f64 * dt;
        for (c, cand) in candidates.iter().enumerate() {
            let e = (cand.exponent * t).exp();
            for r in 0..n {
                system[(step * n + r, c)] = cand.reduced[r] * e;
            }
        }
        for r in 0..n {
            rhs[(step * n + r, 0)] = Complex64::new(reduced[(r, step)], 0.0);
        }
    }
    let mut b: Vec<Complex64> = lstsq(&system, &rhs)?.iter().copied().collect();

    for &(p, q) in &pairs {
        let (ip, iq) = (index_of[p], index_of[q]);
        if ip == usize::MAX || iq == usize::MAX {
            continue;
        }
        let avg = (b[ip] + b[iq].conj()) * 0.5;
        b[ip] = avg;
        b[iq] = avg.conj();
        let conj_spatial: Vec<Complex64> = candidates[ip].spatial.iter().map(|z| z.conj()).collect();
        candidates[iq].spatial = conj_spatial;
    }

    let modes: Vec<DmdMode> = candidates
        .into_iter()
        .zip(b)
        .map(|(cand, coeff)| DmdMode {
            spatial: cand.spatial,
            amplitude: coeff.norm(),
            growth_rate: cand.exponent.re,
            frequency: cand.exponent.im,
            phase: fmath::atan2(coeff.im, coeff.re),
        })
        .collect();
    let modes = filter_modes(modes, cfg.eps);
    debug_assert!(modes.iter().all(|m| (rms(&m.spatial) - 1.0).abs() < 1e-8));
    Ok(HodmdResult { grid: v.grid(), modes, spatial_complexity: n, t0: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mode(amplitude: f64, frequency: f64) -> DmdMode {
        DmdMode { spatial: vec![Complex64::new(1.0, 0.0); 4], amplitude, growth_rate: 0.0, frequency, phase: 0.0 }
    }

    #[test]
    fn strouhal_cases() {
        assert_eq!(strouhal(2.0 * PI, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(strouhal(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((strouhal(0.3 * PI, 1.0, 1.0).unwrap() - 0.15).abs() < 1e-15);
        assert!(matches!(strouhal(1.0, 1.0, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mode_table_normalization() {
        let result = HodmdResult {
            grid: Grid2D::new(2, 2).unwrap(),
            modes: vec![mode(1.0, 0.5), mode(4.0, 0.0)],
            spatial_complexity: 1,
            t0: 0.0,
        };
        let rows = mode_table(&result, 1.0, 1.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].amp_norm, 1.0);
        assert_eq!(rows[1].amp_norm, 0.25);
        assert_eq!(rows[0].m, 1);
        let single = HodmdResult { modes: vec![mode(3.0, 1.0)], ..result.clone() };
        assert_eq!(mode_table(&single, 2.0, 3.0).unwrap()[0].amp_norm, 1.0);
        let empty = HodmdResult { modes: vec![], ..result };
        assert!(mode_table(&empty, 1.0, 1.0).is_err());
    }

    #[test]
    fn sort_breaks_ties_by_frequency() {
        let sorted = filter_modes(vec![mode(1.0, 2.0), mode(1.0, -2.0), mode(1.0, 0.5), mode(2.0, 9.0)], 0.1);
        let freqs: Vec<f64> = sorted.iter().map(|m| m.frequency).collect();
        assert_eq!(freqs, vec![9.0, 0.5, -2.0, 2.0]);
    }

    #[test]
    fn filter_drops_small_modes() {
        let kept = filter_modes(vec![mode(1.0, 0.0), mode(0.0099, 1.0), mode(0.01, 2.0)], 0.01);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|m| m.amplitude >= 0.01));
    }

    #[test]
    fn config_validation() {
        let ok = HodmdConfig { d: 3, eps1: 1e-3, eps: 1e-3, dt: 0.1 };
        assert!(ok.validate(5).is_ok());
        assert!(ok.validate(4).is_err());
        assert!(HodmdConfig { d: 0, ..ok }.validate(10).is_err());
        assert!(HodmdConfig { eps1: 1.0, ..ok }.validate(10).is_err());
        assert!(HodmdConfig { eps: 0.0, ..ok }.validate(10).is_err());
        assert!(HodmdConfig { dt: -1.0, ..ok }.validate(10).is_err());
    }

    #[test]
    fn constant_flow_single_steady_mode() {
        let g = Grid2D::new(3, 2).unwrap();
        let col: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
        let v = SnapshotMatrix::from_columns(g, 0.2, &vec![col; 12]).unwrap();
        let cfg = HodmdConfig { d: 3, eps1: 1e-8, eps: 1e-8, dt: 0.2 };
        let res = hodmd_decompose(&v, &cfg).unwrap();
        assert_eq!(res.modes.len(), 1);
        assert!(res.modes[0].frequency.abs() < 1e-8);
        assert!(res.modes[0].growth_rate.abs() < 1e-8);
        let rom = Rom::new(res, 0.2).unwrap();
        let rec = rom_reconstruct(&rom, &(0..12).collect::<Vec<_>>()).unwrap();
        for (a, b) in rec.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_input_and_short_input() {
        let g = Grid2D::new(2, 2).unwrap();
        let v = SnapshotMatrix::new(g, 6, 1.0, vec![0.0; 24]).unwrap();
        let cfg = HodmdConfig { d: 2, eps1: 1e-6, eps: 1e-6, dt: 1.0 };
        assert!(matches!(hodmd_decompose(&v, &cfg), Err(Error::EmptySpectrum(_))));
        let cfg = HodmdConfig { d: 5, ..cfg };
        assert!(matches!(hodmd_decompose(&v, &cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reconstruct_rejects_empty() {
        let result = HodmdResult { grid: Grid2D::new(1, 1).unwrap(), modes: vec![], spatial_complexity: 1, t0: 0.0 };
        assert!(Rom::new(result.clone(), 1.0).is_err());
        let rom = Rom { result, dt: 1.0 };
        assert!(rom_reconstruct(&rom, &[0]).is_err());
    }

    #[test]
    fn single_steady_mode_reconstructs_identical_snapshots() {
        let result = HodmdResult {
            grid: Grid2D::new(2, 2).unwrap(),
            modes: vec![DmdMode {
                spatial: vec![
                    Complex64::new(1.0, 0.0),
                    Complex64::new(-1.0, 0.0),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(-1.0, 0.0),
                ],
                amplitude: 2.5,
                growth_rate: 0.0,
                frequency: 0.0,
                phase: 0.0,
            }],
            spatial_complexity: 1,
            t0: 0.0,
        };
        let rom = Rom::new(result, 0.5).unwrap();
        let rec = rom_reconstruct(&rom, &[0, 3, 17]).unwrap();
        assert_eq!(rec.column(0), rec.column(1));
        assert_eq!(rec.column(0), rec.column(2));
        assert_eq!(rec.column(0), &[2.5, -2.5, 2.5, -2.5]);
    }
}
