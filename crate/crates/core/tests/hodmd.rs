use mpjet_core::field::Grid2D;
use mpjet_core::hodmd::{
    hodmd_decompose, imaginary_residue, mode_table, rom_reconstruct, DmdMode, HodmdConfig, HodmdResult, Rom,
};
use mpjet_core::metrics::rrmse;
use mpjet_core::synth::{clean_field_rms, generate_flow, reference, SynthConfig};
use mpjet_core::Error;

const DT: f64 = 0.1;

fn five_mode(noise: f64, grid: usize, k: usize) -> SynthConfig {
    let mut cfg = reference::five_mode_flow(Grid2D::new(grid, grid).unwrap(), k, DT, 0.0, 11);
    cfg.noise_std = noise * clean_field_rms(&cfg).unwrap();
    cfg
}

fn decompose(cfg: &SynthConfig, d: usize, eps: f64) -> (HodmdResult, f64, f64) {
    let (v, _) = generate_flow(cfg).unwrap();
    let res = hodmd_decompose(&v, &HodmdConfig { d, eps1: eps, eps, dt: cfg.dt }).unwrap();
    let rom = Rom::new(res.clone(), cfg.dt).unwrap();
    let t: Vec<usize> = (0..cfg.k).collect();
    let rec = rom_reconstruct(&rom, &t).unwrap();
    (res, rrmse(rec.data(), v.data()).unwrap(), imaginary_residue(&rom, &t))
}

/// Recovered mode closest in exponent to each ground-truth mode.
fn matches<'a>(truth: &'a [DmdMode], found: &'a [DmdMode]) -> Vec<(&'a DmdMode, &'a DmdMode)> {
    truth
        .iter()
        .map(|t| {
            let best = found
                .iter()
                .min_by(|a, b| (a.exponent() - t.exponent()).norm().total_cmp(&(b.exponent() - t.exponent()).norm()))
                .expect("at least one recovered mode");
            (t, best)
        })
        .collect()
}

fn assert_conjugate_symmetric(modes: &[DmdMode]) {
    for m in modes.iter().filter(|m| m.frequency > 0.0) {
        let partner = modes
            .iter()
            .filter(|p| p.frequency < 0.0)
            .min_by(|a, b| (a.frequency + m.frequency).abs().total_cmp(&(b.frequency + m.frequency).abs()))
            .expect("every positive frequency has a negative partner");
        assert!((partner.frequency + m.frequency).abs() <= 1e-12 * m.frequency.abs());
        assert!(
            (partner.amplitude - m.amplitude).abs() <= 1e-6 * m.amplitude,
            "{} vs {}",
            partner.amplitude,
            m.amplitude
        );
    }
}

#[test]
fn noiseless_recovery_matches_ground_truth() {
    let cfg = five_mode(0.0, 40, 200);
    let truth = generate_flow(&cfg).unwrap().1;
    let (res, err, residue) = decompose(&cfg, 10, 1e-8);
    assert_eq!(res.modes.len(), 5);
    assert_eq!(res.spatial_complexity, 3, "five modes on three spatial structures");
    for (t, f) in matches(&truth, &res.modes) {
        if t.frequency == 0.0 {
            assert!(f.frequency.abs() < 1e-6);
        } else {
            assert!(
                (f.frequency - t.frequency).abs() <= 1e-6 * t.frequency.abs(),
                "omega {} vs {}",
                f.frequency,
                t.frequency
            );
        }
        assert!((f.growth_rate - t.growth_rate).abs() <= 1e-8, "delta {} vs {}", f.growth_rate, t.growth_rate);
        assert!((f.amplitude - t.amplitude).abs() <= 1e-6 * t.amplitude, "a {} vs {}", f.amplitude, t.amplitude);
    }
    assert!(err <= 1e-6, "reconstruction rrmse {err}");
    assert!(residue <= 1e-10);
    assert_conjugate_symmetric(&res.modes);
}

#[test]
fn noisy_recovery_keeps_physical_modes() {
    let cfg = five_mode(0.01, 40, 200);
    let truth = generate_flow(&cfg).unwrap().1;
    let eps = 7e-3;
    let (res, err, residue) = decompose(&cfg, 10, eps);
    assert!(res.modes.len() >= 5);
    let a_max = res.modes[0].amplitude;
    assert!(res.modes.iter().all(|m| m.amplitude / a_max >= eps));
    for (t, f) in matches(&truth, &res.modes) {
        assert!((f.exponent() - t.exponent()).norm() < 0.05 * t.exponent().norm().max(1.0));
        assert!((f.amplitude - t.amplitude).abs() < 0.05 * t.amplitude);
    }
    assert!(err <= 0.05, "reconstruction rrmse {err}");
    assert!(residue <= 1e-10);
    assert_conjugate_symmetric(&res.modes);
}

#[test]
fn delay_embedding_is_needed_when_modes_outnumber_structures() {
    let cfg = five_mode(0.0, 16, 120);
    let (plain, plain_err, _) = decompose(&cfg, 1, 1e-8);
    assert!(plain.modes.len() <= 3);
    assert!(plain_err > 1e-3);
    for d in [4, 8, 12, 20] {
        let (res, err, residue) = decompose(&cfg, d, 1e-8);
        assert_eq!(res.modes.len(), 5, "d = {d}");
        assert!(err <= 1e-6, "d = {d}: {err}");
        assert!(residue <= 1e-10);
        assert_conjugate_symmetric(&res.modes);
    }
}

#[test]
fn mode_count_is_monotone_in_the_amplitude_cutoff() {
    let (v, _) = generate_flow(&five_mode(0.01, 16, 120)).unwrap();
    let mut last = usize::MAX;
    let mut res = None;
    for eps in [1e-4, 1e-3, 7e-3, 0.05, 0.3, 0.7, 0.99] {
        let r = hodmd_decompose(&v, &HodmdConfig { d: 10, eps1: 7e-3, eps, dt: DT }).unwrap();
        assert!(r.modes.len() <= last, "eps {eps}: {} > {last}", r.modes.len());
        last = r.modes.len();
        res = Some(r);
    }
    // A cutoff near one keeps only the largest mode and, if oscillatory,
    // its conjugate partner.
    let res = res.unwrap();
    let top = &res.modes[0];
    assert_eq!(res.modes.len(), if top.frequency.abs() < 1e-6 { 1 } else { 2 });
}

#[test]
fn mode_table_is_sorted_and_normalized() {
    let (res, _, _) = decompose(&five_mode(0.0, 16, 120), 10, 1e-8);
    let rows = mode_table(&res, 1.0, 1.0).unwrap();
    assert_eq!(rows.len(), res.modes.len());
    assert_eq!(rows[0].amp_norm, 1.0);
    for w in rows.windows(2) {
        assert!(w[0].amplitude >= w[1].amplitude);
        assert_eq!(w[1].m, w[0].m + 1);
    }
    for r in &rows {
        assert!((r.strouhal - r.omega / std::f64::consts::TAU).abs() < 1e-15);
    }
}

#[test]
fn too_few_snapshots_is_rejected_before_compute() {
    let (v, _) = generate_flow(&five_mode(0.0, 8, 11)).unwrap();
    let cfg = HodmdConfig { d: 10, eps1: 1e-8, eps: 1e-8, dt: DT };
    assert!(matches!(hodmd_decompose(&v, &cfg), Err(Error::InvalidArgument(_))));
}
