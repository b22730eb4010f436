use mpjet_core::field::{
    add_baseline, apply_minmax, downsample_columns, fit_minmax, invert_minmax, subtract_baseline, Grid2D,
    SnapshotMatrix,
};
use proptest::prelude::*;

/// Spacing of doubles at `x`.
fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1) - x
    }
}

fn matrix() -> impl Strategy<Value = SnapshotMatrix> {
    (1usize..6, 1usize..6, 1usize..5, -6i32..6).prop_flat_map(|(nx, ny, k, e)| {
        let scale = 2f64.powi(e);
        prop::collection::vec(-1.0..1.0f64, nx * ny * k).prop_map(move |d| {
            let d = d.into_iter().map(|x| x * scale).collect();
            SnapshotMatrix::new(Grid2D::new(nx, ny).unwrap(), k, 0.1, d).unwrap()
        })
    })
}

fn pair() -> impl Strategy<Value = (SnapshotMatrix, SnapshotMatrix)> {
    matrix().prop_flat_map(|a| {
        let (g, k) = (a.grid(), a.k());
        let b = prop::collection::vec(-1.0..1.0f64, g.len() * k)
            .prop_map(move |d| SnapshotMatrix::new(g, k, 0.1, d).unwrap());
        (Just(a), b)
    })
}

proptest! {
    // Error is measured in ulps of the larger operand magnitude in the field.
    #[test]
    fn minmax_round_trip_within_four_ulp(v in matrix()) {
        prop_assume!(v.data().len() > 1);
        let p = match fit_minmax(&v) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let scaled = apply_minmax(&v, p).unwrap();
        for &y in scaled.data() {
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&y));
        }
        let back = invert_minmax(&scaled, p).unwrap();
        let unit = ulp(p.min.abs().max(p.max.abs()));
        for (a, b) in back.data().iter().zip(v.data()) {
            prop_assert!((a - b).abs() <= 4.0 * unit, "{a} vs {b}");
        }
    }

    #[test]
    fn baseline_round_trip_within_one_ulp((multi, single) in pair()) {
        let back = add_baseline(&subtract_baseline(&multi, &single).unwrap(), &single).unwrap();
        for ((r, a), b) in back.data().iter().zip(multi.data()).zip(single.data()) {
            prop_assert!((r - a).abs() <= ulp(a.abs().max(b.abs())), "{r} vs {a}");
        }
    }

    #[test]
    fn downsample_keeps_every_step_th_row(v in matrix(), step in 1usize..4) {
        let g = v.grid();
        prop_assume!(g.ny >= step);
        let d = downsample_columns(&v, step).unwrap();
        let kept = g.ny.div_ceil(step);
        prop_assert_eq!(d.grid(), Grid2D::new(g.nx, kept).unwrap());
        prop_assert_eq!(d.k(), v.k());
        for k in 0..v.k() {
            for jj in 0..kept {
                for i in 0..g.nx {
                    prop_assert_eq!(d.get(i, jj, k), v.get(i, jj * step, k));
                }
            }
        }
    }
}

#[test]
fn downsample_step_one_is_identity() {
    let g = Grid2D::new(3, 4).unwrap();
    let v = SnapshotMatrix::new(g, 2, 1.0, (0..24).map(f64::from).collect()).unwrap();
    assert_eq!(downsample_columns(&v, 1).unwrap(), v);
}
