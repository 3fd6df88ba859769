use std::io::BufReader;

use proptest::prelude::*;

use rmlab::fields::average_x3;
use rmlab::{DeformationField3, Grid2, Grid3, MidsurfaceState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deformation_snapshot_round_trips(
        nx in 4usize..8, ny in 4usize..8, nz in 2usize..5,
        h in 0.01..0.5f64, amp in 0.0..0.3f64,
    ) {
        let grid = Grid3::new(nx, ny, nz, 1.3, 0.7).unwrap();
        let y = DeformationField3::from_displacement_fn(grid, h, |x1, x2, x3| {
            [amp * x1 * x2, amp * (x1 - x3), amp * h * x2 * x3]
        })
        .unwrap();
        let mut buf = Vec::new();
        y.write_snapshot(&mut buf).unwrap();
        let back = DeformationField3::read_snapshot(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back.grid(), y.grid());
        prop_assert_eq!(back.h(), y.h());
        for (a, b) in back.displacement().iter().zip(y.displacement()) {
            prop_assert!((a - b).abs() <= 1e-15 * 4.0);
        }
    }

    #[test]
    fn midsurface_snapshot_is_exact(values in prop::collection::vec(-1e3..1e3f64, 5 * 16)) {
        let grid = Grid2::new(4, 4, 2.0, 1.0).unwrap();
        let state = MidsurfaceState::from_values(grid, values).unwrap();
        let mut buf = Vec::new();
        state.write_snapshot(&mut buf).unwrap();
        let back = MidsurfaceState::read_snapshot(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back, state);
    }

    #[test]
    fn thickness_average_reproduces_affine_columns(a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let grid = Grid3::new(4, 4, 5, 1.0, 1.0).unwrap();
        let values: Vec<f64> = (0..grid.len())
            .map(|n| a + b * grid.x3(n % grid.nz))
            .collect();
        for m in average_x3(&grid, &values) {
            prop_assert!((m - a).abs() < 1e-14);
        }
    }
}

#[test]
fn truncated_snapshot_is_an_error() {
    let grid = Grid3::new(4, 4, 2, 1.0, 1.0).unwrap();
    let y = DeformationField3::identity(grid, 0.1).unwrap();
    let mut buf = Vec::new();
    y.write_snapshot(&mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(DeformationField3::read_snapshot(BufReader::new(&buf[..])).is_err());
}

#[test]
fn degenerate_grids_are_rejected() {
    assert!(Grid2::new(1, 4, 1.0, 1.0).is_err());
    assert!(Grid3::new(3, 3, 1, 1.0, 1.0).is_err());
    assert!(Grid3::new(3, 3, 3, 0.0, 1.0).is_err());
}
