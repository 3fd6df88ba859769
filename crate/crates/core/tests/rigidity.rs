use nalgebra::Matrix2;
use proptest::prelude::*;

use rmlab::rigidity::{
    constant_rotation, mollified_rotation_field_2d, nearest_rotation2, project_rotation2, rigidity_report, Mollifier,
    TUBULAR_RADIUS,
};
use rmlab::{DeformationField3, Grid2, Grid3};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mollifier_reproduces_constants(c in prop::array::uniform2(-10.0..10.0f64), radius in 0.25..0.6f64) {
        let grid = Grid2::unit(11).unwrap();
        let mollifier = Mollifier::new(&grid, radius).unwrap();
        let values: Vec<f64> = (0..grid.len()).flat_map(|_| c).collect();
        for (a, b) in mollifier.apply(&grid, &values, 2).iter().zip(&values) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn mollifier_preserves_bounds(values in prop::collection::vec(-1.0..1.0f64, 121)) {
        let grid = Grid2::unit(11).unwrap();
        let out = Mollifier::new(&grid, 0.3).unwrap().apply(&grid, &values, 1);
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert!(out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn projection_falls_back_to_identity_outside_the_tube(scale in 1.6..5.0f64, theta in -3.0..3.0f64) {
        let (s, c) = theta.sin_cos();
        let f = Matrix2::new(c, -s, s, c) * scale;
        prop_assert_eq!(project_rotation2(&f, TUBULAR_RADIUS), Matrix2::identity());
        let near = Matrix2::new(c, -s, s, c) * 1.1;
        prop_assert!((project_rotation2(&near, TUBULAR_RADIUS) - nearest_rotation2(&near)).norm() == 0.0);
    }
}

#[test]
fn under_resolved_mollifier_is_rejected() {
    let grid = Grid2::unit(9).unwrap();
    assert!(Mollifier::new(&grid, 0.1).is_err());
}

#[test]
fn rigid_field_gives_constant_rotation() {
    let grid = Grid3::new(17, 17, 3, 1.0, 1.0).unwrap();
    let h = 0.125;
    let (s, c) = 0.4f64.sin_cos();
    let y = DeformationField3::from_fn(grid, h, |x1, x2, x3| [c * x1 - s * x2, s * x1 + c * x2, h * x3]).unwrap();
    let m = mollified_rotation_field_2d(&y, TUBULAR_RADIUS).unwrap();
    let r = Matrix2::new(c, -s, s, c);
    for n in 0..m.q.len() {
        assert!((m.q.planar(n) - r).norm() < 1e-13);
    }
    assert!((constant_rotation(&grid.plane(), &m.qtilde, TUBULAR_RADIUS) - r).norm() < 1e-13);
    let report = rigidity_report(&y, TUBULAR_RADIUS).unwrap();
    assert!(report.exact_rigidity);
    assert_eq!((report.e1, report.e2), (0.0, 0.0));
}

#[test]
fn report_ratios_are_finite_for_bent_plates() {
    let grid = Grid3::new(17, 17, 3, 1.0, 1.0).unwrap();
    let h = 0.125;
    let y = DeformationField3::from_fn(grid, h, |x1, x2, x3| {
        let b = 0.05 * (x1 * (1.0 - x1) * x2 * (1.0 - x2));
        [x1 + b, x2 - b, h * x3 + b]
    })
    .unwrap();
    let r = rigidity_report(&y, TUBULAR_RADIUS).unwrap();
    assert!(!r.exact_rigidity);
    for v in [r.e1, r.e2, r.r1, r.q1, r.t1, r.grad_q] {
        assert!(v.is_finite() && v >= 0.0);
    }
}
