use proptest::prelude::*;

use rmlab::recovery::{build_recovery, gamma_study, strain_check, AnsatzSpec};
use rmlab::{BumpState, Grid2, Material, MaterialParams, MidsurfaceState, Variant};

fn example() -> Material {
    Material::new(MaterialParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn recovery_strain_remainder_shrinks_with_thickness(seed in any::<u64>(), k in 3i32..6) {
        // the remainder is quadratic in the leading correction, so its size
        // relative to that correction falls as h does
        let grid = Grid2::unit(17).unwrap();
        let state = BumpState::random(seed, 1.0, 1.0).sample(grid);
        let relative = |h: f64| {
            let y = build_recovery(&state, 5.0, h, &example(), 5).unwrap();
            strain_check(&y, &state, 5.0, &example()).unwrap().relative()
        };
        let h = 0.5f64.powi(k);
        let (coarse, fine) = (relative(h), relative(0.5 * h));
        prop_assert!(fine < 0.6 * coarse, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn ansatz_exponents_balance_only_on_the_diagonal(beta in 0.5..4.0f64, gap in 0.1..1.0f64) {
        let source = MidsurfaceState::zeros(Grid2::unit(5).unwrap());
        let ok = AnsatzSpec { alpha: 2.0 * beta, beta, gamma: beta, source: source.clone(), h: 0.1, nz: 3 };
        prop_assert!(ok.exponent_check().consistent());
        let bad = AnsatzSpec { gamma: beta + gap, ..ok };
        prop_assert_eq!(bad.exponent_check().mismatches.len(), 1);
    }
}

#[test]
fn study_rejects_bad_thickness_lists() {
    let bump = BumpState::standard();
    assert!(gamma_study(&bump, &[0.1, 0.2], 5.0, &example(), Variant::Plain).is_err());
    assert!(gamma_study(&bump, &[], 5.0, &example(), Variant::Plain).is_err());
    assert!(gamma_study(&bump, &[0.1], 3.0, &example(), Variant::Plain).is_err());
}

#[test]
fn zero_state_has_zero_energies() {
    let rows = gamma_study(&BumpState::zero(1.0, 1.0), &[0.25, 0.125], 5.0, &example(), Variant::Plain).unwrap();
    for r in rows {
        assert_eq!(r.scaled.total, 0.0);
        assert_eq!(r.limit.total, 0.0);
    }
}
