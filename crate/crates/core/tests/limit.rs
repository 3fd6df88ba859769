use proptest::prelude::*;

use rmlab::compare::LoadProfile;
use rmlab::limit2d::{limit_energy, limit_solver_options, minimize_limit, minimize_limit_state, LimitEnergy};
use rmlab::{minimize, BumpState, Grid2, LimitVariant, Material, MaterialParams, MidsurfaceState, MinimizeOptions};

fn material(l: f64) -> Material {
    Material::new(MaterialParams { l, ..MaterialParams::default() }).unwrap()
}

fn state(grid: Grid2, seed: u64, scale: f64) -> MidsurfaceState {
    let bump = BumpState::random(seed, grid.lx, grid.ly);
    MidsurfaceState::from_fn(grid, |x1, x2| bump.value(x1, x2).map(|c| scale * c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unloaded_energy_is_nonnegative(seed in any::<u64>(), scale in 0.0..3.0f64) {
        let grid = Grid2::unit(9).unwrap();
        let m = material(0.5);
        let s = state(grid, seed, scale);
        for variant in [LimitVariant::ReissnerMindlin, LimitVariant::SecondGradient] {
            let e = limit_energy(&s, &m, variant, None).unwrap();
            prop_assert!(e.total >= 0.0);
            prop_assert!(e.e_shear >= 0.0 && e.e_membrane >= 0.0 && e.e_bending >= 0.0);
        }
    }

    #[test]
    fn energy_ignores_constant_shifts(seed in any::<u64>(), shift in prop::array::uniform3(-5.0..5.0f64)) {
        let grid = Grid2::unit(9).unwrap();
        let m = material(0.0);
        let s = state(grid, seed, 1.0);
        let mut moved = s.clone();
        for (n, x) in moved.values_mut().iter_mut().enumerate() {
            if n % 5 < 3 {
                *x += shift[n % 5];
            }
        }
        let a = limit_energy(&s, &m, LimitVariant::ReissnerMindlin, None).unwrap();
        let b = limit_energy(&moved, &m, LimitVariant::ReissnerMindlin, None).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-12 * a.total.max(1.0));
    }

    #[test]
    fn flat_states_have_no_membrane_or_quartic_part(phi in prop::array::uniform2(-1.0..1.0f64)) {
        let grid = Grid2::unit(7).unwrap();
        let m = material(0.0);
        let s = MidsurfaceState::from_fn(grid, |x1, x2| [0.0, 0.0, 0.0, phi[0] * x2, phi[1] * x1]);
        let e = limit_energy(&s, &m, LimitVariant::ReissnerMindlin, None).unwrap();
        prop_assert_eq!(e.e_membrane, 0.0);
        prop_assert_eq!(e.e_quartic, 0.0);
        prop_assert!((e.total - e.e_shear - e.e_bending).abs() <= 1e-14);
    }
}

#[test]
fn zero_shear_leaves_only_bending() {
    // φ = −∇v for an affine v makes the shear vector vanish identically
    let grid = Grid2::unit(9).unwrap();
    let m = material(0.0);
    let s = MidsurfaceState::from_fn(grid, |x1, x2| [0.0, 0.0, 0.3 * x1 - 0.2 * x2, -0.3, 0.2]);
    let e = limit_energy(&s, &m, LimitVariant::ReissnerMindlin, None).unwrap();
    assert!(e.e_shear.abs() < 1e-28);
    assert!(e.e_bending.abs() < 1e-28);
}

#[test]
fn rotation_response_is_linear_in_the_deflection() {
    // with v frozen the energy is quadratic in φ, so the optimal φ scales with v
    let grid = Grid2::unit(9).unwrap();
    let m = material(0.0);
    let energy = LimitEnergy::new(&m, grid, LimitVariant::ReissnerMindlin, None).unwrap();
    let bump = BumpState::standard();
    let mask: Vec<bool> = (0..5 * grid.len())
        .map(|k| {
            let n = k / 5;
            k % 5 < 3 || grid.is_boundary(n / grid.ny, n % grid.ny)
        })
        .collect();
    let opts = MinimizeOptions { max_iters: 2000, grad_tol: 1e-12, ..MinimizeOptions::default() };
    let solve = |scale: f64| {
        let s = MidsurfaceState::from_fn(grid, |x1, x2| [0.0, 0.0, scale * bump.value(x1, x2)[2], 0.0, 0.0]);
        minimize(&energy, s.values(), Some(&mask), &opts).unwrap().x
    };
    let (one, two) = (solve(0.1), solve(0.2));
    let peak = one.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (a, b) in one.iter().zip(&two) {
        assert!((2.0 * a - b).abs() <= 1e-7 * peak);
    }
}

#[test]
fn zero_load_has_zero_minimizer() {
    let grid = Grid2::unit(9).unwrap();
    let force = LoadProfile::Zero.force(grid, 1.0, 4.0).unwrap();
    let sol = minimize_limit(&material(0.0), &force, &limit_solver_options()).unwrap();
    assert_eq!(sol.energy.total, 0.0);
    assert!(sol.state.values().iter().all(|&x| x == 0.0));
}

#[test]
fn loaded_minimum_is_negative_and_clamped() {
    let grid = Grid2::unit(11).unwrap();
    let force = LoadProfile::Bump.force(grid, 10.0, 4.0).unwrap();
    let m = material(0.0);
    let start = MidsurfaceState::zeros(grid);
    let sol = minimize_limit_state(
        &m,
        LimitVariant::ReissnerMindlin,
        Some(&force),
        &start,
        false,
        &limit_solver_options(),
    )
    .unwrap();
    assert!(sol.energy.total < 0.0);
    assert!(sol.state.vanishes_on_boundary());
}
