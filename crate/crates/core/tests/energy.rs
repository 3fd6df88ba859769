use proptest::prelude::*;

use rmlab::compare::LoadProfile;
use rmlab::energy3d::{energy_ih, energy_jh};
use rmlab::optimize::Status;
use rmlab::{minimize, BcMode, DeformationField3, Grid3, Material, MaterialParams, MinimizeOptions, PlateEnergy, Variant};

fn material() -> Material {
    Material::new(MaterialParams { l: 1.0, ..MaterialParams::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_nonnegative_without_load(seed in any::<u64>(), amp in 0.0..0.05f64) {
        use rand::{Rng, SeedableRng};
        let grid = Grid3::new(5, 5, 3, 1.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let disp: Vec<f64> = (0..3 * grid.len()).map(|_| rng.random_range(-amp..=amp)).collect();
        let m = material();
        for variant in [Variant::Plain, Variant::SecondGrad] {
            let e = PlateEnergy::new(&m, grid, 0.2, variant, BcMode::Ignore).unwrap().evaluate(&disp);
            prop_assert!(e.total >= 0.0);
        }
    }

    #[test]
    fn in_plane_rigid_motion_costs_nothing(theta in -3.0..3.0f64, shift in prop::array::uniform3(-1.0..1.0f64)) {
        let grid = Grid3::new(5, 4, 3, 1.0, 1.0).unwrap();
        let h = 0.1;
        let (s, c) = theta.sin_cos();
        let y = DeformationField3::from_fn(grid, h, |x1, x2, x3| {
            [c * x1 - s * x2 + shift[0], s * x1 + c * x2 + shift[1], h * x3 + shift[2]]
        })
        .unwrap();
        let e = energy_ih(&y, &material(), Variant::Plain, BcMode::Ignore).unwrap();
        // rounding of the logarithm in W2 near SO(3)
        prop_assert!(e.total.abs() < 1e-15, "{:?}", e);
    }
}

#[test]
fn identity_stays_identity_without_load() {
    let grid = Grid3::new(6, 6, 3, 1.0, 1.0).unwrap();
    let m = material();
    for variant in [Variant::Plain, Variant::SecondGrad] {
        let energy = PlateEnergy::new(&m, grid, 0.1, variant, BcMode::Enforce).unwrap();
        let x0 = vec![0.0; 3 * grid.len()];
        let out = minimize(&energy, &x0, Some(energy.boundary_mask()), &MinimizeOptions::default()).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn enforced_boundary_rejects_moved_edges() {
    let grid = Grid3::new(5, 5, 3, 1.0, 1.0).unwrap();
    let y = DeformationField3::from_displacement_fn(grid, 0.1, |_, _, _| [0.0, 0.0, 1e-3]).unwrap();
    let e = energy_ih(&y, &material(), Variant::Plain, BcMode::Enforce).unwrap();
    assert!(!e.is_feasible());
    let e = energy_ih(&y, &material(), Variant::Plain, BcMode::Ignore).unwrap();
    assert!(e.is_feasible());
}

#[test]
fn load_work_matches_its_definition() {
    // a pure transverse translation w picks up −h^α Σ wᵢ f₃ᵢ w; balance makes it vanish
    let grid = Grid3::new(9, 9, 3, 1.0, 1.0).unwrap();
    let force = LoadProfile::Bump.force(grid.plane(), 3.0, 4.0).unwrap();
    let y = DeformationField3::from_displacement_fn(grid, 0.1, |_, _, _| [0.0, 0.0, 0.7]).unwrap();
    let e = energy_jh(&y, &material(), &force, Variant::Plain, BcMode::Ignore).unwrap();
    assert!(e.e_force.abs() < 1e-15, "{e:?}");
}
