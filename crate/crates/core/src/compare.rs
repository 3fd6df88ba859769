//! Load-driven comparison of rescaled 3D minima with the limit minimum.

use thiserror::Error;

use crate::energy3d::{BcMode, EnergyError, ForceSpec, PlateEnergy, Variant};
use crate::fields::{extract_midsurface, DeformationField3, FieldError, Grid2, Grid3, MidsurfaceState};
use crate::limit2d::{limit_solver_options, minimize_limit, LimitError, LimitSolution};
use crate::material::Material;
use crate::optimize::{minimize, Minimization, MinimizeOptions, OptimizeError, Status};
use crate::rigidity::{mollified_rotation_field_2d, RigidityError, TUBULAR_RADIUS};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("thickness list must be nonempty and strictly decreasing in (0, 1)")]
    ThicknessList,
    #[error("energy exponent sigma = {sigma} does not match the load exponent alpha = {alpha} (need sigma = 2 alpha - 2)")]
    Exponents { sigma: f64, alpha: f64 },
    #[error("3D minimization at h = {h} did not converge ({status}), gradient max-norm {residual:e}")]
    NotConverged {
        h: f64,
        status: &'static str,
        residual: f64,
        /// Rows completed before the failure.
        partial: Vec<CompareRow>,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Rigidity(#[from] RigidityError),
}

/// Named transverse load shapes. Every profile is projected onto the
/// equilibrated subspace before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadProfile {
    Zero,
    /// Centred smooth bump.
    Bump,
    /// Two bumps of opposite sign along `x₁`.
    Dipole,
}

impl LoadProfile {
    pub fn name(self) -> &'static str {
        match self {
            LoadProfile::Zero => "zero",
            LoadProfile::Bump => "bump",
            LoadProfile::Dipole => "dipole",
        }
    }

    fn raw(self, x1: f64, x2: f64) -> f64 {
        let b = 16.0 * x1 * (1.0 - x1) * x2 * (1.0 - x2);
        match self {
            LoadProfile::Zero => 0.0,
            LoadProfile::Bump => b * b,
            LoadProfile::Dipole => b * b * (2.0 * x1 - 1.0),
        }
    }

    /// Balanced nodal load of the given amplitude, with coordinates scaled to
    /// the unit square.
    pub fn force(self, grid: Grid2, amplitude: f64, alpha: f64) -> Result<ForceSpec, EnergyError> {
        let mut f3 = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                f3.push(amplitude * self.raw(grid.x1(i) / grid.lx, grid.x2(j) / grid.ly));
            }
        }
        if self == LoadProfile::Zero {
            return Ok(ForceSpec::zero(grid, alpha));
        }
        ForceSpec::balanced(grid, f3, alpha)
    }
}

impl std::str::FromStr for LoadProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(LoadProfile::Zero),
            "bump" => Ok(LoadProfile::Bump),
            "dipole" => Ok(LoadProfile::Dipole),
            other => Err(format!("unknown load profile '{other}' (expected zero, bump or dipole)")),
        }
    }
}

/// Setup of a comparison sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSetup {
    pub grid: Grid3,
    pub sigma: f64,
    pub h_list: Vec<f64>,
    pub force: ForceSpec,
    pub variant: Variant,
    pub bc_mode: BcMode,
    pub solver: MinimizeOptions,
}

/// 3D minimizer for one thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateMinimum {
    pub h: f64,
    pub field: DeformationField3,
    /// `h^{−σ} J^h` at the minimizer.
    pub scaled_energy: f64,
    pub solve: Minimization,
}

/// One thickness of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub h: f64,
    pub scaled_3d_min: f64,
    pub limit_min: f64,
    pub gap: f64,
    pub rel_gap: f64,
    /// `‖vʰ − v‖ / ‖v‖` in the discrete `L²` norm.
    pub v_rel_l2: f64,
    pub u_norm: f64,
    pub iterations: usize,
}

impl CompareRow {
    pub const CSV_HEADER: &'static str =
        "h,scaled_3d_min,limit_min,gap,rel_gap,v_rel_l2,u_norm,iterations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.h,
            self.scaled_3d_min,
            self.limit_min,
            self.gap,
            self.rel_gap,
            self.v_rel_l2,
            self.u_norm,
            self.iterations
        )
    }
}

/// Solver settings used for the 3D problems. The rescaled energies are
/// stiff, and energy decreases reach rounding level near a relative gradient
/// of 1e-5; the tolerance stays above that.
pub fn plate_solver_options() -> MinimizeOptions {
    MinimizeOptions {
        max_iters: 50_000,
        grad_tol: 2e-4,
        memory: 20,
        ..MinimizeOptions::default()
    }
}

/// Minimizes `h^{−σ} J^h` from the reference configuration with the lateral
/// boundary clamped.
pub fn minimize_plate(
    material: &Material,
    grid: Grid3,
    h: f64,
    sigma: f64,
    force: &ForceSpec,
    variant: Variant,
    bc_mode: BcMode,
    opts: &MinimizeOptions,
) -> Result<PlateMinimum, CompareError> {
    let energy = PlateEnergy::new(material, grid, h, variant, bc_mode)?
        .with_force(force)?
        .with_scale(h.powf(-sigma));
    let mask = energy.boundary_mask().to_vec();
    let x0 = vec![0.0; 3 * grid.len()];
    let solve = minimize(&energy, &x0, Some(&mask), opts)?;
    let field = DeformationField3::from_displacement(grid, h, solve.x.clone())?;
    Ok(PlateMinimum {
        h,
        scaled_energy: solve.value,
        field,
        solve,
    })
}

fn l2(grid: &Grid2, f: impl Fn(usize) -> f64) -> f64 {
    grid.weights()
        .iter()
        .enumerate()
        .map(|(n, w)| w * f(n) * f(n))
        .sum::<f64>()
        .sqrt()
}

/// Relative `L²` distance between the deflections of two states.
pub fn deflection_distance(a: &MidsurfaceState, b: &MidsurfaceState) -> f64 {
    let grid = a.grid();
    let norm = l2(grid, |n| b.v(n));
    let diff = l2(grid, |n| a.v(n) - b.v(n));
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Runs the comparison: one limit solve on the mid-surface grid and one 3D
/// solve per thickness.
pub fn compare_minimizers(
    material: &Material,
    setup: &CompareSetup,
) -> Result<(LimitSolution, Vec<CompareRow>), CompareError> {
    let h_ok = setup.h_list.iter().all(|&h| h > 0.0 && h < 1.0)
        && setup.h_list.windows(2).all(|w| w[1] < w[0]);
    if setup.h_list.is_empty() || !h_ok {
        return Err(CompareError::ThicknessList);
    }
    let alpha = setup.force.alpha();
    if (setup.sigma - (2.0 * alpha - 2.0)).abs() > 1e-12 {
        return Err(CompareError::Exponents {
            sigma: setup.sigma,
            alpha,
        });
    }
    let limit = minimize_limit(material, &setup.force, &limit_solver_options())?;
    let mut rows = Vec::with_capacity(setup.h_list.len());
    for &h in &setup.h_list {
        let plate = minimize_plate(
            material,
            setup.grid,
            h,
            setup.sigma,
            &setup.force,
            setup.variant,
            setup.bc_mode,
            &setup.solver,
        )?;
        if plate.solve.status != Status::Converged {
            return Err(CompareError::NotConverged {
                h,
                status: plate.solve.status.name(),
                residual: plate.solve.grad_norm,
                partial: rows,
            });
        }
        let rotation = mollified_rotation_field_2d(&plate.field, TUBULAR_RADIUS)?;
        let (state, _) = extract_midsurface(&plate.field, setup.sigma, Some(&rotation.q));
        let limit_min = limit.energy.total;
        let gap = (plate.scaled_energy - limit_min).abs();
        rows.push(CompareRow {
            h,
            scaled_3d_min: plate.scaled_energy,
            limit_min,
            gap,
            rel_gap: if limit_min == 0.0 { gap } else { gap / limit_min.abs() },
            v_rel_l2: deflection_distance(&state, &limit.state),
            u_norm: l2(state.grid(), |n| state.u(n)[0].hypot(state.u(n)[1])),
            iterations: plate.solve.iterations,
        });
    }
    Ok((limit, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;

    #[test]
    fn profiles_are_balanced() {
        let grid = Grid2::new(9, 7, 1.0, 1.0).unwrap();
        for p in [LoadProfile::Bump, LoadProfile::Dipole] {
            let f = p.force(grid, 2.0, 4.0).unwrap();
            assert!(!f.is_zero());
        }
        assert!(LoadProfile::Zero.force(grid, 1.0, 4.0).unwrap().is_zero());
        assert_eq!("dipole".parse::<LoadProfile>(), Ok(LoadProfile::Dipole));
    }

    #[test]
    fn zero_load_gives_zero_minima() {
        let m = Material::new(MaterialParams::default()).unwrap();
        // mollification needs h to span two grid spacings
        let grid = Grid3::new(21, 21, 3, 1.0, 1.0).unwrap();
        let setup = CompareSetup {
            grid,
            sigma: 6.0,
            h_list: vec![0.2, 0.1],
            force: ForceSpec::zero(grid.plane(), 4.0),
            variant: Variant::Plain,
            bc_mode: BcMode::Enforce,
            solver: plate_solver_options(),
        };
        let (limit, rows) = compare_minimizers(&m, &setup).unwrap();
        assert_eq!(limit.energy.total, 0.0);
        for r in rows {
            assert_eq!(r.scaled_3d_min, 0.0);
            assert_eq!(r.gap, 0.0);
        }
    }

    #[test]
    fn exponent_mismatch_is_rejected() {
        let m = Material::new(MaterialParams::default()).unwrap();
        let grid = Grid3::new(5, 5, 3, 1.0, 1.0).unwrap();
        let setup = CompareSetup {
            grid,
            sigma: 5.0,
            h_list: vec![0.1],
            force: ForceSpec::zero(grid.plane(), 4.0),
            variant: Variant::Plain,
            bc_mode: BcMode::Enforce,
            solver: plate_solver_options(),
        };
        assert!(matches!(
            compare_minimizers(&m, &setup),
            Err(CompareError::Exponents { .. })
        ));
    }
}
