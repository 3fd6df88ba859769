//! Ansatz and recovery-sequence deformations, their strain expansion, and the
//! thickness sweep comparing rescaled 3D energies with the limit functional.

use nalgebra::{Matrix2, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::energy3d::{energy_ih, BcMode, EnergyBreakdown, EnergyError, Variant};
use crate::fields::{
    affine_column, DeformationField3, FieldError, Grid2, Grid3, MidsurfaceState, PlanarOps,
};
use crate::limit2d::{gtilde, limit_energy, LimitBreakdown, LimitError, LimitVariant};
use crate::material::{Material, MaterialError};

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("energy exponent sigma = {0} must be at least 4")]
    Sigma(f64),
    #[error("thickness {0} must lie in (0, 1)")]
    Thickness(f64),
    #[error("thickness list must be nonempty and strictly decreasing in (0, 1)")]
    ThicknessList,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

/// Smooth mid-surface state built from polynomial bumps.
///
/// Each component is `a · b(x')ᵏ · (1 + p₁ξ₁ + p₂ξ₂)` where `b` is the
/// normalized product bump `16x₁(L₁−x₁)x₂(L₂−x₂)/(L₁²L₂²)` and `ξ` the centred
/// coordinates `x/L − ½`. With `k ≥ 2` the field and its first derivatives
/// vanish on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpState {
    pub lx: f64,
    pub ly: f64,
    pub power: i32,
    /// Amplitude and the two slope coefficients for `u1, u2, v, φ1, φ2`.
    pub coeffs: [[f64; 3]; 5],
}

impl BumpState {
    pub fn zero(lx: f64, ly: f64) -> Self {
        Self {
            lx,
            ly,
            power: 2,
            coeffs: [[0.0; 3]; 5],
        }
    }

    /// State used by the thickness sweeps: all five components nonzero, with
    /// the deflection kept moderate so nonlinear corrections stay small.
    pub fn standard() -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            power: 2,
            coeffs: [
                [0.3, 0.5, -0.4],
                [-0.2, 0.3, 0.6],
                [0.1, -0.5, 0.4],
                [0.4, 0.7, 0.2],
                [-0.3, -0.2, 0.8],
            ],
        }
    }

    /// Random coefficients in `[−1, 1]` and power 2 or 3.
    pub fn random(seed: u64, lx: f64, ly: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let power = rng.random_range(2..=3);
        let mut coeffs = [[0.0; 3]; 5];
        for row in &mut coeffs {
            for c in row.iter_mut() {
                *c = rng.random_range(-1.0..=1.0);
            }
        }
        Self {
            lx,
            ly,
            power,
            coeffs,
        }
    }

    pub fn value(&self, x1: f64, x2: f64) -> [f64; 5] {
        let (lx, ly) = (self.lx, self.ly);
        let b = 16.0 * x1 * (lx - x1) * x2 * (ly - x2) / (lx * lx * ly * ly);
        let bk = b.powi(self.power);
        let (s1, s2) = (x1 / lx - 0.5, x2 / ly - 0.5);
        self.coeffs.map(|[a, p1, p2]| a * bk * (1.0 + p1 * s1 + p2 * s2))
    }

    /// Nodal samples on `grid`, which must cover the bump's rectangle.
    pub fn sample(&self, grid: Grid2) -> MidsurfaceState {
        MidsurfaceState::from_fn(grid, |x1, x2| self.value(x1, x2))
    }
}

/// Generic ansatz `y = (x', x₃) + (h^α u, h^β v) + x₃(h^γ φ, 0)` in physical
/// thickness coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub source: MidsurfaceState,
    pub h: f64,
    pub nz: usize,
}

/// One term of the scaled strain and the power of `h` it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainTerm {
    pub name: &'static str,
    pub exponent: f64,
}

/// Term-by-term comparison of the strain orders produced by an ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentCheck {
    pub terms: Vec<StrainTerm>,
    /// Pairs of terms that should balance but carry different powers.
    pub mismatches: Vec<(&'static str, &'static str, f64)>,
}

impl ExponentCheck {
    pub fn consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl AnsatzSpec {
    /// Strain contributions: the two shear entries must share a power
    /// (`γ = β`) and the stretching must balance the von Kármán term
    /// (`α = 2β`).
    pub fn exponent_check(&self) -> ExponentCheck {
        let terms = vec![
            StrainTerm { name: "membrane sym grad u", exponent: self.alpha },
            StrainTerm { name: "deflection grad v x grad v", exponent: 2.0 * self.beta },
            StrainTerm { name: "shear rotation phi", exponent: self.gamma },
            StrainTerm { name: "shear slope grad v", exponent: self.beta },
        ];
        let mut mismatches = Vec::new();
        for (a, b) in [(2, 3), (0, 1)] {
            let gap = terms[a].exponent - terms[b].exponent;
            if gap.abs() > 1e-12 {
                mismatches.push((terms[a].name, terms[b].name, gap));
            }
        }
        ExponentCheck { terms, mismatches }
    }
}

/// Nodal evaluation of the generic ansatz, stored on the rescaled domain
/// (physical thickness coordinate `h·x₃`).
pub fn build_ansatz(ansatz: &AnsatzSpec) -> Result<DeformationField3, RecoveryError> {
    if !(ansatz.h > 0.0 && ansatz.h < 1.0) {
        return Err(RecoveryError::Thickness(ansatz.h));
    }
    let plane = *ansatz.source.grid();
    let grid = Grid3::over(plane, ansatz.nz)?;
    let (su, sv, sphi) = (
        ansatz.h.powf(ansatz.alpha),
        ansatz.h.powf(ansatz.beta),
        ansatz.h.powf(ansatz.gamma) * ansatz.h,
    );
    let mut disp = vec![0.0; 3 * grid.len()];
    for n2 in 0..plane.len() {
        let (u, v, phi) = (ansatz.source.u(n2), ansatz.source.v(n2), ansatz.source.phi(n2));
        for k in 0..grid.nz {
            let x3 = grid.x3(k);
            let d = &mut disp[3 * (n2 * grid.nz + k)..3 * (n2 * grid.nz + k) + 3];
            d[0] = su * u[0] + x3 * sphi * phi[0];
            d[1] = su * u[1] + x3 * sphi * phi[1];
            d[2] = sv * v;
        }
    }
    Ok(DeformationField3::from_displacement(grid, ansatz.h, disp)?)
}

/// Nodal values of the optimal normal strain `𝓛(G̃)`.
pub fn normal_strain_field(
    state: &MidsurfaceState,
    material: &Material,
) -> Result<Vec<f64>, RecoveryError> {
    gtilde(state)
        .values
        .iter()
        .map(|g| Ok(material.q2_relaxed(g)?.c_star))
        .collect()
}

/// Recovery deformation
/// `ŷ = (x', h x₃) + (h^{σ/2}u, h^{σ/2−1}v) + x₃(h^{σ/2}φ, ½h^{σ/2}𝓛(G̃))`
/// on `nz` thickness layers.
///
/// Each column is affine in `x₃` and rounded onto a dyadic lattice, so the
/// discrete `∂₃²` of the result is exactly zero.
pub fn build_recovery(
    state: &MidsurfaceState,
    sigma: f64,
    h: f64,
    material: &Material,
    nz: usize,
) -> Result<DeformationField3, RecoveryError> {
    if sigma < 4.0 || !sigma.is_finite() {
        return Err(RecoveryError::Sigma(sigma));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(RecoveryError::Thickness(h));
    }
    let plane = *state.grid();
    let grid = Grid3::over(plane, nz)?;
    let normal = normal_strain_field(state, material)?;
    let s = h.powf(0.5 * sigma);
    let sv = h.powf(0.5 * sigma - 1.0);
    let mut disp = vec![0.0; 3 * grid.len()];
    let mut col = vec![0.0; nz];
    for n2 in 0..plane.len() {
        let (u, v, phi) = (state.u(n2), state.v(n2), state.phi(n2));
        let columns = [
            (s * u[0], s * phi[0]),
            (s * u[1], s * phi[1]),
            (sv * v, 0.5 * s * normal[n2]),
        ];
        for (c, (a, b)) in columns.into_iter().enumerate() {
            affine_column(a, b, nz, &mut col);
            for (k, value) in col.iter().enumerate() {
                disp[3 * (n2 * nz + k) + c] = *value;
            }
        }
    }
    Ok(DeformationField3::from_displacement(grid, h, disp)?)
}

/// Deviation of the sampled metric `(∇_hŷ)ᵀ∇_hŷ` from its leading-order
/// expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainResidual {
    /// Max-norm of the remainder over all nodes.
    pub residual: f64,
    /// Size `h^{σ/2−1}` of the leading correction.
    pub leading_order: f64,
    /// Largest off-block entry mismatch against `h^{σ/2−1}(φ + ∇'v)`.
    pub off_block_residual: f64,
}

impl StrainResidual {
    pub fn relative(&self) -> f64 {
        if self.leading_order == 0.0 {
            0.0
        } else {
            self.residual / self.leading_order
        }
    }
}

/// Compares `(∇_hŷ)ᵀ∇_hŷ` at every node with
/// `Id + 2h^{σ/2}(sym∇'u + x₃ sym∇'φ)` in the planar block,
/// `h^{σ/2−1}(φ + ∇'v)` off the block and `1 + h^{σ/2−1}𝓛(G̃)` in the corner.
/// Derivatives of the mid-surface fields use the same nodal stencils as the
/// 3D gradient, so the remainder isolates the quadratic terms.
pub fn strain_check(
    yhat: &DeformationField3,
    state: &MidsurfaceState,
    sigma: f64,
    material: &Material,
) -> Result<StrainResidual, RecoveryError> {
    let grid = *yhat.grid();
    let plane = grid.plane();
    if *state.grid() != plane {
        return Err(FieldError::SizeMismatch {
            expected: plane.len(),
            got: state.grid().len(),
        }
        .into());
    }
    let h = yhat.h();
    let s = h.powf(0.5 * sigma);
    let lead = h.powf(0.5 * sigma - 1.0);
    let normal = normal_strain_field(state, material)?;
    let ops = PlanarOps::new(&plane);
    let grads = yhat.nodal_displacement_gradients();
    let mut residual: f64 = 0.0;
    let mut off_block: f64 = 0.0;
    for i in 0..plane.nx {
        for j in 0..plane.ny {
            let n2 = plane.node(i, j);
            let comp = |c: usize| move |n: usize| state.values()[5 * n + c];
            let mut du = Matrix2::zeros();
            let mut dphi = Matrix2::zeros();
            for c in 0..2 {
                let gu = ops.gradient(&plane, i, j, comp(c));
                let gp = ops.gradient(&plane, i, j, comp(3 + c));
                for d in 0..2 {
                    du[(c, d)] = gu[d];
                    dphi[(c, d)] = gp[d];
                }
            }
            let dv = ops.gradient(&plane, i, j, comp(2));
            let phi = state.phi(n2);
            for k in 0..grid.nz {
                let x3 = grid.x3(k);
                let f = Matrix3::identity() + grads[grid.node(i, j, k)];
                let metric = f.transpose() * f;
                let block = (du + du.transpose()) * s + (dphi + dphi.transpose()) * (s * x3);
                let mut expected = Matrix3::identity();
                for a in 0..2 {
                    for b in 0..2 {
                        expected[(a, b)] += block[(a, b)];
                    }
                    let shear = lead * (phi[a] + dv[a]);
                    expected[(a, 2)] = shear;
                    expected[(2, a)] = shear;
                    off_block = off_block.max((metric[(a, 2)] - shear).abs());
                }
                expected[(2, 2)] += lead * normal[n2];
                residual = residual.max((metric - expected).amax());
            }
        }
    }
    Ok(StrainResidual {
        residual,
        leading_order: lead,
        off_block_residual: off_block,
    })
}

/// One thickness of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    pub sigma: f64,
    pub variant: Variant,
    /// `h^{−σ}` times the 3D breakdown of the recovery field.
    pub scaled: EnergyBreakdown,
    pub limit: LimitBreakdown,
    pub rel_err: f64,
    /// `(l/4)∫|∇'𝓛(G̃)|²`, the mixed second-gradient contribution of the
    /// normal-strain correction (second-gradient variant only).
    pub sg_l: f64,
    /// Set when the 3D energy was infeasible.
    pub flagged: bool,
}

impl StudyRow {
    pub const CSV_HEADER: &'static str = "h,sigma,variant,scaled_total,scaled_membrane,scaled_shear,scaled_quartic,scaled_reg,scaled_sg,limit_total,rel_err,sg_L";

    pub fn csv_row(&self) -> String {
        let e = &self.scaled;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.h,
            self.sigma,
            self.variant.name(),
            e.total,
            e.e_membrane,
            e.e_shear,
            e.e_quartic,
            e.e_reg,
            e.e_secondgrad,
            self.limit.total,
            self.rel_err,
            self.sg_l
        )
    }
}

/// Thickness layers used by the sweep.
pub const STUDY_LAYERS: usize = 8;

/// In-plane node count per axis for thickness `h`: `max(32, round(4/h))`.
pub fn study_resolution(h: f64) -> usize {
    32.max((4.0 / h).round() as usize)
}

fn validate_h_list(h_list: &[f64]) -> Result<(), RecoveryError> {
    let in_range = h_list.iter().all(|&h| h > 0.0 && h < 1.0);
    let decreasing = h_list.windows(2).all(|w| w[1] < w[0]);
    if h_list.is_empty() || !in_range || !decreasing {
        return Err(RecoveryError::ThicknessList);
    }
    Ok(())
}

fn limit_variant(variant: Variant) -> LimitVariant {
    match variant {
        Variant::Plain => LimitVariant::ReissnerMindlin,
        Variant::SecondGrad => LimitVariant::SecondGradient,
    }
}

/// `(l/4) Σ w |∇'𝓛|²` with nodal central differences.
fn normal_strain_gradient_term(grid: &Grid2, normal: &[f64], l: f64) -> f64 {
    let ops = PlanarOps::new(grid);
    let w = grid.weights();
    let mut sum = 0.0;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let g = ops.gradient(grid, i, j, |n| normal[n]);
            sum += w[grid.node(i, j)] * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    0.25 * l * sum
}

/// One row of the sweep on an explicit grid.
pub fn study_row(
    bump: &BumpState,
    plane: Grid2,
    nz: usize,
    h: f64,
    sigma: f64,
    material: &Material,
    variant: Variant,
) -> Result<StudyRow, RecoveryError> {
    let state = bump.sample(plane);
    let yhat = build_recovery(&state, sigma, h, material, nz)?;
    let raw = energy_ih(&yhat, material, variant, BcMode::Enforce)?;
    let scaled = raw.scaled(h.powf(-sigma));
    let limit = limit_energy(&state, material, limit_variant(variant), None)?;
    let flagged = !scaled.is_feasible();
    let rel_err = if flagged {
        f64::INFINITY
    } else if limit.total == 0.0 {
        scaled.total.abs()
    } else {
        (scaled.total - limit.total).abs() / limit.total.abs()
    };
    let sg_l = match variant {
        Variant::SecondGrad => {
            let normal = normal_strain_field(&state, material)?;
            normal_strain_gradient_term(&plane, &normal, material.params().l)
        }
        Variant::Plain => 0.0,
    };
    Ok(StudyRow {
        h,
        sigma,
        variant,
        scaled,
        limit,
        rel_err,
        sg_l,
        flagged,
    })
}

/// Rescaled energies of the recovery sequence against the limit functional,
/// one row per entry of `h_list` (kept in input order). Grids follow
/// [`study_resolution`] with [`STUDY_LAYERS`] thickness layers.
pub fn gamma_study(
    bump: &BumpState,
    h_list: &[f64],
    sigma: f64,
    material: &Material,
    variant: Variant,
) -> Result<Vec<StudyRow>, RecoveryError> {
    validate_h_list(h_list)?;
    if sigma < 4.0 || !sigma.is_finite() {
        return Err(RecoveryError::Sigma(sigma));
    }
    h_list
        .par_iter()
        .map(|&h| {
            let n = study_resolution(h);
            let plane = Grid2::new(n, n, bump.lx, bump.ly)?;
            study_row(bump, plane, STUDY_LAYERS, h, sigma, material, variant)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::extract_midsurface;
    use crate::material::MaterialParams;

    fn material() -> Material {
        Material::new(MaterialParams::default()).unwrap()
    }

    #[test]
    fn bump_vanishes_with_first_derivatives_on_boundary() {
        let b = BumpState::random(3, 1.0, 2.0);
        for t in [0.0, 0.3, 1.0] {
            assert!(b.value(0.0, 2.0 * t).iter().all(|v| *v == 0.0));
            assert!(b.value(t, 2.0).iter().all(|v| *v == 0.0));
        }
        let e = 1e-6;
        let near = b.value(e, 1.0);
        assert!(near.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_state_gives_reference_configuration() {
        let grid = Grid2::unit(8).unwrap();
        let y = build_recovery(&MidsurfaceState::zeros(grid), 5.0, 0.1, &material(), 4).unwrap();
        assert!(y.displacement().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn recovery_is_affine_in_thickness_and_round_trips() {
        let grid = Grid2::unit(12).unwrap();
        let state = BumpState::standard().sample(grid);
        let y = build_recovery(&state, 5.0, 1.0 / 16.0, &material(), 6).unwrap();
        let (back, _) = extract_midsurface(&y, 5.0, None);
        for (a, b) in back.values().iter().zip(state.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let e = energy_ih(&y, &material(), Variant::Plain, BcMode::Enforce).unwrap();
        assert_eq!(e.e_reg, 0.0);
    }

    #[test]
    fn example_material_needs_no_normal_correction() {
        let grid = Grid2::unit(10).unwrap();
        let state = BumpState::standard().sample(grid);
        assert!(normal_strain_field(&state, &material())
            .unwrap()
            .iter()
            .all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn ansatz_exponent_consistency() {
        let source = MidsurfaceState::zeros(Grid2::unit(5).unwrap());
        let mut spec = AnsatzSpec {
            alpha: 2.0,
            beta: 1.0,
            gamma: 1.0,
            source,
            h: 0.1,
            nz: 3,
        };
        assert!(spec.exponent_check().consistent());
        assert!(build_ansatz(&spec).unwrap().displacement().iter().all(|d| *d == 0.0));
        spec.gamma = 1.5;
        let check = spec.exponent_check();
        assert_eq!(check.mismatches.len(), 1);
        assert_eq!(check.mismatches[0].0, "shear rotation phi");
    }

    #[test]
    fn strain_remainder_is_higher_order() {
        let m = material();
        let sigma = 5.0;
        let grid = Grid2::unit(16).unwrap();
        let state = BumpState::standard().sample(grid);
        let mut previous: Option<StrainResidual> = None;
        for h in [0.1, 0.05, 0.025] {
            let y = build_recovery(&state, sigma, h, &m, 4).unwrap();
            let r = strain_check(&y, &state, sigma, &m).unwrap();
            assert!(r.relative() < 0.5, "{r:?}");
            if let Some(p) = previous {
                assert!(r.relative() < 0.6 * p.relative(), "{p:?} -> {r:?}");
            }
            previous = Some(r);
        }
    }

    #[test]
    fn rejects_bad_sweeps() {
        let m = material();
        let b = BumpState::zero(1.0, 1.0);
        assert!(matches!(
            gamma_study(&b, &[0.1, 0.2], 5.0, &m, Variant::Plain),
            Err(RecoveryError::ThicknessList)
        ));
        assert!(matches!(
            gamma_study(&b, &[0.1], 3.0, &m, Variant::Plain),
            Err(RecoveryError::Sigma(s)) if s == 3.0
        ));
    }
}
