//! Limiting plate functionals on the mid-surface and their minimization.
//!
//! First-order terms are integrated over bilinear elements with the 2×2 Gauss
//! rule, the same quadrature the 3D functional uses in-plane, so that
//! recovery-sequence comparisons are not polluted by a change of
//! discretization. Second-gradient terms use nodal finite differences.

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use crate::energy3d::{EnergyError, ForceSpec};
use crate::fields::{Grid2, MidsurfaceState, PlanarOps, QuadKernel, STATE_COMPONENTS};
use crate::material::{flat2, unflat2, Material, MaterialError};
use crate::optimize::{minimize, Minimization, MinimizeOptions, Objective, OptimizeError, Status};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Load(#[from] EnergyError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("limit minimization did not converge ({status}): gradient max-norm {residual:e}")]
    NotConverged { status: &'static str, residual: f64 },
    #[error("second-gradient limit needs at least 5 nodes per axis, got {nx}x{ny}")]
    TooCoarse { nx: usize, ny: usize },
}

/// Which limit functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitVariant {
    /// Shear, linear membrane and bending terms (energy scaling above the
    /// fourth power).
    ReissnerMindlin,
    /// Nonlinear membrane strain, quartic deflection term and the
    /// second-gradient terms in `v` and `φ` (fourth-power scaling with a
    /// second-gradient penalty).
    SecondGradient,
}

impl LimitVariant {
    pub fn name(self) -> &'static str {
        match self {
            LimitVariant::ReissnerMindlin => "reissner_mindlin",
            LimitVariant::SecondGradient => "second_gradient",
        }
    }
}

/// Per-term limit energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitBreakdown {
    pub variant: LimitVariant,
    pub e_shear: f64,
    pub e_membrane: f64,
    pub e_bending: f64,
    pub e_sg_v: f64,
    pub e_sg_phi: f64,
    pub e_quartic: f64,
    pub e_force: f64,
    pub total: f64,
}

impl LimitBreakdown {
    pub const CSV_HEADER: &'static str =
        "variant,e_shear,e_membrane,e_bending,e_sg_v,e_sg_phi,e_quartic,e_force,total";

    fn new(variant: LimitVariant) -> Self {
        Self {
            variant,
            e_shear: 0.0,
            e_membrane: 0.0,
            e_bending: 0.0,
            e_sg_v: 0.0,
            e_sg_phi: 0.0,
            e_quartic: 0.0,
            e_force: 0.0,
            total: 0.0,
        }
    }

    fn summed(mut self) -> Self {
        self.total = self.e_shear
            + self.e_membrane
            + self.e_bending
            + self.e_sg_v
            + self.e_sg_phi
            + self.e_quartic
            + self.e_force;
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.variant.name(),
            self.e_shear,
            self.e_membrane,
            self.e_bending,
            self.e_sg_v,
            self.e_sg_phi,
            self.e_quartic,
            self.e_force,
            self.total
        )
    }
}

/// Nodal transverse-shear matrices: zero except the off-block entries
/// `φᵢ + ∂ᵢv` in positions `(i, 3)` and `(3, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtildeField {
    pub grid: Grid2,
    pub values: Vec<Matrix3<f64>>,
}

/// Shear matrix with off-block entries `g`.
pub(crate) fn shear_matrix(g: [f64; 2]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for i in 0..2 {
        m[(i, 2)] = g[i];
        m[(2, i)] = g[i];
    }
    m
}

/// Nodal shear matrices with `∇'v` from central differences.
pub fn gtilde(state: &MidsurfaceState) -> GtildeField {
    let grid = *state.grid();
    let ops = PlanarOps::new(&grid);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let n = grid.node(i, j);
            let dv = ops.gradient(&grid, i, j, |m| state.v(m));
            let phi = state.phi(n);
            values.push(shear_matrix([phi[0] + dv[0], phi[1] + dv[1]]));
        }
    }
    GtildeField { grid, values }
}

/// Discrete limit functional on a fixed grid.
#[derive(Debug, Clone)]
pub struct LimitEnergy<'a> {
    material: &'a Material,
    grid: Grid2,
    variant: LimitVariant,
    force: Option<&'a ForceSpec>,
    kernel: QuadKernel,
    ops: PlanarOps,
    weights: Vec<f64>,
}

impl<'a> LimitEnergy<'a> {
    pub fn new(
        material: &'a Material,
        grid: Grid2,
        variant: LimitVariant,
        force: Option<&'a ForceSpec>,
    ) -> Result<Self, LimitError> {
        if variant == LimitVariant::SecondGradient && (grid.nx < 5 || grid.ny < 5) {
            return Err(LimitError::TooCoarse {
                nx: grid.nx,
                ny: grid.ny,
            });
        }
        if let Some(f) = force {
            if *f.grid() != grid {
                return Err(EnergyError::GridMismatch {
                    load: *f.grid(),
                    plate: grid,
                }
                .into());
            }
        }
        Ok(Self {
            material,
            grid,
            variant,
            force,
            kernel: QuadKernel::new(&grid),
            ops: PlanarOps::new(&grid),
            weights: grid.weights(),
        })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<LimitBreakdown, LimitError> {
        self.run(values, None)
    }

    pub fn evaluate_with_gradient(
        &self,
        values: &[f64],
        grad: &mut [f64],
    ) -> Result<LimitBreakdown, LimitError> {
        grad.fill(0.0);
        self.run(values, Some(grad))
    }

    fn run(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> Result<LimitBreakdown, LimitError> {
        assert_eq!(x.len(), STATE_COMPONENTS * self.grid.len());
        let material = self.material;
        let c1 = material.params().c1;
        let nonlinear = self.variant == LimitVariant::SecondGradient;
        let g = &self.grid;
        let kw = self.kernel.weight;
        let mut out = LimitBreakdown::new(self.variant);
        let mut pm = [0.0; 4];
        for i in 0..g.nx - 1 {
            for j in 0..g.ny - 1 {
                let nodes = QuadKernel::nodes(g, i, j);
                for p in 0..4 {
                    let gr = &self.kernel.grad[p];
                    let nv = &self.kernel.value[p];
                    let mut du = Matrix2::zeros();
                    let mut dphi = Matrix2::zeros();
                    let mut dv = [0.0; 2];
                    let mut phi = [0.0; 2];
                    for (a, &n) in nodes.iter().enumerate() {
                        let s = &x[STATE_COMPONENTS * n..STATE_COMPONENTS * (n + 1)];
                        for c in 0..2 {
                            for d in 0..2 {
                                du[(c, d)] += s[c] * gr[a][d];
                                dphi[(c, d)] += s[3 + c] * gr[a][d];
                            }
                            dv[c] += s[2] * gr[a][c];
                            phi[c] += s[3 + c] * nv[a];
                        }
                    }

                    // transverse shear: relaxation of the symmetric part of
                    // the shear matrix
                    let shear = [phi[0] + dv[0], phi[1] + dv[1]];
                    let sym_shear = shear_matrix([0.5 * shear[0], 0.5 * shear[1]]);
                    let relaxed = material.q2_relaxed(&sym_shear)?;
                    out.e_shear += kw * 0.5 * relaxed.value;

                    let mut membrane = du + du.transpose();
                    if nonlinear {
                        membrane[(0, 0)] += dv[0] * dv[0];
                        membrane[(0, 1)] += dv[0] * dv[1];
                        membrane[(1, 0)] += dv[1] * dv[0];
                        membrane[(1, 1)] += dv[1] * dv[1];
                    }
                    out.e_membrane += kw * 0.5 * material.q_membrane(&membrane);
                    let bending = (dphi + dphi.transpose()) * 0.5;
                    out.e_bending += kw * material.q_membrane(&bending) / 6.0;
                    let dv2 = dv[0] * dv[0] + dv[1] * dv[1];
                    if nonlinear {
                        out.e_quartic += kw * c1 * dv2 * dv2;
                    }

                    let Some(grad) = grad.as_deref_mut() else { continue };
                    let ps = material.q2_relaxed_gradient(&sym_shear, relaxed.c_star);
                    // d(½ Q)/d(shear_i) with shear entries halved in the matrix
                    let g_shear = [
                        kw * 0.5 * 0.5 * (ps[(0, 2)] + ps[(2, 0)]),
                        kw * 0.5 * 0.5 * (ps[(1, 2)] + ps[(2, 1)]),
                    ];
                    material.membrane_form().gradient(&flat2(&membrane), &mut pm);
                    let dm = unflat2(&pm) * (0.5 * kw);
                    let d_du = dm + dm.transpose();
                    let mut d_dv = [g_shear[0], g_shear[1]];
                    if nonlinear {
                        for k in 0..2 {
                            d_dv[k] += (0..2).map(|jj| (dm[(k, jj)] + dm[(jj, k)]) * dv[jj]).sum::<f64>();
                            d_dv[k] += kw * 4.0 * c1 * dv2 * dv[k];
                        }
                    }
                    material.membrane_form().gradient(&flat2(&bending), &mut pm);
                    let db = unflat2(&pm) * (kw / 6.0);
                    let d_dphi = (db + db.transpose()) * 0.5;
                    for (a, &n) in nodes.iter().enumerate() {
                        let s = &mut grad[STATE_COMPONENTS * n..STATE_COMPONENTS * (n + 1)];
                        for c in 0..2 {
                            s[c] += d_du[(c, 0)] * gr[a][0] + d_du[(c, 1)] * gr[a][1];
                            s[2] += d_dv[c] * gr[a][c];
                            s[3 + c] += g_shear[c] * nv[a]
                                + d_dphi[(c, 0)] * gr[a][0]
                                + d_dphi[(c, 1)] * gr[a][1];
                        }
                    }
                }
            }
        }
        if nonlinear {
            self.second_gradient_terms(x, &mut out, grad.as_deref_mut());
        }
        if let Some(force) = self.force {
            let mut e = 0.0;
            for n in 0..g.len() {
                let f = force.f3()[n];
                e -= self.weights[n] * f * x[STATE_COMPONENTS * n + 2];
                if let Some(grad) = grad.as_deref_mut() {
                    grad[STATE_COMPONENTS * n + 2] -= self.weights[n] * f;
                }
            }
            out.e_force = e;
        }
        Ok(out.summed())
    }

    /// `l Σ w |∇'²v|²` and `l Σ w |∇'φ|²` at the nodes.
    fn second_gradient_terms(&self, x: &[f64], out: &mut LimitBreakdown, mut grad: Option<&mut [f64]>) {
        let l = self.material.params().l;
        let g = &self.grid;
        let ops = &self.ops;
        let comp = |n: usize, c: usize| x[STATE_COMPONENTS * n + c];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let w = self.weights[g.node(i, j)];
                let d11 = ops.sx2[i].apply(|a| comp(g.node(a, j), 2));
                let d22 = ops.sy2[j].apply(|b| comp(g.node(i, b), 2));
                let mut d12 = 0.0;
                for (a, wa) in ops.sx1[i].iter() {
                    for (b, wb) in ops.sy1[j].iter() {
                        d12 += wa * wb * comp(g.node(a, b), 2);
                    }
                }
                out.e_sg_v += l * w * (d11 * d11 + 2.0 * d12 * d12 + d22 * d22);
                let mut dphi = [[0.0; 2]; 2];
                for c in 0..2 {
                    dphi[c][0] = ops.sx1[i].apply(|a| comp(g.node(a, j), 3 + c));
                    dphi[c][1] = ops.sy1[j].apply(|b| comp(g.node(i, b), 3 + c));
                    out.e_sg_phi += l * w * (dphi[c][0].powi(2) + dphi[c][1].powi(2));
                }
                let Some(grad) = grad.as_deref_mut() else { continue };
                let k = 2.0 * l * w;
                for (a, wa) in ops.sx2[i].iter() {
                    grad[STATE_COMPONENTS * g.node(a, j) + 2] += k * d11 * wa;
                }
                for (b, wb) in ops.sy2[j].iter() {
                    grad[STATE_COMPONENTS * g.node(i, b) + 2] += k * d22 * wb;
                }
                for (a, wa) in ops.sx1[i].iter() {
                    for (b, wb) in ops.sy1[j].iter() {
                        grad[STATE_COMPONENTS * g.node(a, b) + 2] += 2.0 * k * d12 * wa * wb;
                    }
                }
                for c in 0..2 {
                    for (a, wa) in ops.sx1[i].iter() {
                        grad[STATE_COMPONENTS * g.node(a, j) + 3 + c] += k * dphi[c][0] * wa;
                    }
                    for (b, wb) in ops.sy1[j].iter() {
                        grad[STATE_COMPONENTS * g.node(i, b) + 3 + c] += k * dphi[c][1] * wb;
                    }
                }
            }
        }
    }
}

impl Objective for LimitEnergy<'_> {
    fn dim(&self) -> usize {
        STATE_COMPONENTS * self.grid.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).map_or(f64::INFINITY, |b| b.total)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate_with_gradient(x, grad).map_or(f64::INFINITY, |b| b.total)
    }
}

/// Limit energy of a mid-surface state.
pub fn limit_energy(
    state: &MidsurfaceState,
    material: &Material,
    variant: LimitVariant,
    force: Option<&ForceSpec>,
) -> Result<LimitBreakdown, LimitError> {
    LimitEnergy::new(material, *state.grid(), variant, force)?.evaluate(state.values())
}

/// Minimizer of a limit functional together with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    pub state: MidsurfaceState,
    pub energy: LimitBreakdown,
    pub solve: Minimization,
}

/// Solver settings for the quadratic limit problems. The tolerance sits
/// above the level where energy decreases vanish in rounding noise.
pub fn limit_solver_options() -> MinimizeOptions {
    MinimizeOptions {
        max_iters: 50_000,
        grad_tol: 1e-6,
        memory: 20,
        ..MinimizeOptions::default()
    }
}

/// Minimizes the load-driven limit problem in `(v, φ)` with `u ≡ 0`, all
/// fields clamped to zero on `∂S`.
pub fn minimize_limit(
    material: &Material,
    force: &ForceSpec,
    opts: &MinimizeOptions,
) -> Result<LimitSolution, LimitError> {
    let start = MidsurfaceState::zeros(*force.grid());
    minimize_limit_state(material, LimitVariant::ReissnerMindlin, Some(force), &start, true, opts)
}

/// General entry point: minimizes from `start`, clamping every component on
/// `∂S` and optionally holding `u` at its starting value.
pub fn minimize_limit_state(
    material: &Material,
    variant: LimitVariant,
    force: Option<&ForceSpec>,
    start: &MidsurfaceState,
    hold_u: bool,
    opts: &MinimizeOptions,
) -> Result<LimitSolution, LimitError> {
    let grid = *start.grid();
    let energy = LimitEnergy::new(material, grid, variant, force)?;
    let mut mask = start.boundary_mask();
    if hold_u {
        for (k, m) in mask.iter_mut().enumerate() {
            if k % STATE_COMPONENTS < 2 {
                *m = true;
            }
        }
    }
    let solve = minimize(&energy, start.values(), Some(&mask), opts)?;
    if solve.status != Status::Converged {
        return Err(LimitError::NotConverged {
            status: solve.status.name(),
            residual: solve.grad_norm,
        });
    }
    let state = MidsurfaceState::from_values(grid, solve.x.clone())
        .expect("solver preserves the dimension");
    let energy = energy.evaluate(state.values())?;
    Ok(LimitSolution {
        state,
        energy,
        solve,
    })
}

/// Coefficients of the classical quadratic plate energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPlateCoefficients {
    /// Weights of `(φᵢ + ∂ᵢv)²`.
    pub shear: [f64; 2],
    /// Weights of `(∂ᵢφⱼ + ∂ⱼφᵢ)²`.
    pub bending: [[f64; 2]; 2],
    /// Weights of `(∂ᵢuⱼ + ∂ⱼuᵢ + ½∂ᵢv∂ⱼv)²`, when the membrane is coupled.
    pub membrane: Option<[[f64; 2]; 2]>,
}

/// Direct quadrature of the classical plate energy
/// `Σ aᵢ∫(φᵢ+∂ᵢv)² + Σ bᵢⱼ∫(∂ᵢφⱼ+∂ⱼφᵢ)² [+ Σ cᵢⱼ∫(∂ᵢuⱼ+∂ⱼuᵢ+½∂ᵢv∂ⱼv)²]`.
pub fn linear_rm_energy(coeffs: &LinearPlateCoefficients, state: &MidsurfaceState) -> f64 {
    let g = *state.grid();
    let kernel = QuadKernel::new(&g);
    let x = state.values();
    let mut total = 0.0;
    for i in 0..g.nx - 1 {
        for j in 0..g.ny - 1 {
            let nodes = QuadKernel::nodes(&g, i, j);
            for p in 0..4 {
                let mut du = [[0.0; 2]; 2];
                let mut dphi = [[0.0; 2]; 2];
                let mut dv = [0.0; 2];
                let mut phi = [0.0; 2];
                for (a, &n) in nodes.iter().enumerate() {
                    let gr = kernel.grad[p][a];
                    for c in 0..2 {
                        for d in 0..2 {
                            // du[d][c] = ∂_d u_c
                            du[d][c] += x[5 * n + c] * gr[d];
                            dphi[d][c] += x[5 * n + 3 + c] * gr[d];
                        }
                        dv[c] += x[5 * n + 2] * gr[c];
                        phi[c] += x[5 * n + 3 + c] * kernel.value[p][a];
                    }
                }
                let mut density = 0.0;
                for a in 0..2 {
                    density += coeffs.shear[a] * (phi[a] + dv[a]).powi(2);
                    for b in 0..2 {
                        density += coeffs.bending[a][b] * (dphi[a][b] + dphi[b][a]).powi(2);
                        if let Some(c) = coeffs.membrane {
                            density +=
                                c[a][b] * (du[a][b] + du[b][a] + 0.5 * dv[a] * dv[b]).powi(2);
                        }
                    }
                }
                total += kernel.weight * density;
            }
        }
    }
    total
}
