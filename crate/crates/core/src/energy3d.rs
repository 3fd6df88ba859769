//! Discrete 3D plate functionals with per-term breakdown and exact gradients.
//!
//! First-gradient densities are integrated over trilinear elements with the
//! 2×2×2 Gauss rule; the thickness regularizer and the second-gradient term
//! use nodal finite differences with trapezoid weights. Elements are processed
//! in parallel by slabs of constant `i`, and slab results are always combined
//! in slab order, so evaluations are bit-for-bit reproducible.

use nalgebra::{Matrix2, Matrix3, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{
    boundary_mask, element_displacement_gradient, DeformationField3, Grid2, Grid3, HexKernel,
    SecondDerivativeOps, SecondOp,
};
use crate::material::{w1_strain, w2_displacement, w2_stress, Material, INFEASIBLE};
use crate::optimize::Objective;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("load violates the equilibrium conditions: {what} = {value:e} (tolerance {tolerance:e})")]
    Unbalanced {
        what: &'static str,
        value: f64,
        tolerance: f64,
    },
    #[error("load grid {load:?} does not match the plate grid {plate:?}")]
    GridMismatch { load: Grid2, plate: Grid2 },
    #[error("load has {got} nodal values, grid has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("second-gradient functional needs nz >= 3, got {0}")]
    TooFewLayers(usize),
}

/// Which 3D functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Membrane, quartic, bulk and thickness-regularizer terms.
    Plain,
    /// The same plus `l h² |∇_h² y|²`, without the thickness regularizer.
    SecondGrad,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::SecondGrad => "second_grad",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Variant::Plain),
            "second_grad" => Ok(Variant::SecondGrad),
            other => Err(format!("unknown variant `{other}` (plain|second_grad)")),
        }
    }
}

/// Treatment of the clamped lateral boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcMode {
    /// Violations make the energy infeasible; boundary gradients are zeroed.
    Enforce,
    /// The condition is not checked.
    Ignore,
}

impl BcMode {
    pub fn name(self) -> &'static str {
        match self {
            BcMode::Enforce => "enforce",
            BcMode::Ignore => "ignore",
        }
    }
}

impl std::str::FromStr for BcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enforce" => Ok(BcMode::Enforce),
            "ignore" => Ok(BcMode::Ignore),
            other => Err(format!("unknown bc mode `{other}` (enforce|ignore)")),
        }
    }
}

/// Per-term energies, unscaled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub e_membrane: f64,
    pub e_quartic: f64,
    pub e_shear: f64,
    pub e_reg: f64,
    pub e_secondgrad: f64,
    pub e_force: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn infeasible() -> Self {
        Self {
            total: INFEASIBLE,
            ..Self::default()
        }
    }

    fn summed(mut self) -> Self {
        self.total = self.e_membrane
            + self.e_quartic
            + self.e_shear
            + self.e_reg
            + self.e_secondgrad
            + self.e_force;
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.total.is_finite()
    }

    /// Every term multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            e_membrane: factor * self.e_membrane,
            e_quartic: factor * self.e_quartic,
            e_shear: factor * self.e_shear,
            e_reg: factor * self.e_reg,
            e_secondgrad: factor * self.e_secondgrad,
            e_force: factor * self.e_force,
            total: factor * self.total,
        }
    }
}

/// Transverse load `f^h = h^α (0, 0, f₃(x'))` satisfying the discrete
/// equilibrium conditions (zero resultant and zero moments).
#[derive(Debug, Clone, PartialEq)]
pub struct ForceSpec {
    grid: Grid2,
    f3: Vec<f64>,
    alpha: f64,
}

impl ForceSpec {
    /// Validates zero mean and zero first moments under trapezoid weights.
    pub fn new(grid: Grid2, f3: Vec<f64>, alpha: f64) -> Result<Self, EnergyError> {
        if f3.len() != grid.len() {
            return Err(EnergyError::SizeMismatch {
                expected: grid.len(),
                got: f3.len(),
            });
        }
        let w = grid.weights();
        let scale: f64 = w.iter().zip(&f3).map(|(w, f)| w * f.abs()).sum();
        let arm = grid.lx.max(grid.ly).max(1.0);
        let tolerance = 1e-10 * scale.max(f64::MIN_POSITIVE) * arm;
        let [m0, m1, m2] = moments(&grid, &w, &f3);
        for (what, value) in [("resultant", m0), ("moment about x2", m1), ("moment about x1", m2)] {
            if value.abs() > tolerance {
                return Err(EnergyError::Unbalanced {
                    what,
                    value,
                    tolerance,
                });
            }
        }
        Ok(Self { grid, f3, alpha })
    }

    /// Projects an arbitrary nodal load onto the equilibrated subspace (the
    /// weighted orthogonal complement of `span{1, x1, x2}`).
    pub fn balanced(grid: Grid2, f3: Vec<f64>, alpha: f64) -> Result<Self, EnergyError> {
        if f3.len() != grid.len() {
            return Err(EnergyError::SizeMismatch {
                expected: grid.len(),
                got: f3.len(),
            });
        }
        let w = grid.weights();
        let basis: Vec<[f64; 3]> = (0..grid.nx)
            .flat_map(|i| (0..grid.ny).map(move |j| [1.0, grid.x1(i), grid.x2(j)]))
            .collect();
        let mut gram = nalgebra::Matrix3::<f64>::zeros();
        let mut rhs = nalgebra::Vector3::<f64>::zeros();
        for n in 0..grid.len() {
            for a in 0..3 {
                rhs[a] += w[n] * basis[n][a] * f3[n];
                for b in 0..3 {
                    gram[(a, b)] += w[n] * basis[n][a] * basis[n][b];
                }
            }
        }
        let coef = gram
            .cholesky()
            .expect("moment Gram matrix of a rectangle grid is positive definite")
            .solve(&rhs);
        let projected = (0..grid.len())
            .map(|n| f3[n] - (0..3).map(|a| coef[a] * basis[n][a]).sum::<f64>())
            .collect();
        Self::new(grid, projected, alpha)
    }

    pub fn zero(grid: Grid2, alpha: f64) -> Self {
        Self {
            grid,
            f3: vec![0.0; grid.len()],
            alpha,
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn f3(&self) -> &[f64] {
        &self.f3
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_zero(&self) -> bool {
        self.f3.iter().all(|&f| f == 0.0)
    }

    /// The same load multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            f3: self.f3.iter().map(|f| factor * f).collect(),
            alpha: self.alpha,
        }
    }
}

fn moments(grid: &Grid2, w: &[f64], f3: &[f64]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let n = grid.node(i, j);
            m[0] += w[n] * f3[n];
            m[1] += w[n] * grid.x1(i) * f3[n];
            m[2] += w[n] * grid.x2(j) * f3[n];
        }
    }
    m
}

#[derive(Debug, Clone, Copy, Default)]
struct ElementTerms {
    membrane: f64,
    quartic: f64,
    shear: f64,
}

impl ElementTerms {
    fn add(&mut self, other: &ElementTerms) {
        self.membrane += other.membrane;
        self.quartic += other.quartic;
        self.shear += other.shear;
    }
}

/// A discrete 3D functional on a fixed grid and thickness.
#[derive(Debug, Clone)]
pub struct PlateEnergy<'a> {
    material: &'a Material,
    grid: Grid3,
    h: f64,
    variant: Variant,
    bc_mode: BcMode,
    force: Option<&'a ForceSpec>,
    kernel: HexKernel,
    mask: Vec<bool>,
    /// Factor applied by the [`Objective`] implementation.
    scale: f64,
}

impl<'a> PlateEnergy<'a> {
    pub fn new(
        material: &'a Material,
        grid: Grid3,
        h: f64,
        variant: Variant,
        bc_mode: BcMode,
    ) -> Result<Self, EnergyError> {
        if variant == Variant::SecondGrad && grid.nz < 3 {
            return Err(EnergyError::TooFewLayers(grid.nz));
        }
        Ok(Self {
            material,
            grid,
            h,
            variant,
            bc_mode,
            force: None,
            kernel: HexKernel::new(&grid),
            mask: boundary_mask(&grid),
            scale: 1.0,
        })
    }

    /// Adds the load term `−∫ f^h · y`.
    pub fn with_force(mut self, force: &'a ForceSpec) -> Result<Self, EnergyError> {
        if *force.grid() != self.grid.plane() {
            return Err(EnergyError::GridMismatch {
                load: *force.grid(),
                plate: self.grid.plane(),
            });
        }
        self.force = Some(force);
        Ok(self)
    }

    /// Multiplies the objective (not the breakdown) by `scale`, e.g. `h^{−σ}`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Boundary mask over the flat displacement (lateral boundary nodes).
    pub fn boundary_mask(&self) -> &[bool] {
        &self.mask
    }

    fn plane_len(&self) -> usize {
        3 * self.grid.ny * self.grid.nz
    }

    fn bc_violated(&self, disp: &[f64]) -> bool {
        self.bc_mode == BcMode::Enforce
            && disp.iter().zip(&self.mask).any(|(d, &m)| m && *d != 0.0)
    }

    /// Energy of a displacement vector.
    pub fn evaluate(&self, disp: &[f64]) -> EnergyBreakdown {
        assert_eq!(disp.len(), 3 * self.grid.len());
        if self.bc_violated(disp) {
            return EnergyBreakdown::infeasible();
        }
        let slabs: Vec<ElementTerms> = (0..self.grid.nx - 1)
            .into_par_iter()
            .map(|i| self.slab(i, disp, None))
            .collect();
        self.finish(disp, &slabs, None)
    }

    /// Energy and its gradient with respect to the nodal displacement. When
    /// the state is infeasible the gradient is left zero.
    pub fn evaluate_with_gradient(&self, disp: &[f64], grad: &mut [f64]) -> EnergyBreakdown {
        assert_eq!(disp.len(), 3 * self.grid.len());
        assert_eq!(grad.len(), disp.len());
        grad.fill(0.0);
        if self.bc_violated(disp) {
            return EnergyBreakdown::infeasible();
        }
        let plane = self.plane_len();
        let n_slabs = self.grid.nx - 1;
        let mut slabs = vec![ElementTerms::default(); n_slabs];
        // Two passes over alternating slabs so each pass writes disjoint
        // pairs of node planes.
        for parity in 0..2 {
            let offset = parity * plane;
            let results: Vec<(usize, ElementTerms)> = grad[offset..]
                .par_chunks_mut(2 * plane)
                .enumerate()
                .filter_map(|(m, chunk)| {
                    let i = 2 * m + parity;
                    (i < n_slabs).then(|| (i, self.slab(i, disp, Some(chunk))))
                })
                .collect();
            for (i, terms) in results {
                slabs[i] = terms;
            }
        }
        if slabs.iter().any(|t| !t.shear.is_finite()) {
            grad.fill(0.0);
            return EnergyBreakdown::infeasible();
        }
        let out = self.finish(disp, &slabs, Some(grad));
        if self.bc_mode == BcMode::Enforce {
            for (g, &m) in grad.iter_mut().zip(&self.mask) {
                if m {
                    *g = 0.0;
                }
            }
        }
        out
    }

    /// Element terms of slab `i`; gradient contributions go to the chunk
    /// holding node planes `i` and `i + 1`.
    fn slab(&self, i: usize, disp: &[f64], mut grad: Option<&mut [f64]>) -> ElementTerms {
        let g = &self.grid;
        let params = self.material.params();
        let (beta, c1, mu, lambda) = (params.beta, params.c1, params.mu, params.lambda);
        let h = self.h;
        let h2 = h * h;
        let base = i * g.ny * g.nz;
        let w = self.kernel.weight;
        let mut acc = ElementTerms::default();
        for j in 0..g.ny - 1 {
            for k in 0..g.nz - 1 {
                let nodes = HexKernel::nodes(g, i, j, k);
                for point in 0..8 {
                    let hd = element_displacement_gradient(&self.kernel, point, &nodes, disp, h);
                    let a = hd.fixed_view::<2, 2>(0, 0).into_owned();
                    let b = Vector2::new(hd[(2, 0)], hd[(2, 1)]);
                    let strain: Matrix2<f64> = a + a.transpose() + a.transpose() * a + b * b.transpose();
                    let b2 = b.norm_squared();
                    acc.membrane += w * w1_strain(&strain, beta);
                    acc.quartic += w * c1 * b2 * b2;
                    let bulk = w2_displacement(&hd, mu, lambda);
                    if !bulk.is_finite() {
                        acc.shear = INFEASIBLE;
                        return acc;
                    }
                    acc.shear += w * h2 * bulk;

                    let Some(grad) = grad.as_deref_mut() else { continue };
                    let f = Matrix3::identity() + hd;
                    let Some(stress) = w2_stress(&f, mu, lambda) else {
                        acc.shear = INFEASIBLE;
                        return acc;
                    };
                    // derivative with respect to the scaled gradient
                    let mut p = stress * h2;
                    let fp = f.fixed_view::<3, 2>(0, 0);
                    let membrane = fp * (strain * (4.0 * beta));
                    for r in 0..3 {
                        for s in 0..2 {
                            p[(r, s)] += membrane[(r, s)];
                        }
                    }
                    p[(2, 0)] += 4.0 * c1 * b2 * b[0];
                    p[(2, 1)] += 4.0 * c1 * b2 * b[1];
                    for (a_loc, &n) in nodes.iter().enumerate() {
                        let gr = self.kernel.grad[point][a_loc];
                        let local = 3 * (n - base);
                        for c in 0..3 {
                            grad[local + c] += w
                                * (p[(c, 0)] * gr[0] + p[(c, 1)] * gr[1] + p[(c, 2)] * gr[2] / h);
                        }
                    }
                }
            }
        }
        acc
    }

    fn finish(
        &self,
        disp: &[f64],
        slabs: &[ElementTerms],
        mut grad: Option<&mut [f64]>,
    ) -> EnergyBreakdown {
        let mut terms = ElementTerms::default();
        for s in slabs {
            terms.add(s);
        }
        if !terms.shear.is_finite() {
            return EnergyBreakdown::infeasible();
        }
        let mut out = EnergyBreakdown {
            e_membrane: terms.membrane,
            e_quartic: terms.quartic,
            e_shear: terms.shear,
            ..EnergyBreakdown::default()
        };
        match self.variant {
            Variant::Plain => out.e_reg = self.regularizer(disp, grad.as_deref_mut()),
            Variant::SecondGrad => {
                out.e_secondgrad = self.second_gradient(disp, grad.as_deref_mut())
            }
        }
        if let Some(force) = self.force {
            out.e_force = self.force_term(force, disp, grad.as_deref_mut());
        }
        out.summed()
    }

    /// `h^{−ε} Σ w |∂₃² d'|²` with nodal trapezoid weights.
    fn regularizer(&self, disp: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let g = &self.grid;
        let ops = SecondDerivativeOps::new(g, self.h);
        let weights = g.weights();
        let factor = self.h.powf(-self.material.params().epsilon);
        let zscale = ops.thickness_scale();
        let column = |i: usize, j: usize, mut grad: Option<&mut [f64]>| -> f64 {
            let mut sum = 0.0;
            for k in 0..g.nz {
                let n = g.node(i, j, k);
                let stencil = ops.thickness_second(k);
                for c in 0..2 {
                    // integer weights first so that affine columns give exact zeros
                    let val = zscale * stencil.apply(|kk| disp[3 * g.node(i, j, kk) + c]);
                    sum += weights[n] * val * val;
                    if let Some(grad) = grad.as_deref_mut() {
                        let coef = 2.0 * factor * weights[n] * val * zscale;
                        for (kk, wk) in stencil.iter() {
                            // grad is the slice of plane i
                            grad[3 * (j * g.nz + kk) + c] += coef * wk;
                        }
                    }
                }
            }
            sum
        };
        let plane = self.plane_len();
        let partial: Vec<f64> = match grad {
            Some(grad) => grad
                .par_chunks_mut(plane)
                .enumerate()
                .map(|(i, chunk)| (0..g.ny).map(|j| column(i, j, Some(&mut *chunk))).sum())
                .collect(),
            None => (0..g.nx)
                .into_par_iter()
                .map(|i| (0..g.ny).map(|j| column(i, j, None)).sum())
                .collect(),
        };
        factor * partial.iter().sum::<f64>()
    }

    /// `l h² Σ w |∇_h² d|²` with nodal trapezoid weights.
    fn second_gradient(&self, disp: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let l = self.material.params().l;
        if l == 0.0 {
            return 0.0;
        }
        let g = &self.grid;
        let ops = SecondDerivativeOps::new(g, self.h);
        let weights = g.weights();
        let factor = l * self.h * self.h;
        // operator values per node, plane-parallel
        let values: Vec<[[f64; 3]; 6]> = (0..g.nx)
            .into_par_iter()
            .flat_map_iter(|i| {
                let ops = &ops;
                (0..g.ny).flat_map(move |j| {
                    (0..g.nz).map(move |k| {
                        let mut out = [[0.0; 3]; 6];
                        for (o, op) in SecondOp::ALL.iter().enumerate() {
                            ops.for_each(*op, (i, j, k), |a, b, c, w| {
                                let n = g.node(a, b, c);
                                for comp in 0..3 {
                                    out[o][comp] += w * disp[3 * n + comp];
                                }
                            });
                        }
                        out
                    })
                })
            })
            .collect();
        let mut sum = 0.0;
        for (n, vals) in values.iter().enumerate() {
            for (o, op) in SecondOp::ALL.iter().enumerate() {
                let m = op.multiplicity();
                sum += weights[n] * m * vals[o].iter().map(|v| v * v).sum::<f64>();
            }
        }
        if let Some(grad) = grad {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    for k in 0..g.nz {
                        let n = g.node(i, j, k);
                        for (o, op) in SecondOp::ALL.iter().enumerate() {
                            let coef = 2.0 * factor * weights[n] * op.multiplicity();
                            let vals = values[n][o];
                            ops.for_each(*op, (i, j, k), |a, b, c, w| {
                                let target = 3 * g.node(a, b, c);
                                for comp in 0..3 {
                                    grad[target + comp] += coef * w * vals[comp];
                                }
                            });
                        }
                    }
                }
            }
        }
        factor * sum
    }

    /// `−Σ w f^h · y` with the thickness average taken column-wise.
    fn force_term(&self, force: &ForceSpec, disp: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let g = &self.grid;
        let plane = g.plane();
        let area_w = plane.weights();
        let amp = self.h.powf(force.alpha());
        let m = (g.nz - 1) as f64;
        let mut col = vec![0.0; g.nz];
        let mut total = 0.0;
        for n2 in 0..plane.len() {
            let f = force.f3()[n2];
            if f == 0.0 {
                continue;
            }
            for (k, slot) in col.iter_mut().enumerate() {
                *slot = self.h * g.x3(k) + disp[3 * (n2 * g.nz + k) + 2];
            }
            total += area_w[n2] * f * crate::fields::column_average(&col);
        }
        if let Some(grad) = grad {
            for n2 in 0..plane.len() {
                let f = force.f3()[n2];
                for k in 0..g.nz {
                    let wk = if k == 0 || k == g.nz - 1 { 0.5 / m } else { 1.0 / m };
                    grad[3 * (n2 * g.nz + k) + 2] -= amp * area_w[n2] * f * wk;
                }
            }
        }
        -amp * total
    }
}

impl Objective for PlateEnergy<'_> {
    fn dim(&self) -> usize {
        3 * self.grid.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.evaluate(x).total
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let e = self.evaluate_with_gradient(x, grad);
        if self.scale != 1.0 {
            grad.iter_mut().for_each(|g| *g *= self.scale);
        }
        self.scale * e.total
    }
}

/// `I^h(y)` (or the second-gradient functional) with breakdown.
pub fn energy_ih(
    y: &DeformationField3,
    material: &Material,
    variant: Variant,
    bc_mode: BcMode,
) -> Result<EnergyBreakdown, EnergyError> {
    Ok(PlateEnergy::new(material, *y.grid(), y.h(), variant, bc_mode)?.evaluate(y.displacement()))
}

/// `J^h(y) = I^h(y) − ∫ f^h · y`.
pub fn energy_jh(
    y: &DeformationField3,
    material: &Material,
    force: &ForceSpec,
    variant: Variant,
    bc_mode: BcMode,
) -> Result<EnergyBreakdown, EnergyError> {
    Ok(PlateEnergy::new(material, *y.grid(), y.h(), variant, bc_mode)?
        .with_force(force)?
        .evaluate(y.displacement()))
}

/// Energy and nodal gradient (three entries per node) of the functional.
pub fn grad_energy(
    y: &DeformationField3,
    material: &Material,
    variant: Variant,
    bc_mode: BcMode,
    force: Option<&ForceSpec>,
) -> Result<(EnergyBreakdown, Vec<f64>), EnergyError> {
    let mut energy = PlateEnergy::new(material, *y.grid(), y.h(), variant, bc_mode)?;
    if let Some(force) = force {
        energy = energy.with_force(force)?;
    }
    let mut grad = vec![0.0; y.displacement().len()];
    let e = energy.evaluate_with_gradient(y.displacement(), &mut grad);
    Ok((e, grad))
}

/// Copy of `y` with the lateral boundary reset to `(x', h·x₃)`.
pub fn apply_bc(y: &DeformationField3) -> DeformationField3 {
    let mut out = y.clone();
    out.apply_bc();
    out
}
