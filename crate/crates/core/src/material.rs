//! Stored-energy densities of the orthotropic neo-Hookean plate material.
//!
//! `W1` acts on the in-plane strain `C' = F'ᵀF' + b⊗b` (with `b` the third row
//! of the in-plane columns), `W2` on the full scaled gradient. Quadratic forms
//! at the identity are obtained from central finite-difference Hessians and
//! cached in [`Material`].

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{dist_so2_sq, dist_so3_sq};

/// Value returned for configurations outside the admissible set (`det F ≤ 0`,
/// violated boundary conditions). It propagates through sums, so any energy
/// containing it compares greater than every finite energy.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Finite-difference step used for the Hessians at the identity.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Tolerance on symmetry / eigenvalues of `C'` accepted by [`w1`].
const STRAIN_TOL: f64 = 1e-12;

/// Threshold below which the curvature of `c ↦ Q(G + c e3⊗e3)` counts as zero.
const RELAXATION_DEGENERACY: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("parameter `{name}` = {value} violates: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("in-plane strain is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("in-plane strain has negative eigenvalue {eigenvalue:e}")]
    NegativeEigenvalue { eigenvalue: f64 },
    #[error("relaxation is degenerate: normal-strain curvature {curvature:e}")]
    DegenerateRelaxation { curvature: f64 },
}

/// Material constants and the energy-scaling exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Membrane modulus of `W1`.
    pub beta: f64,
    /// Shear modulus of `W2`.
    pub mu: f64,
    /// Volumetric modulus of `W2`.
    pub lambda: f64,
    /// Weight of the quartic `|∇'y₃|⁴` term.
    pub c1: f64,
    /// Weight of the second-gradient term (only used by the second-gradient
    /// functional).
    pub l: f64,
    /// Exponent of the `h^{-ε}` regularizer.
    pub epsilon: f64,
    /// Energy-scaling exponent.
    pub sigma: f64,
}

impl Default for MaterialParams {
    /// The unit orthotropic neo-Hookean example with `c1 = β`.
    fn default() -> Self {
        Self {
            beta: 1.0,
            mu: 1.0,
            lambda: 1.0,
            c1: 1.0,
            l: 0.0,
            epsilon: 1.0,
            sigma: 5.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), MaterialError> {
        let positive = [
            ("beta", self.beta),
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("c1", self.c1),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MaterialError::InvalidParameter {
                    name,
                    value,
                    requirement: "finite and > 0",
                });
            }
        }
        if !(self.l >= 0.0 && self.l.is_finite()) {
            return Err(MaterialError::InvalidParameter {
                name: "l",
                value: self.l,
                requirement: "finite and >= 0",
            });
        }
        if !(self.sigma >= 4.0 && self.sigma.is_finite()) {
            return Err(MaterialError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                requirement: "finite and >= 4",
            });
        }
        Ok(())
    }
}

/// `W1(C') = β[tr(C'²) − 2 tr C' + 2]`.
///
/// `C'` must be symmetric with eigenvalues ≥ −1e−12. The value is computed as
/// `β|C' − I|²`, which is the same polynomial for symmetric input.
pub fn w1(c: &Matrix2<f64>, beta: f64) -> Result<f64, MaterialError> {
    let asymmetry = (c[(0, 1)] - c[(1, 0)]).abs();
    if asymmetry > STRAIN_TOL * c.norm().max(1.0) {
        return Err(MaterialError::NotSymmetric { asymmetry });
    }
    let eigenvalue = c.symmetric_eigenvalues().min();
    if eigenvalue < -STRAIN_TOL {
        return Err(MaterialError::NegativeEigenvalue { eigenvalue });
    }
    Ok(w1_strain(&(c - Matrix2::identity()), beta))
}

/// `W1` as a function of `E = C' − I`.
#[inline]
pub(crate) fn w1_strain(e: &Matrix2<f64>, beta: f64) -> f64 {
    beta * e.norm_squared()
}

/// `W2(F) = μ(tr FᵀF − 3) − μ ln det(FᵀF) + λ(det(FᵀF) − 1)²`, or
/// [`INFEASIBLE`] when `det F ≤ 0`.
pub fn w2(f: &Matrix3<f64>, mu: f64, lambda: f64) -> f64 {
    w2_displacement(&(f - Matrix3::identity()), mu, lambda)
}

/// `W2(I + H)`, evaluated without forming `I + H` so that small strains keep
/// full relative precision.
pub(crate) fn w2_displacement(h: &Matrix3<f64>, mu: f64, lambda: f64) -> f64 {
    let tr = h.trace();
    let minors = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]
        + h[(0, 0)] * h[(2, 2)] - h[(0, 2)] * h[(2, 0)]
        + h[(1, 1)] * h[(2, 2)] - h[(1, 2)] * h[(2, 1)];
    let det_h = h.determinant();
    // det(I + H) − 1
    let d = tr + minors + det_h;
    if !(d > -1.0) {
        return INFEASIBLE;
    }
    // tr C − 3 − ln det C = |H|² + 2(tr H − d) + 2(d − ln(1 + d))
    let dev = h.norm_squared() - 2.0 * (minors + det_h) + 2.0 * x_minus_ln1p(d);
    let vol = d * (2.0 + d);
    mu * dev + lambda * vol * vol
}

/// `x − ln(1 + x)` without cancellation for small `x`.
fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 0.05 {
        // alternating series Σ_{n≥2} (−1)^n x^n / n
        let mut term = x * x;
        let mut sum = 0.0;
        for n in 2..18 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / n as f64;
            term *= x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

/// `∂W2/∂F = 2μ(F − F⁻ᵀ) + 4λ(J² − 1)J²F⁻ᵀ`, `None` when `det F ≤ 0`.
pub(crate) fn w2_stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Option<Matrix3<f64>> {
    let j = f.determinant();
    if !(j > 0.0) {
        return None;
    }
    let inv_t = f.try_inverse()?.transpose();
    let j2 = j * j;
    Some((f - inv_t) * (2.0 * mu) + inv_t * (4.0 * lambda * (j2 - 1.0) * j2))
}

/// Frobenius distance from a 2×2 matrix to SO(2).
pub fn dist_so2(f: &Matrix2<f64>) -> f64 {
    dist_so2_sq(f).max(0.0).sqrt()
}

/// Frobenius distance from a 3×3 matrix to SO(3).
pub fn dist_so3(f: &Matrix3<f64>) -> f64 {
    dist_so3_sq(f).max(0.0).sqrt()
}

/// Row-major flattening of a 2×2 matrix.
pub(crate) fn flat2(m: &Matrix2<f64>) -> [f64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

/// Row-major flattening of a 3×3 matrix.
pub(crate) fn flat3(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = m[(i, j)];
        }
    }
    out
}

pub(crate) fn unflat3(v: &[f64]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| v[3 * i + j])
}

pub(crate) fn unflat2(v: &[f64]) -> Matrix2<f64> {
    Matrix2::from_fn(|i, j| v[2 * i + j])
}

/// A symmetric bilinear form on `n×n` matrices, stored as an `n²×n²` matrix
/// acting on row-major flattenings.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    order: usize,
    hessian: Vec<f64>,
}

impl QuadraticForm {
    /// Central finite-difference Hessian of `g` at zero, symmetrized.
    pub fn from_fd_hessian(order: usize, step: f64, g: impl Fn(&[f64]) -> f64) -> Self {
        let n = order * order;
        let mut hessian = vec![0.0; n * n];
        let mut x = vec![0.0; n];
        let eval = |x: &mut Vec<f64>, i: usize, si: f64, j: usize, sj: f64| {
            x[i] += si;
            x[j] += sj;
            let v = g(x);
            x[i] -= si;
            x[j] -= sj;
            v
        };
        let g0 = g(&x);
        for i in 0..n {
            for j in i..n {
                let value = if i == j {
                    let plus = eval(&mut x, i, step, i, 0.0);
                    let minus = eval(&mut x, i, -step, i, 0.0);
                    (plus - 2.0 * g0 + minus) / (step * step)
                } else {
                    let pp = eval(&mut x, i, step, j, step);
                    let pm = eval(&mut x, i, step, j, -step);
                    let mp = eval(&mut x, i, -step, j, step);
                    let mm = eval(&mut x, i, -step, j, -step);
                    (pp - pm - mp + mm) / (4.0 * step * step)
                };
                hessian[i * n + j] = value;
                hessian[j * n + i] = value;
            }
        }
        Self { order, hessian }
    }

    /// Matrix side length `n`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// The `n²×n²` Hessian, row-major.
    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    /// `aᵀ H a` for a row-major flattened matrix `a`.
    pub fn value(&self, a: &[f64]) -> f64 {
        let n = self.order * self.order;
        debug_assert_eq!(a.len(), n);
        let mut sum = 0.0;
        for i in 0..n {
            let row = &self.hessian[i * n..(i + 1) * n];
            let hi: f64 = row.iter().zip(a).map(|(h, x)| h * x).sum();
            sum += a[i] * hi;
        }
        sum
    }

    /// Gradient `2 H a` of [`QuadraticForm::value`].
    pub fn gradient(&self, a: &[f64], out: &mut [f64]) {
        let n = self.order * self.order;
        for i in 0..n {
            let row = &self.hessian[i * n..(i + 1) * n];
            out[i] = 2.0 * row.iter().zip(a).map(|(h, x)| h * x).sum::<f64>();
        }
    }

    /// `B(a, b) = aᵀ H b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.order * self.order;
        let mut sum = 0.0;
        for i in 0..n {
            let row = &self.hessian[i * n..(i + 1) * n];
            sum += a[i] * row.iter().zip(b).map(|(h, x)| h * x).sum::<f64>();
        }
        sum
    }
}

/// Minimum of `c ↦ Q(G + c e3⊗e3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub value: f64,
    /// The minimizing normal strain.
    pub c_star: f64,
}

/// Material parameters together with the cached quadratic forms at the
/// identity.
#[derive(Debug, Clone)]
pub struct Material {
    params: MaterialParams,
    membrane: QuadraticForm,
    bulk: QuadraticForm,
    /// `Q(e3⊗e3)` and the linear coefficient helper for the relaxation.
    normal_curvature: f64,
}

impl Material {
    pub fn new(params: MaterialParams) -> Result<Self, MaterialError> {
        params.validate()?;
        Ok(Self::build(params))
    }

    /// Builds the quadratic forms without validating the parameters. Used by
    /// diagnostics that must run on non-physical constants.
    pub fn new_unchecked(params: MaterialParams) -> Self {
        Self::build(params)
    }

    fn build(params: MaterialParams) -> Self {
        let membrane = membrane_form(&params, HESSIAN_STEP);
        let bulk = bulk_form(&params, HESSIAN_STEP);
        let e33 = flat3(&Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, 1.0)));
        let normal_curvature = bulk.value(&e33);
        Self {
            params,
            membrane,
            bulk,
            normal_curvature,
        }
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    /// Hessian form of `A ↦ W1(I + sym A)` at zero, order 2.
    pub fn membrane_form(&self) -> &QuadraticForm {
        &self.membrane
    }

    /// Hessian form of `A ↦ W2(I + A)` at zero, order 3.
    pub fn bulk_form(&self) -> &QuadraticForm {
        &self.bulk
    }

    /// In-plane quadratic form `∂²W1(Id)(A, A)`.
    pub fn q_membrane(&self, a: &Matrix2<f64>) -> f64 {
        self.membrane.value(&flat2(a))
    }

    /// Spatial quadratic form `∂²W2(Id)(A, A)`.
    pub fn q_bulk(&self, a: &Matrix3<f64>) -> f64 {
        self.bulk.value(&flat3(a))
    }

    /// `min_c Q_bulk(G + c e3⊗e3)` by exact minimization of the parabola
    /// through `c ∈ {−1, 0, 1}`.
    pub fn q2_relaxed(&self, g: &Matrix3<f64>) -> Result<Relaxation, MaterialError> {
        let mut m = *g;
        let q0 = self.q_bulk(&m);
        m[(2, 2)] = g[(2, 2)] + 1.0;
        let qp = self.q_bulk(&m);
        m[(2, 2)] = g[(2, 2)] - 1.0;
        let qm = self.q_bulk(&m);
        let a = 0.5 * (qp + qm) - q0;
        if a <= RELAXATION_DEGENERACY {
            return Err(MaterialError::DegenerateRelaxation { curvature: a });
        }
        let b = 0.5 * (qp - qm);
        let c_star = -b / (2.0 * a);
        let mut at_min = *g;
        at_min[(2, 2)] += c_star;
        Ok(Relaxation {
            value: self.q_bulk(&at_min),
            c_star,
        })
    }

    /// `Q(e3⊗e3)`, the curvature of the relaxation parabola.
    pub fn normal_curvature(&self) -> f64 {
        self.normal_curvature
    }

    /// Gradient of `G ↦ min_c Q_bulk(G + c e3⊗e3)`, given the minimizer.
    pub(crate) fn q2_relaxed_gradient(&self, g: &Matrix3<f64>, c_star: f64) -> Matrix3<f64> {
        let mut at_min = flat3(g);
        at_min[8] += c_star;
        let mut out = [0.0; 9];
        self.bulk.gradient(&at_min, &mut out);
        unflat3(&out)
    }
}

fn membrane_form(params: &MaterialParams, step: f64) -> QuadraticForm {
    let beta = params.beta;
    QuadraticForm::from_fd_hessian(2, step, |a| {
        let a = unflat2(a);
        let e = (a + a.transpose()) * 0.5;
        w1_strain(&e, beta)
    })
}

fn bulk_form(params: &MaterialParams, step: f64) -> QuadraticForm {
    let (mu, lambda) = (params.mu, params.lambda);
    QuadraticForm::from_fd_hessian(3, step, |a| w2_displacement(&unflat3(a), mu, lambda))
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    /// Short label, `A1` … `A5`.
    pub label: &'static str,
    pub description: &'static str,
    pub passed: bool,
    /// Worst-case statistic over the samples (its meaning depends on the
    /// check; see `description`).
    pub worst: f64,
    /// Bound the statistic was compared against.
    pub threshold: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, label: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.label == label)
    }
}

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        let quat = nalgebra::Quaternion::new(q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        return *nalgebra::UnitQuaternion::new_unchecked(quat)
            .to_rotation_matrix()
            .matrix();
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Random `F = Q(I + sG)` with `|G| = 1`, `s ∈ [s_min, s_max]`, `det F > 0`.
fn sample_near_rotation<R: Rng + ?Sized>(rng: &mut R, s_min: f64, s_max: f64) -> Matrix3<f64> {
    loop {
        let g = gaussian3(rng);
        let g = g / g.norm();
        let s = rng.random_range(s_min..=s_max);
        let f = random_rotation(rng) * (Matrix3::identity() + g * s);
        if f.determinant() > 0.0 {
            return f;
        }
    }
}

/// Sampled verification of frame indifference (A1), minimum at rotations
/// (A2), coercivity of `W2` (A3), coercivity of the membrane density with the
/// quartic term (A4) and smoothness near the identity (A5).
///
/// The parameters are not validated, so non-physical constants produce failed
/// entries rather than an error.
pub fn check_assumptions(params: &MaterialParams, n_samples: usize, seed: u64) -> AssumptionReport {
    let n = n_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu, lambda, beta) = (params.mu, params.lambda, params.beta);

    // A1
    let mut worst_a1: f64 = 0.0;
    for _ in 0..n {
        let f = sample_near_rotation(&mut rng, 0.0, 0.5);
        let q = random_rotation(&mut rng);
        let base = w2(&f, mu, lambda);
        let rotated = w2(&(q * f), mu, lambda);
        worst_a1 = worst_a1.max((rotated - base).abs() / (1.0 + base.abs()));
    }
    let a1 = AssumptionCheck {
        label: "A1",
        description: "max |W2(QF) - W2(F)| / (1 + |W2(F)|)",
        passed: worst_a1 < 1e-10,
        worst: worst_a1,
        threshold: 1e-10,
        samples: n,
    };

    // A2: zero on SO(3) and at the identity strain, nonnegative nearby.
    let mut worst_a2 = w1_strain(&Matrix2::zeros(), beta).abs();
    for _ in 0..n {
        let q = random_rotation(&mut rng);
        worst_a2 = worst_a2.max(w2(&q, mu, lambda).abs());
        let f = sample_near_rotation(&mut rng, 0.0, 1.0);
        worst_a2 = worst_a2.max(-w2(&f, mu, lambda));
    }
    let a2 = AssumptionCheck {
        label: "A2",
        description: "max |W(rotation)| and max negative part of W near SO(3)",
        passed: worst_a2 <= 1e-12,
        worst: worst_a2,
        threshold: 1e-12,
        samples: n,
    };

    // A3: W2 / dist² over det-positive samples within distance 1 of SO(3),
    // plus isochoric stretches on which the volumetric term vanishes.
    let mut ratio_a3 = f64::INFINITY;
    let mut taken = 0;
    while taken < n {
        let f = sample_near_rotation(&mut rng, 1e-2, 0.8);
        let d2 = dist_so3_sq(&f);
        if d2 > 1.0 {
            continue;
        }
        ratio_a3 = ratio_a3.min(w2(&f, mu, lambda) / d2);
        taken += 1;
    }
    for k in 1..=20 {
        let a = 1.0 + 0.025 * k as f64;
        let stretch = Matrix3::from_diagonal(&Vector3::new(a, 1.0 / a, 1.0));
        let f = random_rotation(&mut rng) * stretch;
        let d2 = dist_so3_sq(&f);
        if d2 <= 1.0 {
            ratio_a3 = ratio_a3.min(w2(&f, mu, lambda) / d2);
        }
    }
    let a3_bound = mu * (1.0 - 1e-9);
    let a3 = AssumptionCheck {
        label: "A3",
        description: "min W2(F) / dist²(F, SO(3)) over det F > 0, dist <= 1",
        passed: ratio_a3 > 0.0 && ratio_a3 >= a3_bound,
        worst: ratio_a3,
        threshold: a3_bound,
        samples: taken + 20,
    };

    // A4: membrane density with quartic control of the out-of-plane column.
    let mut ratio_a4 = f64::INFINITY;
    let mut taken = 0;
    while taken < n {
        let fp = if taken % 4 == 3 {
            // in-plane strain that exactly compensates b⊗b
            let b = random_vec2(&mut rng) * rng.random_range(0.05..0.9);
            shortened_frame(&mut rng, &b).map(|fp| (fp, b))
        } else {
            let g = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let s = rng.random_range(1e-2..1.0);
            let fp = crate::linalg::rotation2(rng.random_range(0.0..std::f64::consts::TAU))
                * (Matrix2::identity() + g * (s / g.norm()));
            let b = random_vec2(&mut rng) * rng.random_range(0.0..1.0);
            (fp.determinant() > 0.0).then_some((fp, b))
        };
        let Some((fp, b)) = fp else { continue };
        let d2 = dist_so2_sq(&fp);
        if d2 < 1e-16 {
            continue;
        }
        let c = fp.transpose() * fp + b * b.transpose();
        let e = c - Matrix2::identity();
        let density = w1_strain(&e, beta) + params.c1 * b.norm_squared().powi(2);
        ratio_a4 = ratio_a4.min(density / d2);
        taken += 1;
    }
    let a4 = AssumptionCheck {
        label: "A4",
        description: "min [W1(F'ᵀF' + b⊗b) + c1|b|⁴] / dist²(F', SO(2))",
        passed: ratio_a4 > 0.0 && ratio_a4.is_finite(),
        worst: ratio_a4,
        threshold: 0.0,
        samples: n,
    };

    // A5: Hessians at the identity are consistent between steps and the
    // forms are positive semidefinite on symmetric arguments.
    let mut defect: f64 = 0.0;
    for (coarse, fine) in [
        (membrane_form(params, HESSIAN_STEP), membrane_form(params, 0.5 * HESSIAN_STEP)),
        (bulk_form(params, HESSIAN_STEP), bulk_form(params, 0.5 * HESSIAN_STEP)),
    ] {
        let scale = coarse.hessian().iter().fold(1e-300_f64, |m, x| m.max(x.abs()));
        for (a, b) in coarse.hessian().iter().zip(fine.hessian()) {
            defect = defect.max((a - b).abs() / scale);
        }
        let k = coarse.order() * coarse.order();
        let h = nalgebra::DMatrix::from_row_slice(k, k, coarse.hessian());
        let min_eig = h.symmetric_eigenvalues().min();
        if min_eig < -1e-6 * scale {
            defect = defect.max(-min_eig / scale);
        }
    }
    let a5 = AssumptionCheck {
        label: "A5",
        description: "relative change of FD Hessians between steps 1e-4 and 5e-5",
        passed: defect <= 1e-5,
        worst: defect,
        threshold: 1e-5,
        samples: 2,
    };

    AssumptionReport {
        checks: vec![a1, a2, a3, a4, a5],
    }
}

fn random_vec2<R: Rng + ?Sized>(rng: &mut R) -> nalgebra::Vector2<f64> {
    let v = nalgebra::Vector2::<f64>::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let n = v.norm();
    if n == 0.0 {
        nalgebra::Vector2::new(1.0, 0.0)
    } else {
        v / n
    }
}

/// A frame with `F'ᵀF' = I − b⊗b`, rotated randomly.
fn shortened_frame<R: Rng + ?Sized>(
    rng: &mut R,
    b: &nalgebra::Vector2<f64>,
) -> Option<Matrix2<f64>> {
    let target = Matrix2::identity() - b * b.transpose();
    let eig = target.symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return None;
    }
    let root = eig.eigenvectors
        * Matrix2::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    Some(crate::linalg::rotation2(rng.random_range(0.0..std::f64::consts::TAU)) * root)
}
