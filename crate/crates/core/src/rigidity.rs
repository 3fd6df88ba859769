//! Rotation fields and geometric-rigidity diagnostics.
//!
//! Rotation fields are built by averaging the in-plane gradient over the
//! thickness (or taking it layer by layer), mollifying at radius `h` with a
//! smooth compactly supported kernel, and projecting nodewise onto the
//! rotation group. Near the boundary the grid is extended by reflection.

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use crate::fields::{column_average, DeformationField3, Grid2, Grid3};
use crate::linalg::{self, dist_so2_sq, dist_so3_sq};
use crate::stencil;

/// Radius of the tubular neighbourhood in which the projection onto the
/// rotation group is used; farther matrices project to the identity.
pub const TUBULAR_RADIUS: f64 = 0.5;

/// Energies at or below `RIGIDITY_FLOOR · |Ω|` are treated as exact zeros
/// (they are rounding noise of the finite-difference gradients).
pub const RIGIDITY_FLOOR: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigidityError {
    #[error("mollification radius {radius} is below two grid spacings ({spacing})")]
    UnderResolved { radius: f64, spacing: f64 },
}

/// Nearest element of SO(2) (orthogonal polar factor).
pub fn nearest_rotation2(f: &Matrix2<f64>) -> Matrix2<f64> {
    linalg::nearest_rotation2(f)
}

/// Nearest element of SO(3), with the determinant correction applied to the
/// direction of the smallest singular value.
pub fn nearest_rotation3(f: &Matrix3<f64>) -> Matrix3<f64> {
    linalg::nearest_rotation3(f)
}

/// Projection onto SO(2) inside the tubular neighbourhood of radius `delta`,
/// identity outside.
pub fn project_rotation2(f: &Matrix2<f64>, delta: f64) -> Matrix2<f64> {
    if dist_so2_sq(f) <= delta * delta {
        nearest_rotation2(f)
    } else {
        Matrix2::identity()
    }
}

/// Projection onto SO(3) inside the tubular neighbourhood of radius `delta`,
/// identity outside.
pub fn project_rotation3(f: &Matrix3<f64>, delta: f64) -> Matrix3<f64> {
    if dist_so3_sq(f) <= delta * delta {
        nearest_rotation3(f)
    } else {
        Matrix3::identity()
    }
}

/// Where a rotation field lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// One matrix per mid-surface node.
    Plane(Grid2),
    /// One matrix per node of the 3D grid.
    Volume(Grid3),
}

/// Per-node rotations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationField {
    support: Support,
    dim: usize,
    data: Vec<f64>,
}

impl RotationField {
    pub fn from_planar(support: Support, values: &[Matrix2<f64>]) -> Self {
        let data = values.iter().flat_map(crate::material::flat2).collect();
        Self {
            support,
            dim: 2,
            data,
        }
    }

    pub fn from_spatial(support: Support, values: &[Matrix3<f64>]) -> Self {
        let data = values.iter().flat_map(crate::material::flat3).collect();
        Self {
            support,
            dim: 3,
            data,
        }
    }

    /// Constant field.
    pub fn constant_planar(grid: Grid2, r: Matrix2<f64>) -> Self {
        Self::from_planar(Support::Plane(grid), &vec![r; grid.len()])
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Matrix side length.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Matrix at node `n` of a 2×2 field.
    pub fn planar(&self, n: usize) -> Matrix2<f64> {
        assert_eq!(self.dim, 2, "not a planar rotation field");
        crate::material::unflat2(&self.data[4 * n..4 * n + 4])
    }

    /// Matrix at node `n` of a 3×3 field.
    pub fn spatial(&self, n: usize) -> Matrix3<f64> {
        assert_eq!(self.dim, 3, "not a spatial rotation field");
        crate::material::unflat3(&self.data[9 * n..9 * n + 9])
    }

    /// Largest `|RᵀR − I|` entry over the field.
    pub fn orthogonality_defect(&self) -> f64 {
        (0..self.len())
            .map(|n| match self.dim {
                2 => linalg::orthogonality_defect(&self.planar(n)),
                _ => linalg::orthogonality_defect(&self.spatial(n)),
            })
            .fold(0.0, f64::max)
    }

    /// Smallest determinant over the field.
    pub fn min_determinant(&self) -> f64 {
        (0..self.len())
            .map(|n| match self.dim {
                2 => self.planar(n).determinant(),
                _ => self.spatial(n).determinant(),
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Discrete convolution with the bump `exp(−1/(1−r²))` of a given radius,
/// normalized on the stencil, with reflection at the grid boundary.
#[derive(Debug, Clone)]
pub struct Mollifier {
    taps: Vec<(isize, isize, f64)>,
}

impl Mollifier {
    pub fn new(grid: &Grid2, radius: f64) -> Result<Self, RigidityError> {
        let spacing = grid.dx().max(grid.dy());
        if !(radius >= 2.0 * spacing * (1.0 - 1e-12)) {
            return Err(RigidityError::UnderResolved { radius, spacing });
        }
        let px = (radius / grid.dx()).ceil() as isize;
        let py = (radius / grid.dy()).ceil() as isize;
        let mut taps = Vec::new();
        let mut total = 0.0;
        for p in -px..=px {
            for q in -py..=py {
                let r2 = ((p as f64 * grid.dx()).powi(2) + (q as f64 * grid.dy()).powi(2))
                    / (radius * radius);
                if r2 < 1.0 {
                    let w = (-1.0 / (1.0 - r2)).exp();
                    taps.push((p, q, w));
                    total += w;
                }
            }
        }
        for t in &mut taps {
            t.2 /= total;
        }
        Ok(Self { taps })
    }

    /// Mollifies a nodal field with `comps` values per node. Each output is
    /// formed as the centre value plus weighted differences, so locally
    /// constant data is reproduced exactly.
    pub fn apply(&self, grid: &Grid2, values: &[f64], comps: usize) -> Vec<f64> {
        assert_eq!(values.len(), comps * grid.len());
        let mut out = vec![0.0; values.len()];
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let centre = grid.node(i, j);
                for c in 0..comps {
                    let v0 = values[comps * centre + c];
                    let mut acc = 0.0;
                    for &(p, q, w) in &self.taps {
                        let a = reflect(i as isize + p, grid.nx);
                        let b = reflect(j as isize + q, grid.ny);
                        acc += w * (values[comps * grid.node(a, b) + c] - v0);
                    }
                    out[comps * centre + c] = v0 + acc;
                }
            }
        }
        out
    }
}

/// Even reflection of an index into `0..n` (the boundary node is the mirror).
fn reflect(idx: isize, n: usize) -> usize {
    let period = 2 * (n as isize - 1);
    let r = idx.rem_euclid(period);
    if r >= n as isize {
        (period - r) as usize
    } else {
        r as usize
    }
}

/// Nodal in-plane gradient `∇'y'` (2×2) per 3D node.
fn in_plane_gradients(y: &DeformationField3) -> Vec<Matrix2<f64>> {
    y.nodal_displacement_gradients()
        .iter()
        .map(|m| Matrix2::identity() + m.fixed_view::<2, 2>(0, 0))
        .collect()
}

/// Thickness average of a per-3D-node matrix field, flattened row-major.
fn thickness_mean<const N: usize>(
    grid: &Grid3,
    values: &[nalgebra::SMatrix<f64, N, N>],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(N * N * grid.plane().len());
    let mut col = vec![0.0; grid.nz];
    for n2 in 0..grid.plane().len() {
        for r in 0..N {
            for s in 0..N {
                for (k, slot) in col.iter_mut().enumerate() {
                    *slot = values[n2 * grid.nz + k][(r, s)];
                }
                out.push(column_average(&col));
            }
        }
    }
    out
}

/// Mollified thickness-averaged in-plane gradient `Q̃` and its projection `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedRotation {
    pub qtilde: Vec<Matrix2<f64>>,
    pub q: RotationField,
}

/// `Q̃ = ψ_h * ∫_I ∇'y' dx₃` and `Q = π̃(Q̃)` with tubular radius `delta`.
pub fn mollified_rotation_field_2d(
    y: &DeformationField3,
    delta: f64,
) -> Result<MollifiedRotation, RigidityError> {
    let grid = y.grid();
    let plane = grid.plane();
    let mollifier = Mollifier::new(&plane, y.h())?;
    let mean = thickness_mean(grid, &in_plane_gradients(y));
    let smooth = mollifier.apply(&plane, &mean, 4);
    let qtilde: Vec<Matrix2<f64>> = smooth.chunks_exact(4).map(crate::material::unflat2).collect();
    let projected: Vec<Matrix2<f64>> = qtilde.iter().map(|m| project_rotation2(m, delta)).collect();
    Ok(MollifiedRotation {
        q: RotationField::from_planar(Support::Plane(plane), &projected),
        qtilde,
    })
}

/// Layer-by-layer mollification of `∇'y'` followed by projection.
pub fn per_slice_rotation_field(
    y: &DeformationField3,
    delta: f64,
) -> Result<RotationField, RigidityError> {
    let grid = *y.grid();
    let plane = grid.plane();
    let mollifier = Mollifier::new(&plane, y.h())?;
    let grads = in_plane_gradients(y);
    let mut out = vec![Matrix2::zeros(); grid.len()];
    let mut layer = vec![0.0; 4 * plane.len()];
    for k in 0..grid.nz {
        for n2 in 0..plane.len() {
            layer[4 * n2..4 * n2 + 4].copy_from_slice(&crate::material::flat2(&grads[n2 * grid.nz + k]));
        }
        let smooth = mollifier.apply(&plane, &layer, 4);
        for n2 in 0..plane.len() {
            let m = crate::material::unflat2(&smooth[4 * n2..4 * n2 + 4]);
            out[n2 * grid.nz + k] = project_rotation2(&m, delta);
        }
    }
    Ok(RotationField::from_planar(Support::Volume(grid), &out))
}

/// `π̃` of the area mean of `Q̃` (trapezoid weights).
pub fn constant_rotation(grid: &Grid2, qtilde: &[Matrix2<f64>], delta: f64) -> Matrix2<f64> {
    let w = grid.weights();
    let mut mean = Matrix2::zeros();
    for (m, wi) in qtilde.iter().zip(&w) {
        mean += m * *wi;
    }
    project_rotation2(&(mean / grid.area()), delta)
}

/// Rotation `B'` that symmetrizes the mean in-plane gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub rotation: Matrix2<f64>,
    pub angle: f64,
    /// Both the trace and the skew part of the mean gradient vanish; the
    /// identity is returned.
    pub degenerate: bool,
}

/// Normalization from the integrated gradient `M = ∫ ∇'ȳ'`: the rotation
/// `B'` by `θ` with `cot θ = (M₁₁ + M₂₂)/(M₂₁ − M₁₂)`, oriented so that
/// `B'ᵀM` is symmetric with nonnegative trace. The identity is returned when
/// the skew part is exactly zero.
pub fn normalization_from_mean(m: &Matrix2<f64>) -> Normalization {
    let num = m[(1, 0)] - m[(0, 1)];
    let den = m[(0, 0)] + m[(1, 1)];
    let scale = m.norm();
    if num.abs() <= 1e-14 * scale && den.abs() <= 1e-14 * scale || scale == 0.0 {
        return Normalization {
            rotation: Matrix2::identity(),
            angle: 0.0,
            degenerate: true,
        };
    }
    if num == 0.0 {
        return Normalization {
            rotation: Matrix2::identity(),
            angle: 0.0,
            degenerate: false,
        };
    }
    let angle = num.atan2(den);
    Normalization {
        rotation: linalg::rotation2(angle),
        angle,
        degenerate: false,
    }
}

/// Normalization rotation of a deformation, using `M = ∫_Ω ∇'y'`.
pub fn normalization_rotation(y: &DeformationField3) -> Normalization {
    let w = y.grid().weights();
    let mut m = Matrix2::zeros();
    for (g, wi) in in_plane_gradients(y).iter().zip(&w) {
        m += g * *wi;
    }
    normalization_from_mean(&m)
}

/// Empirical rigidity constants of a deformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityReport {
    pub h: f64,
    /// `∫_Ω dist²(∇_h y, SO(3))`.
    pub e1: f64,
    /// `∫_Ω dist²(∇'y', SO(2))`.
    pub e2: f64,
    /// `‖∇_h y − R_h‖² / E1`.
    pub r1: f64,
    /// `‖∫_I ∇'y' − Q_h‖² / E2`.
    pub q1: f64,
    /// `‖∇'y' − T_h‖² / E2`.
    pub t1: f64,
    /// `h² ‖∇'Q̃_h‖² / E2`.
    pub grad_q: f64,
    /// Set when `E1` or `E2` vanishes; ratios with that denominator are 0.
    pub exact_rigidity: bool,
}

impl RigidityReport {
    pub const CSV_HEADER: &'static str = "h,E1,E2,r1,q1,t1,gradQ,flag";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.h,
            self.e1,
            self.e2,
            self.r1,
            self.q1,
            self.t1,
            self.grad_q,
            u8::from(self.exact_rigidity)
        )
    }
}

/// Builds all rotation fields of `y` and reports the rigidity ratios. `R_h`
/// is the projection of the mollified thickness average of `∇_h y`.
pub fn rigidity_report(y: &DeformationField3, delta: f64) -> Result<RigidityReport, RigidityError> {
    let grid = *y.grid();
    let plane = grid.plane();
    let h = y.h();
    let mollifier = Mollifier::new(&plane, h)?;
    let w3 = grid.weights();
    let w2 = plane.weights();
    let floor = RIGIDITY_FLOOR * plane.area();

    let full: Vec<Matrix3<f64>> = y
        .nodal_displacement_gradients()
        .into_iter()
        .map(|m| Matrix3::identity() + m)
        .collect();
    let planar: Vec<Matrix2<f64>> = full.iter().map(|f| f.fixed_view::<2, 2>(0, 0).into_owned()).collect();

    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for n in 0..grid.len() {
        e1 += w3[n] * dist_so3_sq(&full[n]);
        e2 += w3[n] * dist_so2_sq(&planar[n]);
    }
    let e1 = if e1 <= floor { 0.0 } else { e1 };
    let e2 = if e2 <= floor { 0.0 } else { e2 };

    // R_h
    let mean3 = thickness_mean(&grid, &full);
    let smooth3 = mollifier.apply(&plane, &mean3, 9);
    let r: Vec<Matrix3<f64>> = smooth3
        .chunks_exact(9)
        .map(|c| project_rotation3(&crate::material::unflat3(c), delta))
        .collect();
    let mut r_dev = 0.0;
    for n in 0..grid.len() {
        r_dev += w3[n] * (full[n] - r[n / grid.nz]).norm_squared();
    }

    // Q_h and Q̃_h
    let mollified = mollified_rotation_field_2d(y, delta)?;
    let mean2 = thickness_mean(&grid, &planar);
    let mut q_dev = 0.0;
    for n2 in 0..plane.len() {
        let avg = crate::material::unflat2(&mean2[4 * n2..4 * n2 + 4]);
        q_dev += w2[n2] * (avg - mollified.q.planar(n2)).norm_squared();
    }
    let sx = stencil::first_derivative(plane.nx, plane.dx());
    let sy = stencil::first_derivative(plane.ny, plane.dy());
    let mut grad_norm = 0.0;
    for i in 0..plane.nx {
        for j in 0..plane.ny {
            let d1 = sx[i].iter().fold(Matrix2::zeros(), |acc, (a, wa)| {
                acc + mollified.qtilde[plane.node(a, j)] * wa
            });
            let d2 = sy[j].iter().fold(Matrix2::zeros(), |acc, (b, wb)| {
                acc + mollified.qtilde[plane.node(i, b)] * wb
            });
            grad_norm += w2[plane.node(i, j)] * (d1.norm_squared() + d2.norm_squared());
        }
    }

    // T_h
    let t = per_slice_rotation_field(y, delta)?;
    let mut t_dev = 0.0;
    for n in 0..grid.len() {
        t_dev += w3[n] * (planar[n] - t.planar(n)).norm_squared();
    }

    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(RigidityReport {
        h,
        e1,
        e2,
        r1: ratio(r_dev, e1),
        q1: ratio(q_dev, e2),
        t1: ratio(t_dev, e2),
        grad_q: ratio(h * h * grad_norm, e2),
        exact_rigidity: e1 == 0.0 || e2 == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::random_rotation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-4, 5), 4);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(9, 5), 1);
        assert_eq!(reflect(2, 5), 2);
    }

    #[test]
    fn mollifier_preserves_constants_exactly() {
        let grid = Grid2::unit(17).unwrap();
        let m = Mollifier::new(&grid, 0.2).unwrap();
        let values: Vec<f64> = (0..grid.len()).flat_map(|_| [0.3, -1.7]).collect();
        assert_eq!(m.apply(&grid, &values, 2), values);
        assert!(Mollifier::new(&grid, 0.1).is_err());
    }

    #[test]
    fn projection_falls_back_to_identity() {
        let far = Matrix2::new(0.1, 0.0, 0.0, 0.1);
        assert_eq!(project_rotation2(&far, TUBULAR_RADIUS), Matrix2::identity());
        let near = Matrix2::new(1.1, 0.0, 0.0, 0.95);
        assert_eq!(project_rotation2(&near, TUBULAR_RADIUS), Matrix2::identity());
    }

    #[test]
    fn nearest_rotation_fixes_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r = random_rotation(&mut rng);
            assert!((nearest_rotation3(&r) - r).norm() < 1e-12);
        }
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 1.0, 1.0));
        assert!((nearest_rotation3(&d) - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn rigid_rotation_of_the_plate() {
        let grid = Grid3::new(17, 17, 4, 1.0, 1.0).unwrap();
        let h = 0.125;
        let (s, c) = 0.3f64.sin_cos();
        let y = DeformationField3::from_fn(grid, h, |x1, x2, x3| {
            [c * x1 - s * x2 + 0.2, s * x1 + c * x2, h * x3 - 0.1]
        })
        .unwrap();
        let rot = linalg::rotation2(0.3);
        let m = mollified_rotation_field_2d(&y, TUBULAR_RADIUS).unwrap();
        for n in 0..grid.plane().len() {
            assert!((m.q.planar(n) - rot).norm() < 1e-13);
        }
        let t = per_slice_rotation_field(&y, TUBULAR_RADIUS).unwrap();
        assert!(t.orthogonality_defect() < 1e-12);
        let report = rigidity_report(&y, TUBULAR_RADIUS).unwrap();
        assert_eq!(report.e1, 0.0);
        assert_eq!(report.e2, 0.0);
        assert!(report.exact_rigidity);
    }

    #[test]
    fn normalization_of_rotated_plate() {
        let grid = Grid3::new(9, 9, 3, 1.0, 1.0).unwrap();
        let theta: f64 = 0.05;
        let (s, c) = theta.sin_cos();
        let y = DeformationField3::from_fn(grid, 0.1, |x1, x2, x3| {
            [c * x1 - s * x2, s * x1 + c * x2, 0.1 * x3]
        })
        .unwrap();
        let b = normalization_rotation(&y);
        assert!(!b.degenerate);
        assert!((b.angle - theta).abs() < 1e-12);
        let m = Matrix2::new(1.0, 0.2, 0.2, 0.8);
        assert_eq!(normalization_from_mean(&m).rotation, Matrix2::identity());
    }

    #[test]
    fn constant_rotation_of_perturbed_identity() {
        let grid = Grid2::unit(5).unwrap();
        let eps = 1e-3;
        let field = vec![Matrix2::new(1.0, -eps, eps, 1.0); grid.len()];
        let p = constant_rotation(&grid, &field, TUBULAR_RADIUS);
        let expected = linalg::rotation2(eps.atan());
        assert!((p - expected).norm() < 1e-14);
        let far = vec![Matrix2::zeros(); grid.len()];
        assert_eq!(constant_rotation(&grid, &far, TUBULAR_RADIUS), Matrix2::identity());
    }
}
