//! Small dense-matrix helpers shared by the material and rigidity modules.

use nalgebra::{Matrix2, Matrix3};

/// Planar rotation by `theta` (counter-clockwise).
pub(crate) fn rotation2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Conformal / anti-conformal split of a 2×2 matrix.
///
/// Any `F` decomposes as `q·R(θ) + r·Refl(ψ)`; the returned pair holds the
/// conformal amplitude `q`, its angle, and the anti-conformal amplitude `r`.
/// The signed singular values are `q + r` and `q - r`.
fn conformal_split(f: &Matrix2<f64>) -> (f64, f64, f64) {
    let e = 0.5 * (f[(0, 0)] + f[(1, 1)]);
    let g = 0.5 * (f[(0, 0)] - f[(1, 1)]);
    let k = 0.5 * (f[(1, 0)] + f[(0, 1)]);
    let a = 0.5 * (f[(1, 0)] - f[(0, 1)]);
    (e.hypot(a), a.atan2(e), g.hypot(k))
}

/// Squared Frobenius distance from `f` to SO(2).
pub(crate) fn dist_so2_sq(f: &Matrix2<f64>) -> f64 {
    let (q, _, r) = conformal_split(f);
    2.0 * (q - 1.0) * (q - 1.0) + 2.0 * r * r
}

/// Nearest element of SO(2). Returns the identity when the conformal part
/// vanishes and the minimizer is not unique.
pub(crate) fn nearest_rotation2(f: &Matrix2<f64>) -> Matrix2<f64> {
    let e = 0.5 * (f[(0, 0)] + f[(1, 1)]);
    let a = 0.5 * (f[(1, 0)] - f[(0, 1)]);
    let q = e.hypot(a);
    if q == 0.0 {
        return Matrix2::identity();
    }
    let (c, s) = (e / q, a / q);
    Matrix2::new(c, -s, s, c)
}

/// Singular values in descending order.
pub(crate) fn singular_values3(f: &Matrix3<f64>) -> [f64; 3] {
    let sv = f.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Squared Frobenius distance from `f` to SO(3).
pub(crate) fn dist_so3_sq(f: &Matrix3<f64>) -> f64 {
    let s = singular_values3(f);
    let last = if f.determinant() < 0.0 { s[2] + 1.0 } else { s[2] - 1.0 };
    (s[0] - 1.0).powi(2) + (s[1] - 1.0).powi(2) + last * last
}

/// Nearest element of SO(3) via the singular value decomposition, flipping the
/// direction of the smallest singular value when needed.
pub(crate) fn nearest_rotation3(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let mut smallest = 0;
    for i in 1..3 {
        if svd.singular_values[i] < svd.singular_values[smallest] {
            smallest = i;
        }
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    u * d * v_t
}

/// `max |RᵀR - I|` entrywise.
pub(crate) fn orthogonality_defect<const N: usize>(
    r: &nalgebra::SMatrix<f64, N, N>,
) -> f64 {
    let m = r.transpose() * r - nalgebra::SMatrix::<f64, N, N>::identity();
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_distance_matches_singular_values() {
        let f = Matrix2::<f64>::new(1.3, -0.4, 0.2, 0.7);
        let sv = f.singular_values();
        let expected = (sv[0] - 1.0).powi(2) + (sv[1] - 1.0).powi(2);
        assert!((dist_so2_sq(&f) - expected).abs() < 1e-14);

        let g = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!((dist_so2_sq(&g) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn planar_projection_recovers_rotation() {
        let r = rotation2(0.3);
        let p = nearest_rotation2(&(r * 1.7));
        assert!((p - r).norm() < 1e-15);
    }

    #[test]
    fn spatial_projection_of_reflection_is_rotation() {
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 1.0, -0.5));
        let r = nearest_rotation3(&f);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(((f - r).norm_squared() - dist_so3_sq(&f)).abs() < 1e-12);
    }
}
