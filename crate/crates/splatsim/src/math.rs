//! Small 3×3 kernels shared by the renderer, the solver, and the
//! covariance correction: quaternion conversion, polar decomposition,
//! cofactor matrices, and a sorted symmetric eigendecomposition.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

/// Rotation matrix from an (w, x, y, z) quaternion. The quaternion is
/// normalized here; a zero quaternion maps to the identity.
pub fn quat_to_rotation(q: [f32; 4]) -> Matrix3<f64> {
    let quat = Quaternion::new(q[0] as f64, q[1] as f64, q[2] as f64, q[3] as f64);
    if quat.norm_squared() == 0.0 {
        return Matrix3::identity();
    }
    UnitQuaternion::from_quaternion(quat)
        .to_rotation_matrix()
        .into_inner()
}

/// Cofactor matrix of `m`, i.e. `det(m) * m^{-T}` without the inverse.
pub fn cofactor(m: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)],
        m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)],
        m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)],
        m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)],
        m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)],
        m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)],
        m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)],
        m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)],
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
    )
}

/// Singular value decomposition `m = U diag(s) V^T` with `U` and `V`
/// proper rotations (det = +1). Reflections are absorbed into the sign
/// of the last singular value, so `s` may carry one negative entry when
/// `det(m) < 0`.
pub fn svd_rotations(m: &Matrix3<f64>) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let svd = m.svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let mut vt = svd.v_t.expect("svd requested v_t");
    let mut s = svd.singular_values;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        s[2] = -s[2];
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
        s[2] = -s[2];
    }
    (u, s, vt)
}

/// Rotation factor of the polar decomposition `m = R S` (S symmetric).
pub fn polar_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let (u, _, vt) = svd_rotations(m);
    u * vt
}

/// Eigendecomposition of a symmetric 3×3 matrix, eigenvalues ascending.
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` in column `k`.
pub fn symmetric_eigen_sorted(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let eig = m.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let vecs = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    (vals, vecs)
}
