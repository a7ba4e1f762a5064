//! Fixed-corotated elasticity: first Piola-Kirchhoff stress
//! `P = 2μ(F − R) + λ(J − 1) J F⁻ᵀ` with `R` the polar rotation of `F`.

use nalgebra::{Matrix3, Vector3};

use crate::math::{cofactor, svd_rotations};

/// Singular values below this are lifted before stress evaluation, which
/// also resolves inverted elements (det F ≤ 0) to a nearby valid state.
pub const SINGULAR_VALUE_FLOOR: f64 = 0.05;

/// Outcome of one stress evaluation.
#[derive(Debug, Clone, Copy)]
pub struct StressEval {
    /// First Piola-Kirchhoff stress of the (possibly projected) gradient.
    pub stress: Matrix3<f64>,
    /// Deformation gradient actually used: `F` with singular values
    /// floored at [`SINGULAR_VALUE_FLOOR`].
    pub gradient: Matrix3<f64>,
    /// True when `det(F) <= 0` was encountered.
    pub inverted: bool,
}

/// Evaluates the fixed-corotated stress for `f` with Lamé parameters
/// (μ, λ). Inverted or collapsed gradients are projected back by flooring
/// their singular values.
pub fn fixed_corotated_stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> StressEval {
    let (u, s, vt) = svd_rotations(f);
    let inverted = f.determinant() <= 0.0;
    let s_hat = Vector3::new(
        s.x.max(SINGULAR_VALUE_FLOOR),
        s.y.max(SINGULAR_VALUE_FLOOR),
        s.z.max(SINGULAR_VALUE_FLOOR),
    );
    let rotation = u * vt;
    let f_hat = if s_hat == s {
        *f
    } else {
        u * Matrix3::from_diagonal(&s_hat) * vt
    };
    let j = s_hat.x * s_hat.y * s_hat.z;
    let stress = 2.0 * mu * (f_hat - rotation) + lambda * (j - 1.0) * cofactor(&f_hat);
    StressEval {
        stress,
        gradient: f_hat,
        inverted,
    }
}
