//! The flow `x ↦ x + t·U(x)` and the material matrices it transports.
//!
//! For a field `U` with `t·Lip(U) < 1` the flow is a bi-Lipschitz bijection of
//! space; its inverse is computed by fixed-point iteration. Pulling the
//! conductivity back through the flow produces the material matrix
//! `A(t) = det(DΦ_t) · DΦ_t⁻¹ · DΦ_t⁻ᵀ`, whose derivative at `t = 0`,
//! `div U · I − (DU + DUᵀ)`, is the kernel of the sensitivity analysis.

use nalgebra::{Matrix3, Point3};

use super::field::VectorField;
use super::DeformationError;

/// `x + t·U(x)`.
pub fn flow<F: VectorField>(field: &F, t: f64, x: &Point3<f64>) -> Point3<f64> {
    x + field.value(x) * t
}

/// Solves `y = x + t·U(x)` for `x` by the contraction `x ← y − t·U(x)`.
///
/// Requires `|t|·Lip(U) < 1`; iterates until successive steps fall below
/// `tol`.
pub fn flow_inverse<F: VectorField>(
    field: &F,
    t: f64,
    y: &Point3<f64>,
    tol: f64,
) -> Result<Point3<f64>, DeformationError> {
    let scaled = t.abs() * field.lipschitz_bound();
    if scaled >= 1.0 {
        return Err(DeformationError::NotContractive {
            t,
            scaled_lipschitz: scaled,
        });
    }
    let mut x = *y;
    for _ in 0..200 {
        let next = y - field.value(&x) * t;
        let step = (next - x).norm();
        x = next;
        if step <= tol {
            break;
        }
    }
    Ok(x)
}

/// Transported material matrix `A(t) = det(DΦ_t) · DΦ_t⁻¹ · DΦ_t⁻ᵀ` at `x`.
pub fn material_matrix<F: VectorField>(
    field: &F,
    t: f64,
    x: &Point3<f64>,
) -> Result<Matrix3<f64>, DeformationError> {
    let scaled = t.abs() * field.lipschitz_bound();
    if scaled >= 1.0 {
        return Err(DeformationError::NotContractive {
            t,
            scaled_lipschitz: scaled,
        });
    }
    let grad = Matrix3::identity() + field.jacobian(x) * t;
    let det = grad.determinant();
    let inv = grad.try_inverse().ok_or(DeformationError::NotContractive {
        t,
        scaled_lipschitz: scaled,
    })?;
    Ok(inv * inv.transpose() * det)
}

/// Rate of change of the material matrix at `t = 0`:
/// `div U · I − (DU + DUᵀ)`.
pub fn material_rate<F: VectorField>(field: &F, x: &Point3<f64>) -> Matrix3<f64> {
    let j = field.jacobian(x);
    Matrix3::identity() * j.trace() - (j + j.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::field::AffineField;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(offset: Vector3<f64>) -> AffineField {
        AffineField {
            linear: Matrix3::zeros(),
            offset,
        }
    }

    #[test]
    fn zero_field_flow_is_identity() {
        let field = constant(Vector3::zeros());
        let x = Point3::new(0.3, -0.2, 0.7);
        assert_eq!(flow(&field, 0.5, &x), x);
        assert_eq!(material_matrix(&field, 0.5, &x).unwrap(), Matrix3::identity());
        assert_eq!(material_rate(&field, &x), Matrix3::zeros());
    }

    #[test]
    fn constant_field_rate_vanishes() {
        let field = constant(Vector3::new(0.4, -0.1, 0.2));
        assert_eq!(material_rate(&field, &Point3::origin()), Matrix3::zeros());
    }

    #[test]
    fn identity_linear_field_rate_is_identity() {
        // U(x) = x: divergence 3, symmetrized Jacobian 2I.
        let field = AffineField {
            linear: Matrix3::identity(),
            offset: Vector3::zeros(),
        };
        let rate = material_rate(&field, &Point3::new(0.2, 0.1, -0.3));
        assert_relative_eq!(rate, Matrix3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn shear_field_rate_is_minus_symmetrized_shear() {
        // U(x) = (x₂, 0, 0): divergence-free, so the rate is the negative
        // symmetrized Jacobian.
        let mut linear = Matrix3::zeros();
        linear[(0, 1)] = 1.0;
        let field = AffineField {
            linear,
            offset: Vector3::zeros(),
        };
        let rate = material_rate(&field, &Point3::origin());
        let mut expected = Matrix3::zeros();
        expected[(0, 1)] = -1.0;
        expected[(1, 0)] = -1.0;
        assert_relative_eq!(rate, expected, epsilon = 1e-14);
    }

    #[test]
    fn material_matrix_linearizes_to_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sample = || rng.gen_range(-0.5..0.5);
        let linear = Matrix3::from_fn(|_, _| sample());
        let field = AffineField {
            linear,
            offset: Vector3::new(0.1, -0.2, 0.05),
        };
        let x = Point3::new(0.3, 0.4, -0.1);
        let rate = material_rate(&field, &x);

        let mut errors = Vec::new();
        for t in [1e-2, 1e-3, 1e-4] {
            let a = material_matrix(&field, t, &x).unwrap();
            let fd = (a - Matrix3::identity()) / t;
            errors.push((fd - rate).norm());
        }
        // One decade of t buys one decade of error: observed order ≥ 0.9.
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log10();
            assert!(order >= 0.9, "linearization order {order} too low");
        }
    }

    #[test]
    fn round_trip_inverts_flow() {
        let field = AffineField {
            linear: Matrix3::new(
                0.05, 0.02, -0.01, //
                0.0, -0.04, 0.03, //
                0.01, 0.0, 0.06,
            ),
            offset: Vector3::new(0.02, -0.01, 0.04),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let x = Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let y = flow(&field, 1.0, &x);
            let back = flow_inverse(&field, 1.0, &y, 1e-13).unwrap();
            assert!((back - x).norm() < 1e-11);
        }
    }

    #[test]
    fn large_field_is_rejected() {
        let field = AffineField {
            linear: Matrix3::identity() * 2.0,
            offset: Vector3::zeros(),
        };
        let err = flow_inverse(&field, 1.0, &Point3::origin(), 1e-12).unwrap_err();
        assert!(matches!(err, DeformationError::NotContractive { .. }));
        assert!(material_matrix(&field, 1.0, &Point3::origin()).is_err());
    }
}
