//! Piecewise-affine boundary deformation fields and the flows they generate.
//!
//! A pair of matched polyhedra induces a displacement on the first boundary:
//! each face is fringed with a collar of isosceles triangles, the matched
//! vertex displacements are interpolated affinely over that collar, and the
//! result is extended to all of space by a Lipschitz extension tapered by a
//! radial cutoff. The flow `x ↦ x + t·U(x)` then carries the first polyhedron
//! onto intermediate shapes, and its Jacobian drives the transported material
//! matrices used by the sensitivity analysis.

mod collar;
mod field;
mod flow;

pub use collar::{collar_triangulation, CollarTriangle, TriangleCollar};
pub use field::{build_field, AffineField, DeformationField, VectorField};
pub use flow::{flow, flow_inverse, material_matrix, material_rate};

use thiserror::Error;

/// Failures specific to collar construction and flow generation.
#[derive(Debug, Error)]
pub enum DeformationError {
    /// A face cannot carry disjoint collar triangles of the required height.
    #[error("face {face} cannot host a disjoint triangle collar: {detail}")]
    InadmissibleFace { face: usize, detail: String },
    /// The two polyhedra do not have matching face combinatorics under the
    /// vertex pairing, so collars cannot be put in correspondence.
    #[error("collars do not correspond under the vertex pairing: {0}")]
    CollarMismatch(String),
    /// The scaled field has Lipschitz constant at least one, so `x + t·U(x)`
    /// is not guaranteed invertible.
    #[error("field is not contractive at t = {t}: t·Lip = {scaled_lipschitz}")]
    NotContractive { t: f64, scaled_lipschitz: f64 },
}
